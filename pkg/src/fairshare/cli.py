"""Command-line surface.

Subcommands: ``solve grf``, ``solve bbf``, ``check``, ``oracle leximin``.
Exit codes: 0 success / property holds, 1 property fails, 2 bad input,
3 solver failure.  All emitted JSON is byte-deterministic: fixed key order
and shortest-round-trip floats capped at 12 significant digits.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import checks, grf, market, model

DEFAULT_TOL = 1e-9

PALETTE = ["#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
           "#edc949", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"]


# ---------------------------------------------------------------------------
# Deterministic JSON


def fmt_float(x: float) -> str:
    """Shortest round-trip decimal, capped at 12 significant digits."""
    x = float(x)
    if x == 0.0:
        return "0.0"
    if not math.isfinite(x):
        raise ValueError("documents must not contain non-finite numbers")
    s = repr(x)
    mantissa = s.split("e")[0].split("E")[0].lstrip("-").replace(".", "")
    if len(mantissa.lstrip("0")) <= 12:
        return s
    return format(x, ".12g")


def _emit(obj, indent: int, out: list):
    pad = " " * indent
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for idx, (key, value) in enumerate(obj.items()):
            out.append(pad + "  " + _scalar(str(key)) + ": ")
            _emit(value, indent + 2, out)
            out.append(",\n" if idx < len(obj) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        items = list(obj)
        if not items:
            out.append("[]")
            return
        if all(not isinstance(v, (dict, list, tuple)) for v in items):
            out.append("[" + ", ".join(_scalar(v) for v in items) + "]")
            return
        out.append("[\n")
        for idx, value in enumerate(items):
            out.append(pad + "  ")
            _emit(value, indent + 2, out)
            out.append(",\n" if idx < len(items) - 1 else "\n")
        out.append(pad + "]")
    else:
        out.append(_scalar(obj))


def _scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "null"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    if isinstance(v, str):
        import json
        return json.dumps(v)
    raise TypeError(f"cannot serialize {type(v)!r}")


def dumps(document: dict) -> str:
    out: list[str] = []
    _emit(document, 0, out)
    out.append("\n")
    return "".join(out)


# ---------------------------------------------------------------------------
# Documents and artifact files


def _matrix(M) -> list:
    return [[float(v) for v in row] for row in np.asarray(M, dtype=float)]


def _vector(v) -> list:
    return [float(x) for x in np.asarray(v, dtype=float)]


def grf_document(instance, norm, allocation, trace, tol, with_trace=False):
    agents = instance.agents
    levels = [float(model.utility_eval(a.utility, allocation[i]))
              for i, a in enumerate(agents)]
    norm_values = [float(model.norm_eval(norm, allocation[i]))
                   for i in range(instance.n)]
    doc = {
        "kind": "grf",
        "norm": norm.label,
        "goods": instance.good_names,
        "agents": instance.agent_names,
        "allocation": _matrix(allocation),
        "levels": levels,
        "norm_values": norm_values,
    }
    if with_trace:
        doc["trace"] = [
            {"h": float(it.h),
             "exhausted_goods": [instance.good_names[j] for j in sorted(it.exhausted)],
             "frozen_agents": [instance.agent_names[i] for i in sorted(it.frozen)],
             "allocation": _matrix(it.allocation)}
            for it in trace.iterations]
    doc["meta"] = {"solver": "grf", "tolerance": float(tol),
                   "iterations": len(trace)}
    return doc


def bbf_document(instance, allocation, result, tol):
    extended_names = list(instance.good_names) + [
        f"~virtual:{instance.agents[i].name}"
        for _, i in sorted(result.virtual_goods.items())]
    levels = [float(model.utility_eval(a.utility, allocation[i]))
              for i, a in enumerate(instance.agents)]
    doc = {
        "kind": "bbf",
        "goods": instance.good_names,
        "agents": instance.agent_names,
        "allocation": _matrix(allocation),
        "levels": levels,
        "prices": _vector(result.prices),
        "price_goods": extended_names,
        "residuals": {
            "budget_gap": float(result.residuals.budget_gap),
            "clearing_gap": float(result.residuals.clearing_gap),
            "dual_gradient_norm": float(result.residuals.dual_gradient_norm),
        },
        "virtual_goods": {extended_names[j]: instance.agents[i].name
                          for j, i in sorted(result.virtual_goods.items())},
        "meta": {"solver": "bbf", "tolerance": float(tol),
                 "iterations": int(result.iterations)},
    }
    return doc


def oracle_document(instance, norm, allocation, k):
    levels = [float(model.utility_eval(a.utility, allocation[i]))
              for i, a in enumerate(instance.agents)]
    return {
        "kind": "oracle-leximin",
        "norm": norm.label,
        "goods": instance.good_names,
        "agents": instance.agent_names,
        "allocation": _matrix(allocation),
        "levels": levels,
        "meta": {"solver": "oracle-leximin", "grid": int(k)},
    }


def write_csv(path, instance, allocation):
    X = np.asarray(allocation, dtype=float)
    lines = ["good,quantity," + ",".join(instance.agent_names) + ",leftover"]
    for j, g in enumerate(instance.goods):
        shares = ",".join(fmt_float(X[i, j]) for i in range(instance.n))
        left = fmt_float(max(g.quantity - X[:, j].sum(), 0.0))
        lines.append(f"{g.name},{fmt_float(g.quantity)},{shares},{left}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_svg(path, instance, allocation):
    """Static grouped bar chart: per good, one bar per agent's share of it."""
    X = np.asarray(allocation, dtype=float)
    n, m = instance.n, instance.m
    bar_w, gap, group_pad = 18, 4, 26
    group_w = n * (bar_w + gap) + group_pad
    width = 70 + m * group_w
    base_y, plot_h = 230, 170
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="290" font-family="sans-serif" font-size="11">',
             f'<line x1="50" y1="{base_y}" x2="{width - 10}" y2="{base_y}" '
             'stroke="#333"/>']
    for i, name in enumerate(instance.agent_names):
        color = PALETTE[i % len(PALETTE)]
        lx = 50 + i * 110
        parts.append(f'<rect x="{lx}" y="12" width="10" height="10" fill="{color}"/>')
        parts.append(f'<text x="{lx + 14}" y="22">{name}</text>')
    for j, g in enumerate(instance.goods):
        gx = 60 + j * group_w
        for i in range(n):
            share = X[i, j] / g.quantity
            h = plot_h * min(max(share, 0.0), 1.0)
            x = gx + i * (bar_w + gap)
            color = PALETTE[i % len(PALETTE)]
            parts.append(
                f'<rect x="{x}" y="{fmt_float(base_y - h)}" width="{bar_w}" '
                f'height="{fmt_float(h)}" fill="{color}">'
                f'<title>{instance.agent_names[i]}: {fmt_float(X[i, j])}</title></rect>')
        parts.append(f'<text x="{gx}" y="{base_y + 18}">{g.name}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def _write_or_print(text, path):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Commands


def _tolerance() -> float:
    raw = os.environ.get("FAIRSHARE_TOL")
    if raw is None:
        return DEFAULT_TOL
    try:
        tol = float(raw)
        if not (0 < tol < 1):
            raise ValueError
        return tol
    except ValueError:
        raise model.InstanceError(f"FAIRSHARE_TOL must be a float in (0, 1), got {raw!r}")


def cmd_solve_grf(args) -> int:
    tol = _tolerance()
    instance = model.load_instance(args.instance)
    norm = model.parse_norm(args.norm)
    allocation, trace = grf.grf_allocate(instance, norm, tol=tol)
    doc = grf_document(instance, norm, allocation, trace, tol,
                       with_trace=args.trace)
    _write_or_print(dumps(doc), args.output)
    if args.csv:
        write_csv(args.csv, instance, allocation)
    if args.svg:
        write_svg(args.svg, instance, allocation)
    return 0


def cmd_solve_bbf(args) -> int:
    tol = _tolerance()
    instance = model.load_instance(args.instance)
    allocation, result = market.bbf_allocate(instance, tol=tol)
    doc = bbf_document(instance, allocation, result, tol)
    _write_or_print(dumps(doc), args.output)
    if args.csv:
        write_csv(args.csv, instance, allocation)
    if args.svg:
        write_svg(args.svg, instance, allocation)
    return 0


def load_allocation(path, instance) -> np.ndarray:
    import json
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise model.InstanceError(f"invalid JSON in {path}: {exc}") from None
    matrix = data.get("allocation") if isinstance(data, dict) else data
    if matrix is None:
        raise model.InstanceError(f"{path} has no 'allocation' field")
    X = np.asarray(matrix, dtype=float)
    return model.check_feasible(instance, X)


def cmd_check(args) -> int:
    instance = model.load_instance(args.instance)
    X = load_allocation(args.allocation, instance)
    prop = args.property
    if prop == "parsimonious":
        report = checks.is_parsimonious_allocation(instance, X)
    elif prop == "non-wasteful":
        report = checks.is_non_wasteful(instance, X)
    elif prop == "pareto":
        report = checks.is_pareto_efficient(instance, X)
    elif prop == "bbf":
        report = checks.is_bbf(instance, X)
    elif prop.startswith("norm-fair:"):
        norm = model.parse_norm(prop.split(":", 1)[1])
        try:
            report = checks.is_norm_fair(instance, X, norm)
        except model.Incompatible as exc:
            # For `check` an incompatible pairing is an input problem (exit 2).
            raise model.InstanceError(str(exc)) from None
    else:
        raise model.InstanceError(
            f"unknown property {prop!r}; expected parsimonious, non-wasteful, "
            "pareto, bbf or norm-fair:<norm>")
    sys.stdout.write(dumps(report.to_dict()))
    return 0 if report.verdict else 1


def cmd_oracle(args) -> int:
    instance = model.load_instance(args.instance)
    norm = model.parse_norm(args.norm)
    allocation = checks.brute_force_fairness_oracle(instance, norm, args.grid)
    doc = oracle_document(instance, norm, allocation, args.grid)
    _write_or_print(dumps(doc), args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairshare",
        description="Fair allocation of divisible resources under "
                    "perfectly complementary preferences.")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="compute a fair allocation")
    solve_sub = solve.add_subparsers(dest="solver", required=True)

    p_grf = solve_sub.add_parser(
        "grf", help="norm-fair allocation by water-filling")
    p_grf.add_argument("--norm", required=True,
                       help="l1 | l2 | linf | lp:<p>")
    p_grf.add_argument("instance")
    p_grf.add_argument("-o", "--output", default=None)
    p_grf.add_argument("--csv", default=None)
    p_grf.add_argument("--svg", default=None)
    p_grf.add_argument("--trace", action="store_true",
                       help="embed the water-filling iteration trace")
    p_grf.set_defaults(func=cmd_solve_grf)

    p_bbf = solve_sub.add_parser(
        "bbf", help="bottleneck-fair allocation via market equilibrium")
    p_bbf.add_argument("instance")
    p_bbf.add_argument("-o", "--output", default=None)
    p_bbf.add_argument("--csv", default=None)
    p_bbf.add_argument("--svg", default=None)
    p_bbf.set_defaults(func=cmd_solve_bbf)

    p_check = sub.add_parser("check", help="verify a property of an allocation")
    p_check.add_argument("property",
                         help="parsimonious | non-wasteful | pareto | bbf | "
                              "norm-fair:<norm>")
    p_check.add_argument("instance")
    p_check.add_argument("allocation")
    p_check.set_defaults(func=cmd_check)

    p_oracle = sub.add_parser("oracle", help="grid-search reference solvers")
    oracle_sub = p_oracle.add_subparsers(dest="oracle", required=True)
    p_lex = oracle_sub.add_parser("leximin",
                                  help="grid leximin over scaled norm values")
    p_lex.add_argument("--norm", required=True)
    p_lex.add_argument("--grid", type=int, default=200)
    p_lex.add_argument("instance")
    p_lex.add_argument("-o", "--output", default=None)
    p_lex.set_defaults(func=cmd_oracle)

    return parser


INPUT_ERRORS = (model.InstanceError, checks.TooLarge, ValueError, OSError)
SOLVER_ERRORS = (model.Incompatible, model.Satiated, grf.Unbounded,
                 grf.NoProgress, market.Diverged, market.BadPrices,
                 market.UnsupportedUtility)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SOLVER_ERRORS as exc:
        print(f"fairshare: solver failure: {exc}", file=sys.stderr)
        return 3
    except INPUT_ERRORS as exc:
        print(f"fairshare: invalid input: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
