"""Norm-parameterized water-filling solver.

Raises one common fairness level for all active agents, each holding the
minimal bundle whose norm equals its entitlement share of the level, until a
good runs out or an agent hits its satiation cap.  Affected agents freeze
with their bundles; the rest keep rising against the leftover quantities.
Exact closed-form steps are used for all-Leontief economies, a bisection on
the level otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    Incompatible,
    Instance,
    Leontief,
    Norm,
    Satiated,
    TabulatedPC,
    is_compatible,
    is_infinite,
    norm_eval,
    utility_cap,
    utility_dim,
    utility_eval,
    w_eval,
)

EXHAUST_REL_TOL = 1e-7


class Unbounded(Exception):
    """No good constrains the fairness level; signals corrupted solver state."""


class NoProgress(Exception):
    """An iteration froze no agent; signals a tolerance failure."""


@dataclass(frozen=True)
class GrfIteration:
    h: float
    exhausted: frozenset
    frozen: frozenset
    allocation: np.ndarray


@dataclass
class GrfTrace:
    iterations: list[GrfIteration]

    def __len__(self):
        return len(self.iterations)


def _cap_norm(u, norm: Norm) -> float | None:
    """Norm of the satiation bundle, or None for non-satiable utilities."""
    cap = utility_cap(u)
    if cap is None:
        return None
    return norm_eval(norm, w_eval(u, cap))


def oracle_query(u, norm: Norm, h: float, tol: float = 1e-9) -> np.ndarray:
    """Minimal bundle x with ||x|| = h (within tol relative)."""
    if not is_compatible(u, norm):
        raise Incompatible(f"utility not compatible with {norm.label}")
    if h < 0:
        raise ValueError("fairness level must be nonnegative")
    if h == 0:
        return np.zeros(utility_dim(u))
    if isinstance(u, Leontief):
        rn = norm_eval(norm, u.r)
        t = h / rn
        cap = utility_cap(u)
        if cap is not None and t > cap:
            if t <= cap * (1 + 1e-9):
                t = cap
            else:
                raise Satiated(f"level {h:g} exceeds satiation norm {cap * rn:g}")
        return t * u.r

    cap = utility_cap(u)
    hi = None
    if cap is not None:
        cap_norm = norm_eval(norm, w_eval(u, cap))
        if h >= cap_norm:
            if h <= cap_norm * (1 + 1e-9):
                return np.asarray(w_eval(u, cap), dtype=float).copy()
            raise Satiated(f"level {h:g} exceeds satiation norm {cap_norm:g}")
        hi = cap
    if hi is None:
        hi = max(1.0, float(u.levels[-1]))
        for _ in range(200):
            if norm_eval(norm, w_eval(u, hi)) >= h:
                break
            hi *= 2.0
        else:
            raise Unbounded("norm of w(t) failed to reach the requested level")
    lo = 0.0
    # ||w(t)|| is continuous and strictly increasing under compatibility.
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = norm_eval(norm, w_eval(u, mid))
        if abs(val - h) <= tol * max(1.0, h):
            return np.asarray(w_eval(u, mid), dtype=float)
        if val < h:
            lo = mid
        else:
            hi = mid
    return np.asarray(w_eval(u, 0.5 * (lo + hi)), dtype=float)


def _satiation_level_bound(instance: Instance, active, norm: Norm) -> float:
    """Largest common level h at which no active agent is pushed past its cap."""
    bound = np.inf
    for i in active:
        a = instance.agents[i]
        cn = _cap_norm(a.utility, norm)
        if cn is not None:
            bound = min(bound, cn / a.entitlement)
    return bound


def _query_all(instance: Instance, active, norm: Norm, h: float, tol: float):
    bundles = {}
    for i in active:
        bundles[i] = oracle_query(instance.agents[i].utility, norm,
                                  h * instance.agents[i].entitlement, tol)
    return bundles


def allocation_step(instance: Instance, active, remaining: np.ndarray,
                    norm: Norm, method: str = "auto", tol: float = 1e-9):
    """Maximal common level h and the per-agent minimal bundles realizing it.

    Each active agent i receives the bundle of norm h * e_i.  Feasibility is
    judged against ``remaining``.  Returns (h, bundles, levels) keyed by
    agent index.
    """
    active = sorted(active)
    if not active:
        raise ValueError("allocation step needs at least one active agent")
    if method not in ("auto", "closed_form", "bisect"):
        raise ValueError(f"unknown allocation step method {method!r}")
    q = np.asarray(remaining, dtype=float)
    leontief_only = all(isinstance(instance.agents[i].utility, Leontief)
                        for i in active)
    if method == "closed_form" and not leontief_only:
        raise ValueError("closed-form step requires all-Leontief active agents")
    use_closed = leontief_only if method == "auto" else method == "closed_form"

    if use_closed:
        h = _closed_form_level(instance, active, q, norm)
    else:
        h = _bisect_level(instance, active, q, norm, tol)
    bundles = _query_all(instance, active, norm, h, tol)
    levels = {i: utility_eval(instance.agents[i].utility, bundles[i])
              for i in active}
    return h, bundles, levels


def _closed_form_level(instance, active, q, norm):
    ents = instance.entitlements
    demand = np.zeros(instance.m)
    for i in active:
        r = instance.agents[i].utility.r
        demand += ents[i] * r / norm_eval(norm, r)
    cap = _satiation_level_bound(instance, active, norm)
    demanded = demand > 0
    if not np.any(demanded) and not np.isfinite(cap):
        raise Unbounded("no good constrains the level and nobody satiates")
    with np.errstate(divide="ignore"):
        h_goods = np.min(q[demanded] / demand[demanded]) if np.any(demanded) else np.inf
    return float(min(h_goods, cap))


def _bisect_level(instance, active, q, norm, tol):
    slack = 1e-12 * np.maximum(1.0, q)

    def feasible(h):
        try:
            bundles = _query_all(instance, active, norm, h, tol)
        except Satiated:
            return False
        total = np.zeros(instance.m)
        for b in bundles.values():
            total += b
        return bool(np.all(total <= q + slack))

    cap = _satiation_level_bound(instance, active, norm)
    lo = 0.0
    if np.isfinite(cap):
        if feasible(cap):
            return cap
        hi = cap
    else:
        hi = 1.0
        for _ in range(200):
            if not feasible(hi):
                break
            lo = hi
            hi *= 2.0
        else:
            raise Unbounded("no good constrains the level and nobody satiates")
    while hi - lo > tol * max(1.0, lo):
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def frozen_set(instance: Instance, active, exhausted, levels: dict) -> set:
    """Agents that cannot raise their norm without more of an exhausted good.

    Satiated agents freeze unconditionally.  A Leontief agent freezes when
    its support touches an exhausted good; a tabulated agent when some w_j,
    j exhausted, still climbs right after the agent's current level.
    """
    frozen = set()
    for i in active:
        u = instance.agents[i].utility
        t = levels[i]
        cap = utility_cap(u)
        if cap is not None and t >= cap - 1e-9 * max(1.0, cap):
            frozen.add(i)
            continue
        if isinstance(u, Leontief):
            if any(u.r[j] > 0 for j in exhausted):
                frozen.add(i)
            continue
        delta = 1e-6 * max(1.0, t)
        probe_t = t + delta if cap is None else min(t + delta, cap)
        now = w_eval(u, t)
        probe = w_eval(u, probe_t)
        if is_infinite(probe):
            frozen.add(i)
            continue
        if any(probe[j] > now[j] for j in exhausted):
            frozen.add(i)
    return frozen


def grf_allocate(instance: Instance, norm: Norm, method: str = "auto",
                 tol: float = 1e-9):
    """Compute the norm-fair allocation under entitlements.

    Returns (allocation, trace).  The allocation is the unique one for which
    no alternative raises the smallest entitlement-scaled norm among agents
    whose norms differ.
    """
    for a in instance.agents:
        if not is_compatible(a.utility, norm):
            raise Incompatible(
                f"agent {a.name!r} utility not compatible with {norm.label}")
    n, m = instance.n, instance.m
    X = np.zeros((n, m))
    levels = {}
    remaining = instance.quantities.copy()
    active = set(range(n))
    exhausted: set[int] = set()
    iterations: list[GrfIteration] = []
    while active:
        h, bundles, step_levels = allocation_step(
            instance, active, remaining, norm, method=method, tol=tol)
        for i in bundles:
            X[i] = bundles[i]
            levels[i] = step_levels[i]
        used = np.zeros(m)
        for b in bundles.values():
            used += b
        for j in range(m):
            if remaining[j] - used[j] <= EXHAUST_REL_TOL * max(1.0, remaining[j]):
                exhausted.add(j)
        frozen = frozen_set(instance, active, exhausted, levels)
        if not frozen:
            raise NoProgress(
                "no agent froze at level {:g}; tolerances too loose".format(h))
        iterations.append(GrfIteration(h, frozenset(exhausted),
                                       frozenset(frozen), X.copy()))
        for i in sorted(frozen):
            remaining = remaining - X[i]
        remaining = np.maximum(remaining, 0.0)
        active -= frozen
        if len(iterations) > n + m:
            raise NoProgress("iteration bound n+m exceeded")
    return X, GrfTrace(iterations)
