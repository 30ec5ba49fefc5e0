"""Core vocabulary: economies, perfectly complementary utilities, bundles, norms.

Agents demand divisible goods in rigid combinations.  Every utility here is
represented (directly or implicitly) by its minimal-bundle curve ``w(t)``:
the cheapest bundle that reaches satisfaction level ``t``.  All solvers and
verifiers in the package are built on the four operations exposed by this
module: evaluating a utility, evaluating ``w``, reducing a bundle to its
minimal form, and checking norm compatibility.
"""

from __future__ import annotations

from dataclasses import dataclass
import json
import math

import numpy as np

ABS_TOL = 1e-9


class InstanceError(ValueError):
    """Raised when an economy description violates a structural invariant."""


class Incompatible(Exception):
    """Raised when a utility cannot be solved under the requested norm."""


class Satiated(Exception):
    """Raised when a query asks for more than a capped utility can absorb."""


class _InfiniteBundle:
    """Marker for bundles beyond a satiation cap; never enters arithmetic."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITE_BUNDLE"


INFINITE_BUNDLE = _InfiniteBundle()


def is_infinite(bundle) -> bool:
    return bundle is INFINITE_BUNDLE


# ---------------------------------------------------------------------------
# Norms


@dataclass(frozen=True)
class Norm:
    """Monotone continuous bundle quantifier: one of l1, l2, linf, lp."""

    kind: str
    p: float | None = None

    def __post_init__(self):
        if self.kind not in ("l1", "l2", "linf", "lp"):
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if self.kind == "lp":
            if self.p is None or not math.isfinite(self.p) or self.p < 1.0:
                raise ValueError("lp norm requires finite p >= 1")

    @property
    def is_finite_p(self) -> bool:
        return self.kind != "linf"

    @property
    def label(self) -> str:
        return f"lp:{self.p:g}" if self.kind == "lp" else self.kind


L1 = Norm("l1")
L2 = Norm("l2")
LINF = Norm("linf")


def lp(p: float) -> Norm:
    return Norm("lp", float(p))


def parse_norm(text: str) -> Norm:
    """Parse a norm flag: ``l1 | l2 | linf | lp:<p>``."""
    text = text.strip().lower()
    if text in ("l1", "l2", "linf"):
        return Norm(text)
    if text.startswith("lp:"):
        try:
            return lp(float(text[3:]))
        except ValueError as exc:
            raise ValueError(f"bad lp norm {text!r}: {exc}") from None
    raise ValueError(f"unknown norm {text!r}; expected l1, l2, linf or lp:<p>")


def norm_eval(norm: Norm, x: np.ndarray) -> float:
    x = np.abs(np.asarray(x, dtype=float))
    if norm.kind == "l1":
        return float(x.sum())
    if norm.kind == "l2":
        return float(np.sqrt((x * x).sum()))
    if norm.kind == "linf":
        return float(x.max()) if x.size else 0.0
    return float((x ** norm.p).sum() ** (1.0 / norm.p))


# ---------------------------------------------------------------------------
# Utilities


@dataclass(frozen=True)
class Leontief:
    """Fixed-proportions demand: u(x) = min over supported j of x_j / r_j."""

    r: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        if r.ndim != 1 or r.size == 0:
            raise InstanceError("demand proportions r must be a nonempty vector")
        if not np.all(np.isfinite(r)) or np.any(r < 0):
            raise InstanceError("demand proportions r must be finite and nonnegative")
        if not np.any(r > 0):
            raise InstanceError("demand proportions r must not be all zero")
        r.setflags(write=False)
        object.__setattr__(self, "r", r)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.r > 0)


@dataclass(frozen=True)
class SatiableLeontief(Leontief):
    """Leontief capped at level 1, reached exactly at the bundle r."""


@dataclass(frozen=True)
class TabulatedPC:
    """Perfectly complementary utility given by breakpoints of its w(t) curve.

    ``levels`` holds 0 = t_0 < t_1 < ... < t_K and ``bundles`` the matching
    minimal bundles, interpolated linearly in between.  ``tail`` controls what
    happens past t_K: ``"satiate"`` caps the utility there, ``"linear"``
    extends the last segment's direction forever.
    """

    levels: np.ndarray
    bundles: np.ndarray
    tail: str = "satiate"

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=float)
        bundles = np.asarray(self.bundles, dtype=float)
        if levels.ndim != 1 or levels.size < 2:
            raise InstanceError("tabulated utility needs at least two breakpoints")
        if bundles.shape != (levels.size, bundles.shape[-1]) or bundles.ndim != 2:
            raise InstanceError("breakpoint bundles must form a (K+1, m) matrix")
        if not (np.all(np.isfinite(levels)) and np.all(np.isfinite(bundles))):
            raise InstanceError("breakpoints must be finite")
        if levels[0] != 0.0 or np.any(bundles[0] != 0.0):
            raise InstanceError("breakpoints must start at level 0 with the zero bundle")
        if np.any(np.diff(levels) <= 0):
            raise InstanceError("breakpoint levels must be strictly increasing")
        if np.any(bundles < 0) or np.any(np.diff(bundles, axis=0) < 0):
            raise InstanceError("breakpoint bundles must be nonnegative and non-decreasing")
        # Each segment must move in some coordinate, else two levels would
        # share one minimal bundle and the utility would not be strictly
        # monotonic.  Same for the extended tail direction.
        seg_moves = np.any(np.diff(bundles, axis=0) > 0, axis=1)
        if not np.all(seg_moves):
            raise InstanceError("every breakpoint segment must strictly increase somewhere")
        if self.tail not in ("satiate", "linear"):
            raise InstanceError("tail must be 'satiate' or 'linear'")
        levels.setflags(write=False)
        bundles.setflags(write=False)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "bundles", bundles)

    @property
    def m(self) -> int:
        return self.bundles.shape[1]

    @property
    def cap(self) -> float | None:
        return float(self.levels[-1]) if self.tail == "satiate" else None

    @property
    def tail_slope(self) -> np.ndarray:
        dt = self.levels[-1] - self.levels[-2]
        return (self.bundles[-1] - self.bundles[-2]) / dt


Utility = Leontief | SatiableLeontief | TabulatedPC


def utility_dim(u: Utility) -> int:
    return u.m if isinstance(u, TabulatedPC) else u.r.size


def utility_cap(u: Utility) -> float | None:
    """Maximum attainable level, or None for non-satiable utilities."""
    if isinstance(u, TabulatedPC):
        return u.cap
    if isinstance(u, SatiableLeontief):
        return 1.0
    return None


def _tab_coord_max_level(u: TabulatedPC, j: int, x_j: float) -> float:
    """Largest t with w_j(t) <= x_j, ignoring any satiation cap."""
    levels, col = u.levels, u.bundles[:, j]
    for k in range(levels.size - 1):
        if col[k + 1] <= x_j:
            continue
        slope = (col[k + 1] - col[k]) / (levels[k + 1] - levels[k])
        return float(levels[k] + (x_j - col[k]) / slope)
    if u.tail == "linear":
        d = u.tail_slope[j]
        if d > 0:
            return float(levels[-1] + (x_j - col[-1]) / d)
    return math.inf


def utility_eval(u: Utility, x: np.ndarray) -> float:
    """Utility level of a finite nonnegative bundle."""
    x = np.asarray(x, dtype=float)
    if isinstance(u, TabulatedPC):
        t = min(_tab_coord_max_level(u, j, x[j]) for j in range(u.m))
        cap = u.cap
        if cap is not None:
            t = min(t, cap)
        return float(t)
    s = u.support
    t = float(np.min(x[s] / u.r[s]))
    if isinstance(u, SatiableLeontief):
        t = min(t, 1.0)
    return t


def w_eval(u: Utility, t: float):
    """Minimal bundle reaching level t; INFINITE_BUNDLE past a satiation cap."""
    if t < 0:
        raise ValueError("utility level must be nonnegative")
    if isinstance(u, TabulatedPC):
        levels, bundles = u.levels, u.bundles
        if t > levels[-1]:
            if u.tail == "satiate":
                return INFINITE_BUNDLE
            return bundles[-1] + (t - levels[-1]) * u.tail_slope
        k = int(np.searchsorted(levels, t, side="right")) - 1
        k = min(k, levels.size - 2)
        frac = (t - levels[k]) / (levels[k + 1] - levels[k])
        return bundles[k] + frac * (bundles[k + 1] - bundles[k])
    if isinstance(u, SatiableLeontief) and t > 1.0:
        return INFINITE_BUNDLE
    return t * u.r


def parsimonize(u: Utility, x: np.ndarray) -> np.ndarray:
    """Drop everything from x that does not contribute to its utility level."""
    y = w_eval(u, utility_eval(u, x))
    assert not is_infinite(y)
    return y


def is_compatible(u: Utility, norm: Norm) -> bool:
    """Whether larger utility always means larger norm among minimal bundles.

    Finite-p norms are strictly monotone coordinate-wise, so they work for
    every perfectly complementary utility.  Under linf a tabulated utility
    qualifies only if max_j w_j(t) is strictly increasing, which is checked
    segment by segment via the right-derivative at each segment start (the
    max of linear pieces is convex on a segment, so that single check covers
    the whole segment).
    """
    if norm.is_finite_p:
        return True
    if isinstance(u, TabulatedPC):
        segs = list(zip(u.bundles[:-1], np.diff(u.bundles, axis=0) /
                        np.diff(u.levels)[:, None]))
        if u.tail == "linear":
            segs.append((u.bundles[-1], u.tail_slope))
        for start, slope in segs:
            top = start.max()
            at_max = start >= top - 1e-12 * max(1.0, top)
            if not np.any(slope[at_max] > 0):
                return False
        return True
    return True  # Leontief / satiable Leontief


# ---------------------------------------------------------------------------
# Economies


@dataclass(frozen=True)
class Good:
    name: str
    quantity: float = 1.0


@dataclass(frozen=True)
class Agent:
    name: str
    entitlement: float
    utility: Utility


@dataclass(frozen=True)
class Instance:
    """An economy: goods with quantities and agents with entitlements."""

    goods: tuple[Good, ...]
    agents: tuple[Agent, ...]

    def __post_init__(self):
        object.__setattr__(self, "goods", tuple(self.goods))
        object.__setattr__(self, "agents", tuple(self.agents))
        if not self.goods or not self.agents:
            raise InstanceError("an instance needs at least one good and one agent")
        for g in self.goods:
            if not (math.isfinite(g.quantity) and g.quantity > 0):
                raise InstanceError(f"good {g.name!r} quantity must be positive")
        total = 0.0
        for a in self.agents:
            if not (math.isfinite(a.entitlement) and 0 < a.entitlement <= 1):
                raise InstanceError(f"agent {a.name!r} entitlement must lie in (0, 1]")
            if utility_dim(a.utility) != len(self.goods):
                raise InstanceError(
                    f"agent {a.name!r} utility covers {utility_dim(a.utility)} goods, "
                    f"instance has {len(self.goods)}")
            total += a.entitlement
        if abs(total - 1.0) > ABS_TOL:
            raise InstanceError(
                f"entitlements sum to {total!r}, expected 1 within {ABS_TOL}")

    @property
    def n(self) -> int:
        return len(self.agents)

    @property
    def m(self) -> int:
        return len(self.goods)

    @property
    def quantities(self) -> np.ndarray:
        return np.array([g.quantity for g in self.goods], dtype=float)

    @property
    def entitlements(self) -> np.ndarray:
        return np.array([a.entitlement for a in self.agents], dtype=float)

    @property
    def good_names(self) -> list[str]:
        return [g.name for g in self.goods]

    @property
    def agent_names(self) -> list[str]:
        return [a.name for a in self.agents]

    def all_leontief(self, allow_satiable: bool = True) -> bool:
        for a in self.agents:
            if not isinstance(a.utility, Leontief):
                return False
            if not allow_satiable and isinstance(a.utility, SatiableLeontief):
                return False
        return True

    def leontief_matrix(self) -> np.ndarray:
        """Stack the agents' demand proportions into an (n, m) matrix."""
        if not self.all_leontief():
            raise InstanceError("instance mixes in non-Leontief utilities")
        return np.vstack([a.utility.r for a in self.agents])


def check_feasible(instance: Instance, allocation: np.ndarray, tol: float = ABS_TOL):
    """Validate an (n, m) share matrix against the instance quantities."""
    X = np.asarray(allocation, dtype=float)
    if X.shape != (instance.n, instance.m):
        raise InstanceError(
            f"allocation shape {X.shape} does not match ({instance.n}, {instance.m})")
    if not np.all(np.isfinite(X)) or np.any(X < -tol):
        raise InstanceError("allocation must be finite and nonnegative")
    over = X.sum(axis=0) - instance.quantities
    j = int(np.argmax(over))
    if over[j] > tol:
        raise InstanceError(
            f"allocation oversubscribes good {instance.goods[j].name!r} by {over[j]:g}")
    return X


def leftover(instance: Instance, allocation: np.ndarray) -> np.ndarray:
    z = instance.quantities - np.asarray(allocation, dtype=float).sum(axis=0)
    return np.maximum(z, 0.0)


# ---------------------------------------------------------------------------
# Instance files


def _utility_from_dict(d: dict) -> Utility:
    if not isinstance(d, dict) or "kind" not in d:
        raise InstanceError("utility must be an object with a 'kind' field")
    kind = d["kind"]
    if kind in ("leontief", "satiable_leontief"):
        if "r" not in d:
            raise InstanceError(f"{kind} utility requires field 'r'")
        cls = Leontief if kind == "leontief" else SatiableLeontief
        return cls(np.asarray(d["r"], dtype=float))
    if kind == "tabulated_pc":
        bps = d.get("breakpoints")
        if not bps:
            raise InstanceError("tabulated_pc utility requires 'breakpoints'")
        levels = np.array([bp["t"] for bp in bps], dtype=float)
        bundles = np.array([bp["w"] for bp in bps], dtype=float)
        return TabulatedPC(levels, bundles, d.get("tail", "satiate"))
    raise InstanceError(f"unknown utility kind {kind!r}")


def utility_to_dict(u: Utility) -> dict:
    if isinstance(u, TabulatedPC):
        return {"kind": "tabulated_pc",
                "breakpoints": [{"t": float(t), "w": [float(v) for v in w]}
                                for t, w in zip(u.levels, u.bundles)],
                "tail": u.tail}
    kind = "satiable_leontief" if isinstance(u, SatiableLeontief) else "leontief"
    return {"kind": kind, "r": [float(v) for v in u.r]}


def instance_from_dict(d: dict) -> Instance:
    if not isinstance(d, dict):
        raise InstanceError("instance document must be a JSON object")
    try:
        goods = tuple(Good(g["name"], float(g.get("quantity", 1.0)))
                      for g in d.get("goods", []))
        agents = tuple(Agent(a["name"], float(a["entitlement"]),
                             _utility_from_dict(a["utility"]))
                       for a in d.get("agents", []))
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceError(f"malformed instance document: {exc}") from None
    return Instance(goods, agents)


def instance_to_dict(instance: Instance) -> dict:
    return {
        "goods": [{"name": g.name, "quantity": float(g.quantity)}
                  for g in instance.goods],
        "agents": [{"name": a.name, "entitlement": float(a.entitlement),
                    "utility": utility_to_dict(a.utility)}
                   for a in instance.agents],
    }


def load_instance(path) -> Instance:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InstanceError(f"invalid JSON in {path}: {exc}") from None
    return instance_from_dict(data)
