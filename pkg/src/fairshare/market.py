"""Fisher-market equilibrium solver for fixed-proportions economies.

Entitlements act as budgets.  Prices come from minimizing the dual of the
budget-weighted log-utility program; agent levels then follow from budgets
divided by bundle cost, and the resulting minimal-bundle allocation gives
every agent at least its entitlement share of some fully used good (or its
satiation bundle).  Satiable agents are handled by granting each a private
virtual good that its extended demand includes, which removes the cap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import (
    Agent,
    Good,
    Instance,
    Leontief,
    SatiableLeontief,
    TabulatedPC,
    utility_eval,
)


class Diverged(Exception):
    """Dual solver hit its iteration cap before reaching tolerance."""


class BadPrices(Exception):
    """Some agent's bundle cost is non-positive under the given prices."""


class UnsupportedUtility(Exception):
    """The equilibrium pipeline only handles (satiable) Leontief utilities."""


ZERO_PRICE_SNAP = 1e-10


@dataclass(frozen=True)
class ExtensionMap:
    """Satiable-to-non-satiable conversion: one virtual good per capped agent."""

    original: Instance
    extended: Instance
    virtual_goods: dict[int, int]  # extended good index -> agent index


@dataclass
class DualSolution:
    prices: np.ndarray
    objective: float
    projected_grad_norm: float
    iterations: int
    objective_history: np.ndarray


@dataclass(frozen=True)
class Residuals:
    budget_gap: float
    clearing_gap: float
    dual_gradient_norm: float


@dataclass
class EquilibriumResult:
    prices: np.ndarray
    levels: np.ndarray
    allocation: np.ndarray
    residuals: Residuals
    virtual_goods: dict[int, int] = field(default_factory=dict)
    iterations: int = 0


@dataclass(frozen=True)
class EquilibriumCheck:
    ok: bool
    budget_gap: float
    clearing_gap: float
    over_allocation: float
    failures: tuple[str, ...]


def extend_satiable(instance: Instance) -> ExtensionMap:
    """Append a quantity-1 virtual good per satiable agent, demanded only by it.

    A satiable agent's proportions gain coefficient 1 on its virtual good, so
    its former cap level 1 is exactly the point where it holds the entire
    virtual supply.  Non-satiable instances pass through unchanged.
    """
    for a in instance.agents:
        if isinstance(a.utility, TabulatedPC) and a.utility.tail == "satiate":
            raise UnsupportedUtility(
                f"agent {a.name!r}: capped tabulated utilities cannot be extended")
    satiable = [i for i, a in enumerate(instance.agents)
                if isinstance(a.utility, SatiableLeontief)]
    if not satiable:
        return ExtensionMap(instance, instance, {})
    m = instance.m
    virtual_goods = {m + k: i for k, i in enumerate(satiable)}
    goods = list(instance.goods) + [Good(f"~virtual:{instance.agents[i].name}", 1.0)
                                    for i in satiable]
    agents = []
    for i, a in enumerate(instance.agents):
        pad = np.zeros(len(satiable))
        if i in satiable:
            pad[satiable.index(i)] = 1.0
        if isinstance(a.utility, Leontief):
            u = Leontief(np.concatenate([a.utility.r, pad]))
        else:  # linear-tail tabulated utility: pad bundles with zero columns
            bundles = np.hstack([a.utility.bundles,
                                 np.zeros((a.utility.levels.size, len(satiable)))])
            u = TabulatedPC(a.utility.levels, bundles, a.utility.tail)
        agents.append(Agent(a.name, a.entitlement, u))
    return ExtensionMap(instance, Instance(tuple(goods), tuple(agents)),
                        virtual_goods)


def _leontief_arrays(instance: Instance):
    if not instance.all_leontief(allow_satiable=False):
        raise UnsupportedUtility(
            "equilibrium computation requires plain Leontief utilities "
            "(extend satiable agents first)")
    R = instance.leontief_matrix()
    return R, instance.entitlements, instance.quantities


def eg_dual_solve(instance: Instance, tol: float = 1e-9,
                  max_iters: int = 100000) -> DualSolution:
    """Minimize phi(pi) = q . pi - sum_i e_i log(pi . r_i) over pi >= 0.

    Projected gradient descent with Armijo backtracking (shrink 1/2, slope
    1e-4), started at pi = 1.  The accepted-step objective sequence is
    non-increasing by construction and is returned for verification.
    """
    R, e, q = _leontief_arrays(instance)
    m = instance.m

    def phi(pi):
        costs = R @ pi
        if np.any(costs <= 0):
            return np.inf
        return float(q @ pi - e @ np.log(costs))

    pi = np.ones(m)
    value = phi(pi)
    history = [value]
    step = 1.0
    iterations = 0
    for iterations in range(1, max_iters + 1):
        costs = R @ pi
        grad = q - R.T @ (e / costs)
        projected = np.where(pi > 0, grad, np.minimum(grad, 0.0))
        grad_norm = float(np.sqrt(projected @ projected))
        if grad_norm <= tol * max(1.0, abs(value)):
            break
        trial = step * 2.0
        while True:
            cand = np.maximum(pi - trial * grad, 0.0)
            cand_value = phi(cand)
            decrease = float(grad @ (pi - cand))
            if cand_value <= value - 1e-4 * decrease and np.isfinite(cand_value):
                break
            trial *= 0.5
            if trial < 1e-20:
                raise Diverged("line search stalled; dual badly conditioned")
        pi, value, step = cand, cand_value, trial
        history.append(value)
    else:
        raise Diverged(f"dual solver hit the {max_iters}-iteration cap")
    prices = np.where(pi < ZERO_PRICE_SNAP, 0.0, pi)
    return DualSolution(prices, value, grad_norm, iterations,
                        np.asarray(history))


def equilibrium_from_prices(instance: Instance, prices: np.ndarray,
                            dual_gradient_norm: float = float("nan"),
                            pad_leftovers: bool = False) -> EquilibriumResult:
    """Levels, minimal-bundle allocation and residuals implied by prices.

    Zero-priced goods may be left partially unallocated; ``pad_leftovers``
    hands any leftover to the first agent to produce a fully clearing matrix
    (harmless under non-decreasing utilities).
    """
    R, e, q = _leontief_arrays(instance)
    prices = np.asarray(prices, dtype=float)
    costs = R @ prices
    if np.any(costs <= 0):
        i = int(np.argmin(costs))
        raise BadPrices(
            f"agent {instance.agents[i].name!r} bundle cost is {costs[i]:g}")
    levels = e / costs
    allocation = levels[:, None] * R
    if pad_leftovers:
        allocation = allocation.copy()
        allocation[0] += np.maximum(q - allocation.sum(axis=0), 0.0)
    budget_gap = float(np.max(np.abs(levels * costs - e)))
    supplied = allocation.sum(axis=0)
    priced = prices > 0
    clearing_gap = float(np.max(np.abs(supplied[priced] - q[priced]),
                                initial=0.0))
    residuals = Residuals(budget_gap, clearing_gap, dual_gradient_norm)
    return EquilibriumResult(prices, levels, allocation, residuals)


def check_equilibrium(instance: Instance, prices: np.ndarray,
                      allocation: np.ndarray, tol: float = 1e-6) -> EquilibriumCheck:
    """Verify budget exhaustion and market clearing under the given prices."""
    R, e, q = _leontief_arrays(instance)
    prices = np.asarray(prices, dtype=float)
    X = np.asarray(allocation, dtype=float)
    levels = np.array([utility_eval(a.utility, X[i])
                       for i, a in enumerate(instance.agents)])
    budget = levels * (R @ prices) - e
    budget_gap = float(np.max(np.abs(budget)))
    supplied = X.sum(axis=0)
    priced = prices > 0
    clearing_gap = float(np.max(np.abs(supplied[priced] - q[priced]), initial=0.0))
    over = float(np.max(supplied[~priced] - q[~priced], initial=0.0))
    failures = []
    if budget_gap > tol:
        i = int(np.argmax(np.abs(budget)))
        failures.append(f"agent {instance.agents[i].name!r} budget gap "
                        f"{budget[i]:+g} exceeds {tol:g}")
    if clearing_gap > tol:
        failures.append(f"a priced good misses clearing by {clearing_gap:g}")
    if over > tol:
        failures.append(f"a zero-priced good is over-allocated by {over:g}")
    return EquilibriumCheck(not failures, budget_gap, clearing_gap,
                            max(over, 0.0), tuple(failures))


def bbf_allocate(instance: Instance, tol: float = 1e-9,
                 max_iters: int = 100000):
    """Bottleneck-fair allocation via market equilibrium.

    Pipeline: extend satiable agents, solve the dual for prices, derive the
    minimal-bundle allocation, then drop the virtual-good columns.  Returns
    (allocation in original shape, equilibrium result on the extended market).
    """
    ext = extend_satiable(instance)
    dual = eg_dual_solve(ext.extended, tol=tol, max_iters=max_iters)
    result = equilibrium_from_prices(ext.extended, dual.prices,
                                     dual_gradient_norm=dual.projected_grad_norm)
    result.virtual_goods = dict(ext.virtual_goods)
    result.iterations = dual.iterations
    stripped = result.allocation[:, :instance.m].copy()
    return stripped, result
