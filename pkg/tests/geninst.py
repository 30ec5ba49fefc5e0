"""Named example economies and random instance generators shared by tests."""

import numpy as np

from fairshare import (
    Agent,
    Good,
    Instance,
    Leontief,
    SatiableLeontief,
    TabulatedPC,
    utility_eval,
    w_eval,
)


def fig3r():
    """Two goods; A wants only g1, B only g2, C both equally; equal shares."""
    return Instance(
        (Good("g1"), Good("g2")),
        (Agent("A", 1 / 3, Leontief([1, 0])),
         Agent("B", 1 / 3, Leontief([0, 1])),
         Agent("C", 1 / 3, Leontief([1, 1]))))


def sep():
    """A=(1,0), B=(1,1), equal entitlements: norm-fair and bottleneck-fair split."""
    return Instance(
        (Good("g1"), Good("g2")),
        (Agent("A", 0.5, Leontief([1, 0])),
         Agent("B", 0.5, Leontief([1, 1]))))


def sat():
    """A satiable at (0.4, 0.4); B wants only g1."""
    return Instance(
        (Good("g1"), Good("g2")),
        (Agent("A", 0.5, SatiableLeontief([0.4, 0.4])),
         Agent("B", 0.5, Leontief([1, 0]))))


def cross():
    return Instance(
        (Good("g1"), Good("g2")),
        (Agent("A", 0.5, Leontief([1, 0.5])),
         Agent("B", 0.5, Leontief([0.5, 1]))))


def free():
    """Good 2 oversupplied: its price must vanish."""
    return Instance(
        (Good("g1", 1.0), Good("g2", 10.0)),
        (Agent("A", 0.5, Leontief([1, 1])),
         Agent("B", 0.5, Leontief([1, 1]))))


def plateau():
    """A's g1 demand flattens past level 1; B competes for g1 only.

    Hand-solved under l1: step one stops at h = 1.5 exhausting g1 with
    A = (0.5, 0.7) still on its plateau (so only B freezes at (0.3, 0)),
    step two pushes A to (0.5, 1.0) at h = 1.875.
    """
    u = TabulatedPC(levels=[0, 1, 2],
                    bundles=[[0, 0], [0.5, 0.5], [0.5, 1.0]],
                    tail="linear")
    return Instance(
        (Good("g1", 0.8), Good("g2", 1.0)),
        (Agent("A", 0.8, u), Agent("B", 0.2, Leontief([1, 0]))))


def single():
    return Instance((Good("g1"), Good("g2")),
                    (Agent("A", 1.0, Leontief([1, 1])),))


# ---------------------------------------------------------------------------
# Random generators


def random_entitlements(rng, n):
    e = rng.uniform(0.1, 1.0, size=n)
    return e / e.sum()


def random_proportions(rng, m):
    mask = rng.random(m) < 0.65
    if not mask.any():
        mask[rng.integers(m)] = True
    r = np.where(mask, rng.uniform(0.2, 2.0, size=m), 0.0)
    return r


def random_leontief_instance(rng, n_max=4, m_max=4, satiable=False,
                             unit_quantities=True):
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    goods = tuple(Good(f"g{j}", 1.0 if unit_quantities
                       else float(rng.uniform(0.5, 2.0)))
                  for j in range(m))
    ents = random_entitlements(rng, n)
    agents = []
    for i in range(n):
        r = random_proportions(rng, m)
        if satiable and rng.random() < 0.5:
            u = SatiableLeontief(r)
        else:
            u = Leontief(r)
        agents.append(Agent(f"a{i}", float(ents[i]), u))
    return Instance(goods, tuple(agents))


def random_tabulated(rng, m):
    segments = int(rng.integers(1, 4))
    levels = np.concatenate([[0.0], np.cumsum(rng.uniform(0.3, 1.0, segments))])
    support = rng.random(m) < 0.7
    if not support.any():
        support[rng.integers(m)] = True
    bundles = [np.zeros(m)]
    for _ in range(segments):
        delta = np.where(support & (rng.random(m) > 0.3),
                         rng.uniform(0.1, 1.0, size=m), 0.0)
        if not delta.any():
            j = int(rng.choice(np.flatnonzero(support)))
            delta[j] = float(rng.uniform(0.1, 1.0))
        bundles.append(bundles[-1] + delta)
    tail = "linear" if rng.random() < 0.5 else "satiate"
    if tail == "linear" and not np.any(bundles[-1] > bundles[-2]):
        tail = "satiate"
    return TabulatedPC(levels, np.vstack(bundles), tail)


def random_pc_instance(rng, n_max=4, m_max=4):
    """Mix of Leontief and tabulated perfectly complementary agents."""
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    goods = tuple(Good(f"g{j}", float(rng.uniform(0.5, 2.0))) for j in range(m))
    ents = random_entitlements(rng, n)
    agents = []
    for i in range(n):
        roll = rng.random()
        if roll < 0.4:
            u = Leontief(random_proportions(rng, m))
        elif roll < 0.6:
            u = SatiableLeontief(random_proportions(rng, m))
        else:
            u = random_tabulated(rng, m)
        agents.append(Agent(f"a{i}", float(ents[i]), u))
    return Instance(goods, tuple(agents))


def random_non_wasteful(rng, instance):
    """Random greedy fill: partial random levels, then a top-up sweep.

    Every agent ends at the highest level reachable from its bundle plus the
    leftover available at its top-up turn, so the final leftover is useless
    to everyone and each bundle is minimal.
    """
    n = instance.n
    X = np.zeros((n, instance.m))
    remaining = instance.quantities.copy()
    for i in rng.permutation(n):
        u = instance.agents[i].utility
        t = utility_eval(u, remaining) * rng.random()
        X[i] = w_eval(u, t)
        remaining = np.maximum(remaining - X[i], 0.0)
    for i in rng.permutation(n):
        u = instance.agents[i].utility
        avail = remaining + X[i]
        new = np.asarray(w_eval(u, utility_eval(u, avail)), dtype=float)
        remaining = np.maximum(avail - new, 0.0)
        X[i] = new
    return X
