import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from fairshare import (
    Agent,
    Good,
    Instance,
    InstanceError,
    L1,
    L2,
    LINF,
    Leontief,
    SatiableLeontief,
    TabulatedPC,
    instance_from_dict,
    instance_to_dict,
    is_compatible,
    is_infinite,
    lp,
    norm_eval,
    parse_norm,
    parsimonize,
    utility_eval,
    w_eval,
)
from fairshare.model import utility_cap

import geninst


# ---------------------------------------------------------------------------
# Operation examples


def test_utility_eval_leontief():
    assert utility_eval(Leontief([2, 1]), np.array([1.0, 0.3])) == pytest.approx(0.3)


def test_utility_eval_satiable_caps_at_one():
    assert utility_eval(SatiableLeontief([0.4, 0.4]), np.array([1.0, 1.0])) == 1.0


def test_utility_eval_tabulated_inversion():
    u = TabulatedPC(levels=[0, 1], bundles=[[0, 0], [1, 2]], tail="linear")
    assert utility_eval(u, np.array([0.5, 2.0])) == pytest.approx(0.5)


def test_w_eval_leontief():
    np.testing.assert_allclose(w_eval(Leontief([2, 1]), 0.5), [1.0, 0.5])


def test_w_eval_satiable_beyond_cap_is_infinite():
    assert is_infinite(w_eval(SatiableLeontief([0.4, 0.4]), 1.2))


def test_w_eval_zero_level_is_zero_bundle():
    for u in (Leontief([2, 1]), SatiableLeontief([0.4, 0.4]),
              TabulatedPC([0, 1], [[0, 0], [1, 2]], "satiate")):
        np.testing.assert_array_equal(w_eval(u, 0.0), [0.0, 0.0])


def test_parsimonize_examples():
    np.testing.assert_allclose(
        parsimonize(Leontief([1, 1]), np.array([0.3, 0.7])), [0.3, 0.3])
    np.testing.assert_allclose(
        parsimonize(Leontief([1, 1]), np.array([0.5, 0.5])), [0.5, 0.5])
    np.testing.assert_allclose(
        parsimonize(SatiableLeontief([0.4, 0.4]), np.array([1.0, 1.0])), [0.4, 0.4])


def test_norm_eval_examples():
    assert norm_eval(L1, np.array([0.3, 0.3])) == pytest.approx(0.6)
    assert norm_eval(LINF, np.array([0.5, 0.25])) == pytest.approx(0.5)
    assert norm_eval(L2, np.array([0.41421, 0.41421])) == pytest.approx(0.58579, abs=1e-5)
    assert norm_eval(lp(3), np.array([1.0, 1.0])) == pytest.approx(2 ** (1 / 3))


def test_parse_norm():
    assert parse_norm("linf") == LINF
    assert parse_norm("lp:2.5").p == 2.5
    with pytest.raises(ValueError):
        parse_norm("l3")
    with pytest.raises(ValueError):
        parse_norm("lp:0.5")


def test_is_compatible_examples():
    assert is_compatible(Leontief([2, 1]), LINF)
    u = TabulatedPC([0, 1, 2], [[0, 0], [1, 0.5], [1, 1]], "satiate")
    assert not is_compatible(u, LINF)
    assert is_compatible(u, L1)


def test_is_compatible_flat_max_inside_segment():
    # max coordinate is flat on an initial sub-segment even though the
    # breakpoint values strictly increase: still incompatible with linf.
    u = TabulatedPC([0, 1, 2], [[0, 0], [1, 0], [1, 2]], "satiate")
    assert not is_compatible(u, LINF)


# ---------------------------------------------------------------------------
# Validation


def test_instance_rejects_bad_entitlement_sum():
    with pytest.raises(InstanceError, match="entitlements sum"):
        Instance((Good("g"),), (Agent("A", 0.4, Leontief([1])),
                                Agent("B", 0.5, Leontief([1]))))


def test_instance_rejects_nonpositive_quantity():
    with pytest.raises(InstanceError, match="quantity"):
        Instance((Good("g", 0.0),), (Agent("A", 1.0, Leontief([1])),))


def test_instance_rejects_dimension_mismatch():
    with pytest.raises(InstanceError, match="covers"):
        Instance((Good("g"),), (Agent("A", 1.0, Leontief([1, 2])),))


def test_instance_rejects_empty():
    with pytest.raises(InstanceError):
        Instance((), (Agent("A", 1.0, Leontief([1])),))


def test_utility_validation():
    with pytest.raises(InstanceError):
        Leontief([0, 0])
    with pytest.raises(InstanceError):
        TabulatedPC([0, 1], [[0, 0], [0, 0]], "satiate")  # no movement
    with pytest.raises(InstanceError):
        TabulatedPC([0.5, 1], [[0, 0], [1, 1]], "satiate")  # level 0 missing
    with pytest.raises(InstanceError):
        TabulatedPC([0, 1], [[0, 0], [-1, 1]], "satiate")
    with pytest.raises(InstanceError):
        TabulatedPC([0, 1], [[0, 0], [1, 1]], "weird")


def test_instance_json_round_trip():
    for make in (geninst.fig3r, geninst.sat, geninst.plateau):
        inst = make()
        again = instance_from_dict(instance_to_dict(inst))
        assert again.good_names == inst.good_names
        assert np.allclose(again.entitlements, inst.entitlements)
        X = np.zeros((inst.n, inst.m))
        for i, a in enumerate(inst.agents):
            assert utility_eval(a.utility, inst.quantities) == pytest.approx(
                utility_eval(again.agents[i].utility, inst.quantities))
        del X


def test_quantity_defaults_to_one():
    inst = instance_from_dict({
        "goods": [{"name": "cpu"}],
        "agents": [{"name": "A", "entitlement": 1.0,
                    "utility": {"kind": "leontief", "r": [1.0]}}]})
    assert inst.quantities[0] == 1.0


# ---------------------------------------------------------------------------
# Property tests

finite_shares = st.floats(min_value=0.0, max_value=10.0, allow_nan=False)


def bundle_strategy(m):
    return st.lists(finite_shares, min_size=m, max_size=m).map(np.asarray)


@st.composite
def leontief_strategy(draw, m=3):
    mask = draw(st.lists(st.booleans(), min_size=m, max_size=m))
    vals = draw(st.lists(st.floats(0.05, 5.0), min_size=m, max_size=m))
    r = [v if keep else 0.0 for keep, v in zip(mask, vals)]
    if not any(r):
        r[draw(st.integers(0, m - 1))] = draw(st.floats(0.1, 5.0))
    cls = SatiableLeontief if draw(st.booleans()) else Leontief
    return cls(np.asarray(r))


@st.composite
def utility_strategy(draw, m=3):
    if draw(st.booleans()):
        return draw(leontief_strategy(m))
    segs = draw(st.integers(1, 3))
    levels = [0.0]
    bundles = [np.zeros(m)]
    for _ in range(segs):
        levels.append(levels[-1] + draw(st.floats(0.2, 1.0)))
        mask = draw(st.lists(st.booleans(), min_size=m, max_size=m))
        vals = draw(st.lists(st.floats(0.05, 1.0), min_size=m, max_size=m))
        delta = np.array([v if keep else 0.0 for keep, v in zip(mask, vals)])
        if not np.any(delta > 0):
            delta[draw(st.integers(0, m - 1))] = draw(st.floats(0.1, 1.0))
        bundles.append(bundles[-1] + delta)
    tail = "linear" if (draw(st.booleans()) and
                        np.any(bundles[-1] > bundles[-2])) else "satiate"
    return TabulatedPC(np.asarray(levels), np.vstack(bundles), tail)


@settings(max_examples=200, deadline=None)
@given(leontief_strategy(), bundle_strategy(3), bundle_strategy(3))
def test_pointwise_min_law(u, x, y):
    lhs = utility_eval(u, np.minimum(x, y))
    rhs = min(utility_eval(u, x), utility_eval(u, y))
    assert lhs == pytest.approx(rhs, abs=1e-12)


def _cap_or(u, default):
    cap = utility_cap(u)
    return default if cap is None else cap


@settings(max_examples=200, deadline=None)
@given(utility_strategy(), st.floats(0, 1), st.floats(0, 1))
def test_representation_monotone(u, a, b):
    top = _cap_or(u, 10.0)
    t1, t2 = sorted((a * top, b * top))
    w1, w2 = w_eval(u, t1), w_eval(u, t2)
    assert np.all(np.asarray(w1) <= np.asarray(w2) + 1e-12)


@settings(max_examples=200, deadline=None)
@given(utility_strategy(), bundle_strategy(3))
def test_parsimonize_idempotent_and_preserving(u, x):
    y = parsimonize(u, x)
    z = parsimonize(u, y)
    assert np.allclose(y, z, atol=1e-12)
    assert utility_eval(u, y) == pytest.approx(utility_eval(u, x), abs=1e-12)
    assert np.all(y <= x + 1e-12)


@settings(max_examples=200, deadline=None)
@given(utility_strategy(), st.floats(0, 1))
def test_level_round_trip(u, frac):
    t = frac * _cap_or(u, 7.0)
    assert utility_eval(u, w_eval(u, t)) == pytest.approx(t, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(utility_strategy(), st.floats(0, 1), st.floats(0, 1))
def test_parsimonious_bundles_form_chain(u, a, b):
    top = _cap_or(u, 10.0)
    w1 = np.asarray(w_eval(u, a * top))
    w2 = np.asarray(w_eval(u, b * top))
    assert np.all(w1 <= w2 + 1e-12) or np.all(w2 <= w1 + 1e-12)


@settings(max_examples=200, deadline=None)
@given(bundle_strategy(4), bundle_strategy(4), st.floats(0.01, 100.0))
def test_norm_monotone_and_homogeneous(x, y, scale):
    for norm in (L1, L2, LINF, lp(3)):
        assert norm_eval(norm, np.minimum(x, y)) <= norm_eval(norm, x) + 1e-12
        assert norm_eval(norm, scale * x) == pytest.approx(
            scale * norm_eval(norm, x), rel=1e-9, abs=1e-12)
