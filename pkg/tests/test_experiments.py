import csv
import io
import json
import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knlab import experiments as E

SMALL_K = (8, 12, 16, 24, 32)


def test_delta_values():
    assert E.delta(2) == 0.0
    assert E.delta(4) == 0.125
    assert E.delta(6) == pytest.approx(1 / 6, abs=1e-15)
    assert E.delta(math.inf) == 0.5
    assert E.delta_exact(6) == Fraction(1, 6)
    assert 0.5 * (0.5 - 1 / 6) == pytest.approx(0.5 - 2 / 6, abs=1e-15)


def test_delta_rejects_small_p():
    with pytest.raises(ValueError):
        E.delta(1.9)


@given(p=st.floats(2.0, 1e6), q=st.floats(2.0, 1e6))
def test_delta_monotone_and_bounded(p, q):
    lo, hi = sorted((p, q))
    assert E.delta(lo) <= E.delta(hi) <= 0.5


@given(p=st.fractions(min_value=2, max_value=1000, max_denominator=50))
def test_delta_exact_agrees(p):
    assert E.delta(float(p)) == pytest.approx(float(E.delta_exact(p)), abs=1e-15)


def test_fit_scaling_exact_power_law():
    lam = np.geomspace(10, 300, 9)
    fit = E.fit_scaling(zip(lam, 3 * lam ** 0.5))
    assert fit.slope == pytest.approx(0.5, abs=1e-10)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.predict(50.0) == pytest.approx(3 * 50 ** 0.5)


@given(a=st.floats(-2, 2), c=st.floats(0.1, 10))
@settings(max_examples=25)
def test_fit_scaling_recovers_slope(a, c):
    lam = np.geomspace(16, 256, 7)
    fit = E.fit_scaling(zip(lam, c * lam ** a))
    assert abs(fit.slope - a) <= 1e-10
    assert 0.0 <= fit.r_squared <= 1.0


def test_fit_scaling_rejects_bad_input():
    with pytest.raises(ValueError):
        E.fit_scaling([(1, 1)] * 4)
    with pytest.raises(ValueError):
        E.fit_scaling([(1, 1), (2, 2), (3, 0.0), (4, 4), (5, 5)])


def test_highest_weight_l4_slope():
    from knlab.eigenfunctions import highest_weight
    from knlab.functionals import lp_norm
    pairs = []
    for k in E.DEFAULT_K_RANGE:
        f = highest_weight(k)
        pairs.append((f.eigenvalue, lp_norm(f, p=4)))
    assert E.fit_scaling(pairs).slope == pytest.approx(0.125, abs=0.03)


def test_zonal_sup_slope():
    from knlab.eigenfunctions import zonal
    pairs = [(zonal(k).eigenvalue, math.sqrt((2 * k + 1) / (4 * math.pi)))
             for k in E.DEFAULT_K_RANGE]
    assert E.fit_scaling(pairs).slope == pytest.approx(0.5, abs=0.03)


def test_classify_thresholds():
    assert E.classify(0.0) == "non-decaying"
    assert E.classify(-0.02) == "non-decaying"
    assert E.classify(-0.05) == "decaying"
    assert E.classify(-0.03) == "inconclusive"


def test_family_spec_defaults():
    spec = E.FamilySpec("random_harmonic")
    assert spec.seeds == tuple(range(1, 9))
    assert len(spec.members()) == 8
    assert E.FamilySpec("torus_wave").members()[0].field(5).params["m"] == (5, 6)
    with pytest.raises(ValueError):
        E.FamilySpec("nope")


def test_estimate_1_torus_decays():
    rep = E.verify_estimate_1(E.FamilySpec("torus_wave"), 4, SMALL_K)
    assert rep.passed
    assert rep.slopes["torus_wave"]["ratio_trend"] == pytest.approx(-0.125, abs=1e-9)


def test_report_covers_every_k_and_verdict_recomputable():
    rep = E.verify_estimate_1(E.FamilySpec("highest_weight"), 4, SMALL_K)
    rows = list(csv.reader(io.StringIO(rep.ledger_csv())))
    assert rows[0] == list(E.LEDGER_HEADER)
    ratios = [(float(r[3]), float(r[5])) for r in rows[1:] if r[4] == "ratio"]
    assert sorted(int(r[2]) for r in rows[1:] if r[4] == "ratio") == list(SMALL_K)
    assert max(v for _, v in ratios) == rep.max_ratio
    assert E.trend(*zip(*ratios)) == rep.slopes["highest_weight"]["ratio_trend"]
    d = json.loads(json.dumps(rep.verdict_dict()))
    assert set(d) == {"experiment", "family", "params", "verdict", "slopes", "max_ratio"}


def test_ledger_uses_repr_floats_and_newlines():
    rep = E.delta_table((3,))
    text = rep.ledger_csv()
    assert "\r" not in text
    assert repr(E.delta(3)) in text


def test_bourgain_torus_ratio_decays():
    rep = E.verify_bourgain(E.FamilySpec("torus_wave"), 4, SMALL_K)
    assert rep.passed and rep.slopes["torus_wave"] == pytest.approx(-0.25, abs=1e-6)


def test_bourgain_zonal_p2_bounded():
    rep = E.verify_bourgain(E.FamilySpec("zonal"), 2, SMALL_K)
    assert rep.passed


def test_theorem1_solves_minimal_constant():
    # small eps forces C_eps > 0, and the minimal constant makes one cell tight
    rep = E.verify_theorem1(E.FamilySpec("highest_weight"), SMALL_K, (1 / 64, 1 / 128), C=0.0)
    assert rep.passed
    assert rep.max_ratio == pytest.approx(1.0, abs=1e-12)
    ce = rep.details["C_eps"]
    assert all(ce[repr(a)] <= ce[repr(b)] for a, b in zip(E.EPS_FIT_GRID, E.EPS_FIT_GRID[1:]))


def test_corollary2_rejects_p():
    with pytest.raises(ValueError):
        E.verify_corollary2([E.FamilySpec("torus_wave")], p=6)


def test_corollary2_torus():
    rep = E.verify_corollary2([E.FamilySpec("torus_wave")], 4, SMALL_K)
    assert rep.passed
    assert rep.slopes["torus_wave:bii"] == pytest.approx(-0.5, abs=1e-6)


def test_prop3_golden_and_closed():
    rep = E.prop3_torus_check()
    assert rep.passed and rep.slopes["decay"] == pytest.approx(-0.5, abs=1e-6)
    with pytest.warns(E.ClosedGeodesicWarning):
        bad = E.prop3_torus_check(slope=1.0)
    assert not bad.passed


def test_closes_within():
    assert E.closes_within((1.0, 1.0))
    assert not E.closes_within((1.0, E.GOLDEN))


def test_holder_chain_small():
    rep = E.holder_chain([E.FamilySpec("highest_weight"), E.FamilySpec("torus_wave")], SMALL_K)
    assert rep.passed and rep.max_ratio <= 1.0


def test_gauss_lemma_small():
    rep = E.gauss_lemma_experiment(5)
    assert rep.passed
    assert len(rep.values("residual")) == 10


def test_registry_sorted_and_complete():
    names = list(E.EXPERIMENTS)
    assert names == sorted(names)
    assert {"verify-theorem1", "kn-maximal", "delta-table"} <= set(names)
