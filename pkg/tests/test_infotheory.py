"""Entropy estimators, KL pins, the de Bruijn identity, and deficit machinery."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from sloclab import streams
from sloclab.errors import InputValidationError
from sloclab.follmer import to_follmer
from sloclab.infotheory import (
    CLOSED_FORM,
    GRID_CONVOLUTION,
    KNN,
    PLUGIN_MC,
    _factor_grid_deficit,
    de_bruijn_check,
    deficit_chain_audit,
    deficit_lower_bound,
    differential_entropy,
    epi_deficit,
    kl_to_gaussian,
    knn_entropy,
)
from sloclab.localization import make_geometric, simulate_ensemble
from sloclab.measures import (
    GAUSSIAN_ENTROPY_RATE,
    LaplaceFactor,
    make_ball,
    make_cube,
    make_gaussian,
    make_product,
    make_uniform_box,
    parse_measure_id,
)

EULER_GAMMA = np.euler_gamma


# ---------------------------------------------------------------------------
# Entropy estimators


def test_closed_form_entropy_route():
    for mid in ("gaussian:3", "cube:2", "ball:3", "product:exp,laplace"):
        spec = parse_measure_id(mid)
        est = differential_entropy(spec)
        assert est.method == CLOSED_FORM
        assert est.stderr == 0.0
        assert est.value == spec.entropy()


def test_mc_entropy_exact_for_cube():
    # -log rho is constant on the support, so the plug-in has zero variance
    est = differential_entropy(make_cube(2), method="mc", n_samples=4000)
    assert est.value == pytest.approx(math.log(12.0), abs=1e-12)
    assert est.stderr < 1e-15  # constant integrand, spread is pure rounding
    assert est.method == PLUGIN_MC


def test_mc_entropy_gaussian():
    est = differential_entropy(make_gaussian(2), method="mc", n_samples=50_000, seed=3)
    assert est.value == pytest.approx(2.0 * GAUSSIAN_ENTROPY_RATE, abs=4.0 * est.stderr)
    assert est.stderr > 0.0


def test_knn_entropy_gaussian():
    est = differential_entropy(make_gaussian(2), method="knn", n_samples=20_000, seed=1)
    assert est.method == KNN
    assert est.value == pytest.approx(2.0 * GAUSSIAN_ENTROPY_RATE, abs=0.1)
    assert "low-confidence" in est.notes


def test_knn_entropy_accepts_flat_input():
    x = streams.generator(0, "knn1d").standard_normal(8000)
    est = knn_entropy(x)
    assert est.value == pytest.approx(GAUSSIAN_ENTROPY_RATE, abs=0.1)


def test_knn_needs_enough_points():
    with pytest.raises(InputValidationError, match="more points"):
        knn_entropy(np.zeros((4, 2)), k=5)


def test_unknown_entropy_method():
    with pytest.raises(InputValidationError, match="unknown entropy method"):
        differential_entropy(make_gaussian(1), method="spline")


# ---------------------------------------------------------------------------
# KL pins


def test_kl_closed_pins():
    # frozen six-digit oracles for the catalog's 1D families
    assert kl_to_gaussian(make_cube(1)).value == pytest.approx(0.1764852, abs=5e-7)
    assert kl_to_gaussian(make_product("laplace")).value == pytest.approx(0.0723649, abs=5e-7)
    assert kl_to_gaussian(make_product("exp")).value == pytest.approx(0.4189385, abs=5e-7)
    assert kl_to_gaussian(make_gaussian(4)).value == 0.0


def test_kl_additive_over_factors():
    one = kl_to_gaussian(make_cube(1)).value
    eight = kl_to_gaussian(make_cube(8)).value
    assert eight == pytest.approx(8.0 * one, rel=1e-12)


def test_kl_requires_isotropic():
    with pytest.raises(InputValidationError, match="isotropize"):
        kl_to_gaussian(make_uniform_box([1.0, 2.0]))


# ---------------------------------------------------------------------------
# de Bruijn identity


def test_de_bruijn_gaussian_is_exact():
    ens = simulate_ensemble(make_gaussian(2), make_geometric(0.01, 100.0, 40), 64, seed=0)
    rep = de_bruijn_check(make_gaussian(2), ens)
    assert not rep.failed
    assert rep.statistic < 1e-10  # v = 0 and KL = 0, both sides vanish


def test_de_bruijn_cube():
    ens = simulate_ensemble(make_cube(1), make_geometric(0.01, 20_000.0, 48), 2048, seed=2)
    rep = de_bruijn_check(make_cube(1), ens)
    assert not rep.failed
    assert "tail-rectangle" in rep.notes
    assert "kl=0.17648" in rep.notes


def test_de_bruijn_needs_fine_grid():
    ens = simulate_ensemble(make_cube(1), make_geometric(0.1, 1.0, 7), 16, seed=0)
    with pytest.raises(InputValidationError, match=">= 10"):
        de_bruijn_check(make_cube(1), ens)


# ---------------------------------------------------------------------------
# EPI deficit


def test_epi_deficit_gaussian_zero():
    rep = epi_deficit(make_gaussian(3))
    assert rep.delta.value == 0.0
    assert rep.delta.method == CLOSED_FORM
    assert not rep.bounds.failed
    assert not rep.low_confidence


def test_epi_deficit_uniform_pin():
    # (X1+X2)/sqrt 2 is triangular: delta = 1/2 - ln(2)/2 per coordinate
    rep = epi_deficit(make_cube(1))
    pin = 0.5 - 0.5 * math.log(2.0)
    assert rep.delta.method == CLOSED_FORM
    assert rep.delta.value == pytest.approx(pin, abs=1e-12)
    assert rep.delta.value == pytest.approx(0.1534264, abs=5e-7)
    rep3 = epi_deficit(make_cube(3))
    assert rep3.delta.value == pytest.approx(3.0 * pin, rel=1e-12)


def test_epi_deficit_exp_pin():
    # X1 + X2 is a shifted Gamma(2): delta = euler_gamma - ln(2)/2
    rep = epi_deficit(make_product("exp"))
    assert rep.delta.value == pytest.approx(EULER_GAMMA - 0.5 * math.log(2.0), abs=1e-12)
    assert not rep.bounds.failed


def test_epi_deficit_laplace_grid_vs_closed_density():
    # sum of two iid Laplace(b) draws has density e^{-|z|/b} (1 + |z|/b)/(4b);
    # integrate it directly and compare with the fft grid route
    rep = epi_deficit(make_product("laplace"))
    assert rep.delta.method == GRID_CONVOLUTION
    b = 1.0 / math.sqrt(2.0)

    def f_sum(z):
        az = abs(z) / b
        return math.exp(-az) * (1.0 + az) / (4.0 * b)

    h_sum, _ = quad(lambda z: -f_sum(z) * math.log(f_sum(z)), -40.0, 40.0, limit=300)
    delta_ref = (h_sum - 0.5 * math.log(2.0)) - (1.0 + math.log(2.0 * b))
    assert rep.delta.value == pytest.approx(delta_ref, abs=1e-4)


def test_factor_grid_deficit_matches_closed_uniform():
    from sloclab.measures import UniformFactor
    grid_route = _factor_grid_deficit(UniformFactor(), 1 << 14, 12.0)
    assert grid_route == pytest.approx(0.5 - 0.5 * math.log(2.0), abs=1e-4)


def test_epi_deficit_ball_knn():
    rep = epi_deficit(make_ball(3), seed=5, n_samples=30_000)
    assert rep.low_confidence
    assert rep.delta.method == KNN
    assert not rep.bounds.failed
    assert 0.0 <= rep.delta.value + 4.0 * rep.delta.stderr
    assert rep.upper_bound == 6.0


# ---------------------------------------------------------------------------
# Deficit lower bound and the chain audit


@pytest.fixture(scope="module")
def cube2_frame_anchored():
    ens = simulate_ensemble(make_cube(2), make_geometric(0.05, 20.0, 16, include=(1.0,)),
                            512, seed=0)
    return to_follmer(ens)


def test_deficit_lower_bound_cube(cube2_frame_anchored):
    low = deficit_lower_bound(cube2_frame_anchored, xi=0.5)
    assert low.eps == 0.5
    assert low.estimate.value >= 0.0
    assert not low.parity.failed
    # the bound must sit below the actual deficit
    delta = epi_deficit(make_cube(2)).delta.value
    assert low.estimate.value <= delta + 4.0 * low.estimate.stderr


def test_deficit_lower_bound_xi_snap(cube2_frame_anchored):
    with pytest.raises(InputValidationError, match="add the matching time"):
        deficit_lower_bound(cube2_frame_anchored, xi=0.4321)
    with pytest.raises(InputValidationError, match="0 < xi < 1"):
        deficit_lower_bound(cube2_frame_anchored, xi=1.5)


def test_deficit_chain_audit_cube(cube2_frame_anchored):
    rep = deficit_chain_audit(make_cube(2), cube2_frame_anchored, xi=0.5, seed=1)
    assert not rep.failed
    ids = [s.check_id for s in rep.sub]
    assert ids == ["variance-split-exact", "ibp-balance", "score-trace-bound",
                   "clocked-gamma-monotone", "chain-upper", "chain-lower",
                   "parity-split", "fisher-bound-at-xi", "energy-constant"]
    assert rep.sub[-1].verdict == "INFO"
    assert "xi=0.5" in rep.notes


def test_deficit_chain_audit_accepts_raw_ensemble():
    ens = simulate_ensemble(make_cube(1), make_geometric(0.05, 20.0, 16, include=(1.0,)),
                            256, seed=3)
    rep = deficit_chain_audit(make_cube(1), ens, xi=0.5, seed=3)
    assert not rep.failed
