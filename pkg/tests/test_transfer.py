"""Transfer operator: exact tree, MC fallback, Gordin norms, martingale split.

The map z -> z^2 gives machine-exact oracles: preimages of any point are
+-sqrt, so Lambda kills odd modes and halves even ones (Lambda Re z^2k =
Re z^k pointwise, Lambda Re z^{odd} = 0).
"""

import math

import numpy as np
import pytest

from greenlab.errors import InvalidParams, NoDecayDetected, TooManySingularHits
from greenlab.measure import integrate
from greenlab.observables import Observable, constant, re_power, trig_poly
from greenlab.sphere import HPoints, SpherePoint, apply_batch
from greenlab.transfer import (
    TransferBudget,
    check_martingale,
    exp_moment_transfer,
    gordin_sequence,
    martingale_decompose,
    transfer,
    transfer_batch,
)


@pytest.fixture(scope="module")
def probe(circle_cloud):
    return circle_cloud.subsample(256).hpoints


class TestOperator:
    def test_even_mode_halves(self, square_map, probe):
        vals, errs = transfer_batch(square_map, re_power(2), probe, 1)
        want = re_power(1).evaluate(probe)
        assert np.max(np.abs(vals - want)) < 1e-12
        assert np.all(errs == 0.0)

    def test_odd_mode_dies(self, square_map, probe):
        vals, _ = transfer_batch(square_map, re_power(1), probe, 1)
        assert np.max(np.abs(vals)) < 1e-12

    def test_cubed_mode_dies(self, square_map, probe):
        vals, _ = transfer_batch(square_map, re_power(3), probe, 1)
        assert np.max(np.abs(vals)) < 1e-9

    def test_two_steps_collapse_mode_four(self, square_map):
        p = SpherePoint(0.3 + 0.4j)
        val, err = transfer(square_map, re_power(4), p, 2)
        assert val == pytest.approx(0.3, abs=1e-9)
        assert err == 0.0

    def test_fixes_constants_exactly(self, square_map, probe):
        vals, _ = transfer_batch(square_map, constant(1.0), probe, 3)
        assert np.all(vals == 1.0)

    def test_identity_at_n_zero(self, square_map, probe):
        vals, errs = transfer_batch(square_map, re_power(2), probe, 0)
        assert np.array_equal(vals, re_power(2).evaluate(probe))
        assert np.all(errs == 0.0)

    def test_sup_contraction(self, square_map, probe):
        obs = trig_poly([0.0, 1.0, -0.5, 0.25])
        for n in (1, 2, 4):
            vals, _ = transfer_batch(square_map, obs, probe, n)
            assert np.max(np.abs(vals)) <= obs.sup_bound + 1e-12

    def test_negative_n_rejected(self, square_map, probe):
        with pytest.raises(InvalidParams):
            transfer_batch(square_map, re_power(1), probe, -1)

    @pytest.mark.filterwarnings("ignore:invalid value encountered")
    def test_singular_fiber_raises(self, square_map):
        # the whole fiber of infinity is infinity: every leaf non-finite
        with pytest.raises(TooManySingularHits):
            transfer(square_map, re_power(1), SpherePoint.infinity(), 1)


class TestMonteCarloRoute:
    def test_agrees_with_exact(self, square_map, probe):
        tiny = TransferBudget(exact_depth_max=2, mc_paths=4000)
        sub = HPoints(probe.X[:8], probe.Y[:8])
        vmc, emc = transfer_batch(square_map, re_power(2), sub, 3, tiny)
        vex, _ = transfer_batch(square_map, re_power(2), sub, 3)
        z = np.abs(vmc - vex) / np.maximum(emc, 1e-12)
        assert np.all(emc > 0)
        assert np.max(z) < 5.0

    def test_deterministic(self, square_map, probe):
        tiny = TransferBudget(exact_depth_max=1, mc_paths=1000)
        sub = HPoints(probe.X[:4], probe.Y[:4])
        a, _ = transfer_batch(square_map, re_power(2), sub, 2, tiny, seed=5)
        b, _ = transfer_batch(square_map, re_power(2), sub, 2, tiny, seed=5)
        assert np.array_equal(a, b)

    def test_seed_matters(self, square_map, probe):
        tiny = TransferBudget(exact_depth_max=1, mc_paths=500)
        sub = HPoints(probe.X[:4], probe.Y[:4])
        a, _ = transfer_batch(square_map, re_power(2), sub, 2, tiny, seed=5)
        b, _ = transfer_batch(square_map, re_power(2), sub, 2, tiny, seed=6)
        assert not np.array_equal(a, b)


class TestAdjointIdentity:
    def test_forward_vs_adjoint_pairing(self, square_map, circle_cloud):
        # <(phi o f^n) psi> = <phi Lambda^n psi> under mu; the cloud realizes
        # both sides up to sampling error
        sub = circle_cloud.subsample(4096)
        phi, psi = re_power(1), re_power(2)
        for n in (1, 2, 4):
            fwd_pts = sub.hpoints
            for _ in range(n):
                fwd_pts = apply_batch(square_map, fwd_pts)
            lhs_vals = phi.evaluate(fwd_pts) * psi.evaluate(sub.hpoints)
            lam, _ = transfer_batch(square_map, psi, sub.hpoints, n)
            rhs_vals = phi.evaluate(sub.hpoints) * lam
            lhs = float(np.dot(sub.weights, lhs_vals))
            rhs = float(np.dot(sub.weights, rhs_vals))
            se = math.hypot(
                float(np.sqrt(np.dot(sub.weights**2, (lhs_vals - lhs) ** 2))),
                float(np.sqrt(np.dot(sub.weights**2, (rhs_vals - rhs) ** 2))),
            )
            assert abs(lhs - rhs) <= max(5 * se, 1e-10)


class TestGordin:
    def test_centered_norm_then_exact_zero(self, square_map, circle_cloud):
        obs = trig_poly([0, 1], label="Re z", mean_hint=0.0)
        rep = gordin_sequence(square_map, circle_cloud, obs, N=4)
        assert rep.norms[0] == pytest.approx(math.sqrt(0.5), abs=0.02)
        # the two square roots cancel to float noise
        assert all(v < 1e-12 for v in rep.norms[1:])
        assert rep.partial_sum == pytest.approx(rep.norms[0], abs=1e-10)

    def test_shifted_spectrum(self, square_map, circle_cloud):
        obs = trig_poly([0, 1, 1], label="Re z+Re z^2", mean_hint=0.0)
        rep = gordin_sequence(square_map, circle_cloud, obs, N=3)
        assert rep.norms[0] == pytest.approx(math.sqrt(1.0), abs=0.03)
        assert rep.norms[1] == pytest.approx(math.sqrt(0.5), abs=0.02)
        assert rep.norms[2] < 1e-12

    def test_unresolved_slope_is_none(self, square_map, circle_cloud):
        # only two resolvable norms: refuse to fit a decay rate
        obs = trig_poly([0, 1, 1], mean_hint=0.0)
        rep = gordin_sequence(square_map, circle_cloud, obs, N=5)
        assert rep.fitted_slope is None

    def test_mean_floor_respected_without_hint(self, square_map, circle_cloud):
        rep = gordin_sequence(square_map, circle_cloud, re_power(1), N=4)
        # empirical centering leaves a constant; it must not be "resolved"
        assert rep.fitted_slope is None
        assert rep.mean_stderr > 0

    def test_n_floor(self, square_map, circle_cloud):
        with pytest.raises(InvalidParams):
            gordin_sequence(square_map, circle_cloud, re_power(1), N=0)

    def test_json_fields(self, square_map, circle_cloud):
        rep = gordin_sequence(square_map, circle_cloud, re_power(1), N=2)
        js = rep.to_json()
        assert js["schema_version"] == 1
        assert len(js["norms"]) == 3


class TestMartingale:
    def test_truncation_and_exact_residual(self, square_map, circle_cloud):
        psi = trig_poly([0, 1, 1], label="Re z+Re z^2", mean_hint=0.0)
        dec = martingale_decompose(square_map, psi, circle_cloud, tol=1e-9)
        assert dec.truncation_N == 2
        chk = check_martingale(square_map, circle_cloud, dec)
        assert chk.residual_norm < 1e-12
        assert chk.ok

    def test_prime_variance_matches_sigma2(self, square_map, circle_cloud):
        psi = trig_poly([0, 1, 1], mean_hint=0.0)
        dec = martingale_decompose(square_map, psi, circle_cloud, tol=1e-9)
        sub = circle_cloud.subsample(4096)
        pv = dec.psi_prime.evaluate(sub.hpoints)
        # sigma^2 = ||psi'||^2 = 2 for this pair
        assert float(np.dot(sub.weights, pv**2)) == pytest.approx(2.0, abs=0.1)

    def test_reconstruction_identity(self, square_map, circle_cloud):
        psi = trig_poly([0, 0, 1], label="Re z^2", mean_hint=0.0)
        dec = martingale_decompose(square_map, psi, circle_cloud, tol=1e-9)
        sub = circle_cloud.subsample(100)
        fwd = apply_batch(square_map, sub.hpoints)
        lhs = psi.evaluate(sub.hpoints)
        rhs = (
            dec.psi_prime.evaluate(sub.hpoints)
            + dec.psi_dblprime.evaluate(sub.hpoints)
            - dec.psi_dblprime.evaluate(fwd)
        )
        assert np.max(np.abs(lhs - rhs)) <= dec.tail_bound + 1e-10

    def test_unhinted_mean_folds_into_threshold(self, square_map, circle_cloud):
        dec = martingale_decompose(square_map, re_power(2), circle_cloud, tol=1e-9)
        chk = check_martingale(square_map, circle_cloud, dec)
        assert chk.residual_ok
        assert chk.threshold >= 5 * dec.mean_stderr

    def test_increments_orthogonal(self, square_map, circle_cloud):
        psi = trig_poly([0, 1, 1], mean_hint=0.0)
        dec = martingale_decompose(square_map, psi, circle_cloud, tol=1e-9)
        chk = check_martingale(square_map, circle_cloud, dec)
        assert chk.orthogonality_ok
        assert {(o["n"], o["m"]) for o in chk.orthogonality} == {(0, 1), (0, 2), (1, 2)}

    def test_no_decay_detected(self, square_map, circle_cloud):
        # wrong hint leaves a constant component, which Lambda fixes forever
        bad = trig_poly([0.7], label="c", mean_hint=0.5)
        with pytest.raises(NoDecayDetected):
            martingale_decompose(square_map, bad, circle_cloud, tol=1e-9)

    def test_check_json(self, square_map, circle_cloud):
        psi = trig_poly([0, 0, 1], mean_hint=0.0)
        dec = martingale_decompose(square_map, psi, circle_cloud, tol=1e-9)
        js = check_martingale(square_map, circle_cloud, dec).to_json()
        assert js["schema_version"] == 1
        assert js["residual_ok"] and js["orthogonality_ok"]


class TestExpMomentTransfer:
    def test_exact_kill_gives_one(self, square_map, circle_cloud):
        psi = trig_poly([0, 1, 1], mean_hint=0.0)
        rep = exp_moment_transfer(square_map, circle_cloud, psi, alpha=0.3, n=2)
        assert rep.estimate == 1.0
        assert not rep.flagged

    def test_alpha_zero(self, square_map, circle_cloud):
        rep = exp_moment_transfer(square_map, circle_cloud, re_power(1), alpha=0.0, n=1)
        assert (rep.estimate, rep.stderr) == (1.0, 0.0)

    def test_matches_quadrature_after_one_step(self, square_map, circle_cloud):
        import scipy.integrate

        psi = trig_poly([0, 1, 1], mean_hint=0.0)
        rep = exp_moment_transfer(square_map, circle_cloud, psi, alpha=0.3, n=1)
        # Lambda psi = Re z, scale alpha d = 0.6
        oracle = scipy.integrate.quad(
            lambda t: math.exp(0.6 * abs(math.cos(t))) / (2 * math.pi), 0, 2 * math.pi
        )[0]
        assert rep.estimate == pytest.approx(oracle, abs=max(5 * rep.stderr, 0.01))

    def test_negative_alpha_rejected(self, square_map, circle_cloud):
        with pytest.raises(InvalidParams):
            exp_moment_transfer(square_map, circle_cloud, re_power(1), alpha=-1.0, n=1)
