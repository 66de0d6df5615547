import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualdescent.descent import (
    RunAborted,
    StepRejected,
    StepSchedule,
    gd_step,
    mirror_map_step,
    mirror_step_proximal,
    natural_direction,
    natural_gradient_step,
    retraction_step,
    run_online,
)
from dualdescent.domains import DOMAIN_MARGIN, DomainError
from dualdescent.dual_geometry import bernoulli_pair, bregman_primal, gaussian_pair, poisson_pair, product_pair
from dualdescent.families import (
    Observation,
    grad_log_loss_mean,
    log_loss_natural,
    make_family,
    sample_stream,
    stream_rng,
)

PRODUCT = product_pair(["gaussian", "poisson", "bernoulli"])
PAIRS = [gaussian_pair(2), poisson_pair(), bernoulli_pair(), PRODUCT]


class TestSchedule:
    def test_kinds(self):
        assert StepSchedule("constant", 0.1).alpha(7) == 0.1
        assert StepSchedule("inverse-t", 2.0).alpha(4) == 0.5
        assert StepSchedule("inv_sqrt_t", 1.0).alpha(4) == 0.5

    def test_offset(self):
        s = StepSchedule("inv_t", 1.0, offset=3)
        assert s.alpha(1) == 0.25
        assert StepSchedule("constant", 0.2, offset=3).alpha(1) == 0.2

    @given(st.sampled_from(["constant", "inv_t", "inv_sqrt_t"]),
           st.floats(1e-6, 1e3), st.integers(1, 10**9))
    def test_positive(self, kind, c, t):
        assert StepSchedule(kind, c).alpha(t) > 0

    def test_invalid(self):
        with pytest.raises(ValueError):
            StepSchedule("cosine")
        with pytest.raises(ValueError):
            StepSchedule("constant", 0.0)
        with pytest.raises(ValueError):
            StepSchedule("constant").alpha(0)


class TestGdStep:
    def test_example(self):
        np.testing.assert_array_equal(gd_step([1.0, 0.0], [1.0, 1.0], 0.5), [0.5, 1.0])

    def test_zero_grad(self):
        np.testing.assert_array_equal(gd_step([0.0, 0.0], [3.0, -2.0], 0.7), [3.0, -2.0])

    def test_gaussian_log_loss(self):
        fam = make_family("gaussian")
        traj = run_online("gd", fam, [Observation([1.0])], StepSchedule("constant", 1.0), [0.0])
        np.testing.assert_array_equal(traj.final, [1.0])


class TestMirrorStep:
    def test_gaussian_is_gd(self):
        out = mirror_step_proximal(gaussian_pair(2), [1.0, 0.0], [1.0, 1.0], 0.5)
        np.testing.assert_array_equal(out, gd_step([1.0, 0.0], [1.0, 1.0], 0.5))

    def test_small_alpha_continuity(self):
        theta = np.array([0.3])
        out = mirror_step_proximal(bernoulli_pair(), [2.0], theta, 1e-12)
        np.testing.assert_allclose(out, theta, atol=1e-11)

    def test_poisson_example(self):
        out = mirror_step_proximal(poisson_pair(), [-1.0], [0.0], 0.5)
        np.testing.assert_allclose(out, [math.log(1.5)], rtol=1e-15)

    def test_map_poisson_example(self):
        np.testing.assert_allclose(mirror_map_step(poisson_pair(), [-1.0], [1.0], 0.5), [1.5], rtol=0)

    def test_map_zero_grad(self):
        np.testing.assert_array_equal(mirror_map_step(PRODUCT, np.zeros(3), [0.5, 2.0, 0.4], 0.3),
                                      [0.5, 2.0, 0.4])

    def test_map_gaussian_is_gd(self):
        np.testing.assert_array_equal(mirror_map_step(gaussian_pair(2), [1.0, 0.0], [1.0, 1.0], 0.5),
                                      [0.5, 1.0])

    @settings(max_examples=200)
    @given(st.sampled_from(range(len(PAIRS))), st.data())
    def test_map_consistency(self, idx, data):
        pair = PAIRS[idx]
        lo, hi = pair.primal_box()
        theta = np.array([data.draw(st.floats(l, h)) for l, h in zip(lo, hi)])
        grad = np.array(data.draw(st.lists(st.floats(-2, 2), min_size=pair.dim, max_size=pair.dim)))
        alpha = data.draw(st.floats(1e-3, 0.2))
        mu_next, projected = mirror_map_step(pair, grad, pair.g(theta), alpha, return_projected=True)
        if np.any(projected):
            return
        prox = mirror_step_proximal(pair, grad, theta, alpha)
        np.testing.assert_allclose(pair.h(mu_next), prox, atol=1e-10, rtol=0)

    @pytest.mark.parametrize("pair", PAIRS, ids=lambda p: p.name)
    def test_argmin_certificate(self, pair):
        rng = np.random.default_rng(4)
        for _ in range(10):
            theta = rng.uniform(*pair.primal_box()) * 0.5
            grad = rng.uniform(-1, 1, pair.dim)
            alpha = 0.1
            star = mirror_step_proximal(pair, grad, theta, alpha)
            foc = grad + (pair.g(star) - pair.g(theta)) / alpha
            assert np.max(np.abs(foc)) <= 1e-8

            def objective(x):
                return float(x @ grad + bregman_primal(pair, x, theta) / alpha)

            best = objective(star)
            for _ in range(50):
                assert best <= objective(star + rng.normal(scale=0.05, size=pair.dim)) + 1e-14

    def test_safeguard_projects_and_flags(self):
        out, projected = mirror_map_step(bernoulli_pair(), [5.0], [0.5], 1.0, return_projected=True)
        assert bool(projected)
        np.testing.assert_allclose(out, [DOMAIN_MARGIN], rtol=0)

    def test_rejects_non_finite(self):
        with pytest.raises(StepRejected):
            mirror_map_step(poisson_pair(), [np.nan], [1.0], 0.5)

    def test_rejects_outside_input(self):
        with pytest.raises(DomainError):
            mirror_step_proximal(bernoulli_pair(), [0.0], [np.inf], 0.5)


class TestNaturalStep:
    def test_gaussian_is_gd(self):
        out = natural_gradient_step(gaussian_pair(2), [1.0, 0.0], [1.0, 1.0], 0.5)
        np.testing.assert_array_equal(out, [0.5, 1.0])

    def test_poisson_example(self):
        fam = make_family("poisson")
        grad = grad_log_loss_mean(fam, [2.0], [3.0])
        # oracle: mu - alpha * grad / hess_H with hess_H = 1/mu, evaluated by hand
        np.testing.assert_allclose(natural_gradient_step(fam.pair, grad, [2.0], 0.5), [2.5], rtol=1e-15)

    def test_zero_grad(self):
        np.testing.assert_array_equal(natural_gradient_step(PRODUCT, np.zeros(3), [0.1, 0.2, 0.3], 0.9),
                                      [0.1, 0.2, 0.3])

    def test_linear_solve(self):
        mu = np.array([0.5, 2.0, 0.4])
        grad = np.array([1.0, -1.0, 0.5])
        d = natural_direction(PRODUCT, grad, mu)
        np.testing.assert_allclose(PRODUCT.hess_H(mu) @ d, grad, rtol=1e-14)

    def test_ill_conditioned_rejected(self):
        mu = np.array([1e-7, 1e7])
        with pytest.raises(StepRejected, match="condition"):
            natural_gradient_step(poisson_pair(2), [0.0, 0.0], mu, 0.1)


class TestRetraction:
    def test_identity_matches_natural(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            pair = PAIRS[rng.integers(len(PAIRS))]
            mu = rng.uniform(*pair.dual_box())
            grad = rng.normal(size=pair.dim)
            alpha = rng.uniform(1e-3, 0.5)
            a = natural_gradient_step(pair, grad, mu, alpha, return_projected=True)
            b = retraction_step(pair, grad, mu, alpha, euclidean=True, return_projected=True)
            assert a[0].tobytes() == b[0].tobytes()
            assert bool(a[1]) == bool(b[1])

    def test_riemannian_input(self):
        mu = np.array([2.0])
        r = natural_direction(poisson_pair(), [-0.5], mu)
        np.testing.assert_allclose(retraction_step(poisson_pair(), r, mu, 0.5), [2.5], rtol=1e-15)

    def test_zero_vector(self):
        np.testing.assert_array_equal(retraction_step(PRODUCT, np.zeros(3), [0.1, 1.0, 0.2], 0.3),
                                      [0.1, 1.0, 0.2])

    def test_unknown_retraction(self):
        with pytest.raises(ValueError):
            retraction_step(PRODUCT, np.zeros(3), [0.1, 1.0, 0.2], 0.3, retraction="exp")


class TestRunOnline:
    def test_gaussian_collapse(self):
        fam = make_family("gaussian", 2)
        ys = [Observation(y) for y in sample_stream(fam, [0.5, -1.0], 1000, stream_rng(1))]
        sched = StepSchedule("constant", 0.05)
        init = np.array([0.3, 0.2])
        ref = run_online("gd", fam, ys, sched, init).points
        for opt in ("mirror", "natural", "retraction", "mirror_map"):
            pts = run_online(opt, fam, ys, sched, init).points
            np.testing.assert_allclose(pts, ref, atol=1e-12, rtol=0)

    def test_single_step(self):
        fam = make_family("poisson")
        obs = Observation([2.0])
        traj = run_online("mirror", fam, [obs], StepSchedule(), [0.1])
        assert len(traj) == 1
        assert traj.iterates[0].cumulative_regret_sum == log_loss_natural(fam, [0.1], obs)

    def test_running_mean_example(self):
        fam = make_family("poisson")
        # mu_1 = y_1 consumes the first observation; the remaining steps use 1/t
        ys = [Observation([1.0]), Observation([2.0])]
        traj = run_online("natural", fam, ys, StepSchedule("inv_t", 1.0, offset=1), [3.0])
        np.testing.assert_allclose(traj.final, [2.0], rtol=0, atol=1e-15)

    def test_regret_is_sum_of_losses(self):
        fam = make_family("product")
        ys = sample_stream(fam, [0.0, 3.0, 0.6], 200, stream_rng(2))
        traj = run_online("natural", fam, list(ys), StepSchedule("inv_sqrt_t", 0.3), [0.1, 1.0, 0.5])
        total = 0.0
        for it in traj.iterates:
            total += it.loss
            assert it.cumulative_regret_sum == total
        assert [it.t for it in traj.iterates] == list(range(1, 201))

    def test_loss_recorded_before_update(self):
        fam = make_family("gaussian")
        traj = run_online("gd", fam, [Observation([1.0]), Observation([1.0])],
                          StepSchedule("constant", 1.0), [0.0])
        assert traj.iterates[0].loss == pytest.approx(0.5)
        assert traj.iterates[1].loss == pytest.approx(0.0)

    def test_mirror_records_both(self):
        fam = make_family("bernoulli")
        traj = run_online("mirror", fam, [Observation([1.0])] * 5, StepSchedule("constant", 0.1), [0.0])
        for it in traj.iterates:
            np.testing.assert_allclose(it.mu, fam.pair.g(it.theta), rtol=1e-15)

    def test_callable_losses(self):
        pair = gaussian_pair()
        stream = [lambda p: (float(p @ p), 2 * p)] * 3
        traj = run_online("natural", pair, stream, StepSchedule("constant", 0.25), [1.0])
        np.testing.assert_allclose(traj.final, [0.125])

    def test_projection_flagged(self):
        fam = make_family("bernoulli")
        traj = run_online("natural", fam, [Observation([1.0])] * 3, StepSchedule("inv_t", 1.0), [0.5])
        assert traj.iterates[0].projected
        assert traj.projection_count >= 1
        assert fam.pair.dual_domain.contains(traj.final)

    def test_abort_keeps_partial(self):
        pair = poisson_pair()
        bad = [lambda p: (0.0, np.array([0.0]))] * 2 + [lambda p: (0.0, np.array([np.nan]))]
        with pytest.raises(RunAborted) as info:
            run_online("natural", pair, bad, StepSchedule(), [1.0])
        assert len(info.value.trajectory) == 3
        assert "step 3" in info.value.trajectory.diagnostic

    def test_bad_init(self):
        with pytest.raises(DomainError):
            run_online("natural", make_family("poisson"), [Observation([1.0])], StepSchedule(), [-1.0])
