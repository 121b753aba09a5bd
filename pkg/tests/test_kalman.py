import numpy as np
import pytest

from conftest import random_spd, rel_err
from ewls import (
    ConstantAccelerationModel,
    ConstantWeight,
    ExponentialWeight,
    InnovationSingular,
    KalmanState,
    Measurement,
    RandomWalkNoise,
    StaticModel,
    WhiteNoiseAcceleration,
    ZeroNoise,
    init_prior,
    kf_predict,
    kf_update,
    kf_update_information,
    update_insequence,
)


def random_state(rng, n, noise=None, t=0.0):
    model = StaticModel(n) if n == 1 else ConstantAccelerationModel() if n == 3 else StaticModel(n)
    noise = WhiteNoiseAcceleration(float(rng.uniform(0.01, 1.0))) if noise is None else noise
    return KalmanState(rng.standard_normal(n), random_spd(rng, n, 0.3), t, model, noise)


def random_obs(rng, n, t):
    p = int(rng.integers(1, n + 1))
    return Measurement(rng.standard_normal(p), rng.standard_normal((p, n)), random_spd(rng, p, 0.2), t)


class TestProcessNoise:
    def test_random_walk_per_step(self):
        Q = RandomWalkNoise(0.1).covariance(2, 0.0, 0.37)
        np.testing.assert_allclose(Q, 0.01 * np.eye(2), rtol=1e-15)
        np.testing.assert_array_equal(RandomWalkNoise(0.1).covariance(2, 1.0, 1.0), np.zeros((2, 2)))

    def test_white_acceleration_cv(self):
        dt, q = 0.5, 2.0
        Q = WhiteNoiseAcceleration(q).covariance(2, 0.0, dt)
        np.testing.assert_allclose(Q, q * np.array([[dt**3 / 3, dt**2 / 2], [dt**2 / 2, dt]]), rtol=1e-15)

    def test_white_acceleration_psd(self):
        Q = WhiteNoiseAcceleration(1.0).covariance(3, 0.0, 0.2)
        assert np.linalg.eigvalsh(Q).min() > 0


class TestPredict:
    def test_zero_noise_static(self, rng):
        ks = KalmanState(rng.standard_normal(2), np.eye(2), 0.0, StaticModel(2))
        out = kf_predict(ks, 3.0)
        np.testing.assert_array_equal(out.P, ks.P)
        assert out.time == 3.0

    def test_scalar(self):
        ks = KalmanState([0.0], [[1.0]], 0.0, StaticModel(), RandomWalkNoise(0.5))
        assert kf_predict(ks, 1.0).P[0, 0] == pytest.approx(1.25, rel=1e-15)

    def test_backward_rejected(self):
        ks = KalmanState([0.0], [[1.0]], 1.0, StaticModel())
        with pytest.raises(ValueError):
            kf_predict(ks, 0.5)

    def test_information_propagation(self, rng):
        # Y^- = A_b^T (P + A_b Q A_b^T)^-1 A_b with A_b the backward transition
        for _ in range(50):
            ks = random_state(rng, 3)
            dt = float(rng.uniform(0.01, 2.0))
            pred = kf_predict(ks, dt)
            A, _ = ks.model.transition(dt, 0.0)
            Q = ks.noise.covariance(3, 0.0, dt)
            Y = A.T @ np.linalg.inv(ks.P + A @ Q @ A.T) @ A
            assert rel_err(np.linalg.inv(Y), pred.P) <= 1e-9


class TestUpdate:
    def test_large_R(self, rng):
        ks = KalmanState(rng.standard_normal(2), np.eye(2), 0.0, StaticModel(2))
        out = kf_update(ks, Measurement([5.0, -5.0], np.eye(2), 1e12 * np.eye(2), 0.0))
        np.testing.assert_allclose(out.x_hat, ks.x_hat, atol=1e-10)

    def test_scalar(self):
        ks = KalmanState([0.0], [[1.0]], 0.0, StaticModel())
        out = kf_update(ks, Measurement([2.0], [[1.0]], [[1.0]], 0.0))
        assert out.x_hat[0] == pytest.approx(1.0, rel=1e-15)  # K = 0.5
        assert out.P[0, 0] == pytest.approx(0.5, rel=1e-15)

    def test_rejects_other_time(self):
        ks = KalmanState([0.0], [[1.0]], 0.0, StaticModel())
        with pytest.raises(ValueError):
            kf_update(ks, Measurement([1.0], [[1.0]], [[1.0]], 0.5))

    def test_innovation_singular(self):
        ks = KalmanState([0.0], [[-2.0]], 0.0, StaticModel())
        with pytest.raises(InnovationSingular):
            kf_update(ks, Measurement([1.0], [[1.0]], [[1.0]], 0.0))

    def test_joseph_matches_short_form(self, rng):
        for _ in range(100):
            ks = random_state(rng, 3)
            m = random_obs(rng, 3, 0.0)
            a, b = kf_update(ks, m), kf_update(ks, m, joseph=False)
            assert rel_err(a.P, b.P) <= 1e-9
            assert rel_err(a.x_hat, b.x_hat) <= 1e-12

    def test_forms_agree(self, rng):
        for _ in range(100):
            ks = random_state(rng, 3)
            dt = float(rng.uniform(0.01, 2.0))
            m = random_obs(rng, 3, dt)
            cov = kf_update(kf_predict(ks, dt), m)
            inf = kf_update_information(ks, m)
            assert rel_err(inf.P, cov.P) <= 1e-8
            assert rel_err(inf.x_hat, cov.x_hat) <= 1e-8

    def test_information_static(self):
        ks = KalmanState([0.0], [[1.0]], 0.0, StaticModel())
        out = kf_update_information(ks, Measurement([1.0], [[1.0]], [[1.0]], 0.0))
        assert 1 / out.P[0, 0] == pytest.approx(2.0, rel=1e-15)

    def test_information_equals_constant_weight_filter(self, rng):
        model = ConstantAccelerationModel()
        x0, P0 = rng.standard_normal(3), random_spd(rng, 3, 0.3)
        ks = KalmanState(x0, P0, 0.0, model, ZeroNoise())
        fs = init_prior(model, ConstantWeight(), 0.0, x0, P0)
        for k in range(1, 20):
            m = random_obs(rng, 3, 0.1 * k)
            ks = kf_update_information(ks, m)
            fs = update_insequence(fs, m)
            assert rel_err(np.linalg.inv(ks.P), fs.info) <= 1e-8
            assert rel_err(ks.x_hat, fs.x_hat) <= 1e-8


class TestTrajectories:
    def test_form_equivalence_100_steps(self, rng):
        for _ in range(10):
            cov = random_state(rng, 3)
            inf = cov
            t = 0.0
            for _ in range(100):
                t += float(rng.uniform(0.05, 0.5))
                m = Measurement(rng.standard_normal(1), [[1.0, 0.0, 0.0]], [[0.5]], t)
                cov = kf_update(kf_predict(cov, t), m)
                inf = kf_update_information(inf, m)
                assert rel_err(inf.P, cov.P) <= 1e-8
                assert rel_err(inf.x_hat, cov.x_hat) <= 1e-8

    def test_ewif_large_tau_limit(self, rng):
        model = ConstantAccelerationModel()
        x0, P0 = rng.standard_normal(3), np.diag([1.0, 0.5, 0.2])
        ks = KalmanState(x0, P0, 0.0, model, ZeroNoise())
        fs = init_prior(model, ExponentialWeight(1e12), 0.0, x0, P0)
        for k in range(1, 101):
            m = Measurement(rng.standard_normal(1), [[1.0, 0.0, 0.0]], [[0.5]], 0.1 * k)
            ks = kf_update_information(ks, m)
            fs = update_insequence(fs, m)
            assert rel_err(fs.x_hat, ks.x_hat) <= 1e-6
            assert rel_err(fs.covariance, ks.P) <= 1e-6

    def test_ewif_small_tau_limit(self, rng):
        fs = init_prior(StaticModel(2), ExponentialWeight(1e-6), 0.0, np.zeros(2), np.eye(2))
        for k in range(1, 20):
            H = rng.standard_normal((2, 2)) + 3 * np.eye(2)
            m = Measurement(rng.standard_normal(2), H, 0.3 * np.eye(2), 0.1 * k)
            fs = update_insequence(fs, m)
            assert np.linalg.norm(fs.x_hat - np.linalg.solve(H, m.y)) <= 1e-6

    def test_joseph_stays_psd(self, rng):
        ks = KalmanState(np.zeros(3), np.eye(3), 0.0, ConstantAccelerationModel(), WhiteNoiseAcceleration(0.5))
        t = 0.0
        for _ in range(10_000):
            t += float(rng.uniform(0.01, 0.2))
            H = rng.standard_normal((1, 3))
            m = Measurement(rng.standard_normal(1), H, [[float(rng.uniform(1e-3, 1.0))]], t)
            ks = kf_update(kf_predict(ks, t), m)
            assert np.abs(ks.P - ks.P.T).max() <= 1e-10 * np.abs(ks.P).max()
            assert np.linalg.eigvalsh(ks.P).min() >= 0.0
