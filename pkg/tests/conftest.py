import numpy as np
import pytest

from ewls import (
    ConstantAccelerationModel,
    ConstantVelocityModel,
    ConstantWeight,
    ExponentialWeight,
    KinematicModel,
    Measurement,
    StaticModel,
)


def random_spd(rng, n, scale=1.0):
    a = rng.standard_normal((n, n))
    return scale * (a @ a.T + n * np.eye(n))


def random_model(rng, n, drive=False):
    """Kinematic chain of order ``n``, optionally with a constant drive."""
    if n == 1 and not drive:
        return StaticModel(1)
    return KinematicModel(n, float(rng.uniform(-1, 1)) if drive else 0.0)


def random_measurements(rng, n, count, t_max=5.0, p_max=2):
    """Measurements with random validity times, arrival at or after validity."""
    ms = []
    for _ in range(count):
        p = int(rng.integers(1, p_max + 1))
        H = rng.standard_normal((p, n))
        R = random_spd(rng, p, 0.1)
        tv = float(rng.uniform(0, t_max))
        ta = tv + float(rng.uniform(0, 1.0))
        ms.append(Measurement(rng.standard_normal(p), H, R, tv, ta))
    return ms


def random_weight(rng):
    if rng.random() < 0.5:
        return ConstantWeight()
    return ExponentialWeight(float(rng.uniform(0.5, 5.0)))


def rel_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


@pytest.fixture
def rng():
    return np.random.default_rng(42)


BUILTIN_MODELS = [StaticModel(1), StaticModel(3), ConstantVelocityModel(), ConstantAccelerationModel()]


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
