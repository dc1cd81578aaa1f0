import numpy as np
import pytest

from core_model import SensorGeometry, pixels_to_mm
from jitter_sim import JitterTrajectory, Move, SimConfig


@pytest.fixture
def geom():
    return SensorGeometry()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def short_config():
    """A few seconds of fast, single-axis jitter with the sync spike one second in."""
    return SimConfig(band='fast', axes='axis1', stars=4, seed=7, duration_s=3.0,
                     baseline_s=0.5, homing_s=0.5)


@pytest.fixture
def vibrate_commands():
    """Relative moves of the plain vibrate macro: +a then -a on every axis, `n` times."""
    def commands(amplitude, n, axes=(1, 2)):
        out = []
        for _ in range(n):
            for sign in (1.0, -1.0):
                for axis in axes:
                    out.append((axis, sign * amplitude))
        return out
    return commands


@pytest.fixture
def sweep_trajectory(geom):
    """
    Star sweeps of `length_px` back and forth at `speed_px_s` along x, starting at t=0, with
    near-infinite acceleration so the motion is piecewise constant-velocity.
    """
    def build(length_px=400.0, speed_px_s=100.0, n_sweeps=5):
        length = pixels_to_mm(length_px, geom)
        velocity = pixels_to_mm(speed_px_s, geom)
        moves = []
        t, pos = 0.0, (0.0, 0.0)
        for k in range(n_sweeps):
            step = length if k % 2 == 0 else -length
            move = Move(t, pos, (step, 0.0), velocity, 1e9)
            moves.append(move)
            t, pos = move.t_settled_us, move.end
        duration = n_sweeps * length_px / speed_px_s
        return JitterTrajectory(moves, duration, jitter_start_us=0)
    return build
