import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from amplitude_spde.amplitude import solve_first_order
from amplitude_spde.errors import DimensionError, DomainError
from amplitude_spde.model import allen_cahn_model
from amplitude_spde.noise import (
    NoisePath, dump_path, load_path, rescale_to_slow, sample_path, sample_paths,
)
from amplitude_spde.spde import solve_spde


def test_determinism():
    a = sample_path(0.01, 500, 2, seed=42)
    b = sample_path(0.01, 500, 2, seed=42)
    assert np.array_equal(a.increments, b.increments)
    assert a == b
    assert not np.array_equal(a.increments, sample_path(0.01, 500, 2, seed=43).increments)


def test_samples_are_independent_streams():
    batch = sample_paths(0.1, 50, 1, seed=5, sample_indices=[3, 0, 7])
    for row, i in zip(batch.increments, [3, 0, 7]):
        assert np.array_equal(row, sample_path(0.1, 50, 1, seed=5, sample_index=i).increments)
    assert batch.batch_shape == (3,)


@pytest.mark.parametrize("seed", range(5))
def test_increment_statistics(seed):
    dt = 0.02
    inc = sample_path(dt, 100_000, 1, seed=seed).increments
    assert 0.99 <= inc.var() / dt <= 1.01
    assert abs(inc.mean()) <= 3 * np.sqrt(dt / inc.size)


@pytest.mark.parametrize("dt", [0.0, -1.0])
def test_rejects_nonpositive_dt(dt):
    with pytest.raises(DomainError):
        sample_path(dt, 10)


def test_rescale_example():
    path = NoisePath(0.2, np.array([[0.5]]))
    slow = rescale_to_slow(path, 0.1)
    assert slow.increments[0, 0] == pytest.approx(0.05, abs=1e-17)
    assert slow.dt == pytest.approx(0.01 * 0.2, abs=1e-18)
    assert slow.n_steps == path.n_steps
    assert slow.time_scale == "slow"


def test_rescale_identity_at_one():
    path = sample_path(0.3, 20, 2, seed=1)
    slow = rescale_to_slow(path, 1.0)
    assert np.array_equal(slow.increments, path.increments)
    assert slow.dt == path.dt


@given(st.floats(1e-3, 0.999), st.integers(0, 2**32))
def test_quadratic_variation_identity(eps, seed):
    path = sample_path(0.5, 64, 1, seed=seed)
    slow = rescale_to_slow(path, eps)
    assert np.sum(slow.increments**2) == pytest.approx(eps**2 * np.sum(path.increments**2), rel=1e-14)


def test_dump_roundtrip(tmp_path):
    path = sample_path(0.125, 33, 3, seed=2**63 + 5)
    dump_path(path, tmp_path / "w.bin")
    raw = (tmp_path / "w.bin").read_bytes()
    assert len(raw) == 32 + 33 * 3 * 8
    assert load_path(tmp_path / "w.bin") == path


def test_load_rejects_truncated(tmp_path):
    dump_path(sample_path(0.1, 4, 1), tmp_path / "w.bin")
    (tmp_path / "w.bin").write_bytes((tmp_path / "w.bin").read_bytes()[:-8])
    with pytest.raises(DimensionError):
        load_path(tmp_path / "w.bin")


class CountingPath(NoisePath):
    """Records the order in which solvers read increments."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        object.__setattr__(self, "log", [])

    def increment(self, n):
        self.log.append(n)
        return super().increment(n)


def test_spde_and_amplitude_consume_same_increments():
    eps = 0.1
    model = allen_cahn_model(20.0, n_modes=8, n_quad=64)
    base = sample_path(0.05, 40, 1, seed=9)
    fast = CountingPath(base.dt, base.increments, base.seed)
    slow_base = rescale_to_slow(base, eps)
    slow = CountingPath(slow_base.dt, slow_base.increments, slow_base.seed, "slow")
    solve_spde(model, eps * model.unit(1), fast, eps)
    solve_first_order(model, 1.0, slow, eps)
    assert fast.log == slow.log == list(range(40))
    assert np.array_equal(slow.increments, eps * fast.increments)
