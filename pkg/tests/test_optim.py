import math

import numpy as np
import pytest

from beamfuse.checkpoint import (CheckpointError, read_checkpoint,
                                 write_checkpoint)
from beamfuse.optim import AdamW, schedule_lr
from beamfuse.params import ParamStore


def make_store(values: dict[str, np.ndarray]) -> ParamStore:
    store = ParamStore(dtype=np.float64)
    for k, v in values.items():
        store.add(k, v)
    return store


def test_zero_grad_zero_decay_is_fixed_point():
    store = make_store({"w": np.array([1.0, -2.0])})
    opt = AdamW(store, base_lr=0.1, total_steps=10)
    store["w"].grad = np.zeros(2)
    opt.step()
    assert np.array_equal(store["w"].data, [1.0, -2.0])


def test_single_step_bias_corrected_unit_ratio():
    store = make_store({"w": np.array([5.0])})
    opt = AdamW(store, base_lr=0.1, total_steps=10, warmup=0)
    store["w"].grad = np.array([1.0])
    opt.step()
    assert abs(store["w"].data[0] - 4.9) < 1e-6


def test_weight_decay_scales_parameter():
    store = make_store({"w": np.array([2.0])})
    opt = AdamW(store, base_lr=0.1, weight_decay=0.5, total_steps=10)
    store["w"].grad = np.zeros(1)
    opt.step()
    assert np.isclose(store["w"].data[0], 2.0 * (1.0 - 0.1 * 0.5))


def test_nonfinite_gradient_names_parameter():
    store = make_store({"deep/w": np.ones(2)})
    opt = AdamW(store, base_lr=0.1, total_steps=10)
    store["deep/w"].grad = np.array([1.0, np.nan])
    with pytest.raises(FloatingPointError, match="deep/w"):
        opt.step()


def test_schedule_warmup_boundary_hits_base():
    assert schedule_lr(5, 5, 100, 1e-3) == pytest.approx(1e-3)


def test_schedule_linear_ramp():
    base = 2.0
    for step in range(5):
        assert schedule_lr(step, 5, 100, base) == pytest.approx(
            base * (step + 1) / 5)


def test_schedule_final_step_near_zero():
    base = 1.0
    total = 5000
    rate = schedule_lr(total - 1, 5, total, base)
    assert rate <= 1e-3 * base


def test_schedule_cosine_midpoint_is_half():
    # halfway through the decay segment
    assert schedule_lr(55, 10, 100, 1.0) == pytest.approx(0.5)


def test_schedule_rejects_bad_steps():
    with pytest.raises(ValueError):
        schedule_lr(100, 5, 100, 1.0)
    with pytest.raises(ValueError):
        schedule_lr(0, 100, 100, 1.0)


def test_two_runs_identical_trajectories():
    def run():
        rng = np.random.default_rng(42)
        store = make_store({"a": rng.normal(size=(4, 4)),
                            "b": rng.normal(size=(4,))})
        opt = AdamW(store, base_lr=0.01, weight_decay=0.1, warmup=2,
                    total_steps=20)
        for step in range(20):
            g = np.random.default_rng(step).normal(size=(4, 4))
            store["a"].grad = g
            store["b"].grad = g.sum(axis=0)
            opt.step()
        return store["a"].data.copy(), store["b"].data.copy()

    a1, b1 = run()
    a2, b2 = run()
    assert np.array_equal(a1, a2)
    assert np.array_equal(b1, b2)


def test_optimizer_state_roundtrip_resumes_exactly(tmp_path):
    store = make_store({"w": np.ones((2, 2))})
    opt = AdamW(store, base_lr=0.05, warmup=1, total_steps=50)
    for step in range(3):
        store["w"].grad = np.full((2, 2), 0.1 * (step + 1))
        opt.step()
    write_checkpoint(tmp_path / "state.ambp", opt.state_arrays())
    snapshot = store["w"].data.copy()

    store2 = make_store({"w": snapshot.copy()})
    opt2 = AdamW(store2, base_lr=0.05, warmup=1, total_steps=50)
    opt2.load_state_arrays(read_checkpoint(tmp_path / "state.ambp"))
    for opt_x, store_x in ((opt, store), (opt2, store2)):
        store_x["w"].grad = np.full((2, 2), 0.7)
        opt_x.step()
    assert np.array_equal(store["w"].data, store2["w"].data)


# ------------------------------------------------------------ checkpoint

def test_checkpoint_roundtrip_bits(tmp_path):
    rng = np.random.default_rng(0)
    arrays = {
        "enc/w": rng.normal(size=(3, 4, 5)).astype(np.float32),
        "enc/b": rng.normal(size=(7,)).astype(np.float64),
    }
    path = tmp_path / "model.ambp"
    write_checkpoint(path, arrays)
    back = read_checkpoint(path)
    assert set(back) == set(arrays)
    for k in arrays:
        assert back[k].dtype == arrays[k].dtype
        assert np.array_equal(back[k], arrays[k])


def test_checkpoint_magic_header(tmp_path):
    path = tmp_path / "model.ambp"
    write_checkpoint(path, {"w": np.zeros(2, dtype=np.float32)})
    assert path.read_bytes()[:4] == b"AMBP"


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.ambp"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(CheckpointError, match="magic"):
        read_checkpoint(path)


def test_checkpoint_rejects_truncation(tmp_path):
    path = tmp_path / "model.ambp"
    write_checkpoint(path, {"w": np.ones(8, dtype=np.float32)})
    blob = path.read_bytes()
    path.write_bytes(blob[:-5])
    with pytest.raises(CheckpointError, match="offset"):
        read_checkpoint(path)


def test_schedule_used_by_optimizer():
    store = make_store({"w": np.array([1.0])})
    opt = AdamW(store, base_lr=1.0, warmup=4, total_steps=10)
    assert opt.current_lr() == pytest.approx(0.25)
    store["w"].grad = np.array([0.0])
    opt.step()
    assert opt.current_lr() == pytest.approx(0.5)
