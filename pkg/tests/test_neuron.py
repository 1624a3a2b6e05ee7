import numpy as np
import pytest

from spikedrive.errors import ShapeError
from spikedrive.neuron import LIFParams, LIFState, lif_step, sn_forward, surrogate_grad
from spikedrive.tensors import DenseTensor


def scalar_lif_sim(xs, u_th=1.0, beta=0.5, v_reset=0.0, s=1.0):
    """Independent scalar simulator of the membrane recurrence."""
    h = v_reset
    spikes = []
    for x in xs:
        u = h + x
        fired = 1 if u - s * u_th >= 0 else 0
        h = v_reset * fired + beta * u * (1 - fired)
        spikes.append(fired)
    return spikes


class TestLIFParams:
    def test_invariants(self):
        with pytest.raises(ValueError):
            LIFParams(u_th=0.0)
        with pytest.raises(ValueError):
            LIFParams(beta=1.0)
        with pytest.raises(ValueError):
            LIFParams(beta=0.0)
        with pytest.raises(ValueError):
            LIFParams(threshold_scale=0.0)

    def test_default_window_tracks_threshold(self):
        assert LIFParams(u_th=2.0).window == 1.0
        assert LIFParams(u_th=2.0, surrogate_window=0.3).window == 0.3


class TestLifStep:
    def test_fire_and_reset(self):
        p = LIFParams(u_th=1.0, beta=0.5, v_reset=0.0)
        state = LIFState.initial((1,), p)
        s, new = lif_step(p, state, DenseTensor(np.array([1.5])))
        assert s.data[0] == 1
        assert new.h.data[0] == 0.0

    def test_subthreshold_decay(self):
        p = LIFParams(u_th=1.0, beta=0.5, v_reset=0.0)
        s, new = lif_step(p, LIFState.initial((1,), p), DenseTensor(np.array([0.4])))
        assert s.data[0] == 0
        assert new.h.data[0] == pytest.approx(0.2)

    def test_exact_threshold_fires(self):
        p = LIFParams(u_th=1.0)
        s, _ = lif_step(p, LIFState.initial((1,), p), DenseTensor(np.array([1.0])))
        assert s.data[0] == 1  # step function includes zero

    def test_nonzero_reset(self):
        p = LIFParams(u_th=1.0, beta=0.5, v_reset=0.3)
        state = LIFState.initial((1,), p)
        assert state.h.data[0] == 0.3
        s, new = lif_step(p, state, DenseTensor(np.array([2.0])))
        assert s.data[0] == 1 and new.h.data[0] == pytest.approx(0.3)

    def test_shape_mismatch(self):
        p = LIFParams()
        with pytest.raises(ShapeError):
            lif_step(p, LIFState.initial((2,), p), DenseTensor(np.zeros(3)))

    def test_monotone_in_input(self):
        # raising any input element never turns a spike off
        rng = np.random.default_rng(0)
        p = LIFParams()
        for _ in range(50):
            x = rng.normal(0, 1, 6)
            s0, _ = lif_step(p, LIFState.initial((6,), p), DenseTensor(x))
            bigger = x + rng.uniform(0, 1, 6)
            s1, _ = lif_step(p, LIFState.initial((6,), p), DenseTensor(bigger))
            assert np.all(s1.data >= s0.data)


class TestSnForward:
    def test_t1_equals_single_step(self):
        p = LIFParams()
        x = np.random.default_rng(1).normal(0, 1, (1, 3, 3))
        seq = sn_forward(p, DenseTensor(x))
        one, _ = lif_step(p, LIFState.initial((3, 3), p), DenseTensor(x[0]))
        assert np.array_equal(seq.data[0], one.data)

    def test_constant_drive_fires_on_third_step(self):
        # hand simulation of the recurrence: U = 0.6, 0.9, 1.05 -> fire last
        p = LIFParams(u_th=1.0, beta=0.5, v_reset=0.0)
        x = DenseTensor(np.full((3, 1), 0.6))
        got = sn_forward(p, x).data[:, 0]
        assert scalar_lif_sim([0.6, 0.6, 0.6]) == [0, 0, 1]
        assert got.tolist() == [0, 0, 1]

    def test_matches_scalar_simulator_on_random_sequences(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            t = int(rng.integers(1, 8))
            beta = float(rng.uniform(0.1, 0.9))
            u_th = float(rng.uniform(0.3, 2.0))
            v_reset = float(rng.uniform(-0.2, 0.4))
            xs = rng.normal(0, 1, t)
            p = LIFParams(u_th=u_th, beta=beta, v_reset=v_reset)
            got = sn_forward(p, DenseTensor(xs.reshape(t, 1))).data[:, 0].tolist()
            assert got == scalar_lif_sim(xs, u_th, beta, v_reset)

    def test_zero_input_never_spikes(self):
        p = LIFParams()
        out = sn_forward(p, DenseTensor(np.zeros((5, 2, 2))))
        assert out.data.sum() == 0

    def test_output_is_binary_for_any_scale(self):
        rng = np.random.default_rng(3)
        out = sn_forward(LIFParams(), DenseTensor(rng.normal(0, 100, (4, 5))))
        assert set(np.unique(out.data)) <= {0, 1}

    def test_scaled_threshold_single_step_identity(self):
        # Hea(X - s*u_th) == Hea(X/s - u_th) for a single memoryless step
        rng = np.random.default_rng(4)
        for s in (0.125, 0.5, 2.0):
            x = rng.normal(0, 2, (1, 16))
            a = sn_forward(LIFParams(threshold_scale=s), DenseTensor(x))
            b = sn_forward(LIFParams(), DenseTensor(x / s))
            assert np.array_equal(a.data, b.data)


class TestSurrogate:
    def test_center_of_window(self):
        p = LIFParams(u_th=1.0, surrogate_window=0.5)
        assert surrogate_grad(p, 1.0) == pytest.approx(1.0)

    def test_outside_window(self):
        p = LIFParams(u_th=1.0, surrogate_window=0.5)
        assert surrogate_grad(p, 2.0) == 0.0
        assert surrogate_grad(p, 1.0 + 2 * p.window) == 0.0

    def test_symmetry(self):
        p = LIFParams(u_th=1.0, surrogate_window=0.5)
        for delta in (0.1, 0.25, 0.49):
            assert surrogate_grad(p, 1.0 + delta) == surrogate_grad(p, 1.0 - delta)

    def test_scaled_threshold_moves_center(self):
        p = LIFParams(u_th=1.0, threshold_scale=0.25, surrogate_window=0.1)
        assert surrogate_grad(p, 0.25) == pytest.approx(5.0)
        assert surrogate_grad(p, 1.0) == 0.0

    def test_vector_input(self):
        p = LIFParams(surrogate_window=0.5)
        g = surrogate_grad(p, np.array([1.0, 9.0]))
        assert g.tolist() == [1.0, 0.0]
