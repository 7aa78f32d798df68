"""Tests for LIF dynamics and surrogate spikes."""

import numpy as np
import pytest

from fwformer.errors import ContractError, DimensionError, EmptyInputError
from fwformer.shared import LIFParams
from fwformer.spiking import (
    LIFState,
    heaviside,
    is_binary,
    lif_run,
    lif_step,
    require_binary,
    spike_or,
    surrogate_derivative,
    surrogate_spike,
)
from fwformer.tensor import Tape, Tensor, backward

P = LIFParams()


def _reference_run(x: np.ndarray, p: LIFParams) -> np.ndarray:
    """Plain scalar loop of the same recurrence."""
    v = np.full(x.shape[1:], p.v_reset)
    out = np.zeros_like(x)
    for t in range(x.shape[0]):
        h = v + (x[t] - (v - p.v_reset)) / p.tau
        s = (h - p.v_th >= 0).astype(float)
        v = h * (1 - s) + p.v_reset * s
        out[t] = s
    return out


class TestLIFStep:
    """Tests for a single neuron update."""

    def test_charge_fire_and_reset(self) -> None:
        """Test x=2.5 from rest: H=1.25 fires and resets to v_reset."""
        state = LIFState(Tensor([0.0]))
        s, nxt = lif_step(Tensor([2.5]), state, P)
        assert s.data.tolist() == [1.0]
        assert nxt.v.data.tolist() == [0.0]

    def test_sub_threshold_keeps_charge(self) -> None:
        """Test that H below threshold carries over as the next potential."""
        s, nxt = lif_step(Tensor([1.0]), LIFState(Tensor([0.0])), P)
        assert s.data.tolist() == [0.0]
        assert nxt.v.data.tolist() == [0.5]

    def test_shape_mismatch(self) -> None:
        """Test that input and membrane must match."""
        with pytest.raises(DimensionError):
            lif_step(Tensor(np.zeros(3)), LIFState(Tensor(np.zeros(2))), P)


class TestLIFRun:
    """Tests for lif_run over the time axis."""

    def test_constant_drive(self) -> None:
        """Test x=1.5: H goes 0.75, 1.125 (fire), 0.75, 1.125 (fire)."""
        train = lif_run(Tensor(np.full((4, 1), 1.5)), P)
        assert train.spikes.data[:, 0].tolist() == [0.0, 1.0, 0.0, 1.0]
        assert train.T == 4
        assert train.rate == pytest.approx(0.5)

    def test_saturating_input(self) -> None:
        """Test that x >= 2·v_th fires on every step."""
        train = lif_run(Tensor(np.full((6, 5), 3.0)), P)
        np.testing.assert_array_equal(train.spikes.data, np.ones((6, 5)))

    def test_zero_input(self) -> None:
        """Test that a silent input never fires."""
        train = lif_run(Tensor(np.zeros((6, 5))), P)
        assert train.spikes.data.sum() == 0

    def test_matches_reference_loop(self, rng: np.random.Generator) -> None:
        """Test the vectorised run against a plain loop on random drive."""
        x = rng.uniform(-1, 4, (8, 10000))
        train = lif_run(Tensor(x), P)
        np.testing.assert_array_equal(train.spikes.data, _reference_run(x, P))
        assert is_binary(train.spikes)

    def test_reset_is_exact(self, rng: np.random.Generator) -> None:
        """Test that every fired element restarts at exactly v_reset."""
        p = LIFParams(v_reset=-0.25)
        state = LIFState(Tensor(np.full(10000, p.v_reset)))
        for _ in range(8):
            s, state = lif_step(Tensor(rng.uniform(-1, 4, 10000)), state, p)
            fired = s.data == 1.0
            assert np.all(state.v.data[fired] == p.v_reset)

    def test_monotone_in_drive(self) -> None:
        """Test that more constant drive never means fewer spikes."""
        drive = np.linspace(-1, 4, 10000)
        train = lif_run(Tensor(np.broadcast_to(drive, (8, 10000))), P)
        counts = train.spikes.data.sum(axis=0)
        assert np.all(np.diff(counts) >= 0)

    def test_empty_time_axis(self) -> None:
        """Test that zero time steps is an empty-input error."""
        with pytest.raises(EmptyInputError):
            lif_run(Tensor(np.zeros((0, 3))), P)
        with pytest.raises(EmptyInputError):
            lif_run(Tensor(1.0), P)


class TestSurrogate:
    """Tests for the surrogate spike function."""

    def test_forward_is_heaviside(self) -> None:
        """Test G(0) = 1 and the step shape."""
        out = surrogate_spike(Tensor([-1.0, 0.0, 1.0]))
        assert out.data.tolist() == [0.0, 1.0, 1.0]
        assert heaviside(np.array([-1e-12])).tolist() == [0.0]

    def test_derivative_peak(self) -> None:
        """Test σ'(0) = α/2 and symmetry."""
        assert surrogate_derivative(np.array(0.0), 2.0) == pytest.approx(1.0)
        assert surrogate_derivative(np.array(0.3), 2.0) == pytest.approx(
            surrogate_derivative(np.array(-0.3), 2.0)
        )

    def test_two_step_bptt(self) -> None:
        """Test gradients through two steps against the hand-derived chain.

        x0=1.0, x1=1.2 gives H0=0.5 and H1=0.85, so nothing fires and
        dH1/dx0 = (1 - 1/tau)·(1 - S0)·(1/tau).
        """
        x = Tensor([[1.0], [1.2]], requires_grad=True)
        with Tape():
            loss = lif_run(x, P).spikes.sum()
        backward(loss)
        d0 = float(surrogate_derivative(np.array(0.5 - 1.0), 2.0))
        d1 = float(surrogate_derivative(np.array(0.85 - 1.0), 2.0))
        assert x.grad is not None
        assert x.grad[1, 0] == pytest.approx(d1 * 0.5, abs=1e-10, rel=0)
        expected = d0 * 0.5 + d1 * 0.5 * 1.0 * 0.5
        assert x.grad[0, 0] == pytest.approx(expected, abs=1e-10, rel=0)


class TestSpikeHelpers:
    """Tests for spike_or and the binary checks."""

    def test_spike_or_clamps(self) -> None:
        """Test that coinciding spikes stay 1 and gradients pass straight through."""
        a = Tensor([1.0, 0.0, 1.0, 0.0], requires_grad=True)
        b = Tensor([1.0, 1.0, 0.0, 0.0], requires_grad=True)
        with Tape():
            out = spike_or(a, b)
            loss = out.sum()
        backward(loss)
        assert out.data.tolist() == [1.0, 1.0, 1.0, 0.0]
        assert a.grad is not None and b.grad is not None
        np.testing.assert_array_equal(a.grad, np.ones(4))
        np.testing.assert_array_equal(b.grad, np.ones(4))

    def test_require_binary(self) -> None:
        """Test that graded values are rejected."""
        require_binary(Tensor([0.0, 1.0]), "test")
        with pytest.raises(ContractError):
            require_binary(Tensor([0.0, 0.5]), "test")
