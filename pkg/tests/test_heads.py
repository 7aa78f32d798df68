"""Tests for the token-mixing heads, op counts and orthogonality probing."""

import math

import numpy as np
import pytest

from fwformer.errors import ConfigError, ContractError, EmptyInputError
from fwformer.heads import (
    FWHead,
    SSAHead,
    build_head,
    count_ops,
    measure_orthogonality,
    orthogonality_score,
    ssa_product,
    trend_slope,
    window_ratio,
)
from fwformer.model import FWFormer
from fwformer.shared import LIFParams, MixerKind, MixerSpec, MultOrder
from fwformer.spiking import SpikeTrain
from fwformer.tensor import Tensor

from .conftest import ConfigFactory

LIF = LIFParams()


def _spikes(
    rng: np.random.Generator, shape: tuple[int, ...], p: float = 0.3
) -> Tensor:
    return Tensor((rng.random(shape) < p).astype(np.float64))


def _slope(xs: list[int], ys: list[int]) -> float:
    slope, _ = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(slope)


class TestSSAProduct:
    """Tests for the softmax-free attention product."""

    def test_two_by_two_example(self) -> None:
        """Test Q·Kᵀ·V on hand-sized binary matrices."""
        q = Tensor([[1.0, 0.0], [1.0, 1.0]])
        k = Tensor([[1.0, 1.0], [0.0, 1.0]])
        v = Tensor([[1.0, 0.0], [0.0, 1.0]])
        out = ssa_product(q, k, v, 1.0, MultOrder.QK_FIRST)
        np.testing.assert_array_equal(out.data, [[1.0, 0.0], [2.0, 1.0]])

    def test_association_orders_agree(self, rng: np.random.Generator) -> None:
        """Test (Q·Kᵀ)·V == Q·(Kᵀ·V) on batched head tensors."""
        q, k, v = (_spikes(rng, (2, 3, 4, 16, 8)) for _ in range(3))
        first = ssa_product(q, k, v, 0.125, MultOrder.QK_FIRST)
        second = ssa_product(q, k, v, 0.125, MultOrder.KV_FIRST)
        np.testing.assert_allclose(first.data, second.data, atol=1e-12)

    def test_unscaled_entries_are_counts(self, rng: np.random.Generator) -> None:
        """Test that binary inputs give non-negative integer products."""
        q, k, v = (_spikes(rng, (16, 8)) for _ in range(3))
        out = ssa_product(q, k, v, 1.0, MultOrder.QK_FIRST).data
        assert np.all(out >= 0)
        np.testing.assert_array_equal(out, np.round(out))


class TestHeads:
    """Tests for head construction and the shared head contract."""

    @pytest.mark.parametrize(
        "name", ["ssa", "fft1d", "fft2d", "wt-haar", "wt-db1", "wt-combined"]
    )
    def test_shape_and_binary_output(self, rng: np.random.Generator, name: str) -> None:
        """Test that every head maps [T, B, N, D] spikes to binary spikes."""
        spec = MixerSpec.from_name(name, heads=2)
        head = build_head(rng, spec, 8, LIF)
        x = SpikeTrain(_spikes(rng, (2, 3, 16, 8)))
        out = head(x)
        assert out.shape == (2, 3, 16, 8)
        assert set(np.unique(out.spikes.data)) <= {0.0, 1.0}

    @pytest.mark.parametrize("name", ["ssa", "fft1d", "wt-haar", "wt-combined"])
    def test_silent_input(self, rng: np.random.Generator, name: str) -> None:
        """Test that zero spikes in give zero spikes out."""
        head = build_head(rng, MixerSpec.from_name(name, heads=2), 8, LIF)
        out = head(SpikeTrain(Tensor(np.zeros((2, 2, 16, 8)))))
        assert out.spikes.data.sum() == 0

    def test_rejects_graded_input(self, rng: np.random.Generator) -> None:
        """Test that heads only accept binary spikes."""
        head = build_head(rng, MixerSpec.from_name("fft1d"), 8, LIF)
        with pytest.raises(ContractError):
            head(SpikeTrain(Tensor(np.full((2, 2, 16, 8), 0.5))))

    def test_fw_head_refuses_ssa(self) -> None:
        """Test that the FW head cannot be built for an SSA spec."""
        with pytest.raises(ConfigError):
            FWHead(MixerSpec(kind=MixerKind.SSA), 8, LIF)

    def test_fft_head_concentrates_dc(self) -> None:
        """Test that constant spikes mix into the DC token only."""
        spec = MixerSpec.from_name("fft1d")
        head = build_head(np.random.default_rng(0), spec, 4, LIF)
        mixed = head.mix(Tensor(np.ones((1, 1, 8, 4)))).data[0, 0]
        np.testing.assert_allclose(mixed[0], np.full(4, 8.0), atol=1e-12)
        np.testing.assert_allclose(mixed[1:], 0.0, atol=1e-12)

    def test_combined_reduces_to_single_basis(self, rng: np.random.Generator) -> None:
        """Test the combined head with (1, 0, 0) against the bior1.1 head."""
        combined = FWHead(MixerSpec.from_name("wt-combined"), 8, LIF)
        for coeff, value in zip(combined.coeffs, (1.0, 0.0, 0.0), strict=True):
            coeff.assign(np.array(value))
        single = FWHead(MixerSpec.from_name("wt-bior11"), 8, LIF)
        x = _spikes(rng, (2, 2, 16, 8))
        np.testing.assert_allclose(
            combined.mix(x).data, single.mix(x).data, atol=1e-12
        )

    def test_learnable_mixing_flags(self, rng: np.random.Generator) -> None:
        """Test which heads own trainable mixing parameters."""
        ssa = build_head(rng, MixerSpec(heads=2), 8, LIF)
        fixed = build_head(rng, MixerSpec.from_name("wt-haar"), 8, LIF)
        combined = build_head(rng, MixerSpec.from_name("wt-combined"), 8, LIF)
        assert isinstance(ssa, SSAHead)
        assert ssa.has_learnable_mixing
        assert not fixed.has_learnable_mixing
        assert fixed.mixing_parameters() == []
        assert combined.has_learnable_mixing
        assert len(combined.mixing_parameters()) == 3


class TestParameterAudit:
    """Tests for the parameter gap between SSA and FW models."""

    @pytest.mark.parametrize("name", ["fft1d", "fft2d", "wt-haar"])
    def test_fixed_basis_saves_four_d_squared(
        self, make_config: ConfigFactory, name: str
    ) -> None:
        """Test that replacing SSA removes exactly 4·D² parameters per layer."""
        ssa_cfg = make_config("ssa", L=2)
        fw_cfg = make_config(name, L=2)
        ssa, fw = FWFormer(ssa_cfg), FWFormer(fw_cfg)
        d = ssa_cfg.D
        assert ssa.num_parameters() - fw.num_parameters() == 4 * d * d * 2
        assert ssa.head_parameter_count() == 4 * d * d * 2
        assert fw.head_parameter_count() == 0

    def test_combined_head_has_three_coefficients(
        self, make_config: ConfigFactory
    ) -> None:
        """Test that the combined head adds a, b and c per layer."""
        model = FWFormer(make_config("wt-combined", L=2))
        assert model.head_parameter_count() == 3 * 2


class TestCountOps:
    """Tests for the closed-form mixer op counts at N=64, D=256."""

    def test_ssa_counts(self) -> None:
        """Test QK-first, KV-first and projection counts with 8 heads."""
        qk = count_ops(MixerSpec(heads=8), 64, 256)
        kv = count_ops(MixerSpec(heads=8, mult_order=MultOrder.KV_FIRST), 64, 256)
        assert qk.mixing == 2_097_152
        assert kv.mixing == 1_048_576
        assert qk.projection == kv.projection == 12_582_912
        assert qk.total == 2_097_152 + 12_582_912

    def test_fourier_counts(self) -> None:
        """Test 1D and 2D FFT butterfly counts."""
        assert count_ops(MixerSpec.from_name("fft1d"), 64, 256).mixing == 49_152
        assert count_ops(MixerSpec.from_name("fft2d"), 64, 256).mixing == 114_688

    def test_wavelet_counts(self) -> None:
        """Test wavelet counts in one and two dimensions and the combination."""
        haar2 = MixerSpec.from_name("wt-haar")
        haar1 = MixerSpec.from_name("wt-haar", wt_dims=1)
        combined = MixerSpec.from_name("wt-combined")
        assert count_ops(haar2, 64, 256).mixing == 131_072
        assert count_ops(haar1, 64, 256).mixing == 65_536
        assert count_ops(combined, 64, 256).mixing == 442_368
        assert count_ops(haar2, 64, 256).projection == 0

    def test_doubling_ratios(self) -> None:
        """Test ×4 for QK-first SSA and 7/3 for FFT1D when N goes 64 -> 128."""
        ssa, fft1d = MixerSpec(), MixerSpec.from_name("fft1d")
        assert count_ops(ssa, 128, 256).mixing / count_ops(ssa, 64, 256).mixing == 4
        ratio = count_ops(fft1d, 128, 256).mixing / count_ops(fft1d, 64, 256).mixing
        assert ratio == pytest.approx(7 / 3)

    def test_log_log_slopes(self) -> None:
        """Test growth exponents over N = 64 ... 4096."""
        ns = [64 * 2**i for i in range(7)]
        ssa = [count_ops(MixerSpec(), n, 256).mixing for n in ns]
        fft1d = [count_ops(MixerSpec.from_name("fft1d"), n, 256).mixing for n in ns]
        assert _slope(ns, ssa) == pytest.approx(2.0)
        assert 1.0 < _slope(ns, fft1d) < 1.25

    def test_padded_lengths(self) -> None:
        """Test that non-power-of-two axes count at their padded size."""
        spec = MixerSpec.from_name("fft1d")
        assert count_ops(spec, 50, 8).mixing == count_ops(spec, 64, 8).mixing


class TestOrthogonality:
    """Tests for the basis orthogonality score and its measurement."""

    def test_identity_is_orthogonal(self) -> None:
        """Test that Q = K = I scores 0."""
        assert orthogonality_score(np.eye(4), np.eye(4)) == pytest.approx(0.0)

    def test_identical_rows(self) -> None:
        """Test that two identical rows score 2."""
        ones = np.ones((2, 3))
        assert orthogonality_score(ones, ones) == pytest.approx(2.0)

    def test_matches_double_loop(self, rng: np.random.Generator) -> None:
        """Test against an explicit pairwise sum."""
        q = (rng.random((6, 4)) < 0.5).astype(float)
        k = (rng.random((6, 4)) < 0.5).astype(float)
        a = q @ k.T
        rows = [r / np.linalg.norm(r) for r in a if np.linalg.norm(r) > 0]
        expected = sum(
            abs(float(rows[i] @ rows[j]))
            for i in range(len(rows))
            for j in range(len(rows))
            if i != j
        )
        assert orthogonality_score(q, k) == pytest.approx(expected)

    def test_invariances(self, rng: np.random.Generator) -> None:
        """Test invariance to row permutation and to scaling."""
        q, k = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
        base = orthogonality_score(q, k)
        assert orthogonality_score(q[::-1], k) == pytest.approx(base)
        assert orthogonality_score(3.0 * q, k) == pytest.approx(base)

    def test_shape_mismatch(self) -> None:
        """Test that Q and K must share a shape."""
        with pytest.raises(ContractError):
            orthogonality_score(np.ones((2, 3)), np.ones((3, 3)))

    def test_measure(self, make_config: ConfigFactory, images: Tensor) -> None:
        """Test that probing scores a batch without moving running statistics."""
        model = FWFormer(make_config("ssa"))
        before = [s.mean.copy() for _, s in model.named_stats()]
        score = measure_orthogonality(model, Tensor((images.data > 0.5).astype(float)))
        assert math.isfinite(score)
        assert score >= 0.0
        assert model.training
        for stats, mean in zip(model.named_stats(), before, strict=True):
            np.testing.assert_array_equal(stats[1].mean, mean)

    def test_measure_needs_ssa(
        self, make_config: ConfigFactory, images: Tensor
    ) -> None:
        """Test that FW models have nothing to measure."""
        model = FWFormer(make_config("fft1d"))
        with pytest.raises(ContractError):
            measure_orthogonality(model, images)

    def test_trend_helpers(self) -> None:
        """Test slope and window ratio of a rising trace."""
        values = [float(v) for v in range(1, 21)]
        assert trend_slope(values) == pytest.approx(1.0)
        assert window_ratio(values, 0.1) == pytest.approx(19.5 / 1.5)
        with pytest.raises(EmptyInputError):
            trend_slope([1.0])
        with pytest.raises(ContractError):
            window_ratio([0.0, 1.0, 2.0], 0.5)
