"""Tests for the FFT, the DWT and the FW token mixers."""

import math

import numpy as np
import pytest

from fwformer.errors import ConfigError, ContractError
from fwformer.tensor import Tensor, finite_diff_check
from fwformer.transforms import (
    BASES,
    BIOR11,
    DB1,
    HAAR,
    CombinedBasis,
    WaveletBasis,
    basis_matrix,
    combined_mix,
    dft_naive,
    dwt_full,
    fft,
    fourier_mix_1d,
    fourier_mix_2d,
    get_basis,
    idwt_full,
    next_power_of_two,
    wavelet_mix_1d,
    wavelet_mix_2d,
)

S = math.sqrt(0.5)


class TestFFT:
    """Tests for the radix-2 FFT."""

    def test_dft_examples(self) -> None:
        """Test the DFT of an impulse and of a constant."""
        np.testing.assert_allclose(dft_naive([1, 0, 0, 0]), np.ones(4), atol=1e-12)
        np.testing.assert_allclose(dft_naive([1, 1, 1, 1]), [4, 0, 0, 0], atol=1e-12)

    @pytest.mark.parametrize("n", [2**k for k in range(1, 11)])
    def test_matches_naive_dft(self, rng: np.random.Generator, n: int) -> None:
        """Test FFT against the O(N^2) oracle up to N=1024."""
        x = rng.normal(size=n) + 1j * rng.normal(size=n)
        np.testing.assert_allclose(fft(x), dft_naive(x), atol=1e-9, rtol=0)

    def test_axis_argument(self, rng: np.random.Generator) -> None:
        """Test transforming columns of a matrix."""
        x = rng.normal(size=(16, 3))
        np.testing.assert_allclose(fft(x, axis=0), dft_naive(x), atol=1e-10)

    def test_round_trip(self, rng: np.random.Generator) -> None:
        """Test that the inverse FFT undoes the forward FFT."""
        x = rng.normal(size=(4, 64))
        np.testing.assert_allclose(fft(fft(x), inverse=True), x, atol=1e-12)

    def test_parseval(self, rng: np.random.Generator) -> None:
        """Test sum |x|^2 == sum |X|^2 / N."""
        x = rng.normal(size=256)
        spectrum = fft(x)
        assert np.sum(np.abs(spectrum) ** 2) / 256 == pytest.approx(np.sum(x * x))

    def test_non_power_of_two(self) -> None:
        """Test that raw FFT calls need a power-of-two length."""
        with pytest.raises(ContractError):
            fft(np.ones(6))

    def test_next_power_of_two(self) -> None:
        """Test padding targets."""
        assert [next_power_of_two(n) for n in (1, 2, 3, 5, 64, 65)] == [
            1,
            2,
            4,
            8,
            64,
            128,
        ]


class TestFourierMixers:
    """Tests for the real-part Fourier mixers."""

    def test_constant_column(self) -> None:
        """Test that a constant sequence lands entirely on the DC row."""
        out = fourier_mix_1d(Tensor(np.ones((8, 1))))
        expected = np.zeros((8, 1))
        expected[0, 0] = 8.0
        np.testing.assert_allclose(out.data, expected, atol=1e-12)

    def test_two_dim_delta(self) -> None:
        """Test that a corner delta spreads to all ones."""
        x = np.zeros((4, 8))
        x[0, 0] = 1.0
        np.testing.assert_allclose(
            fourier_mix_2d(Tensor(x)).data, np.ones((4, 8)), atol=1e-12
        )

    def test_two_dim_matches_nested_dft(self, rng: np.random.Generator) -> None:
        """Test Re(F_N x F_D) against two passes of the naive DFT."""
        x = rng.normal(size=(8, 16))
        expected = np.real(dft_naive(dft_naive(x).T).T)
        np.testing.assert_allclose(
            fourier_mix_2d(Tensor(x)).data, expected, atol=1e-9
        )

    def test_batched_leading_axes(self, rng: np.random.Generator) -> None:
        """Test that leading [T, B] axes are mixed independently."""
        x = rng.normal(size=(2, 3, 8, 4))
        out = fourier_mix_1d(Tensor(x)).data
        np.testing.assert_allclose(
            out[1, 2], fourier_mix_1d(Tensor(x[1, 2])).data, atol=1e-12
        )

    def test_linearity(self, rng: np.random.Generator) -> None:
        """Test M(a·x + y) == a·M(x) + M(y)."""
        x, y = rng.normal(size=(8, 4)), rng.normal(size=(8, 4))
        lhs = fourier_mix_2d(Tensor(2.5 * x + y)).data
        rhs = 2.5 * fourier_mix_2d(Tensor(x)).data + fourier_mix_2d(Tensor(y)).data
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_cosine_basis_rows(self) -> None:
        """Test that the N=4 basis matrix holds cos(2πnk/4)."""
        matrix = basis_matrix(fourier_mix_1d, 4).data
        k = np.arange(4)
        np.testing.assert_allclose(
            matrix, np.cos(2 * np.pi * np.outer(k, k) / 4), atol=1e-12
        )


class TestDWT:
    """Tests for the periodised multi-level DWT."""

    def test_constant_signal(self) -> None:
        """Test that a constant leaves only the approximation coefficient."""
        out = dwt_full(np.full(8, 2.0), HAAR)
        expected = np.zeros(8)
        expected[0] = 2.0 * math.sqrt(8)
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_single_level(self) -> None:
        """Test one Haar level of [1, 2, 3, 4]."""
        out = dwt_full([1.0, 2.0, 3.0, 4.0], HAAR, levels=1)
        np.testing.assert_allclose(out, [3 * S, 7 * S, -S, -S], atol=1e-12)

    def test_hand_built_inverse(self) -> None:
        """Test that the inverse rebuilds [1, 2, 3, 4] from its coefficients."""
        out = idwt_full([3 * S, 7 * S, -S, -S], HAAR, levels=1)
        np.testing.assert_allclose(out, [1.0, 2.0, 3.0, 4.0], atol=1e-12)

    @pytest.mark.parametrize("name", sorted(BASES))
    def test_round_trip_and_energy(self, rng: np.random.Generator, name: str) -> None:
        """Test perfect reconstruction and energy preservation per basis."""
        basis = BASES[name]
        x = rng.normal(size=(500, 64))
        coeffs = dwt_full(x, basis)
        np.testing.assert_allclose(idwt_full(coeffs, basis), x, atol=1e-10)
        np.testing.assert_allclose(
            np.sum(coeffs**2, axis=1), np.sum(x**2, axis=1), rtol=1e-10
        )

    def test_axis_argument(self, rng: np.random.Generator) -> None:
        """Test transforming along the first axis."""
        x = rng.normal(size=(16, 3))
        np.testing.assert_allclose(
            dwt_full(x, HAAR, axis=0), dwt_full(x.T, HAAR).T, atol=1e-12
        )

    def test_bad_lengths(self) -> None:
        """Test non-power-of-two lengths and too many levels."""
        with pytest.raises(ContractError):
            dwt_full(np.ones(6), HAAR)
        with pytest.raises(ContractError):
            dwt_full(np.ones(8), HAAR, levels=4)


class TestWaveletBases:
    """Tests for basis tables and lookup."""

    def test_aliases(self) -> None:
        """Test CLI spellings of the biorthogonal names."""
        assert get_basis("bior11") is BIOR11
        assert get_basis("RBIO11").name == "rbio1.1"
        assert get_basis("db1") is DB1

    def test_unknown_basis(self) -> None:
        """Test that unknown names are configuration errors."""
        with pytest.raises(ConfigError):
            get_basis("sym4")

    def test_rejects_non_qmf_pair(self) -> None:
        """Test that an orthogonal basis must satisfy the QMF relation."""
        with pytest.raises(ConfigError):
            WaveletBasis("bad", (S, S), (S, S), (S, S), (S, -S))

    def test_rejects_mixed_lengths(self) -> None:
        """Test that all four filters share one length."""
        with pytest.raises(ConfigError):
            WaveletBasis("bad", (S, S), (-S, S), (S, S, 0.0), (S, -S), False)

    def test_haar_matrix_is_orthonormal(self) -> None:
        """Test M·Mᵀ = I for the full-depth Haar transform at N=8."""
        matrix = basis_matrix(lambda t: wavelet_mix_1d(t, HAAR), 8).data
        np.testing.assert_allclose(matrix @ matrix.T, np.eye(8), atol=1e-12)

    def test_basis_matrix_size(self) -> None:
        """Test that basis matrices need a power-of-two size."""
        with pytest.raises(ContractError):
            basis_matrix(fourier_mix_1d, 6)


class TestWaveletMixers:
    """Tests for the 1D and 2D wavelet mixers."""

    def test_one_dim_is_matrix_product(self, rng: np.random.Generator) -> None:
        """Test that the 1D mixer applies M_N along the sequence axis."""
        x = rng.normal(size=(16, 8))
        m = basis_matrix(lambda t: wavelet_mix_1d(t, HAAR), 16).data
        np.testing.assert_allclose(
            wavelet_mix_1d(Tensor(x), HAAR).data, m @ x, atol=1e-10
        )

    def test_two_dim_is_sandwich(self, rng: np.random.Generator) -> None:
        """Test that the 2D mixer is M_N · x · M_Dᵀ."""
        x = rng.normal(size=(16, 8))
        m_n = basis_matrix(lambda t: wavelet_mix_1d(t, HAAR), 16).data
        m_d = basis_matrix(lambda t: wavelet_mix_1d(t, HAAR), 8).data
        np.testing.assert_allclose(
            wavelet_mix_2d(Tensor(x), HAAR).data, m_n @ x @ m_d.T, atol=1e-10
        )

    @pytest.mark.parametrize("shape", [(5, 6), (8, 3), (2, 7, 4)])
    def test_adjoint_gradients(
        self, rng: np.random.Generator, shape: tuple[int, ...]
    ) -> None:
        """Test mixer backward passes, including padded axes."""
        weights = Tensor(rng.normal(size=shape))
        x = Tensor(rng.normal(size=shape))
        for mix in (
            lambda t: wavelet_mix_2d(t, HAAR),
            lambda t: wavelet_mix_1d(t, DB1),
            fourier_mix_1d,
            fourier_mix_2d,
        ):
            error = finite_diff_check(lambda t, m=mix: (m(t) * weights).sum(), x)
            assert error < 1e-5


class TestCombinedBasis:
    """Tests for the learnable combination of wavelet mixers."""

    def test_projects_onto_single_basis(self, rng: np.random.Generator) -> None:
        """Test that (1, 0, 0) reproduces the first basis alone."""
        cb = CombinedBasis.create(init=(1.0, 0.0, 0.0))
        x = Tensor(rng.normal(size=(8, 4)))
        np.testing.assert_allclose(
            combined_mix(x, cb).data, wavelet_mix_2d(x, BIOR11).data, atol=1e-12
        )

    def test_zero_coefficients(self, rng: np.random.Generator) -> None:
        """Test that all-zero coefficients give zero."""
        cb = CombinedBasis.create(init=(0.0, 0.0, 0.0))
        out = combined_mix(Tensor(rng.normal(size=(8, 4))), cb)
        np.testing.assert_array_equal(out.data, np.zeros((8, 4)))

    def test_matrix_is_weighted_sum(self) -> None:
        """Test that the combined matrix is a·M1 + b·M2 + c·M3."""
        init = (0.5, -1.0, 2.0)
        cb = CombinedBasis.create(dims=1, init=init)
        combined = basis_matrix(lambda t: combined_mix(t, cb), 8).data
        expected = sum(
            w * basis_matrix(lambda t, b=b: wavelet_mix_1d(t, b), 8).data
            for w, b in zip(init, cb.bases, strict=True)
        )
        np.testing.assert_allclose(combined, expected, atol=1e-12)

    def test_coefficient_gradient(self, rng: np.random.Generator) -> None:
        """Test the gradient with respect to a mixing coefficient."""
        cb = CombinedBasis.create()
        x = Tensor(rng.normal(size=(8, 4)))
        weights = Tensor(rng.normal(size=(8, 4)))
        _, b, c = cb.coeffs

        def f(a: Tensor) -> Tensor:
            swapped = CombinedBasis(cb.bases, (a, b, c), cb.dims)
            return (combined_mix(x, swapped) * weights).sum()

        assert finite_diff_check(f, Tensor(0.3)) < 1e-6

    def test_default_bases(self) -> None:
        """Test the default bases and equal initial weights."""
        cb = CombinedBasis.create()
        assert [b.name for b in cb.bases] == ["bior1.1", "haar", "db1"]
        assert [t.item() for t in cb.coeffs] == pytest.approx([1 / 3] * 3)
        assert all(t.requires_grad for t in cb.coeffs)
