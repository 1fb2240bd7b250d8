"""Transform oracles: DFT definitions, FFT agreement, wavelet filter banks,
Parseval, perfect reconstruction, adjoint identities."""

import numpy as np
import pytest

from spikemix.tensor import seeded_rng
from spikemix.transforms import (
    WAVELET_FAMILIES,
    ComplexTensor,
    TransformLengthError,
    adjoint,
    dft_naive_1d,
    dft_naive_2d_real,
    dwt_1d,
    fft_1d,
    get_wavelet,
    idwt_1d,
    lt_fft_1d_real,
    lt_fft_2d_real,
    lt_wt_2d,
    make_plan,
    max_wavelet_levels,
)

SQ2 = 2.0 ** -0.5


def haar_analysis_matrix(n, levels):
    """Orthonormal multi-level Haar analysis matrix built from the sampled
    scaling/wavelet basis functions (independent of the filter-bank code).

    Row order matches the coefficient layout [approx_J | detail_J | ... |
    detail_1]: the level-j wavelet row for shift k is +2^{-j/2} on the first
    half of its support block and -2^{-j/2} on the second half.
    """
    rows = []
    block = n >> levels
    for k in range(block):
        row = np.zeros(n)
        row[k * (1 << levels):(k + 1) * (1 << levels)] = 2.0 ** (-levels / 2.0)
        rows.append(row)
    for j in range(levels, 0, -1):
        support = 1 << j
        amp = 2.0 ** (-j / 2.0)
        for k in range(n // support):
            row = np.zeros(n)
            row[k * support:k * support + support // 2] = amp
            row[k * support + support // 2:(k + 1) * support] = -amp
            rows.append(row)
    return np.array(rows)


class TestNaiveDft:
    def test_constant_maps_to_dc_bin(self):
        out = dft_naive_1d(np.ones((4, 1)), axis=0)
        assert np.allclose(out.re.ravel(), [4, 0, 0, 0], atol=1e-12)
        assert np.allclose(out.im, 0.0, atol=1e-12)

    def test_delta_maps_to_all_ones(self):
        out = dft_naive_1d(np.array([[1.0], [0.0], [0.0], [0.0]]), axis=0)
        assert np.allclose(out.re.ravel(), [1, 1, 1, 1], atol=1e-12)
        assert np.allclose(out.im, 0.0, atol=1e-12)

    def test_period_two_signal(self):
        out = dft_naive_1d(np.array([[1.0], [0.0], [1.0], [0.0]]), axis=0)
        assert np.allclose(out.re.ravel(), [2, 0, 2, 0], atol=1e-12)


class TestFft:
    @pytest.mark.parametrize("n", [2, 4, 8, 64, 256])
    def test_matches_naive_on_random_binary(self, n):
        rng = seeded_rng(n)
        x = (rng.random((n, 4)) < 0.5).astype(np.float64)
        fast = fft_1d(x, axis=0).to_complex()
        ref = dft_naive_1d(x, axis=0).to_complex()
        assert np.abs(fast - ref).max() < 1e-9 * max(np.abs(ref).max(), 1.0)

    def test_non_power_of_two_rejected_with_advice(self):
        with pytest.raises(TransformLengthError, match="naive"):
            fft_1d(np.zeros((6, 2)), axis=0)

    def test_matches_naive_in_float32(self):
        rng = seeded_rng(7)
        x = (rng.random((64, 8)) < 0.5).astype(np.float32)
        fast = fft_1d(x, axis=0).to_complex()
        ref = dft_naive_1d(x.astype(np.float64), axis=0).to_complex()
        assert np.abs(fast - ref).max() < 1e-3

    def test_complex_tensor_shape_invariant(self):
        with pytest.raises(ValueError):
            ComplexTensor(np.zeros(3), np.zeros(4))


class TestRealFourierMaps:
    def test_dc_concentration(self):
        out = lt_fft_1d_real(np.ones((4, 2)), axis=0)
        assert np.allclose(out[:, 0], [4, 0, 0, 0], atol=1e-12)

    def test_zero_maps_to_zero(self):
        assert np.abs(lt_fft_1d_real(np.zeros((8, 3)))).max() == 0.0

    def test_cosine_matrix_is_symmetric_adjoint(self):
        rng = seeded_rng(8)
        x = rng.standard_normal((16, 5))
        y = rng.standard_normal((16, 5))
        lhs = float((lt_fft_1d_real(x, axis=0) * y).sum())
        rhs = float((x * lt_fft_1d_real(y, axis=0)).sum())
        assert abs(lhs - rhs) < 1e-9 * np.linalg.norm(x) * np.linalg.norm(y)

    def test_2d_constant_concentrates_at_origin(self):
        c = 0.7
        out = lt_fft_2d_real(np.full((4, 4), c))
        expected = np.zeros((4, 4))
        expected[0, 0] = 16.0 * c
        assert np.allclose(out, expected, atol=1e-12)

    def test_2d_matches_double_sum_oracle(self):
        rng = seeded_rng(9)
        for _ in range(10):
            x = (rng.random((16, 8)) < 0.5).astype(np.float64)
            ref = dft_naive_2d_real(x)
            assert np.abs(lt_fft_2d_real(x) - ref).max() < 1e-9 * max(np.abs(ref).max(), 1.0)

    def test_2d_non_power_of_two_feature_axis_uses_naive_path(self):
        rng = seeded_rng(10)
        x = rng.standard_normal((8, 6))
        z = dft_naive_1d(x, axis=1).to_complex()
        ref = dft_naive_1d(ComplexTensor.from_complex(z), axis=0).to_complex().real
        assert np.abs(lt_fft_2d_real(x) - ref).max() < 1e-9

    def test_real_part_taken_once_not_per_axis(self):
        rng = seeded_rng(11)
        x = rng.standard_normal((8, 8))
        per_axis = lt_fft_1d_real(lt_fft_1d_real(x, axis=1), axis=0)
        composed = lt_fft_2d_real(x)
        assert np.abs(per_axis - composed).max() > 1e-6


class TestWavelets:
    def test_constant_input_hand_value(self):
        out = dwt_1d(np.ones((4, 1)), get_wavelet("haar"), 2, axis=0)
        assert np.allclose(out.ravel(), [2, 0, 0, 0], atol=1e-12)

    def test_delta_input_hand_value(self):
        out = dwt_1d(np.array([[1.0], [0.0], [0.0], [0.0]]), get_wavelet("haar"), 2, axis=0)
        assert np.allclose(out.ravel(), [0.5, 0.5, SQ2, 0.0], atol=1e-12)
        assert abs((out**2).sum() - 1.0) < 1e-12  # Parseval pins the magnitudes

    def test_zero_maps_to_zero(self):
        out = dwt_1d(np.zeros((8, 2)), get_wavelet("haar"), 3, axis=0)
        assert np.abs(out).max() == 0.0

    def test_odd_length_error_names_level(self):
        with pytest.raises(TransformLengthError, match="level 2"):
            dwt_1d(np.zeros((6, 1)), get_wavelet("haar"), 2, axis=0)

    def test_inverse_of_constant_case(self):
        coeffs = np.array([[2.0], [0.0], [0.0], [0.0]])
        assert np.allclose(idwt_1d(coeffs, get_wavelet("haar"), 2, axis=0).ravel(), 1.0)

    def test_zero_coeffs_zero_signal(self):
        out = idwt_1d(np.zeros((8, 2)), get_wavelet("haar"), 2, axis=0)
        assert np.abs(out).max() == 0.0

    def test_layout_mismatch_rejected(self):
        with pytest.raises(TransformLengthError):
            idwt_1d(np.zeros((6, 1)), get_wavelet("haar"), 2, axis=0)

    @pytest.mark.parametrize("family", sorted(WAVELET_FAMILIES))
    @pytest.mark.parametrize("n", [4, 8, 32, 64, 256])
    def test_perfect_reconstruction(self, family, n):
        rng = seeded_rng(n)
        filt = get_wavelet(family)
        x = rng.standard_normal((n, 3))
        levels = min(3, max_wavelet_levels(n))
        rt = idwt_1d(dwt_1d(x, filt, levels, axis=0), filt, levels, axis=0)
        assert np.abs(rt - x).max() < 1e-9

    @pytest.mark.parametrize("family", sorted(WAVELET_FAMILIES))
    def test_parseval_orthonormal(self, family):
        rng = seeded_rng(21)
        x = rng.standard_normal((64, 4))
        c = dwt_1d(x, get_wavelet(family), 3, axis=0)
        assert abs(np.linalg.norm(c) - np.linalg.norm(x)) < 1e-9 * np.linalg.norm(x)

    def test_quadrature_mirror_and_unit_norm(self):
        for family in ("haar", "db1"):
            filt = get_wavelet(family)
            h_lo = np.array(filt.h_lo)
            h_hi = np.array(filt.h_hi)
            assert abs(np.linalg.norm(h_lo) - 1.0) < 1e-12
            signs = np.array([(-1.0) ** k for k in range(len(h_lo))])
            assert np.allclose(h_hi, signs * h_lo[::-1])

    def test_unknown_family(self):
        with pytest.raises(ValueError, match="unknown wavelet"):
            get_wavelet("sym4")

    def test_max_levels(self):
        assert max_wavelet_levels(384) == 7
        assert max_wavelet_levels(64) == 6
        assert max_wavelet_levels(3) == 0


class TestWavelet2D:
    def test_constant_matrix_single_coefficient(self):
        c = 1.7
        out = lt_wt_2d(np.full((4, 4), c), get_wavelet("haar"), 2, 2)
        expected = np.zeros((4, 4))
        expected[0, 0] = 4.0 * c
        assert np.allclose(out, expected, atol=1e-12)

    def test_matches_dense_matrix_oracle(self):
        rng = seeded_rng(22)
        x = rng.standard_normal((8, 8))
        levels = 3
        w = haar_analysis_matrix(8, levels)
        ref = w @ x @ w.T
        out = lt_wt_2d(x, get_wavelet("haar"), levels, levels)
        assert np.abs(out - ref).max() < 1e-9

    def test_parseval(self):
        rng = seeded_rng(23)
        x = rng.standard_normal((16, 12))
        out = lt_wt_2d(x, get_wavelet("haar"), 2, 2)
        assert abs(np.linalg.norm(out) - np.linalg.norm(x)) < 1e-9 * np.linalg.norm(x)

    def test_feature_axis_levels_capped_for_non_power_of_two(self):
        plan = make_plan("wt2d", 64, 384, levels=9)
        assert plan.levels_feat == 7
        assert plan.levels_seq == 6


class TestPlansAndAdjoints:
    @pytest.mark.parametrize("kind,d", [
        ("fft1d", 48), ("fft2d", 32), ("fft2d", 48),
        ("wt1d", 48), ("wt2d", 48), ("wt2d_combination", 48),
    ])
    def test_inner_product_identity(self, kind, d):
        rng = seeded_rng(24)
        plan = make_plan(kind, 64, d)
        for _ in range(5):
            x = rng.standard_normal((64, d))
            y = rng.standard_normal((64, d))
            lhs = float((plan.forward(x) * y).sum())
            rhs = float((x * plan.adjoint(y)).sum())
            assert abs(lhs - rhs) < 1e-9 * np.linalg.norm(x) * np.linalg.norm(y)

    def test_haar_adjoint_is_inverse(self):
        rng = seeded_rng(25)
        plan = make_plan("wt1d", 16, 4)
        g = rng.standard_normal((16, 4))
        assert np.allclose(plan.adjoint(g), idwt_1d(g, get_wavelet("haar"), plan.levels_seq, axis=0))

    def test_fft_real_adjoint_is_forward(self):
        rng = seeded_rng(26)
        plan = make_plan("fft1d", 16, 4)
        g = rng.standard_normal((16, 4))
        assert np.allclose(plan.adjoint(g), plan.forward(g), atol=1e-9)

    @pytest.mark.parametrize("kind", ["fft1d", "fft2d", "wt1d", "wt2d", "wt2d_combination"])
    def test_linearity(self, kind):
        rng = seeded_rng(27)
        plan = make_plan(kind, 16, 8)
        x, y = rng.standard_normal((2, 16, 8))
        combo = plan.forward(2.5 * x - 1.25 * y)
        parts = 2.5 * plan.forward(x) - 1.25 * plan.forward(y)
        assert np.abs(combo - parts).max() < 1e-9

    def test_combination_is_mean_over_families(self):
        rng = seeded_rng(28)
        plan = make_plan("wt2d_combination", 16, 8)
        x = rng.standard_normal((16, 8))
        parts = [
            lt_wt_2d(x, get_wavelet(f), plan.levels_seq, plan.levels_feat)
            for f in plan.families
        ]
        assert np.allclose(plan.forward(x), np.mean(parts, axis=0))

    def test_fft_plan_rejects_non_power_of_two_sequence(self):
        with pytest.raises(TransformLengthError):
            make_plan("fft1d", 6, 8)

    def test_unknown_plan_kind_rejected(self):
        plan = make_plan("fft1d", 8, 4)
        bogus = type(plan)(kind="mystery", n=8, d=4)
        with pytest.raises(ValueError, match="unknown transform"):
            adjoint(bogus, np.zeros((8, 4)))
