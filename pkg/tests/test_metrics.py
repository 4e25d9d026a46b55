import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from skimage.metrics import structural_similarity

import oracles
from vsrtradeoff.flow import synth_translation_flow
from vsrtradeoff.frame import FrameError
from vsrtradeoff.metrics import (
    MetricReport,
    ZeroMaskError,
    aggregate_dataset,
    mse,
    ssim,
    warping_error_pair,
    warping_error_video,
)


class TestMSE:
    def test_identity(self, rng):
        f = rng.random((4, 4, 3))
        assert mse(f, f) == 0.0

    def test_extremes(self):
        assert mse(np.zeros((3, 3, 3)), np.ones((3, 3, 3))) == 1.0

    def test_loop_oracle(self, rng):
        a, b = rng.random((2, 4, 4, 3))
        acc = 0.0
        for i in range(4):
            for j in range(4):
                for k in range(3):
                    acc += (a[i, j, k] - b[i, j, k]) ** 2
        assert abs(mse(a, b) - acc / 48) < 1e-12

    def test_mismatch(self):
        with pytest.raises(FrameError):
            mse(np.zeros((3, 3, 3)), np.zeros((3, 3, 1)))


class TestSSIM:
    def test_self(self, rng):
        f = rng.random((16, 20, 1))
        assert ssim(f, f) == pytest.approx(1.0, abs=1e-12)

    def test_flat_equal(self):
        f = np.full((12, 12, 1), 0.5)
        assert ssim(f, f) == pytest.approx(1.0, abs=1e-12)

    def test_flat_luminance_term(self):
        a = np.full((11, 11, 1), 0.25)
        b = np.full((11, 11, 1), 0.75)
        c1 = 0.01**2
        expected = (2 * 0.25 * 0.75 + c1) / (0.25**2 + 0.75**2 + c1)
        assert ssim(a, b) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.600064, abs=1e-6)

    def test_matches_skimage(self, rng):
        a = rng.random((24, 30))
        b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
        ref = structural_similarity(a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
                                    data_range=1.0)
        assert abs(ssim(a, b) - ref) < 1e-10

    def test_requires_luma(self):
        with pytest.raises(FrameError):
            ssim(np.zeros((12, 12, 3)), np.zeros((12, 12, 3)))

    def test_too_small(self):
        with pytest.raises(FrameError, match="window"):
            ssim(np.zeros((10, 40, 1)), np.zeros((10, 40, 1)))

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, (2, 12, 13), elements=st.floats(0, 1)))
    def test_symmetric(self, pair):
        a, b = pair
        s = ssim(a, b)
        assert abs(s - ssim(b, a)) <= 1e-12
        assert -1 - 1e-12 <= s <= 1 + 1e-12


def _shift_left(f):
    """g(p) = f(p + (1, 0)) with the last column repeated."""
    return np.concatenate([f[:, 1:], f[:, -1:]], axis=1)


class TestWarpingErrorPair:
    def test_static(self, rng):
        f = rng.random((5, 6, 3))
        res = warping_error_pair(f, f, np.zeros((5, 6, 2)), np.ones((5, 6)))
        assert res.masked_sum == 0.0 and res.mask_sum == 30.0

    def test_shift_cancels(self, rng):
        v_t = rng.random((5, 6, 3))
        # content moves right by one pixel: v_next(x) = v_t(x - 1)
        v_next = np.concatenate([v_t[:, :1], v_t[:, :-1]], axis=1)
        mask = np.ones((5, 6))
        mask[:, -1] = 0
        res = warping_error_pair(v_t, v_next, synth_translation_flow(6, 5, 1, 0), mask)
        assert res.masked_sum == 0.0
        assert res.mask_sum == 25.0

    def test_loop_oracle(self, rng, backend):
        v = rng.random((2, 5, 5, 3))
        flow = oracles.random_flow(rng, 5, 5)
        mask = (rng.random((5, 5)) > 0.3).astype(float)
        res = warping_error_pair(v[0], v[1], flow, mask)
        assert abs(res.normalized - oracles.loop_warping_error(v, [flow], [mask])) < 1e-10

    def test_full_mask_zero_flow_is_n_times_mse(self, rng):
        a, b = rng.random((2, 6, 7, 3))
        res = warping_error_pair(a, b, np.zeros((6, 7, 2)), np.ones((6, 7)))
        assert abs(res.masked_sum - 42 * mse(a, b)) < 1e-9

    def test_sum_over_channels(self, rng):
        a, b = rng.random((2, 4, 4, 3))
        z, ones = np.zeros((4, 4, 2)), np.ones((4, 4))
        mean = warping_error_pair(a, b, z, ones, "mean").masked_sum
        total = warping_error_pair(a, b, z, ones, "sum").masked_sum
        assert total == pytest.approx(3 * mean, rel=1e-13)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_shrinking_mask_never_increases(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.random((2, 5, 5, 1))
        flow = oracles.random_flow(rng, 5, 5)
        mask = rng.integers(0, 2, (5, 5)).astype(float)
        smaller = mask * rng.integers(0, 2, (5, 5))
        assert (warping_error_pair(a, b, flow, smaller).masked_sum
                <= warping_error_pair(a, b, flow, mask).masked_sum)


class TestWarpingErrorVideo:
    def test_two_frames(self, rng):
        v = rng.random((2, 4, 4, 3))
        flow, mask = oracles.random_flow(rng, 4, 4), np.ones((4, 4))
        assert warping_error_video(v, [flow], [mask]) == warping_error_pair(v[0], v[1], flow, mask).normalized

    def test_mean_of_pairs(self):
        v = np.zeros((3, 2, 2, 1))
        v[1] = math.sqrt(0.02)
        v[2] = v[1] + math.sqrt(0.04)
        z, m = np.zeros((2, 2, 2)), np.ones((2, 2))
        assert warping_error_video(v, [z, z], [m, m]) == pytest.approx(0.03, abs=1e-15)

    def test_loop_oracle(self, rng, backend):
        v = rng.random((3, 6, 6, 3))
        flows = [oracles.random_flow(rng, 6, 6) for _ in range(2)]
        masks = [rng.random((6, 6)) > 0.2 for _ in range(2)]
        masks = [m.astype(float) for m in masks]
        assert abs(warping_error_video(v, flows, masks) - oracles.loop_warping_error(v, flows, masks)) < 1e-10

    def test_zero_mask_is_error(self, rng):
        v = rng.random((3, 4, 4, 1))
        z = np.zeros((4, 4, 2))
        with pytest.raises(ZeroMaskError) as info:
            warping_error_video(v, [z, z], [np.ones((4, 4)), np.zeros((4, 4))])
        assert info.value.pair_index == 1

    def test_needs_two_frames(self):
        with pytest.raises(FrameError):
            warping_error_video(np.zeros((1, 3, 3, 1)), [], [])

    def test_count_mismatch(self):
        with pytest.raises(ValueError):
            warping_error_video(np.zeros((3, 3, 3, 1)), [np.zeros((3, 3, 2))], [np.ones((3, 3))])

    def test_append_pair_at_mean(self, rng):
        v = rng.random((3, 4, 4, 1))
        z, m = np.zeros((4, 4, 2)), np.ones((4, 4))
        e = warping_error_video(v, [z, z], [m, m])
        # a next frame differing by sqrt(e) everywhere has normalised pair error e
        extra = v[2] + math.sqrt(e)
        v2 = np.concatenate([v, extra[None]])
        assert warping_error_video(v2, [z] * 3, [m] * 3) == pytest.approx(e, rel=1e-12)


class TestAggregate:
    def test_single(self):
        r = MetricReport("m", "v", 0.1, 0.9, 0.02)
        s = aggregate_dataset([r])["m"]
        assert (s.mse, s.ssim, s.warping_error, s.videos) == (0.1, 0.9, 0.02, 1)

    def test_unweighted(self):
        reps = [MetricReport("m", "short", 10, 0.5, 1.0), MetricReport("m", "long", 30, 0.5, 1.0)]
        assert aggregate_dataset(reps)["m"].mse == 20

    def test_random_mean(self, rng):
        vals = rng.random((5, 3))
        reps = [MetricReport("m", str(i), *row) for i, row in enumerate(vals)]
        s = aggregate_dataset(reps)["m"]
        assert abs(s.mse - vals[:, 0].mean()) < 1e-12
        assert abs(s.ssim - vals[:, 1].mean()) < 1e-12
        assert abs(s.warping_error - vals[:, 2].mean()) < 1e-12

    def test_order_independent(self, rng):
        reps = [MetricReport(m, str(i), *rng.random(3)) for m in "ab" for i in range(6)]
        shuffled = [reps[i] for i in rng.permutation(len(reps))]
        a, b = aggregate_dataset(reps), aggregate_dataset(shuffled)
        assert {k: v.as_dict() for k, v in a.items()} == {k: v.as_dict() for k, v in b.items()}

    def test_empty(self):
        with pytest.raises(ValueError):
            aggregate_dataset([])
