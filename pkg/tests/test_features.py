import numpy as np
import pytest

from envasr import features as ft


def tone(freq, seconds=1.0, amp=0.4):
    t = np.arange(int(seconds * ft.SAMPLE_RATE)) / ft.SAMPLE_RATE
    return amp * np.sin(2 * np.pi * freq * t)


class TestLfbe:
    def test_silence_hits_log_floor(self):
        frames = ft.compute_lfbe(ft.AudioWave(np.zeros(16000))).frames
        np.testing.assert_allclose(frames, np.log(1e-10))

    def test_one_second_gives_98_frames(self):
        frames = ft.compute_lfbe(ft.AudioWave(np.zeros(16000))).frames
        assert frames.shape == (98, 64)  # (16000 - 400) / 160 + 1

    def test_tone_argmax_is_nearest_mel_center(self):
        frames = ft.compute_lfbe(ft.AudioWave(tone(1000.0))).frames
        # independent re-derivation of the mel centers
        def mel(f):
            return 2595.0 * np.log10(1.0 + f / 700.0)
        def imel(m):
            return 700.0 * (10 ** (m / 2595.0) - 1.0)
        centers = imel(np.linspace(mel(0.0), mel(8000.0), 66))[1:-1]
        expected = int(np.abs(centers - 1000.0).argmin())
        assert (frames.argmax(axis=1) == expected).all()

    def test_scaling_adds_log4_above_floor(self):
        w = tone(700.0, seconds=0.5, amp=0.2)
        a = ft.compute_lfbe(ft.AudioWave(w)).frames
        b = ft.compute_lfbe(ft.AudioWave(2 * w)).frames
        above = a > np.log(1e-10) + 1e-9
        assert above.any()
        np.testing.assert_allclose((b - a)[above], np.log(4.0), atol=1e-9)

    def test_too_short_rejected(self):
        with pytest.raises(ValueError, match="too short"):
            ft.compute_lfbe(ft.AudioWave(np.zeros(399)))

    def test_wave_invariants(self):
        with pytest.raises(ValueError, match="16000"):
            ft.AudioWave(np.zeros(100), sample_rate=8000)
        with pytest.raises(ValueError, match=r"\[-1, 1\]"):
            ft.AudioWave(np.full(100, 2.0))


class TestStacking:
    def test_nine_frames_three_patches(self, rng):
        frames = ft.LfbeFrames(rng.standard_normal((9, 64)))
        seq = ft.stack_frames(frames)
        assert seq.patches.shape == (3, 192) and not seq.whitened

    def test_three_frames_concatenated(self, rng):
        f = rng.standard_normal((3, 64))
        seq = ft.stack_frames(ft.LfbeFrames(f))
        np.testing.assert_array_equal(seq.patches[0], f.reshape(-1))

    def test_remainder_dropped(self, rng):
        seq = ft.stack_frames(ft.LfbeFrames(rng.standard_normal((4, 64))))
        assert seq.patches.shape == (1, 192)

    def test_unstack_roundtrip(self, rng):
        f = rng.standard_normal((11, 64))
        seq = ft.stack_frames(ft.LfbeFrames(f))
        recovered = seq.patches.reshape(-1, 64)
        np.testing.assert_array_equal(recovered, f[:9])

    def test_too_few_frames(self, rng):
        with pytest.raises(ValueError, match="at least 3"):
            ft.stack_frames(ft.LfbeFrames(rng.standard_normal((2, 64))))


class TestWhitener:
    def test_two_point_stats(self):
        w = ft.fit_whitener(np.array([[0.0, 0.0], [2.0, 2.0]]))
        np.testing.assert_array_equal(w.mean, [1.0, 1.0])
        np.testing.assert_array_equal(w.std, [1.0, 1.0])

    def test_constant_column_floored(self):
        rows = np.column_stack([np.full(10, 3.0), np.arange(10.0)])
        w = ft.fit_whitener(rows)
        assert w.std[0] == 1e-6

    def test_self_whitening_recenters(self, rng):
        # balanced +/- one-sigma rows stay inside the clip range exactly
        mean = rng.standard_normal(6)
        std = rng.uniform(0.5, 2.0, 6)
        signs = np.ones((40, 6))
        signs[20:] = -1.0
        for c in range(6):
            rng.shuffle(signs[:, c])
        rows = mean + signs * std
        out = ft.whiten_clip(rows, ft.fit_whitener(rows)).patches
        assert np.abs(out.mean(axis=0)).max() < 1e-10
        assert np.abs(out.std(axis=0) - 1.0).max() < 1e-6

    def test_needs_two_rows(self):
        with pytest.raises(ValueError, match="2 rows"):
            ft.fit_whitener(np.ones((1, 3)))


class TestWhitenClip:
    def setup_method(self):
        self.w = ft.Whitener(mean=np.array([1.0, -2.0]), std=np.array([2.0, 0.5]))

    def test_mean_maps_to_zero(self):
        out = ft.whiten_clip(np.array([[1.0, -2.0]]), self.w)
        np.testing.assert_array_equal(out.patches, [[0.0, 0.0]])
        assert out.whitened

    def test_two_sigma_clipped_to_bound(self):
        x = np.array([[1.0 + 2 * 2.0, -2.0 + 2 * 0.5]])
        np.testing.assert_array_equal(ft.whiten_clip(x, self.w).patches,
                                      [[1.2, 1.2]])

    def test_half_sigma_passes_through(self):
        x = np.array([[1.0 + 0.5 * 2.0, -2.0 - 0.5 * 0.5]])
        np.testing.assert_allclose(ft.whiten_clip(x, self.w).patches,
                                   [[0.5, -0.5]])

    def test_always_within_bounds(self, rng):
        x = rng.standard_normal((50, 2)) * 100
        out = ft.whiten_clip(x, self.w).patches
        assert out.min() >= -1.2 and out.max() <= 1.2

    def test_dim_mismatch(self, rng):
        with pytest.raises(ValueError, match="dimension"):
            ft.whiten_clip(rng.standard_normal((3, 5)), self.w)


class TestVideoPatches:
    def test_256_clip_patch_count(self, rng):
        clip = ft.VideoClip(rng.random((6, 256, 256, 3)))
        seq = ft.extract_video_patches(clip)
        assert seq.patches.shape == (512, 2304)
        assert seq.grid == (2, 16, 16)

    def test_single_patch_is_flattened_input(self, rng):
        frames = rng.random((3, 16, 16, 3))
        seq = ft.extract_video_patches(ft.VideoClip(frames))
        assert seq.patches.shape == (1, 2304)
        np.testing.assert_array_equal(seq.patches[0], frames.reshape(-1))

    def test_frame_count_must_divide(self, rng):
        with pytest.raises(ValueError, match="divisible"):
            ft.extract_video_patches(ft.VideoClip(rng.random((4, 256, 256, 3))))

    def test_partition_covers_every_voxel(self, rng):
        frames = rng.random((3, 32, 32, 3))
        seq = ft.extract_video_patches(ft.VideoClip(frames))
        assert seq.patches.shape == (4, 2304)
        np.testing.assert_array_equal(np.sort(seq.patches.reshape(-1)),
                                      np.sort(frames.reshape(-1)))
        np.testing.assert_allclose(seq.patches.sum(), frames.sum())

    def test_center_crop_resize(self, rng):
        clip = ft.center_crop_resize(rng.random((3, 120, 160, 3)), size=64)
        assert clip.frames.shape == (3, 64, 64, 3)
        assert clip.frames.min() >= 0.0 and clip.frames.max() <= 1.0


class TestWavIO:
    def test_roundtrip(self, tmp_path, rng):
        w = np.clip(rng.standard_normal(8000) * 0.2, -1, 1)
        ft.write_wav(tmp_path / "x.wav", w)
        back = ft.read_wav(tmp_path / "x.wav")
        assert back.sample_rate == 16000
        np.testing.assert_allclose(back.samples, w, atol=0.51 / 32768)

    def test_resampling_declared_rate(self, tmp_path):
        w = tone(400.0, seconds=0.25, amp=0.3)[::2]  # 2000 samples at 8 kHz
        ft.write_wav(tmp_path / "x.wav", w, sample_rate=8000)
        back = ft.read_wav(tmp_path / "x.wav")
        assert abs(back.samples.size - 4000) <= 2  # same 0.25 s at 16 kHz
