import numpy as np
import pytest

from htrm.errors import DataFormatError, UsageError
from htrm.features import (
    FeatureSequence,
    SyntheticSpec,
    build_scales,
    generate_synthetic,
    load_features,
    sample_or_pad,
    save_features,
)

from oracles import loop_pool_then_interp


def _seq(rng, frames, dim=4):
    return FeatureSequence(rng.standard_normal((frames, dim)))


class TestSampleOrPad:
    def test_identity_when_length_matches(self):
        rng = np.random.default_rng(0)
        seq = _seq(rng, 64)
        out = sample_or_pad(seq, 64)
        assert np.array_equal(out.values, seq.values)

    def test_downsample_follows_index_formula(self):
        rng = np.random.default_rng(1)
        seq = _seq(rng, 128)
        out = sample_or_pad(seq, 64)
        expected = [int(np.floor(i * 127 / 63 + 0.5)) for i in range(64)]
        assert expected[0] == 0 and expected[1] == 2 and expected[-1] == 127
        assert np.array_equal(out.values, seq.values[expected])

    def test_pad_repeats_last_frame(self):
        rng = np.random.default_rng(2)
        seq = _seq(rng, 10)
        out = sample_or_pad(seq, 64)
        assert out.frames == 64
        assert np.array_equal(out.values[:10], seq.values)
        assert np.all(out.values[10:] == seq.values[-1])

    def test_empty_input_is_rejected(self):
        with pytest.raises(UsageError):
            FeatureSequence(np.zeros((0, 4)))

    def test_idempotent_at_target_length(self):
        rng = np.random.default_rng(3)
        seq = _seq(rng, 32)
        once = sample_or_pad(seq, 32)
        twice = sample_or_pad(once, 32)
        assert np.array_equal(once.values, twice.values)


class TestBuildScales:
    def test_constant_sequence_unchanged_at_every_scale(self):
        seq = FeatureSequence(np.full((16, 3), 2.5))
        scales = build_scales(seq)
        for s in (scales.v1, scales.v2, scales.v3):
            assert np.allclose(s.values, 2.5)

    def test_scale1_is_identity(self):
        rng = np.random.default_rng(4)
        seq = _seq(rng, 16)
        assert np.array_equal(build_scales(seq).v1.values, seq.values)

    def test_window4_matches_pooling_oracle(self):
        rng = np.random.default_rng(5)
        seq = _seq(rng, 8)
        out = build_scales(seq).v2.values
        expected = loop_pool_then_interp(seq.values, window=4, stride=2, frames=8)
        assert np.max(np.abs(out - expected)) < 1e-12

    def test_window8_matches_pooling_oracle(self):
        rng = np.random.default_rng(6)
        seq = _seq(rng, 16)
        out = build_scales(seq).v3.values
        expected = loop_pool_then_interp(seq.values, window=8, stride=4, frames=16)
        assert np.max(np.abs(out - expected)) < 1e-12

    def test_impulse_mass_spread_over_covering_windows(self):
        frames, k = 12, 5
        values = np.zeros((frames, 1))
        values[k, 0] = 1.0
        pooled = []
        start = 0
        while start + 4 <= frames:
            window = values[start : start + 4]
            pooled.append(window.mean())
            covered = start <= k < start + 4
            assert (pooled[-1] > 0) == covered
            start += 2
        # each covering window carries mass 1/4, summation oracle
        total = sum(pooled)
        covering = sum(1 for s in range(0, frames - 3, 2) if s <= k < s + 4)
        assert abs(total - covering / 4.0) < 1e-9

    @pytest.mark.parametrize("frames", [8, 16, 64])
    @pytest.mark.parametrize("dim", [16, 512])
    def test_shapes_preserved(self, frames, dim):
        rng = np.random.default_rng(7)
        scales = build_scales(FeatureSequence(rng.standard_normal((frames, dim))))
        for s in (scales.v1, scales.v2, scales.v3):
            assert s.values.shape == (frames, dim)


class TestGenerateSynthetic:
    def test_zero_cycles_gives_pure_noise_and_empty_annotation(self):
        spec = SyntheticSpec(0, (4, 8), 0.2, 1.0, d=6, frames=32, seed=5)
        seq, ann = generate_synthetic(spec)
        assert ann.cycles == []
        assert seq.values.shape == (32, 6)

    def test_equal_phase_frames_have_cosine_one(self):
        spec = SyntheticSpec(4, (8, 8), 0.0, 0.0, d=16, frames=32, seed=9)
        seq, ann = generate_synthetic(spec)
        assert len(ann.cycles) == 4
        (s0, e0), (s1, _) = ann.cycles[0], ann.cycles[1]
        for k in range(e0 - s0):
            a, b = seq.values[s0 + k], seq.values[s1 + k]
            cos = float(a @ b) / np.sqrt(float(a @ a) * float(b @ b))
            assert cos == 1.0

    def test_deterministic_under_seed(self):
        spec = SyntheticSpec(3, (4, 9), 0.5, 0.3, d=8, frames=40, seed=123)
        seq1, ann1 = generate_synthetic(spec)
        seq2, ann2 = generate_synthetic(spec)
        assert np.array_equal(seq1.values, seq2.values)
        assert ann1.cycles == ann2.cycles

    def test_infeasible_spec_rejected(self):
        with pytest.raises(UsageError):
            generate_synthetic(SyntheticSpec(10, (5, 8), 0.0, 0.0, d=4, frames=32, seed=0))

    def test_cycle_count_disjointness_and_order(self):
        rng = np.random.default_rng(10)
        for trial in range(100):
            frames = int(rng.integers(16, 80))
            n = int(rng.integers(0, 6))
            lo = int(rng.integers(2, 5))
            hi = lo + int(rng.integers(0, 6))
            if n * lo > frames:
                continue
            spec = SyntheticSpec(
                n, (lo, hi), float(rng.random()), 0.1, d=4, frames=frames, seed=trial
            )
            _, ann = generate_synthetic(spec)
            assert len(ann.cycles) == n
            prev_end = 0
            for s, e in ann.cycles:
                assert prev_end <= s < e <= frames
                prev_end = e


class TestFeatureFiles:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(11)
        values = rng.standard_normal((64, 512)).astype(np.float32).astype(np.float64)
        seq = FeatureSequence(values)
        path = tmp_path / "v.htrm"
        save_features(path, seq)
        assert np.array_equal(load_features(path).values, values)

    def test_truncated_file_is_format_error(self, tmp_path):
        path = tmp_path / "v.htrm"
        rng = np.random.default_rng(12)
        save_features(path, FeatureSequence(rng.standard_normal((8, 4))))
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(DataFormatError):
            load_features(path)

    def test_wrong_magic_is_format_error_with_offset(self, tmp_path):
        path = tmp_path / "v.htrm"
        save_features(path, FeatureSequence(np.ones((4, 2))))
        blob = bytearray(path.read_bytes())
        blob[:4] = b"NOPE"
        path.write_bytes(bytes(blob))
        with pytest.raises(DataFormatError) as err:
            load_features(path)
        assert "offset 0" in str(err.value)
