import numpy as np
import pytest

from envasr import autodiff as ad
from envasr.autodiff import Tensor, check_gradients
from envasr.asr.conformer import (BASELINE, CROSS, AsrModel, ConformerConfig,
                                  FusionAttention, build_models, subsample_length)
from envasr.env_encoder import EnvEmbeddings
from envasr.optim import ParameterSet, adam_step, count_parameters
from envasr.rng import substream


def micro_config(**kw):
    base = dict(model_dim=8, num_blocks=1, heads=2, conv_kernel=3,
                env_dim=4, feature_dim=6, vocab_size=3)
    base.update(kw)
    return ConformerConfig(**base)


def toy_env(rng, length=4, dim=4):
    return EnvEmbeddings(rng.standard_normal((length, dim)))


class TestSubsample:
    def test_length_formula(self):
        assert subsample_length(99) == 49
        assert subsample_length(3) == 1

    def test_too_short(self):
        with pytest.raises(ValueError, match="at least 3"):
            subsample_length(2)

    def test_model_output_lengths(self, rng):
        model = AsrModel(micro_config(), seed=0)
        for t, expect in [(99, 49), (3, 1), (10, 4)]:
            out = model.subsample(rng.standard_normal((t, 6)))
            assert out.data.shape == (expect, 8)

    def test_model_rejects_short_input(self, rng):
        model = AsrModel(micro_config(), seed=0)
        with pytest.raises(ValueError, match="shorter than kernel"):
            model.subsample(rng.standard_normal((2, 6)))


class TestConformerBlock:
    def test_shape_preserved(self, rng):
        model = AsrModel(micro_config(), seed=0)
        env_proj = model.project_env(toy_env(rng))
        for t in (1, 4, 9):
            x = Tensor(rng.standard_normal((t, 8)))
            out = model.block(0, x, env_proj)
            assert out.data.shape == (t, 8)

    def test_zeroed_projections_leave_normalized_identity(self, rng):
        model = AsrModel(micro_config(), seed=0)
        p = model.params
        for name in list(p.names()):
            # zero every sublayer's output projection so residuals carry x
            if any(name.endswith(s) for s in
                   (".ff1.w2", ".ff1.b2", ".ff2.w2", ".ff2.b2",
                    ".attn.wo", ".attn.bo", ".fusion.wo", ".fusion.bo",
                    ".conv.pw2.w", ".conv.pw2.b")):
                p[name].data[:] = 0.0
        x = rng.standard_normal((5, 8))
        out = model.block(0, Tensor(x), model.project_env(toy_env(rng)))
        expected = ad.layer_norm(Tensor(x), p["block0.out_norm.g"],
                                 p["block0.out_norm.b"])
        np.testing.assert_allclose(out.data, expected.data, atol=1e-12)

    def test_micro_gradcheck(self, rng):
        model = AsrModel(micro_config(), seed=3)
        env = toy_env(rng)
        feats = rng.standard_normal((7, 6))
        labels = np.array([0, 2])
        worst = check_gradients(lambda: model.loss(feats, labels, env),
                                [p for _, p in model.params.items()], rtol=1e-3)
        assert worst < 1e-3


class TestFusionAttention:
    def build(self, mode, rng_seed=0, dim=8, heads=2):
        params = ParameterSet()
        layer = FusionAttention(params, "fusion", dim, heads, mode,
                                substream(rng_seed, "t"), np.float64)
        return layer, params

    def test_single_env_vector_gives_identical_rows(self, rng):
        layer, _ = self.build(CROSS)
        x = Tensor(rng.standard_normal((5, 8)))
        env = Tensor(rng.standard_normal((1, 8)))
        out = layer(x, env).data
        for row in out[1:]:
            np.testing.assert_allclose(row, out[0], atol=1e-12)

    def test_parameter_parity_between_modes(self):
        _, p_cross = self.build(CROSS)
        _, p_base = self.build(BASELINE)
        assert count_parameters(p_cross) == count_parameters(p_base)

    def test_env_gradient_slot_stays_empty(self, rng):
        model = AsrModel(micro_config(), seed=1)
        env = toy_env(rng)
        frozen = Tensor(env.vectors)  # what the adapter consumes
        env_proj = ad.add(ad.matmul(frozen, model.params["env_adapter.w"]),
                          model.params["env_adapter.b"])
        x = Tensor(rng.standard_normal((4, 8)))
        out = model.fusion[0](x, env_proj)
        ad.sum_(ad.mul(out, out)).backward()
        assert frozen.grad is None
        assert model.params["env_adapter.w"].grad is not None

    def test_cross_mode_requires_env(self, rng):
        layer, _ = self.build(CROSS)
        with pytest.raises(ValueError, match="requires env"):
            layer(Tensor(rng.standard_normal((3, 8))), None)

    def test_output_reads_env_content(self, rng):
        model = AsrModel(micro_config(), seed=2)
        feats = rng.standard_normal((7, 6))
        env = toy_env(rng, length=5)
        flat = EnvEmbeddings(np.tile(env.vectors.mean(axis=0), (5, 1)))
        with ad.no_grad():
            a = model.encode(feats, env).data
            b = model.encode(feats, flat).data
        assert np.linalg.norm(a - b) > 1e-6


class TestBuildModels:
    def test_exact_parameter_parity(self):
        fusion, baseline = build_models(ConformerConfig(), seed=0)
        assert count_parameters(fusion.params) == count_parameters(baseline.params)

    def test_zeroed_fusion_outputs_identical(self, rng):
        fusion, baseline = build_models(micro_config(), seed=5)
        for model in (fusion, baseline):
            model.params["block0.fusion.wo"].data[:] = 0.0
            model.params["block0.fusion.bo"].data[:] = 0.0
        feats = rng.standard_normal((9, 6))
        env = toy_env(rng)
        with ad.no_grad():
            a = fusion.encode(feats, env).data
            b = baseline.encode(feats, None).data
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_toy_count_matches_layer_inventory(self):
        cfg = ConformerConfig()  # dim 64, 2 blocks, kernel 7, vocab 8
        fusion, _ = build_models(cfg, seed=0)
        d, k, feat, v1 = 64, 7, 192, 9
        stem = 3 * feat * d + d
        adapter = cfg.env_dim * d + d
        ff = 2 * d + (d * 4 * d + 4 * d) + (4 * d * d + d)
        attn = 2 * d + 4 * (d * d + d)
        conv = 2 * d + (d * 2 * d + 2 * d) + (k * d + d) + 2 * d + (d * d + d)
        block = 2 * ff + 2 * attn + conv + 2 * d
        pred = v1 * d + 2 * d * d + d
        joint = 2 * d * d + d + d * v1 + v1
        expected = stem + adapter + cfg.num_blocks * block + pred + joint
        assert count_parameters(fusion.params) == expected

    def test_shared_parts_share_init(self):
        fusion, baseline = build_models(micro_config(), seed=9)
        for name, p in fusion.params.items():
            np.testing.assert_array_equal(p.data, baseline.params[name].data)

    def test_baseline_runs_without_env(self, rng):
        _, baseline = build_models(micro_config(), seed=0)
        out = baseline.encode(rng.standard_normal((8, 6)), None)
        assert out.data.shape == (3, 8)

    def test_cross_needs_env(self, rng):
        fusion, _ = build_models(micro_config(), seed=0)
        with pytest.raises(ValueError, match="needs env"):
            fusion.encode(rng.standard_normal((8, 6)), None)


class TestFreezeContract:
    def test_env_model_unchanged_by_asr_steps(self, rng):
        from envasr.env_encoder import EnvEncoder, EnvEncoderConfig, parameter_hash
        from envasr.env_encoder import extract_env_embeddings
        env_cfg = EnvEncoderConfig(model_dim=4, num_blocks=1, heads=2, vocab_size=6,
                                   audio_patch_dim=6, video_patch_dim=12,
                                   max_audio_positions=16, max_video_steps=2,
                                   max_grid_rows=2, max_grid_cols=2)
        env_model = EnvEncoder(env_cfg, seed=0)
        audio = rng.standard_normal((10, 6))
        env = extract_env_embeddings(env_model, audio)
        before = parameter_hash(env_model.params)

        asr = AsrModel(micro_config(env_dim=4), seed=1)
        labels = np.array([1, 0, 2])
        for _ in range(5):
            asr.loss(rng.standard_normal((9, 6)), labels, env).backward()
            adam_step(asr.params, 1e-3)
        assert parameter_hash(env_model.params) == before
