"""Model forward contracts: shapes, attention identities, ablation flags,
determinism, and gradient flow through both mask and feature paths."""

import numpy as np
import pytest

from fetchground import tensor as T
from fetchground.model import Model, ModelConfig, pad_token_batch
from fetchground.optim import grad_check
from fetchground.tensor import Tensor, backward


def micro_config(**kw):
    base = dict(vocab_size=12, embed_dim=4, lstm_hidden=4, lstm_layers=1,
                max_tokens=8, input_size=8, conv_channels=(2, 3, 4),
                target_dim=6, embed_out=5, mlp_hidden=7)
    base.update(kw)
    return ModelConfig(**base)


def desk_config(**kw):
    base = dict(vocab_size=40)
    base.update(kw)
    return ModelConfig(**base)


def vis_inputs(cfg, bsz, seed=0):
    rng = np.random.default_rng(seed)
    s = cfg.input_size
    return (rng.random((bsz, 3, s, s)), rng.random((bsz, 3, s, s)),
            rng.uniform(-1, 1, (bsz, cfg.relation_dim)))


class TestShapes:
    def test_desk_dims(self):
        cfg = desk_config()
        m = Model(cfg, seed=1)
        m.set_mode("eval")
        lang = m.encode_language([[2, 3, 4], [5, 6, 7, 8]])
        assert lang["f_l"].shape == (2, 128, 2)
        assert lang["a_l"].shape == (2, 128, 2)
        assert lang["o_l"].shape == (2, 128, 2)
        assert lang["zl"].shape == (2, 64)
        vis = m.encode_visual(*vis_inputs(cfg, 2))
        assert vis["f_t"].shape == (2, 64)
        assert vis["a_t"].shape == (2, 64)
        assert vis["o_t"].shape == (2, 64)
        assert vis["f_c"].shape == (2, 32, 4, 4)
        assert vis["a_c"].shape == (2, 1, 4, 4)
        assert vis["o_c"].shape == (2, 32, 4, 4)
        assert vis["pooled"].shape == (2, 32)
        assert vis["zv"].shape == (2, 64)
        probs = m.predict_source(vis["zv"], lang["zl"])
        assert probs.shape == (2, 4)
        assert np.all(np.abs(probs.data.sum(axis=1) - 1.0) < 1e-12)

    def test_pad_token_batch(self):
        ids, lengths = pad_token_batch([[5, 6], [7, 8, 9], [1]], 8)
        assert ids.shape == (3, 3)
        assert lengths.tolist() == [2, 3, 1]
        assert ids[0].tolist() == [5, 6, 0]
        ids, lengths = pad_token_batch([[1] * 50], 32)
        assert ids.shape == (1, 32) and lengths[0] == 32


class TestAttentionIdentities:
    def test_masks_strictly_in_unit_interval(self):
        cfg = micro_config()
        m = Model(cfg, seed=3)
        m.set_mode("eval")
        lang = m.encode_language([[2, 3], [4, 5, 6]])
        vis = m.encode_visual(*vis_inputs(cfg, 3, seed=1))
        for a in (lang["a_l"], vis["a_t"], vis["a_c"]):
            assert np.all(a.data > 0) and np.all(a.data < 1)

    def test_attended_equals_elementwise_product(self):
        cfg = micro_config()
        m = Model(cfg, seed=3)
        m.set_mode("eval")
        lang = m.encode_language([[2, 3, 4]])
        assert np.array_equal(lang["o_l"].data,
                              lang["a_l"].data * lang["f_l"].data)
        vis = m.encode_visual(*vis_inputs(cfg, 2, seed=2))
        assert np.array_equal(vis["o_t"].data, vis["a_t"].data * vis["f_t"].data)
        assert np.array_equal(vis["o_c"].data, vis["a_c"].data * vis["f_c"].data)

    def test_forced_saturated_mask_is_identity(self):
        cfg = micro_config()
        m = Model(cfg, seed=4)
        m.set_mode("eval")
        m.target.side.w.data[...] = 0.0
        m.target.side.b.data[...] = 1000.0
        vis = m.encode_visual(*vis_inputs(cfg, 1, seed=3))
        assert np.allclose(vis["o_t"].data, vis["f_t"].data, atol=1e-12)

    def test_zero_side_gives_half_mask(self):
        cfg = micro_config()
        m = Model(cfg, seed=4)
        m.set_mode("eval")
        m.language.side.w.data[...] = 0.0
        m.language.side.b.data[...] = 0.0
        lang = m.encode_language([[2, 3]])
        assert np.all(lang["a_l"].data == 0.5)
        assert np.allclose(lang["o_l"].data, 0.5 * lang["f_l"].data, atol=0)


class TestAblationFlags:
    def test_disabled_branch_passes_features_through(self):
        cfg = micro_config(use_lab=False, use_tab=False, use_ncab=False)
        m = Model(cfg, seed=5)
        m.set_mode("eval")
        lang = m.encode_language([[2, 3]])
        assert lang["a_l"] is None
        assert lang["o_l"] is lang["f_l"]
        vis = m.encode_visual(*vis_inputs(cfg, 1))
        assert vis["a_t"] is None and vis["o_t"] is vis["f_t"]
        assert vis["a_c"] is None and vis["o_c"] is vis["f_c"]

    def test_fusion_dims_invariant_under_flags(self):
        for flags in ((True, True, True), (False, False, False),
                      (True, False, False), (True, True, False)):
            cfg = micro_config(use_lab=flags[0], use_tab=flags[1],
                               use_ncab=flags[2])
            m = Model(cfg, seed=6)
            m.set_mode("eval")
            zl = m.encode_language([[2, 3]])["zl"]
            zv = m.encode_visual(*vis_inputs(cfg, 1))["zv"]
            assert zl.shape == (1, cfg.embed_out)
            assert zv.shape == (1, cfg.embed_out)

    def test_flag_sets_share_parameter_layout(self):
        a = Model(micro_config(), seed=7)
        b = Model(micro_config(use_ncab=False), seed=7)
        assert [p.name for p in a.parameters()] == [p.name for p in b.parameters()]


class TestDeterminismAndGradients:
    def test_same_seed_same_outputs(self):
        cfg = micro_config()
        outs = []
        for _ in range(2):
            m = Model(cfg, seed=11)
            m.set_mode("eval")
            zv = m.encode_visual(*vis_inputs(cfg, 2, seed=5))["zv"]
            outs.append(zv.data.copy())
        assert np.array_equal(outs[0], outs[1])

    def test_permuting_rows_permutes_outputs(self):
        cfg = micro_config()
        m = Model(cfg, seed=12)
        m.set_mode("eval")
        tp, cp, xr = vis_inputs(cfg, 3, seed=6)
        fwd = m.encode_visual(tp, cp, xr)["zv"].data
        perm = [2, 0, 1]
        swapped = m.encode_visual(tp[perm], cp[perm], xr[perm])["zv"].data
        assert np.allclose(swapped, fwd[perm], atol=1e-12)

    def test_grads_reach_mask_and_feature_paths(self):
        cfg = micro_config()
        m = Model(cfg, seed=13)
        m.set_mode("train")
        lang = m.encode_language([[2, 3, 4], [5, 6, 7]])
        backward(T.tsum(T.mul(lang["o_l"], lang["o_l"])))
        assert np.abs(m.language.side.w.grad).max() > 0
        assert np.abs(m.language.embedding.table.grad).max() > 0
        assert np.abs(m.language.lstm.parameters()[0].grad).max() > 0

    def test_full_model_grad_check(self):
        cfg = micro_config()
        m = Model(cfg, seed=14)
        m.set_mode("train", freeze_stats=True)
        tp, cp, xr = vis_inputs(cfg, 2, seed=7)
        tokens = [[2, 3, 4], [5, 6]]

        def f():
            lang = m.encode_language(tokens)
            vis = m.encode_visual(tp, cp, xr)
            probs = m.predict_source(vis["zv"], lang["zl"])
            sims = T.cosine_rows(lang["zl"], vis["zv"])
            # the 0.1 scale keeps probe noise on exactly-zero gradients
            # (dead units) below the floored relative-error denominator
            return T.mul(T.add(T.tsum(T.mul(probs, probs)), T.tsum(sims)),
                         Tensor(0.1))

        # spot-check a representative subset so runtime stays small
        names = {"lab.side.weight", "tab.side.bias", "ncab.side.weight",
                 "fuse.vmlp.fc3.weight", "fuse.src.fc1.bias",
                 "lang.embed.table", "lang.lstm.l0.fwd.weight",
                 "tgt.conv1.weight", "ctx.conv3.bias", "fuse.vmlp.bn1.gamma"}
        params = [p for p in m.parameters() if p.name in names]
        assert len(params) == len(names)
        # h=1e-4: at 1e-5 the probe noise on ~1e-9-magnitude gradient
        # components exceeds the tolerance even for a correct backward
        rep = grad_check(f, params, h=1e-4, tol=1e-4)
        assert rep.max_rel_error < 1e-4, (rep.worst_param, rep.max_rel_error)


class TestBatchNormModes:
    def test_eval_single_row_uses_running_stats(self):
        cfg = micro_config()
        m = Model(cfg, seed=15)
        m.set_mode("train")
        tp, cp, xr = vis_inputs(cfg, 6, seed=8)
        for _ in range(3):
            m.encode_visual(tp, cp, xr)
        m.set_mode("eval")
        one = m.encode_visual(tp[:1], cp[:1], xr[:1])["zv"].data
        both = m.encode_visual(tp[:2], cp[:2], xr[:2])["zv"].data
        assert np.allclose(one[0], both[0], atol=1e-12)
