"""Fusion block forward pass: per-op oracles, degenerate forms, determinism."""

import numpy as np
import pytest

from msfusion.fusion import (
    FusionConfig,
    FusionWeights,
    cascade_strip_mix,
    channel_mix,
    conv2d_same,
    deinterleave_rows,
    dws_conv,
    fusion_forward,
    gated_strip_mix,
    gelu,
    global_response_norm,
    interleave_rows,
    merge_patches,
    pointwise_affine,
    softmax,
    split_patches,
    strip_conv,
    temporal_adaptive_conv,
    temporal_fuse,
)
from oracles import (
    gelu_ref,
    loop_conv1d_frames,
    loop_conv2d,
    loop_strip_conv,
    reference_forward,
    shift_depthwise,
)

RNG = np.random.default_rng


def rand_features(shape, seed):
    return RNG(seed).standard_normal(shape)


def delta_kernel(kh, kw):
    k = np.zeros((kh, kw))
    k[kh // 2, kw // 2] = 1.0
    return k


class TestStripConv:
    def test_centered_delta_is_identity(self):
        x = rand_features((2, 3, 5, 6), 0)
        np.testing.assert_array_equal(strip_conv(x, delta_kernel(3, 3)), x)

    def test_ones_kernel_hand_case(self):
        # all-ones 1x3 kernel over the row [1, 2, 3] with zero padding
        x = np.array([[[[1.0, 2.0, 3.0]]]])
        out = strip_conv(x, np.ones((1, 3)))
        np.testing.assert_allclose(out[0, 0, 0], [3.0, 6.0, 5.0])

    def test_even_kernel_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            strip_conv(rand_features((1, 1, 4, 4), 1), np.ones((2, 3)))

    def test_per_channel_kernel_count_checked(self):
        with pytest.raises(ValueError, match="channel"):
            strip_conv(rand_features((1, 3, 4, 4), 1), np.ones((2, 1, 3)))

    @pytest.mark.parametrize("kshape", [(1, 5), (5, 1), (5, 7), (3, 3)])
    def test_matches_naive_loop(self, kshape):
        x = rand_features((2, 3, 8, 9), 2)
        kernel = RNG(3).standard_normal(kshape)
        np.testing.assert_allclose(
            strip_conv(x, kernel), loop_strip_conv(x, kernel), atol=1e-10
        )

    def test_per_channel_kernels_match_naive_loop(self):
        x = rand_features((2, 4, 6, 6), 4)
        kernels = RNG(5).standard_normal((4, 3, 5))
        np.testing.assert_allclose(
            strip_conv(x, kernels), loop_strip_conv(x, kernels), atol=1e-10
        )


class TestDwsConv:
    def test_identity_kernels(self):
        x = rand_features((2, 3, 4, 4), 6)
        depth = np.stack([delta_kernel(3, 3)] * 3)
        np.testing.assert_allclose(dws_conv(x, depth, np.eye(3)), x, atol=1e-12)

    def test_unit_spatial_dims_reduce_to_pointwise(self):
        x = rand_features((2, 3, 1, 1), 7)
        depth = np.stack([delta_kernel(1, 1)] * 3)
        weight = RNG(8).standard_normal((3, 3))
        bias = RNG(9).standard_normal(3)
        np.testing.assert_allclose(
            dws_conv(x, depth, weight, bias),
            pointwise_affine(x, weight, bias),
            atol=1e-12,
        )

    def test_matches_naive_loop(self):
        x = rand_features((1, 2, 4, 4), 10)
        depth = RNG(11).standard_normal((2, 3, 3))
        weight = RNG(12).standard_normal((2, 2))
        bias = RNG(13).standard_normal(2)
        expected = loop_strip_conv(x, depth)
        expected = np.einsum("fchw,oc->fohw", expected, weight) + bias[:, None, None]
        np.testing.assert_allclose(dws_conv(x, depth, weight, bias), expected, atol=1e-5)

    def test_channel_mismatch_names_tensor(self):
        with pytest.raises(ValueError, match="depthwise kernel"):
            dws_conv(rand_features((1, 3, 4, 4), 1), np.ones((2, 3, 3)), np.eye(3))


class TestInterleave:
    def test_definitional_order(self):
        vis = np.arange(8, dtype=float).reshape(1, 1, 2, 4)
        ir = 100 + np.arange(8, dtype=float).reshape(1, 1, 2, 4)
        out = interleave_rows(vis, ir)
        np.testing.assert_array_equal(out[0, 0, 0], vis[0, 0, 0])
        np.testing.assert_array_equal(out[0, 0, 1], ir[0, 0, 0])
        np.testing.assert_array_equal(out[0, 0, 2], vis[0, 0, 1])
        np.testing.assert_array_equal(out[0, 0, 3], ir[0, 0, 1])

    def test_roundtrip_bit_exact(self):
        vis = rand_features((3, 4, 5, 6), 14)
        ir = rand_features((3, 4, 5, 6), 15)
        back_vis, back_ir = deinterleave_rows(interleave_rows(vis, ir))
        np.testing.assert_array_equal(back_vis, vis)
        np.testing.assert_array_equal(back_ir, ir)

    def test_single_row(self):
        vis = np.ones((1, 1, 1, 3))
        ir = 2 * np.ones((1, 1, 1, 3))
        out = interleave_rows(vis, ir)
        assert out.shape == (1, 1, 2, 3)
        np.testing.assert_array_equal(out[0, 0], [[1, 1, 1], [2, 2, 2]])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            interleave_rows(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 3, 2)))


class TestCascadeStripMix:
    def test_single_group_is_row_then_column(self):
        x = rand_features((1, 4, 6, 6), 16)
        row = RNG(17).standard_normal((1, 1, 5))
        col = RNG(18).standard_normal((1, 5, 1))
        expected = strip_conv(strip_conv(x, row[0]), col[0])
        np.testing.assert_array_equal(cascade_strip_mix(x, row, col), expected)

    def test_zero_kernels_give_zeros(self):
        x = rand_features((1, 4, 6, 6), 19)
        out = cascade_strip_mix(x, np.zeros((2, 1, 5)), np.zeros((2, 5, 1)))
        np.testing.assert_array_equal(out, np.zeros_like(x))

    def test_two_group_cascade_matches_hand_wiring(self):
        x = rand_features((2, 4, 6, 5), 20)
        rows = RNG(21).standard_normal((2, 1, 5))
        cols = RNG(22).standard_normal((2, 5, 1))
        g0 = shift_depthwise(shift_depthwise(x[:, :2], rows[0]), cols[0])
        g1_in = x[:, 2:] + g0
        g1 = shift_depthwise(shift_depthwise(g1_in, rows[1]), cols[1])
        expected = np.concatenate([g0, g1], axis=1)
        np.testing.assert_allclose(cascade_strip_mix(x, rows, cols), expected, atol=1e-10)

    def test_indivisible_channels_rejected(self):
        with pytest.raises(ValueError, match="divisible"):
            cascade_strip_mix(rand_features((1, 5, 4, 4), 1), np.zeros((2, 1, 3)), np.zeros((2, 3, 1)))


class TestGatedStripMix:
    def _weights(self, c, seed=23):
        rng = RNG(seed)
        return dict(
            height_kernel=rng.standard_normal((5, 7)),
            width_kernel=rng.standard_normal((7, 5)),
            gate_w1=rng.standard_normal((c, c)),
            gate_b1=rng.standard_normal(c),
            gate_w2=rng.standard_normal((c, c)),
            gate_b2=rng.standard_normal(c),
            gate_proj_w=rng.standard_normal(3),
            gate_proj_b=rng.standard_normal(3),
        )

    def test_equal_logits_average_three_paths(self):
        x = rand_features((1, 3, 8, 8), 24)
        w = self._weights(3)
        w["gate_proj_w"] = np.zeros(3)
        w["gate_proj_b"] = np.full(3, 0.7)
        r = strip_conv(x, w["height_kernel"])
        c = strip_conv(x, w["width_kernel"])
        out = gated_strip_mix(x, **w)
        np.testing.assert_allclose(out, (r + c + x) / 3.0, atol=1e-12)

    def test_passthrough_limit(self):
        x = rand_features((1, 3, 8, 8), 25)
        w = self._weights(3)
        w["height_kernel"] = np.zeros((5, 7))
        w["width_kernel"] = np.zeros((7, 5))
        w["gate_proj_w"] = np.zeros(3)
        w["gate_proj_b"] = np.array([-30.0, -30.0, 30.0])
        np.testing.assert_allclose(gated_strip_mix(x, **w), x, atol=1e-9)

    def test_gates_positive_and_sum_to_one(self):
        x = rand_features((2, 4, 8, 8), 26)
        w = self._weights(4)
        r = strip_conv(x, w["height_kernel"])
        c = strip_conv(x, w["width_kernel"])
        hidden = gelu(pointwise_affine(r + c, w["gate_w1"], w["gate_b1"]))
        pooled = pointwise_affine(hidden, w["gate_w2"], w["gate_b2"]).mean(axis=(2, 3))
        gates = softmax(pooled[:, :, None] * w["gate_proj_w"] + w["gate_proj_b"], axis=-1)
        assert np.all(gates > 0)
        np.testing.assert_allclose(gates.sum(axis=-1), 1.0, atol=1e-6)

    def test_matches_hand_wiring_oracle(self):
        x = rand_features((2, 3, 6, 6), 27)
        w = self._weights(3, seed=28)
        r = shift_depthwise(x, w["height_kernel"])
        c = shift_depthwise(x, w["width_kernel"])
        hidden = gelu_ref(
            np.einsum("fchw,oc->fohw", r + c, w["gate_w1"]) + w["gate_b1"][:, None, None]
        )
        pooled = (
            np.einsum("fchw,oc->fohw", hidden, w["gate_w2"]) + w["gate_b2"][:, None, None]
        ).mean(axis=(2, 3))
        logits = pooled[:, :, None] * w["gate_proj_w"] + w["gate_proj_b"]
        e = np.exp(logits - logits.max(axis=-1, keepdims=True))
        gates = e / e.sum(axis=-1, keepdims=True)
        expected = (
            gates[:, :, 0][:, :, None, None] * r
            + gates[:, :, 1][:, :, None, None] * c
            + gates[:, :, 2][:, :, None, None] * x
        )
        np.testing.assert_allclose(gated_strip_mix(x, **w), expected, atol=1e-10)


class TestChannelMix:
    def _weights(self, c, seed=29, hidden=None):
        rng = RNG(seed)
        hidden = hidden or c
        return dict(
            conv_weight=rng.standard_normal((c, 1, 3, 3)),
            conv_bias=rng.standard_normal(c),
            grn_gamma=rng.standard_normal(c),
            grn_beta=rng.standard_normal(c),
            mlp_w1=rng.standard_normal((hidden, c)),
            mlp_b1=rng.standard_normal(hidden),
            mlp_w2=rng.standard_normal((c, hidden)),
            mlp_b2=rng.standard_normal(c),
        )

    def test_grn_neutral_parameters_are_identity(self):
        x = rand_features((2, 4, 5, 5), 30)
        out = global_response_norm(x, np.zeros(4), np.zeros(4))
        np.testing.assert_array_equal(out, x)

    def test_null_weights_residual_only(self):
        x = rand_features((2, 4, 6, 6), 31)
        w = {k: np.zeros_like(v) for k, v in self._weights(4).items()}
        np.testing.assert_array_equal(channel_mix(x, **w), x)

    def test_matches_composition_oracle(self):
        x = rand_features((2, 4, 6, 6), 32)
        w = self._weights(4, seed=33)
        y = loop_conv2d(x, w["conv_weight"], w["conv_bias"], groups=4)
        norms = np.sqrt((y * y).sum(axis=(2, 3), keepdims=True))
        y = (
            w["grn_gamma"][:, None, None] * (y * norms / (norms.mean(axis=1, keepdims=True) + 1e-6))
            + w["grn_beta"][:, None, None]
            + y
        )
        h = gelu_ref(np.einsum("fchw,oc->fohw", y, w["mlp_w1"]) + w["mlp_b1"][:, None, None])
        y = np.einsum("fchw,oc->fohw", h, w["mlp_w2"]) + w["mlp_b2"][:, None, None]
        np.testing.assert_allclose(channel_mix(x, **w), x + y, atol=1e-5)

    def test_indivisible_groups_rejected(self):
        x = rand_features((1, 4, 4, 4), 34)
        w = self._weights(4)
        with pytest.raises(ValueError, match="groups"):
            channel_mix(x, **w, groups=3)


class TestGroupedConv:
    def test_full_conv_matches_naive_loop(self):
        x = rand_features((2, 3, 5, 5), 35)
        weight = RNG(36).standard_normal((4, 3, 3, 3))
        bias = RNG(37).standard_normal(4)
        np.testing.assert_allclose(
            conv2d_same(x, weight, bias), loop_conv2d(x, weight, bias), atol=1e-10
        )

    def test_grouped_conv_matches_naive_loop(self):
        x = rand_features((2, 4, 5, 5), 38)
        weight = RNG(39).standard_normal((4, 2, 3, 3))
        np.testing.assert_allclose(
            conv2d_same(x, weight, groups=2), loop_conv2d(x, weight, groups=2), atol=1e-10
        )

    def test_bad_group_count_rejected(self):
        with pytest.raises(ValueError, match="groups"):
            conv2d_same(rand_features((1, 4, 4, 4), 1), np.zeros((4, 2, 3, 3)), groups=3)


class TestPatches:
    def test_patch_counts(self):
        x = rand_features((2, 3, 16, 16), 40)
        patched = split_patches(x, 4)
        assert patched.shape == (2, 16, 3, 16)  # P = 16, S = 16

    def test_roundtrip_exact(self):
        x = rand_features((2, 3, 12, 8), 41)
        back = merge_patches(split_patches(x, 4), 4, 12, 8)
        np.testing.assert_array_equal(back, x)

    def test_indivisible_patch_size_rejected(self):
        with pytest.raises(ValueError, match="patch size"):
            split_patches(rand_features((1, 1, 10, 10), 1), 4)


class TestTemporalFuse:
    def test_identity_mixing_on_prenormalized_input(self):
        # With identity mixing weights and neutral layer norm, the fused
        # delta equals the normalized concatenated patches; build an input
        # that is already zero-mean unit-variance along the patch axis so
        # normalization is (nearly) a no-op and verify the residual path.
        f, c, h, w, s = 2, 3, 4, 4, 2
        rng = RNG(42)
        z = rng.standard_normal((f, (h // s) * (w // s), c, 2 * s * s))
        z = (z - z.mean(axis=-1, keepdims=True)) / np.sqrt(
            z.var(axis=-1, keepdims=True) + 1e-5
        )
        vis = merge_patches(z[..., : s * s], s, h, w)
        ir = merge_patches(z[..., s * s :], s, h, w)
        fp = f * (h // s) * (w // s)
        out_vis, out_ir = temporal_fuse(
            vis,
            ir,
            np.ones(2 * s * s),
            np.zeros(2 * s * s),
            np.eye(fp),
            np.zeros(fp),
            s,
        )
        # delta = layer_norm(z) which is ~z because z is pre-normalized
        np.testing.assert_allclose(out_vis, 2 * vis, atol=1e-3)
        np.testing.assert_allclose(out_ir, 2 * ir, atol=1e-3)

    def test_degenerate_single_frame_single_patch(self):
        # F = 1 and P = 1 reduce the mixing map to a 1x1 affine (scalar).
        f, c, s = 1, 2, 2
        vis = rand_features((f, c, s, s), 43)
        ir = rand_features((f, c, s, s), 44)
        weight = np.array([[2.5]])
        bias = np.array([0.25])
        gamma = np.ones(2 * s * s)
        beta = np.zeros(2 * s * s)
        out_vis, out_ir = temporal_fuse(vis, ir, gamma, beta, weight, bias, s)
        z = np.concatenate([split_patches(vis, s), split_patches(ir, s)], axis=-1)
        mean = z.mean(axis=-1, keepdims=True)
        var = z.var(axis=-1, keepdims=True)
        normed = (z - mean) / np.sqrt(var + 1e-5)
        delta = 2.5 * normed + 0.25
        np.testing.assert_allclose(
            out_vis, vis + merge_patches(delta[..., : s * s], s, s, s), atol=1e-12
        )
        np.testing.assert_allclose(
            out_ir, ir + merge_patches(delta[..., s * s :], s, s, s), atol=1e-12
        )

    def test_bad_patch_size_rejected(self):
        with pytest.raises(ValueError, match="patch size"):
            temporal_fuse(
                np.zeros((1, 1, 5, 5)),
                np.zeros((1, 1, 5, 5)),
                np.ones(8),
                np.zeros(8),
                np.eye(1),
                np.zeros(1),
                2,
            )


class TestTemporalAdaptiveConv:
    def _calib(self, c, reduce, seed):
        rng = RNG(seed)
        return dict(
            conv1_w=rng.standard_normal((reduce, c, 3)),
            conv1_b=rng.standard_normal(reduce),
            conv2_w=rng.standard_normal((reduce, reduce, 3)),
            conv2_b=rng.standard_normal(reduce),
            fc_w=rng.standard_normal((c, reduce)),
            fc_b=rng.standard_normal(c),
        )

    def test_zeroed_calibration_is_plain_convolution(self):
        x = rand_features((3, 4, 6, 6), 45)
        base_w = RNG(46).standard_normal((4, 4, 3, 3))
        base_b = RNG(47).standard_normal(4)
        calib = {k: np.zeros_like(v) for k, v in self._calib(4, 2, 48).items()}
        out = temporal_adaptive_conv(x, base_w, base_b, **calib)
        np.testing.assert_allclose(out, conv2d_same(x, base_w, base_b), atol=1e-12)
        np.testing.assert_allclose(out, loop_conv2d(x, base_w, base_b), atol=1e-10)

    def test_single_frame(self):
        x = rand_features((1, 4, 5, 5), 49)
        base_w = RNG(50).standard_normal((4, 4, 3, 3))
        base_b = np.zeros(4)
        calib = self._calib(4, 2, 51)
        out = temporal_adaptive_conv(x, base_w, base_b, **calib)
        v = x.mean(axis=(2, 3))
        t = gelu_ref(loop_conv1d_frames(v, calib["conv1_w"], calib["conv1_b"]))
        t = loop_conv1d_frames(t, calib["conv2_w"], calib["conv2_b"])
        alpha = 1.0 + t @ calib["fc_w"].T + calib["fc_b"]
        expected = loop_conv2d(x, base_w * alpha[0][:, None, None, None], base_b)
        np.testing.assert_allclose(out, expected, atol=1e-8)

    def test_two_frame_scaled_kernel_oracle(self):
        x = rand_features((2, 3, 5, 5), 52)
        base_w = RNG(53).standard_normal((3, 3, 3, 3))
        base_b = RNG(54).standard_normal(3)
        calib = self._calib(3, 2, 55)
        out = temporal_adaptive_conv(x, base_w, base_b, **calib)
        v = x.mean(axis=(2, 3))
        t = gelu_ref(loop_conv1d_frames(v, calib["conv1_w"], calib["conv1_b"]))
        t = loop_conv1d_frames(t, calib["conv2_w"], calib["conv2_b"])
        alpha = 1.0 + t @ calib["fc_w"].T + calib["fc_b"]
        for frame in range(2):
            expected = loop_conv2d(
                x[frame : frame + 1], base_w * alpha[frame][:, None, None, None], base_b
            )
            np.testing.assert_allclose(out[frame : frame + 1], expected, atol=1e-5)


class TestFusionWeights:
    def test_seeded_is_deterministic(self):
        a = FusionWeights.seeded(seed=7)
        b = FusionWeights.seeded(seed=7)
        assert list(a.tensors) == list(b.tensors)
        for name in a.tensors:
            np.testing.assert_array_equal(a.tensors[name], b.tensors[name])

    def test_save_load_roundtrip(self, tmp_path):
        w = FusionWeights.seeded(seed=3)
        path = tmp_path / "w.sfwt"
        w.save(path)
        back = FusionWeights.load(path)
        for name in w.tensors:
            np.testing.assert_allclose(back.tensors[name], w.tensors[name], atol=1e-7)

    def test_missing_tensor_named_in_error(self):
        w = FusionWeights.seeded()
        del w.tensors["merge_weight"]
        with pytest.raises(ValueError, match="merge_weight"):
            w.validate(3, 8, 16, 16)

    def test_wrong_shape_named_in_error(self):
        w = FusionWeights.seeded()
        w.tensors["mlp1_weight"] = np.zeros((3, 3))
        with pytest.raises(ValueError, match="mlp1_weight"):
            w.validate(3, 8, 16, 16)

    def test_temporal_shape_depends_on_input(self):
        w = FusionWeights.seeded()
        with pytest.raises(ValueError, match="mlp2_weight"):
            w.validate(2, 8, 16, 16)  # FP differs from the seeded F=3


class TestFusionForward:
    def test_shape_contract(self):
        w = FusionWeights.seeded(seed=0)
        vis = rand_features((3, 8, 16, 16), 60)
        ir = rand_features((3, 8, 16, 16), 61)
        out_vis, out_ir = fusion_forward(vis, ir, w)
        assert out_vis.shape == vis.shape and out_ir.shape == ir.shape
        assert np.isfinite(out_vis).all() and np.isfinite(out_ir).all()

    def test_null_fusion_path_keeps_first_taps(self):
        # Zero every weight after the first residual tap (and make GRN and
        # the temporal stage neutral): the pre-temporal features must equal
        # the tap values, so the block output is tap + temporal delta of it.
        cfg = FusionConfig(frames=2, channels=4, height=8, width=8, patch_size=2, cascade_groups=2)
        w = FusionWeights.seeded(cfg, seed=1)
        for name in (
            "cascade_row_kernels",
            "cascade_col_kernels",
            "local_height_kernel",
            "local_width_kernel",
            "gate_proj_weight",
            "gate_proj_bias",
            "merge_weight",
            "merge_bias",
            "mix_conv_weight",
            "mix_conv_bias",
            "grn_gamma",
            "grn_beta",
            "mix_mlp_w1",
            "mix_mlp_b1",
            "mix_mlp_w2",
            "mix_mlp_b2",
            "mlp2_weight",
            "mlp2_bias",
        ):
            w.tensors[name] = np.zeros_like(w.tensors[name])
        vis = rand_features((2, 4, 8, 8), 62)
        ir = rand_features((2, 4, 8, 8), 63)
        vis1 = pointwise_affine(
            dws_conv(vis, w.tensor("dws_depth_vis"), w.tensor("dws_point_vis"), w.tensor("dws_point_bias_vis")),
            w.tensor("mlp1_weight"),
            w.tensor("mlp1_bias"),
        )
        ir1 = pointwise_affine(
            dws_conv(ir, w.tensor("dws_depth_ir"), w.tensor("dws_point_ir"), w.tensor("dws_point_bias_ir")),
            w.tensor("mlp1_weight"),
            w.tensor("mlp1_bias"),
        )
        out_vis, out_ir = fusion_forward(vis, ir, w)
        # zero mixing weight in the temporal stage leaves only the residual
        np.testing.assert_allclose(out_vis, vis1, atol=1e-12)
        np.testing.assert_allclose(out_ir, ir1, atol=1e-12)

    def test_deterministic_across_runs(self):
        w = FusionWeights.seeded(seed=2)
        vis = rand_features((3, 8, 16, 16), 64)
        ir = rand_features((3, 8, 16, 16), 65)
        a = fusion_forward(vis, ir, w)
        b = fusion_forward(vis.copy(), ir.copy(), w)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_matches_straight_line_reference(self):
        w = FusionWeights.seeded(seed=5)
        vis = rand_features((3, 8, 16, 16), 66)
        ir = rand_features((3, 8, 16, 16), 67)
        out_vis, out_ir = fusion_forward(vis, ir, w)
        ref_vis, ref_ir = reference_forward(vis, ir, w.tensors, w.mix_groups())
        assert np.max(np.abs(out_vis - ref_vis)) <= 1e-5
        assert np.max(np.abs(out_ir - ref_ir)) <= 1e-5

    def test_errors_carry_block_name(self):
        w = FusionWeights.seeded()
        vis = rand_features((3, 8, 16, 16), 68)
        w.tensors["gate_proj_weight"] = np.zeros(4)  # invalid length
        with pytest.raises(ValueError, match="gate_proj_weight"):
            fusion_forward(vis, vis, w)
        w = FusionWeights.seeded()
        w.tensors["cascade_row_kernels"] = np.zeros((4, 1, 4))  # even side
        with pytest.raises(ValueError, match="cascade mix: .*odd"):
            fusion_forward(vis, vis, w)


class TestActivations:
    def test_gelu_matches_reference(self):
        x = np.linspace(-4, 4, 101)
        np.testing.assert_allclose(gelu(x), gelu_ref(x), atol=1e-12)

    def test_softmax_rows(self):
        x = RNG(70).standard_normal((5, 7))
        out = softmax(x, axis=-1)
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-12)
        assert np.all(out > 0)
