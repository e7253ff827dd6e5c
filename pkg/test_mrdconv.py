import numpy as np
import pytest

from errors import ConfigurationError, ShapeError
from mrdconv import (
    BRANCH_ORDER,
    BranchKind,
    BranchWeights,
    MrdConvInferWeights,
    MrdConvTrainWeights,
    embed_to_5x5,
    forward_infer,
    forward_train,
    fuse_conv_bn,
    infer_param_count,
    init_train_weights,
    reparameterize,
    train_param_count,
)
from tensor_core import BatchNormParams, Conv2dParams, batchnorm_infer, conv2d


def random_branch(rng, kind, cin=3, mid=4):
    conv = Conv2dParams(rng.uniform(-1, 1, (mid, cin) + kind.kernel), None, kind.dilation, kind.padding)
    bn = BatchNormParams(
        gamma=rng.uniform(-1, 1, mid),
        beta=rng.uniform(-1, 1, mid),
        running_mean=rng.uniform(-1, 1, mid),
        running_var=rng.uniform(0.1, 2.0, mid),
    )
    return conv, bn


@pytest.mark.parametrize("kind", BRANCH_ORDER, ids=lambda k: k.name)
def test_branch_geometry_preserves_size(kind):
    x = np.zeros((1, 1, 7, 9), dtype=np.float32)
    out = conv2d(x, Conv2dParams(np.zeros((1, 1) + kind.kernel), None, kind.dilation, kind.padding))
    assert out.shape == x.shape


def test_grid_positions():
    assert (BranchKind.S3.grid_rows(), BranchKind.S3.grid_cols()) == ([0, 2, 4], [0, 2, 4])
    assert (BranchKind.S2.grid_rows(), BranchKind.S2.grid_cols()) == ([1, 3], [1, 3])
    assert (BranchKind.S1.grid_rows(), BranchKind.S1.grid_cols()) == ([2], [2])
    assert (BranchKind.V.grid_rows(), BranchKind.V.grid_cols()) == ([0, 2, 4], [1, 3])
    assert (BranchKind.H.grid_rows(), BranchKind.H.grid_cols()) == ([1, 3], [0, 2, 4])


def test_forward_train_zero_network_gives_fusion_bias():
    weights = init_train_weights(3, 2, rep_scale=2, zero=True)
    bias = np.array([0.25, -0.5])
    weights = MrdConvTrainWeights(weights.branches, Conv2dParams(weights.fusion.weight, bias))
    out = forward_train(np.random.default_rng(0).random((1, 3, 5, 5)), weights)
    np.testing.assert_allclose(out[0, 0], 0.25, atol=1e-7)
    np.testing.assert_allclose(out[0, 1], -0.5, atol=1e-7)


def test_forward_train_single_s1_branch(rng):
    weights = init_train_weights(1, 1, rep_scale=2, zero=True)
    branches = dict(weights.branches)
    branches[BranchKind.S1] = BranchWeights(
        Conv2dParams(np.ones((2, 1, 1, 1)), None),
        BatchNormParams.identity(2, epsilon=1e-12),
    )
    fusion = Conv2dParams(np.array([0.5, 0.5]).reshape(1, 2, 1, 1), np.zeros(1))
    x = rng.random((1, 1, 6, 6)).astype(np.float32)
    out = forward_train(x, MrdConvTrainWeights(branches, fusion))
    np.testing.assert_allclose(out, x, atol=1e-6)


def test_forward_train_matches_per_branch_oracle(rng, naive_conv):
    weights = init_train_weights(3, 2, rep_scale=2, rng=rng)
    x = rng.random((1, 3, 4, 4)).astype(np.float32)

    total = np.zeros((1, 4, 4, 4))
    for kind in BRANCH_ORDER:
        branch = weights.branches[kind]
        y = naive_conv(x, branch.conv.weight, None, kind.dilation, kind.padding)
        t = branch.bn.gamma / np.sqrt(branch.bn.running_var.astype(np.float64) + branch.bn.epsilon)
        total += (y - branch.bn.running_mean[None, :, None, None]) * t[None, :, None, None] \
            + branch.bn.beta[None, :, None, None]
    expected = naive_conv(total, weights.fusion.weight, weights.fusion.bias)

    np.testing.assert_allclose(forward_train(x, weights), expected, atol=1e-5)


def test_forward_train_rejects_broken_geometry():
    good = init_train_weights(1, 1, rep_scale=1, zero=True)
    branches = dict(good.branches)
    # S3 geometry without padding shrinks the output
    broken_conv = Conv2dParams(np.zeros((1, 1, 3, 3)), None, (2, 2), (2, 2))
    object.__setattr__(broken_conv, 'padding', (0, 0))
    branches[BranchKind.S3] = BranchWeights(broken_conv, good.branches[BranchKind.S3].bn)
    layer = object.__new__(MrdConvTrainWeights)
    object.__setattr__(layer, 'branches', branches)
    object.__setattr__(layer, 'fusion', good.fusion)
    with pytest.raises(ShapeError):
        forward_train(np.zeros((1, 1, 8, 8), dtype=np.float32), layer)


def test_train_weights_validate_geometry():
    good = init_train_weights(2, 2, rep_scale=1, zero=True)
    branches = dict(good.branches)
    branches[BranchKind.S2] = BranchWeights(
        Conv2dParams(np.zeros((2, 2, 2, 2)), None, (2, 2), (0, 0)), good.branches[BranchKind.S2].bn
    )
    with pytest.raises(ConfigurationError):
        MrdConvTrainWeights(branches, good.fusion)
    with pytest.raises(ConfigurationError):
        MrdConvTrainWeights({BranchKind.S1: good.branches[BranchKind.S1]}, good.fusion)


def test_fuse_conv_bn_identity():
    weight = np.arange(8, dtype=np.float32).reshape(2, 1, 2, 2)
    eps = 1e-5
    bn = BatchNormParams(np.ones(2), np.zeros(2), np.zeros(2), np.full(2, 1.0 - eps), epsilon=eps)
    fused = fuse_conv_bn(Conv2dParams(weight, None, (2, 2), (1, 1)), bn)
    np.testing.assert_allclose(fused.weight, weight, atol=1e-6)
    np.testing.assert_allclose(fused.bias, 0.0, atol=1e-7)
    assert fused.dilation == (2, 2) and fused.padding == (1, 1)


def test_fuse_conv_bn_hand_value():
    weight = np.full((1, 1, 3, 3), 0.3)
    bn = BatchNormParams([2.0], [0.5], [1.0], [3.0], epsilon=1.0)
    fused = fuse_conv_bn(Conv2dParams(weight), bn)
    np.testing.assert_allclose(fused.weight, weight, atol=1e-7)
    assert fused.bias[0] == pytest.approx(-0.5)


def test_fuse_conv_bn_forward_equivalence(rng):
    conv, bn = random_branch(rng, BranchKind.S3)
    x = rng.random((1, 3, 9, 9)).astype(np.float32)
    expected = batchnorm_infer(conv2d(x, conv), bn)
    np.testing.assert_allclose(conv2d(x, fuse_conv_bn(conv, bn)), expected, atol=1e-5)


def test_embed_s1_center():
    embedded = embed_to_5x5(Conv2dParams(np.full((1, 1, 1, 1), 0.7)), BranchKind.S1)
    expected = np.zeros((5, 5))
    expected[2, 2] = 0.7
    np.testing.assert_allclose(embedded[0, 0], expected, atol=1e-7)


def test_embed_s3_even_grid():
    embedded = embed_to_5x5(Conv2dParams(np.ones((1, 1, 3, 3)), None, (2, 2), (2, 2)), BranchKind.S3)
    grid = embedded[0, 0]
    assert grid[::2, ::2].sum() == 9
    assert np.count_nonzero(grid) == 9
    assert np.count_nonzero(grid == 0) == 16


def test_embed_rejects_wrong_geometry():
    with pytest.raises(ConfigurationError):
        embed_to_5x5(Conv2dParams(np.ones((1, 1, 3, 3)), None, (2, 2), (2, 2)), BranchKind.V)


@pytest.mark.parametrize("kind", BRANCH_ORDER, ids=lambda k: k.name)
def test_embedding_reproduces_branch(kind, rng):
    for _ in range(20):
        conv, bn = random_branch(rng, kind, cin=3, mid=4)
        fused = fuse_conv_bn(conv, bn)
        embedded = Conv2dParams(embed_to_5x5(fused, kind), fused.bias, (1, 1), (2, 2))
        height, width = rng.integers(1, 12, size=2)
        x = rng.random((1, 3, height, width)).astype(np.float32)
        np.testing.assert_allclose(conv2d(x, embedded), conv2d(x, fused), atol=1e-5)


def test_reparameterize_zero_weights_keeps_fusion_bias():
    weights = init_train_weights(3, 2, rep_scale=4, zero=True)
    weights = MrdConvTrainWeights(weights.branches, Conv2dParams(weights.fusion.weight, [0.1, -0.2]))
    collapsed = reparameterize(weights)
    assert not collapsed.conv.weight.any()
    np.testing.assert_allclose(collapsed.conv.bias, [0.1, -0.2], atol=1e-7)


def test_reparameterize_single_mid_channel_passes_k_sum(rng):
    weights = init_train_weights(2, 1, rep_scale=1, rng=rng)
    weights = MrdConvTrainWeights(weights.branches, Conv2dParams(np.ones((1, 1, 1, 1)), np.zeros(1)))
    collapsed = reparameterize(weights)

    k_sum = np.zeros((1, 2, 5, 5))
    for kind in BRANCH_ORDER:
        fused = fuse_conv_bn(weights.branches[kind].conv, weights.branches[kind].bn)
        k_sum += embed_to_5x5(fused, kind)
    np.testing.assert_allclose(collapsed.conv.weight, k_sum, atol=1e-5)


def test_reparameterize_does_not_mutate(rng):
    weights = init_train_weights(3, 3, rep_scale=2, rng=rng)
    before = weights.branches[BranchKind.V].conv.weight.copy()
    reparameterize(weights)
    np.testing.assert_array_equal(weights.branches[BranchKind.V].conv.weight, before)


@pytest.mark.parametrize("rep_scale", [1, 4])
@pytest.mark.parametrize("cout", [1, 3, 8])
@pytest.mark.parametrize("cin", [1, 3, 8])
def test_collapsed_form_matches_training_form(cin, cout, rep_scale):
    rng = np.random.default_rng(cin * 100 + cout * 10 + rep_scale)
    worst = 0.0
    for _ in range(100):
        weights = init_train_weights(cin, cout, rep_scale, rng=rng)
        height, width = rng.integers(1, 33, size=2)
        x = rng.random((1, cin, height, width)).astype(np.float32)
        diff = np.abs(forward_train(x, weights) - forward_infer(x, reparameterize(weights))).max()
        worst = max(worst, float(diff))
    assert worst < 1e-4


def test_forward_infer_identity_center(rng):
    weight = np.zeros((2, 2, 5, 5))
    weight[0, 0, 2, 2] = weight[1, 1, 2, 2] = 1.0
    x = rng.random((1, 2, 6, 6)).astype(np.float32)
    out = forward_infer(x, MrdConvInferWeights(Conv2dParams(weight, None, (1, 1), (2, 2))))
    np.testing.assert_allclose(out, x, atol=1e-7)


def test_infer_weights_require_5x5():
    with pytest.raises(ConfigurationError):
        MrdConvInferWeights(Conv2dParams(np.zeros((1, 1, 3, 3)), None, (1, 1), (1, 1)))


def test_param_counts():
    assert infer_param_count(3, 8) == 608
    assert train_param_count(3, 8, 4) == 32 * 3 * 26 + 2 * 32 * 5 + 8 * 32 + 8
    for cin in (1, 3, 8):
        for cout in (1, 3, 8):
            for r in (1, 4, 8):
                assert infer_param_count(cin, cout) < train_param_count(cin, cout, r)
