import numpy as np
import pytest

from v2vlc.attention import (
    affinity_count,
    criss_cross_attention,
    criss_cross_dense_mask,
    criss_cross_mask,
    dense_attention,
    fuse,
    init_attention,
    init_fusion_head,
    inter_vehicle_attention,
    intra_vehicle_attention,
    v2v_attention,
)
from v2vlc.numerics import DimensionError, Tensor, gradcheck


def rand(rng, *shape):
    return Tensor(rng.standard_normal(shape))


@pytest.mark.parametrize("seed", range(10))
def test_criss_cross_matches_masked_dense(seed):
    rng = np.random.default_rng(seed)
    c, h, w = rng.integers(1, 5), rng.integers(1, 7), rng.integers(1, 7)
    q, k, v = rand(rng, c, h, w), rand(rng, c, h, w), rand(rng, c, h, w)
    dense = dense_attention(q, k, v, mask=criss_cross_dense_mask(h, w)).data
    np.testing.assert_allclose(criss_cross_attention(q, k, v).data, dense, atol=1e-5)


def test_dense_mask_allows_row_and_column_only():
    m = criss_cross_dense_mask(3, 4)
    assert np.all(m.sum(axis=1) == 3 + 4 - 1)
    assert m[0, 3] and m[0, 4] and not m[0, 5]


@pytest.mark.parametrize("h,w", [(1, 1), (2, 3), (4, 4), (6, 5)])
def test_affinity_counts(h, w):
    assert np.all(criss_cross_mask(h, w).sum(axis=2) == h + w - 1)
    assert affinity_count(h, w) == h * w * (h + w - 1)
    assert affinity_count(h, w, "dense") == (h * w) ** 2


def test_identical_keys_average_values():
    rng = np.random.default_rng(0)
    q, v = rand(rng, 3, 4, 4), rand(rng, 3, 4, 4)
    k = Tensor(np.ones((3, 4, 4)))
    out = dense_attention(q, k, v).data
    np.testing.assert_allclose(out, np.broadcast_to(v.data.mean(axis=(1, 2), keepdims=True), out.shape), atol=1e-12)


def test_weights_rows_sum_to_one():
    rng = np.random.default_rng(1)
    _, wts = criss_cross_attention(rand(rng, 2, 3, 5), rand(rng, 2, 3, 5), rand(rng, 2, 3, 5), return_weights=True)
    np.testing.assert_allclose(wts.data.sum(axis=2), 1.0, atol=1e-12)


def test_shift_of_keys_along_query_is_invariant():
    # adding a per-query constant to every logit leaves softmax unchanged
    rng = np.random.default_rng(2)
    q, k, v = rand(rng, 2, 4, 4), rand(rng, 2, 4, 4), rand(rng, 2, 4, 4)
    shift = np.zeros((2, 4, 4))
    shift[0] = 5.0
    q_flat = np.ones((2, 4, 4))
    q_flat[1] = 0.0
    base = criss_cross_attention(Tensor(q_flat), k, v).data
    moved = criss_cross_attention(Tensor(q_flat), Tensor(k.data + shift), v).data
    np.testing.assert_allclose(base, moved, atol=1e-12)


def test_shape_mismatch_raises():
    rng = np.random.default_rng(3)
    with pytest.raises(DimensionError):
        criss_cross_attention(rand(rng, 2, 3, 3), rand(rng, 2, 3, 4), rand(rng, 2, 3, 3))


def test_two_pass_receptive_field_covers_map():
    rng = np.random.default_rng(4)
    params = init_attention(2, rng, scale=None, residual=False)
    x = Tensor(rng.standard_normal((2, 4, 4)), requires_grad=True)
    intra_vehicle_attention(x, params)[:, 0, 0].sum().backward()
    reach = np.abs(x.grad).sum(axis=0)
    assert np.all(reach > 0)

    y = Tensor(x.data, requires_grad=True)
    criss_cross_attention(y, y, y)[:, 0, 0].sum().backward()
    one = np.abs(y.grad).sum(axis=0) > 0
    assert one[0].all() and one[:, 0].all() and not one[1:, 1:].any()


@pytest.mark.parametrize("seed", range(10))
def test_attention_gradcheck(seed):
    rng = np.random.default_rng(seed)
    args = [rand(rng, 2, 3, 4) for _ in range(3)]
    assert gradcheck(criss_cross_attention, args, seed=seed).passed
    assert gradcheck(lambda q, k, v: dense_attention(q, k, v), args, seed=seed).passed


def _full_params(c, rng, gamma=0.3):
    p = init_attention(c, rng, scale=1.0, residual=True, gamma=gamma, share_gate=0.7)
    p.update(init_fusion_head(c, rng))
    return p


def test_neighbour_order_is_irrelevant():
    rng = np.random.default_rng(5)
    p = _full_params(3, rng)
    h_e = rand(rng, 3, 4, 4)
    shared = {2: rand(rng, 3, 4, 4), 7: rand(rng, 3, 4, 4), 4: rand(rng, 3, 4, 4)}
    a = v2v_attention(h_e, shared, p).data
    b = v2v_attention(h_e, dict(reversed(list(shared.items()))), p).data
    assert np.array_equal(a, b)


def test_no_neighbours_gives_zero_inter():
    rng = np.random.default_rng(6)
    p = _full_params(2, rng)
    assert not inter_vehicle_attention(rand(rng, 2, 3, 3), {}, p).data.any()


def test_residual_gate_at_zero_passes_input():
    rng = np.random.default_rng(7)
    p = init_attention(2, rng, residual=True, gamma=0.0)
    x = rand(rng, 2, 3, 3)
    assert np.array_equal(intra_vehicle_attention(x, p).data, x.data)


def test_fuse_output_shape_and_nonnegative():
    rng = np.random.default_rng(8)
    head = init_fusion_head(4, rng)
    out = fuse(rand(rng, 4, 5, 5), rand(rng, 4, 5, 5), head).data
    assert out.shape == (4, 5, 5) and out.min() >= 0


def test_full_module_gradcheck():
    rng = np.random.default_rng(9)
    p = _full_params(2, rng)
    names = sorted(p)
    h_e, s1 = rand(rng, 2, 3, 3), rand(rng, 2, 3, 3)

    def fn(a, b, *ws):
        return v2v_attention(a, {1: b}, dict(zip(names, ws)))

    assert gradcheck(fn, [h_e, s1] + [p[n] for n in names]).passed
