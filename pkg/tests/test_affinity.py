import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from affinitynet import affinity as af
from affinitynet import ndcore as nd
from affinitynet.errors import KTooLarge, MissingGraph, NonFinite, ZeroVector


def test_cosine_identical_and_orthogonal():
    assert af.kernel_scores([[1.0, 1.0], [1.0, 1.0]], "cosine")[0, 1] == pytest.approx(1.0, abs=1e-15)
    assert af.kernel_scores([[1.0, 0.0], [0.0, 1.0]], "cosine")[0, 1] == 0.0


def test_weighted_l2_example():
    S = af.kernel_scores([[0.0, 0.0], [3.0, 4.0]], af.KernelSpec("weighted_l2", [1.0, 1.0]))
    assert S[0, 1] == -25.0
    assert S[0, 0] == 0.0


def test_inner_product_example():
    assert af.kernel_scores([[1.0, 2.0], [3.0, 4.0]], "inner_product")[0, 1] == 11.0


def test_perceptron_is_affine_and_asymmetric():
    H = np.array([[1.0, 0.0], [0.0, 2.0]])
    S = af.kernel_scores(H, af.KernelSpec("perceptron", [1.0, 2.0, 3.0, 4.0]))
    # alpha_ij = w_left . h_i + w_right . h_j
    assert S[0, 1] == 1.0 + 8.0
    assert S[1, 0] == 4.0 + 3.0


def test_kernel_spec_weight_contract():
    with pytest.raises(ValueError):
        af.KernelSpec("perceptron")
    with pytest.raises(ValueError):
        af.KernelSpec("cosine", [1.0])
    with pytest.raises(ValueError):
        af.KernelSpec("rbf")


def test_cosine_zero_row_lenient_and_strict():
    H = [[0.0, 0.0], [1.0, 0.0]]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        S = af.kernel_scores(H, "cosine")
    assert caught and S[0, 1] == 0.0
    with pytest.raises(ZeroVector):
        af.kernel_scores(H, "cosine", strict=True)


def test_knn_select_tie_to_lower_index():
    S = np.zeros((4, 4))
    S[0] = [5.0, 0.9, 0.1, 0.9]
    nb = af.knn_select(S, 1)
    assert list(nb[0]) == [0, 1]


def test_knn_select_extremes():
    S = np.random.default_rng(0).normal(size=(5, 5))
    assert af.knn_select(S, 0).tolist() == [[i] for i in range(5)]
    full = af.knn_select(S, 4)
    assert all(sorted(row) == list(range(5)) for row in full.tolist())
    assert all(full[i, 0] == i for i in range(5))
    with pytest.raises(KTooLarge):
        af.knn_select(S, 5)
    S[1, 2] = np.nan
    with pytest.raises(NonFinite):
        af.knn_select(S, 1)


def test_select_neighbors_chunks_match_dense():
    H = np.random.default_rng(1).normal(size=(37, 4))
    spec = af.KernelSpec("cosine")
    dense = af.knn_select(af.kernel_scores(H, spec), 3)
    chunked = af.select_neighbors(af.KernelScores(H, spec), 3, chunk=5)
    np.testing.assert_array_equal(dense, chunked)


def test_normalize_attention_examples():
    S = np.array([[0.0, math.log(3.0)], [0.0, 0.0]])
    A = af.normalize_attention(S, [[0, 1], [1, 0]])
    np.testing.assert_allclose(A[0], [0.25, 0.75], atol=1e-15)
    np.testing.assert_allclose(A[1], [0.5, 0.5], atol=1e-15)
    assert af.normalize_attention(np.zeros((3, 3)), [[0], [1], [2]]).tolist() == np.eye(3).tolist()
    A4 = af.normalize_attention(np.ones((4, 4)), af.knn_select(np.ones((4, 4)), 3))
    np.testing.assert_allclose(A4, 0.25)


def test_mix_graphs_examples():
    Ge, Gc, Gp = np.full((2, 2), 7.0), np.full((2, 2), 0.2), np.full((2, 2), 0.6)
    np.testing.assert_array_equal(af.mix_graphs(Ge, Gc, Gp, 1.0, 0.5), Ge)
    np.testing.assert_array_equal(af.mix_graphs(None, Gc, None, 0.0, 1.0), Gc)
    np.testing.assert_allclose(af.mix_graphs(None, Gc, Gp, 0.0, 0.5), 0.4, atol=1e-15)
    with pytest.raises(MissingGraph):
        af.mix_graphs(None, Gc, None, 0.5, 1.0)
    with pytest.raises(MissingGraph):
        af.mix_graphs(None, Gc, None, 0.0, 0.5)


def test_mixed_scores_rows_match_mix_graphs():
    rng = np.random.default_rng(2)
    Ge, Gc, Gp = rng.random((6, 6)), rng.random((6, 6)), rng.random((6, 6))
    ms = af.MixedScores(Ge, Gc, Gp, 0.3, 0.5)
    np.testing.assert_allclose(ms.full(), af.mix_graphs(Ge, Gc, Gp, 0.3, 0.5), atol=1e-15)


@pytest.mark.parametrize("kind", af.KERNELS)
def test_pair_scores_match_dense_kernel(kind):
    rng = np.random.default_rng(4)
    H = rng.normal(size=(7, 3))
    spec = af.KernelSpec.default(kind, 3)
    if spec.weight is not None:
        spec.weight = rng.uniform(0.5, 1.5, size=spec.weight.size)
    S = af.kernel_scores(H, spec)
    nbrs = af.knn_select(S, 3)
    w = None if spec.weight is None else nd.constant(spec.weight[None, :])
    pairs = af.pair_scores(nd.constant(H), nbrs, kind, w).value
    np.testing.assert_allclose(pairs, S[np.arange(7)[:, None], nbrs], atol=1e-12)


def test_edge_list_round_trip(tmp_path):
    H = np.random.default_rng(5).normal(size=(6, 3))
    S = af.kernel_scores(H, "cosine")
    g = af.AffinityGraph(S, af.knn_select(S, 2))
    g.write_edge_list(tmp_path / "edges.csv")
    back = af.AffinityGraph.read_edge_list(tmp_path / "edges.csv", 6)
    np.testing.assert_array_equal(back.neighborhoods, g.neighborhoods)
    for i, j, s, _ in g.edges():
        assert back.scores[i, j] == s


finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 8), st.integers(1, 4)), elements=finite))
def test_symmetric_kernels_are_symmetric(H):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for kind in ("cosine", "inner_product", "weighted_l2"):
            S = af.kernel_scores(H, kind)
            np.testing.assert_allclose(S, S.T, atol=1e-12 * max(1.0, np.abs(S).max()))
        C = af.kernel_scores(H, "cosine")
    assert (C <= 1 + 1e-12).all() and (C >= -1 - 1e-12).all()
    assert (af.kernel_scores(H, "weighted_l2") <= 0).all()


@settings(max_examples=50, deadline=None)
@given(arrays(np.int64, st.tuples(st.integers(2, 7), st.just(7)), elements=st.integers(-20, 20)),
       st.integers(0, 6), st.integers(-1000, 1000))
def test_knn_neighborhood_contract(S, k, shift):
    # integer-valued scores keep the row shift exact, so ties are preserved
    S = S[:, :S.shape[0]].astype(np.float64)
    k = min(k, S.shape[0] - 1)
    nbrs = af.knn_select(S, k)
    assert nbrs.shape == (S.shape[0], k + 1)
    for i, row in enumerate(nbrs):
        assert row[0] == i and len(set(row)) == len(row)
    # adding a constant to a row leaves the selection unchanged
    np.testing.assert_array_equal(af.knn_select(S + shift, k), nbrs)
    A = af.normalize_attention(S, nbrs)
    np.testing.assert_allclose(A.sum(axis=1), 1.0, atol=1e-12)
    outside = np.ones_like(A, dtype=bool)
    outside[np.arange(S.shape[0])[:, None], nbrs] = False
    assert (A[outside] == 0).all()


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (4, 4), elements=finite), st.floats(0, 1), st.floats(0, 1))
def test_mixing_identical_graphs_is_identity(G, lam, eta):
    np.testing.assert_allclose(af.mix_graphs(G, G, G, lam, eta), G, atol=1e-12)
