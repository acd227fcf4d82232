"""Attention kernels, neighbourhood selection and affinity-graph mixing.

Dense n x n score matrices are computed with plain numpy and are never
differentiated: they only decide *which* neighbours a node pools over.
Attention weights over the selected neighbours are computed on the
differentiation tape by :func:`pair_scores`, which evaluates the same
kernels on (i, j) pairs only.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import ndcore as nd
from .errors import KTooLarge, MissingGraph, NonFinite, ShapeMismatch, ZeroVector

KERNELS = ("cosine", "inner_product", "perceptron", "weighted_l2")


@dataclass
class KernelSpec:
    """Kernel kind plus its weight vector (perceptron: 2p, weighted_l2: p)."""

    kind: str = "cosine"
    weight: np.ndarray | None = None
    trainable: bool = True

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise ValueError(f"unknown kernel {self.kind!r}; expected one of {KERNELS}")
        needs = self.kind in ("perceptron", "weighted_l2")
        if needs and self.weight is None:
            raise ValueError(f"{self.kind} kernel needs a weight vector")
        if not needs and self.weight is not None:
            raise ValueError(f"{self.kind} kernel takes no weight vector")
        if self.weight is not None:
            self.weight = np.asarray(self.weight, dtype=np.float64).ravel()

    def expected_length(self, p: int) -> int | None:
        return {"perceptron": 2 * p, "weighted_l2": p}.get(self.kind)

    @classmethod
    def default(cls, kind: str, p: int) -> "KernelSpec":
        """Kernel with its weight initialised to ones (or None)."""
        if kind == "weighted_l2":
            return cls(kind, np.ones(p))
        if kind == "perceptron":
            return cls(kind, np.ones(2 * p))
        return cls(kind)


@dataclass
class AffinityGraph:
    """Raw pairwise scores plus the selected neighbourhood of every node.

    ``neighborhoods`` is an n x (k+1) integer array; column 0 is the node
    itself, the rest follow descending score then ascending index.
    """

    scores: np.ndarray
    neighborhoods: np.ndarray = field(default=None)

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    def edges(self):
        """Yield ``(i, j, score, rank)`` for every selected neighbour."""
        for i, row in enumerate(self.neighborhoods):
            for rank, j in enumerate(row):
                yield i, int(j), float(self.scores[i, j]), rank

    def write_edge_list(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "score", "rank"])
            for i, j, s, rank in self.edges():
                w.writerow([i, j, format(s, ".17g"), rank])

    @classmethod
    def read_edge_list(cls, path, n: int | None = None) -> "AffinityGraph":
        """Inverse of :meth:`write_edge_list`. Pairs not listed score ``-inf``."""
        rows = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            for rec in reader:
                rows.append((int(rec["i"]), int(rec["j"]), float(rec["score"]), int(rec["rank"])))
        if n is None:
            n = 1 + max(max(i, j) for i, j, _, _ in rows) if rows else 0
        width = 1 + max(r for *_, r in rows) if rows else 0
        scores = np.full((n, n), -np.inf)
        nbrs = np.zeros((n, width), dtype=np.intp)
        for i, j, s, rank in rows:
            scores[i, j] = s
            nbrs[i, rank] = j
        return cls(scores, nbrs)


# ----------------------------------------------------------------------
# dense scores (no gradient)

def _check_weight(spec: KernelSpec, p: int) -> None:
    want = spec.expected_length(p)
    if want is not None and spec.weight.size != want:
        raise ShapeMismatch(f"{spec.kind} weight has length {spec.weight.size}, expected {want}")


class KernelScores:
    """Row blocks of the n x n kernel score matrix, computed on demand."""

    def __init__(self, H, spec: KernelSpec, strict: bool = False):
        H = nd.as_matrix(H.value if isinstance(H, nd.Node) else H)
        n, p = H.shape
        if n < 1:
            raise ShapeMismatch("kernel scores need at least one row")
        _check_weight(spec, p)
        self.n = n
        self.kind = spec.kind
        if spec.kind == "cosine":
            norms = np.sqrt((H * H).sum(axis=1))
            zero = norms == 0
            if zero.any():
                if strict:
                    raise ZeroVector(f"{int(zero.sum())} all-zero rows under cosine kernel")
                warnings.warn(f"cosine kernel: {int(zero.sum())} all-zero rows scored as 0",
                              RuntimeWarning, stacklevel=3)
            self.X = H / np.where(zero, 1.0, norms)[:, None]
        elif spec.kind == "inner_product":
            self.X = H
        elif spec.kind == "perceptron":
            self.left = H @ spec.weight[:p]
            self.right = H @ spec.weight[p:]
        else:
            self.X = H * spec.weight
            self.sq = (self.X * self.X).sum(axis=1)

    def rows(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.intp)
        if self.kind in ("cosine", "inner_product"):
            return self.X[idx] @ self.X.T
        if self.kind == "perceptron":
            return self.left[idx][:, None] + self.right[None, :]
        S = self.X[idx] @ self.X.T
        S *= 2.0
        S -= self.sq[None, :]
        S -= self.sq[idx][:, None]
        np.minimum(S, 0.0, out=S)
        S[np.arange(idx.size), idx] = 0.0
        return S

    def full(self) -> np.ndarray:
        return self.rows(np.arange(self.n))


class DenseScores:
    def __init__(self, M):
        self.M = np.asarray(M, dtype=np.float64)
        self.n = self.M.shape[0]

    def rows(self, idx) -> np.ndarray:
        return self.M[np.asarray(idx, dtype=np.intp)]

    def full(self) -> np.ndarray:
        return self.M


class MixedScores:
    """Row blocks of the mixed graph ``lam*G_e + (1-lam)*(eta*curr + (1-eta)*prev)``."""

    def __init__(self, G_e, curr, prev, lam: float = 0.0, eta: float = 1.0):
        if not (0.0 <= lam <= 1.0 and 0.0 <= eta <= 1.0):
            raise ValueError("lambda and eta must lie in [0, 1]")
        if lam > 0 and G_e is None:
            raise MissingGraph("lambda > 0 needs a given graph")
        if eta < 1 and prev is None:
            raise MissingGraph("eta < 1 needs the previous layer's graph")
        self.G_e = None if G_e is None else _as_source(G_e)
        self.curr, self.prev = _as_source(curr), None if prev is None else _as_source(prev)
        self.lam, self.eta = lam, eta
        self.n = self.curr.n

    def rows(self, idx) -> np.ndarray:
        return mix_graphs(None if self.lam == 0 else self.G_e.rows(idx), self.curr.rows(idx),
                          None if self.eta == 1 else self.prev.rows(idx), self.lam, self.eta)

    def full(self) -> np.ndarray:
        return self.rows(np.arange(self.n))


def _as_source(G):
    return G if hasattr(G, "rows") else DenseScores(G)


def kernel_scores(H, spec: KernelSpec | str, strict: bool = False) -> np.ndarray:
    """n x n matrix of raw affinities between the rows of ``H``."""
    if isinstance(spec, str):
        spec = KernelSpec.default(spec, nd.as_matrix(H.value if isinstance(H, nd.Node) else H).shape[1])
    return KernelScores(H, spec, strict).full()


# ----------------------------------------------------------------------
# differentiable scores on selected pairs

def pair_scores(H: nd.Node, neighborhoods: np.ndarray, kind: str,
                weight: nd.Node | None = None, centers=None) -> nd.Node:
    """Entry (r, k) is alpha(h_c, h_{N[r, k]}) with c = ``centers[r]``, on the tape.

    ``centers`` defaults to ``arange(len(neighborhoods))``.
    """
    nbrs = np.asarray(neighborhoods, dtype=np.intp)
    n, K = nbrs.shape
    p = H.shape[1]
    centers = np.arange(n) if centers is None else np.asarray(centers, dtype=np.intp)
    rows = np.repeat(centers, K)
    cols = nbrs.ravel()

    if kind == "cosine":
        U = nd.row_normalize(H)
        s = nd.sum(nd.mul(nd.gather_rows(U, rows), nd.gather_rows(U, cols)), axis=1)
    elif kind == "inner_product":
        s = nd.sum(nd.mul(nd.gather_rows(H, rows), nd.gather_rows(H, cols)), axis=1)
    elif kind == "perceptron":
        if weight is None or weight.value.size != 2 * p:
            raise ShapeMismatch(f"perceptron weight must have length {2 * p}")
        w = nd.reshape(weight, (1, 2 * p))
        left = nd.matmul(H, nd.transpose(nd.col_slice(w, 0, p)))
        right = nd.matmul(H, nd.transpose(nd.col_slice(w, p, 2 * p)))
        s = nd.add(nd.gather_rows(left, rows), nd.gather_rows(right, cols))
    elif kind == "weighted_l2":
        if weight is None or weight.value.size != p:
            raise ShapeMismatch(f"weighted_l2 weight must have length {p}")
        X = nd.mul(H, nd.reshape(weight, (1, p)))
        diff = nd.sub(nd.gather_rows(X, rows), nd.gather_rows(X, cols))
        s = nd.neg(nd.sum(nd.square(diff), axis=1))
    else:
        raise ValueError(f"unknown kernel {kind!r}")
    return nd.reshape(s, (n, K))


# ----------------------------------------------------------------------
# neighbourhoods, normalisation, mixing

def knn_select(scores, k: int) -> np.ndarray:
    """Self plus the k highest-scoring other nodes for every row.

    Returns an n x (k+1) index array. Ties are broken towards the smaller
    column index.
    """
    S = np.asarray(scores, dtype=np.float64)
    n = S.shape[0]
    if S.shape != (n, n):
        raise ShapeMismatch(f"knn_select needs a square matrix, got {S.shape}")
    return knn_select_rows(S, np.arange(n), k)


def knn_select_rows(S, centers, k: int) -> np.ndarray:
    """:func:`knn_select` for a block of rows; ``centers[r]`` is row r's own index."""
    S = np.array(S, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.intp)
    m, n = S.shape
    if k < 0:
        raise ValueError("k must be non-negative")
    if k > n - 1:
        raise KTooLarge(f"k={k} exceeds n-1={n - 1}")
    if np.isnan(S).any():
        raise NonFinite("NaN in affinity scores")
    self_col = centers[:, None]
    if k == 0 or m == 0:
        return self_col[:, :1].copy() if k == 0 else np.zeros((0, k + 1), dtype=np.intp)

    local = np.arange(m)
    S[local, centers] = -np.inf
    if k == n - 1:
        mask = np.ones((m, n), dtype=bool)
    else:
        kth = np.partition(S, n - k, axis=1)[:, n - k]
        mask = S >= kth[:, None]
    mask[local, centers] = False
    r, c = np.nonzero(mask)
    vals = S[r, c]
    order = np.lexsort((c, -vals, r))
    r, c = r[order], c[order]
    starts = np.searchsorted(r, local)
    pos = np.arange(r.size) - starts[r]
    chosen = c[pos < k].reshape(m, k)
    return np.hstack([self_col, chosen]).astype(np.intp)


def select_neighbors(source, k: int, rows=None, chunk: int = 256) -> np.ndarray:
    """kNN neighbourhoods of ``rows`` (default all) from a row-block score source."""
    source = _as_source(source)
    rows = np.arange(source.n) if rows is None else np.asarray(rows, dtype=np.intp)
    if k > source.n - 1:
        raise KTooLarge(f"k={k} exceeds n-1={source.n - 1}")
    out = np.empty((rows.size, k + 1), dtype=np.intp)
    for start in range(0, rows.size, chunk):
        block = rows[start:start + chunk]
        out[start:start + chunk] = knn_select_rows(source.rows(block), block, k)
    return out


def normalize_attention(scores, neighborhoods) -> np.ndarray:
    """Dense row-stochastic matrix: softmax of scores within each neighbourhood."""
    S = np.asarray(scores, dtype=np.float64)
    nbrs = np.asarray(neighborhoods, dtype=np.intp)
    n = S.shape[0]
    rows = np.arange(n)[:, None]
    alpha = S[rows, nbrs]
    alpha = alpha - alpha.max(axis=1, keepdims=True)
    e = np.exp(alpha)
    a = e / e.sum(axis=1, keepdims=True)
    out = np.zeros((n, n))
    out[rows, nbrs] = a
    return out


def mix_graphs(G_e, G_curr, G_prev, lam: float = 0.0, eta: float = 1.0) -> np.ndarray:
    """``lam * G_e + (1 - lam) * (eta * G_curr + (1 - eta) * G_prev)``."""
    if not (0.0 <= lam <= 1.0 and 0.0 <= eta <= 1.0):
        raise ValueError("lambda and eta must lie in [0, 1]")
    if lam > 0 and G_e is None:
        raise MissingGraph("lambda > 0 needs a given graph")
    if eta < 1 and G_prev is None:
        raise MissingGraph("eta < 1 needs the previous layer's graph")
    G_curr = np.asarray(G_curr, dtype=np.float64)
    out = G_curr if eta == 1 else eta * G_curr + (1.0 - eta) * np.asarray(G_prev, dtype=np.float64)
    if lam == 0:
        return out
    if lam == 1:
        return np.array(G_e, dtype=np.float64)
    return lam * np.asarray(G_e, dtype=np.float64) + (1.0 - lam) * out
