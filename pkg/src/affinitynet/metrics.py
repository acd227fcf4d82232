"""Evaluation: accuracy, AMI, spectral clustering and survival statistics."""

from __future__ import annotations

import csv
import math

import numpy as np
from scipy.special import gammaln

from .errors import (BadProportions, DegenerateDegree, EmptyGroup, LengthMismatch,
                     NoComparablePairs, NotSymmetric)
from .rng import CounterRNG


def _labels(x) -> np.ndarray:
    return np.asarray(x).ravel()


def accuracy(pred, truth) -> float:
    pred, truth = _labels(pred), _labels(truth)
    if pred.shape != truth.shape:
        raise LengthMismatch(f"{pred.size} predictions vs {truth.size} labels")
    if pred.size == 0:
        raise LengthMismatch("empty labelings")
    return float(np.mean(pred == truth))


# ----------------------------------------------------------------------
# adjusted mutual information

def contingency(a, b) -> np.ndarray:
    _, ia = np.unique(_labels(a), return_inverse=True)
    _, ib = np.unique(_labels(b), return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    return table


def entropy(a) -> float:
    _, counts = np.unique(_labels(a), return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


def mutual_information(a, b) -> float:
    table = contingency(a, b)
    n = table.sum()
    nz = table > 0
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))
    nij = table[nz]
    return float(max(0.0, (nij / n * (np.log(nij) + np.log(n) - np.log(outer[nz]))).sum()))


def expected_mutual_information(table: np.ndarray) -> float:
    """E[MI] under the hypergeometric model with the table's margins fixed."""
    a = table.sum(axis=1)
    b = table.sum(axis=0)
    n = int(table.sum())
    emi = 0.0
    lg_n = gammaln(n + 1)
    for ai in a:
        for bj in b:
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            if lo > hi:
                continue
            nij = np.arange(lo, hi + 1, dtype=np.float64)
            term = nij / n * (np.log(n) + np.log(nij) - np.log(ai) - np.log(bj))
            log_p = (gammaln(ai + 1) + gammaln(bj + 1) + gammaln(n - ai + 1) + gammaln(n - bj + 1)
                     - lg_n - gammaln(nij + 1) - gammaln(ai - nij + 1) - gammaln(bj - nij + 1)
                     - gammaln(n - ai - bj + nij + 1))
            emi += float((term * np.exp(log_p)).sum())
    return emi


def adjusted_mutual_information(a, b) -> float:
    """AMI with arithmetic-mean entropy normalisation and exact E[MI]."""
    a, b = _labels(a), _labels(b)
    if a.shape != b.shape:
        raise LengthMismatch(f"labelings have lengths {a.size} and {b.size}")
    if a.size < 2:
        raise LengthMismatch("AMI needs at least two objects")
    table = contingency(a, b)
    mi = mutual_information(a, b)
    emi = expected_mutual_information(table)
    denom = 0.5 * (entropy(a) + entropy(b)) - emi
    if abs(denom) < 1e-15:
        return 0.0
    return float((mi - emi) / denom)


# ----------------------------------------------------------------------
# eigen-decomposition and clustering

def jacobi_eigh(A, tol: float = 1e-10, max_sweeps: int = 100):
    """Cyclic Jacobi eigen-decomposition of a symmetric matrix.

    Returns ascending eigenvalues and the matching column eigenvectors.
    Iteration stops once the off-diagonal Frobenius norm falls below
    ``tol`` (relative to the matrix norm, floored at 1).
    """
    A = np.array(A, dtype=np.float64)
    n = A.shape[0]
    V = np.eye(n)
    scale = max(1.0, float(np.linalg.norm(A)))
    for _ in range(max_sweeps):
        off = math.sqrt(max(0.0, float((A * A).sum() - (np.diag(A) ** 2).sum())))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p, row_q = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                v_p, v_q = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * v_p - s * v_q
                V[:, q] = s * v_p + c * v_q
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    idx = np.abs(vecs).argmax(axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def normalized_laplacian(G) -> np.ndarray:
    G = np.asarray(G, dtype=np.float64)
    deg = G.sum(axis=1)
    if (deg <= 0).any():
        raise DegenerateDegree(f"{int((deg <= 0).sum())} nodes have zero degree")
    d = 1.0 / np.sqrt(deg)
    return np.eye(G.shape[0]) - d[:, None] * G * d[None, :]


def spectral_embedding(G, k: int, solver: str = "auto") -> np.ndarray:
    """Bottom-k eigenvectors of the normalised Laplacian, rows unit-normalised.

    ``solver`` is ``"jacobi"``, ``"lapack"`` (dense ``eigh``), ``"arpack"``
    (Lanczos on the normalised adjacency) or ``"auto"``: Jacobi up to 80
    nodes, LAPACK up to 1500, ARPACK beyond.
    """
    G = np.asarray(G, dtype=np.float64)
    n = G.shape[0]
    if solver == "auto":
        solver = "jacobi" if n <= 80 else "lapack" if n <= 1500 else "arpack"
    if solver == "arpack":
        from scipy.sparse.linalg import eigsh

        deg = G.sum(axis=1)
        if (deg <= 0).any():
            raise DegenerateDegree(f"{int((deg <= 0).sum())} nodes have zero degree")
        d = 1.0 / np.sqrt(deg)
        M = d[:, None] * G * d[None, :]
        if np.count_nonzero(M) < 0.25 * M.size:
            # kNN graphs are sparse; Lanczos on CSR is far faster there
            from scipy.sparse import csr_matrix

            M = csr_matrix(M)
        vals, vecs = eigsh(M, k=k, which="LA", v0=np.ones(n), tol=1e-10)
        vecs = vecs[:, np.argsort(-vals, kind="stable")]
    else:
        L = normalized_laplacian(G)
        if solver == "jacobi":
            _, vecs = jacobi_eigh(L)
        else:
            _, vecs = np.linalg.eigh(L)
        vecs = vecs[:, :k]
    vecs = _fix_signs(vecs)
    norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    return vecs / np.where(norms > 0, norms, 1.0)


def kmeans(X, k: int, seed: int = 0, restarts: int = 20, max_iter: int = 300):
    """Lloyd's k-means with k-means++ seeding; best of ``restarts`` by inertia.

    Returns ``(labels, centers, inertia)``.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    master = CounterRNG(seed, "kmeans")
    best = None
    for r in range(restarts):
        rng = master.spawn(r)
        centers = _kmeanspp(X, k, rng)
        labels = None
        for _ in range(max_iter):
            d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2) if n * k < 4_000_000 else \
                _sqdist(X, centers)
            new = d2.argmin(axis=1)
            if labels is not None and np.array_equal(new, labels):
                break
            labels = new
            for c in range(k):
                members = labels == c
                if members.any():
                    centers[c] = X[members].mean(axis=0)
                else:
                    far = d2.min(axis=1).argmax()
                    centers[c] = X[far]
        inertia = float(d2[np.arange(n), labels].sum())
        if best is None or inertia < best[2] - 1e-12:
            best = (labels.copy(), centers.copy(), inertia)
    return best


def _sqdist(X, C):
    return np.maximum((X * X).sum(1)[:, None] + (C * C).sum(1)[None, :] - 2 * X @ C.T, 0.0)


def _kmeanspp(X, k, rng: CounterRNG) -> np.ndarray:
    n = X.shape[0]
    centers = [X[rng.integers(0, n)]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(0, n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.uniform() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(X[idx])
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return np.array(centers, dtype=np.float64)


def spectral_clustering(G, k: int, seed: int = 0, solver: str = "auto", restarts: int = 20) -> np.ndarray:
    """Cluster a nonnegative symmetric affinity matrix into ``k`` groups."""
    G = np.asarray(G, dtype=np.float64)
    n = G.shape[0]
    if G.shape != (n, n):
        raise NotSymmetric(f"affinity must be square, got {G.shape}")
    if not 2 <= k <= n:
        raise ValueError(f"k={k} must lie in [2, {n}]")
    if np.abs(G - G.T).max() > 1e-8:
        raise NotSymmetric("affinity matrix is not symmetric")
    G = 0.5 * (G + G.T)
    if (G < 0).any():
        raise ValueError("affinity entries must be nonnegative")
    emb = spectral_embedding(G, k, solver)
    labels, _, _ = kmeans(emb, k, seed, restarts)
    return labels


def representation_affinity(X, n_neighbors: int | None = 10, center: bool = True) -> np.ndarray:
    """Cosine affinity shifted into [0, 1]: ``(1 + cos) / 2``.

    With ``center`` the columns are mean-centred first. With
    ``n_neighbors`` only entries where either endpoint lists the other
    among its nearest neighbours are kept (symmetric kNN graph).
    """
    from .affinity import kernel_scores, knn_select

    X = np.asarray(X, dtype=np.float64)
    if center:
        X = X - X.mean(axis=0)
    G = 0.5 * (1.0 + kernel_scores(X, "cosine"))
    np.clip(G, 0.0, 1.0, out=G)
    if n_neighbors is None:
        return G
    k = min(n_neighbors, X.shape[0] - 1)
    nbrs = knn_select(G, k)
    keep = np.zeros(G.shape, dtype=bool)
    keep[np.arange(G.shape[0])[:, None], nbrs] = True
    keep |= keep.T
    return np.where(keep, G, 0.0)


def gaussian_affinity(X, n_neighbors: int = 10) -> np.ndarray:
    """Locally scaled Gaussian affinity on a symmetric kNN graph.

    Each point's bandwidth is the RMS distance to its ``n_neighbors``
    nearest neighbours, so dense and sparse regions are treated alike.
    Suited to raw coordinates, where cosine similarity ignores scale.
    """
    from .affinity import knn_select

    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    sq = (X * X).sum(axis=1)
    D2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0)
    np.fill_diagonal(D2, 0.0)
    k = min(n_neighbors, n - 1)
    nbrs = knn_select(-D2, k)
    rows = np.arange(n)[:, None]
    sigma = np.sqrt(D2[rows, nbrs[:, 1:]].mean(axis=1)) if k > 0 else np.ones(n)
    sigma = np.where(sigma > 0, sigma, 1.0)
    G = np.exp(-D2 / (sigma[:, None] * sigma[None, :]))
    keep = np.zeros(G.shape, dtype=bool)
    keep[rows, nbrs] = True
    keep |= keep.T
    G = np.where(keep, G, 0.0)
    np.fill_diagonal(G, 0.0)
    return G


# ----------------------------------------------------------------------
# survival

def concordance_index(risks, time, event) -> float:
    """Harrell's C over pairs where the earlier time is an observed event."""
    risks = np.asarray(risks, dtype=np.float64).ravel()
    time = np.asarray(time, dtype=np.float64).ravel()
    event = np.asarray(event, dtype=bool).ravel()
    if not risks.size == time.size == event.size:
        raise LengthMismatch("risks, times and events must have equal length")
    num = 0.0
    den = 0
    anchors = np.flatnonzero(event)
    for start in range(0, anchors.size, 512):
        i = anchors[start:start + 512]
        comparable = time[i][:, None] < time[None, :]
        diff = risks[i][:, None] - risks[None, :]
        num += float(((diff > 0) & comparable).sum()) + 0.5 * float(((diff == 0) & comparable).sum())
        den += int(comparable.sum())
    if den == 0:
        raise NoComparablePairs("no comparable pairs")
    return num / den


def logrank_statistic(groups, time, event):
    """k-sample log-rank chi-square statistic and its degrees of freedom."""
    groups = _labels(groups)
    time = np.asarray(time, dtype=np.float64).ravel()
    event = np.asarray(event, dtype=bool).ravel()
    if not groups.size == time.size == event.size:
        raise LengthMismatch("groups, times and events must have equal length")
    ids, g = np.unique(groups, return_inverse=True)
    m = ids.size
    if m < 2:
        raise EmptyGroup("log-rank test needs at least two nonempty groups")
    observed = np.zeros(m)
    expected = np.zeros(m)
    cov = np.zeros((m, m))
    for t in np.unique(time[event]):
        at_risk = time >= t
        n_t = at_risk.sum()
        dies = event & (time == t)
        d_t = dies.sum()
        n_g = np.bincount(g[at_risk], minlength=m).astype(np.float64)
        observed += np.bincount(g[dies], minlength=m)
        frac = n_g / n_t
        expected += d_t * frac
        if n_t > 1:
            cov += d_t * (n_t - d_t) / (n_t - 1) * (np.diag(frac) - np.outer(frac, frac))
    diff = (observed - expected)[:-1]
    V = cov[:-1, :-1]
    stat = float(diff @ np.linalg.pinv(V) @ diff) if diff.size else 0.0
    return max(stat, 0.0), m - 1


def chi2_sf(x: float, df: int) -> float:
    """Upper tail of the chi-square distribution (regularised incomplete gamma)."""
    if x <= 0:
        return 1.0
    return _gamma_q(df / 2.0, x / 2.0)


def _gamma_q(a: float, x: float) -> float:
    if x < a + 1.0:
        # series for P(a, x)
        term = 1.0 / a
        total = term
        ap = a
        for _ in range(10_000):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * 1e-16:
                break
        p = total * math.exp(-x + a * math.log(x) - math.lgamma(a))
        return max(0.0, 1.0 - p)
    # modified Lentz continued fraction for Q(a, x)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        d = tiny if abs(d) < tiny else d
        c = b + an / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def hazard_group_split(risks, proportions) -> np.ndarray:
    """Contiguous groups by ascending risk, sized by largest-remainder rounding."""
    risks = np.asarray(risks, dtype=np.float64).ravel()
    props = np.asarray(proportions, dtype=np.float64).ravel()
    if props.size == 0 or (props <= 0).any() or abs(props.sum() - 1.0) > 1e-9:
        raise BadProportions("proportions must be positive and sum to 1")
    n = risks.size
    raw = props * n
    sizes = np.floor(raw).astype(np.int64)
    short = n - sizes.sum()
    order = np.lexsort((np.arange(props.size), -(raw - sizes)))
    sizes[order[:short]] += 1
    labels = np.empty(n, dtype=np.int64)
    labels[np.argsort(risks, kind="stable")] = np.repeat(np.arange(props.size), sizes)
    return labels


def kaplan_meier(time, event, groups=None) -> list[tuple]:
    """Kaplan-Meier steps as ``(group, time, at_risk, events, survival)`` rows."""
    time = np.asarray(time, dtype=np.float64).ravel()
    event = np.asarray(event, dtype=bool).ravel()
    groups = np.zeros(time.size, dtype=np.int64) if groups is None else _labels(groups)
    rows = []
    for gid in np.unique(groups):
        sel = groups == gid
        t, e = time[sel], event[sel]
        surv = 1.0
        for u in np.unique(t[e]):
            at_risk = int((t >= u).sum())
            d = int((e & (t == u)).sum())
            surv *= 1.0 - d / at_risk
            rows.append((gid.item() if hasattr(gid, "item") else gid, float(u), at_risk, d, surv))
    return rows


def write_km_table(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["group", "time", "at_risk", "events", "survival"])
        for g, t, n, d, s in rows:
            w.writerow([g, format(t, ".17g"), n, d, format(s, ".17g")])
