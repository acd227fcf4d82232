"""Datasets: the four-Gaussian simulation, CSV ingestion, feature selection, splits."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (ClassTooSmall, EmptyTable, MissingValue, MTooLarge, NonNumeric,
                     Ragged, ShapeMismatch)
from .rng import CounterRNG

SIGNAL_MEANS = ((0.0, 0.0), (0.0, 5.0), (5.0, 0.0), (5.0, 5.0))
NOISE_DIM = 40
NOISE_MEAN = 2.5
NOISE_VAR = 10.0


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray | None = None
    labeled_mask: np.ndarray | None = None
    time: np.ndarray | None = None
    event: np.ndarray | None = None
    feature_names: list | None = None
    sample_ids: list | None = None
    class_names: list | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ShapeMismatch("features must be a 2-D matrix")
        n = self.features.shape[0]
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labeled_mask is None:
            self.labeled_mask = np.full(n, self.labels is not None)
        self.labeled_mask = np.asarray(self.labeled_mask, dtype=bool)
        if self.time is not None:
            self.time = np.asarray(self.time, dtype=np.float64)
            self.event = np.asarray(self.event, dtype=bool)
        for name in ("labels", "labeled_mask", "time", "event", "sample_ids"):
            v = getattr(self, name)
            if v is not None and len(v) != n:
                raise ShapeMismatch(f"{name} has length {len(v)}, expected {n}")
        if self.feature_names is not None and len(self.feature_names) != self.features.shape[1]:
            raise ShapeMismatch("feature_names length differs from column count")
        if self.labels is None and self.labeled_mask.any():
            raise ShapeMismatch("labeled_mask set without labels")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return 0 if self.labels is None else int(self.labels.max()) + 1

    def with_mask(self, mask) -> "Dataset":
        return replace(self, labeled_mask=np.asarray(mask, dtype=bool))

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        pick = lambda v: None if v is None else np.asarray(v)[rows]  # noqa: E731
        ids = None if self.sample_ids is None else [self.sample_ids[i] for i in np.arange(self.n)[rows]]
        return Dataset(self.features[rows], pick(self.labels), pick(self.labeled_mask), pick(self.time),
                       pick(self.event), self.feature_names, ids, self.class_names)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        same = lambda a, b: (a is None and b is None) or (  # noqa: E731
            a is not None and b is not None and np.array_equal(np.asarray(a), np.asarray(b)))
        return (np.array_equal(self.features, other.features)
                and all(same(getattr(self, f), getattr(other, f))
                        for f in ("labels", "labeled_mask", "time", "event"))
                and self.feature_names == other.feature_names
                and self.sample_ids == other.sample_ids)


# ----------------------------------------------------------------------
# simulation

def gen_synthetic(n_per_cluster: int = 1000, seed: int = 0) -> Dataset:
    """Four unit-variance 2-D Gaussian clusters padded with 40 noise dimensions.

    Cluster means are (0,0), (0,5), (5,0), (5,5). Noise columns are
    N(2.5, 10) independently. Rows are ordered by cluster.
    """
    if n_per_cluster < 1:
        raise ValueError("n_per_cluster must be at least 1")
    rng = CounterRNG(seed, "synthetic")
    n = 4 * n_per_cluster
    signal = rng.spawn("signal").normal((n, 2))
    signal += np.repeat(np.array(SIGNAL_MEANS), n_per_cluster, axis=0)
    noise = rng.spawn("noise").normal((n, NOISE_DIM), NOISE_MEAN, np.sqrt(NOISE_VAR))
    labels = np.repeat(np.arange(4), n_per_cluster)
    names = ["signal_0", "signal_1"] + [f"noise_{i}" for i in range(NOISE_DIM)]
    return Dataset(np.hstack([signal, noise]), labels, np.zeros(n, dtype=bool), feature_names=names)


def gen_survival_surrogate(n: int = 600, seed: int = 0, noise_dim: int = NOISE_DIM,
                           effect: float = 1.0, censor_rate: float = 0.3) -> Dataset:
    """Exponential survival driven by two standard-normal signal covariates.

    Hazard is ``exp(effect * (x0 + x1))``; censoring times are
    exponential with a rate chosen to censor roughly ``censor_rate`` of
    subjects. Labels hold the tercile of the true risk.
    """
    rng = CounterRNG(seed, "survival")
    signal = rng.spawn("signal").normal((n, 2))
    noise = rng.spawn("noise").normal((n, noise_dim), NOISE_MEAN, np.sqrt(NOISE_VAR))
    risk = effect * signal.sum(axis=1)
    t_event = -np.log(rng.spawn("event").uniform(n)) / np.exp(risk)
    c_rate = censor_rate / max(1e-9, 1.0 - censor_rate) * np.median(np.exp(risk))
    t_cens = -np.log(rng.spawn("censor").uniform(n)) / c_rate
    time = np.minimum(t_event, t_cens)
    event = t_event <= t_cens
    labels = np.searchsorted(np.quantile(risk, [1 / 3, 2 / 3]), risk)
    names = ["signal_0", "signal_1"] + [f"noise_{i}" for i in range(noise_dim)]
    return Dataset(np.hstack([signal, noise]), labels, np.zeros(n, dtype=bool), time, event,
                   feature_names=names)


def gen_unbalanced(sizes=(421, 54), seed: int = 0, p: int = 50, separation: float = 3.0,
                   signal_dims: int = 5, noise_sd: float = 1.0) -> Dataset:
    """Two unit-variance Gaussian classes of unequal size.

    Class ``c`` has mean ``c * separation`` on the first ``signal_dims``
    columns; the remaining columns are N(0, noise_sd^2) for every class.
    """
    rng = CounterRNG(seed, "unbalanced")
    blocks, labels = [], []
    for c, size in enumerate(sizes):
        sig = rng.spawn(("signal", c)).normal((size, signal_dims)) + c * separation
        noi = rng.spawn(("noise", c)).normal((size, p - signal_dims), 0.0, noise_sd)
        blocks.append(np.hstack([sig, noi]))
        labels.append(np.full(size, c))
    X = np.vstack(blocks)
    y = np.concatenate(labels)
    return Dataset(X, y, np.zeros(y.size, dtype=bool))


# ----------------------------------------------------------------------
# CSV

def _parse_float(text: str, row: int, col: str) -> float:
    if text.strip() == "":
        raise MissingValue(f"missing value at row {row}, column {col!r}")
    try:
        return float(text)
    except ValueError:
        raise NonNumeric(f"non-numeric value {text!r} at row {row}, column {col!r}") from None


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise EmptyTable(f"{path}: no data rows")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise Ragged(f"{path}: row {i} has {len(r)} fields, header has {width}")
    return rows


def _dense_ids(values):
    names: list = []
    index = {}
    ids = []
    for v in values:
        if v not in index:
            index[v] = len(names)
            names.append(v)
        ids.append(index[v])
    return np.array(ids, dtype=np.int64), names


def load_csv(path, orientation: str = "samples_as_rows", label_column: str | None = None,
             label_file=None, survival_file=None, zscore: bool = False) -> Dataset:
    """Read a numeric table whose first row is a header and first column holds ids.

    ``orientation="features_as_rows"`` transposes the table (genes x samples).
    Labels come from ``label_column`` or a ``(sample_id, label)`` file and are
    mapped to dense ids in first-appearance order.
    """
    rows = _read_rows(path)
    header, body = rows[0], rows[1:]
    label_strings = None
    if label_column is not None:
        if orientation != "samples_as_rows":
            raise ValueError("label_column requires samples_as_rows orientation")
        if label_column not in header:
            raise ValueError(f"no column named {label_column!r}")
        j = header.index(label_column)
        label_strings = [r[j] for r in body]
        header = header[:j] + header[j + 1:]
        body = [r[:j] + r[j + 1:] for r in body]
    row_ids = [r[0] for r in body]
    col_names = header[1:]
    if not col_names:
        raise EmptyTable(f"{path}: no numeric columns")
    values = np.array([[_parse_float(v, i + 1, col_names[c]) for c, v in enumerate(r[1:])]
                       for i, r in enumerate(body)])
    if orientation == "features_as_rows":
        values = values.T
        sample_ids, feature_names = col_names, row_ids
    elif orientation == "samples_as_rows":
        sample_ids, feature_names = row_ids, col_names
    else:
        raise ValueError(f"unknown orientation {orientation!r}")
    if zscore:
        sd = values.std(axis=0, ddof=1) if values.shape[0] > 1 else np.ones(values.shape[1])
        values = (values - values.mean(axis=0)) / np.where(sd > 0, sd, 1.0)

    if label_file is not None:
        lookup = {r[0]: r[1] for r in _read_rows(label_file)[1:]}
        missing = [s for s in sample_ids if s not in lookup]
        if missing:
            raise MissingValue(f"no label for samples {missing[:5]}")
        label_strings = [lookup[s] for s in sample_ids]
    labels = class_names = None
    if label_strings is not None:
        if any(s.strip() == "" for s in label_strings):
            raise MissingValue("blank label")
        labels, class_names = _dense_ids(label_strings)

    time = event = None
    if survival_file is not None:
        recs = {r[0]: r for r in _read_rows(survival_file)[1:]}
        time = np.array([_parse_float(recs[s][1], i, "time") for i, s in enumerate(sample_ids)])
        event = np.array([_parse_float(recs[s][2], i, "event") for i, s in enumerate(sample_ids)]) > 0
        if (time <= 0).any():
            raise ValueError("survival times must be positive")
    return Dataset(values, labels, None, time, event, list(feature_names), list(sample_ids), class_names)


def write_csv(path, d: Dataset, label_column: str | None = "label") -> None:
    """Samples-as-rows CSV readable by :func:`load_csv`."""
    names = d.feature_names or [f"f{j}" for j in range(d.p)]
    ids = d.sample_ids or [f"s{i}" for i in range(d.n)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        head = ["sample_id"] + list(names)
        with_labels = d.labels is not None and label_column is not None
        if with_labels:
            head.append(label_column)
        w.writerow(head)
        for i in range(d.n):
            row = [ids[i]] + [repr(float(v)) for v in d.features[i]]
            if with_labels:
                row.append(d.class_names[d.labels[i]] if d.class_names else str(d.labels[i]))
            w.writerow(row)


# ----------------------------------------------------------------------
# feature selection and splits

def top_variance_select(d: Dataset, m: int) -> Dataset:
    """Keep the ``m`` columns with the largest sample standard deviation."""
    if not 1 <= m <= d.p:
        raise MTooLarge(f"m={m} must lie in [1, {d.p}]")
    sd = d.features.std(axis=0, ddof=1) if d.n > 1 else np.zeros(d.p)
    keep = np.lexsort((np.arange(d.p), -sd))[:m]
    names = None if d.feature_names is None else [d.feature_names[j] for j in keep]
    return replace(d, features=d.features[:, keep], feature_names=names)


@dataclass
class SplitPlan:
    train_fraction: float
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")


def stratified_counts(class_sizes, fraction: float) -> list[int]:
    """Per-class training counts: ``max(1, round(fraction * size))``."""
    out = []
    for size in class_sizes:
        if size == 0:
            raise ClassTooSmall("a class has no members")
        out.append(int(min(size, max(1, int(np.floor(fraction * size + 0.5))))))
    return out


def split(d: Dataset, plan: SplitPlan):
    """Disjoint, exhaustive ``(train_mask, test_mask)``."""
    rng = CounterRNG(plan.seed, "split")
    train = np.zeros(d.n, dtype=bool)
    if plan.stratified:
        if d.labels is None:
            raise ValueError("stratified split needs labels")
        sizes = np.bincount(d.labels, minlength=d.n_classes)
        counts = stratified_counts(sizes, plan.train_fraction)
        for c, count in enumerate(counts):
            members = np.flatnonzero(d.labels == c)
            train[members[rng.spawn(c).choice(members.size, count)]] = True
    else:
        count = max(1, int(np.floor(plan.train_fraction * d.n + 0.5)))
        train[rng.choice(d.n, count)] = True
    return train, ~train


def three_way_split(n: int, train_fraction: float, val_fraction: float, seed: int = 0):
    """Random ``(train, validation, test)`` masks; test takes the remainder."""
    if train_fraction <= 0 or val_fraction < 0 or train_fraction + val_fraction >= 1:
        raise ValueError("need train > 0, val >= 0 and train + val < 1")
    order = CounterRNG(seed, "split3").permutation(n)
    n_tr = max(1, int(np.floor(train_fraction * n + 0.5)))
    n_va = int(np.floor(val_fraction * n + 0.5))
    masks = [np.zeros(n, dtype=bool) for _ in range(3)]
    masks[0][order[:n_tr]] = True
    masks[1][order[n_tr:n_tr + n_va]] = True
    masks[2][order[n_tr + n_va:]] = True
    return tuple(masks)
