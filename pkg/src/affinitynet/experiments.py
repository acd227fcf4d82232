"""Experiment drivers behind the command-line interface.

Each ``run_*`` function takes a config dataclass and an output directory
(or ``None`` to skip writing) and returns a summary dictionary. The
summary's ``checks`` entry maps threshold names to booleans; the CLI
turns a failed check into exit status 3 when asked to.
"""

from __future__ import annotations

import dataclasses
import datetime
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import data, layers, metrics, report
from . import ndcore as nd
from .errors import ConfigError, NoEvents
from .training import TrainConfig, cox_nll, masked_cross_entropy, predict, train

logger = logging.getLogger(__name__)


# ----------------------------------------------------------------------
# configuration records

@dataclass
class ModelOptions:
    """Model and optimiser settings shared by the training commands."""

    epochs: int = 200
    learning_rate: float = 1e-3
    logits_lr_scale: float = 10.0
    hidden: int = 100
    k: int = 2
    kernel: str = "cosine"
    pooling_hidden: bool = False
    batch_size: int | None = None
    eval_every: int = 10


@dataclass
class SyntheticConfig(ModelOptions):
    n_per_cluster: int = 1000
    train_fraction: float = 0.01
    seed: int = 0
    reps: int = 1
    min_affinitynet_accuracy: float = 0.95
    max_baseline_accuracy: float = 0.65
    min_weight_ratio: float = 5.0


@dataclass
class ClassifyConfig(ModelOptions):
    source: str = "unbalanced"
    path: str | None = None
    label_column: str | None = "label"
    label_file: str | None = None
    orientation: str = "samples_as_rows"
    zscore: bool = False
    top_variance: int | None = None
    fractions: list = field(default_factory=lambda: [0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7])
    pooling_hidden: bool = True
    seed: int = 0
    reps: int = 20
    top: int = 10


@dataclass
class ClusterConfig(ModelOptions):
    source: str = "synthetic"
    path: str | None = None
    label_column: str | None = "label"
    label_file: str | None = None
    orientation: str = "samples_as_rows"
    zscore: bool = False
    top_variance: int | None = None
    n_per_cluster: int = 1000
    train_fraction: float = 0.01
    n_clusters: int | None = None
    n_neighbors: int = 10
    seed: int = 0
    reps: int = 30


@dataclass
class SurvivalConfig(ModelOptions):
    source: str = "surrogate"
    path: str | None = None
    survival_file: str | None = None
    label_column: str | None = None
    label_file: str | None = None
    orientation: str = "samples_as_rows"
    zscore: bool = False
    top_variance: int | None = None
    n: int = 600
    train_fraction: float = 0.4
    val_fraction: float = 0.3
    proportions: list | None = None
    baseline_columns: list = field(default_factory=lambda: [2, 3])
    seed: int = 0
    reps: int = 5
    min_concordance_gain: float = 0.05


@dataclass
class GradcheckConfig:
    seed: int = 0
    reps: int = 3
    n: int = 8
    p: int = 5
    eps: float = 1e-5
    tolerance: float = 1e-4


CONFIGS = {
    "synthetic": SyntheticConfig,
    "classify": ClassifyConfig,
    "cluster": ClusterConfig,
    "survival": SurvivalConfig,
    "gradcheck": GradcheckConfig,
}


def make_config(command: str, file_values: dict | None = None, overrides: dict | None = None):
    """Defaults, then file values, then overrides; unknown keys are rejected."""
    cls = CONFIGS[command]
    names = {f.name for f in dataclasses.fields(cls)}
    values = {}
    for source in (file_values or {}, overrides or {}):
        unknown = sorted(set(source) - names)
        if unknown:
            raise ConfigError(f"unknown {command} config keys: {', '.join(unknown)}")
        values.update(source)
    try:
        cfg = cls(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    validate_config(cfg)
    return cfg


def load_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    return doc


def validate_config(cfg) -> None:
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(isinstance(cfg.reps, int) and cfg.reps >= 1, "reps must be a positive integer")
    need(isinstance(cfg.seed, int), "seed must be an integer")
    if isinstance(cfg, ModelOptions):
        need(cfg.epochs >= 1, "epochs must be at least 1")
        need(cfg.learning_rate > 0, "learning_rate must be positive")
        need(cfg.logits_lr_scale > 0, "logits_lr_scale must be positive")
        need(cfg.hidden >= 1, "hidden must be at least 1")
        need(cfg.k >= 0, "k must be non-negative")
        need(cfg.kernel in ("cosine", "inner_product", "perceptron", "weighted_l2"),
             f"unknown kernel {cfg.kernel!r}")
        need(cfg.eval_every >= 1, "eval_every must be at least 1")
        need(cfg.batch_size is None or cfg.batch_size >= 2, "batch_size must be at least 2")
    if hasattr(cfg, "train_fraction"):
        need(0 < cfg.train_fraction < 1, "train_fraction must lie in (0, 1)")
    if isinstance(cfg, ClassifyConfig):
        need(len(cfg.fractions) > 0 and all(0 < f < 1 for f in cfg.fractions),
             "fractions must lie in (0, 1)")
        need(1 <= cfg.top <= cfg.reps, "top must lie in [1, reps]")
    if isinstance(cfg, (ClassifyConfig, ClusterConfig, SurvivalConfig)):
        builtin = {"classify": "unbalanced", "cluster": "synthetic", "survival": "surrogate"}
        need(cfg.source in ("csv", *builtin.values()), f"unknown source {cfg.source!r}")
        need(cfg.source != "csv" or cfg.path, "source 'csv' needs a path")
    if isinstance(cfg, SurvivalConfig):
        need(cfg.val_fraction >= 0 and cfg.train_fraction + cfg.val_fraction < 1,
             "train_fraction + val_fraction must be below 1")
        need(cfg.source != "csv" or cfg.survival_file, "survival from csv needs survival_file")
    if isinstance(cfg, GradcheckConfig):
        need(cfg.n >= 4 and cfg.p >= 2, "gradcheck needs n >= 4 and p >= 2")
        need(cfg.eps > 0 and cfg.tolerance > 0, "eps and tolerance must be positive")


def config_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


# ----------------------------------------------------------------------
# shared helpers

def _train_config(cfg: ModelOptions, seed: int) -> TrainConfig:
    return TrainConfig(epochs=cfg.epochs, learning_rate=cfg.learning_rate, seed=seed,
                       batch_size=cfg.batch_size, lr_scale={"logits": cfg.logits_lr_scale},
                       eval_every=cfg.eval_every)


def _specs(cfg: ModelOptions, p: int, classes: int, head: str = "linear"):
    ours = layers.affinitynet_spec(p, classes, cfg.hidden, cfg.k, cfg.pooling_hidden, cfg.kernel, head)
    base = layers.neuralnet_spec(p, classes, cfg.hidden, head)
    return ours, base


def _load_table(cfg) -> data.Dataset:
    d = data.load_csv(cfg.path, cfg.orientation, cfg.label_column if cfg.orientation == "samples_as_rows" else None,
                      cfg.label_file, getattr(cfg, "survival_file", None), cfg.zscore)
    if cfg.top_variance is not None:
        d = data.top_variance_select(d, cfg.top_variance)
    return d


def _history_rows(tag, rep, seed, hist):
    return [(tag, rep, seed, e, loss, tr, te) for e, loss, tr, te in hist.rows()]


HISTORY_HEADER = ["model", "rep", "seed", "epoch", "train_loss", "train_score", "test_score"]


def _mkdir(out):
    if out is not None:
        os.makedirs(out, exist_ok=True)


def _finish(out, command, cfg, summary):
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    summary = {"command": command, "timestamp": stamp, "config": config_dict(cfg), **summary}
    if out is not None:
        report.write_json(os.path.join(out, "config.json"), config_dict(cfg))
        report.write_json(os.path.join(out, "summary.json"), summary)
    return summary


# ----------------------------------------------------------------------
# synthetic four-Gaussian experiment

def synthetic_rep(cfg: SyntheticConfig, seed: int) -> dict:
    """One seed of the four-cluster few-shot experiment."""
    d = data.gen_synthetic(cfg.n_per_cluster, seed)
    train_mask, test_mask = data.split(d, data.SplitPlan(cfg.train_fraction, True, seed))
    ours, base = _specs(cfg, d.p, 4)
    tc = _train_config(cfg, seed)
    out = {"seed": seed, "n_train": int(train_mask.sum()), "n_test": int(test_mask.sum())}
    for tag, spec in (("affinitynet", ours), ("neuralnet", base)):
        params, hist = train(spec, d, tc, train_mask, test_mask)
        fwd = layers.model_forward(spec, params, d.features)
        pred = fwd.outputs.value.argmax(axis=1)
        out[tag] = {
            "train_accuracy": metrics.accuracy(pred[train_mask], d.labels[train_mask]),
            "test_accuracy": metrics.accuracy(pred[test_mask], d.labels[test_mask]),
            "parameters": layers.parameter_count(spec),
            "history": hist,
            "embedding": fwd.embedding.value,
        }
        if tag == "affinitynet":
            w = layers.feature_weights(params)
            out["feature_weights"] = w
            out["signal_mean_weight"] = float(w[:2].mean())
            out["noise_mean_weight"] = float(w[2:].mean())
            out["weight_ratio"] = float(w[:2].mean() / w[2:].mean())
    out["labels"] = d.labels
    return out


def run_synthetic(cfg: SyntheticConfig, out=None) -> dict:
    _mkdir(out)
    reps, hist_rows, weight_rows = [], [], []
    names = ["signal_0", "signal_1"] + [f"noise_{i}" for i in range(data.NOISE_DIM)]
    for r in range(cfg.reps):
        seed = cfg.seed + r
        res = synthetic_rep(cfg, seed)
        for tag in ("affinitynet", "neuralnet"):
            hist_rows += _history_rows(tag, r, seed, res[tag]["history"])
        weight_rows += [(r, seed, j, names[j], "signal" if j < 2 else "noise", float(w))
                        for j, w in enumerate(res["feature_weights"])]
        reps.append({
            "rep": r, "seed": seed,
            "affinitynet_train_accuracy": res["affinitynet"]["train_accuracy"],
            "affinitynet_test_accuracy": res["affinitynet"]["test_accuracy"],
            "neuralnet_train_accuracy": res["neuralnet"]["train_accuracy"],
            "neuralnet_test_accuracy": res["neuralnet"]["test_accuracy"],
            "signal_mean_weight": res["signal_mean_weight"],
            "noise_mean_weight": res["noise_mean_weight"],
            "weight_ratio": res["weight_ratio"],
        })
        logger.info("synthetic seed %d: affinitynet %.3f neuralnet %.3f ratio %.1f", seed,
                    reps[-1]["affinitynet_test_accuracy"], reps[-1]["neuralnet_test_accuracy"],
                    reps[-1]["weight_ratio"])
    ours_med = float(np.median([x["affinitynet_test_accuracy"] for x in reps]))
    base_med = float(np.median([x["neuralnet_test_accuracy"] for x in reps]))
    ratio_hits = sum(x["weight_ratio"] >= cfg.min_weight_ratio for x in reps)
    need_hits = len(reps) - len(reps) // 5  # 4 of 5
    summary = {
        "median_affinitynet_test_accuracy": ours_med,
        "median_neuralnet_test_accuracy": base_med,
        "weight_ratio_hits": ratio_hits,
        "reps": reps,
        "checks": {
            "affinitynet_accuracy": ours_med >= cfg.min_affinitynet_accuracy,
            "baseline_accuracy": base_med <= cfg.max_baseline_accuracy,
            "feature_weight_ratio": ratio_hits >= need_hits,
        },
    }
    if out is not None:
        report.write_table(os.path.join(out, "history.csv"), HISTORY_HEADER, hist_rows)
        report.write_table(os.path.join(out, "feature_weights.csv"),
                           ["rep", "seed", "index", "feature", "kind", "weight"], weight_rows)
        report.write_table(os.path.join(out, "runs.csv"), list(reps[0]), [list(x.values()) for x in reps])
    return _finish(out, "synthetic", cfg, summary)


# ----------------------------------------------------------------------
# classification AMI over a grid of training fractions

def _classify_data(cfg: ClassifyConfig, seed: int) -> data.Dataset:
    if cfg.source == "unbalanced":
        return data.gen_unbalanced(seed=seed)
    return _load_table(cfg)


def run_classify(cfg: ClassifyConfig, out=None) -> dict:
    _mkdir(out)
    d = _classify_data(cfg, cfg.seed)
    if d.labels is None:
        raise ConfigError("classify needs labels")
    run_rows, hist_rows, per_fraction = [], [], []
    for fraction in cfg.fractions:
        scores = {"affinitynet": [], "neuralnet": []}
        for r in range(cfg.reps):
            seed = cfg.seed + r
            train_mask, test_mask = data.split(d, data.SplitPlan(fraction, True, seed))
            ours, base = _specs(cfg, d.p, d.n_classes)
            for tag, spec in (("affinitynet", ours), ("neuralnet", base)):
                params, hist = train(spec, d, _train_config(cfg, seed), train_mask, test_mask)
                pred = predict(spec, params, d.features).argmax(axis=1)
                ami = metrics.adjusted_mutual_information(pred[test_mask], d.labels[test_mask])
                acc = metrics.accuracy(pred[test_mask], d.labels[test_mask])
                scores[tag].append(ami)
                run_rows.append((fraction, tag, r, seed, ami, acc))
                hist_rows += [(fraction, *row) for row in _history_rows(tag, r, seed, hist)]
        entry = {"fraction": fraction}
        for tag, vals in scores.items():
            top = np.sort(np.asarray(vals))[::-1][:cfg.top]
            entry[f"{tag}_top_mean_ami"] = float(top.mean())
            entry[f"{tag}_mean_ami"] = float(np.mean(vals))
        per_fraction.append(entry)
    protocol = (f"mean of the top {cfg.top} of {cfg.reps} runs" if cfg.top < cfg.reps
                else f"plain mean of {cfg.reps} runs")
    summary = {
        "protocol": protocol,
        "baselines_absent": ["svm", "naive_bayes", "random_forest"],
        "fractions": per_fraction,
        "checks": {
            f"affinitynet_beats_neuralnet@{e['fraction']}":
                e["affinitynet_top_mean_ami"] > e["neuralnet_top_mean_ami"] for e in per_fraction
        },
    }
    if out is not None:
        report.write_table(os.path.join(out, "runs.csv"),
                           ["fraction", "model", "rep", "seed", "test_ami", "test_accuracy"], run_rows)
        report.write_table(os.path.join(out, "history.csv"), ["fraction"] + HISTORY_HEADER, hist_rows)
        report.write_table(os.path.join(out, "fractions.csv"), list(per_fraction[0]),
                           [list(e.values()) for e in per_fraction])
    return _finish(out, "classify", cfg, summary)


# ----------------------------------------------------------------------
# spectral clustering of learned representations

def _cluster_data(cfg: ClusterConfig, seed: int) -> data.Dataset:
    if cfg.source == "synthetic":
        return data.gen_synthetic(cfg.n_per_cluster, seed)
    d = _load_table(cfg)
    if d.labels is None:
        raise ConfigError("cluster needs labels to score against")
    return d


def cluster_rep(cfg: ClusterConfig, seed: int, d: data.Dataset | None = None) -> dict:
    """Train both models on a small labelled fraction, then cluster every row.

    Learned representations use the cosine affinity; the raw-feature
    baseline uses a locally scaled Gaussian kNN affinity.
    """
    d = _cluster_data(cfg, seed) if d is None else d
    k = cfg.n_clusters or d.n_classes
    train_mask, test_mask = data.split(d, data.SplitPlan(cfg.train_fraction, True, seed))
    ours, base = _specs(cfg, d.p, d.n_classes)
    out = {"seed": seed, "n_clusters": k}
    for tag, spec in (("affinitynet", ours), ("neuralnet", base)):
        params, _ = train(spec, d, _train_config(cfg, seed), train_mask, test_mask)
        emb = layers.model_forward(spec, params, d.features).embedding.value
        G = metrics.representation_affinity(emb, cfg.n_neighbors)
        labels = metrics.spectral_clustering(G, k, seed)
        out[f"{tag}_ami"] = metrics.adjusted_mutual_information(labels, d.labels)
    G = metrics.gaussian_affinity(d.features, cfg.n_neighbors)
    out["raw_ami"] = metrics.adjusted_mutual_information(metrics.spectral_clustering(G, k, seed), d.labels)
    return out


def run_cluster(cfg: ClusterConfig, out=None) -> dict:
    _mkdir(out)
    fixed = None if cfg.source == "synthetic" else _cluster_data(cfg, cfg.seed)
    reps = []
    for r in range(cfg.reps):
        res = cluster_rep(cfg, cfg.seed + r, fixed)
        reps.append({"rep": r, **res})
        logger.info("cluster seed %d: affinitynet %.3f raw %.3f", res["seed"], res["affinitynet_ami"],
                    res["raw_ami"])
    hits = sum(x["affinitynet_ami"] >= x["raw_ami"] for x in reps)
    summary = {
        "median_affinitynet_ami": float(np.median([x["affinitynet_ami"] for x in reps])),
        "median_neuralnet_ami": float(np.median([x["neuralnet_ami"] for x in reps])),
        "median_raw_ami": float(np.median([x["raw_ami"] for x in reps])),
        "affinitynet_at_least_raw": hits,
        "reps": reps,
        "checks": {"transformed_beats_raw": hits >= len(reps) - len(reps) // 5},
    }
    if out is not None:
        report.write_table(os.path.join(out, "runs.csv"), list(reps[0]), [list(x.values()) for x in reps])
    return _finish(out, "cluster", cfg, summary)


# ----------------------------------------------------------------------
# survival

def fit_linear_cox(X, time, event, max_iter: int = 200) -> np.ndarray:
    """Coefficients of a linear Cox model by L-BFGS on the partial likelihood."""
    from scipy.optimize import minimize

    X = np.asarray(X, dtype=np.float64)

    def objective(beta):
        b = nd.parameter(beta.reshape(-1, 1))
        loss = cox_nll(nd.matmul(nd.constant(X), b), time, event)
        nd.backward(loss)
        return float(loss.value[0, 0]), b.grad.ravel()

    res = minimize(objective, np.zeros(X.shape[1]), jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter})
    return res.x


def _survival_data(cfg: SurvivalConfig, seed: int) -> data.Dataset:
    if cfg.source == "surrogate":
        return data.gen_survival_surrogate(cfg.n, seed)
    d = _load_table(cfg)
    if d.time is None:
        raise ConfigError("survival needs survival records")
    return d


def survival_rep(cfg: SurvivalConfig, seed: int, d: data.Dataset | None = None) -> dict:
    d = _survival_data(cfg, seed) if d is None else d
    tr, va, te = data.three_way_split(d.n, cfg.train_fraction, cfg.val_fraction, seed)
    if not d.event[tr].any():
        raise NoEvents("no events among training rows")
    ours, _ = _specs(cfg, d.p, 1, head="cox")
    params, hist = train(ours, d, _train_config(cfg, seed), tr, te)
    risk = predict(ours, params, d.features)[:, 0]
    cols = list(cfg.baseline_columns)
    beta = fit_linear_cox(d.features[tr][:, cols], d.time[tr], d.event[tr])
    base_risk = d.features[:, cols] @ beta

    def cindex(r, mask):
        return metrics.concordance_index(r[mask], d.time[mask], d.event[mask])

    if cfg.proportions is not None:
        props = np.asarray(cfg.proportions, dtype=np.float64)
    elif d.labels is not None:
        props = np.bincount(d.labels) / d.n
    else:
        props = np.full(3, 1.0 / 3.0)
    groups = metrics.hazard_group_split(risk, props)
    stat, df = metrics.logrank_statistic(groups, d.time, d.event)
    return {
        "seed": seed,
        "test_concordance": cindex(risk, te),
        "validation_concordance": cindex(risk, va) if va.any() else None,
        "baseline_test_concordance": cindex(base_risk, te),
        "logrank_statistic": stat,
        "logrank_df": df,
        "logrank_p": metrics.chi2_sf(stat, df),
        "groups": groups,
        "history": hist,
        "km": metrics.kaplan_meier(d.time, d.event, groups),
    }


def run_survival(cfg: SurvivalConfig, out=None) -> dict:
    _mkdir(out)
    fixed = None if cfg.source == "surrogate" else _survival_data(cfg, cfg.seed)
    reps, hist_rows, km_rows = [], [], []
    for r in range(cfg.reps):
        res = survival_rep(cfg, cfg.seed + r, fixed)
        hist_rows += _history_rows("affinitynet", r, res["seed"], res.pop("history"))
        km_rows += [(r, *row) for row in res.pop("km")]
        res.pop("groups")
        reps.append({"rep": r, **res})
        logger.info("survival seed %d: c %.3f baseline %.3f", res["seed"], res["test_concordance"],
                    res["baseline_test_concordance"])
    gains = [x["test_concordance"] - x["baseline_test_concordance"] for x in reps]
    summary = {
        "median_test_concordance": float(np.median([x["test_concordance"] for x in reps])),
        "median_baseline_test_concordance": float(np.median([x["baseline_test_concordance"] for x in reps])),
        "median_concordance_gain": float(np.median(gains)),
        "baseline": f"linear Cox fit on feature columns {list(cfg.baseline_columns)}",
        "reps": reps,
        "checks": {
            "concordance_gain": float(np.median(gains)) >= cfg.min_concordance_gain,
            "logrank_positive": all(x["logrank_statistic"] > 0 for x in reps),
        },
    }
    if out is not None:
        report.write_table(os.path.join(out, "runs.csv"), list(reps[0]), [list(x.values()) for x in reps])
        report.write_table(os.path.join(out, "history.csv"), HISTORY_HEADER, hist_rows)
        report.write_table(os.path.join(out, "kaplan_meier.csv"),
                           ["rep", "group", "time", "at_risk", "events", "survival"], km_rows)
    return _finish(out, "survival", cfg, summary)


# ----------------------------------------------------------------------
# gradient checks

def gradient_checks(seed: int, n: int = 8, p: int = 5, eps: float = 1e-5) -> list[tuple[str, float]]:
    """Finite-difference errors for every layer, kernel and loss on one random instance."""
    rng = np.random.default_rng(seed)
    H = rng.normal(size=(n, p))
    h = 4
    W, b = rng.normal(size=(h, p)) * 0.5, rng.normal(size=(1, h)) * 0.1
    checks = []

    def proj(node):
        R = np.random.default_rng(seed + 1000).normal(size=node.shape)
        return nd.sum(nd.mul(node, R))

    def add(name, f, theta):
        checks.append((name, nd.finite_diff_check(f, theta, eps)))

    logits = rng.normal(size=(1, p)) * 0.3
    for kern in ("weighted_l2", "cosine"):
        add(f"feature_attention[{kern}].logits",
            lambda t: proj(layers.feature_attention_forward(H, t, 2, kern).output), logits)
        add(f"feature_attention[{kern}].input",
            lambda t: proj(layers.feature_attention_forward(t, logits, 2, kern).output), H)

    for kern in ("cosine", "inner_product", "perceptron", "weighted_l2"):
        wlen = layers._kernel_weight_len(kern, p)
        aw = rng.uniform(0.5, 1.5, size=(1, wlen)) if wlen else None

        def pool(Hx=H, Wx=W, bx=b, awx=aw, kern=kern):
            return proj(layers.knn_pool_forward(Hx, Wx, bx, 2, kern, graph_w=aw, attn_w=awx).output)

        add(f"knn_pooling[{kern}].W", lambda t: pool(Wx=t), W)
        add(f"knn_pooling[{kern}].b", lambda t: pool(bx=t), b)
        add(f"knn_pooling[{kern}].input", lambda t: pool(Hx=t), H)
        if wlen:
            add(f"knn_pooling[{kern}].attn_w", lambda t: pool(awx=t), aw)

    add("affine_relu.W", lambda t: proj(layers.affine_relu_forward(H, t, b)), W)
    add("affine_relu.b", lambda t: proj(layers.affine_relu_forward(H, W, t)), b)
    add("affine_relu.input", lambda t: proj(layers.affine_relu_forward(t, W, b)), H)
    add("linear_head.W", lambda t: proj(layers.linear_head_forward(H, t, b)), W)
    add("linear_head.input", lambda t: proj(layers.linear_head_forward(t, W, b)), H)
    beta = rng.normal(size=(p, 1))
    add("cox_head.beta", lambda t: proj(layers.cox_head_forward(H, t)), beta)
    add("cox_head.input", lambda t: proj(layers.cox_head_forward(t, beta)), H)

    labels = rng.integers(0, 3, size=n)
    mask = rng.random(n) < 0.6
    mask[0] = True
    add("masked_cross_entropy", lambda t: masked_cross_entropy(t, labels, mask), rng.normal(size=(n, 3)))
    time = rng.integers(1, 4, size=n).astype(float)  # forces ties
    event = rng.random(n) < 0.7
    event[0] = True
    add("cox_nll", lambda t: cox_nll(t, time, event), rng.normal(size=(n, 1)))
    return checks


def run_gradcheck(cfg: GradcheckConfig, out=None) -> dict:
    _mkdir(out)
    rows = []
    for r in range(cfg.reps):
        seed = cfg.seed + r
        rows += [(r, seed, name, err) for name, err in gradient_checks(seed, cfg.n, cfg.p, cfg.eps)]
    worst: dict[str, float] = {}
    for _, _, name, err in rows:
        worst[name] = max(worst.get(name, 0.0), err)
    summary = {
        "tolerance": cfg.tolerance,
        "max_relative_error": worst,
        "checks": {name: err <= cfg.tolerance for name, err in worst.items()},
    }
    if out is not None:
        report.write_table(os.path.join(out, "gradcheck.csv"),
                           ["instance", "seed", "check", "max_relative_error"], rows)
    return _finish(out, "gradcheck", cfg, summary)


RUNNERS = {
    "synthetic": run_synthetic,
    "classify": run_classify,
    "cluster": run_cluster,
    "survival": run_survival,
    "gradcheck": run_gradcheck,
}
