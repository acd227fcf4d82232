"""Model building blocks, model specs, initialisation and checkpoints.

A model is a :class:`ModelSpec` (an input width plus an ordered list of
layer records) together with a flat ``dict`` of named parameter arrays.
Parameter names are ``"<layer index>.<field>"``, e.g. ``"0.logits"`` or
``"1.W"``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Union

import numpy as np

from . import affinity
from . import ndcore as nd
from .affinity import AffinityGraph
from .errors import ShapeMismatch, SpecInvalid
from .rng import CounterRNG

CHECKPOINT_FORMAT = "affinitynet-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class FeatureAttention:
    """Simplex-weighted feature scaling followed by kNN attention pooling.

    The pooling kernels act on the scaled features, so ``weighted_l2``
    here is the distance weighted by the layer's own feature weights.
    """

    k: int = 2
    graph_kernel: str = "weighted_l2"
    attention_kernel: str | None = None
    lam: float = 0.0
    eta: float = 0.5
    kind: str = field(default="feature_attention", init=False)


@dataclass
class KnnPooling:
    out: int = 100
    k: int = 2
    graph_kernel: str = "cosine"
    attention_kernel: str | None = None
    lam: float = 0.0
    eta: float = 0.5
    kind: str = field(default="knn_pooling", init=False)


@dataclass
class AffineReLU:
    out: int = 100
    kind: str = field(default="affine_relu", init=False)


@dataclass
class LinearHead:
    classes: int
    kind: str = field(default="linear_head", init=False)


@dataclass
class CoxHead:
    kind: str = field(default="cox_head", init=False)


Layer = Union[FeatureAttention, KnnPooling, AffineReLU, LinearHead, CoxHead]
_LAYER_TYPES = {cls.__dataclass_fields__["kind"].default: cls
                for cls in (FeatureAttention, KnnPooling, AffineReLU, LinearHead, CoxHead)}
_POOLING = ("feature_attention", "knn_pooling")


@dataclass
class ModelSpec:
    input_dim: int
    layers: list

    def validate(self) -> "ModelSpec":
        if self.input_dim < 1:
            raise SpecInvalid("input_dim must be positive")
        if not self.layers:
            raise SpecInvalid("model has no layers")
        heads = [i for i, layer in enumerate(self.layers) if layer.kind in ("linear_head", "cox_head")]
        if heads != [len(self.layers) - 1]:
            raise SpecInvalid("exactly one head is required and it must be the last layer")
        for layer in self.layers:
            if layer.kind not in _LAYER_TYPES:
                raise SpecInvalid(f"unknown layer kind {layer.kind!r}")
            if getattr(layer, "out", 1) < 1:
                raise SpecInvalid("layer widths must be positive")
            if isinstance(layer, LinearHead) and layer.classes < 1:
                raise SpecInvalid("linear_head needs at least one class")
            if layer.kind in _POOLING:
                if layer.k < 0:
                    raise SpecInvalid("k must be non-negative")
                if not (0 <= layer.lam <= 1 and 0 <= layer.eta <= 1):
                    raise SpecInvalid("lambda and eta must lie in [0, 1]")
                for kern in (layer.graph_kernel, layer.attention_kernel):
                    if kern is not None and kern not in affinity.KERNELS:
                        raise SpecInvalid(f"unknown kernel {kern!r}")
        return self

    def widths(self) -> list[int]:
        """Input width of every layer followed by the output width of the last."""
        w = [self.input_dim]
        for layer in self.layers:
            if layer.kind == "feature_attention":
                w.append(w[-1])
            elif layer.kind in ("knn_pooling", "affine_relu"):
                w.append(layer.out)
            elif layer.kind == "linear_head":
                w.append(layer.classes)
            else:
                w.append(1)
        return w

    @property
    def head(self) -> str:
        return self.layers[-1].kind

    def to_dict(self) -> dict:
        return {"input_dim": self.input_dim, "layers": [asdict(layer) for layer in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        layers = []
        for rec in d["layers"]:
            rec = dict(rec)
            kind = rec.pop("kind", None)
            if kind not in _LAYER_TYPES:
                raise SpecInvalid(f"unknown layer kind {kind!r}")
            try:
                layers.append(_LAYER_TYPES[kind](**rec))
            except TypeError as exc:
                raise SpecInvalid(f"bad fields for {kind}: {exc}") from exc
        return cls(int(d["input_dim"]), layers).validate()


def affinitynet_spec(p: int, classes: int, hidden: int = 100, k: int = 2,
                     pooling_hidden: bool = True, kernel: str = "cosine",
                     head: str = "linear") -> ModelSpec:
    """Feature attention, then a hidden layer (kNN pooling or plain), then a head."""
    hidden_layer = KnnPooling(hidden, k=k, graph_kernel=kernel) if pooling_hidden else AffineReLU(hidden)
    last = LinearHead(classes) if head == "linear" else CoxHead()
    return ModelSpec(p, [FeatureAttention(k=k), hidden_layer, last]).validate()


def neuralnet_spec(p: int, classes: int, hidden: int = 100, head: str = "linear") -> ModelSpec:
    last = LinearHead(classes) if head == "linear" else CoxHead()
    return ModelSpec(p, [AffineReLU(hidden), last]).validate()


# ----------------------------------------------------------------------
# parameters

def _kernel_weight_len(kind: str | None, width: int) -> int:
    return {"perceptron": 2 * width, "weighted_l2": width}.get(kind, 0)


def param_shapes(spec: ModelSpec) -> dict[str, tuple[int, int]]:
    spec.validate()
    widths = spec.widths()
    shapes = {}
    for i, layer in enumerate(spec.layers):
        d_in, d_out = widths[i], widths[i + 1]
        if layer.kind == "feature_attention":
            shapes[f"{i}.logits"] = (1, d_in)
        elif layer.kind in ("knn_pooling", "affine_relu"):
            shapes[f"{i}.W"] = (d_out, d_in)
            shapes[f"{i}.b"] = (1, d_out)
            if layer.kind == "knn_pooling":
                attn = layer.attention_kernel or layer.graph_kernel
                for tag, kern in (("graph_w", layer.graph_kernel), ("attn_w", attn)):
                    n = _kernel_weight_len(kern, d_in)
                    if n:
                        shapes[f"{i}.{tag}"] = (1, n)
        elif layer.kind == "linear_head":
            shapes[f"{i}.W"] = (d_out, d_in)
            shapes[f"{i}.b"] = (1, d_out)
        else:
            shapes[f"{i}.beta"] = (d_in, 1)
    return shapes


def parameter_count(spec: ModelSpec) -> int:
    return int(sum(r * c for r, c in param_shapes(spec).values()))


def init_params(spec: ModelSpec, seed: int = 0) -> dict[str, np.ndarray]:
    """Affine weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); logits 0; kernel weights 1."""
    rng = CounterRNG(seed, "init")
    params = {}
    for name, shape in param_shapes(spec).items():
        tag = name.split(".", 1)[1]
        if tag == "logits":
            params[name] = np.zeros(shape)
        elif tag in ("graph_w", "attn_w"):
            params[name] = np.ones(shape)
        else:
            fan_in = shape[0] if tag == "beta" else spec.widths()[int(name.split(".")[0])]
            bound = 1.0 / np.sqrt(fan_in)
            params[name] = rng.spawn(name).uniform(shape, -bound, bound)
    return params


def feature_weights(params: dict, layer: int = 0) -> np.ndarray:
    """Simplex weights of a feature attention layer."""
    z = np.asarray(params[f"{layer}.logits"], dtype=np.float64).ravel()
    e = np.exp(z - z.max())
    return e / e.sum()


# ----------------------------------------------------------------------
# forward passes

def _node(x) -> nd.Node:
    return x if isinstance(x, nd.Node) else nd.constant(x)


def feature_attention_forward(H, logits, k: int = 2, graph_kernel: str = "weighted_l2",
                              attention_kernel: str | None = None, G_e=None, G_prev=None,
                              lam: float = 0.0, eta: float = 1.0, rows=None) -> "PoolOutput":
    """Scale features by ``softmax(logits)`` and pool over kNN neighbourhoods.

    Kernels see the scaled features, so ``weighted_l2`` is the distance
    weighted by the layer's own feature weights.
    """
    H, logits = _node(H), _node(logits)
    if logits.value.size != H.shape[1]:
        raise ShapeMismatch(f"feature attention expects {logits.value.size} features, got {H.shape[1]}")
    w = nd.softmax_vector(nd.reshape(logits, (1, H.shape[1])))
    Ht = nd.mul(H, w)
    return _pool(Ht, k, graph_kernel, attention_kernel or graph_kernel, None, None,
                 G_e, G_prev, lam, eta, rows)


@dataclass
class PoolOutput:
    """Result of a pooling layer.

    ``scores`` is this layer's own (unmixed) score source, handed to the
    next layer as its previous-layer graph; ``mixed`` is the graph the
    neighbourhoods were selected from. Both are ``None`` when k = 0.
    """

    output: nd.Node
    neighborhoods: np.ndarray
    mixed: object = None
    scores: object = None

    def __iter__(self):
        graph = None if self.mixed is None else AffinityGraph(self.mixed.full(), self.neighborhoods)
        return iter((self.output, graph, None if self.scores is None else self.scores.full()))


def _kernel_node(kind, weight, width):
    if kind == "weighted_l2" and weight is None:
        return nd.constant(np.ones((1, width)))
    return weight


def _pool(H, k, graph_kernel, attention_kernel, graph_w, attn_w, G_e, G_prev, lam, eta,
          rows=None) -> PoolOutput:
    n, width = H.shape
    centers = np.arange(n) if rows is None else np.asarray(rows, dtype=np.intp)
    if k == 0:
        nbrs = centers[:, None]
        weights = nd.constant(np.ones((centers.size, 1)))
        return PoolOutput(nd.neighbor_pool(weights, H, nbrs), nbrs)
    # partial graphs smaller than k+1 pool over everything they have
    k = min(k, n - 1)
    gw = _kernel_node(graph_kernel, graph_w, width)
    scores = affinity.KernelScores(H.value, affinity.KernelSpec(graph_kernel, None if gw is None else gw.value.ravel()))
    mixed = affinity.MixedScores(G_e, scores, G_prev, lam, eta)
    nbrs = affinity.select_neighbors(mixed, k, centers)
    alpha = affinity.pair_scores(H, nbrs, attention_kernel, _kernel_node(attention_kernel, attn_w, width),
                                 centers=centers)
    a = nd.row_softmax(alpha)
    return PoolOutput(nd.neighbor_pool(a, H, nbrs), nbrs, mixed, scores)


def knn_pool_forward(H, W, b, k: int = 2, graph_kernel: str = "cosine",
                     attention_kernel: str | None = None, graph_w=None, attn_w=None,
                     G_e=None, G_prev=None, lam: float = 0.0, eta: float = 1.0,
                     rows=None) -> PoolOutput:
    """``relu(W . sum_j a_ij h_j + b)`` over each node's kNN neighbourhood.

    Unpacks as ``(output, mixed AffinityGraph, layer scores)``. With
    ``rows`` only those nodes' outputs are computed (their neighbourhoods
    still range over every row of ``H``).
    """
    H, W, b = _node(H), _node(W), _node(b)
    if W.shape[1] != H.shape[1] or b.value.size != W.shape[0]:
        raise ShapeMismatch(f"pooling layer W {W.shape}, b {b.shape} vs input {H.shape}")
    graph_w = None if graph_w is None else _node(graph_w)
    attn_w = None if attn_w is None else _node(attn_w)
    res = _pool(H, k, graph_kernel, attention_kernel or graph_kernel, graph_w, attn_w,
                G_e, G_prev, lam, eta, rows)
    res.output = nd.relu(nd.add(nd.matmul(res.output, nd.transpose(W)), nd.reshape(b, (1, W.shape[0]))))
    return res


def affine_relu_forward(H, W, b) -> nd.Node:
    return nd.relu(linear_head_forward(H, W, b))


def linear_head_forward(H, W, b) -> nd.Node:
    H, W, b = _node(H), _node(W), _node(b)
    if W.shape[1] != H.shape[1] or b.value.size != W.shape[0]:
        raise ShapeMismatch(f"linear layer W {W.shape}, b {b.shape} vs input {H.shape}")
    return nd.add(nd.matmul(H, nd.transpose(W)), nd.reshape(b, (1, W.shape[0])))


def cox_head_forward(H, beta) -> nd.Node:
    H, beta = _node(H), _node(beta)
    if beta.value.size != H.shape[1]:
        raise ShapeMismatch(f"cox head beta has {beta.value.size} entries, input has {H.shape[1]}")
    return nd.matmul(H, nd.reshape(beta, (H.shape[1], 1)))


@dataclass
class ForwardResult:
    outputs: nd.Node
    representations: list
    pool_outputs: list

    @property
    def embedding(self) -> nd.Node:
        """Representation fed into the head."""
        return self.representations[-1]

    @property
    def graph(self) -> AffinityGraph | None:
        """Mixed affinity graph and neighbourhoods of the last pooling layer with k > 0."""
        for res in reversed(self.pool_outputs):
            if res.mixed is not None:
                if res.neighborhoods.shape[0] != res.mixed.n:
                    return None
                return AffinityGraph(res.mixed.full(), res.neighborhoods)
        return None


def model_forward(spec: ModelSpec, params: dict, H, G_e=None, rows=None) -> ForwardResult:
    """Run every layer in order, threading each pooling layer's graph forward.

    ``params`` maps names to arrays or :class:`~affinitynet.ndcore.Node`
    objects; pass nodes to get gradients. With ``rows`` the outputs cover
    only those rows: layers up to the last pooling layer still see every
    row, so the result equals the matching rows of the full pass.
    """
    spec.validate()
    x = _node(H)
    if x.shape[1] != spec.input_dim:
        raise ShapeMismatch(f"model expects {spec.input_dim} features, got {x.shape[1]}")
    P = {name: _node(v) for name, v in params.items()}
    pooling_idx = [i for i, layer in enumerate(spec.layers) if layer.kind in _POOLING]
    restrict_at = pooling_idx[-1] if pooling_idx else -1
    if rows is not None:
        rows = np.asarray(rows, dtype=np.intp)
        if restrict_at < 0:
            x = nd.gather_rows(x, rows)
    reps, pools = [], []
    prev_scores = None
    for i, layer in enumerate(spec.layers):
        kind = layer.kind
        if kind in _POOLING:
            eta = layer.eta if prev_scores is not None else 1.0
            lam = layer.lam if G_e is not None else 0.0
            sub = rows if i == restrict_at else None
            if kind == "feature_attention":
                res = feature_attention_forward(
                    x, P[f"{i}.logits"], layer.k, layer.graph_kernel, layer.attention_kernel,
                    G_e, prev_scores, lam, eta, rows=sub)
            else:
                res = knn_pool_forward(
                    x, P[f"{i}.W"], P[f"{i}.b"], layer.k, layer.graph_kernel,
                    layer.attention_kernel, P.get(f"{i}.graph_w"), P.get(f"{i}.attn_w"),
                    G_e, prev_scores, lam, eta, rows=sub)
            if res.scores is not None:
                prev_scores = res.scores
            x = res.output
            pools.append(res)
            reps.append(x)
        elif kind == "affine_relu":
            x = affine_relu_forward(x, P[f"{i}.W"], P[f"{i}.b"])
            reps.append(x)
        elif kind == "linear_head":
            x = linear_head_forward(x, P[f"{i}.W"], P[f"{i}.b"])
        else:
            x = cox_head_forward(x, P[f"{i}.beta"])
    if not reps:
        reps.append(_node(H) if rows is None else nd.gather_rows(_node(H), rows))
    return ForwardResult(x, reps, pools)


# ----------------------------------------------------------------------
# checkpoints

def save_checkpoint(path, spec: ModelSpec, params: dict, step: int = 0) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "step": int(step),
        "spec": spec.to_dict(),
        "params": {
            name: {"shape": list(np.shape(v)), "data": np.asarray(v, dtype=np.float64).ravel().tolist()}
            for name, v in sorted(params.items())
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)


def load_checkpoint(path):
    """Returns ``(spec, params, step)``."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise SpecInvalid("not an affinitynet checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise SpecInvalid(f"unsupported checkpoint version {doc.get('version')}")
    spec = ModelSpec.from_dict(doc["spec"])
    expected = param_shapes(spec)
    params = {}
    for name, rec in doc["params"].items():
        shape = tuple(rec["shape"])
        if expected.get(name) != shape:
            raise SpecInvalid(f"parameter {name} has shape {shape}, spec wants {expected.get(name)}")
        params[name] = np.array(rec["data"], dtype=np.float64).reshape(shape)
    missing = set(expected) - set(params)
    if missing:
        raise SpecInvalid(f"checkpoint lacks parameters {sorted(missing)}")
    return spec, params, int(doc["step"])
