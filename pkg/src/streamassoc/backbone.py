"""Feed-forward embedder/classifier and its Adam optimizer.

The network is ``input -> tanh hidden layers -> linear embedding (D) ->
linear logits (C)``. Parameters are plain value objects; every function
returns new arrays instead of mutating its arguments.
"""

import io
import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .numgrad import ContractError, DimensionError, Graph, as_matrix

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class EmbedderParams:
    layers: tuple  # ((W, b), ...) with b of shape 1 x out
    embed_dim: int
    num_classes: int
    activation: str = "tanh"

    def __post_init__(self):
        if not 2 <= self.embed_dim <= 256:
            raise ContractError(f"embed_dim must be in [2, 256], got {self.embed_dim}")
        for (w0, _), (w1, _) in zip(self.layers, self.layers[1:]):
            if w0.shape[1] != w1.shape[0]:
                raise DimensionError(f"layer shapes do not chain: {w0.shape} -> {w1.shape}")
        if self.layers[-2][0].shape[1] != self.embed_dim:
            raise DimensionError("penultimate layer width must equal embed_dim")
        if self.layers[-1][0].shape[1] != self.num_classes:
            raise DimensionError("final layer width must equal num_classes")

    @property
    def input_dim(self):
        return self.layers[0][0].shape[0]

    @property
    def hidden(self):
        return tuple(w.shape[1] for w, _ in self.layers[:-2])

    def arrays(self):
        return [a for pair in self.layers for a in pair]

    def with_arrays(self, arrays):
        it = iter(arrays)
        layers = tuple((next(it), next(it)) for _ in self.layers)
        return EmbedderParams(layers, self.embed_dim, self.num_classes, self.activation)


@dataclass
class ForwardOutput:
    embeddings: np.ndarray
    logits: np.ndarray


@dataclass
class OptimState:
    m: list
    v: list
    step: int = 0
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8


def init_params(input_dim, hidden, embed_dim, num_classes, seed=0):
    """Draw LeCun-uniform weights (variance 1/fan_in) and zero biases."""
    widths = [input_dim, *hidden, embed_dim, num_classes]
    if any(int(w) < 1 for w in widths):
        raise ContractError(f"all layer widths must be >= 1, got {widths}")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in zip(widths, widths[1:]):
        limit = np.sqrt(3.0 / fan_in)
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        layers.append((w, np.zeros((1, fan_out))))
    return EmbedderParams(tuple(layers), int(embed_dim), int(num_classes))


def build_forward(g, param_nodes, batch):
    """Record the forward pass on graph ``g``; returns (embeddings, logits) nodes.

    ``param_nodes`` is the flat list ``[W0, b0, W1, b1, ...]`` of graph nodes.
    """
    h = g.constant(batch) if not hasattr(batch, "graph") else batch
    n_layers = len(param_nodes) // 2
    emb = None
    for k in range(n_layers):
        w, b = param_nodes[2 * k], param_nodes[2 * k + 1]
        if h.shape[1] != w.shape[0]:
            raise DimensionError(f"input has {h.shape[1]} columns, layer expects {w.shape[0]}")
        h = g.add(g.matmul(h, w), b)
        if k < n_layers - 2:
            h = g.tanh(h)
        elif k == n_layers - 2:
            emb = h
    return emb, h


def forward(params, batch):
    batch = np.asarray(batch, dtype=np.float64)
    if batch.size == 0 and batch.ndim != 2:
        batch = batch.reshape(0, params.input_dim)
    batch = as_matrix(batch)
    if batch.shape[1] != params.input_dim:
        raise DimensionError(
            f"batch has {batch.shape[1]} columns, params expect {params.input_dim}")
    h = batch
    n_layers = len(params.layers)
    emb = None
    for k, (w, b) in enumerate(params.layers):
        h = h @ w + b
        if k < n_layers - 2:
            h = np.tanh(h)
        elif k == n_layers - 2:
            emb = h
    return ForwardOutput(emb, h)


def predict(params, batch):
    return np.argmax(forward(params, batch).logits, axis=1)


def check_onehot(labels):
    labels = as_matrix(labels)
    ok = np.all((labels == 0) | (labels == 1)) and np.all(labels.sum(axis=1) == 1)
    if not ok:
        raise ContractError("labels must be one-hot rows")
    return labels


def one_hot(labels, num_classes):
    labels = np.asarray(labels, dtype=int)
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def task_loss(g, logits, onehot):
    """Mean softmax cross-entropy of ``logits`` against one-hot labels."""
    onehot = check_onehot(onehot)
    if onehot.shape != logits.shape:
        raise DimensionError(f"labels {onehot.shape} vs logits {logits.shape}")
    logp = g.log_softmax(logits)
    return g.scale(g.sum(g.mul(logp, onehot)), -1.0 / logits.shape[0])


def init_state(params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
    zeros = [np.zeros_like(a) for a in params.arrays()]
    return OptimState([z.copy() for z in zeros], zeros, 0, lr, tuple(betas), eps)


def opt_step(params, grads, state):
    """One bias-corrected Adam update; returns ``(params, state)``."""
    arrays = params.arrays()
    if len(grads) != len(arrays):
        raise DimensionError("gradient list does not match parameters")
    b1, b2 = state.betas
    t = state.step + 1
    new_arrays, new_m, new_v = [], [], []
    for p, g, m, v in zip(arrays, grads, state.m, state.v):
        if g.shape != p.shape:
            raise DimensionError(f"gradient shape {g.shape} vs param {p.shape}")
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        new_arrays.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    new_state = OptimState(new_m, new_v, t, state.lr, state.betas, state.eps)
    return params.with_arrays(new_arrays), new_state


def loss_and_grads(params, build_loss):
    """Run ``build_loss(g, emb_fn)`` on a fresh tape and return its gradients.

    ``build_loss`` receives the graph and a function ``embed(batch) ->
    (embeddings, logits)`` bound to the parameter leaves, and returns either
    a scalar node or a tuple whose first item is the scalar node to
    differentiate.
    """
    g = Graph()
    leaves = [g.leaf(a) for a in params.arrays()]
    out = build_loss(g, lambda batch: build_forward(g, leaves, batch))
    root = out[0] if isinstance(out, tuple) else out
    grads = g.backward(root)
    return out, [grads[lf] for lf in leaves]


# -- checkpoints -------------------------------------------------------------


def atomic_write(path, data, mode="wb"):
    """Write ``data`` to ``path`` via a temp file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(path, params, config=None):
    """Store params as ``.npz`` with a JSON header (version, shapes, config)."""
    header = {
        "version": CHECKPOINT_VERSION,
        "embed_dim": params.embed_dim,
        "num_classes": params.num_classes,
        "activation": params.activation,
        "shapes": [list(a.shape) for a in params.arrays()],
        "config": config or {},
    }
    buf = io.BytesIO()
    arrays = {f"a{i:03d}": a for i, a in enumerate(params.arrays())}
    np.savez(buf, header=np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8),
             **arrays)
    atomic_write(path, buf.getvalue())


def load_checkpoint(path):
    """Returns ``(params, config)``."""
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(bytes(data["header"]).decode())
        if header.get("version") != CHECKPOINT_VERSION:
            raise ContractError(f"unsupported checkpoint version {header.get('version')}")
        arrays = [data[f"a{i:03d}"] for i in range(len(header["shapes"]))]
    for a, shape in zip(arrays, header["shapes"]):
        if list(a.shape) != shape:
            raise DimensionError("checkpoint array shape does not match header")
    layers = tuple((arrays[i], arrays[i + 1]) for i in range(0, len(arrays), 2))
    params = EmbedderParams(layers, header["embed_dim"], header["num_classes"],
                            header["activation"])
    return params, header["config"]
