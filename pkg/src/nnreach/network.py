"""Fully connected ReLU networks: evaluation, projection embedding, JSON I/O.

Networks are immutable value objects, so they are safe to share between
threads and to reuse across reachability steps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


class NetworkError(ValueError):
    """Raised for malformed network definitions or dimension mismatches."""


def _clean_matrix(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 2 or arr.size == 0:
        raise NetworkError(f"{name}: expected a nonempty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NetworkError(f"{name}: entries must be finite")
    return arr


def _clean_vector(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise NetworkError(f"{name}: expected a nonempty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NetworkError(f"{name}: entries must be finite")
    return arr


@dataclass(frozen=True)
class FeedforwardNetwork:
    """Fully connected network with ReLU hidden layers and an affine output layer.

    ``weights[k]`` and ``biases[k]`` define layer k. Every layer except the last
    is followed by an elementwise ReLU; the last is purely affine. At least one
    hidden layer is required.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        weights = tuple(_clean_matrix(w, f"weights[{k}]") for k, w in enumerate(self.weights))
        biases = tuple(_clean_vector(b, f"biases[{k}]") for k, b in enumerate(self.biases))
        if len(weights) != len(biases):
            raise NetworkError(
                f"got {len(weights)} weight matrices but {len(biases)} bias vectors"
            )
        if len(weights) < 2:
            raise NetworkError("need at least one hidden layer plus the affine output layer")
        for k, (w, b) in enumerate(zip(weights, biases)):
            if b.shape[0] != w.shape[0]:
                raise NetworkError(
                    f"biases[{k}]: length {b.shape[0]} does not match layer output size {w.shape[0]}"
                )
            if k > 0 and w.shape[1] != weights[k - 1].shape[0]:
                raise NetworkError(
                    f"weights[{k}]: expected {weights[k - 1].shape[0]} columns to chain onto "
                    f"layer {k - 1}, got {w.shape[1]}"
                )
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def n_hidden(self) -> int:
        """Number of ReLU hidden layers."""
        return len(self.weights) - 1

    @property
    def hidden_widths(self) -> tuple[int, ...]:
        return tuple(w.shape[0] for w in self.weights[:-1])

    @property
    def neuron_count(self) -> int:
        """Total number of hidden ReLU units."""
        return sum(self.hidden_widths)

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.input_dim,) + self.hidden_widths + (self.output_dim,)


def forward_pass(net: FeedforwardNetwork, x) -> tuple[np.ndarray, list[np.ndarray]]:
    """Evaluate the network and return (output, post-activation hidden states).

    ``x`` may be a single point of shape (n_in,) or a batch of shape (N, n_in);
    the hidden states and output carry the same leading shape.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.input_dim:
        raise NetworkError(f"input has size {x.shape[-1]}, network expects {net.input_dim}")
    h = x
    hidden = []
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        h = np.maximum(h @ w.T + b, 0.0)
        hidden.append(h)
    out = h @ net.weights[-1].T + net.biases[-1]
    return out, hidden


def evaluate(net: FeedforwardNetwork, x) -> np.ndarray:
    """Network output for a point (n_in,) or a batch (N, n_in)."""
    out, _ = forward_pass(net, x)
    return out


@dataclass(frozen=True)
class ProjectedNetwork:
    """A network composed with the coordinatewise clamp onto [lower, upper]."""

    base: FeedforwardNetwork
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = _clean_vector(self.lower, "lower")
        upper = _clean_vector(self.upper, "upper")
        n_u = self.base.output_dim
        if lower.shape[0] != n_u or upper.shape[0] != n_u:
            raise NetworkError(
                f"projection bounds have sizes {lower.shape[0]}/{upper.shape[0]}, "
                f"network output has size {n_u}"
            )
        if np.any(lower > upper):
            raise NetworkError("projection bounds must satisfy lower <= upper")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)


def evaluate_projected(pnet: ProjectedNetwork, x) -> np.ndarray:
    """Clamped network output for a point or a batch."""
    return np.clip(evaluate(pnet.base, x), pnet.lower, pnet.upper)


def projected_forward(pnet: ProjectedNetwork, x) -> tuple[np.ndarray, list[np.ndarray]]:
    """Clamped output plus all intermediate states of the clamp recursion.

    Returns (u, states) where states lists the hidden activations followed by
    the two clamp stages: max(out, lower) and then min(..., upper). The final
    state equals u.
    """
    out, hidden = forward_pass(pnet.base, x)
    stage1 = np.maximum(out, pnet.lower)
    stage2 = np.minimum(stage1, pnet.upper)
    return stage2, hidden + [stage1, stage2]


def embed_projection(net: FeedforwardNetwork, lower, upper) -> FeedforwardNetwork:
    """Rewrite clamp(net(x), lower, upper) as a plain ReLU network.

    Appends two hidden layers implementing max(. - lower, 0) and
    max(upper - ., 0); the bound offsets are folded into the following affine
    stages so the returned network evaluates exactly to the clamped output.
    """
    pnet = ProjectedNetwork(net, lower, upper)
    lo, hi = pnet.lower, pnet.upper
    eye = np.eye(net.output_dim)
    weights = net.weights[:-1] + (net.weights[-1], -eye, -eye)
    biases = net.biases[:-1] + (net.biases[-1] - lo, hi - lo, hi.copy())
    return FeedforwardNetwork(weights, biases)


def random_network(dims, seed: int, weight_scale: float = 1.0) -> FeedforwardNetwork:
    """Deterministic random network with the given layer sizes.

    Weights and biases are drawn uniformly from [-weight_scale, weight_scale]
    using numpy's PCG64 generator seeded with ``seed``, so a (dims, seed,
    weight_scale) triple always yields the same network.
    """
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2:
        raise NetworkError("dims must list at least input and output sizes")
    if any(d <= 0 for d in dims):
        raise NetworkError(f"dims must be positive, got {dims}")
    rng = np.random.Generator(np.random.PCG64(seed))
    weights = []
    biases = []
    for n_in, n_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.uniform(-weight_scale, weight_scale, size=(n_out, n_in)))
        biases.append(rng.uniform(-weight_scale, weight_scale, size=n_out))
    return FeedforwardNetwork(tuple(weights), tuple(biases))


def network_to_json(net: FeedforwardNetwork) -> dict:
    return {
        "activation": "relu",
        "layers": [
            {"W": w.tolist(), "b": b.tolist()} for w, b in zip(net.weights, net.biases)
        ],
    }


def network_from_json(data: dict) -> FeedforwardNetwork:
    if not isinstance(data, dict):
        raise NetworkError("network document must be a JSON object")
    activation = data.get("activation")
    if activation != "relu":
        raise NetworkError(f"unsupported activation {activation!r}, only 'relu' is supported")
    layers = data.get("layers")
    if not isinstance(layers, list) or not layers:
        raise NetworkError("'layers' must be a nonempty list")
    weights = []
    biases = []
    for k, layer in enumerate(layers):
        if not isinstance(layer, dict) or "W" not in layer or "b" not in layer:
            raise NetworkError(f"layers[{k}]: each layer needs 'W' and 'b'")
        rows = layer["W"]
        if not isinstance(rows, list) or any(
            not isinstance(r, list) or len(r) != len(rows[0]) for r in rows
        ):
            raise NetworkError(f"layers[{k}].W: rows must form a rectangular matrix")
        weights.append(_clean_matrix(rows, f"layers[{k}].W"))
        biases.append(_clean_vector(layer["b"], f"layers[{k}].b"))
        if biases[-1].shape[0] != weights[-1].shape[0]:
            raise NetworkError(
                f"layers[{k}].b: length {biases[-1].shape[0]} does not match "
                f"{weights[-1].shape[0]} rows of layers[{k}].W"
            )
        if k > 0 and weights[-1].shape[1] != weights[-2].shape[0]:
            raise NetworkError(
                f"layers[{k}].W: expected {weights[-2].shape[0]} columns to chain onto "
                f"layers[{k - 1}], got {weights[-1].shape[1]}"
            )
    return FeedforwardNetwork(tuple(weights), tuple(biases))


def save_network(net: FeedforwardNetwork, path) -> None:
    """Write the network as JSON. Floats keep full precision, so a save/load
    round trip reproduces the network bit for bit."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(network_to_json(net), fh, indent=1)
        fh.write("\n")


def load_network(path) -> FeedforwardNetwork:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise NetworkError(f"{path}: not valid JSON ({exc})") from None
    return network_from_json(data)
