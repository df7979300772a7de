"""Tanh multilayer perceptrons over a flat parameter vector."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad

ACTIVATIONS = {"tanh": ad.tanh}


@dataclass(frozen=True)
class MlpSpec:
    layer_widths: tuple[int, ...]
    activation: str = "tanh"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ValueError("an MLP needs at least an input and an output width")
        if any(w < 1 for w in widths):
            raise ValueError(f"all layer widths must be >= 1, got {widths}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @classmethod
    def from_sizes(cls, n_in: int, hidden, n_out: int, activation: str = "tanh"):
        return cls((n_in, *hidden, n_out), activation)

    @property
    def n_in(self) -> int:
        return self.layer_widths[0]

    @property
    def n_out(self) -> int:
        return self.layer_widths[-1]

    @property
    def n_params(self) -> int:
        w = self.layer_widths
        return sum(a * b + b for a, b in zip(w[:-1], w[1:]))

    def layer_slices(self):
        """(weight slice, weight shape, bias slice) per layer, in flat-vector order."""
        out = []
        pos = 0
        for a, b in zip(self.layer_widths[:-1], self.layer_widths[1:]):
            ws = slice(pos, pos + a * b)
            pos += a * b
            bs = slice(pos, pos + b)
            pos += b
            out.append((ws, (a, b), bs))
        return out


@dataclass
class MlpParams:
    spec: MlpSpec
    flat: np.ndarray
    seed: int | None = None
    _views: list = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.flat = np.asarray(self.flat, dtype=np.float64)
        if self.flat.shape != (self.spec.n_params,):
            raise ValueError(
                f"expected {self.spec.n_params} parameters, got shape {self.flat.shape}"
            )

    def layers(self, flat=None):
        """Per-layer ``(W, b)`` views of ``flat`` (defaults to this object's vector).

        ``flat`` may be a tape ``Var``; the views are then recorded slices.
        """
        flat = self.flat if flat is None else flat
        return unflatten(self.spec, flat)

    def copy(self):
        return MlpParams(self.spec, self.flat.copy(), self.seed)


def unflatten(spec: MlpSpec, flat):
    out = []
    for ws, shape, bs in spec.layer_slices():
        out.append((ad.reshape(flat[ws], shape), flat[bs]))
    return out


def flatten(layers) -> np.ndarray:
    return np.concatenate([np.concatenate([np.ravel(w), np.ravel(b)]) for w, b in layers])


def init(spec: MlpSpec, seed: int) -> MlpParams:
    """Glorot-uniform weights and zero biases, reproducible from ``seed``."""
    rng = np.random.default_rng(seed)
    flat = np.zeros(spec.n_params)
    for ws, (a, b), _ in spec.layer_slices():
        limit = np.sqrt(6.0 / (a + b))
        flat[ws] = rng.uniform(-limit, limit, size=a * b)
    return MlpParams(spec, flat, seed)


def forward(params: MlpParams, inputs, flat=None):
    """Run the network on ``inputs`` with shape (..., n_in).

    ``inputs`` may be a plain array, a tape ``Var``, a :class:`DualScalar`
    (tangents propagate exactly) or a :class:`Jet2`.
    """
    return apply(params.spec, inputs, params.flat if flat is None else flat)


def apply(spec: MlpSpec, inputs, flat):
    """Forward pass from a spec and a flat parameter vector (array or ``Var``)."""
    width = np.shape(ad.value_of(inputs))[-1]
    if width != spec.n_in:
        raise ValueError(f"network expects {spec.n_in} inputs, got {width}")
    act = ACTIVATIONS[spec.activation]
    layers = unflatten(spec, flat)
    h = inputs
    for i, (w, b) in enumerate(layers):
        h = (h @ w) + b
        if i < len(layers) - 1:
            h = act(h)
    return h


# -- checkpoints ------------------------------------------------------------


def _hex(values):
    return [float(v).hex() for v in values]


def _unhex(values):
    return np.array([float.fromhex(v) for v in values], dtype=np.float64)


def params_to_dict(params: MlpParams) -> dict:
    return {
        "spec": {"layer_widths": list(params.spec.layer_widths), "activation": params.spec.activation},
        "seed": params.seed,
        "params": _hex(params.flat),
    }


def params_from_dict(data: dict) -> MlpParams:
    spec = MlpSpec(tuple(data["spec"]["layer_widths"]), data["spec"].get("activation", "tanh"))
    return MlpParams(spec, _unhex(data["params"]), data.get("seed"))


def save_checkpoint(path, networks: dict[str, MlpParams], extra: dict | None = None):
    """Write named networks as JSON; floats are stored as hex strings (bit-exact)."""
    payload = {"format": "hardpinn-checkpoint/1", "networks": {k: params_to_dict(v) for k, v in networks.items()}}
    if extra:
        payload["meta"] = extra
    Path(path).write_text(json.dumps(payload, indent=1))


def load_checkpoint(path) -> dict[str, MlpParams]:
    data = json.loads(Path(path).read_text())
    if not str(data.get("format", "")).startswith("hardpinn-checkpoint/"):
        raise ValueError(f"{path}: not a hardpinn checkpoint")
    return {k: params_from_dict(v) for k, v in data["networks"].items()}
