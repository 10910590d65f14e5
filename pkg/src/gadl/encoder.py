"""Dual-pass GCN encoder: a low-pass and a high-pass branch, concatenated."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ShapeError, Tape, Tensor, concat_cols, matmul, relu
from .graph import FilterPair


@dataclass(frozen=True)
class EncoderConfig:
    n_layers: int = 2
    hidden_dim: int = 16
    share_across_graphs: bool = True

    def __post_init__(self):
        if self.n_layers < 1 or self.hidden_dim < 1:
            raise ValueError("n_layers and hidden_dim must be positive")


@dataclass
class DualPassParams:
    """Per-layer weights of both branches.

    Entries are numpy arrays between training steps and :class:`Tensor`
    handles while a forward pass is being recorded (see :meth:`bind`).
    """

    layers_low: list
    layers_high: list

    def __post_init__(self):
        if not self.layers_low:
            raise ValueError("an encoder needs at least one layer")
        lo = [tuple(np.shape(_raw(w))) for w in self.layers_low]
        hi = [tuple(np.shape(_raw(w))) for w in self.layers_high]
        if self.layers_high and lo != hi:
            raise ValueError(f"branch width schedules differ: {lo} vs {hi}")

    @property
    def dims(self) -> list[int]:
        shapes = [np.shape(_raw(w)) for w in self.layers_low]
        return [shapes[0][0]] + [s[1] for s in shapes]

    def named(self, prefix: str = "") -> dict[str, object]:
        out = {f"{prefix}low.{i}": w for i, w in enumerate(self.layers_low)}
        out.update({f"{prefix}high.{i}": w for i, w in enumerate(self.layers_high)})
        return out

    @classmethod
    def from_named(cls, named: dict, prefix: str = "") -> "DualPassParams":
        def collect(branch):
            keys = sorted((k for k in named if k.startswith(f"{prefix}{branch}.")),
                          key=lambda k: int(k.rsplit(".", 1)[1]))
            return [named[k] for k in keys]

        return cls(collect("low"), collect("high"))

    def bind(self, tape: Tape) -> "DualPassParams":
        """Register every weight as a trainable variable on ``tape``."""
        return DualPassParams([tape.variable(w) for w in self.layers_low],
                              [tape.variable(w) for w in self.layers_high])


def _raw(w):
    return w.value if isinstance(w, Tensor) else w


def init_params(cfg: EncoderConfig, feature_dim: int, seed: int) -> DualPassParams:
    """Glorot-uniform weights, low branch drawn first, then high branch."""
    if feature_dim < 1:
        raise ValueError("feature_dim must be positive")
    rng = np.random.default_rng(seed)
    dims = [feature_dim] + [cfg.hidden_dim] * cfg.n_layers

    def branch():
        layers = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            layers.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        return layers

    low = branch()
    high = branch()
    return DualPassParams(low, high)


def _branch(layers, x: Tensor, filt: np.ndarray) -> Tensor:
    if x.shape[0] != filt.shape[0]:
        raise ShapeError(f"features have {x.shape[0]} rows but the filter is {filt.shape}")
    if x.shape[1] != np.shape(_raw(layers[0]))[0]:
        raise ShapeError(f"feature width {x.shape[1]} vs first weight {np.shape(_raw(layers[0]))}")
    a = x.tape.constant(filt)
    z = x
    last = len(layers) - 1
    for i, w in enumerate(layers):
        z = matmul(a, matmul(z, w))
        if i < last:
            z = relu(z)
    return z


def dual_pass_forward(params: DualPassParams, x: Tensor, filters: FilterPair) -> Tensor:
    """``[Z_low ‖ Z_high]``; hidden layers use ReLU, the output layer is linear."""
    z_low = _branch(params.layers_low, x, filters.a_low_sym)
    z_high = _branch(params.layers_high, x, filters.a_high_sym)
    return concat_cols(z_low, z_high)


def single_pass_forward(params: DualPassParams, x: Tensor, filters: FilterPair,
                        branch: str = "standard_gcn") -> Tensor:
    """One branch only, using the low-pass weights.

    ``branch="low"`` applies ``I - L̃/2``; ``"standard_gcn"`` applies the plain
    GCN propagation ``I - L̃``.
    """
    if branch == "low":
        filt = filters.a_low_sym
    elif branch == "standard_gcn":
        filt = filters.a_gcn_sym
    else:
        raise ValueError(f"unknown branch {branch!r}")
    return _branch(params.layers_low, x, filt)
