"""Decoder, training objective, Adam, and the joint training loop for a graph pair."""

from __future__ import annotations

import csv
import logging
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .autodiff import NonFiniteError, Tape, Tensor, bce_mean, matmul, scale, transpose
from .encoder import DualPassParams, EncoderConfig, dual_pass_forward, init_params, single_pass_forward
from .fmap import (FmHyper, FunctionalMaps, bijectivity_loss, fm_align_terms, init_maps,
                   orthogonality_loss, project_spectral)
from .graph import FilterPair, Graph, filter_matrices, normalized_laplacian
from .spectral import SpectralBasis, eig_smallest

logger = logging.getLogger(__name__)

LOSS_TERMS = ("rec", "fm12", "fm21", "bij", "orth", "total")


class TrainingDivergedError(FloatingPointError):
    def __init__(self, epoch: int, terms: dict[str, float], cause: str = ""):
        self.epoch = epoch
        self.terms = terms
        detail = ", ".join(f"{k}={v:.6g}" for k, v in terms.items())
        super().__init__(f"non-finite loss at epoch {epoch} ({detail}) {cause}".strip())


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-3
    weight_decay: float = 5e-4
    lambda_fm: float = 1.0
    lambda_bij: float = 0.1
    lambda_orth: float = 0.1
    seed: int = 0
    r: int = 300
    use_high_pass: bool = True
    use_bij: bool = True
    use_orth: bool = True
    use_fm: bool = True
    single_pass_branch: str = "standard_gcn"
    recon_diag: float = 1.0
    early_stop: bool = False
    early_stop_window: int = 100
    early_stop_tol: float = 1e-6

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if min(self.weight_decay, self.lambda_fm, self.lambda_bij, self.lambda_orth) < 0:
            raise ValueError("loss weights and weight decay must be nonnegative")


@dataclass
class LossParts:
    rec: Tensor
    fm12: Optional[Tensor] = None
    fm21: Optional[Tensor] = None
    bij: Optional[Tensor] = None
    orth: Optional[Tensor] = None


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


@dataclass
class TrainedModel:
    encoders: list[DualPassParams]
    maps: FunctionalMaps
    history: dict[str, list[float]]
    z_source: np.ndarray
    z_target: np.ndarray
    bases: tuple[SpectralBasis, SpectralBasis]
    epochs_run: int = 0

    @property
    def shared(self) -> bool:
        return len(self.encoders) == 1

    def named_params(self) -> dict[str, np.ndarray]:
        return _trainable(self.encoders, self.maps)


def decode(z: Tensor) -> Tensor:
    """Inner-product decoder logits ``Z Zᵀ``; the sigmoid lives inside the BCE."""
    return matmul(z, transpose(z))


def recon_target(a: np.ndarray, diag: float = 1.0) -> np.ndarray:
    t = np.array(a, dtype=np.float64)
    np.fill_diagonal(t, diag)
    return t


def recon_loss(a: np.ndarray, logits: Tensor, diag: float = 1.0) -> Tensor:
    """Mean BCE over all ``n²`` entries; the diagonal target defaults to 1."""
    return bce_mean(logits, recon_target(a, diag))


def total_loss(parts: LossParts, cfg: TrainConfig) -> Tensor:
    """``rec + λ_FM (fm12 + fm21) + λ_bij bij + λ_orth orth`` minus ablated terms."""
    out = parts.rec
    if cfg.use_fm and parts.fm12 is not None:
        out = out + scale(parts.fm12 + parts.fm21, cfg.lambda_fm)
    if cfg.use_bij and parts.bij is not None:
        out = out + scale(parts.bij, cfg.lambda_bij)
    if cfg.use_orth and parts.orth is not None:
        out = out + scale(parts.orth, cfg.lambda_orth)
    return out


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              lr: float, weight_decay: float = 0.0, betas=(0.9, 0.999), eps: float = 1e-8):
    """One Adam update with decoupled weight decay; returns ``(params, state)``.

    Decay shrinks each parameter by ``lr * weight_decay`` before the
    bias-corrected moment step. Inputs are not modified.
    """
    b1, b2 = betas
    step = state.step + 1
    new_params, m_new, v_new = {}, {}, {}
    c1 = 1.0 - b1 ** step
    c2 = 1.0 - b2 ** step
    for name, theta in params.items():
        g = grads[name]
        m = b1 * state.m.get(name, 0.0) + (1.0 - b1) * g
        v = b2 * state.v.get(name, 0.0) + (1.0 - b2) * g * g
        theta = theta - lr * weight_decay * theta
        theta = theta - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_params[name], m_new[name], v_new[name] = theta, m, v
    return new_params, AdamState(step, m_new, v_new)


@dataclass(frozen=True, eq=False)
class _Prepared:
    graph: Graph
    filters: FilterPair
    adjacency: np.ndarray
    basis: SpectralBasis


def _prepare(g: Graph, r: int) -> _Prepared:
    basis = eig_smallest(normalized_laplacian(g), min(r, g.n))
    return _Prepared(g, filter_matrices(g), g.adjacency(), basis)


def _encode(params: DualPassParams, x: Tensor, filters: FilterPair, cfg: TrainConfig) -> Tensor:
    if cfg.use_high_pass:
        return dual_pass_forward(params, x, filters)
    return single_pass_forward(params, x, filters, cfg.single_pass_branch)


def _trainable(encoders: list[DualPassParams], maps: FunctionalMaps) -> dict[str, np.ndarray]:
    out = {}
    for i, enc in enumerate(encoders):
        out.update(enc.named(prefix=f"enc{i}."))
    out["c12"] = maps.c12
    out["c21"] = maps.c21
    return out


def _unpack(named: dict[str, np.ndarray], n_enc: int) -> tuple[list[DualPassParams], FunctionalMaps]:
    encs = [DualPassParams.from_named(named, prefix=f"enc{i}.") for i in range(n_enc)]
    return encs, FunctionalMaps(named["c12"], named["c21"])


def _forward(named, n_enc, prep_s, prep_t, cfg, hyper):
    """Record one full forward pass; returns the tape, bound variables, loss parts and total."""
    tape = Tape()
    bound = {k: tape.variable(v) for k, v in named.items()}
    encs, maps = _unpack(bound, n_enc)
    enc_s, enc_t = encs[0], encs[-1]
    x_s = tape.constant(prep_s.graph.features)
    x_t = tape.constant(prep_t.graph.features)
    z_s = _encode(enc_s, x_s, prep_s.filters, cfg)
    z_t = _encode(enc_t, x_t, prep_t.filters, cfg)
    rec = (recon_loss(prep_s.adjacency, decode(z_s), cfg.recon_diag)
           + recon_loss(prep_t.adjacency, decode(z_t), cfg.recon_diag))
    parts = LossParts(rec=rec)
    if cfg.use_fm:
        f_s = project_spectral(z_s, prep_s.basis)
        f_t = project_spectral(z_t, prep_t.basis)
        parts.fm12, parts.fm21 = fm_align_terms(maps, f_s, f_t, prep_s.basis.lam, prep_t.basis.lam, hyper)
    if cfg.use_bij:
        parts.bij = bijectivity_loss(maps)
    if cfg.use_orth:
        parts.orth = orthogonality_loss(maps)
    return tape, bound, parts, total_loss(parts, cfg), (z_s, z_t)


def _term_values(parts: LossParts, total: Optional[Tensor]) -> dict[str, float]:
    def val(t):
        return 0.0 if t is None else t.item()

    return {"rec": val(parts.rec), "fm12": val(parts.fm12), "fm21": val(parts.fm21),
            "bij": val(parts.bij), "orth": val(parts.orth), "total": val(total)}


def train_pair(g_source: Graph, g_target: Graph, enc_cfg: EncoderConfig, fm_hyper: FmHyper,
               train_cfg: TrainConfig) -> TrainedModel:
    """Jointly train the encoder(s) and both functional maps on one graph pair.

    Each epoch runs both graphs through the encoder, projects the embeddings
    on each graph's Laplacian eigenbasis, evaluates every enabled loss term,
    backpropagates and takes one Adam step on all weights and both maps.
    Deterministic for a fixed seed.
    """
    if g_source.features is None or g_target.features is None:
        raise ValueError("both graphs must carry node features")
    k_s, k_t = g_source.features.shape[1], g_target.features.shape[1]
    if enc_cfg.share_across_graphs and k_s != k_t:
        raise ValueError(f"shared encoder needs equal feature widths, got {k_s} and {k_t}")

    r = min(train_cfg.r, g_source.n, g_target.n)
    prep_s = _prepare(g_source, r)
    prep_t = _prepare(g_target, r)

    if enc_cfg.share_across_graphs:
        encoders = [init_params(enc_cfg, k_s, train_cfg.seed)]
    else:
        # separate weights, each drawn from the run seed
        encoders = [init_params(enc_cfg, k_s, train_cfg.seed), init_params(enc_cfg, k_t, train_cfg.seed)]
    named = _trainable(encoders, init_maps(r))
    n_enc = len(encoders)

    history: dict[str, list[float]] = {k: [] for k in LOSS_TERMS}
    state = AdamState()
    best = np.inf
    best_epoch = 0
    epochs_run = 0
    for epoch in range(train_cfg.epochs):
        try:
            tape, bound, parts, total, _ = _forward(named, n_enc, prep_s, prep_t, train_cfg, fm_hyper)
        except NonFiniteError as exc:
            raise TrainingDivergedError(epoch, {}, f"in {exc.op}") from exc
        terms = _term_values(parts, total)
        if not all(np.isfinite(v) for v in terms.values()):
            raise TrainingDivergedError(epoch, terms)
        for k in LOSS_TERMS:
            history[k].append(terms[k])
        grads = tape.backward(total)
        named, state = adam_step(named, {k: grads[t.node_id] for k, t in bound.items()}, state,
                                 train_cfg.lr, train_cfg.weight_decay)
        epochs_run = epoch + 1
        if train_cfg.early_stop:
            if terms["total"] < best - train_cfg.early_stop_tol:
                best, best_epoch = terms["total"], epoch
            elif epoch - best_epoch >= train_cfg.early_stop_window:
                logger.info("early stop at epoch %d", epoch)
                break

    _, _, _, _, (z_s, z_t) = _forward(named, n_enc, prep_s, prep_t, train_cfg, fm_hyper)
    encoders, maps = _unpack(named, n_enc)
    return TrainedModel(encoders=encoders, maps=maps, history=history, z_source=z_s.value,
                        z_target=z_t.value, bases=(prep_s.basis, prep_t.basis), epochs_run=epochs_run)


def spectral_match_embeddings(model: TrainedModel) -> tuple[np.ndarray, np.ndarray]:
    """Node coordinates for matching through ``C12``: rows of ``Φ_s C12ᵀ`` vs ``Φ_t``."""
    phi_s, phi_t = model.bases[0].phi, model.bases[1].phi
    return phi_s @ model.maps.c12.T, phi_t


# -- on-disk formats -----------------------------------------------------------

CHECKPOINT_MAGIC = b"GADLCKPT"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, named: dict[str, np.ndarray]) -> None:
    """Flat little-endian binary: magic, version, count, then (name, rows, cols, float64 data)."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(named)))
        for name, arr in named.items():
            arr = np.asarray(arr, dtype="<f8")
            if arr.ndim != 2:
                raise ValueError(f"{name}: checkpoints hold matrices only")
            key = name.encode("utf-8")
            fh.write(struct.pack("<H", len(key)))
            fh.write(key)
            fh.write(struct.pack("<II", *arr.shape))
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        version, count = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        out = {}
        for _ in range(count):
            (klen,) = struct.unpack("<H", fh.read(2))
            name = fh.read(klen).decode("utf-8")
            rows, cols = struct.unpack("<II", fh.read(8))
            out[name] = np.frombuffer(fh.read(8 * rows * cols), dtype="<f8").reshape(rows, cols).copy()
    return out


def write_history_csv(path, history: dict[str, list[float]]) -> None:
    cols = ("rec", "fm12", "fm21", "bij", "orth", "total")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("epoch", "L_rec", "L_FM12", "L_FM21", "L_bij", "L_orth", "total"))
        for e in range(len(history["total"])):
            w.writerow([e] + [repr(history[c][e]) for c in cols])
