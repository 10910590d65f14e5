"""Functional maps between two spectral latent spaces and their loss terms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ShapeError, Tensor, frobenius_sq, matmul, scale, scale_cols, scale_rows
from .spectral import SpectralBasis


@dataclass
class FunctionalMaps:
    """``c12`` maps spectral coefficients of graph 1 onto graph 2, ``c21`` back."""

    c12: object
    c21: object

    def __post_init__(self):
        s12, s21 = np.shape(_raw(self.c12)), np.shape(_raw(self.c21))
        if len(s12) != 2 or s12[0] != s12[1] or s12 != s21:
            raise ShapeError(f"functional maps must be square and equal-sized, got {s12} and {s21}")

    @property
    def r(self) -> int:
        return np.shape(_raw(self.c12))[0]

    def bind(self, tape) -> "FunctionalMaps":
        return FunctionalMaps(tape.variable(self.c12), tape.variable(self.c21))


def _raw(c):
    return c.value if isinstance(c, Tensor) else c


@dataclass(frozen=True)
class FmHyper:
    alpha: float = 1e-3  # descriptor alignment
    beta: float = 1e-2  # Laplacian commutativity

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")


def init_maps(r: int) -> FunctionalMaps:
    return FunctionalMaps(np.eye(r), np.eye(r))


def project_spectral(z: Tensor, basis: SpectralBasis) -> Tensor:
    """Spectral coefficients ``Φᵀ Z``; the basis is treated as a constant."""
    if z.shape[0] != basis.n:
        raise ShapeError(f"embedding has {z.shape[0]} rows, basis has {basis.n}")
    return matmul(z.tape.constant(basis.phi.T), z)


def _one_way(c, f_src, f_dst, lam_src, lam_dst, hyper: FmHyper) -> Tensor:
    terms = []
    if hyper.alpha:
        terms.append(scale(frobenius_sq(matmul(c, f_src) - f_dst), hyper.alpha))
    if hyper.beta:
        comm = scale_rows(c, lam_dst) - scale_cols(c, lam_src)
        terms.append(scale(frobenius_sq(comm), hyper.beta))
    if not terms:
        return scale(frobenius_sq(c), 0.0)
    out = terms[0]
    for t in terms[1:]:
        out = out + t
    return out


def fm_align_loss(maps: FunctionalMaps, f1_hat: Tensor, f2_hat: Tensor, lambda1, lambda2,
                  hyper: FmHyper) -> Tensor:
    """Both directions of descriptor alignment plus Laplacian commutativity."""
    lo12, lo21 = fm_align_terms(maps, f1_hat, f2_hat, lambda1, lambda2, hyper)
    return lo12 + lo21


def fm_align_terms(maps, f1_hat, f2_hat, lambda1, lambda2, hyper) -> tuple[Tensor, Tensor]:
    r = maps.r
    if f1_hat.shape[0] != r or f2_hat.shape[0] != r:
        raise ShapeError(f"spectral descriptors {f1_hat.shape}, {f2_hat.shape} vs maps of size {r}")
    if f1_hat.shape[1] != f2_hat.shape[1]:
        raise ShapeError(f"descriptor widths differ: {f1_hat.shape} vs {f2_hat.shape}")
    lam1 = np.asarray(lambda1, dtype=np.float64).reshape(-1)
    lam2 = np.asarray(lambda2, dtype=np.float64).reshape(-1)
    if lam1.shape[0] != r or lam2.shape[0] != r:
        raise ShapeError(f"eigenvalue vectors of length {lam1.shape[0]}, {lam2.shape[0]} vs r={r}")
    l12 = _one_way(maps.c12, f1_hat, f2_hat, lam1, lam2, hyper)
    l21 = _one_way(maps.c21, f2_hat, f1_hat, lam2, lam1, hyper)
    return l12, l21


def bijectivity_loss(maps: FunctionalMaps) -> Tensor:
    """``‖C12 C21 - I‖² + ‖C21 C12 - I‖²``."""
    eye = np.eye(maps.r)
    return (frobenius_sq(matmul(maps.c12, maps.c21) - eye)
            + frobenius_sq(matmul(maps.c21, maps.c12) - eye))


def orthogonality_loss(maps: FunctionalMaps) -> Tensor:
    """``‖C12 C12ᵀ - I‖² + ‖C21ᵀ C21 - I‖²``."""
    eye = np.eye(maps.r)
    c12, c21 = maps.c12, maps.c21
    return (frobenius_sq(matmul(c12, c12.T) - eye)
            + frobenius_sq(matmul(c21.T, c21) - eye))
