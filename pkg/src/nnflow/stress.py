"""Viscous stress ``G[|Du|^2] Du``, its divergence, and the two monotonicity checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constitutive import ConstitutiveLaw
from .errors import GridMismatchError
from .fields import (
    Grid,
    SpectralField,
    StrainField,
    _SYM_PAIRS,
    dealias,
    fft,
    sym_gradient,
)

__all__ = [
    "StressField",
    "stress",
    "stress_divergence",
    "tensor_divergence_hat",
    "sym_divergence_hat",
    "coercivity_margin",
    "monotonicity_gap",
    "dissipation_integral",
]


@dataclass(frozen=True, eq=False)
class StressField:
    grid: Grid
    sigma: np.ndarray  # (3, 3, n, n, n), symmetric


def stress(law: ConstitutiveLaw, Du: StrainField, check: bool = True) -> StressField:
    """Pointwise ``sigma_ij = G[|Du|^2] D_ij``.

    Laws failing the structural audit are refused with :class:`StructuralError`.
    """
    if check:
        law.require_structural()
    g = law(Du.mag2)
    return StressField(Du.grid, g * Du.D)


def sym_divergence_hat(grid: Grid, comps_hat: np.ndarray) -> np.ndarray:
    """Spectral divergence of a symmetric tensor given as six transformed components.

    Component order is xx, yy, zz, xy, xz, yz.
    """
    kd = grid.k_deriv
    c = comps_hat
    ik = [1j * kd[0], 1j * kd[1], 1j * kd[2]]
    # rows of the symmetric tensor in terms of the six stored components
    rows = ((0, 3, 4), (3, 1, 5), (4, 5, 2))
    return np.stack([ik[0] * c[r[0]] + ik[1] * c[r[1]] + ik[2] * c[r[2]] for r in rows])


def tensor_divergence_hat(grid: Grid, sigma: np.ndarray) -> np.ndarray:
    """Spectral ``sum_j i k_j sigma_hat_ij`` for a symmetric physical tensor (3, 3, n, n, n)."""
    return sym_divergence_hat(grid, fft(np.stack([sigma[i, j] for i, j in _SYM_PAIRS])))


def stress_divergence(law: ConstitutiveLaw, u: SpectralField) -> SpectralField:
    """Dealiased ``div(G[|Du|^2] Du)`` in spectral space."""
    sig = stress(law, sym_gradient(u))
    return dealias(SpectralField(u.grid, tensor_divergence_hat(u.grid, sig.sigma)))


def _frob(A, B):
    return np.einsum("...ij,...ij->...", A, B)


def coercivity_margin(law: ConstitutiveLaw, A, B):
    """``G[|A|^2]|B|^2 + 2G'[|A|^2](A:B)^2 - m0|B|^2`` for symmetric 3x3 ``A, B``.

    Broadcasts over leading batch dimensions (``A.shape == (..., 3, 3)``).
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    sA = _frob(A, A)
    b2 = _frob(B, B)
    ab = _frob(A, B)
    out = law.excess(sA) * b2 + 2.0 * law.deriv(sA, 1) * ab**2
    return float(out) if np.ndim(out) == 0 else out


def dissipation_integral(law: ConstitutiveLaw, Du: StrainField) -> float:
    """``int G[|Du|^2] |Du|^2 dx`` by the grid rule."""
    s = Du.mag2
    return float(np.mean(law(s) * s) * Du.grid.volume)


def monotonicity_gap(law: ConstitutiveLaw, v: SpectralField, w: SpectralField) -> float:
    """``int (sigma(v) - sigma(w)) : (Dv - Dw) dx - m0 ||Dv - Dw||^2``.

    Non-negative for laws meeting the structural conditions.
    """
    if v.grid != w.grid or v.ncomp != w.ncomp:
        raise GridMismatchError("monotonicity_gap: v and w live on different grids")
    Dv = sym_gradient(v)
    Dw = sym_gradient(w)
    diff = Dv.D - Dw.D
    # G[s] - m0 keeps the Newtonian case exactly zero
    sv = law.excess(Dv.mag2) * Dv.D - law.excess(Dw.mag2) * Dw.D
    integrand = np.einsum("ij...,ij...->...", sv, diff)
    return float(np.mean(integrand) * v.grid.volume)
