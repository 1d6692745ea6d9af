"""Numerical checks of the derivative decomposition of ``G[|Du|^2]``.

For a direction tuple ``dirs = (i, j, k)``::

    d^l G[|Du|^2] = 2 G'[|Du|^2] (Du : d^l Du) + E_l

with ``E_1 = 0`` and ``E_l = 2 d_{dirs[l-1]}(G' Du) : d^{l-1} Du + d_{dirs[l-1]} E_{l-1}``.
Derivatives of ``Du`` are spectral; everything else is evaluated pointwise
by the chain and product rules, so the identity holds exactly for
resolved fields and the residual measures aliasing and roundoff only.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .constitutive import ConstitutiveLaw
from .errors import DegenerateInputError, DomainError, UnsupportedOrderError
from .fields import SpectralField, fft, ifft, strain_derivative

__all__ = [
    "DecompositionReport",
    "StrainJets",
    "e_field",
    "e_field_direct",
    "check_decomposition",
    "bound_ratio_report",
    "e2_pointwise",
    "e3_pointwise",
]

DEGENERATE_THRESHOLD = 1e-12


def _c(A, B):
    """Pointwise ``A : B`` of two (3, 3, ...) arrays."""
    return np.einsum("ij...,ij...->...", A, B)


class StrainJets:
    """Lazily computed physical derivatives ``d_dirs Du`` of a velocity field."""

    def __init__(self, u: SpectralField):
        if u.ncomp != 3:
            raise DomainError("strain jets need a 3-component velocity field")
        self.u = u
        self._cache = {}

    def __call__(self, *dirs) -> np.ndarray:
        key = tuple(sorted(dirs))  # mixed partials commute
        if key not in self._cache:
            self._cache[key] = strain_derivative(self.u, key)
        return self._cache[key]

    @property
    def D(self):
        return self()

    def grad_mag2(self) -> np.ndarray:
        """``|grad Du|^2`` summed over all components and directions."""
        return sum(_c(self(i), self(i)) for i in range(3))

    def hess_mag2(self) -> np.ndarray:
        return sum(_c(self(i, j), self(i, j)) for i in range(3) for j in range(3))


def _validate_dirs(dirs: Sequence[int]) -> tuple:
    dirs = tuple(int(d) for d in dirs)
    if not 1 <= len(dirs) <= 3:
        raise UnsupportedOrderError(f"decomposition order must be 1, 2 or 3, got {len(dirs)}")
    if any(d not in (0, 1, 2) for d in dirs):
        raise DomainError(f"directions must be axis indices 0..2, got {dirs}")
    return dirs


# pointwise kernels --------------------------------------------------------
# arguments are physical arrays: D = Du, Di = d_i Du, Dj = d_j Du, Dij = d_i d_j Du, ...

def e2_pointwise(law, D, Di, Dj):
    """``E_2 = 2 d_j(G' Du) : d_i Du`` expanded by the chain rule."""
    s = _c(D, D)
    g1 = law.deriv(s, 1)
    g2 = law.deriv(s, 2)
    # d_j(G' Du) = 2 G'' (Du : d_j Du) Du + G' d_j Du
    return 4.0 * g2 * _c(D, Dj) * _c(D, Di) + 2.0 * g1 * _c(Dj, Di)


def e3_pointwise(law, D, Di, Dj, Dk, Dij, Dik, Djk):
    """``E_3 = 2 d_k(G' Du) : d_j d_i Du + d_k E_2`` with ``d_k E_2`` by the product rule."""
    s = _c(D, D)
    g1 = law.deriv(s, 1)
    g2 = law.deriv(s, 2)
    g3 = law.deriv(s, 3)
    a_i, a_j, a_k = _c(D, Di), _c(D, Dj), _c(D, Dk)
    first = 4.0 * g2 * a_k * _c(D, Dij) + 2.0 * g1 * _c(Dk, Dij)
    # E_2 = 4 G'' a_j a_i + 2 G' b_ij,  a_m = Du : d_m Du,  b_ij = d_i Du : d_j Du
    dk_a_i = _c(Dk, Di) + _c(D, Dik)
    dk_a_j = _c(Dk, Dj) + _c(D, Djk)
    dk_b_ij = _c(Dik, Dj) + _c(Di, Djk)
    dk_e2 = (
        8.0 * g3 * a_k * a_j * a_i
        + 4.0 * g2 * (dk_a_j * a_i + a_j * dk_a_i)
        + 4.0 * g2 * a_k * _c(Di, Dj)
        + 2.0 * g1 * dk_b_ij
    )
    return first + dk_e2


def _e_from_jets(law, jets: StrainJets, dirs):
    l = len(dirs)
    if l == 1:
        return np.zeros(jets.D.shape[2:])
    if l == 2:
        i, j = dirs
        return e2_pointwise(law, jets.D, jets(i), jets(j))
    i, j, k = dirs
    return e3_pointwise(law, jets.D, jets(i), jets(j), jets(k), jets(i, j), jets(i, k), jets(j, k))


def e_field(law: ConstitutiveLaw, u: SpectralField, dirs: Sequence[int],
            jets: Optional[StrainJets] = None) -> np.ndarray:
    """``E_l`` on the physical grid by the recursion, ``l = len(dirs)``."""
    dirs = _validate_dirs(dirs)
    return _e_from_jets(law, jets or StrainJets(u), dirs)


def e_field_direct(law: ConstitutiveLaw, u: SpectralField, dirs: Sequence[int],
                   jets: Optional[StrainJets] = None) -> np.ndarray:
    """``E_l`` from the Faa di Bruno expansion of ``d^l G[s]`` minus the leading term.

    Independent of the recursion in :func:`e_field`; used to cross-check it.
    """
    dirs = _validate_dirs(dirs)
    J = jets or StrainJets(u)
    D = J.D
    s = _c(D, D)
    l = len(dirs)
    g1 = law.deriv(s, 1)
    if l == 1:
        return np.zeros_like(s)
    g2 = law.deriv(s, 2)

    def s1(i):
        return 2.0 * _c(D, J(i))

    def s2(i, j):
        return 2.0 * (_c(J(i), J(j)) + _c(D, J(i, j)))

    if l == 2:
        i, j = dirs
        # d_j d_i G = G'' s_i s_j + G' s_ij ; leading term is 2 G' Du : d_i d_j Du
        return g2 * s1(i) * s1(j) + g1 * (s2(i, j) - 2.0 * _c(D, J(i, j)))
    i, j, k = dirs
    g3 = law.deriv(s, 3)
    s3_rest = 2.0 * (_c(J(j, k), J(i)) + _c(J(j), J(i, k)) + _c(J(k), J(i, j)))
    return (
        g3 * s1(i) * s1(j) * s1(k)
        + g2 * (s2(i, k) * s1(j) + s1(i) * s2(j, k) + s2(i, j) * s1(k))
        + g1 * s3_rest
    )


def _bound_weight(jets: StrainJets, l: int) -> np.ndarray:
    gm = jets.grad_mag2()
    if l == 2:
        return gm
    g = np.sqrt(gm)
    return g**3 + np.sqrt(jets.hess_mag2()) * g


def _bound_ratio(law, jets, dirs_list, l):
    M = _bound_weight(jets, l)
    Mmax = float(np.max(M))
    keep = M >= DEGENERATE_THRESHOLD * Mmax
    if Mmax <= 0 or not np.any(keep):
        raise DegenerateInputError("bound ratio: every grid point is degenerate (M_l vanishes)")
    G = law(_c(jets.D, jets.D))
    worst = 0.0
    for dirs in dirs_list:
        E = _e_from_jets(law, jets, dirs)
        worst = max(worst, float(np.max(np.abs(E[keep]) / (G[keep] * M[keep]))))
    return worst


@dataclass
class DecompositionReport:
    order: int
    dirs: tuple
    residual_sup: float
    residual_rel: float
    bound_ratio: Optional[float]
    n: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dirs"] = list(self.dirs)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _spectral_scalar_derivative(grid, values, dirs):
    kd = grid.k_deriv
    hat = fft(values)
    for d in dirs:
        hat = hat * (1j * kd[d])
    return ifft(hat, grid.n)


def check_decomposition(law: ConstitutiveLaw, u: SpectralField, dirs: Sequence[int]) -> DecompositionReport:
    """Compare spectral ``d^l G[|Du|^2]`` with ``2 G'(Du : d^l Du) + E_l``."""
    dirs = _validate_dirs(dirs)
    l = len(dirs)
    jets = StrainJets(u)
    D = jets.D
    s = _c(D, D)
    G = law(s)
    # shifting by a constant leaves every derivative unchanged; a constant G then transforms to exact zeros
    lhs = _spectral_scalar_derivative(u.grid, G - G.flat[0], dirs)
    rhs = 2.0 * law.deriv(s, 1) * _c(D, jets(*dirs)) + _e_from_jets(law, jets, dirs)
    residual_sup = float(np.max(np.abs(lhs - rhs)))
    scale = float(np.max(np.abs(lhs)))
    residual_rel = residual_sup / scale if scale > 0 else (0.0 if residual_sup == 0 else float("inf"))
    ratio = None
    if l >= 2:
        try:
            ratio = _bound_ratio(law, jets, [dirs], l)
        except DegenerateInputError:
            ratio = None
    return DecompositionReport(l, dirs, residual_sup, residual_rel, ratio, u.grid.n)


def bound_ratio_report(law: ConstitutiveLaw, u: SpectralField, l: int,
                       dirs: Optional[Sequence[int]] = None) -> float:
    """Empirical constant of the pointwise ``E_2``/``E_3`` bounds.

    Sup over grid points (and over all direction tuples unless ``dirs`` is
    given) of ``|E_l| / (G M_l)`` with ``M_2 = |grad Du|^2`` and
    ``M_3 = |grad Du|^3 + |grad^2 Du| |grad Du|``.  Points with
    ``M_l < 1e-12 max M_l`` are skipped.
    """
    if l not in (2, 3):
        raise UnsupportedOrderError(f"bound ratio is defined for l = 2, 3, got {l!r}")
    if dirs is None:
        dirs_list = list(itertools.product(range(3), repeat=l))
    else:
        dirs_list = [_validate_dirs(dirs)]
        if len(dirs_list[0]) != l:
            raise DomainError("dirs length must equal l")
    return _bound_ratio(law, StrainJets(u), dirs_list, l)
