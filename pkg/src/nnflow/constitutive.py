"""Shear-dependent viscosity laws ``G[s]`` with ``s = |Du|^2``.

Every law exposes ``G`` and its derivatives up to third order, the
antiderivative ``int_0^s G``, and the floor ``m0``.  All evaluators are
vectorised over numpy arrays.

Built-in families::

    newtonian   G[s] = m0
    power_a     G[s] = (m0**(2/(q-2)) + s)**((q-2)/2),   q > 2
    power_b     G[s] = m0 + (sigma_reg + s)**((q-2)/2),  q > 1, sigma_reg > 0
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .errors import DomainError, NumericError, StructuralError, UnsupportedOrderError

__all__ = [
    "ConstitutiveLaw",
    "Newtonian",
    "PowerLawA",
    "PowerLawB",
    "UserDefinedLaw",
    "StructuralReport",
    "eval",
    "eval_deriv",
    "eval_antideriv",
    "verify_structural",
    "law_from_config",
    "reciprocal_law",
]

STRUCTURAL_TOL = 1e-12
ANTIDERIV_RTOL = 1e-10


def _as_nonneg(s):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0) or np.any(np.isnan(s)):
        raise DomainError("viscosity argument s must be non-negative")
    return s


def _ret(x, like):
    # scalar in, scalar out
    if np.ndim(like) == 0:
        return float(x)
    return x


class ConstitutiveLaw:
    """Base class for viscosity laws.

    Subclasses implement ``_g``, ``_deriv`` and ``_antideriv`` on
    validated float arrays.
    """

    label = "law"
    kind = "abstract"

    def __init__(self, m0: float):
        if not (m0 > 0 and math.isfinite(m0)):
            raise DomainError(f"m0 must be positive and finite, got {m0!r}")
        self.m0 = float(m0)
        self._audit = None

    # public evaluators -------------------------------------------------
    def __call__(self, s):
        s_arr = _as_nonneg(s)
        return _ret(self._g(s_arr), s)

    def deriv(self, s, k: int):
        if k not in (1, 2, 3):
            raise UnsupportedOrderError(f"derivative order must be 1, 2 or 3, got {k!r}")
        s_arr = _as_nonneg(s)
        return _ret(self._deriv(s_arr, k), s)

    def antideriv(self, s):
        s_arr = _as_nonneg(s)
        return _ret(self._antideriv(s_arr), s)

    def excess(self, s):
        """``G[s] - m0`` without cancellation where the closed form allows."""
        s_arr = _as_nonneg(s)
        return _ret(self._excess(s_arr), s)

    def _excess(self, s):
        return self._g(s) - self.m0

    # audit -------------------------------------------------------------
    def audit(self) -> "StructuralReport":
        """Cached default structural audit (10^4 samples up to s = 10^6)."""
        if self._audit is None:
            self._audit = verify_structural(self, 10_000, 1e6)
        return self._audit

    def require_structural(self) -> None:
        report = self.audit()
        if not report.passed:
            raise StructuralError(
                f"law {self.label!r} violates the structural conditions: "
                f"min G = {report.min_g:.6g}, min G + 2G's = {report.min_coercive:.6g} "
                f"(m0 = {self.m0:.6g})",
                report=report,
            )

    def to_config(self) -> dict:
        return {"kind": self.kind, "m0": self.m0}

    def __repr__(self):
        params = ", ".join(f"{k}={v!r}" for k, v in self.to_config().items() if k != "kind")
        return f"{type(self).__name__}({params})"

    def __eq__(self, other):
        return type(self) is type(other) and self.to_config() == other.to_config()

    def __hash__(self):
        return hash((type(self).__name__, tuple(sorted(self.to_config().items()))))


class Newtonian(ConstitutiveLaw):
    kind = "newtonian"

    def __init__(self, m0: float = 1.0):
        super().__init__(m0)
        self.label = "newtonian"

    def _g(self, s):
        return np.full_like(s, self.m0)

    def _deriv(self, s, k):
        return np.zeros_like(s)

    def _antideriv(self, s):
        return self.m0 * s

    def _excess(self, s):
        return np.zeros_like(s)


class PowerLawA(ConstitutiveLaw):
    """``G[s] = (a + s)**p`` with ``a = m0**(2/(q-2))`` and ``p = (q-2)/2``."""

    kind = "power_a"

    def __init__(self, q: float, m0: float = 1.0):
        super().__init__(m0)
        if not q > 2:
            raise DomainError(f"power_a requires q > 2, got {q!r}")
        self.q = float(q)
        self.p = (self.q - 2.0) / 2.0
        self.a = self.m0 ** (2.0 / (self.q - 2.0))
        self.label = f"power_a(q={self.q:g})"

    def _g(self, s):
        return (self.a + s) ** self.p

    def _deriv(self, s, k):
        p = self.p
        coef = p if k == 1 else p * (p - 1) if k == 2 else p * (p - 1) * (p - 2)
        return coef * (self.a + s) ** (p - k)

    def _antideriv(self, s):
        # a**(p+1) * ((1 + s/a)**(p+1) - 1) / (p+1), written to keep accuracy at small s
        e = self.p + 1.0
        return self.a**e * np.expm1(e * np.log1p(s / self.a)) / e

    def _excess(self, s):
        # a**p == m0
        return self.m0 * np.expm1(self.p * np.log1p(s / self.a))

    def to_config(self):
        return {"kind": self.kind, "m0": self.m0, "q": self.q}


class PowerLawB(ConstitutiveLaw):
    """``G[s] = m0 + (sigma_reg + s)**p`` with ``p = (q-2)/2``."""

    kind = "power_b"

    def __init__(self, q: float, m0: float = 1.0, sigma_reg: float = 1.0):
        super().__init__(m0)
        if not q > 1:
            raise DomainError(f"power_b requires q > 1, got {q!r}")
        if not sigma_reg > 0:
            raise DomainError(f"power_b requires sigma_reg > 0, got {sigma_reg!r}")
        self.q = float(q)
        self.sigma_reg = float(sigma_reg)
        self.p = (self.q - 2.0) / 2.0
        self.label = f"power_b(q={self.q:g},sigma={self.sigma_reg:g})"

    def _g(self, s):
        return self.m0 + self._excess(s)

    def _excess(self, s):
        return (self.sigma_reg + s) ** self.p

    def _deriv(self, s, k):
        p = self.p
        coef = p if k == 1 else p * (p - 1) if k == 2 else p * (p - 1) * (p - 2)
        return coef * (self.sigma_reg + s) ** (p - k)

    def _antideriv(self, s):
        e = self.p + 1.0
        sig = self.sigma_reg
        return self.m0 * s + sig**e * np.expm1(e * np.log1p(s / sig)) / e

    def to_config(self):
        return {"kind": self.kind, "m0": self.m0, "q": self.q, "sigma_reg": self.sigma_reg}


class UserDefinedLaw(ConstitutiveLaw):
    """Law given by callbacks for ``G`` and its first three derivatives.

    Callbacks receive float arrays and must return arrays of the same
    shape.  Without ``antideriv`` the integral is computed by adaptive
    quadrature.
    """

    kind = "user"

    def __init__(
        self,
        m0: float,
        g: Callable,
        dg: Callable,
        d2g: Callable,
        d3g: Callable,
        antideriv: Optional[Callable] = None,
        label: str = "user",
    ):
        super().__init__(m0)
        self._callbacks = (g, dg, d2g, d3g)
        self._antideriv_cb = antideriv
        self.label = label

    def _g(self, s):
        return np.asarray(self._callbacks[0](s), dtype=float) * np.ones_like(s)

    def _deriv(self, s, k):
        return np.asarray(self._callbacks[k](s), dtype=float) * np.ones_like(s)

    def _antideriv(self, s):
        if self._antideriv_cb is not None:
            return np.asarray(self._antideriv_cb(s), dtype=float) * np.ones_like(s)
        g = self._callbacks[0]
        out = np.empty_like(s)
        for idx, upper in np.ndenumerate(s):
            if upper == 0.0:
                out[idx] = 0.0
                continue
            res = integrate.quad(
                lambda t: float(g(np.float64(t))), 0.0, float(upper),
                epsabs=0.0, epsrel=ANTIDERIV_RTOL, limit=200, full_output=1,
            )
            if len(res) > 3:
                raise NumericError(f"quadrature of G on [0, {upper}] did not converge: {res[3]}")
            out[idx] = res[0]
        return out

    def to_config(self):
        return {"kind": self.kind, "m0": self.m0, "label": self.label}

    def __eq__(self, other):
        return self is other

    def __hash__(self):
        return id(self)


def reciprocal_law(m0: float = 1.0) -> UserDefinedLaw:
    """``G[s] = 1/(1+s)`` declared with floor ``m0``.

    Violates the structural conditions for every ``m0 > 0``:
    ``G + 2G's = (1-s)/(1+s)**2`` changes sign at ``s = 1``.  Useful as a
    negative control for :func:`verify_structural`.
    """
    return UserDefinedLaw(
        m0,
        g=lambda s: 1.0 / (1.0 + s),
        dg=lambda s: -1.0 / (1.0 + s) ** 2,
        d2g=lambda s: 2.0 / (1.0 + s) ** 3,
        d3g=lambda s: -6.0 / (1.0 + s) ** 4,
        antideriv=lambda s: np.log1p(s),
        label="reciprocal",
    )


# functional interface --------------------------------------------------

def eval(law: ConstitutiveLaw, s):  # noqa: A001 - mirrors the operation name
    return law(s)


def eval_deriv(law: ConstitutiveLaw, s, k: int):
    return law.deriv(s, k)


def eval_antideriv(law: ConstitutiveLaw, s):
    return law.antideriv(s)


@dataclass
class StructuralReport:
    passed: bool
    min_g: float
    min_coercive: float
    argmin_coercive: float
    ratio_bounds: dict = field(default_factory=dict)  # {(k, alpha): sup ratio}
    samples_used: int = 0
    s_max: float = 0.0
    m0: float = 0.0

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "min_g": self.min_g,
            "min_coercive": self.min_coercive,
            "argmin_coercive": self.argmin_coercive,
            "ratio_bounds": {f"k{k}_alpha{a}": v for (k, a), v in sorted(self.ratio_bounds.items())},
            "samples_used": self.samples_used,
            "s_max": self.s_max,
            "m0": self.m0,
        }


def _ratio(num, den):
    num = np.abs(num)
    den = np.abs(den)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = num / den
    # 0/0 contributes nothing; c/0 with c > 0 is an unbounded ratio
    r = np.where((den == 0) & (num == 0), 0.0, r)
    r = np.where((den == 0) & (num > 0), np.inf, r)
    return float(np.max(r))


def verify_structural(law: ConstitutiveLaw, n_samples: int = 10_000, s_max: float = 1e6,
                      seed: int = 0) -> StructuralReport:
    """Audit ``G >= m0``, ``G + 2G's >= m0`` and the derivative ratios by sampling.

    Samples ``s = 0``, a log-spaced sweep up to ``s_max`` and ``n_samples``
    uniform draws from ``[0, s_max]``.  Violations are reported, never raised.
    """
    if n_samples < 1000:
        raise DomainError("verify_structural needs at least 1000 samples")
    if not s_max > 0:
        raise DomainError("s_max must be positive")
    rng = np.random.default_rng(seed)
    lo = min(-12.0, math.log10(s_max) - 12.0)
    s = np.concatenate((
        [0.0],
        np.logspace(lo, math.log10(s_max), n_samples),
        rng.uniform(0.0, s_max, n_samples),
    ))
    s.sort()

    derivs = [law(s)] + [law.deriv(s, k) for k in (1, 2, 3)]
    g, g1 = derivs[0], derivs[1]
    coercive = g + 2.0 * g1 * s
    i_min = int(np.argmin(coercive))

    ratios = {}
    for k in (1, 2, 3):
        for alpha in (0, 1):
            ratios[(k, alpha)] = _ratio(derivs[k] * s**alpha, derivs[k - 1])

    threshold = law.m0 * (1.0 - STRUCTURAL_TOL)
    min_g = float(np.min(g))
    min_coercive = float(coercive[i_min])
    passed = (
        bool(np.all(np.isfinite(g)))
        and min_g >= threshold
        and min_coercive >= threshold
        and all(math.isfinite(v) for v in ratios.values())
    )
    return StructuralReport(
        passed=passed,
        min_g=min_g,
        min_coercive=min_coercive,
        argmin_coercive=float(s[i_min]),
        ratio_bounds=ratios,
        samples_used=int(s.size),
        s_max=float(s_max),
        m0=law.m0,
    )


def law_from_config(cfg: dict) -> ConstitutiveLaw:
    """Build a law from ``{"kind": ..., "m0": ..., "q": ..., "sigma_reg": ...}``."""
    kind = cfg.get("kind")
    m0 = float(cfg.get("m0", 1.0))
    if kind == "newtonian":
        return Newtonian(m0)
    if kind == "power_a":
        if "q" not in cfg:
            raise DomainError("power_a law needs 'q'")
        return PowerLawA(float(cfg["q"]), m0)
    if kind == "power_b":
        if "q" not in cfg:
            raise DomainError("power_b law needs 'q'")
        return PowerLawB(float(cfg["q"]), m0, float(cfg.get("sigma_reg", 1.0)))
    raise DomainError(f"unknown law kind {kind!r}; expected newtonian, power_a or power_b")
