"""Generalized canonical states, entropies and the finite-volume pressure.

All matrix exponentials and logarithms go through hermitian spectral
decompositions; for the diagonal built-in families the spectral data is the
stored diagonal itself and no dense algebra is performed, which keeps sizes
up to the dimension cap (2^14) cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .convex import as_components
from .errors import UsageError
from .lattice import DIMENSION_CAP, ModelSpec, ObservableFamily, build_model

# Eigenvalues below this contribute zero to x ln x sums (continuity at 0).
EIG_FLOOR = 1e-15
# Support threshold for relative entropy: sigma-eigenvalues at or below it
# count as null directions.
SUPPORT_EPS = 1e-12


class DensityState:
    """Positive unit-trace hermitian matrix in eigen-representation.

    ``probabilities`` are the eigenvalues; ``basis`` holds the orthonormal
    eigenvectors as columns, or None for states diagonal in the computational
    basis. The dense matrix is materialized only on demand.
    """

    def __init__(self, probabilities, basis: np.ndarray | None = None, validate: bool = True):
        p = np.asarray(probabilities, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise UsageError("probabilities must be a non-empty vector")
        if validate:
            if abs(float(p.sum()) - 1.0) > 1e-12:
                raise UsageError(f"trace {p.sum()} is not 1 within 1e-12")
            if float(p.min()) < -1e-12:
                raise UsageError(f"negative weight {p.min()} below -1e-12")
        self.probabilities = np.clip(p, 0.0, None)
        self.basis = basis
        if basis is not None and basis.shape != (p.size, p.size):
            raise UsageError("basis shape must match the probability vector")

    @classmethod
    def from_matrix(cls, matrix) -> "DensityState":
        m = np.asarray(matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise UsageError(f"density matrix must be square, got {m.shape}")
        scale = max(1.0, float(np.max(np.abs(m))))
        if np.max(np.abs(m - m.conj().T)) > 1e-12 * scale:
            raise UsageError("density matrix is not hermitian within 1e-12")
        if abs(float(np.real(np.trace(m))) - 1.0) > 1e-12:
            raise UsageError("density matrix trace is not 1 within 1e-12")
        evals, evecs = np.linalg.eigh(m)
        if float(evals.min()) < -1e-12:
            raise UsageError(f"density matrix has eigenvalue {evals.min()} below -1e-12")
        return cls(evals, evecs, validate=False)

    @property
    def dim(self) -> int:
        return self.probabilities.size

    @property
    def is_diagonal(self) -> bool:
        return self.basis is None

    @property
    def matrix(self) -> np.ndarray:
        if self.basis is None:
            return np.diag(self.probabilities)
        return (self.basis * self.probabilities[None, :]) @ self.basis.conj().T

    def occupations(self) -> np.ndarray:
        """Diagonal of the state in the computational basis."""
        if self.basis is None:
            return self.probabilities
        return np.abs(self.basis) ** 2 @ self.probabilities

    def expectation(self, op) -> float:
        """Tr(rho A) for A given as a diagonal vector or dense matrix."""
        op = np.asarray(op)
        if op.ndim == 1:
            if op.shape != (self.dim,):
                raise UsageError("observable dimension mismatch")
            return float(np.real(self.occupations() @ op))
        if op.shape != (self.dim, self.dim):
            raise UsageError("observable dimension mismatch")
        if self.basis is None:
            return float(np.real(np.diag(op) @ self.probabilities))
        rot = np.einsum("ia,ij,ja->a", self.basis.conj(), op, self.basis)
        return float(np.real(rot @ self.probabilities))

    def max_norm_distance(self, other: "DensityState") -> float:
        return float(np.max(np.abs(self.matrix - other.matrix)))


@dataclass(frozen=True)
class PressureEstimate:
    """Extrapolated per-site pressure with its finite-size trail."""

    value: float
    per_size: tuple
    extrapolation_error: float
    fit: str


def canonical_state(family: ObservableFamily, theta) -> DensityState:
    """Generalized canonical state exp(-theta.Q) / Tr exp(-theta.Q).

    The exponent is shifted by its smallest eigenvalue before exponentiation,
    so any finite theta is safe. The state commutes with every observable of
    the family and its eigenvalues are the softmax of -(theta.Q) eigenvalues.
    """
    gen = family.control_generator(theta)
    if gen.ndim == 1:
        lam, basis = gen, None
    else:
        lam, basis = np.linalg.eigh(gen)
    w = np.exp(-(lam - lam.min()))
    return DensityState(w / w.sum(), basis, validate=False)


def von_neumann_entropy(rho: DensityState) -> float:
    """S = -Tr rho ln rho, in natural log units; lies in [0, ln dim]."""
    p = rho.probabilities[rho.probabilities > EIG_FLOOR]
    return max(0.0, float(-(p @ np.log(p))))


def relative_entropy(rho: DensityState, sigma: DensityState) -> float:
    """S(rho|sigma) = Tr(rho ln rho - rho ln sigma); >= 0, 0 only at rho = sigma.

    Returns math.inf when rho puts more than 1e-12 of weight on the null
    space of sigma (the divergent case).
    """
    if rho.dim != sigma.dim:
        raise UsageError("states live on different dimensions")
    p = rho.probabilities
    s = sigma.probabilities
    live = p > EIG_FLOOR
    plive = p[live]
    entropy_term = float(plive @ np.log(plive))

    if rho.basis is None and sigma.basis is None:
        null_mass = float(p[s <= SUPPORT_EPS].sum())
        if null_mass > 1e-12:
            return math.inf
        ok = s > SUPPORT_EPS
        cross = float(p[ok] @ np.log(s[ok]))
        return entropy_term - cross

    left = rho.basis if rho.basis is not None else np.eye(rho.dim)
    right = sigma.basis if sigma.basis is not None else np.eye(sigma.dim)
    overlap = np.abs(left.conj().T @ right) ** 2  # overlap[i, j] = |<u_i|v_j>|^2
    weights = p @ overlap
    null_mass = float(weights[s <= SUPPORT_EPS].sum())
    if null_mass > 1e-12:
        return math.inf
    ok = s > SUPPORT_EPS
    cross = float(weights[ok] @ np.log(s[ok]))
    return entropy_term - cross


def finite_pressure(family: ObservableFamily, theta) -> float:
    """phi_N = N^-1 ln Tr exp(-theta.Q), via spectral shift for overflow safety."""
    gen = family.control_generator(theta)
    lam = gen if gen.ndim == 1 else np.linalg.eigvalsh(gen)
    shift = float(lam.min())
    return float(np.log(np.exp(-(lam - shift)).sum()) - shift) / family.region.size


def expectation_vector(rho: DensityState, family: ObservableFamily) -> np.ndarray:
    """Per-observable expectations <Q_k> in the given state."""
    ops = family.diagonals if family.is_diagonal else family.dense
    return np.array([rho.expectation(op) for op in ops])


def variational_gap(rho: DensityState, family: ObservableFamily, theta) -> float:
    """N phi_N(theta) - (S(rho) - theta.<Q>_rho), the maximum-entropy deficit.

    Nonnegative, coincides with relative_entropy(rho, canonical_state) and
    vanishes exactly at the canonical state.
    """
    th = as_components(theta, family.n_observables)
    if rho.dim != family.dim:
        raise UsageError("state dimension does not match the family")
    n_phi = finite_pressure(family, th) * family.region.size
    return n_phi - von_neumann_entropy(rho) + float(th @ expectation_vector(rho, family))


def _aitken(x0: float, x1: float, x2: float) -> float | None:
    d2 = x2 - 2.0 * x1 + x0
    if abs(d2) <= 1e3 * np.finfo(float).eps * max(1.0, abs(x2)):
        return None
    return x2 - (x2 - x1) ** 2 / d2


def _aitken_tail(narr: np.ndarray, phis: np.ndarray, step: float) -> tuple[float, float]:
    """Aitken acceleration of the increments of N*phi_N (generic fallback)."""
    increments = np.diff(narr * phis) / step
    accelerated = []
    for k in range(len(increments) - 2):
        a = _aitken(increments[k], increments[k + 1], increments[k + 2])
        if a is not None:
            accelerated.append(a)
    if accelerated:
        value = float(accelerated[-1])
        if len(accelerated) >= 2:
            err = abs(value - float(accelerated[-2]))
        else:
            err = abs(value - float(increments[-1]))
    else:
        value = float(increments[-1])
        err = float(np.max(np.abs(np.diff(increments)))) if len(increments) > 1 else 0.0
    return value, max(err, 1e-15)


def _two_mode_value(narr: np.ndarray, phis: np.ndarray, step: float) -> float | None:
    """Top log-eigenvalue of a two-mode power sum fitted to N*phi_N.

    A periodic chain with a 2x2 transfer structure has
    Tr exp(-theta.Q) = l1^N + l2^N exactly, so the scaled sums satisfy a
    two-term linear recurrence whose dominant root recovers l1 even when
    l2/l1 is close to 1 (long correlation lengths). Returns None when the
    fitted recurrence has no positive dominant root.
    """
    ref = float(phis[-1])
    w = np.exp(narr * (phis - ref))  # scaled partition sums, O(1) entries
    design = np.stack([w[1:-1], -w[:-2]], axis=1)
    target = w[2:]
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    s, p = float(coef[0]), float(coef[1])
    disc = s * s - 4.0 * p
    if not math.isfinite(disc):
        return None
    dominant = (s + math.sqrt(max(disc, 0.0))) / 2.0
    if dominant <= 0.0 or not math.isfinite(dominant):
        return None
    return ref + math.log(dominant) / step


def pressure_limit(spec: ModelSpec, theta, sizes, fit: str = "affine",
                   cap: int = DIMENSION_CAP) -> PressureEstimate:
    """Extrapolate phi_N to the infinite-volume pressure.

    fit="affine": least-squares affine fit in 1/N (surface-over-volume
    corrections); value is the intercept, error the larger of the worst fit
    residual and the last-size deviation. fit="geometric": Aitken
    acceleration of the increments of N*phi_N, for periodic chains whose
    finite-size corrections decay exponentially; needs uniformly spaced
    sizes. Sizes must be strictly increasing with at least 3 entries.
    """
    sizes = [int(n) for n in sizes]
    if len(sizes) < 3 or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise UsageError("sizes must be strictly increasing with at least 3 entries")
    th = as_components(theta)
    phis = np.array([
        finite_pressure(build_model(spec, spec.region(n), cap=cap), th) for n in sizes
    ])
    per_size = tuple((n, float(p)) for n, p in zip(sizes, phis))
    narr = np.array(sizes, dtype=float)

    if fit == "affine":
        design = np.stack([np.ones_like(narr), 1.0 / narr], axis=1)
        coef, *_ = np.linalg.lstsq(design, phis, rcond=None)
        value = float(coef[0])
        resid = float(np.max(np.abs(design @ coef - phis)))
        err = max(resid, abs(float(phis[-1]) - value))
        return PressureEstimate(value, per_size, err, fit)

    if fit != "geometric":
        raise UsageError(f"unknown fit mode {fit!r}")
    steps = np.diff(narr)
    if not np.allclose(steps, steps[0]):
        raise UsageError("geometric fit needs uniformly spaced sizes")
    step = float(steps[0])
    value = _two_mode_value(narr, phis, step)
    if value is None:
        value, err = _aitken_tail(narr, phis, step)
        return PressureEstimate(value, per_size, err, fit)
    if len(narr) >= 6:
        tail = _two_mode_value(narr[-4:], phis[-4:], step)
        err = abs(value - tail) if tail is not None else abs(value - float(phis[-1]))
    else:
        err = abs(value - float(phis[-1]))
    return PressureEstimate(value, per_size, max(err, 1e-15), fit)


def random_density_state(dim: int, rng: np.random.Generator) -> DensityState:
    """Full-rank random state from a complex Ginibre square (G G^dagger / Tr)."""
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    m = g @ g.conj().T
    m /= np.real(np.trace(m))
    return DensityState.from_matrix(m)


def maximally_mixed(dim: int) -> DensityState:
    return DensityState(np.full(dim, 1.0 / dim), None, validate=False)
