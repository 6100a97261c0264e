"""Finite-volume Heisenberg dynamics and KMS-identity residuals.

The dynamics generated by theta.Q is alpha_t(A) = e^{i theta.Q t} A
e^{-i theta.Q t}; the canonical state psi_theta is a thermal equilibrium
state for it, which shows up numerically as the vanishing of

    pointwise:  | omega(alpha_t(A) B) - omega(B alpha_{t+i}(A)) |
    smeared:    | int f(t) omega(alpha_t(A) B) dt
                  - int f(t-i) omega(B alpha_t(A)) dt |

with omega the psi_theta expectation. Both sides of each identity are
evaluated through their own exponent assembly, so the residual measures the
actual cancellation rather than restating one formula twice.

Test functions are Gaussians: entire, rapidly decaying, and with f(t-i)
available in closed form along the shifted line.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .convex import as_components
from .errors import NumericRangeError, QuadratureError, ResourceError, UsageError
from .lattice import ObservableFamily, lift_site_operator

# Dense residual workloads build dim x dim frequency tables.
_RESIDUAL_DIM_CAP = 2**10

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_PAULI = {"x": PAULI_X, "y": PAULI_Y, "z": PAULI_Z}


@dataclass(frozen=True)
class TestOperator:
    """A labeled square matrix used as a probe in residual checks."""

    __test__ = False  # not a pytest class, despite the name

    matrix: np.ndarray
    label: str

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise UsageError(f"test operator must be square, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise UsageError("test operator has non-finite entries")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def max_norm(self) -> float:
        return float(np.max(np.abs(self.matrix)))


def site_pauli(which: str, site: int, n_sites: int) -> TestOperator:
    """sigma_{x|y|z} embedded at a site of the n-site spin space."""
    if which not in _PAULI:
        raise UsageError(f"which must be one of x, y, z, got {which!r}")
    return TestOperator(lift_site_operator(_PAULI[which], site, n_sites), f"s{which}@{site}")


def random_hermitian(dim: int, rng: np.random.Generator, label: str = "random",
                     norm: float = 1.0) -> TestOperator:
    """Random hermitian probe scaled to the given spectral norm."""
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    h = (g + g.conj().T) / 2.0
    h *= norm / max(np.max(np.abs(np.linalg.eigvalsh(h))), 1e-30)
    return TestOperator(h, label)


@dataclass(frozen=True)
class GaussianTestFunction:
    """f(z) = exp(-z^2 / (2 sigma_w^2)): entire, bounded on the unit strip."""

    sigma_w: float

    def __post_init__(self):
        if not (self.sigma_w > 0 and math.isfinite(self.sigma_w)):
            raise UsageError(f"sigma_w must be positive and finite, got {self.sigma_w}")

    def __call__(self, z: complex) -> complex:
        return cmath.exp(-(z * z) / (2.0 * self.sigma_w**2))

    def values(self, ts: np.ndarray, imag_shift: float = 0.0) -> np.ndarray:
        """f(t + i*imag_shift) on an array of real times."""
        z = np.asarray(ts, dtype=float) + 1j * imag_shift
        return np.exp(-(z * z) / (2.0 * self.sigma_w**2))

    def support_radius(self, eps: float = 1e-14) -> float:
        """|f(t)| and |f(t - i)| both fall below eps outside [-r, r]."""
        return math.sqrt(1.0 + 2.0 * self.sigma_w**2 * math.log(1.0 / eps))


def _spectral_data(family: ObservableFamily, theta):
    gen = family.control_generator(theta)
    if gen.ndim == 1:
        return gen, None
    lam, vec = np.linalg.eigh(gen)
    return lam, vec


def _rotate(op: np.ndarray, vec: np.ndarray | None) -> np.ndarray:
    return op if vec is None else vec.conj().T @ op @ vec


def _check_dims(family: ObservableFamily, *ops: TestOperator, cap: int = _RESIDUAL_DIM_CAP):
    for op in ops:
        if op.dim != family.dim:
            raise UsageError(f"operator {op.label} has dimension {op.dim}, family {family.dim}")
    if family.dim > cap:
        raise ResourceError(f"residual checks are capped at dimension {cap}")


def evolve(a: TestOperator, family: ObservableFamily, theta, t: float) -> TestOperator:
    """Heisenberg evolution e^{i theta.Q t} A e^{-i theta.Q t}, spectrally.

    Unitary conjugation: the spectrum of the result equals the spectrum of A.
    """
    if not math.isfinite(t):
        raise UsageError(f"time {t} is not finite")
    _check_dims(family, a)
    lam, vec = _spectral_data(family, theta)
    tilde = _rotate(a.matrix, vec)
    phases = np.exp(1j * lam * t)
    moved = (phases[:, None] * tilde) * phases.conj()[None, :]
    if vec is not None:
        moved = vec @ moved @ vec.conj().T
    return TestOperator(moved, f"alpha[{t}]({a.label})")


def _residual_tables(family: ObservableFamily, theta, a: TestOperator, b: TestOperator):
    """Shared spectral tables: shifted levels, log partition, cross weights."""
    lam, vec = _spectral_data(family, theta)
    lam = lam - lam.min()  # spectral shift; cancels in conjugations and in omega
    log_z = math.log(float(np.exp(-lam).sum()))
    if not math.isfinite(log_z):
        raise NumericRangeError("partition sum left the representable range")
    atil = _rotate(a.matrix, vec)
    btil = _rotate(b.matrix, vec)
    cross = atil * btil.T  # cross[j, k] = A~[j,k] B~[k,j]
    delta = lam[:, None] - lam[None, :]
    return lam, log_z, cross, delta


def kms_residual(family: ObservableFamily, theta, a: TestOperator, b: TestOperator,
                 t: float) -> float:
    """Pointwise residual |omega(alpha_t(A) B) - omega(B alpha_{t+i}(A))|.

    The complex-time side is evaluated as exp((it-1) theta.Q) A
    exp(-(it-1) theta.Q) with all real exponents combined before
    exponentiation, so control norms up to ~700 stay in range. Exact
    arithmetic gives zero by trace cyclicity; the float result is pure
    roundoff.
    """
    if not math.isfinite(t):
        raise UsageError(f"time {t} is not finite")
    _check_dims(family, a, b)
    lam, log_z, cross, delta = _residual_tables(family, theta, a, b)
    phase = np.exp(1j * delta * t)
    # omega(alpha_t(A) B): weight e^{-lam_j} / Z on the j index
    lhs = np.sum(np.exp(-lam[:, None] - log_z) * phase * cross)
    # omega(B alpha_{t+i}(A)): weight e^{-lam_k} / Z and the analytic
    # continuation factor e^{-(lam_j - lam_k)} from the complex time
    rhs = np.sum(np.exp(-lam[None, :] - delta - log_z) * phase * cross)
    if not (cmath.isfinite(lhs) and cmath.isfinite(rhs)):
        raise NumericRangeError("guarded exponential overflowed in kms_residual")
    return abs(lhs - rhs)


def default_quadrature_step(family: ObservableFamily, theta,
                            f: GaussianTestFunction) -> float:
    """Trapezoid step resolving the fastest Bohr frequency of theta.Q."""
    gen = family.control_generator(theta)
    lam = gen if gen.ndim == 1 else np.linalg.eigvalsh(gen)
    spread = float(lam.max() - lam.min())
    return min(0.1, math.pi / (2.0 * spread + 12.0 / f.sigma_w + 2.0))


def kms_smeared_residual(family: ObservableFamily, theta, a: TestOperator, b: TestOperator,
                         f: GaussianTestFunction, t_range: float | None = None,
                         step: float | None = None) -> float:
    """Smeared residual |int f(t) LHS(t) dt - int f(t-i) RHS(t) dt|.

    LHS(t) = omega(alpha_t(A) B), RHS(t) = omega(B alpha_t(A)); trapezoidal
    quadrature over [-t_range, t_range]. The range defaults to where
    |f| > 1e-14 on the strip and the step to resolving the fastest Bohr
    frequency of theta.Q. A step-halving disagreement above 1e-6 raises
    QuadratureError; the half-step value is returned otherwise.
    """
    _check_dims(family, a, b)
    lam, log_z, cross, delta = _residual_tables(family, theta, a, b)
    w_lhs = (np.exp(-lam[:, None] - log_z) * cross).ravel()
    w_rhs = (np.exp(-lam[None, :] - log_z) * cross).ravel()
    freqs = delta.ravel()

    if t_range is None:
        t_range = f.support_radius()
    if step is None:
        step = default_quadrature_step(family, theta, f)

    def residual_at(h: float) -> float:
        ts = np.arange(-t_range, t_range + h / 2.0, h)
        lhs_t = np.empty(len(ts), dtype=complex)
        rhs_t = np.empty(len(ts), dtype=complex)
        for start in range(0, len(ts), 128):  # bound the phase-table memory
            block = ts[start : start + 128]
            phases = np.exp(1j * np.outer(block, freqs))
            lhs_t[start : start + 128] = phases @ w_lhs
            rhs_t[start : start + 128] = phases @ w_rhs
        lhs_int = np.trapezoid(f.values(ts) * lhs_t, dx=h)
        rhs_int = np.trapezoid(f.values(ts, imag_shift=-1.0) * rhs_t, dx=h)
        return abs(lhs_int - rhs_int)

    coarse = residual_at(step)
    fine = residual_at(step / 2.0)
    if abs(coarse - fine) > 1e-6:
        raise QuadratureError(
            f"step-halving disagreement {abs(coarse - fine):.3e} at step {step:.3e}"
        )
    return fine


@dataclass(frozen=True)
class ProbeScore:
    a_label: str
    b_label: str
    t: float
    score: float


@dataclass(frozen=True)
class DiscriminationReport:
    """Whether the dynamics generated by two controls can be told apart."""

    theta_1: tuple
    theta_2: tuple
    scores: tuple
    max_score: float
    distinguishable: bool


def kms_theta_discrimination(family: ObservableFamily, theta_1, theta_2,
                             probes) -> DiscriminationReport:
    """Max deviation between the two evolutions over a probe set.

    Probes are (A, B, t) triples; both operators are evolved under each
    control and compared in max norm. A score at zero (within 1e-10) means
    the controls generate the same dynamics on these probes, which happens
    exactly when their difference couples only to multiples of the identity.
    """
    probes = list(probes)
    if not probes:
        raise UsageError("probe set must be non-empty")
    th1 = as_components(theta_1, family.n_observables)
    th2 = as_components(theta_2, family.n_observables)
    scores = []
    for a, b, t in probes:
        best = 0.0
        for op in (a, b):
            moved1 = evolve(op, family, th1, t)
            moved2 = evolve(op, family, th2, t)
            best = max(best, float(np.max(np.abs(moved1.matrix - moved2.matrix))))
        scores.append(ProbeScore(a.label, b.label, float(t), best))
    max_score = max(s.score for s in scores)
    return DiscriminationReport(tuple(map(float, th1)), tuple(map(float, th2)),
                                tuple(scores), max_score, max_score > 1e-10)


def default_probes(family: ObservableFamily, seed: int, times) -> list:
    """Site-0 Pauli probes plus one seeded random hermitian, at each time."""
    n = family.region.size
    rng = np.random.default_rng(seed)
    rand = random_hermitian(family.dim, rng, label=f"random#{seed}")
    sx0 = site_pauli("x", 0, n)
    sy0 = site_pauli("y", 0, n)
    sz0 = site_pauli("z", 0, n)
    probes = []
    for t in times:
        probes.append((sx0, sy0, float(t)))
        probes.append((sz0, sx0, float(t)))
        probes.append((rand, sx0, float(t)))
    return probes
