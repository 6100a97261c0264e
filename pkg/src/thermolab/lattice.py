"""Finite-region observable families for the built-in lattice models.

Each family is a finite set of commuting hermitian observables
(Q_0 = energy, Q_1, ...) on the 2^N-dimensional spin space of a region.
The built-in models are all diagonal in the product sigma_z basis, so they
are stored as diagonal vectors; dense storage is used for the one
non-commuting extra (transverse-field chain, a single-observable family).

Basis convention: basis index i encodes the spin configuration with site 0
in the most significant bit; bit 0 means sigma_z = +1, bit 1 means -1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convex import as_components
from .errors import ResourceError, UsageError

DIMENSION_CAP = 2**14

CHAIN = "chain"
COMPLETE_GRAPH = "complete_graph"
SINGLE_SITES = "single_sites"

_GEOMETRIES = (CHAIN, COMPLETE_GRAPH, SINGLE_SITES)
_KINDS = ("free_spins", "ising_chain", "curie_weiss", "transverse_ising_chain")


@dataclass(frozen=True)
class Region:
    """A finite one-dimensional region: chain, complete graph or loose sites."""

    geometry: str
    size: int
    boundary: str | None = None

    def __post_init__(self):
        if self.geometry not in _GEOMETRIES:
            raise UsageError(f"unknown geometry {self.geometry!r}")
        if self.size < 1:
            raise UsageError(f"region needs at least one site, got {self.size}")
        if self.geometry == CHAIN:
            if self.boundary not in ("periodic", "open"):
                raise UsageError(f"chain boundary must be periodic or open, got {self.boundary!r}")
        elif self.boundary is not None:
            raise UsageError(f"{self.geometry} takes no boundary condition")

    @property
    def volume(self) -> int:
        return self.size

    @property
    def translation_invariant(self) -> bool:
        """Whether a cyclic site shift is a symmetry of the geometry."""
        return not (self.geometry == CHAIN and self.boundary == "open")


@dataclass(frozen=True)
class ModelSpec:
    """Named model with couplings; energy units are absorbed into theta.

    kinds: free_spins (H = sum of number operators), ising_chain(J, h),
    curie_weiss(J, h) on the complete graph, and transverse_ising_chain(J, hx)
    which ships as a single-observable family because a transverse field
    breaks [H, M] = 0.
    """

    kind: str
    J: float = 0.0
    h: float = 0.0
    hx: float = 0.0
    boundary: str = "periodic"

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise UsageError(f"unknown model kind {self.kind!r}")
        for name in ("J", "h", "hx"):
            if not np.isfinite(getattr(self, name)):
                raise UsageError(f"non-finite coupling {name}")

    def region(self, n_sites: int) -> Region:
        if self.kind == "free_spins":
            return Region(SINGLE_SITES, n_sites)
        if self.kind == "curie_weiss":
            return Region(COMPLETE_GRAPH, n_sites)
        return Region(CHAIN, n_sites, self.boundary)

    @property
    def labels(self) -> tuple[str, ...]:
        if self.kind in ("free_spins", "transverse_ising_chain"):
            return ("energy",)
        return ("energy", "magnetization")

    @property
    def n_observables(self) -> int:
        return len(self.labels)

    def config_echo(self) -> dict:
        echo = {"model": self.kind}
        if self.kind in ("ising_chain", "curie_weiss", "transverse_ising_chain"):
            echo["J"] = self.J
        if self.kind in ("ising_chain", "curie_weiss"):
            echo["h"] = self.h
        if self.kind == "transverse_ising_chain":
            echo["hx"] = self.hx
        if self.kind in ("ising_chain", "transverse_ising_chain"):
            echo["boundary"] = self.boundary
        return echo


def parse_model_config(text: str) -> tuple[ModelSpec, int | None]:
    """Parse a plain-text model description into (ModelSpec, site count).

    Accepts one ``key=value`` pair per line (or comma-separated), with '#'
    comments: ``model=ising_chain``, ``J=1.0``, ``h=0.0``, ``N=10``,
    ``boundary=periodic``. N is optional and returned separately since a
    ModelSpec is size-free.
    """
    fields: dict[str, str] = {}
    for lineno, raw in enumerate(text.replace(",", "\n").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"expected key=value on line {lineno}, got {line!r}")
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    if "model" not in fields:
        raise UsageError("missing 'model=' entry")
    try:
        spec = ModelSpec(
            fields.pop("model"),
            J=float(fields.pop("J", 0.0)),
            h=float(fields.pop("h", 0.0)),
            hx=float(fields.pop("hx", 0.0)),
            boundary=fields.pop("boundary", "periodic"),
        )
        n_sites = int(fields.pop("N")) if "N" in fields else None
    except ValueError as exc:
        raise UsageError(f"bad model config value: {exc}") from None
    if fields:
        raise UsageError(f"unknown model config keys {sorted(fields)}")
    return spec, n_sites


class ObservableFamily:
    """Commuting hermitian observables on a region's spin space.

    Observables are stored either as diagonal vectors (all built-in models)
    or as dense hermitian matrices. ``spec`` records the generating model
    when the family came out of :func:`build_model`.
    """

    def __init__(self, region: Region, labels, diagonals=None, matrices=None,
                 local_dimension: int = 2, spec: ModelSpec | None = None):
        if (diagonals is None) == (matrices is None):
            raise UsageError("provide exactly one of diagonals or matrices")
        self.region = region
        self.local_dimension = int(local_dimension)
        if self.local_dimension < 2:
            raise UsageError("local dimension must be at least 2")
        self.labels = tuple(labels)
        self.spec = spec
        dim = self.local_dimension ** region.size
        if diagonals is not None:
            self.diagonals = [np.asarray(d, dtype=float) for d in diagonals]
            self.dense = None
            n = len(self.diagonals)
            shapes_ok = all(d.shape == (dim,) for d in self.diagonals)
        else:
            self.dense = [np.asarray(m) for m in matrices]
            self.diagonals = None
            n = len(self.dense)
            shapes_ok = all(m.shape == (dim, dim) for m in self.dense)
            for m in self.dense:
                if np.max(np.abs(m - m.conj().T)) > 1e-12 * max(1.0, np.max(np.abs(m))):
                    raise UsageError("observables must be hermitian")
        if not shapes_ok:
            raise UsageError(f"observable shape mismatch for dimension {dim}")
        if n == 0:
            raise UsageError("family needs at least one observable")
        if len(self.labels) != n:
            raise UsageError("one label per observable required")

    @property
    def dim(self) -> int:
        return self.local_dimension ** self.region.size

    @property
    def n_observables(self) -> int:
        return len(self.labels)

    @property
    def is_diagonal(self) -> bool:
        return self.diagonals is not None

    def matrix(self, j: int, max_dim: int = 2**10) -> np.ndarray:
        """Dense matrix of observable j (guarded against huge dimensions)."""
        if self.dim > max_dim:
            raise ResourceError(f"refusing to densify dimension {self.dim} > {max_dim}")
        if self.is_diagonal:
            return np.diag(self.diagonals[j])
        return self.dense[j]

    def control_generator(self, theta) -> np.ndarray:
        """theta . Q as a diagonal vector or dense hermitian matrix."""
        th = as_components(theta, self.n_observables)
        if self.is_diagonal:
            out = np.zeros(self.dim)
            for c, d in zip(th, self.diagonals):
                out += c * d
            return out
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for c, m in zip(th, self.dense):
            out += c * m
        return out

    def gram_matrix(self) -> np.ndarray:
        """Gram matrix under the normalized trace inner product Tr(A^t B)/dim."""
        n = self.n_observables
        g = np.empty((n, n))
        for a in range(n):
            for b in range(a, n):
                if self.is_diagonal:
                    val = float(np.dot(self.diagonals[a], self.diagonals[b])) / self.dim
                else:
                    val = float(np.real(np.trace(self.dense[a].conj().T @ self.dense[b]))) / self.dim
                g[a, b] = g[b, a] = val
        return g


@dataclass(frozen=True)
class Translation:
    """Cyclic site shift on a region, acting as a basis permutation."""

    n_sites: int
    shift: int = 1

    def permutation(self) -> np.ndarray:
        """tau with tau[i] = index of the shifted configuration."""
        n = self.n_sites
        x = self.shift % n
        idx = np.arange(2**n, dtype=np.int64)
        tau = idx.copy()
        for _ in range(x):
            tau = (tau >> 1) | ((tau & 1) << (n - 1))
        return tau

    def conjugate_diagonal(self, diag: np.ndarray) -> np.ndarray:
        """Diagonal of sigma(x) Q sigma(x)^-1 for diagonal Q."""
        tau = self.permutation()
        out = np.empty_like(diag)
        out[tau] = diag
        return out

    def conjugate_dense(self, matrix: np.ndarray) -> np.ndarray:
        tau = self.permutation()
        inv = np.argsort(tau)
        return matrix[np.ix_(inv, inv)]


@dataclass(frozen=True)
class StructureReport:
    """Structural diagnostics of a family: defects are reported, not thrown."""

    kind: str | None
    n_sites: int
    hermiticity_defect: float
    commutator_norm: float
    gram_min_eigenvalue: float
    translation_defect: float | None
    extensivity_defects: dict | None
    split: tuple | None


def _site_spins(n_sites: int) -> np.ndarray:
    """(n_sites, 2^n) array of sigma_z values per site and basis state."""
    idx = np.arange(2**n_sites, dtype=np.int64)
    bits = (idx[:, None] >> (n_sites - 1 - np.arange(n_sites))[None, :]) & 1
    return (1 - 2 * bits).T.astype(float)


def _pauli():
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    return sx, sz


def lift_site_operator(op: np.ndarray, site: int, n_sites: int) -> np.ndarray:
    """Embed a single-site operator at ``site`` of an n-site spin space."""
    if not 0 <= site < n_sites:
        raise UsageError(f"site {site} out of range for {n_sites} sites")
    left = np.eye(2**site)
    right = np.eye(2 ** (n_sites - site - 1))
    return np.kron(np.kron(left, np.asarray(op)), right)


def build_model(spec: ModelSpec, region: Region, cap: int = DIMENSION_CAP) -> ObservableFamily:
    """Instantiate a built-in model's observable family on a region.

    free_spins: H = sum_i n_i with n_i = diag(0, 1).
    ising_chain: H = -J sum sz_i sz_{i+1} - h sum sz_i, plus M = sum sz_i.
    curie_weiss: H = -(J/2N)(sum sz_i)^2 - h sum sz_i, plus M.
    transverse_ising_chain: H = -J sum sz sz - hx sum sx_i, single observable.
    """
    expected = spec.region(region.size)
    if (region.geometry, region.boundary) != (expected.geometry, expected.boundary):
        raise UsageError(f"model {spec.kind} expects geometry {expected.geometry}"
                         f"{'/' + str(expected.boundary) if expected.boundary else ''}")
    n = region.size
    dim = 2**n
    if dim > cap:
        raise ResourceError(f"dimension 2^{n} = {dim} exceeds cap {cap}")

    if spec.kind == "transverse_ising_chain":
        sx, sz = _pauli()
        ham = np.zeros((dim, dim), dtype=complex)
        last = n if region.boundary == "periodic" else n - 1
        for i in range(last):
            ham -= spec.J * lift_site_operator(sz, i, n) @ lift_site_operator(sz, (i + 1) % n, n)
        for i in range(n):
            ham -= spec.hx * lift_site_operator(sx, i, n)
        return ObservableFamily(region, spec.labels, matrices=[ham], spec=spec)

    spins = _site_spins(n)
    total_sz = spins.sum(axis=0)
    if spec.kind == "free_spins":
        number = (1.0 - spins) / 2.0
        diags = [number.sum(axis=0)]
    elif spec.kind == "ising_chain":
        last = n if region.boundary == "periodic" else n - 1
        bonds = sum(spins[i] * spins[(i + 1) % n] for i in range(last)) if last else 0.0
        diags = [-spec.J * bonds - spec.h * total_sz, total_sz.copy()]
    else:  # curie_weiss
        diags = [-(spec.J / (2.0 * n)) * total_sz**2 - spec.h * total_sz, total_sz.copy()]
    return ObservableFamily(region, spec.labels, diagonals=diags, spec=spec)


def _split_defects(family: ObservableFamily) -> tuple[dict, tuple] | tuple[None, None]:
    """Extensivity defect per observable under a half/half site split.

    Splitting a chain yields two open sub-chains; the other geometries split
    into their own kind. The defect is the max-norm of
    Q(A u B) - (Q(A) x 1 + 1 x Q(B)); for interacting models this is the
    boundary-term norm rather than an exact zero.
    """
    if family.spec is None or family.region.size < 2:
        return None, None
    spec = family.spec
    n = family.region.size
    na, nb = n // 2, n - n // 2
    sub_spec = spec
    if spec.kind in ("ising_chain", "transverse_ising_chain"):
        # halves of a chain are open sub-chains regardless of the parent's boundary
        sub_spec = ModelSpec(spec.kind, spec.J, spec.h, spec.hx, boundary="open")
    fam_a = build_model(sub_spec, sub_spec.region(na))
    fam_b = build_model(sub_spec, sub_spec.region(nb))
    defects = {}
    for j, label in enumerate(family.labels):
        if family.is_diagonal:
            joined = np.add.outer(fam_a.diagonals[j], fam_b.diagonals[j]).ravel()
            defects[label] = float(np.max(np.abs(family.diagonals[j] - joined)))
        else:
            joined = np.kron(fam_a.dense[j], np.eye(fam_b.dim)) + np.kron(
                np.eye(fam_a.dim), fam_b.dense[j]
            )
            defects[label] = float(np.max(np.abs(family.dense[j] - joined)))
    return defects, (na, nb)


def verify_family(family: ObservableFamily) -> StructureReport:
    """Structural audit: hermiticity, commutation, independence, covariance.

    Translation covariance is checked against the unit cyclic shift and only
    for translation-invariant geometries (open chains report None). The
    extensivity entry needs the generating ModelSpec and at least two sites.
    """
    herm = 0.0
    comm = 0.0
    if not family.is_diagonal:
        for m in family.dense:
            herm = max(herm, float(np.max(np.abs(m - m.conj().T))))
        for a in range(family.n_observables):
            for b in range(a + 1, family.n_observables):
                c = family.dense[a] @ family.dense[b] - family.dense[b] @ family.dense[a]
                comm = max(comm, float(np.max(np.abs(c))))

    gram_min = float(np.min(np.linalg.eigvalsh(family.gram_matrix())))

    trans = None
    if family.region.translation_invariant and family.region.size >= 2:
        shift = Translation(family.region.size)
        trans = 0.0
        for j in range(family.n_observables):
            if family.is_diagonal:
                moved = shift.conjugate_diagonal(family.diagonals[j])
                trans = max(trans, float(np.max(np.abs(moved - family.diagonals[j]))))
            else:
                moved = shift.conjugate_dense(family.dense[j])
                trans = max(trans, float(np.max(np.abs(moved - family.dense[j]))))

    defects, split = _split_defects(family)
    return StructureReport(
        kind=family.spec.kind if family.spec else None,
        n_sites=family.region.size,
        hermiticity_defect=herm,
        commutator_norm=comm,
        gram_min_eigenvalue=gram_min,
        translation_defect=trans,
        extensivity_defects=defects,
        split=split,
    )
