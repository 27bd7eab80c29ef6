"""Composite Hilbert spaces and elementary site operators.

Sites are either bosonic modes with a finite Fock cutoff or spin-1/2
degrees of freedom.  The full space is the tensor product of the sites,
with site 0 as the slowest-varying index: the basis state with per-site
occupations (k_0, k_1, ...) sits at flat index  sum_i k_i * stride_i,
stride_i = prod_{j>i} dim_j.  All elementary operators (a, a_dag, n,
sigma^-, sigma^+, sigma_z) are real matrices in this basis; sigma_y is
purely imaginary.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

__all__ = [
    "SiteSpec",
    "boson",
    "spin",
    "HilbertSpace",
    "build_space",
    "OperatorMatrix",
    "identity_op",
    "tensor_embed",
    "annihilation",
    "creation",
    "number_op",
    "spin_op",
]

SPIN_OPS = ("lower", "raise", "z", "x", "y")


@dataclass(frozen=True)
class SiteSpec:
    """A single site: ``kind`` is 'boson' or 'spin'; bosons carry a Fock cutoff."""

    kind: str
    cutoff: int | None = None

    def __post_init__(self):
        if self.kind not in ("boson", "spin"):
            raise ValueError(f"unknown site kind {self.kind!r}")
        if self.kind == "boson":
            if self.cutoff is None or self.cutoff < 1:
                raise ValueError("boson site needs cutoff >= 1")
        elif self.cutoff is not None:
            raise ValueError("spin sites do not take a cutoff")

    @property
    def dim(self) -> int:
        return self.cutoff + 1 if self.kind == "boson" else 2


def boson(cutoff: int) -> SiteSpec:
    """Bosonic site truncated to Fock states |0>..|cutoff>."""
    return SiteSpec("boson", cutoff)


def spin() -> SiteSpec:
    """Spin-1/2 site with basis |g>, |e| (ground first)."""
    return SiteSpec("spin")


@dataclass(frozen=True)
class HilbertSpace:
    """Ordered tensor product of sites, site 0 slowest-varying."""

    sites: tuple[SiteSpec, ...]

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.sites)

    @property
    def dim(self) -> int:
        out = 1
        for d in self.dims:
            out *= d
        return out

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    def stride(self, site: int) -> int:
        out = 1
        for d in self.dims[site + 1:]:
            out *= d
        return out

    def basis_index(self, occupations) -> int:
        """Flat index of the product basis state with the given per-site levels."""
        occ = tuple(occupations)
        if len(occ) != self.n_sites:
            raise ValueError("one occupation per site required")
        idx = 0
        for k, (n, s) in enumerate(zip(occ, self.sites)):
            if not 0 <= n < s.dim:
                raise ValueError(f"occupation {n} out of range for site {k}")
            idx += n * self.stride(k)
        return idx

    def site_kind(self, site: int) -> str:
        if not 0 <= site < self.n_sites:
            raise ValueError(f"site {site} out of range")
        return self.sites[site].kind


def build_space(sites) -> HilbertSpace:
    """Build the composite space from a sequence of SiteSpec."""
    sites = tuple(sites)
    if not sites:
        raise ValueError("site list must be non-empty")
    return HilbertSpace(sites)


def _frozen(mat: np.ndarray) -> np.ndarray:
    mat = np.ascontiguousarray(mat, dtype=complex)
    mat.setflags(write=False)
    return mat


@dataclass(frozen=True)
class OperatorMatrix:
    """A complex square matrix acting on a HilbertSpace.

    Immutable; supports the small amount of algebra needed to assemble
    Hamiltonians (+, -, scalar *, @, dag, conj).
    """

    space: HilbertSpace
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        mat = np.asarray(self.matrix)
        if mat.shape != (self.space.dim, self.space.dim):
            raise ValueError(
                f"matrix shape {mat.shape} does not match space dim {self.space.dim}"
            )
        object.__setattr__(self, "matrix", _frozen(mat))

    @property
    def dim(self) -> int:
        return self.space.dim

    def dag(self) -> "OperatorMatrix":
        return OperatorMatrix(self.space, self.matrix.conj().T)

    def conj(self) -> "OperatorMatrix":
        """Entrywise complex conjugate (no transpose)."""
        return OperatorMatrix(self.space, self.matrix.conj())

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        scale = max(np.abs(self.matrix).max(), 1.0)
        return np.abs(self.matrix - self.matrix.conj().T).max() <= tol * scale

    def expectation(self, rho: np.ndarray) -> complex:
        """Tr(A rho)."""
        if rho.shape != self.matrix.shape:
            raise ValueError("state dimension mismatch")
        return complex(np.einsum("ij,ji->", self.matrix, rho))

    def _check_same_space(self, other: "OperatorMatrix"):
        if self.space != other.space:
            raise ValueError("operators act on different spaces")

    def __add__(self, other):
        if not isinstance(other, OperatorMatrix):
            return NotImplemented
        self._check_same_space(other)
        return OperatorMatrix(self.space, self.matrix + other.matrix)

    def __sub__(self, other):
        if not isinstance(other, OperatorMatrix):
            return NotImplemented
        self._check_same_space(other)
        return OperatorMatrix(self.space, self.matrix - other.matrix)

    def __neg__(self):
        return OperatorMatrix(self.space, -self.matrix)

    def __mul__(self, scalar):
        if isinstance(scalar, (int, float, complex, np.number)):
            return OperatorMatrix(self.space, scalar * self.matrix)
        return NotImplemented

    __rmul__ = __mul__

    def __matmul__(self, other):
        if not isinstance(other, OperatorMatrix):
            return NotImplemented
        self._check_same_space(other)
        return OperatorMatrix(self.space, self.matrix @ other.matrix)


def identity_op(space: HilbertSpace) -> OperatorMatrix:
    return OperatorMatrix(space, np.eye(space.dim))


def tensor_embed(space: HilbertSpace, site: int, local: np.ndarray) -> OperatorMatrix:
    """Embed a single-site matrix, identity on all other tensor factors."""
    if not 0 <= site < space.n_sites:
        raise ValueError(f"site {site} out of range")
    local = np.asarray(local, dtype=complex)
    d = space.dims[site]
    if local.shape != (d, d):
        raise ValueError(f"local matrix shape {local.shape}, site dimension {d}")
    mats = [np.eye(dk) if k != site else local for k, dk in enumerate(space.dims)]
    full = reduce(np.kron, mats)
    return OperatorMatrix(space, full)


def _local_annihilation(dim: int) -> np.ndarray:
    # <n-1| a |n> = sqrt(n)
    return np.diag(np.sqrt(np.arange(1, dim)), k=1).astype(complex)


_LOCAL_SPIN = {
    # basis ordering (|g>, |e>): sigma^- |e> = |g>
    "lower": np.array([[0, 1], [0, 0]], dtype=complex),
    "raise": np.array([[0, 0], [1, 0]], dtype=complex),
    "z": np.array([[-1, 0], [0, 1]], dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, 1j], [-1j, 0]], dtype=complex),
}


def _require_kind(space: HilbertSpace, site: int, kind: str):
    if space.site_kind(site) != kind:
        raise ValueError(f"site {site} is not a {kind} site")


def annihilation(space: HilbertSpace, site: int) -> OperatorMatrix:
    """Embedded bosonic annihilation operator a at a boson site."""
    _require_kind(space, site, "boson")
    return tensor_embed(space, site, _local_annihilation(space.dims[site]))


def creation(space: HilbertSpace, site: int) -> OperatorMatrix:
    return annihilation(space, site).dag()


def number_op(space: HilbertSpace, site: int) -> OperatorMatrix:
    """a_dag a for a boson site, sigma^+ sigma^- for a spin site."""
    if space.site_kind(site) == "boson":
        d = space.dims[site]
        return tensor_embed(space, site, np.diag(np.arange(d)).astype(complex))
    return spin_op(space, site, "raise") @ spin_op(space, site, "lower")


def spin_op(space: HilbertSpace, site: int, which: str) -> OperatorMatrix:
    """Embedded spin-1/2 operator; ``which`` one of 'lower', 'raise', 'z', 'x', 'y'."""
    _require_kind(space, site, "spin")
    if which not in _LOCAL_SPIN:
        raise ValueError(f"unknown spin operator {which!r}; choose from {SPIN_OPS}")
    return tensor_embed(space, site, _LOCAL_SPIN[which])
