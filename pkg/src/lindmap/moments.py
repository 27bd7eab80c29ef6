"""Normally ordered two-site moments and their exact equation of motion.

The hierarchy of moments (adag1^p adag2^q a1^r a2^s) does not close at any
finite order, so it is useless as a solver.  What it is good for is
verification: the instantaneous time derivative of each moment has a
closed-form right-hand side in terms of neighbouring moments, and that
expression must agree with the generator route Tr(A * L[rho]) on any state.
The comparison is exact (no integration error), which makes it the
strongest available cross-check between the operator constructors, the
generator, and the coefficient algebra.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .hilbert import HilbertSpace, OperatorMatrix, annihilation
from .lindblad import DensityMatrix, liouvillian_apply, _leak_masks
from .models import DimerParams, build_dimer

__all__ = [
    "MomentIndex",
    "MomentTable",
    "EomCheckResult",
    "moment_indices",
    "moment_operator",
    "moment_expectation",
    "moments_of",
    "moment_rhs",
    "conjugate_rhs_check",
    "eom_consistency_check",
]

# population allowed in the top two Fock levels before the exact-identity
# check refuses to run; truncation corrupts the algebra only up there
CUTOFF_POPULATION_TOL = 1e-8


class MomentIndex(NamedTuple):
    """Powers (p, q, r, s) in the normally ordered product
    adag1^p adag2^q a1^r a2^s."""

    p: int
    q: int
    r: int
    s: int

    @property
    def order(self) -> int:
        return self.p + self.q + self.r + self.s

    def paired(self) -> "MomentIndex":
        """Index of the Hermitian conjugate moment."""
        return MomentIndex(self.r, self.s, self.p, self.q)


def _as_index(idx) -> MomentIndex:
    out = MomentIndex(*idx)
    if any(x < 0 for x in out):
        raise ValueError(f"moment index must be non-negative, got {tuple(out)}")
    return out


def moment_indices(max_order: int) -> tuple:
    """All indices with order <= max_order, sorted by (order, p, q, r, s)."""
    if max_order < 0:
        raise ValueError("max_order must be >= 0")
    out = [
        MomentIndex(p, q, r, s)
        for p in range(max_order + 1)
        for q in range(max_order + 1 - p)
        for r in range(max_order + 1 - p - q)
        for s in range(max_order + 1 - p - q - r)
    ]
    out.sort(key=lambda m: (m.order,) + tuple(m))
    return tuple(out)


@dataclass(frozen=True)
class MomentTable:
    """Moment values at one instant, keyed by MomentIndex.

    Tables built from a state satisfy entry(0,0,0,0) = 1 and the pairing
    entry(p,q,r,s) = conj(entry(r,s,p,q)); arbitrary tables (used for
    algebraic identity testing) need not, so nothing is enforced here.
    """

    entries: dict

    def __post_init__(self):
        fixed = {_as_index(k): complex(v) for k, v in self.entries.items()}
        object.__setattr__(self, "entries", fixed)

    def __getitem__(self, idx) -> complex:
        key = _as_index(idx)
        try:
            return self.entries[key]
        except KeyError:
            raise KeyError(f"moment table has no entry for {tuple(key)}") from None

    def __contains__(self, idx) -> bool:
        return _as_index(idx) in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def conjugated(self) -> "MomentTable":
        """Entrywise complex conjugate, same keys."""
        return MomentTable({k: np.conj(v) for k, v in self.entries.items()})

    def pairing_deviation(self) -> float:
        """Max |entry(p,q,r,s) - conj(entry(r,s,p,q))| over pairs present."""
        worst = 0.0
        for k, v in self.entries.items():
            partner = k.paired()
            if partner in self.entries:
                worst = max(worst, abs(v - np.conj(self.entries[partner])))
        return worst


def _require_two_boson_sites(space: HilbertSpace) -> None:
    kinds = tuple(site.kind for site in space.sites)
    if kinds != ("boson", "boson"):
        raise ValueError(
            f"moments are defined for exactly two bosonic sites, got {kinds}"
        )


def moment_operator(space: HilbertSpace, idx) -> OperatorMatrix:
    """Matrix of adag1^p adag2^q a1^r a2^s; real in the Fock basis."""
    _require_two_boson_sites(space)
    p, q, r, s = _as_index(idx)
    a1 = annihilation(space, 0).matrix
    a2 = annihilation(space, 1).matrix
    mat = (
        np.linalg.matrix_power(a1.T, p)
        @ np.linalg.matrix_power(a2.T, q)
        @ np.linalg.matrix_power(a1, r)
        @ np.linalg.matrix_power(a2, s)
    )
    return OperatorMatrix(space, mat)


def moment_expectation(rho: DensityMatrix, idx) -> complex:
    return rho.expectation(moment_operator(rho.space, idx))


def moments_of(rho: DensityMatrix, max_order: int = 3) -> MomentTable:
    """Table of every moment of order <= max_order for the given state."""
    return MomentTable(
        {idx: moment_expectation(rho, idx) for idx in moment_indices(max_order)}
    )


def moment_rhs(params: DimerParams, idx, table: MomentTable) -> complex:
    """Exact d/dt of the moment at ``idx``, evaluated on ``table``.

    Each neighbouring moment enters with an integer combinatorial factor;
    a factor of zero means the term is absent, so indices that would dip
    below zero are never constructed, let alone looked up.  The table must
    cover every index reached with a nonzero factor (order up to idx.order
    + 2 suffices).
    """
    p, q, r, s = _as_index(idx)
    if params.n_sites != 2:
        raise ValueError("moment equations cover the two-site model only")
    dw, U, eps, J = params.delta_omega, params.U, params.epsilon, params.J
    gamma = params.gamma

    total = 0.0 + 0.0j

    def add(coeff, jdx):
        nonlocal total
        if coeff != 0:
            total += coeff * table[jdx]

    diag = (
        (dw - U) * (r + s - p - q)
        + U * (r * r + s * s - p * p - q * q)
        - 0.5j * gamma * (p + q + r + s)
    )
    add(diag, (p, q, r, s))
    add(2.0 * U * (r - p), (p + 1, q, r + 1, s))
    add(2.0 * U * (s - q), (p, q + 1, r, s + 1))
    add(J * r, (p, q, r - 1, s + 1))
    add(J * s, (p, q, r + 1, s - 1))
    add(-J * p, (p - 1, q + 1, r, s))
    add(-J * q, (p + 1, q - 1, r, s))
    add(eps * r, (p, q, r - 1, s))
    add(-eps * p, (p - 1, q, r, s))
    return -1j * total


def conjugate_rhs_check(params: DimerParams, idx, table: MomentTable) -> float:
    """Residual of conj(rhs(params)) = rhs(params.negated()) on the
    conjugated table; anything above roundoff is an implementation bug."""
    lhs = np.conj(moment_rhs(params, idx, table))
    rhs = moment_rhs(params.negated(), idx, table.conjugated())
    return float(abs(lhs - rhs))


@dataclass(frozen=True)
class EomCheckResult:
    """Per-index residuals between the generator route and the closed form."""

    residuals: dict

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values())

    @property
    def worst_index(self) -> MomentIndex:
        return max(self.residuals, key=self.residuals.__getitem__)


def eom_consistency_check(
    params: DimerParams, rho: DensityMatrix, max_order: int = 3
) -> EomCheckResult:
    """Compare Tr(A * L[rho]) against moment_rhs for every order <= max_order.

    The two sides are computed by unrelated code paths (operator algebra
    on matrices vs. integer coefficient bookkeeping), so agreement at
    roundoff pins both down.  The state must keep the top two Fock levels
    essentially empty; population there breaks the exact identity through
    the truncated commutator.
    """
    _require_two_boson_sites(rho.space)
    if rho.space.sites[0].cutoff != params.cutoff:
        raise ValueError("state cutoff does not match params.cutoff")
    diag = np.real(np.diag(rho.matrix))
    for site, mask in _leak_masks(rho.space):
        top = float(diag[mask].sum())
        if top >= CUTOFF_POPULATION_TOL:
            raise ValueError(
                f"site {site}: population {top:.3e} in the top two Fock "
                "levels; raise the cutoff before running the exact check"
            )
    model = build_dimer(params)
    drho = liouvillian_apply(model, rho.matrix)
    table = moments_of(rho, max_order + 2)
    residuals = {}
    for idx in moment_indices(max_order):
        engine = moment_operator(rho.space, idx).expectation(drho)
        closed = moment_rhs(params, idx, table)
        residuals[idx] = float(abs(engine - closed))
    return EomCheckResult(residuals)
