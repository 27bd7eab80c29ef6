"""Partner-model mapping: Hamiltonian sign inversion plus gauge alignment.

In the product Fock/sigma-z basis every elementary operator used here is
real, so the antiunitary time reversal acts by entrywise complex
conjugation and never needs to be represented as a matrix.  The partner of
a model with Hamiltonian H and channels (gamma_j, c_j) has Hamiltonian
-conj(H) and channels (gamma_j, conj(c_j)); rates keep their sign.
Expectation values transport as  <A>_partner = conj(<conj(A)>_original).

Gauge transforms (single-site bosonic parity, global spin flip) conjugate
a model by a diagonal +-1 unitary; they re-sign drive and hopping terms
without touching observable physics of number-type operators.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .hilbert import HilbertSpace, OperatorMatrix
from .lindblad import DensityMatrix, LindbladModel, evolve

__all__ = [
    "MappingRefusedError",
    "time_reversal_conjugate",
    "map_model",
    "map_state",
    "map_expectation",
    "MappedPair",
    "map_pair",
    "parity_signs",
    "spin_flip_signs",
    "gauge_parity_site",
    "gauge_spin_flip",
    "gauge_state",
    "MappingCheck",
    "VerificationReport",
    "verify_mapping",
]


class MappingRefusedError(ValueError):
    """Hamiltonian is not real in the invariant basis; the mapping does not apply."""


def time_reversal_conjugate(op: OperatorMatrix) -> OperatorMatrix:
    """Entrywise complex conjugate; involutive, fixes real matrices."""
    return op.conj()


def _require_real_hamiltonian(model: LindbladModel):
    h = model.H.matrix
    scale = max(float(np.abs(h).max()), 1.0)
    imag = float(np.abs(h.imag).max())
    if imag > 1e-12 * scale:
        raise MappingRefusedError(
            f"Hamiltonian has imaginary entries up to {imag:.3e} in the product "
            "basis (complex hopping?); refusing to map"
        )


def map_model(q1: LindbladModel) -> LindbladModel:
    """Partner model: H -> -conj(H), jumps conjugated, rates unchanged."""
    _require_real_hamiltonian(q1)
    h2 = OperatorMatrix(q1.space, -q1.H.matrix.conj())
    channels = tuple((rate, jump.conj()) for rate, jump in q1.channels)
    return LindbladModel(H=h2, channels=channels)


def map_state(rho: DensityMatrix) -> DensityMatrix:
    """Entrywise conjugate; preserves trace, Hermiticity, and spectrum."""
    return DensityMatrix(rho.space, rho.matrix.conj())


def map_expectation(value_q1: complex) -> complex:
    """Predicted partner expectation from the measured <conj(A)> in the original."""
    return complex(value_q1).conjugate()


@dataclass(frozen=True)
class MappedPair:
    q1: LindbladModel
    q2: LindbladModel
    observable_transform: str = (
        "measure entrywise-conjugated A in q1; conjugate the result"
    )
    note: str = ""

    def __post_init__(self):
        if not self.note:
            # the bare pair must satisfy H2 = -conj(H1); gauge-composed pairs
            # record their transforms in `note` and are exempt
            dev = np.abs(self.q2.H.matrix + self.q1.H.matrix.conj()).max()
            if dev > 1e-14 * max(1.0, np.abs(self.q1.H.matrix).max()):
                raise ValueError(f"not a mapped pair: H deviation {dev:.3e}")
        r1 = tuple(rate for rate, _ in self.q1.channels)
        r2 = tuple(rate for rate, _ in self.q2.channels)
        if r1 != r2:
            raise ValueError("partner models must share rates unchanged")


def map_pair(q1: LindbladModel) -> MappedPair:
    return MappedPair(q1=q1, q2=map_model(q1))


def parity_signs(space: HilbertSpace, site: int) -> np.ndarray:
    """Diagonal of exp(i pi n_site): (-1)^(level of `site`) per basis state."""
    if space.site_kind(site) != "boson":
        raise ValueError(f"site {site} is not bosonic")
    flat = np.arange(space.dim)
    levels = (flat // space.stride(site)) % space.dims[site]
    return np.where(levels % 2 == 0, 1.0, -1.0)


def spin_flip_signs(space: HilbertSpace) -> np.ndarray:
    """Diagonal of the global excitation parity over an all-spin space."""
    if any(s.kind != "spin" for s in space.sites):
        raise ValueError("global spin flip needs an all-spin space")
    flat = np.arange(space.dim)
    total = np.zeros(space.dim, dtype=int)
    for k in range(space.n_sites):
        total += (flat // space.stride(k)) % 2
    return np.where(total % 2 == 0, 1.0, -1.0)


def _canonical_jump(mat: np.ndarray) -> np.ndarray:
    """Fix the irrelevant overall phase: first nonzero entry positive real."""
    scale = float(np.abs(mat).max())
    if scale == 0.0:
        return mat
    flat = mat.reshape(-1)
    z = flat[np.flatnonzero(np.abs(flat) > 1e-12 * scale)[0]]
    if z.imag == 0.0:
        return mat if z.real > 0 else -mat
    return mat * (z.conjugate() / abs(z))


def _conjugate_by_signs(model: LindbladModel, signs: np.ndarray) -> LindbladModel:
    outer = np.outer(signs, signs)
    h = OperatorMatrix(model.space, outer * model.H.matrix)
    channels = tuple(
        (rate, OperatorMatrix(model.space, _canonical_jump(outer * jump.matrix)))
        for rate, jump in model.channels
    )
    return LindbladModel(H=h, channels=channels)


def gauge_parity_site(q: LindbladModel, site: int) -> LindbladModel:
    """Conjugate by single-site bosonic parity; flips that site's drive and hopping."""
    return _conjugate_by_signs(q, parity_signs(q.space, site))


def gauge_spin_flip(q: LindbladModel) -> LindbladModel:
    """Conjugate by the global spin flip; flips every drive term."""
    return _conjugate_by_signs(q, spin_flip_signs(q.space))


def gauge_state(rho: DensityMatrix, signs: np.ndarray) -> DensityMatrix:
    return DensityMatrix(rho.space, np.outer(signs, signs) * rho.matrix)


@dataclass(frozen=True)
class MappingCheck:
    name: str
    max_deviation: float
    tolerance: float
    passed: bool
    worst_time: float

    def to_dict(self) -> dict:
        return {
            "observable": self.name,
            "max_deviation": self.max_deviation,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "worst_time": self.worst_time,
        }


@dataclass(frozen=True)
class VerificationReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def max_deviation(self) -> float:
        return max((c.max_deviation for c in self.checks), default=0.0)

    def raise_for_failure(self):
        for c in self.checks:
            if not c.passed:
                raise AssertionError(
                    f"mapping verification failed for {c.name}: deviation "
                    f"{c.max_deviation:.3e} at t={c.worst_time:.6g} "
                    f"(tolerance {c.tolerance:.1e})"
                )

    def to_json(self) -> str:
        return json.dumps([c.to_dict() for c in self.checks], indent=2)


def _named(observables):
    out = []
    for k, item in enumerate(observables):
        if isinstance(item, OperatorMatrix):
            out.append((f"obs{k}", item))
        else:
            name, op = item
            out.append((str(name), op))
    return out


def verify_mapping(
    q1: LindbladModel,
    rho0: DensityMatrix,
    observables,
    t_grid,
    tol: float = 1e-6,
    **evolve_kwargs,
) -> VerificationReport:
    """Run both partners independently and compare against the prediction.

    observables: OperatorMatrix values or (name, OperatorMatrix) pairs.  For
    each A the original system reports <conj(A)>, the partner reports <A>,
    and the check is |<A>_2(t) - conj(<conj(A)>_1(t))| < tol on the grid.
    The two trajectories are genuinely separate simulations, so agreement is
    evidence rather than construction.
    """
    named = _named(observables)
    q2 = map_model(q1)
    rho0_2 = map_state(rho0)
    t = np.asarray(t_grid, dtype=float)
    traj1 = evolve(
        q1, rho0, t, observables=[op.conj() for _, op in named], **evolve_kwargs
    )
    traj2 = evolve(
        q2, rho0_2, t, observables=[op for _, op in named], **evolve_kwargs
    )
    checks = []
    for j, (name, _) in enumerate(named):
        predicted = np.conj(traj1.expectations[:, j])
        measured = traj2.expectations[:, j]
        dev = np.abs(measured - predicted)
        worst = int(np.argmax(dev))
        checks.append(
            MappingCheck(
                name=name,
                max_deviation=float(dev[worst]),
                tolerance=tol,
                passed=bool(dev[worst] < tol),
                worst_time=float(t[worst]),
            )
        )
    return VerificationReport(checks=tuple(checks))
