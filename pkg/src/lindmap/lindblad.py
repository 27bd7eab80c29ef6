"""Lindblad generator, time evolution, and steady states.

Density matrices are vectorized by row stacking (C-order reshape), so
vec(A rho B) = kron(A, B.T) vec(rho) and the generator becomes the sparse
matrix

    L = -i (kron(H, I) - kron(I, H.T))
        + sum_j gamma_j [kron(c_j, conj(c_j))
                         - 1/2 kron(c_j^dag c_j, I)
                         - 1/2 kron(I, (c_j^dag c_j).T)]

Dense matrix semantics (dissipator_apply, liouvillian_apply) are the
reference; the sparse matrix is checked against them in the tests.

State invariant tolerances (trace, Hermiticity, positivity) are module
constants; evolve enforces them on every snapshot, not every internal
integrator step.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from math import ceil

import numpy as np
import scipy.sparse as sp
from scipy.integrate import DOP853
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from .hilbert import HilbertSpace, OperatorMatrix

__all__ = [
    "TRACE_TOL",
    "HERM_TOL",
    "EIG_TOL",
    "InvariantViolationError",
    "SteadyStateError",
    "DegenerateSteadyStateError",
    "ConvergenceError",
    "TruncationLeakWarning",
    "DensityMatrix",
    "fock_state",
    "vacuum_state",
    "all_ground_state",
    "maximally_mixed",
    "random_low_occupation_state",
    "LindbladModel",
    "Trajectory",
    "dissipator_apply",
    "liouvillian_apply",
    "liouvillian_matrix",
    "evolve",
    "steady_state",
    "ConvergenceResult",
    "convergence_check",
]

TRACE_TOL = 1e-9
HERM_TOL = 1e-10
EIG_TOL = 1e-9

# top-two-Fock-level population threshold for the truncation warning
LEAK_TOL = 1e-6

# largest vectorized dimension (dim^2) handled by the direct linear solve
DIRECT_SOLVE_LIMIT = 20000

# below this Hilbert dimension the steady-state solver works on the dense
# matrix and can count the null-space dimension exactly
DENSE_STEADY_LIMIT = 40


class InvariantViolationError(Exception):
    """A density matrix broke trace, Hermiticity, or positivity tolerances."""


class SteadyStateError(Exception):
    pass


class DegenerateSteadyStateError(SteadyStateError):
    """Null space of the generator has dimension > 1."""

    def __init__(self, multiplicity: int, exact: bool = True):
        self.multiplicity = multiplicity
        self.exact = exact
        qual = "" if exact else "at least "
        super().__init__(
            f"steady state is not unique: null-space dimension {qual}{multiplicity}"
        )


class ConvergenceError(Exception):
    pass


class TruncationLeakWarning(UserWarning):
    """Population is piling up against a bosonic Fock cutoff."""


@dataclass(frozen=True)
class DensityMatrix:
    """State over a HilbertSpace; ``validate`` enforces the physics invariants."""

    space: HilbertSpace
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        mat = np.ascontiguousarray(self.matrix, dtype=complex)
        if mat.shape != (self.space.dim, self.space.dim):
            raise ValueError(
                f"state shape {mat.shape} does not match space dim {self.space.dim}"
            )
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @property
    def dim(self) -> int:
        return self.space.dim

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def validate(self) -> "DensityMatrix":
        """Check Hermiticity, unit trace, and positivity; raise on violation."""
        herm = np.abs(self.matrix - self.matrix.conj().T).max()
        if herm >= HERM_TOL:
            raise InvariantViolationError(f"not Hermitian: max asymmetry {herm:.3e}")
        tr = np.trace(self.matrix)
        if abs(tr - 1.0) >= TRACE_TOL:
            raise InvariantViolationError(f"trace {tr} deviates from 1")
        lo = float(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))[0])
        if lo < -EIG_TOL:
            raise InvariantViolationError(f"negative eigenvalue {lo:.3e}")
        return self

    def expectation(self, op: OperatorMatrix) -> complex:
        return op.expectation(self.matrix)


def fock_state(space: HilbertSpace, occupations) -> DensityMatrix:
    """Projector onto the product basis state with the given per-site levels."""
    idx = space.basis_index(occupations)
    mat = np.zeros((space.dim, space.dim), dtype=complex)
    mat[idx, idx] = 1.0
    return DensityMatrix(space, mat).validate()


def vacuum_state(space: HilbertSpace) -> DensityMatrix:
    return fock_state(space, [0] * space.n_sites)


def all_ground_state(space: HilbertSpace) -> DensityMatrix:
    """Every site in its lowest level; for spin lattices this is all |g>."""
    return fock_state(space, [0] * space.n_sites)


def maximally_mixed(space: HilbertSpace) -> DensityMatrix:
    mat = np.eye(space.dim, dtype=complex) / space.dim
    return DensityMatrix(space, mat).validate()


def random_low_occupation_state(
    space: HilbertSpace, rng: np.random.Generator, max_level: int = 2
) -> DensityMatrix:
    """Random full-rank state supported on per-site levels <= max_level.

    Keeping clear distance to the Fock cutoffs makes truncation exactly
    invisible, which the moment-hierarchy identity tests rely on.
    """
    keep = []
    for i in range(space.dim):
        levels = [(i // space.stride(k)) % d for k, d in enumerate(space.dims)]
        if all(l <= max_level for l in levels):
            keep.append(i)
    sub = len(keep)
    g = rng.standard_normal((sub, sub)) + 1j * rng.standard_normal((sub, sub))
    block = g @ g.conj().T
    block /= np.trace(block).real
    mat = np.zeros((space.dim, space.dim), dtype=complex)
    mat[np.ix_(keep, keep)] = block
    return DensityMatrix(space, mat).validate()


@dataclass(frozen=True)
class LindbladModel:
    """Hamiltonian plus decay channels (rate, jump operator)."""

    H: OperatorMatrix
    channels: tuple

    def __post_init__(self):
        if not self.H.is_hermitian(tol=1e-12):
            raise ValueError("Hamiltonian is not Hermitian to 1e-12 (relative)")
        chans = []
        for rate, jump in self.channels:
            rate = float(rate)
            if rate < 0:
                raise ValueError(f"negative rate {rate}")
            if not isinstance(jump, OperatorMatrix):
                raise TypeError("jump operators must be OperatorMatrix")
            if jump.space != self.H.space:
                raise ValueError("jump operator lives on a different space")
            chans.append((rate, jump))
        object.__setattr__(self, "channels", tuple(chans))

    @property
    def space(self) -> HilbertSpace:
        return self.H.space

    @property
    def dim(self) -> int:
        return self.H.dim


@dataclass(frozen=True)
class Trajectory:
    """Time grid plus expectation values and/or state snapshots.

    expectations has shape (n_times, n_observables); states is None in
    reduced mode.  final_state is always kept.
    """

    times: np.ndarray
    expectations: np.ndarray | None
    states: tuple | None
    final_state: DensityMatrix

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) < 1:
            raise ValueError("times must be a non-empty 1-d sequence")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)


def _as_matrix(rho) -> np.ndarray:
    if isinstance(rho, DensityMatrix):
        return rho.matrix
    return np.asarray(rho, dtype=complex)


def dissipator_apply(c: OperatorMatrix, rho) -> np.ndarray:
    """c rho c^dag - 1/2 {c^dag c, rho} for a single channel."""
    r = _as_matrix(rho)
    m = c.matrix
    if r.shape != m.shape:
        raise ValueError(f"shape mismatch: jump {m.shape}, state {r.shape}")
    cdc = m.conj().T @ m
    return m @ r @ m.conj().T - 0.5 * (cdc @ r + r @ cdc)


def liouvillian_apply(model: LindbladModel, rho) -> np.ndarray:
    """-i[H, rho] + sum_j gamma_j D[c_j] rho, dense reference implementation."""
    r = _as_matrix(rho)
    h = model.H.matrix
    if r.shape != h.shape:
        raise ValueError(f"shape mismatch: H {h.shape}, state {r.shape}")
    out = -1j * (h @ r - r @ h)
    for rate, jump in model.channels:
        if rate != 0.0:
            out += rate * dissipator_apply(jump, r)
    return out


def liouvillian_matrix(model: LindbladModel) -> sp.csr_matrix:
    """Sparse generator acting on row-stacked vec(rho)."""
    d = model.dim
    eye = sp.identity(d, dtype=complex, format="csr")
    h = sp.csr_matrix(model.H.matrix)
    L = -1j * (sp.kron(h, eye, format="csr") - sp.kron(eye, h.T, format="csr"))
    for rate, jump in model.channels:
        if rate == 0.0:
            continue
        c = sp.csr_matrix(jump.matrix)
        cdc = (c.conj().T @ c).tocsr()
        L = L + rate * (
            sp.kron(c, c.conj(), format="csr")
            - 0.5 * sp.kron(cdc, eye, format="csr")
            - 0.5 * sp.kron(eye, cdc.T, format="csr")
        )
    return L.tocsr()


def _leak_masks(space: HilbertSpace):
    """Flat-index masks of the top two Fock levels per bosonic site.

    Sites with cutoff < 2 are skipped: there the top two levels exhaust the
    space and the guard would fire unconditionally.
    """
    masks = []
    flat = np.arange(space.dim)
    for k, site in enumerate(space.sites):
        if site.kind == "boson" and site.cutoff >= 2:
            levels = (flat // space.stride(k)) % site.dim
            masks.append((k, levels >= site.dim - 2))
    return masks


def _grid_array(t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or len(t) < 1:
        raise ValueError("time grid must be a non-empty 1-d sequence")
    if t[0] != 0.0:
        raise ValueError("time grid must start at 0")
    if np.any(np.diff(t) <= 0):
        raise ValueError("time grid must be strictly increasing")
    return t


def _spectral_bound(L: sp.csr_matrix) -> float:
    # infinity norm bounds the spectral radius; deterministic to compute
    return float(np.max(np.abs(L).sum(axis=1))) if L.nnz else 0.0


def evolve(
    model: LindbladModel,
    rho0: DensityMatrix,
    t_grid,
    observables=None,
    *,
    method: str = "adaptive",
    rtol: float = 1e-8,
    atol: float = 1e-10,
    store_states: bool | None = None,
    check_invariants: bool = True,
) -> Trajectory:
    """Integrate d rho/dt = L rho and record snapshots at grid points.

    Parameters
    ----------
    observables : sequence of OperatorMatrix, optional
        When given, expectation values Tr(A rho(t)) are recorded and full
        snapshots are dropped (reduced mode) unless store_states is set.
    method : 'adaptive' (embedded Runge-Kutta, order 8(5,3)) or 'fixed'
        (classic fourth-order with a deterministic step count derived from
        the generator norm; byte-reproducible).
    check_invariants : validate trace/Hermiticity/positivity on every
        snapshot; disable only for throwaway sweep runs.

    Raises
    ------
    InvariantViolationError
        A snapshot left tolerance; usually the Fock cutoff is too low or
        the integrator tolerances too loose.

    Notes
    -----
    Hermiticity is an invariant manifold of the flow, and the stepper
    reprojects onto it after every accepted step.  Without that, a
    stability-limited run rides the stability boundary and the controller
    limit cycle amplifies roundoff in the fastest modes up to the local
    error tolerance, leaving an anti-Hermitian residue of order rtol.
    """
    if not isinstance(rho0, DensityMatrix):
        rho0 = DensityMatrix(model.space, rho0)
    if rho0.space != model.space:
        raise ValueError("initial state lives on a different space")
    t = _grid_array(t_grid)
    if store_states is None:
        store_states = observables is None
    obs_mats = [o.matrix for o in observables] if observables else []
    for o in observables or []:
        if o.space != model.space:
            raise ValueError("observable lives on a different space")

    d = model.dim
    space = model.space
    masks = _leak_masks(space)
    leaked: set[int] = set()

    n_t = len(t)
    expect = np.empty((n_t, len(obs_mats)), dtype=complex) if obs_mats else None
    states: list[DensityMatrix] | None = [] if store_states else None
    last: DensityMatrix | None = None

    def take_snapshot(k: int, y: np.ndarray):
        nonlocal last
        rho = y.reshape(d, d)
        dm = DensityMatrix(space, rho)
        if check_invariants:
            try:
                dm.validate()
            except InvariantViolationError as exc:
                raise InvariantViolationError(f"at t={t[k]:.6g}: {exc}") from None
        diag = np.real(np.diagonal(rho))
        for site, mask in masks:
            if site not in leaked:
                pop = float(diag[mask].sum())
                if pop > LEAK_TOL:
                    leaked.add(site)
                    warnings.warn(
                        f"site {site}: top two Fock levels hold population "
                        f"{pop:.3e} at t={t[k]:.6g}; raise the cutoff",
                        TruncationLeakWarning,
                        stacklevel=3,
                    )
        for j, m in enumerate(obs_mats):
            expect[k, j] = np.einsum("ij,ji->", m, rho)
        if states is not None:
            states.append(dm)
        last = dm

    take_snapshot(0, rho0.matrix.reshape(-1))

    if n_t > 1:
        L = liouvillian_matrix(model)
        y0 = rho0.matrix.reshape(-1).astype(complex)
        if method == "adaptive":
            _run_adaptive(L, y0, t, rtol, atol, take_snapshot)
        elif method == "fixed":
            _run_fixed(L, y0, t, take_snapshot)
        else:
            raise ValueError(f"unknown method {method!r}")

    assert last is not None
    return Trajectory(
        times=t,
        expectations=expect,
        states=tuple(states) if states is not None else None,
        final_state=last,
    )


def _project_hermitian(y: np.ndarray, d: int) -> np.ndarray:
    m = y.reshape(d, d)
    return (0.5 * (m + m.conj().T)).reshape(-1)


class _HermitianDOP853(DOP853):
    """DOP853 with reprojection onto the Hermitian subspace per step.

    When the step size is stability-limited the accept/reject limit cycle
    pumps roundoff in the fastest modes up to ~rtol before each rejection
    knocks it back; the anti-Hermitian part of that noise survives and
    accumulates.  Projecting each accepted state restores the invariant
    manifold at O(dim^2) cost against the O(nnz) right-hand side.  The
    projection is an entrywise-conjugation-equivariant map, so runs with
    conjugated generators stay bitwise conjugate.
    """

    def __init__(self, fun, t0, y0, mat_dim, **kwargs):
        self._mat_dim = mat_dim
        super().__init__(fun, t0, y0, **kwargs)

    def _step_impl(self):
        accepted, message = super()._step_impl()
        if accepted:
            self.y = _project_hermitian(self.y, self._mat_dim)
        return accepted, message


def _run_adaptive(L, y0, t, rtol, atol, take_snapshot):
    # grid points are hit exactly by retargeting t_bound segment by segment
    # (the step is clamped to land on it); snapshots are therefore always
    # projected step endpoints.  The dense-output interpolant is avoided on
    # purpose: its polynomial does not damp the fast modes, so mid-step
    # evaluations expose stability-boundary noise at the ~rtol level that
    # the endpoints do not carry.
    d = int(round(np.sqrt(len(y0))))
    solver = _HermitianDOP853(
        lambda _t, y: L @ y, 0.0, y0, d, t_bound=float(t[1]), rtol=rtol, atol=atol
    )
    for k in range(1, len(t)):
        solver.t_bound = float(t[k])
        solver.status = "running"
        while solver.status == "running":
            message = solver.step()
            if solver.status == "failed":
                raise RuntimeError(f"integrator failed: {message}")
        take_snapshot(k, solver.y)


def _run_fixed(L, y0, t, take_snapshot):
    # classic RK4; substep count from the infinity-norm spectral bound.
    # 0.3 sits well inside the stability limit (|z| < 2.8 on the imaginary
    # axis) because at the limit the per-step accuracy is only ~1e-6, which
    # breaks the positivity tolerance.
    bound = _spectral_bound(L)
    h_max = 0.3 / bound if bound > 0 else np.inf
    d = int(round(np.sqrt(len(y0))))
    y = y0.copy()
    for k in range(1, len(t)):
        span = t[k] - t[k - 1]
        n_sub = max(1, ceil(span / h_max)) if np.isfinite(h_max) else 1
        h = span / n_sub
        for _ in range(n_sub):
            k1 = L @ y
            k2 = L @ (y + 0.5 * h * k1)
            k3 = L @ (y + 0.5 * h * k2)
            k4 = L @ (y + h * k3)
            y = _project_hermitian(
                y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), d
            )
        take_snapshot(k, y)


def _trace_row(d: int) -> sp.csr_matrix:
    cols = np.arange(d) * d + np.arange(d)
    return sp.csr_matrix(
        (np.ones(d, dtype=complex), (np.zeros(d, dtype=int), cols)), shape=(1, d * d)
    )


def _replace_row0(L: sp.csr_matrix, row: sp.csr_matrix) -> sp.csc_matrix:
    body = L.tolil()
    body[0, :] = 0
    out = body.tocsr() + sp.vstack(
        [row, sp.csr_matrix((L.shape[0] - 1, L.shape[1]), dtype=complex)]
    ).tocsr()
    return out.tocsc()


def steady_state(
    model: LindbladModel,
    *,
    method: str = "auto",
    tol: float = 1e-10,
    rho0: DensityMatrix | None = None,
    t_horizon: float | None = None,
) -> DensityMatrix:
    """Solve L rho = 0 with unit trace.

    Reference method replaces the generator's first row (an equation made
    redundant by trace preservation) with the trace constraint and solves
    the sparse linear system; used up to dim^2 <= 20000.  Above that the
    state is relaxed by long-time evolution until the residual
    ||L vec(rho)||_max drops below ``tol``.

    Raises
    ------
    DegenerateSteadyStateError
        The generator's null space has dimension > 1 (reported, never
        silently resolved by picking one element).
    SteadyStateError
        Residual tolerance not reached.
    """
    rates = [rate for rate, _ in model.channels if rate > 0]
    if not rates:
        raise ValueError("model has no dissipation; steady state undefined")
    d = model.dim
    n = d * d
    if method == "auto":
        method = "direct" if n <= DIRECT_SOLVE_LIMIT else "evolve"
    if method == "direct" and n > DIRECT_SOLVE_LIMIT:
        raise ValueError(f"direct solve refused for dim^2 = {n} > {DIRECT_SOLVE_LIMIT}")

    if method == "direct":
        L = liouvillian_matrix(model)
        if d <= DENSE_STEADY_LIMIT:
            x = _steady_dense(L.toarray(), d)
        else:
            x = _steady_sparse(L, d)
        resid = float(np.abs(L @ x).max())
        if not resid < tol:
            raise SteadyStateError(f"direct solve residual {resid:.3e} exceeds {tol}")
        return DensityMatrix(model.space, x.reshape(d, d)).validate()

    if method != "evolve":
        raise ValueError(f"unknown method {method!r}")
    return _steady_evolve(model, tol, rho0, t_horizon)


def _steady_dense(Ld: np.ndarray, d: int) -> np.ndarray:
    svals = np.linalg.svd(Ld, compute_uv=False)
    scale = svals[0] if svals[0] > 0 else 1.0
    nullity = int(np.sum(svals < 1e-10 * scale))
    if nullity > 1:
        raise DegenerateSteadyStateError(nullity)
    A = Ld.copy()
    A[0, :] = 0.0
    A[0, :: d + 1] = 1.0
    b = np.zeros(d * d, dtype=complex)
    b[0] = 1.0
    return np.linalg.solve(A, b)


def _steady_sparse(L: sp.csr_matrix, d: int) -> np.ndarray:
    n = d * d
    b = np.zeros(n, dtype=complex)
    b[0] = 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", MatrixRankWarning)
        try:
            x = spsolve(_replace_row0(L, _trace_row(d)), b)
        except (MatrixRankWarning, RuntimeError) as exc:
            raise DegenerateSteadyStateError(2, exact=False) from exc
    if not np.all(np.isfinite(x)):
        raise DegenerateSteadyStateError(2, exact=False)
    # probe uniqueness: a different constraint row must select the same state
    rng = np.random.default_rng(1812)
    g = sp.csr_matrix(rng.standard_normal(n))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", MatrixRankWarning)
            y = spsolve(_replace_row0(L, g), b)
    except (MatrixRankWarning, RuntimeError):
        y = None
    if y is not None and np.all(np.isfinite(y)):
        tr = y.reshape(d, d).trace()
        if abs(tr) > 1e-12:
            y = y / tr
            if float(np.abs(y - x).max()) > 1e-6:
                raise DegenerateSteadyStateError(2, exact=False)
    return x


def _steady_evolve(model, tol, rho0, t_horizon) -> DensityMatrix:
    rates = [rate for rate, _ in model.channels if rate > 0]
    base = min(rates)
    chunk = 5.0 / base
    horizon = t_horizon if t_horizon is not None else 200.0 / base
    state = rho0 if rho0 is not None else maximally_mixed(model.space)
    L = liouvillian_matrix(model)
    elapsed = 0.0
    resid = np.inf
    while elapsed < horizon:
        with warnings.catch_warnings():
            # a maximally-mixed start trips the leak guard by construction
            warnings.simplefilter("ignore", TruncationLeakWarning)
            traj = evolve(
                model,
                state,
                [0.0, chunk],
                method="adaptive",
                rtol=1e-10,
                atol=1e-13,
                store_states=False,
                check_invariants=False,
            )
        state = traj.final_state
        elapsed += chunk
        resid = float(np.abs(L @ state.matrix.reshape(-1)).max())
        if resid < tol:
            return state.validate()
    raise SteadyStateError(
        f"residual {resid:.3e} after t={elapsed:.1f}; tolerance {tol} not reached"
    )


@dataclass(frozen=True)
class ConvergenceResult:
    """Chosen cutoff plus the sweep history of (N, N+step, max change)."""

    cutoff: int
    deltas: tuple


def convergence_check(
    model_family,
    observable,
    t_grid,
    *,
    start: int = 2,
    step: int = 2,
    ceiling: int = 24,
    tol: float = 1e-6,
    rtol: float = 1e-8,
    atol: float = 1e-10,
) -> ConvergenceResult:
    """Smallest cutoff N whose observable trajectory is stable under N -> N+step.

    model_family maps a cutoff to (LindbladModel, DensityMatrix); observable
    maps the model's HilbertSpace to the OperatorMatrix to track (it must be
    rebuilt per cutoff since the space changes).  Sweep runs skip invariant
    checks (under-truncated cutoffs legitimately violate positivity); rerun
    the winner with checks on for production data.
    """
    t = _grid_array(t_grid)

    def run(cutoff: int) -> np.ndarray:
        model, rho0 = model_family(cutoff)
        obs = observable(model.space)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationLeakWarning)
            traj = evolve(
                model,
                rho0,
                t,
                observables=[obs],
                rtol=rtol,
                atol=atol,
                check_invariants=False,
            )
        return traj.expectations[:, 0]

    deltas = []
    prev = run(start)
    n = start
    while n + step <= ceiling:
        cur = run(n + step)
        delta = float(np.abs(cur - prev).max())
        deltas.append((n, n + step, delta))
        if delta < tol:
            return ConvergenceResult(cutoff=n, deltas=tuple(deltas))
        prev = cur
        n += step
    raise ConvergenceError(
        f"no convergence below ceiling {ceiling}; deltas {deltas}"
    )
