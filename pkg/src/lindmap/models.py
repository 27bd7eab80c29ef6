"""Concrete driven-dissipative models: Bose-Hubbard dimer/chain, Ising spin lattice.

Energies and rates are expressed in units of the per-site loss rate, which
is why gamma defaults to 1.  The parameter pack that the sign-inversion
mapping negates is (U, delta_omega, epsilon, J) for the bosonic models and
(delta_Omega, drives, J) for the spin models; the loss rate is deliberately
not part of it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .hilbert import (
    HilbertSpace,
    OperatorMatrix,
    annihilation,
    boson,
    build_space,
    number_op,
    spin,
    spin_op,
)
from .lindblad import LindbladModel

__all__ = [
    "DimerParams",
    "SpinLatticeParams",
    "LatticeGraph",
    "dimer_space",
    "spin_space",
    "build_dimer",
    "build_spin_lattice",
    "is_frustrated",
]


def _normalize_edges(edges, n_sites: int) -> tuple:
    seen = set()
    out = []
    for e in edges:
        j, k = e
        if j == k:
            raise ValueError(f"self-loop edge ({j},{j})")
        if not (0 <= j < n_sites and 0 <= k < n_sites):
            raise ValueError(f"edge ({j},{k}) out of range for {n_sites} sites")
        pair = (min(j, k), max(j, k))
        if pair in seen:
            raise ValueError(f"duplicate edge {pair}")
        seen.add(pair)
        out.append(pair)
    return tuple(sorted(out))


@dataclass(frozen=True)
class LatticeGraph:
    """Undirected simple graph on sites 0..n_sites-1."""

    n_sites: int
    edges: tuple

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError("graph needs at least one site")
        object.__setattr__(self, "edges", _normalize_edges(self.edges, self.n_sites))

    @classmethod
    def chain(cls, n_sites: int) -> "LatticeGraph":
        return cls(n_sites, tuple((i, i + 1) for i in range(n_sites - 1)))

    @classmethod
    def ring(cls, n_sites: int) -> "LatticeGraph":
        if n_sites < 3:
            raise ValueError("ring needs at least 3 sites")
        return cls(n_sites, tuple((i, (i + 1) % n_sites) for i in range(n_sites)))

    @classmethod
    def triangle(cls) -> "LatticeGraph":
        return cls.ring(3)

    def neighbors(self, site: int) -> tuple:
        out = [k for j, k in self.edges if j == site]
        out += [j for j, k in self.edges if k == site]
        return tuple(sorted(out))

    def is_bipartite(self) -> bool:
        """Two-colorability by breadth-first search; disconnected graphs allowed."""
        color = [None] * self.n_sites
        adj = {i: [] for i in range(self.n_sites)}
        for j, k in self.edges:
            adj[j].append(k)
            adj[k].append(j)
        for start in range(self.n_sites):
            if color[start] is not None:
                continue
            color[start] = 0
            queue = [start]
            while queue:
                v = queue.pop()
                for w in adj[v]:
                    if color[w] is None:
                        color[w] = 1 - color[v]
                        queue.append(w)
                    elif color[w] == color[v]:
                        return False
        return True


@dataclass(frozen=True)
class DimerParams:
    """Bose-Hubbard parameters in units of the loss rate.

    The drive acts on site 0.  For n_sites > 2 the hopping pattern comes
    from ``edges`` (default: open chain).
    """

    U: float
    delta_omega: float
    epsilon: float
    J: float
    cutoff: int
    gamma: float = 1.0
    n_sites: int = 2
    edges: tuple | None = None

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.cutoff < 1:
            raise ValueError("cutoff must be >= 1")
        if self.n_sites < 2:
            raise ValueError("need at least two sites")
        if self.edges is not None:
            object.__setattr__(
                self, "edges", _normalize_edges(self.edges, self.n_sites)
            )

    def resolved_edges(self) -> tuple:
        if self.edges is not None:
            return self.edges
        return tuple((i, i + 1) for i in range(self.n_sites - 1))

    def negated(self) -> "DimerParams":
        """Flip (U, delta_omega, epsilon, J); the loss rate stays put."""
        return replace(
            self,
            U=-self.U,
            delta_omega=-self.delta_omega,
            epsilon=-self.epsilon,
            J=-self.J,
        )


@dataclass(frozen=True)
class SpinLatticeParams:
    """Driven Ising lattice: detuning, per-site drives, coupling sign included in J."""

    delta_Omega: float
    drives: tuple
    J: float
    graph: LatticeGraph
    Gamma: float = 1.0

    def __post_init__(self):
        drives = tuple(float(x) for x in self.drives)
        if len(drives) != self.graph.n_sites:
            raise ValueError(
                f"{len(drives)} drives for {self.graph.n_sites} sites"
            )
        if self.Gamma <= 0:
            raise ValueError("Gamma must be positive")
        object.__setattr__(self, "drives", drives)

    def negated(self) -> "SpinLatticeParams":
        return replace(
            self,
            delta_Omega=-self.delta_Omega,
            drives=tuple(-x for x in self.drives),
            J=-self.J,
        )


def dimer_space(p: DimerParams) -> HilbertSpace:
    return build_space([boson(p.cutoff)] * p.n_sites)


def spin_space(p: SpinLatticeParams) -> HilbertSpace:
    return build_space([spin()] * p.graph.n_sites)


def build_dimer(p: DimerParams) -> LindbladModel:
    """Detuned, driven, lossy Bose-Hubbard model.

    H = sum_n [delta_omega n_n + U adag_n adag_n a_n a_n]
        + epsilon (adag_0 + a_0) + J sum_edges (adag_j a_k + h.c.),
    one loss channel (gamma, a_n) per site.
    """
    space = dimer_space(p)
    ops_a = [annihilation(space, k) for k in range(p.n_sites)]
    H = None
    for k in range(p.n_sites):
        n = number_op(space, k)
        term = p.delta_omega * n + p.U * (n @ n - n)
        H = term if H is None else H + term
    H = H + p.epsilon * (ops_a[0].dag() + ops_a[0])
    for j, k in p.resolved_edges():
        H = H + p.J * (ops_a[j].dag() @ ops_a[k] + ops_a[k].dag() @ ops_a[j])
    channels = tuple((p.gamma, a) for a in ops_a)
    return LindbladModel(H=H, channels=channels)


def build_spin_lattice(p: SpinLatticeParams) -> LindbladModel:
    """Driven Ising model with spin relaxation.

    H = sum_j [delta_Omega sp_j sm_j + drives_j (sm_j + sp_j)]
        + J sum_<j,k> sz_j sz_k,
    one relaxation channel (Gamma, sm_j) per site.
    """
    space = spin_space(p)
    H = None
    for j in range(p.graph.n_sites):
        sm = spin_op(space, j, "lower")
        sp_ = spin_op(space, j, "raise")
        term = p.delta_Omega * (sp_ @ sm) + p.drives[j] * (sm + sp_)
        H = term if H is None else H + term
    for j, k in p.graph.edges:
        H = H + p.J * (spin_op(space, j, "z") @ spin_op(space, k, "z"))
    channels = tuple(
        (p.Gamma, spin_op(space, j, "lower")) for j in range(p.graph.n_sites)
    )
    return LindbladModel(H=H, channels=channels)


def is_frustrated(p: SpinLatticeParams) -> bool:
    """Antiferromagnetic coupling on a non-bipartite graph."""
    return p.J > 0 and not p.graph.is_bipartite()
