"""Random communication graphs and their consensus (mixing) matrices."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

MAX_REDRAWS = 10_000


class TopologyError(ValueError):
    """Raised when a graph or mixing matrix cannot be built or is invalid."""


@dataclass(frozen=True)
class NetworkTopology:
    """Undirected simple graph over ``m`` agents labelled ``0..m-1``."""

    m: int
    edges: frozenset[tuple[int, int]]
    neighbor_lists: tuple[tuple[int, ...], ...] = field(init=False)

    def __post_init__(self):
        if self.m < 1:
            raise TopologyError("a network needs at least one agent")
        nbrs: list[set[int]] = [set() for _ in range(self.m)]
        normalized = set()
        for i, j in self.edges:
            if i == j:
                raise TopologyError(f"self-loop at agent {i}")
            if not (0 <= i < self.m and 0 <= j < self.m):
                raise TopologyError(f"edge ({i}, {j}) out of range for m={self.m}")
            a, b = min(i, j), max(i, j)
            normalized.add((a, b))
            nbrs[a].add(b)
            nbrs[b].add(a)
        object.__setattr__(self, "edges", frozenset(normalized))
        object.__setattr__(
            self, "neighbor_lists", tuple(tuple(sorted(s)) for s in nbrs)
        )

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.m, self.m))
        for i, j in self.edges:
            adj[i, j] = adj[j, i] = 1.0
        return adj

    def laplacian(self) -> np.ndarray:
        adj = self.adjacency()
        return np.diag(adj.sum(axis=1)) - adj

    def is_connected(self) -> bool:
        if self.m == 1:
            return True
        n_comp, _ = connected_components(csr_matrix(self.adjacency()), directed=False)
        return n_comp == 1


@dataclass(frozen=True)
class ConsensusMatrix:
    """Symmetric doubly stochastic mixing matrix and its spectral gap ``lam``.

    ``lam`` is the second-largest eigenvalue magnitude, ``max(|l_2|, |l_m|)``.
    """

    entries: np.ndarray
    lam: float

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def c1(self) -> float:
        """Topology constant ``(1 - lam^2) / (1 + lam^2)`` used by the step-size bounds."""
        return (1.0 - self.lam**2) / (1.0 + self.lam**2)

    def mix(self, block: np.ndarray) -> np.ndarray:
        """One synchronous averaging round over rows (one row per agent)."""
        return self.entries @ block


def generate_erdos_renyi(m: int, p_c: float, seed: int) -> NetworkTopology:
    """Draw a connected Erdos-Renyi graph G(m, p_c).

    Disconnected draws are rejected and redrawn with the seed advanced by one,
    so the result is a deterministic function of ``(m, p_c, seed)``.
    """
    if m < 1:
        raise TopologyError(f"m must be positive, got {m}")
    if not 0.0 < p_c <= 1.0:
        raise TopologyError(f"edge probability must lie in (0, 1], got {p_c}")
    iu, ju = np.triu_indices(m, k=1)
    for attempt in range(MAX_REDRAWS):
        rng = np.random.default_rng([seed, attempt])
        keep = rng.random(iu.size) < p_c
        g = NetworkTopology(m, frozenset(zip(iu[keep].tolist(), ju[keep].tolist())))
        if g.is_connected():
            return g
    raise TopologyError(
        f"no connected graph after {MAX_REDRAWS} draws; p_c={p_c} is too small for m={m}"
    )


def laplacian_consensus_matrix(g: NetworkTopology) -> ConsensusMatrix:
    """Build ``M = I - 2 / (3 * lambda_max(L)) * L`` from the graph Laplacian."""
    if g.m == 1:
        return ConsensusMatrix(np.ones((1, 1)), 0.0)
    if not g.is_connected():
        raise TopologyError("consensus matrix requires a connected graph")
    lap = g.laplacian()
    try:
        lmax = np.linalg.eigvalsh(lap)[-1]
    except np.linalg.LinAlgError as exc:
        raise TopologyError("eigenvalue solver failed on the Laplacian") from exc
    entries = np.eye(g.m) - (2.0 / (3.0 * lmax)) * lap
    # Laplacian is symmetric in exact arithmetic; remove rounding asymmetry.
    entries = 0.5 * (entries + entries.T)
    return ConsensusMatrix(entries, spectral_gap(entries))


def spectral_gap(M: ConsensusMatrix | np.ndarray) -> float:
    """Second-largest eigenvalue magnitude of a symmetric doubly stochastic matrix."""
    entries = M.entries if isinstance(M, ConsensusMatrix) else np.asarray(M, dtype=float)
    m = entries.shape[0]
    if m == 1:
        return 0.0
    try:
        eig = np.linalg.eigvalsh(entries)
    except np.linalg.LinAlgError as exc:
        raise TopologyError("eigenvalue solver did not converge") from exc
    # eigvalsh returns ascending order; the top eigenvalue is the consensus mode.
    lam = float(max(abs(eig[-2]), abs(eig[0])))
    if lam >= 1.0 - 1e-10:
        raise TopologyError(f"spectral gap vanished (lambda={lam}); matrix is not mixing")
    return lam


def check_consensus_matrix(M: ConsensusMatrix, g: NetworkTopology | None = None,
                           tol: float = 1e-12) -> None:
    """Raise ``TopologyError`` unless ``M`` is symmetric, doubly stochastic and
    (optionally) supported on the edges of ``g``."""
    W = M.entries
    ones = np.ones(W.shape[0])
    if np.max(np.abs(W.sum(axis=0) - ones)) > tol or np.max(np.abs(W.sum(axis=1) - ones)) > tol:
        raise TopologyError("matrix is not doubly stochastic")
    if np.max(np.abs(W - W.T)) > tol:
        raise TopologyError("matrix is not symmetric")
    if g is not None:
        adj = g.adjacency() + np.eye(g.m)
        if np.any(W[adj == 0] != 0.0):
            raise TopologyError("matrix has weight on a non-edge")
        off = (adj == 1) & ~np.eye(g.m, dtype=bool)
        if np.any(W[off] <= 0.0):
            raise TopologyError("matrix has non-positive weight on an edge")
    if not 0.0 <= M.lam < 1.0:
        raise TopologyError(f"lambda={M.lam} outside [0, 1)")


def write_edge_list(g: NetworkTopology, path: str | Path) -> None:
    """Write one ``i j`` pair per line (0-indexed, ``i < j``, sorted)."""
    lines = [f"{i} {j}\n" for i, j in sorted(g.edges)]
    Path(path).write_text("".join(lines))


def read_edge_list(path: str | Path, m: int) -> NetworkTopology:
    edges = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise TopologyError(f"line {lineno}: expected 'i j', got {line!r}")
        edges.append((int(parts[0]), int(parts[1])))
    return NetworkTopology(m, frozenset(edges))
