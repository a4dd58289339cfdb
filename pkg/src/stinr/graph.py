"""Graph-domain coordinates: symmetric normalized Laplacian and truncated
spectral embeddings, plus adjacency ingestion.

Directed inputs are symmetrized as (A + A.T) / 2 before use. Isolated
nodes get a zero inverse square-root degree, which turns their Laplacian
row into the identity row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .linalg import sym_eig

DEGENERACY_GAP = 1e-10


@dataclass
class GraphSpec:
    """Weighted undirected graph: node count plus dense adjacency."""

    n: int
    adjacency: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=np.float64)
        if a.shape != (self.n, self.n):
            raise DataError(f"adjacency shape {a.shape} does not match n={self.n}")
        if not np.all(np.isfinite(a)):
            raise DataError("adjacency contains non-finite weights")
        if np.any(a < 0):
            raise DataError("adjacency weights must be nonnegative")
        if float(np.max(np.abs(a - a.T), initial=0.0)) > 1e-10:
            raise DataError("adjacency must be symmetric (symmetrize on ingestion)")
        if float(np.max(np.abs(np.diag(a)), initial=0.0)) != 0.0:
            raise DataError("adjacency must have a zero diagonal")
        self.adjacency = a


def make_graph_spec(adjacency: np.ndarray) -> GraphSpec:
    """Build a GraphSpec from a possibly directed adjacency matrix.

    Symmetrizes as (A + A.T) / 2 and zeroes the diagonal.
    """
    a = np.asarray(adjacency, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DataError(f"adjacency must be square, got shape {a.shape}")
    a = 0.5 * (a + a.T)
    np.fill_diagonal(a, 0.0)
    return GraphSpec(n=a.shape[0], adjacency=a)


def ring_adjacency(n: int, weight: float = 1.0) -> np.ndarray:
    """Cycle graph on n nodes, the bundled synthetic sensor layout."""
    if n < 3:
        raise ConfigError("ring graph needs at least 3 nodes")
    a = np.zeros((n, n))
    for i in range(n):
        a[i, (i + 1) % n] = weight
        a[(i + 1) % n, i] = weight
    return a


def load_adjacency(path, fmt: str = "edges", n: int | None = None) -> GraphSpec:
    """Read an adjacency from CSV.

    fmt="edges": rows `src,dst,weight` with 0-based node ids; node count is
    max id + 1 unless n is given. fmt="dense": a full numeric matrix.
    """
    with open(path) as fh:
        rows = [line for line in fh.read().splitlines() if line.strip() != ""]
    if not rows:
        raise DataError(f"{path}: file is empty")
    if fmt == "dense":
        mat = []
        for lineno, line in enumerate(rows, start=1):
            try:
                mat.append([float(c) for c in line.split(",")])
            except ValueError:
                raise DataError(f"{path}: non-numeric cell at line {lineno}") from None
        lengths = {len(r) for r in mat}
        if len(lengths) != 1:
            raise DataError(f"{path}: ragged rows in dense adjacency")
        return make_graph_spec(np.asarray(mat))
    if fmt == "edges":
        edges = []
        max_id = -1
        for lineno, line in enumerate(rows, start=1):
            cells = [c.strip() for c in line.split(",")]
            if len(cells) != 3:
                raise DataError(
                    f"{path}: expected `src,dst,weight` at line {lineno}"
                )
            try:
                src, dst, w = int(cells[0]), int(cells[1]), float(cells[2])
            except ValueError:
                raise DataError(f"{path}: non-numeric cell at line {lineno}") from None
            if src < 0 or dst < 0:
                raise DataError(f"{path}: negative node id at line {lineno}")
            edges.append((src, dst, w))
            max_id = max(max_id, src, dst)
        count = n if n is not None else max_id + 1
        if max_id >= count:
            raise DataError(f"{path}: node id {max_id} exceeds declared count {count}")
        a = np.zeros((count, count))
        for src, dst, w in edges:
            a[src, dst] += w
        return make_graph_spec(a)
    raise ConfigError(f"unknown adjacency format {fmt!r}")


def normalized_laplacian(graph: GraphSpec) -> np.ndarray:
    """L = I - D^{-1/2} A D^{-1/2}; symmetric with eigenvalues in [0, 2]."""
    degree = graph.adjacency.sum(axis=1)
    with np.errstate(divide="ignore"):
        dinv_sqrt = np.where(degree > 0.0, 1.0 / np.sqrt(degree), 0.0)
    lap = -graph.adjacency * np.outer(dinv_sqrt, dinv_sqrt)
    np.fill_diagonal(lap, lap.diagonal() + 1.0)
    return 0.5 * (lap + lap.T)


@dataclass
class SpectralEmbedding:
    """Per-node coordinates from the leading Laplacian eigenvectors.

    coords[j] is the k-dimensional coordinate of node j; column order
    follows ascending eigenvalues with the solver's sign convention.
    """

    k: int
    coords: np.ndarray
    eigenvalues: np.ndarray


def spectral_embedding(graph: GraphSpec, k: int) -> SpectralEmbedding:
    """First-k eigenvector embedding of the normalized Laplacian.

    If the eigenvalue gap at the truncation boundary is below 1e-10, the
    whole degenerate block is included and k grows accordingly, so the
    embedding never cuts through an eigenspace with an arbitrary basis.
    """
    if not 1 <= k <= graph.n:
        raise ConfigError(f"k={k} out of range for a graph with {graph.n} nodes")
    eig = sym_eig(normalized_laplacian(graph))
    effective_k = k
    while effective_k < graph.n and (
        eig.eigenvalues[effective_k] - eig.eigenvalues[effective_k - 1] < DEGENERACY_GAP
    ):
        effective_k += 1
    return SpectralEmbedding(
        k=effective_k,
        coords=eig.eigenvectors[:, :effective_k].copy(),
        eigenvalues=eig.eigenvalues[:effective_k].copy(),
    )


def connected_components(graph: GraphSpec) -> np.ndarray:
    """Component label per node, via breadth-first search on nonzero weights."""
    labels = np.full(graph.n, -1, dtype=int)
    current = 0
    for start in range(graph.n):
        if labels[start] != -1:
            continue
        stack = [start]
        labels[start] = current
        while stack:
            node = stack.pop()
            for nxt in np.nonzero(graph.adjacency[node] > 0.0)[0]:
                if labels[nxt] == -1:
                    labels[nxt] = current
                    stack.append(int(nxt))
        current += 1
    return labels
