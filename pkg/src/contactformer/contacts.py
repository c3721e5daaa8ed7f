"""CA-CA contact maps: construction from coordinates and a sparse text format.

A contact map is an N x N symmetric boolean matrix with a unit diagonal:
entry (i, j) is true iff the Euclidean distance between CA atoms i and j
is at most the threshold (8.0 A by default, boundary inclusive). Since
only pairwise distances enter, the map is invariant under rigid motions
of the coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_THRESHOLD = 8.0


class NonFiniteCoordinate(ValueError):
    """A coordinate is NaN or infinite."""


class FormatError(ValueError):
    """Serialized contact text does not follow the expected format."""


class IndexOutOfRange(ValueError):
    """A serialized contact pair refers to an index >= n."""


@dataclass(frozen=True)
class ContactMap:
    """Sparse symmetric boolean contact matrix.

    Only off-diagonal pairs (i, j) with i < j are stored; the diagonal is
    implicitly 1 (self-distance is zero) and symmetry is implicit.
    """

    n: int
    pairs: tuple[tuple[int, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"contact map needs n >= 1, got {self.n}")
        for i, j in self.pairs:
            if not (0 <= i < j < self.n):
                raise ValueError(f"bad contact pair ({i}, {j}) for n={self.n}")

    def dense(self) -> np.ndarray:
        """Full boolean matrix including diagonal and symmetric entries."""
        mat = np.eye(self.n, dtype=bool)
        if self.pairs:
            idx = np.asarray(self.pairs)
            mat[idx[:, 0], idx[:, 1]] = True
            mat[idx[:, 1], idx[:, 0]] = True
        return mat

    def truncated(self, n: int) -> "ContactMap":
        """Leading n x n square of the map (for sequence truncation)."""
        if n >= self.n:
            return self
        return ContactMap(n, tuple(p for p in self.pairs if p[1] < n))


def build_contact_map(positions, threshold: float = DEFAULT_THRESHOLD) -> ContactMap:
    """Threshold the pairwise CA-CA distances of one conformation.

    Args:
        positions: (N, 3) array-like of coordinates in Angstrom.
        threshold: contact distance in Angstrom; a pair at exactly the
            threshold counts as a contact.

    Raises:
        NonFiniteCoordinate: if any coordinate is NaN or infinite.
        ValueError: if positions is empty or not 3-dimensional.
    """
    pos = np.asarray(positions, dtype=np.float64)
    if pos.size == 0:
        raise ValueError("positions must be non-empty")
    if pos.ndim != 2 or pos.shape[1] != 3:
        raise ValueError(f"positions must be (N, 3), got {pos.shape}")
    if not np.all(np.isfinite(pos)):
        raise NonFiniteCoordinate("positions contain non-finite coordinates")

    # Compare squared distances: exact at the boundary, no sqrt noise.
    diff = pos[:, None, :] - pos[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    close = d2 <= threshold * threshold
    iu, ju = np.triu_indices(pos.shape[0], k=1)
    keep = close[iu, ju]
    pairs = tuple(zip(iu[keep].tolist(), ju[keep].tolist()))
    return ContactMap(pos.shape[0], pairs)


def serialize_contacts(cmap: ContactMap) -> str:
    """Text form: "n=<N>" then one "i j" line per pair, i < j, ascending."""
    lines = [f"n={cmap.n}"]
    lines.extend(f"{i} {j}" for i, j in sorted(cmap.pairs))
    return "\n".join(lines) + "\n"


def deserialize_contacts(text: str) -> ContactMap:
    """Inverse of :func:`serialize_contacts`.

    Raises:
        FormatError: malformed header, non-integer tokens, pairs with
            i >= j, negative indices, or out-of-order pairs.
        IndexOutOfRange: a pair index >= n.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("n="):
        raise FormatError("missing 'n=<N>' header line")
    try:
        n = int(lines[0][2:])
    except ValueError as exc:
        raise FormatError(f"bad header {lines[0]!r}") from exc
    if n < 1:
        raise FormatError(f"n must be >= 1, got {n}")

    pairs: list[tuple[int, int]] = []
    prev: tuple[int, int] | None = None
    for ln in lines[1:]:
        toks = ln.split()
        if len(toks) != 2:
            raise FormatError(f"expected 'i j', got {ln!r}")
        try:
            i, j = int(toks[0]), int(toks[1])
        except ValueError as exc:
            raise FormatError(f"non-integer pair {ln!r}") from exc
        if i < 0 or j < 0 or i >= j:
            raise FormatError(f"pair must satisfy 0 <= i < j, got ({i}, {j})")
        if j >= n:
            raise IndexOutOfRange(f"pair ({i}, {j}) out of range for n={n}")
        if prev is not None and (i, j) <= prev:
            raise FormatError(f"pairs not strictly ascending at ({i}, {j})")
        prev = (i, j)
        pairs.append((i, j))
    return ContactMap(n, tuple(pairs))
