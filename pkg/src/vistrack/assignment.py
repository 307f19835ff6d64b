"""Rectangular linear assignment on similarity matrices.

``cosine_matrix`` builds the similarity matrix used for frame-to-frame
matching; ``solve_assignment`` finds an optimal one-to-one assignment.

Conventions:

* real similarities live in [-1, 1]; any entry strictly below -1 is the
  *forbidden sentinel* (``FORBIDDEN``) marking pairs that must only be
  matched when unavoidable (rectangular shapes force a complete matching of
  the smaller side);
* the solver is deterministic: among all optimal matchings it returns the
  lexicographically smallest (row, col) pair list;
* rectangular inputs are padded internally to a square problem with a large
  constant cost, so external sentinel padding and internal padding solve
  identically.

The solver is a Jonker-Volgenant style shortest-augmenting-path method with
dual variables; determinism comes from a second pass that extracts the
lexicographically smallest perfect matching from the tight-edge graph of the
optimal duals (every optimal matching consists of tight edges only).
"""

from __future__ import annotations

import numpy as np

FORBIDDEN = -1e6         # sentinel similarity for forbidden pairs
_SENTINEL_BELOW = -1.0   # anything strictly below this is treated as forbidden


def cosine_matrix(a, b) -> np.ndarray:
    """Pairwise cosine similarities between two embedding collections.

    Inputs are normalized internally; rows/columns for null (all-zero)
    embeddings are set to ``FORBIDDEN``. Returns a (len(a), len(b)) float64
    matrix with real entries clipped into [-1, 1].
    """
    A = _as_matrix(a)
    B = _as_matrix(b)
    if A.shape[0] and B.shape[0] and A.shape[1] != B.shape[1]:
        raise ValueError(f"embedding dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if A.shape[0] == 0 or B.shape[0] == 0:
        return np.zeros((A.shape[0], B.shape[0]), dtype=np.float64)
    norm_a = np.linalg.norm(A, axis=1)
    norm_b = np.linalg.norm(B, axis=1)
    null_a = norm_a == 0.0
    null_b = norm_b == 0.0
    An = A / np.where(null_a, 1.0, norm_a)[:, None]
    Bn = B / np.where(null_b, 1.0, norm_b)[:, None]
    values = np.clip(An @ Bn.T, -1.0, 1.0)
    values[null_a, :] = FORBIDDEN
    values[:, null_b] = FORBIDDEN
    return values


def _as_matrix(x) -> np.ndarray:
    if isinstance(x, np.ndarray) and x.ndim == 2:
        return np.asarray(x, dtype=np.float64)
    rows = [np.asarray(e, dtype=np.float64).reshape(-1) for e in x]
    if not rows:
        return np.zeros((0, 0), dtype=np.float64)
    dims = {r.shape[0] for r in rows}
    if len(dims) > 1:
        raise ValueError(f"embedding dimension mismatch within one side: {sorted(dims)}")
    return np.stack(rows)


def solve_assignment(matrix, maximize: bool = True) -> list[tuple[int, int]]:
    """Optimal one-to-one assignment of size min(rows, cols).

    Maximizes (or minimizes) the total of the selected entries; forbidden
    sentinel entries (< -1) are selected only when no complete matching
    avoids them. Among optimal matchings the lexicographically smallest
    (row, col) list is returned, sorted by row.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"similarity matrix must be 2-D, got shape {m.shape}")
    rows, cols = m.shape
    if rows == 0 or cols == 0:
        return []
    if not np.all(np.isfinite(m)):
        raise ValueError("non-finite entry in similarity matrix")

    forbidden = m < _SENTINEL_BELOW
    real = ~forbidden
    if real.any():
        vmax = float(m[real].max())
        vmin = float(m[real].min())
    else:
        vmax = vmin = 0.0
    cost = (vmax - m) if maximize else (m - vmin)

    n = max(rows, cols)
    span = vmax - vmin
    big = (span + 1.0) * (n + 1)  # > any achievable real total, so fewer big edges always wins
    cost[forbidden] = big
    square = np.full((n, n), big, dtype=np.float64)
    square[:rows, :cols] = cost

    row4col, col4row, u, v = _jv_square(square)
    col_of_row = _lex_smallest_tight_matching(square, u, v, row4col, col4row)
    return [(i, int(col_of_row[i])) for i in range(rows) if col_of_row[i] < cols]


def _jv_square(cost: np.ndarray):
    """Shortest augmenting path assignment with duals (minimization, square)."""
    n = cost.shape[0]
    u = np.zeros(n)
    v = np.zeros(n)
    col4row = np.full(n, -1, dtype=np.intp)
    row4col = np.full(n, -1, dtype=np.intp)
    for cur_row in range(n):
        shortest = np.full(n, np.inf)
        path = np.full(n, -1, dtype=np.intp)
        done = np.zeros(n, dtype=bool)
        tree_rows = [cur_row]
        min_val = 0.0
        i = cur_row
        while True:
            reduced = min_val + cost[i] - u[i] - v
            improve = (~done) & (reduced < shortest)
            shortest[improve] = reduced[improve]
            path[improve] = i
            masked = np.where(done, np.inf, shortest)
            j = int(np.argmin(masked))  # first minimum: lowest column index
            min_val = float(masked[j])
            done[j] = True
            if row4col[j] < 0:
                sink = j
                break
            i = int(row4col[j])
            tree_rows.append(i)
        u[cur_row] += min_val
        for r in tree_rows[1:]:
            u[r] += min_val - shortest[col4row[r]]
        v[done] -= min_val - shortest[done]
        j = sink
        while True:
            i = int(path[j])
            row4col[j] = i
            col4row[i], j = j, int(col4row[i])
            if i == cur_row:
                break
    return row4col, col4row, u, v


def _lex_smallest_tight_matching(cost, u, v, row4col, col4row) -> np.ndarray:
    """Lexicographically smallest perfect matching within the tight-edge graph.

    Every optimal matching uses only edges whose reduced cost is zero under
    the optimal duals, so restricting the search to (near-)tight edges keeps
    optimality while the greedy column choice pins the tie-break.
    """
    n = cost.shape[0]
    reduced = cost - u[:, None] - v[None, :]
    tol = 1e-9 * max(1.0, float(np.abs(cost).max()))
    tight = reduced <= tol
    tight[np.arange(n), col4row] = True  # guard against float drift on matched edges
    adj = [np.flatnonzero(tight[i]) for i in range(n)]

    match_col = col4row.copy()
    match_row = row4col.copy()
    fixed = np.zeros(n, dtype=bool)

    def rematch(row: int, target: int, visited: np.ndarray) -> bool:
        for c in adj[row]:
            c = int(c)
            if fixed[c] or visited[c]:
                continue
            visited[c] = True
            if c == target or rematch(int(match_row[c]), target, visited):
                match_row[c] = row
                match_col[row] = c
                return True
        return False

    for i in range(n):
        current = int(match_col[i])
        chosen = current
        for c in adj[i]:
            c = int(c)
            if c >= current:
                break
            if fixed[c]:
                continue
            owner = int(match_row[c])
            visited = np.zeros(n, dtype=bool)
            visited[c] = True
            if rematch(owner, current, visited):
                match_row[c] = i
                match_col[i] = c
                chosen = c
                break
        fixed[chosen] = True
    return match_col
