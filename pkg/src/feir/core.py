"""Shared data model: score matrices, stochastic policies, count matrices, and
the deterministic/probabilistic bridge (row softmax, top-k rounding, multinomial
sampling).

All matrix containers are immutable after construction and safe to share across
threads. Randomized operations take an explicit seed and own their generator;
there is no module-level RNG state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ROW_SUM_TOL = 1e-9


class MatrixFormatError(ValueError):
    """Malformed matrix file: empty, ragged rows, or unparseable tokens."""


class DimensionError(ValueError):
    """Matrix dimensions do not match what the caller declared."""


class NumericError(ValueError):
    """An operation received non-finite input."""


def load_matrix(path, expected_dims: tuple[int, int] | None = None) -> np.ndarray:
    """Read a headerless CSV of decimal values into a 2-D float array.

    Every row must have the same number of comma-separated fields. Raises
    MatrixFormatError (with the offending row/column) for ragged or
    non-numeric input and DimensionError when `expected_dims` is given and
    does not match.
    """
    path = Path(path)
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for r, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            parsed = []
            for c, token in enumerate(fields):
                try:
                    parsed.append(float(token))
                except ValueError:
                    raise MatrixFormatError(
                        f"{path}: non-numeric token {token!r} at row {r}, column {c}"
                    ) from None
            if rows and len(parsed) != len(rows[0]):
                raise MatrixFormatError(
                    f"{path}: ragged row {r} has {len(parsed)} fields, expected {len(rows[0])}"
                )
            rows.append(parsed)
    if not rows:
        raise MatrixFormatError(f"{path}: empty matrix file")
    M = np.array(rows, dtype=float)
    if expected_dims is not None and M.shape != tuple(expected_dims):
        raise DimensionError(
            f"{path}: expected {expected_dims[0]}x{expected_dims[1]}, got {M.shape[0]}x{M.shape[1]}"
        )
    return M


def save_matrix(matrix, path) -> None:
    """Write a matrix as headerless CSV with full float round-trip precision."""
    M = np.asarray(matrix)
    if M.ndim != 2 or M.size == 0:
        raise ValueError("save_matrix requires a non-empty 2-D matrix")
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for row in M:
            fh.write(",".join(format(v, ".17g") for v in row))
            fh.write("\n")


def write_sidecar(matrix_path, m: int, n: int, k=None, seed=None, generator=None) -> Path:
    """Write the optional JSON sidecar (same stem, .meta.json) recording provenance."""
    meta_path = Path(matrix_path).with_suffix(".meta.json")
    payload = {"m": int(m), "n": int(n), "k": k, "seed": seed, "generator": generator}
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    return meta_path


def read_sidecar(matrix_path) -> dict | None:
    meta_path = Path(matrix_path).with_suffix(".meta.json")
    if not meta_path.exists():
        return None
    with open(meta_path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _frozen_copy(arr, dtype=float) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ScorePair:
    """Utility matrix U (item value to each user) and suitability matrix S
    (user competitiveness for each item), both m x n with entries strictly
    inside (0, 1). `shared` marks the common case S is U.
    """

    U: np.ndarray
    S: np.ndarray
    shared: bool = False

    def __post_init__(self):
        U = _frozen_copy(self.U)
        S = _frozen_copy(self.S)
        if U.ndim != 2:
            raise DimensionError("U must be 2-D")
        if U.shape != S.shape:
            raise DimensionError(f"U is {U.shape}, S is {S.shape}")
        for name, M in (("U", U), ("S", S)):
            if not np.all(np.isfinite(M)):
                raise NumericError(f"{name} contains non-finite entries")
            if np.any(M <= 0.0) or np.any(M >= 1.0):
                bad = np.argwhere((M <= 0.0) | (M >= 1.0))[0]
                raise ValueError(
                    f"{name}[{bad[0]},{bad[1]}] = {M[bad[0], bad[1]]} outside the open interval (0, 1)"
                )
        if self.shared and not np.array_equal(U, S):
            raise ValueError("shared=True requires S and U to be element-wise equal")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "S", S)

    @classmethod
    def single(cls, scores) -> "ScorePair":
        """Build a pair where one matrix serves as both utility and suitability."""
        return cls(U=scores, S=scores, shared=True)

    @property
    def m(self) -> int:
        return self.U.shape[0]

    @property
    def n(self) -> int:
        return self.U.shape[1]


def load_scores(u_path, s_path=None, expected_dims=None) -> ScorePair:
    """Load a ScorePair from CSV file(s); one path means shared U = S.

    Range enforcement happens here: entries outside (0, 1) are rejected, not
    clamped, so upstream scoring bugs surface immediately.
    """
    U = load_matrix(u_path, expected_dims)
    if s_path is None:
        return ScorePair.single(U)
    S = load_matrix(s_path, expected_dims)
    return ScorePair(U=U, S=S, shared=False)


@dataclass(frozen=True)
class Policy:
    """Row-stochastic m x n matrix of recommendation probabilities plus the
    list length k. Row i is the parameter vector of user i's multinomial."""

    P: np.ndarray
    k: int

    def __post_init__(self):
        P = _frozen_copy(self.P)
        if P.ndim != 2:
            raise DimensionError("P must be 2-D")
        if not np.all(np.isfinite(P)):
            raise NumericError("P contains non-finite entries")
        if np.any(P < -1e-12) or np.any(P > 1.0 + 1e-12):
            raise ValueError("P entries must lie in [0, 1]")
        row_sums = P.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > ROW_SUM_TOL):
            worst = int(np.argmax(np.abs(row_sums - 1.0)))
            raise ValueError(
                f"row {worst} sums to {row_sums[worst]!r}, not 1 within {ROW_SUM_TOL}"
            )
        if not (1 <= self.k <= P.shape[1]):
            raise ValueError(f"k={self.k} outside [1, {P.shape[1]}]")
        object.__setattr__(self, "P", P)

    @property
    def m(self) -> int:
        return self.P.shape[0]

    @property
    def n(self) -> int:
        return self.P.shape[1]


@dataclass(frozen=True)
class CountMatrix:
    """Integer m x n matrix whose row i counts how often each item appears in
    user i's k-item recommendation list; every row sums to exactly k."""

    C: np.ndarray
    k: int

    def __post_init__(self):
        C = np.array(self.C, copy=True)
        if C.ndim != 2:
            raise DimensionError("C must be 2-D")
        if not np.issubdtype(C.dtype, np.integer):
            if not np.all(C == np.round(C)):
                raise ValueError("C entries must be integers")
            C = C.astype(np.int64)
        if np.any(C < 0):
            raise ValueError("C entries must be non-negative")
        row_sums = C.sum(axis=1)
        if np.any(row_sums != self.k):
            worst = int(np.argmax(row_sums != self.k))
            raise ValueError(f"row {worst} sums to {row_sums[worst]}, expected k={self.k}")
        C.setflags(write=False)
        object.__setattr__(self, "C", C)

    @property
    def m(self) -> int:
        return self.C.shape[0]

    @property
    def n(self) -> int:
        return self.C.shape[1]

    def is_binary(self) -> bool:
        return bool(np.all((self.C == 0) | (self.C == 1)))


def row_softmax(Z) -> np.ndarray:
    """Row-wise softmax with row-max subtraction as the overflow guard.

    Adding a constant to a row leaves the output unchanged, so the transform
    preserves within-row ordering.
    """
    Z = np.asarray(Z, dtype=float)
    if not np.all(np.isfinite(Z)):
        raise NumericError("softmax input contains non-finite entries")
    shifted = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(shifted)
    return E / E.sum(axis=1, keepdims=True)


def top_k(P, k: int) -> CountMatrix:
    """Deterministic rounding: mark the k largest entries of each row with 1.

    Ties break toward the lowest column index so results are reproducible.
    """
    M = P.P if isinstance(P, Policy) else np.asarray(P, dtype=float)
    m, n = M.shape
    if not (1 <= k <= n):
        raise ValueError(f"k={k} outside [1, {n}]")
    # stable sort on negated values keeps the lowest index first among ties
    order = np.argsort(-M, axis=1, kind="stable")[:, :k]
    C = np.zeros((m, n), dtype=np.int64)
    np.put_along_axis(C, order, 1, axis=1)
    return CountMatrix(C=C, k=k)


def sample_recommendations(policy: Policy, k: int | None = None, seed: int = 0) -> CountMatrix:
    """Draw each user's list as k independent rolls of their n-sided die.

    Row i of the result is one multinomial(k, P[i]) sample; repeats are
    possible and show up as counts above 1. Deterministic for a given seed.
    """
    if k is None:
        k = policy.k
    rng = np.random.default_rng(seed)
    P = policy.P / policy.P.sum(axis=1, keepdims=True)  # exact simplex for the sampler
    C = rng.multinomial(k, P)
    return CountMatrix(C=C, k=k)
