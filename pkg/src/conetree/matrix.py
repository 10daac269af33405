"""Substitution matrices and their axioms.

Convention: ``entries[l, k]`` is the number of forward neighbours of label
``l`` attached to every vertex of label ``k``.  Column ``k`` is therefore the
offspring census of a label-``k`` vertex; :attr:`SubstitutionMatrix.children`
is the transpose, indexed ``children[k, l]``.
"""
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import MalformedInputError


@dataclass(frozen=True)
class SubstitutionMatrix:
    entries: np.ndarray
    names: Tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        arr = _as_integer_square(self.entries)
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)
        if not self.names:
            object.__setattr__(self, "names", tuple(str(i) for i in range(arr.shape[0])))
        elif len(self.names) != arr.shape[0]:
            raise MalformedInputError(
                f"{len(self.names)} label names for a {arr.shape[0]}x{arr.shape[0]} matrix"
            )

    @property
    def label_count(self) -> int:
        return self.entries.shape[0]

    @property
    def children(self) -> np.ndarray:
        """``children[k, l]``: label-``l`` offspring of a label-``k`` vertex."""
        return self.entries.T

    @property
    def out_degree(self) -> np.ndarray:
        """Number of forward neighbours per label (column sums)."""
        return self.entries.sum(axis=0)

    def label_index(self, label) -> int:
        if isinstance(label, (int, np.integer)):
            if not 0 <= label < self.label_count:
                raise MalformedInputError(f"label index {label} out of range")
            return int(label)
        try:
            return self.names.index(label)
        except ValueError:
            raise MalformedInputError(f"unknown label {label!r}") from None

    def is_regular(self) -> bool:
        """True when every vertex has the same number of forward neighbours."""
        deg = self.out_degree
        return bool(np.all(deg == deg[0]))

    def key(self) -> bytes:
        return self.entries.tobytes() + bytes([self.label_count])


def _as_integer_square(entries) -> np.ndarray:
    arr = np.asarray(entries)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise MalformedInputError(f"substitution matrix must be square, got shape {arr.shape}")
    if arr.dtype.kind == "f":
        if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
            raise MalformedInputError("substitution matrix entries must be integers")
    elif arr.dtype.kind not in "iub":
        raise MalformedInputError(f"substitution matrix has non-integer dtype {arr.dtype}")
    arr = arr.astype(np.int64)
    if np.any(arr < 0):
        raise MalformedInputError("substitution matrix entries must be nonnegative")
    return arr


@dataclass(frozen=True)
class ValidationReport:
    m0: bool
    m1: bool
    m2: bool
    m2_witness: Optional[Tuple[int, int]] = None
    m1_witness: Optional[int] = None

    @property
    def ok(self) -> bool:
        return self.m0 and self.m1 and self.m2

    def lines(self):
        yield "M0 not one-dimensional: " + ("pass" if self.m0 else "FAIL")
        msg = "pass" if self.m1 else f"FAIL (M[{self.m1_witness},{self.m1_witness}] = 0)"
        yield "M1 positive diagonal: " + msg
        msg = "pass" if self.m2 else f"FAIL (zero entry at {self.m2_witness} of M^n)"
        yield "M2 primitivity: " + msg


def _bool_power(pattern: np.ndarray, n: int) -> np.ndarray:
    out = np.eye(pattern.shape[0], dtype=bool)
    for _ in range(n):
        out = (out.astype(np.int64) @ pattern.astype(np.int64)) > 0
    return out


def validate_matrix(M) -> ValidationReport:
    """Check axioms M0 (not one-dimensional), M1 (positive diagonal) and
    M2 (primitivity).

    ``M`` may be a :class:`SubstitutionMatrix` or anything array-like;
    non-square or negative input raises :class:`MalformedInputError`.
    """
    arr = M.entries if isinstance(M, SubstitutionMatrix) else _as_integer_square(M)
    n = arr.shape[0]
    m0 = n > 1 or arr[0, 0] >= 2
    diag = np.diagonal(arr)
    m1 = bool(np.all(diag >= 1))
    m1_witness = None if m1 else int(np.flatnonzero(diag < 1)[0])

    pattern = arr > 0
    # Wielandt's bound makes the check exact even when M1 fails.
    horizon = n if m1 else (n - 1) ** 2 + 1
    power = np.eye(n, dtype=bool)
    m2 = False
    for _ in range(horizon):
        power = (power.astype(np.int64) @ pattern.astype(np.int64)) > 0
        if power.all():
            m2 = True
            break
    witness = None
    if not m2:
        zeros = np.argwhere(~_bool_power(pattern, n))
        witness = (int(zeros[0, 0]), int(zeros[0, 1]))
    return ValidationReport(m0=bool(m0), m1=m1, m2=m2, m2_witness=witness, m1_witness=m1_witness)


def primitivity_exponent(M) -> Optional[int]:
    """Least ``n <= label_count`` with ``M**n`` entrywise positive, else None."""
    arr = M.entries if isinstance(M, SubstitutionMatrix) else _as_integer_square(M)
    pattern = arr > 0
    power = np.eye(arr.shape[0], dtype=bool)
    for n in range(1, arr.shape[0] + 1):
        power = (power.astype(np.int64) @ pattern.astype(np.int64)) > 0
        if power.all():
            return n
    return None


def substitution_matrix(rows: Sequence[Sequence[int]], names=(), validate=True) -> SubstitutionMatrix:
    """Build a :class:`SubstitutionMatrix`, raising if any axiom fails."""
    M = SubstitutionMatrix(np.asarray(rows), tuple(names))
    if validate:
        report = validate_matrix(M)
        if not report.ok:
            raise MalformedInputError("; ".join(report.lines()))
    return M


def sphere_counts(M: SubstitutionMatrix, root_label, n: int) -> Tuple[int, ...]:
    """Per-label census of the ``n``-sphere of ``T(M, root_label)``.

    Exact integer arithmetic: counts grow geometrically.
    """
    if n < 0:
        raise MalformedInputError("sphere index must be nonnegative")
    j = M.label_index(root_label)
    rows = [[int(x) for x in row] for row in M.entries]
    c = [0] * M.label_count
    c[j] = 1
    for _ in range(n):
        c = [sum(r[k] * c[k] for k in range(len(c))) for r in rows]
    return tuple(c)


FIBONACCI = ((2, 1), (1, 1))
