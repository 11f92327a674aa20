"""Small dense exact linear algebra over Scalar.

Matrices are tuples of tuples of Scalar (immutable); vectors are tuples.
Sizes here are tiny (n+2 at most), so naive Gaussian elimination is fine.
The module also provides truncated matrix power series in one real/holo
variable, used for the E(u)/U(u) stages.
"""

from __future__ import annotations

from typing import Sequence

from .errors import DegeneracyError
from .scalar import ONE, ZERO, Scalar

Matrix = tuple  # tuple[tuple[Scalar, ...], ...]
Vector = tuple  # tuple[Scalar, ...]


def as_matrix(rows) -> Matrix:
    return tuple(tuple(Scalar.of(x) for x in row) for row in rows)


def as_vector(xs) -> Vector:
    return tuple(Scalar.of(x) for x in xs)


def identity(n: int) -> Matrix:
    return tuple(tuple(ONE if i == j else ZERO for j in range(n)) for i in range(n))


def zeros(n: int, m: int | None = None) -> Matrix:
    m = n if m is None else m
    return tuple(tuple(ZERO for _ in range(m)) for _ in range(n))


def mat_add(a: Matrix, b: Matrix) -> Matrix:
    return tuple(tuple(x + y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def mat_sub(a: Matrix, b: Matrix) -> Matrix:
    return tuple(tuple(x - y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def mat_scale(a: Matrix, c: Scalar) -> Matrix:
    return tuple(tuple(c * x for x in row) for row in a)


def mat_mul(a: Matrix, b: Matrix) -> Matrix:
    p = len(b)
    q = len(b[0])
    return tuple(
        tuple(sum((row[k] * b[k][j] for k in range(p)), ZERO) for j in range(q))
        for row in a
    )


def mat_vec(a: Matrix, v: Vector) -> Vector:
    return tuple(sum((row[k] * v[k] for k in range(len(v))), ZERO) for row in a)


def transpose(a: Matrix) -> Matrix:
    return tuple(tuple(a[i][j] for i in range(len(a))) for j in range(len(a[0])))


def conj_mat(a: Matrix) -> Matrix:
    return tuple(tuple(x.conjugate() for x in row) for row in a)


def adjoint(a: Matrix) -> Matrix:
    return transpose(conj_mat(a))


def trace(a: Matrix) -> Scalar:
    return sum((a[i][i] for i in range(len(a))), ZERO)


def mat_eq(a: Matrix, b: Matrix) -> bool:
    return all(x == y for ra, rb in zip(a, b) for x, y in zip(ra, rb))


def is_zero_mat(a: Matrix) -> bool:
    return all(x.is_zero() for row in a for x in row)


def solve(a: Matrix, rhs: Sequence[Vector]) -> list[Vector]:
    """Solve a X_j = rhs_j for several right-hand-side vectors at once."""
    n = len(a)
    m = len(rhs)
    aug = [list(a[i]) + [rhs[j][i] for j in range(m)] for i in range(n)]
    for col in range(n):
        piv = next((r for r in range(col, n) if not aug[r][col].is_zero()), None)
        if piv is None:
            raise DegeneracyError("linear solve", "singular matrix")
        aug[col], aug[piv] = aug[piv], aug[col]
        inv = ONE / aug[col][col]
        aug[col] = [x * inv for x in aug[col]]
        for r in range(n):
            if r != col and not aug[r][col].is_zero():
                f = aug[r][col]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[col])]
    return [tuple(aug[i][n + j] for i in range(n)) for j in range(m)]


def mat_inv(a: Matrix) -> Matrix:
    n = len(a)
    cols = solve(a, [tuple(ONE if i == j else ZERO for i in range(n)) for j in range(n)])
    return tuple(tuple(cols[j][i] for j in range(n)) for i in range(n))


def hermitian_signature(a: Matrix) -> tuple[int, int, int]:
    """(positive, negative, zero) inertia of an exact Hermitian matrix.

    Congruence diagonalization with the standard fix-up when a diagonal
    pivot vanishes but the matrix does not.
    """
    n = len(a)
    m = [list(row) for row in a]

    def _congruence_step(k: int):
        # make m[k][k] nonzero by a congruence if possible
        if not m[k][k].is_zero():
            return True
        for j in range(k + 1, n):
            if not m[k][j].is_zero():
                # row/col combination: e_k <- e_k + e_j scaled to make pivot real nonzero
                c = m[k][j].conjugate()
                for t in range(n):
                    m[k][t] = m[k][t] + c * m[j][t]
                for t in range(n):
                    m[t][k] = m[t][k] + c.conjugate() * m[t][j]
                return True
        return False

    pos = neg = zero = 0
    for k in range(n):
        if not _congruence_step(k):
            zero += 1
            continue
        piv = m[k][k]
        if piv.im != 0:
            raise DegeneracyError("inertia", "matrix is not Hermitian")
        if piv.re > 0:
            pos += 1
        else:
            neg += 1
        for r in range(k + 1, n):
            f = m[r][k] / piv
            for t in range(n):
                m[r][t] = m[r][t] - f * m[k][t]
            for t in range(n):
                m[t][r] = m[t][r] - f.conjugate() * m[t][k]
    return pos, neg, zero


# -- truncated matrix power series ------------------------------------------
#
# A MatSeries is a list of Matrix coefficients [M0, M1, ...] in one variable t
# of weight 2 (u or w); entries beyond the list are zero.  ``kmax`` is the
# largest retained power.


def mats_trim(ms: list, kmax: int) -> list:
    return [ms[k] if k < len(ms) else None for k in range(kmax + 1)]


def mats_mul(a: list, b: list, kmax: int) -> list:
    n = len(a[0])
    out = []
    for k in range(kmax + 1):
        acc = zeros(n)
        for i in range(k + 1):
            if i < len(a) and k - i < len(b):
                acc = mat_add(acc, mat_mul(a[i], b[k - i]))
        out.append(acc)
    return out


def mats_inv(a: list, kmax: int) -> list:
    n = len(a[0])
    inv0 = mat_inv(a[0])
    out = [inv0]
    for k in range(1, kmax + 1):
        acc = zeros(n)
        for j in range(k):
            if k - j < len(a):
                acc = mat_add(acc, mat_mul(a[k - j], out[j]))
        out.append(mat_scale(mat_mul(inv0, acc), Scalar(-1)))
    return out


def mats_deriv(a: list) -> list:
    return [mat_scale(a[k], Scalar(k)) for k in range(1, len(a))] or [zeros(len(a[0]))]


def mats_conj(a: list) -> list:
    return [conj_mat(m) for m in a]


def mats_eval(a: list, t: Scalar) -> Matrix:
    n = len(a[0])
    acc = zeros(n)
    p = ONE
    for m in a:
        acc = mat_add(acc, mat_scale(m, p))
        p = p * t
    return acc
