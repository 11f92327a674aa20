"""Signature data, the Hermitian pairing and the trace operator.

The pairing is <x, y> = sum_k eps_k x^k conj(y^k) with eps_k = +1 for
k <= e and -1 for k > e; the trace operator is the matching signature
Laplacian sum_k eps_k d^2/dz^k dzbar^k.  Both act exactly on BigradedSeries.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import DimensionMismatch
from .scalar import ONE, ZERO, Scalar
from .series import BigradedSeries


@dataclass(frozen=True)
class Signature:
    """Ambient dimension n and index e of the Hermitian form."""

    n: int
    e: int

    def __post_init__(self):
        if self.n < 1:
            raise DimensionMismatch("n must be positive")
        if not (2 * self.e >= self.n and self.e <= self.n):
            raise DimensionMismatch(f"need n/2 <= e <= n, got n={self.n}, e={self.e}")

    def eps(self, k: int) -> int:
        """Sign of the k-th basis direction (0-based)."""
        return 1 if k < self.e else -1

    def eps_list(self) -> list[int]:
        return [self.eps(k) for k in range(self.n)]

    def to_obj(self) -> dict:
        return {"n": self.n, "e": self.e}

    @staticmethod
    def from_obj(obj: dict) -> "Signature":
        return Signature(int(obj["n"]), int(obj["e"]))


def eta_matrix(sig: Signature):
    """diag(eps) as an exact matrix."""
    from . import linalg

    return tuple(
        tuple(Scalar(sig.eps(i)) if i == j else ZERO for j in range(sig.n))
        for i in range(sig.n)
    )


def levi_form(sig: Signature, W: int) -> BigradedSeries:
    """The type-(1,1) series sum_k eps_k z^k zbar^k."""
    if W < 2:
        raise DimensionMismatch("weight cap below 2 cannot hold the Levi form")
    n = sig.n
    terms = {}
    for k in range(n):
        key = [0] * (2 * n + 1)
        key[k] = 1
        key[n + k] = 1
        terms[tuple(key)] = Scalar(sig.eps(k))
    return BigradedSeries(n, W, terms)


def levi_pair(sig: Signature, x: Sequence[Scalar], y: Sequence[Scalar]) -> Scalar:
    """<x, y>: linear in x, conjugate-linear in y."""
    if len(x) != sig.n or len(y) != sig.n:
        raise DimensionMismatch("vectors must have length n")
    total = ZERO
    for k in range(sig.n):
        term = Scalar.of(x[k]) * Scalar.of(y[k]).conjugate()
        total = total + (term if sig.eps(k) > 0 else -term)
    return total


def delta(sig: Signature, F: BigradedSeries) -> BigradedSeries:
    """The trace operator sum_k eps_k d^2 F / dz^k dzbar^k."""
    n = F.dim
    if n != sig.n:
        raise DimensionMismatch("signature dimension does not match the series")
    out: dict = {}
    for key, c in F.terms.items():
        for k in range(n):
            a = key[k]
            b = key[n + k]
            if a and b:
                nk = list(key)
                nk[k] = a - 1
                nk[n + k] = b - 1
                nk = tuple(nk)
                f = c * (a * b * sig.eps(k))
                prev = out.get(nk)
                s = f if prev is None else prev + f
                if s.is_zero():
                    out.pop(nk, None)
                else:
                    out[nk] = s
    return BigradedSeries._raw(n, F.weight_cap, out)


def delta_pow(sig: Signature, F: BigradedSeries, k: int) -> BigradedSeries:
    if k < 0:
        raise DimensionMismatch("delta power must be nonnegative")
    out = F
    for _ in range(k):
        out = delta(sig, out)
    return out


def hermitian_series(sig: Signature, A, W: int) -> BigradedSeries:
    """<Az, z> = sum_k eps_k (Az)^k zbar^k as a type-(1,1) series."""
    n = sig.n
    terms: dict = {}
    for k in range(n):
        for i in range(n):
            c = Scalar.of(A[k][i])
            if c.is_zero():
                continue
            key = [0] * (2 * n + 1)
            key[i] += 1
            key[n + k] += 1
            key = tuple(key)
            c = c if sig.eps(k) > 0 else -c
            prev = terms.get(key)
            s = c if prev is None else prev + c
            if s.is_zero():
                terms.pop(key, None)
            else:
                terms[key] = s
    return BigradedSeries._raw(n, W, terms)


def pair_vector_series(sig: Signature, p: Sequence[Scalar], W: int) -> BigradedSeries:
    """<p, z> = sum_k eps_k p^k zbar^k for a constant vector p."""
    n = sig.n
    terms = {}
    for k in range(n):
        c = Scalar.of(p[k])
        if c.is_zero():
            continue
        key = [0] * (2 * n + 1)
        key[n + k] = 1
        terms[tuple(key)] = c if sig.eps(k) > 0 else -c
    return BigradedSeries._raw(n, W, terms)


def form_matrix_at_order(F11: BigradedSeries, m: int):
    """Coefficient matrix Phi with Phi[i][j] = coeff of z^i zbar^j u^m."""
    n = F11.dim
    rows = []
    for i in range(n):
        row = []
        for j in range(n):
            key = [0] * (2 * n + 1)
            key[i] = 1
            key[n + j] = 1
            key[2 * n] = m
            row.append(F11.coeff(tuple(key)))
        rows.append(tuple(row))
    return tuple(rows)
