"""Chains: transversality, the explicit hyperquadric chain ODE, and curve
jets through the normalization obstruction.

A chain is written in graph form z = p(mu), w = mu + i F(p, pbar, mu) with
the distinguished parameter mu.  On the hyperquadric the second-order ODE
for p is explicit and is integrated numerically (classical RK4) or solved
as an exact power series; on a general surface the jet of the chain is the
unique curve killing the second-trace obstruction of the pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneracyError, DimensionMismatch, PoleError
from .levi import Signature
from .normalize import HypersurfaceJet, solve_chain_jet
from .scalar import ONE, QQ, Scalar, ZERO
from .series import (
    BigradedSeries,
    HoloSeries,
    upoly_add,
    upoly_conj,
    upoly_inv,
    upoly_mul,
    upoly_scale,
    upoly_trim,
)

SINGULAR_DENOMINATOR = 1e-8


def transversality_check(F: BigradedSeries, p1, q1) -> bool:
    """Whether a curve with tangent (p1, q1) at 0 is transversal to the
    complex tangent hyperplane.

    Requires the normalized presentation F|0 = F_z|0 = F_zbar|0 = 0; the
    criterion is then Re q1 != 0, since the normalization factor
    1/(1 + (dF/du|0)^2) never vanishes.  ``p1`` does not enter under these
    hypotheses and is accepted only to mirror the tangent data.
    """
    n = F.dim
    zk = (0,) * (2 * n + 1)
    if not F.coeff(zk).is_zero():
        raise DegeneracyError("transversality", "F must vanish at the origin")
    for i in range(n):
        kz = [0] * (2 * n + 1)
        kz[i] = 1
        kzb = [0] * (2 * n + 1)
        kzb[n + i] = 1
        if not (F.coeff(tuple(kz)).is_zero() and F.coeff(tuple(kzb)).is_zero()):
            raise DegeneracyError("transversality", "F_z and F_zbar must vanish at the origin")
    q1 = Scalar.of(q1)
    return not q1.re == 0


def _pair_np(sig: Signature, x: np.ndarray, y: np.ndarray) -> complex:
    eps = np.array(sig.eps_list(), dtype=np.float64)
    return complex(np.sum(eps * x * np.conj(y)))


def hyperquadric_chain_rhs(sig: Signature, p: np.ndarray, dp: np.ndarray) -> np.ndarray:
    """Right-hand side p'' of the chain equation on v = <z, z>."""
    p = np.asarray(p, dtype=np.complex128)
    dp = np.asarray(dp, dtype=np.complex128)
    if p.shape != (sig.n,) or dp.shape != (sig.n,):
        raise DimensionMismatch("p and p' must be length-n complex vectors")
    s = _pair_np(sig, p, dp)          # <p, p'>
    sc = _pair_np(sig, dp, p)         # <p', p>
    d1 = 1.0 + 1j * s - 1j * sc
    d2 = 1.0 + 2j * s - 2j * sc
    if abs(d1) < SINGULAR_DENOMINATOR or abs(d2) < SINGULAR_DENOMINATOR:
        raise PoleError("chain denominator vanished")
    num = 2j * _pair_np(sig, dp, dp) * (1.0 + 3j * s - 1j * sc)
    return dp * (num / (d1 * d2))


@dataclass
class ChainTrajectory:
    """Numeric samples (mu, p(mu), w(mu)) of a chain in graph form."""

    sig: Signature
    a: np.ndarray
    mus: np.ndarray
    p: np.ndarray          # shape (N, n)
    w: np.ndarray          # shape (N,)
    step: float
    singular: bool = False

    def line_residuals(self) -> np.ndarray:
        """Euclidean distance of each sample from the complex line a*w."""
        return np.linalg.norm(self.p - np.outer(self.w, self.a), axis=1)

    def to_csv(self) -> str:
        n = self.sig.n
        cols = ["mu"]
        for k in range(1, n + 1):
            cols += [f"re_p{k}", f"im_p{k}"]
        cols += ["re_w", "im_w", "line_residual"]
        lines = [",".join(cols)]
        res = self.line_residuals()
        for i in range(len(self.mus)):
            row = [repr(float(self.mus[i]))]
            for k in range(n):
                row += [repr(float(self.p[i, k].real)), repr(float(self.p[i, k].imag))]
            row += [repr(float(self.w[i].real)), repr(float(self.w[i].imag)), repr(float(res[i]))]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def integrate_chain(sig: Signature, a, mu_max: float, h: float) -> ChainTrajectory:
    """Classical RK4 trajectory of the hyperquadric chain with p'(0) = a.

    Integrates the second-order equation as a first-order system in
    (p, p'); w is filled in from the graph relation w = mu + i<p, p>.
    Aborts cleanly (partial trajectory, singular flag) when a denominator
    factor falls below 1e-8 in modulus.
    """
    if h <= 0:
        raise DimensionMismatch("step size must be positive")
    a = np.asarray(a, dtype=np.complex128)
    if a.shape != (sig.n,):
        raise DimensionMismatch("initial velocity must be a length-n complex vector")
    n = sig.n

    def rhs(y: np.ndarray) -> np.ndarray:
        return np.concatenate([y[n:], hyperquadric_chain_rhs(sig, y[:n], y[n:])])

    steps = int(round(mu_max / h))
    y = np.concatenate([np.zeros(n, dtype=np.complex128), a])
    mus = [0.0]
    ps = [y[:n].copy()]
    singular = False
    for k in range(steps):
        try:
            k1 = rhs(y)
            k2 = rhs(y + 0.5 * h * k1)
            k3 = rhs(y + 0.5 * h * k2)
            k4 = rhs(y + h * k3)
        except PoleError:
            singular = True
            break
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        mus.append((k + 1) * h)
        ps.append(y[:n].copy())
    mus = np.array(mus)
    p = np.array(ps)
    eps = np.array(sig.eps_list(), dtype=np.float64)
    w = mus + 1j * np.sum(eps * p * np.conj(p), axis=1).real
    return ChainTrajectory(sig, a, mus, p, w, h, singular)


def chain_series(sig: Signature, a, W: int) -> tuple:
    """Exact Taylor coefficients of the hyperquadric chain to u-order W.

    Returns an n-vector of HoloSeries in w alone (weight cap 2W), solved by
    reading off p'' from the chain equation order by order in exact
    rational arithmetic.
    """
    n = sig.n
    a = [Scalar.of(x) for x in a]
    if len(a) != n:
        raise DimensionMismatch("initial velocity must have n components")
    kmax = W
    # p[i] is the coefficient list of p^i(u); start with p = a u
    p = [[ZERO, a[i]] for i in range(n)]
    for k in range(1, kmax):
        # dp and p known to the orders needed for the u^(k-1) coefficient
        dp = [upoly_trim([c * (m + 1) for m, c in enumerate(pi[1:])]) for pi in p]
        s = _pair_series(sig, p, dp, k)        # <p, p'>
        sc = _pair_series(sig, dp, p, k)       # <p', p>
        i_ = Scalar(0, 1)
        d1 = upoly_add([ONE], upoly_add(upoly_scale(s, i_), upoly_scale(sc, -i_)))
        d2 = upoly_add([ONE], upoly_add(upoly_scale(s, Scalar(0, 2)), upoly_scale(sc, Scalar(0, -2))))
        dpdp = _pair_series(sig, dp, dp, k)
        numf = upoly_add([ONE], upoly_add(upoly_scale(s, Scalar(0, 3)), upoly_scale(sc, -i_)))
        den = upoly_inv(upoly_mul(d1, d2, k), k)
        scal = upoly_mul(upoly_mul(upoly_scale(dpdp, Scalar(0, 2)), numf, k), den, k)
        for i in range(n):
            rhs_i = upoly_mul(dp[i], scal, k)
            c = rhs_i[k - 1] if len(rhs_i) > k - 1 else ZERO
            # p''_(k-1) = k (k+1) p_(k+1)
            p[i].append(c / Scalar(k * (k + 1)))
    out = []
    for i in range(n):
        out.append(HoloSeries.from_w_poly(n, 2 * W, p[i][: W + 1]))
    return tuple(out)


def _pair_series(sig: Signature, x, y, kmax: int):
    acc: list = []
    for i in range(sig.n):
        t = upoly_mul(x[i], upoly_conj(y[i]), kmax)
        acc = upoly_add(acc, t if sig.eps(i) > 0 else upoly_scale(t, Scalar(-1)))
    return acc


def general_chain_jet(F: BigradedSeries, a, W: int, sig: Signature | None = None) -> tuple:
    """Jet of the unique chain with p'(0) = a on v = F(z, zbar, u).

    The curve is the one straightened by the normalization pipeline: its
    coefficients are solved order by order so the second trace of the
    transformed (2,3) component vanishes identically to weight W.  The
    signature is read from the leading (1,1) part when not supplied.
    """
    n = F.dim
    if sig is None:
        # leading form must be +/-1 diagonal to infer the signature
        e = 0
        for i in range(n):
            key = [0] * (2 * n + 1)
            key[i] = 1
            key[n + i] = 1
            c = F.coeff(tuple(key))
            if c == Scalar(1):
                e += 1
            elif c != Scalar(-1):
                raise DegeneracyError("chain jet", "cannot infer the signature; pass sig explicitly")
        sig = Signature(n, e)
    jet = HypersurfaceJet(sig, F.truncate(W))
    p, _state = solve_chain_jet(jet, a, W)
    return p
