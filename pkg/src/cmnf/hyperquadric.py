"""The isotropy group H of the hyperquadric v = <z, z>.

Elements are sigma = (C, a, rho, r) with <Cz, Cz> = rho <z, z>, rho != 0 and
rho, r real.  They act by the fractional-linear maps

    z* = C(z - a w) / (1 + 2i<z, a> - w (r + i<a, a>))
    w* = rho w     / (1 + 2i<z, a> - w (r + i<a, a>))

and are represented faithfully by (n+2) x (n+2) matrices acting on the
homogeneous column (w, z, 1), dehomogenized by the last component.  The
matrix representation is the source of truth for composition.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from . import linalg
from .errors import DimensionMismatch, GroupPatternError, PoleError
from .levi import Signature, eta_matrix, levi_pair
from .scalar import I, ONE, QQ, Scalar, ZERO, rat, rat_str
from .series import HoloSeries, MapJet, VSeries, holo_to_v, w_plus_minus_powers


@dataclass(frozen=True)
class GroupElement:
    """sigma = (C, a, rho, r) with eager validation of the Levi-isometry law."""

    sig: Signature
    C: tuple
    a: tuple
    rho: Scalar
    r: Scalar

    def __post_init__(self):
        n = self.sig.n
        object.__setattr__(self, "C", linalg.as_matrix(self.C))
        object.__setattr__(self, "a", linalg.as_vector(self.a))
        object.__setattr__(self, "rho", Scalar.of(self.rho))
        object.__setattr__(self, "r", Scalar.of(self.r))
        if len(self.C) != n or any(len(row) != n for row in self.C) or len(self.a) != n:
            raise DimensionMismatch("C must be n x n and a length n")
        if not (self.rho.is_real() and self.r.is_real()) or self.rho.is_zero():
            raise GroupPatternError("rho and r must be real with rho nonzero")
        eta = eta_matrix(self.sig)
        lhs = linalg.mat_mul(linalg.adjoint(self.C), linalg.mat_mul(eta, self.C))
        rhs = linalg.mat_scale(eta, self.rho)
        if not linalg.mat_eq(lhs, rhs):
            raise GroupPatternError("C is not a Levi isometry with multiplier rho")

    # -- helpers -------------------------------------------------------------

    def pair_aa(self) -> Scalar:
        return levi_pair(self.sig, self.a, self.a)

    def a_dagger(self) -> tuple:
        """Row vector (conj a^1 .. conj a^e, -conj a^(e+1) .. -conj a^n)."""
        out = []
        for k in range(self.sig.n):
            c = self.a[k].conjugate()
            out.append(c if self.sig.eps(k) > 0 else -c)
        return tuple(out)

    @staticmethod
    def identity(sig: Signature) -> "GroupElement":
        return GroupElement(sig, linalg.identity(sig.n), (ZERO,) * sig.n, ONE, ZERO)

    def is_identity(self) -> bool:
        return (
            linalg.mat_eq(self.C, linalg.identity(self.sig.n))
            and all(x.is_zero() for x in self.a)
            and self.rho == ONE
            and self.r == ZERO
        )

    # -- matrix representation -------------------------------------------------

    def to_matrix(self) -> tuple:
        n = self.sig.n
        Ca = linalg.mat_vec(self.C, self.a)
        adag = self.a_dagger()
        corner = -self.r - I * self.pair_aa()
        rows = [tuple([self.rho] + [ZERO] * (n + 1))]
        for i in range(n):
            rows.append(tuple([-Ca[i]] + list(self.C[i]) + [ZERO]))
        rows.append(tuple([corner] + [Scalar(0, 2) * x for x in adag] + [ONE]))
        return tuple(rows)

    @staticmethod
    def from_matrix(sig: Signature, M) -> "GroupElement":
        """Extract (C, a, rho, r) from a matrix in the H pattern; validate."""
        n = sig.n
        rho = M[0][0]
        if any(not M[0][1 + j].is_zero() for j in range(n + 1)):
            raise GroupPatternError("first row must be (rho, 0, ..., 0)")
        if not M[n + 1][n + 1] == ONE:
            raise GroupPatternError("bottom-right entry must be 1")
        if any(not M[1 + i][n + 1].is_zero() for i in range(n)):
            raise GroupPatternError("last column must vanish in the middle block")
        C = tuple(tuple(M[1 + i][1 + j] for j in range(n)) for i in range(n))
        mCa = tuple(M[1 + i][0] for i in range(n))
        a = tuple(-x for x in linalg.mat_vec(linalg.mat_inv(C), mCa))
        corner = M[n + 1][0]
        if not rho.is_real():
            raise GroupPatternError("rho must be real")
        aa = levi_pair(sig, a, a)
        r = -(corner + I * aa)
        if not r.is_real():
            raise GroupPatternError("corner entry is inconsistent with -r - i<a,a>")
        g = GroupElement(sig, C, a, rho, r)
        expect = g.to_matrix()
        if not linalg.mat_eq(expect, tuple(tuple(row) for row in M)):
            raise GroupPatternError("matrix does not lie in the H pattern")
        return g

    # -- group law ------------------------------------------------------------

    def compose(self, other: "GroupElement") -> "GroupElement":
        """Group law: (self . other) acts as self after other."""
        if self.sig != other.sig:
            raise DimensionMismatch("signatures differ")
        M = linalg.mat_mul(self.to_matrix(), other.to_matrix())
        return GroupElement.from_matrix(self.sig, M)

    def inverse(self) -> "GroupElement":
        M = linalg.mat_inv(self.to_matrix())
        # normalize so the bottom-right entry is exactly 1
        s = M[self.sig.n + 1][self.sig.n + 1]
        M = linalg.mat_scale(M, ONE / s)
        return GroupElement.from_matrix(self.sig, M)

    def decompose(self) -> tuple["GroupElement", "GroupElement"]:
        """(psi, phi) with psi = (id, a, 1, 0), phi = (C, 0, rho, r) and
        phi . psi = sigma."""
        n = self.sig.n
        psi = GroupElement(self.sig, linalg.identity(n), self.a, ONE, ZERO)
        phi = GroupElement(self.sig, self.C, (ZERO,) * n, self.rho, self.r)
        return psi, phi

    # -- the fractional-linear action ------------------------------------------

    def denominator_at(self, z: Sequence[Scalar], w: Scalar) -> Scalar:
        za = levi_pair(self.sig, z, self.a)
        return ONE + Scalar(0, 2) * za - w * (self.r + I * self.pair_aa())

    def apply_point(self, z: Sequence[Scalar], w: Scalar) -> tuple[tuple, Scalar]:
        z = linalg.as_vector(z)
        w = Scalar.of(w)
        den = self.denominator_at(z, w)
        if den.is_zero():
            raise PoleError("point lies on the pole hyperplane of the map")
        zmw = tuple(z[i] - self.a[i] * w for i in range(self.sig.n))
        num = linalg.mat_vec(self.C, zmw)
        zs = tuple(x / den for x in num)
        ws = self.rho * w / den
        return zs, ws

    def jet_of(self, W: int) -> MapJet:
        """Taylor jet of the fractional-linear map to weight W."""
        n = self.sig.n
        wvar = HoloSeries.w_var(n, W)
        # delta = 2i<z,a> - w(r + i<a,a>)
        adag = self.a_dagger()
        delta = HoloSeries.zero(n, W)
        for k in range(n):
            c = Scalar(0, 2) * adag[k]
            if not c.is_zero():
                delta = delta + HoloSeries.z_var(n, W, k).scale(c)
        delta = delta - wvar.scale(self.r + I * self.pair_aa())
        inv = (HoloSeries.one(n, W) + delta).inverse()
        zmw = []
        for i in range(n):
            comp = HoloSeries.z_var(n, W, i)
            if not self.a[i].is_zero():
                comp = comp - wvar.scale(self.a[i])
            zmw.append(comp)
        f = []
        for i in range(n):
            acc = HoloSeries.zero(n, W)
            for j in range(n):
                if not self.C[i][j].is_zero():
                    acc = acc + zmw[j].scale(self.C[i][j])
            f.append(acc * inv)
        g = wvar.scale(self.rho) * inv
        return MapJet(tuple(f), g)

    # -- encodings -------------------------------------------------------------

    def to_obj(self) -> dict:
        return {
            "C": [[x.to_pair() for x in row] for row in self.C],
            "a": [x.to_pair() for x in self.a],
            "rho": rat_str(self.rho.re),
            "r": rat_str(self.r.re),
        }

    @staticmethod
    def from_obj(sig: Signature, obj: dict) -> "GroupElement":
        C = [[Scalar.from_pair(x) for x in row] for row in obj["C"]]
        a = [Scalar.from_pair(x) for x in obj["a"]]
        return GroupElement(sig, C, a, Scalar(rat(obj["rho"])), Scalar(rat(obj["r"])))


def quadric_defect(sigma: GroupElement, W: int) -> VSeries:
    """Multiplier M with  Im g - <f, f> = (v - <z, z>) * M  for the jet of sigma.

    Computed by substituting v -> <z, z> + v, peeling one power of v and
    substituting back; the identity it extracts is asserted exactly.
    """
    n = sigma.sig.n
    jet = sigma.jet_of(W + 2)
    wps, wms = w_plus_minus_powers(n, W + 2)
    fv = [holo_to_v(h, wps, False, W + 2) for h in jet.f]
    fbv = [holo_to_v(h.conjugate(), wms, True, W + 2) for h in jet.f]
    gp = holo_to_v(jet.g, wps, False, W + 2)
    gm = holo_to_v(jet.g.conjugate(), wms, True, W + 2)
    im_g = (gp - gm).scale(Scalar(0, QQ(-1, 2)))
    ff = VSeries.zero(n, W + 2)
    for k in range(n):
        t = fv[k] * fbv[k]
        ff = ff + (t if sigma.sig.eps(k) > 0 else -t)
    P = im_g - ff

    # substitute v -> <z,z> + v
    lv = VSeries.zero(n, W + 2)
    for k in range(n):
        key = [0] * (2 * n + 2)
        key[k] = 1
        key[n + k] = 1
        lv = lv + VSeries.monomial(n, W + 2, tuple(key), Scalar(sigma.sig.eps(k)))
    shifted_v = lv + VSeries.v_var(n, W + 2)
    P_shift = _v_resubstitute(P, shifted_v)
    parts = P_shift.v_coefficients()
    if parts[0]:
        raise GroupPatternError("defect does not vanish on the quadric graph")
    peeled = VSeries._raw(
        n, W + 2, {k[:-1] + (k[-1] - 1,): c for k, c in P_shift.terms.items()}
    )
    back = lv.scale(Scalar(-1)) + VSeries.v_var(n, W + 2)
    M = _v_resubstitute(peeled, back)
    check = (VSeries.v_var(n, W + 2) - lv) * M - P
    if check.truncate(W):
        raise GroupPatternError("multiplier extraction failed to reproduce the defect")
    return M.truncate(W)


def _v_resubstitute(X: VSeries, vtarget: VSeries) -> VSeries:
    parts = X.v_coefficients()
    n, cap = X.dim, X.weight_cap
    acc = VSeries.zero(n, cap)
    for l in range(len(parts) - 1, -1, -1):
        pl = VSeries.from_bigraded(parts[l], cap)
        acc = acc * vtarget + pl
    return acc


def chain_line(
    sig: Signature, a: Sequence[Scalar], rho: Scalar, r: Scalar, mu: Scalar
) -> tuple[tuple, Scalar]:
    """Point of the chain {v = <z,z>} cut by the complex line C(a, 1).

    Parameterized as the preimage of the u-curve point mu under the group
    element with data (a, rho, r): z = a w, w = rho^-1 mu / (1 - rho^-1 mu
    (-r + i<a, a>)).  The output satisfies z = a w and Im w = <z, z> exactly.
    """
    a = linalg.as_vector(a)
    rho = Scalar.of(rho)
    r = Scalar.of(r)
    mu = Scalar.of(mu)
    t = mu / rho
    den = ONE - t * (-r + I * levi_pair(sig, a, a))
    if den.is_zero():
        raise PoleError("chain parameter hits the pole")
    w = t / den
    z = tuple(ai * w for ai in a)
    return z, w
