"""The three-stage normalization pipeline for v = F(z, zbar, u).

Stage 1 straightens a distinguished curve (the chain with initial velocity
a) and kills all harmonic components.  Stage 2 absorbs the (s,1)/(1,t)
components with D(z,u), renormalizes the (1,1) part to <z,z> with the
factor E(u), and fixes the Levi-isometry gauge U(u) so the trace of the
(2,2) part vanishes.  Stage 3 reparameterizes the straightened curve with
the projective parameter q(u) and applies the residual linear isometry, so
that the trace conditions

    trace F22 = trace^2 F23 = trace^3 F33 = 0

hold exactly at the working weight cap.  The composite map is uniquely
fixed by sigma = (C, a, rho, r) in the hyperquadric isotropy group, and
every stage is exact over the rationals.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import linalg
from .errors import (
    ContractionError,
    DegeneracyError,
    DimensionMismatch,
    GroupPatternError,
    RealityError,
)
from .hyperquadric import GroupElement
from .levi import Signature, delta, delta_pow, eta_matrix, form_matrix_at_order, levi_form
from .scalar import HALF, I, ONE, QQ, Scalar, ZERO, rat_sqrt
from .series import (
    BigradedSeries,
    HoloSeries,
    MapJet,
    bigraded_to_holo,
    series_compose,
    transform_surface,
    upoly_add,
    upoly_compose,
    upoly_deriv,
    upoly_inv,
    upoly_mul,
    upoly_reversion,
    upoly_scale,
    upoly_sqrt,
    upoly_trim,
)

_BIG_ZERO_KEY = None


@dataclass(frozen=True)
class HypersurfaceJet:
    """A real hypersurface jet v = F(z, zbar, u) with nondegenerate (1,1) part."""

    sig: Signature
    F: BigradedSeries

    def __post_init__(self):
        n = self.sig.n
        if self.F.dim != n:
            raise DimensionMismatch("series dimension does not match the signature")
        if not self.F.is_real():
            raise RealityError("defining function must be a real series")
        zk = (0,) * (2 * n + 1)
        if not self.F.coeff(zk).is_zero():
            raise DegeneracyError("hypersurface", "F must vanish at the origin")
        for i in range(n):
            kz = [0] * (2 * n + 1)
            kz[i] = 1
            kzb = [0] * (2 * n + 1)
            kzb[n + i] = 1
            if not (self.F.coeff(tuple(kz)).is_zero() and self.F.coeff(tuple(kzb)).is_zero()):
                raise DegeneracyError("hypersurface", "dF in z, zbar must vanish at the origin")
        phi0 = form_matrix_at_order(self.F.type_component(1, 1), 0)
        pos, neg, zero = linalg.hermitian_signature(phi0)
        if zero or pos != self.sig.e or neg != n - self.sig.e:
            raise DegeneracyError(
                "hypersurface",
                f"leading Hermitian form has inertia ({pos},{neg},{zero}); expected ({self.sig.e},{n - self.sig.e},0)",
            )

    @property
    def weight_cap(self) -> int:
        return self.F.weight_cap

    def truncate(self, cap: int) -> "HypersurfaceJet":
        return HypersurfaceJet(self.sig, self.F.truncate(cap))

    def to_obj(self) -> dict:
        return {"signature": self.sig.to_obj(), "series": self.F.to_obj()}

    @staticmethod
    def from_obj(obj: dict) -> "HypersurfaceJet":
        return HypersurfaceJet(Signature.from_obj(obj["signature"]), BigradedSeries.from_obj(obj["series"]))


def quadric_jet(sig: Signature, cap: int) -> HypersurfaceJet:
    return HypersurfaceJet(sig, levi_form(sig, cap))


def _require_quadric_leading(F: HypersurfaceJet, stage: str):
    """Pipeline entry check: u-derivative at 0 vanishes and F11(.,0) = <z,z>."""
    n = F.sig.n
    ukey = (0,) * (2 * n) + (1,)
    if not F.F.coeff(ukey).is_zero():
        raise DegeneracyError(stage, "dF/du at the origin must vanish")
    phi0 = form_matrix_at_order(F.F.type_component(1, 1), 0)
    if not linalg.mat_eq(phi0, eta_matrix(F.sig)):
        raise DegeneracyError(stage, "leading (1,1) form must equal <z,z> exactly")


# -----------------------------------------------------------------------------
# stage 1: curve straightening
# -----------------------------------------------------------------------------


def solve_g(F: HypersurfaceJet, p) -> HoloSeries:
    """The unique holomorphic g(z, w) sending the curve of p to the u-curve.

    Defined implicitly by g(0,w) = i F(p, pbar, w) together with

        g - g(0,.) = 2i { F(z+p, pbar, w + (g - g(0,.))/2) - F(p, pbar, w) },

    solved by weight-graded iteration; the weight-0 coefficient of the
    linearization is i dF/du|0, so each level closes after division by
    (1 - i dF/du|0), which never vanishes.
    """
    n = F.sig.n
    cap = F.weight_cap
    p = tuple(p)
    if len(p) != n:
        raise DimensionMismatch("curve data must have n components")
    for pi in p:
        if not pi.coeff((0,) * (n + 1)).is_zero():
            raise ContractionError("curve data must vanish at the origin")
    pbar = tuple(pi.conjugate() for pi in p)
    wvar = HoloSeries.w_var(n, cap)

    proto = HoloSeries.zero(n, cap)
    f_curve = series_compose(F.F, list(p) + list(pbar) + [wvar], proto)  # F(p, pbar, w)
    g0 = f_curve.scale(I)
    const_part = f_curve.scale(Scalar(0, -2))  # -2i F(p, pbar, w)

    def rhs(h: HoloSeries) -> HoloSeries:
        ut = wvar + h.scale(HALF)
        val = bigraded_to_holo(F.F, p, pbar, ut, cap)
        return const_part + val.scale(Scalar(0, 2))

    # linear response coefficient: i * dF/du at 0
    c = F.F.coeff((0,) * (2 * n) + (1,))
    b0 = I * c
    corr = ONE / (ONE - b0)
    h = HoloSeries.zero(n, cap)
    for k in range(1, cap + 1):
        r = rhs(h)
        d = (r - h).weight_slice(k)
        if d:
            h = h + d.scale(corr)
    resid = rhs(h) - h
    if resid:
        raise ContractionError("curve-straightening solve did not close", resid.min_weight())
    g = g0 + h
    gz0 = [g.coeff(tuple([1 if j == i else 0 for j in range(n)] + [0])) for i in range(n)]
    gw0 = g.coeff((0,) * n + (1,))
    if any(not x.is_zero() for x in gz0) or not gw0.re == 0:
        raise ContractionError("straightening map violates its first-order normalization")
    return g


def phi1_map(F: HypersurfaceJet, p) -> tuple[MapJet, HypersurfaceJet]:
    """Straighten the curve of p and remove all harmonic components."""
    g, F1 = _phi1_surface(F, p)
    n, cap = F.sig.n, F.weight_cap
    back = MapJet(
        tuple(HoloSeries.z_var(n, cap, i) + _pure_w(p[i]) for i in range(n)),
        HoloSeries.w_var(n, cap) + g,
    )
    forward = back.invert()
    return forward, HypersurfaceJet(F.sig, F1)


def _pure_w(h: HoloSeries) -> HoloSeries:
    """Restriction of a jet to its z-independent part."""
    n = h.dim
    return HoloSeries._raw(n, h.weight_cap, {k: c for k, c in h.terms.items() if not any(k[:n])})


def _phi1_surface(F: HypersurfaceJet, p) -> tuple[HoloSeries, BigradedSeries]:
    n, cap = F.sig.n, F.weight_cap
    p = tuple(_pure_w(pi) for pi in p)
    g = solve_g(F, p)
    Z = [HoloSeries.z_var(n, cap, i) + p[i] for i in range(n)]
    W = HoloSeries.w_var(n, cap) + g
    F1 = transform_surface(F.F, Z, W, cap)
    harm = F1.types_min_at_most(0)
    if harm:
        raise ContractionError("harmonic components survived the straightening stage", harm.min_weight())
    if not F1.is_real():
        raise RealityError("straightened surface lost reality")
    return g, F1


# -----------------------------------------------------------------------------
# stage 2: D, E, U
# -----------------------------------------------------------------------------


def _f11_pairing(F11: BigradedSeries, x, ybar_side: bool, cap: int) -> BigradedSeries:
    """F11(x, zbar, u) (linear slot substitution) as a Bigraded series.

    ``x`` is an n-vector of HoloSeries in (z, u-as-second-slot).  With
    ``ybar_side`` the zbar slot is substituted instead: F11(z, conj x, u).
    """
    n = F11.dim
    acc: dict = {}
    kw = BigradedSeries._kw
    for key, c in F11.terms.items():
        i = next(t for t in range(n) if key[t])
        j = next(t for t in range(n) if key[n + t])
        m = key[2 * n]
        if not ybar_side:
            src = x[i]
            for k2, c2 in src.terms.items():
                nk = k2[:n] + tuple(1 if t == j else 0 for t in range(n)) + (k2[n] + m,)
                if kw(nk) > cap:
                    continue
                v = c * c2
                prev = acc.get(nk)
                s = v if prev is None else prev + v
                if s.is_zero():
                    acc.pop(nk, None)
                else:
                    acc[nk] = s
        else:
            src = x[j]
            for k2, c2 in src.terms.items():
                nk = tuple(1 if t == i else 0 for t in range(n)) + k2[:n] + (k2[n] + m,)
                if kw(nk) > cap:
                    continue
                v = c * c2.conjugate()
                prev = acc.get(nk)
                s = v if prev is None else prev + v
                if s.is_zero():
                    acc.pop(nk, None)
                else:
                    acc[nk] = s
    return BigradedSeries._raw(n, cap, acc)


def solve_D(Fstar: HypersurfaceJet):
    """The unique D(z, u) absorbing the (s,1) components, s >= 2.

    Returns an n-vector of HoloSeries in (z, u).  Solves, order by order in
    u, the linear systems given by pairing D against the nondegenerate
    (1,1) part.
    """
    F = Fstar.F
    n, cap = F.dim, F.weight_cap
    if F.types_min_at_most(0):
        raise DegeneracyError("solve_D", "input still has harmonic components")
    F11 = F.type_component(1, 1)
    mmax = max(0, (cap - 2) // 2)
    phi = [form_matrix_at_order(F11, m) for m in range(mmax + 1)]
    try:
        M0inv = linalg.mat_inv(linalg.transpose(phi[0]))
    except DegeneracyError:
        raise DegeneracyError("solve_D", "degenerate (1,1) form", 0)

    # right-hand side: components of type (s,1) with s >= 2, grouped by alpha
    rhs: dict = {}
    for key, c in F.terms.items():
        s = sum(key[:n])
        t = sum(key[n : 2 * n])
        if t == 1 and s >= 2:
            al = key[:n]
            j = next(tt for tt in range(n) if key[n + tt])
            m = key[2 * n]
            rhs.setdefault(al, {}).setdefault(m, [ZERO] * n)
            rhs[al][m] = list(rhs[al][m])
            rhs[al][m][j] = c
    D = [dict() for _ in range(n)]
    for al, by_m in rhs.items():
        s = sum(al)
        kmax_u = (cap - s) // 2
        d_orders: list = []
        for m in range(kmax_u + 1):
            r_m = list(by_m.get(m, [ZERO] * n))
            acc = [ZERO] * n
            for j in range(1, m + 1):
                if j < len(phi) and m - j < len(d_orders):
                    Mj = linalg.transpose(phi[j])
                    prev = d_orders[m - j]
                    for row in range(n):
                        acc[row] = acc[row] + sum((Mj[row][col] * prev[col] for col in range(n)), ZERO)
            vec = tuple(r_m[row] - acc[row] for row in range(n))
            d_m = linalg.mat_vec(M0inv, vec)
            d_orders.append(d_m)
            for i in range(n):
                if not d_m[i].is_zero() and s + 2 * m <= cap:
                    D[i][al + (m,)] = d_m[i]
    Dv = [HoloSeries._raw(n, cap, terms) for terms in D]

    # exact post-check of the defining pairing
    left = _f11_pairing(F11, Dv, False, cap)
    target = BigradedSeries._raw(
        n,
        cap,
        {
            k: c
            for k, c in F.terms.items()
            if sum(k[n : 2 * n]) == 1 and sum(k[:n]) >= 2
        },
    )
    if left != target:
        raise DegeneracyError("solve_D", "defining pairing failed to absorb the (s,1) components")
    return tuple(Dv)


def solve_E(F11: BigradedSeries, sig: Signature):
    """Factor F11 = <E(u) z, E(u) z> with E(0) = id.

    The branch is fixed by making E self-adjoint for <.,.> at every order;
    the isometry gauge is deferred to solve_U.  Returns the list of exact
    matrix coefficients of E in u.
    """
    n = F11.dim
    cap = F11.weight_cap
    eta = eta_matrix(sig)
    mmax = max(0, (cap - 2) // 2)
    phi = [form_matrix_at_order(F11, m) for m in range(mmax + 1)]
    if not linalg.mat_eq(phi[0], eta):
        raise DegeneracyError("solve_E", "leading form must equal <z,z>", 0)
    E = [linalg.identity(n)]
    for m in range(1, mmax + 1):
        cross = linalg.zeros(n)
        for i in range(1, m):
            cross = linalg.mat_add(
                cross,
                linalg.mat_mul(linalg.transpose(E[i]), linalg.mat_mul(eta, linalg.conj_mat(E[m - i]))),
            )
        R = linalg.mat_sub(phi[m], cross)
        if not linalg.mat_eq(linalg.adjoint(R), R):
            raise RealityError("E-factorization right-hand side is not Hermitian")
        E.append(linalg.mat_scale(linalg.mat_mul(eta, linalg.conj_mat(R)), HALF))
    # exact verification of the factorization
    for m in range(mmax + 1):
        acc = linalg.zeros(n)
        for i in range(m + 1):
            if i < len(E) and m - i < len(E):
                acc = linalg.mat_add(
                    acc,
                    linalg.mat_mul(linalg.transpose(E[i]), linalg.mat_mul(eta, linalg.conj_mat(E[m - i]))),
                )
        if not linalg.mat_eq(acc, phi[m]):
            raise DegeneracyError("solve_E", "factorization residual is nonzero", m)
    return E


def _upoly_to_bigraded(coeffs: list, n: int, cap: int) -> BigradedSeries:
    terms = {}
    for m, c in enumerate(coeffs):
        if 2 * m <= cap and not c.is_zero():
            terms[(0,) * (2 * n) + (m,)] = c
    return BigradedSeries._raw(n, cap, terms)


def _herm_matrix_series(sig: Signature, mats: list, cap: int) -> BigradedSeries:
    """sum_m <M_m z, z> u^m as a type-(1,1) Bigraded series."""
    from .levi import hermitian_series

    n = sig.n
    acc = BigradedSeries.zero(n, cap)
    u = BigradedSeries.u_var(n, cap)
    upow = BigradedSeries.one(n, cap)
    for m, M in enumerate(mats):
        if 2 * m + 2 > cap:
            break
        if m:
            upow = upow * u
        acc = acc + hermitian_series(sig, M, cap) * upow
    return acc


def solve_U(G22: BigradedSeries, E: list, sig: Signature):
    """The Levi-isometry gauge U(u): first-order linear ODE from the trace
    condition on the transformed (2,2) part, integrated from U(0) = id.

    B = U^-1 U' is read off from

        <Bz,z> + (1/(n+2)) <z,z> Tr B
            = (1/(2i(n+2))) tr G22(E^-1 z, ., u)
              - (1/2)(<Wz,z> - <z,Wz>)
              - (1/(2(n+2))) <z,z> (Tr W - conj Tr W),     W = E' E^-1,

    with Tr B eliminated through the second trace identity.  B must come
    out anti-self-adjoint for <.,.>; if not, an upstream reality bug is
    reported.
    """
    n = G22.dim
    cap = G22.weight_cap
    eta = eta_matrix(sig)
    kmax = cap // 2
    Einv = linalg.mats_inv(E, kmax)
    # G22 pulled back through E^-1 acting on z
    zt = []
    zbt = []
    for i in range(n):
        acc = BigradedSeries.zero(n, cap)
        for m in range(len(Einv)):
            if 2 * m + 1 > cap:
                break
            for j in range(n):
                c = Einv[m][i][j]
                if not c.is_zero():
                    key = [0] * (2 * n + 1)
                    key[j] = 1
                    key[2 * n] = m
                    acc = acc + BigradedSeries.monomial(n, cap, tuple(key), c)
        zt.append(acc)
        zbt.append(acc.conjugate())
    proto = BigradedSeries.zero(n, cap)
    G22t = series_compose(G22, zt + zbt + [BigradedSeries.u_var(n, cap)], proto)

    d1 = delta(sig, G22t)
    d2 = delta(sig, d1)
    d2_poly = d2.u_poly()

    W = linalg.mats_mul(linalg.mats_deriv(E), Einv, kmax)
    trW = [linalg.trace(M) for M in W]
    trW_im = [t - t.conjugate() for t in trW]

    inv4i = ONE / Scalar(0, 4 * (n + 1))
    trB = upoly_trim(
        [
            (d2_poly[m] if m < len(d2_poly) else ZERO) * inv4i
            - (trW_im[m] if m < len(trW_im) else ZERO) * HALF
            for m in range(kmax + 1)
        ]
    )

    lf = levi_form(sig, cap)
    Wz = _herm_matrix_series(sig, W, cap)
    S = d1.scale(ONE / Scalar(0, 2 * (n + 2)))
    S = S - (Wz - Wz.conjugate()).scale(HALF)
    S = S - (lf * _upoly_to_bigraded(trW_im, n, cap)).scale(Scalar(QQ(1, 2 * (n + 2))))
    S = S - (lf * _upoly_to_bigraded(trB, n, cap)).scale(Scalar(QQ(1, n + 2)))

    # read the matrix coefficients of <Bz,z> = sum eps_k (Bz)^k zbar^k
    B = []
    for m in range(kmax + 1):
        Sm = form_matrix_at_order(S, m)
        Bm = tuple(
            tuple(Sm[i][k] * sig.eps(k) for i in range(n))
            for k in range(n)
        )
        B.append(Bm)
    resid = S - _herm_matrix_series(sig, B, cap)
    if resid:
        raise RealityError("trace ODE right-hand side is not a pure (1,1) form")
    for m, Bm in enumerate(B):
        skew = linalg.mat_add(linalg.mat_mul(linalg.adjoint(Bm), eta), linalg.mat_mul(eta, Bm))
        if not linalg.is_zero_mat(skew):
            raise RealityError(f"gauge ODE right-hand side fails anti-self-adjointness at u-order {m}")

    U = [linalg.identity(n)]
    for m in range(kmax):
        acc = linalg.zeros(n)
        for i in range(m + 1):
            if i < len(U) and m - i < len(B):
                acc = linalg.mat_add(acc, linalg.mat_mul(U[i], B[m - i]))
        U.append(linalg.mat_scale(acc, Scalar(QQ(1, m + 1))))
    # exact isometry check
    for m in range(1, len(U)):
        acc = linalg.zeros(n)
        for i in range(m + 1):
            acc = linalg.mat_add(
                acc, linalg.mat_mul(linalg.transpose(U[i]), linalg.mat_mul(eta, linalg.conj_mat(U[m - i])))
            )
        if not linalg.is_zero_mat(acc):
            raise RealityError(f"gauge matrix lost the isometry property at u-order {m}")
    return U


def _mat_series_entry_holo(mats: list, n: int, cap: int) -> list:
    """Entries of a matrix u-series as pure-w HoloSeries."""
    out = []
    for i in range(n):
        row = []
        for j in range(n):
            coeffs = [mats[m][i][j] for m in range(len(mats))]
            row.append(HoloSeries.from_w_poly(n, cap, coeffs))
        out.append(row)
    return out


def _phi2_inverse_z(D, UEinv_h, n: int, cap: int):
    """Old z as a jet of the new coordinates for the stage-2 map.

    Solves x = zeta - D(x, w) with zeta = (UE)^-1(w) z.  D is expanded once
    around the near-identity base zeta (cheap small composes); the fixed
    point then iterates on the degree >= 2 correction alone.
    """
    zeta = []
    for i in range(n):
        acc = HoloSeries.zero(n, cap)
        for j in range(n):
            if UEinv_h[i][j]:
                acc = acc + UEinv_h[i][j] * HoloSeries.z_var(n, cap, j)
        zeta.append(acc)
    if all(d.is_zero() for d in D):
        return zeta
    proto = HoloSeries.zero(n, cap)
    wv = HoloSeries.w_var(n, cap)
    base_targets = zeta + [wv]

    # Taylor data: T[gamma][i] = (d^gamma D_i / gamma!) composed at (zeta, w)
    taylor: list[tuple[tuple, list]] = []

    def build(der: list, counts: tuple, min_slot: int):
        comp = [series_compose(d, base_targets, proto) for d in der]
        if any(comp):
            taylor.append((counts, comp))
        for s in range(min_slot, n):
            nd = [d.dz(s).scale(Scalar(QQ(1, counts[s] + 1))) for d in der]
            if all(x.is_zero() for x in nd):
                continue
            nc = list(counts)
            nc[s] += 1
            build(nd, tuple(nc), s)

    build(list(D), (0,) * n, 0)

    corr = [HoloSeries.zero(n, cap) for _ in range(n)]
    for _ in range(cap + 1):
        pcache: dict = {}

        def cpow(gamma: tuple) -> HoloSeries:
            got = pcache.get(gamma)
            if got is not None:
                return got
            s = next(t for t in range(n) if gamma[t])
            ng = list(gamma)
            ng[s] -= 1
            got = cpow(tuple(ng)) * corr[s]
            pcache[gamma] = got
            return got

        pcache[(0,) * n] = HoloSeries.one(n, cap)
        nxt = [HoloSeries.zero(n, cap) for _ in range(n)]
        for gamma, comp in taylor:
            if any(gamma):
                factor = cpow(gamma)
                if factor.is_zero():
                    continue
                for i in range(n):
                    if comp[i]:
                        nxt[i] = nxt[i] - comp[i] * factor
            else:
                for i in range(n):
                    if comp[i]:
                        nxt[i] = nxt[i] - comp[i]
        if nxt == corr:
            break
        corr = nxt
    return [zeta[i] + corr[i] for i in range(n)]


def _phi2_surface(F1: BigradedSeries, D, E, U, sig: Signature, cap: int) -> BigradedSeries:
    n = sig.n
    UE = linalg.mats_mul(U, E, cap // 2)
    UEinv = linalg.mats_inv(UE, cap // 2)
    UEinv_h = _mat_series_entry_holo(UEinv, n, cap)
    Z = _phi2_inverse_z(D, UEinv_h, n, cap)
    F2 = transform_surface(F1, Z, HoloSeries.w_var(n, cap), cap)
    return F2


def _phi2_forward(D, E, U, n: int, cap: int) -> MapJet:
    UE = linalg.mats_mul(U, E, cap // 2)
    UE_h = _mat_series_entry_holo(UE, n, cap)
    f = []
    for i in range(n):
        acc = HoloSeries.zero(n, cap)
        for j in range(n):
            if UE_h[i][j]:
                acc = acc + UE_h[i][j] * (HoloSeries.z_var(n, cap, j) + D[j])
        f.append(acc)
    return MapJet(tuple(f), HoloSeries.w_var(n, cap))


def phi2_map(Fstar: HypersurfaceJet, D, E, U) -> tuple[MapJet, HypersurfaceJet]:
    """Apply z -> U(w)E(w)(z + D(z,w)) and re-solve the defining equation."""
    sig = Fstar.sig
    n, cap = sig.n, Fstar.weight_cap
    F2 = _phi2_surface(Fstar.F, D, E, U, sig, cap)
    lf = levi_form(sig, cap)
    if F2.type_component(1, 1) != lf:
        raise DegeneracyError("phi2_map", "(1,1) part of the output is not <z,z>")
    bad = BigradedSeries._raw(
        n,
        cap,
        {
            k: c
            for k, c in F2.terms.items()
            if (sum(k[n : 2 * n]) == 1 and sum(k[:n]) >= 2)
            or (sum(k[:n]) == 1 and sum(k[n : 2 * n]) >= 2)
        },
    )
    if bad:
        raise DegeneracyError("phi2_map", "(s,1)/(1,t) components survived the absorption stage")
    return _phi2_forward(D, E, U, n, cap), HypersurfaceJet(sig, F2)


# -----------------------------------------------------------------------------
# stage 3: projective parameter and the residual isometry
# -----------------------------------------------------------------------------


def solve_q(H33: BigradedSeries, rho, r, W: int, sig: Signature) -> HoloSeries:
    """Projective parameter q(u) = rho u + rho r u^2 + ... on the u-curve.

    Solves q'''/(3q') - (1/2)(q''/q')^2 = kappa(u) order by order, where
    kappa = -(trace^3 of the (3,3) part) / (6n(n+1)(n+2)).
    """
    n = sig.n
    rho = Scalar.of(rho)
    r = Scalar.of(r)
    if rho.is_zero() or not rho.is_real() or not r.is_real():
        raise DegeneracyError("solve_q", "need real rho != 0 and real r")
    if H33.type_component(3, 3) != H33:
        raise DegeneracyError("solve_q", "input is not of pure type (3,3)")
    d3 = delta_pow(sig, H33, 3)
    kappa = upoly_scale(d3.u_poly(), Scalar(QQ(-1, 6 * n * (n + 1) * (n + 2))))
    for c in kappa:
        if not c.is_real():
            raise RealityError("curvature density of a real surface must be real")
    kmax = W // 2
    q = [ZERO, rho, rho * r]
    for j in range(0, kmax - 2):
        qp = upoly_deriv(q + [ZERO])
        qpp = upoly_deriv(qp)
        qppp = upoly_deriv(qpp)
        rhs_series = upoly_add(
            upoly_scale(upoly_mul(kappa, upoly_mul(qp, qp, j), j), Scalar(3)),
            upoly_scale(upoly_mul(qpp, qpp, j), Scalar(QQ(3, 2))),
        )
        rhs_j = rhs_series[j] if j < len(rhs_series) else ZERO
        known = ZERO
        for i in range(min(j, len(qppp))):
            if j - i < len(qp):
                known = known + qppp[i] * qp[j - i]
        num = rhs_j - known
        q.append(num / (Scalar((j + 1) * (j + 2) * (j + 3)) * rho))
    return HoloSeries.from_w_poly(n, W, q[: kmax + 1])


def _sqrt_qprime_ratio(q: list, s0: Scalar, n: int, cap: int) -> list:
    """sqrt(q'(w)/q'(0)) as a coefficient list with constant term 1."""
    qp = upoly_deriv(q)
    ratio = upoly_scale(qp, ONE / s0)
    return upoly_sqrt(ratio, cap // 2)


def phi3_map(H: HypersurfaceJet, U0, q: HoloSeries) -> tuple[MapJet, HypersurfaceJet]:
    """Apply z* = sqrt(sign{q'(0)} q'(w)) U0 z, w* = q(w).

    For exact arithmetic ``U0`` may carry the scale: a matrix C with
    <Cz, Cz> = q'(0) <z, z> is accepted directly (the map is then
    sqrt(q'(w)/q'(0)) C z).  A strict sign{q'(0)}-isometry is also accepted
    provided |q'(0)| is the square of a rational.
    """
    sig = H.sig
    n, cap = sig.n, H.weight_cap
    qc = q.w_poly()
    if qc and not qc[0].is_zero():
        raise DegeneracyError("phi3_map", "q(0) must vanish")
    for c in qc:
        if not c.is_real():
            raise RealityError("projective parameter must have real coefficients")
    s0 = qc[1] if len(qc) > 1 else ZERO
    if s0.is_zero():
        raise DegeneracyError("phi3_map", "q'(0) must be nonzero")
    eta = eta_matrix(sig)
    U0 = linalg.as_matrix(U0)
    gram = linalg.mat_mul(linalg.adjoint(U0), linalg.mat_mul(eta, U0))
    if linalg.mat_eq(gram, linalg.mat_scale(eta, s0)):
        C = U0
    else:
        sign = ONE if s0.re > 0 else -ONE
        if not linalg.mat_eq(gram, linalg.mat_scale(eta, sign)):
            raise GroupPatternError("U0 is not a Levi isometry up to sign{q'(0)}")
        mu = rat_sqrt((s0 * sign).re)
        if mu is None:
            raise DegeneracyError(
                "phi3_map",
                "|q'(0)| is not a rational square; pass the combined factor C with <Cz,Cz> = q'(0)<z,z>",
            )
        C = linalg.mat_scale(U0, Scalar(mu))

    S = _sqrt_qprime_ratio(qc, s0, n, cap)
    S_h = HoloSeries.from_w_poly(n, cap, S)
    f = []
    for i in range(n):
        acc = HoloSeries.zero(n, cap)
        for j in range(n):
            if not C[i][j].is_zero():
                acc = acc + HoloSeries.z_var(n, cap, j).scale(C[i][j])
        f.append(acc * S_h)
    fwd = MapJet(tuple(f), HoloSeries.from_w_poly(n, cap, qc))

    # inverse data: w = qinv(w*), z = C^-1 T(w*) z* with T = 1/sqrt(q' o qinv / s0)
    kmax = cap // 2
    qinv = upoly_reversion(qc, kmax)
    S_at_qinv = upoly_compose(S, qinv, kmax)
    T = upoly_inv(S_at_qinv, kmax)
    T_h = HoloSeries.from_w_poly(n, cap, T)
    Cinv = linalg.mat_inv(C)
    Z = []
    for i in range(n):
        acc = HoloSeries.zero(n, cap)
        for j in range(n):
            if not Cinv[i][j].is_zero():
                acc = acc + HoloSeries.z_var(n, cap, j).scale(Cinv[i][j])
        Z.append(acc * T_h)
    Wold = HoloSeries.from_w_poly(n, cap, qinv)
    F3 = transform_surface(H.F, Z, Wold, cap)
    return fwd, HypersurfaceJet(sig, F3)


# -----------------------------------------------------------------------------
# the chain stage and the full pipeline
# -----------------------------------------------------------------------------


def _run_phi12(F: HypersurfaceJet, p, cap: int):
    """Stages 1 and 2 without map assembly; returns the stage data."""
    Ft = F.truncate(cap)
    pt = tuple(pi.truncate(cap) for pi in p)
    g, F1 = _phi1_surface(Ft, pt)
    F1jet = HypersurfaceJet(F.sig, F1)
    D = solve_D(F1jet)
    F11 = F1.type_component(1, 1)
    E = solve_E(F11, F.sig)

    # G = F1 - F11(z + D, conj(z + D), u); its (2,2) part feeds the gauge ODE
    n = F.sig.n
    pair_a = _f11_pairing(F11, D, False, cap)
    pair_b = pair_a.conjugate()
    dd = BigradedSeries.zero(n, cap)
    mmax = max(0, (cap - 2) // 2)
    phi = [form_matrix_at_order(F11, m) for m in range(mmax + 1)]
    u = BigradedSeries.u_var(n, cap)
    Dbig = []
    for i in range(n):
        terms = {}
        for k, c in D[i].terms.items():
            nk = k[:n] + (0,) * n + (k[n],)
            terms[nk] = c
        Dbig.append(BigradedSeries._raw(n, cap, terms))
    Dbarbig = [d.conjugate() for d in Dbig]
    upow = BigradedSeries.one(n, cap)
    for m in range(mmax + 1):
        if m:
            upow = upow * u
        for i in range(n):
            for j in range(n):
                c = phi[m][i][j]
                if not c.is_zero():
                    dd = dd + (Dbig[i] * Dbarbig[j] * upow).scale(c)
    G = F1 - (F11 + pair_a + pair_b + dd)
    if G.types_min_at_most(1):
        raise DegeneracyError("phi2 stage", "unexpected low-type components in the absorbed remainder")
    U = solve_U(G.type_component(2, 2), E, F.sig)
    F2 = _phi2_surface(F1, D, E, U, F.sig, cap)
    d22 = delta(F.sig, F2.type_component(2, 2))
    if d22:
        raise DegeneracyError("phi2 stage", "trace of the (2,2) part did not vanish")
    return g, F1, D, E, U, F2


def solve_chain_jet(F: HypersurfaceJet, a, W: int):
    """The unique curve jet p with p'(0) = a straightened by the pipeline.

    Solved by residual correction: the coefficient of u^(k-2) in the
    second trace of the transformed (2,3) part depends on the unknown
    p_k only through the leading identity-coefficient term, giving an
    exact linear update per order.
    """
    sig = F.sig
    n = sig.n
    a = linalg.as_vector(a)
    if len(a) != n:
        raise DimensionMismatch("initial velocity must have n components")
    _require_quadric_leading(F, "chain stage")
    Fw = F.truncate(W)
    kmax = max(1, (W - 1) // 2)
    p = [
        HoloSeries._raw(n, W, {(0,) * n + (1,): a[i]} if not a[i].is_zero() else {})
        for i in range(n)
    ]
    scale_const = Scalar(4 * (n + 1) * (n + 2))
    for k in range(2, kmax + 1):
        cap_k = min(W, 2 * k + 1)
        state = _run_phi12(Fw, p, cap_k)
        F2 = state[5]
        R = delta_pow(sig, F2.type_component(2, 3), 2)
        coeffs = []
        for j in range(n):
            key = (0,) * n + tuple(1 if t == j else 0 for t in range(n)) + (k - 2,)
            coeffs.append(R.coeff(key))
        if all(c.is_zero() for c in coeffs):
            continue
        denom = scale_const * Scalar(k * (k - 1))
        for j in range(n):
            if coeffs[j].is_zero():
                continue
            pkj = coeffs[j] * Scalar(sig.eps(j)) / denom
            p[j] = p[j] + HoloSeries._raw(n, W, {(0,) * n + (k,): pkj})
    state = _run_phi12(Fw, p, W)
    R = delta_pow(sig, state[5].type_component(2, 3), 2)
    if R:
        raise ContractionError("chain obstruction did not vanish", R.min_weight())
    return tuple(p), state


@dataclass(frozen=True)
class NormalizationResult:
    """Composite map, its normal-form image, and the per-stage data."""

    map: MapJet
    normal_surface: HypersurfaceJet
    stages: dict

    def to_obj(self) -> dict:
        st = self.stages

        def mat_series_obj(mats):
            return [[[x.to_pair() for x in row] for row in M] for M in mats]

        return {
            "map": self.map.to_obj(),
            "normal_surface": self.normal_surface.to_obj(),
            "stages": {
                "p": [h.to_obj() for h in st["p"]],
                "g": st["g"].to_obj(),
                "D": [h.to_obj() for h in st["D"]],
                "E": mat_series_obj(st["E"]),
                "U": mat_series_obj(st["U"]),
                "q": st["q"].to_obj(),
            },
        }


def check_normal_form_conditions(sig: Signature, F: BigradedSeries) -> bool:
    return (
        not delta(sig, F.type_component(2, 2))
        and not delta_pow(sig, F.type_component(2, 3), 2)
        and not delta_pow(sig, F.type_component(3, 3), 3)
    )


def normalize(F: HypersurfaceJet, sigma: GroupElement, W: int) -> NormalizationResult:
    """Normalize the hypersurface jet with initial data sigma = (C, a, rho, r).

    Runs the curve stage (chain with p'(0) = a), the absorption stage
    (D, E, U) and the projective stage (q, C), all at internal cap W + 2,
    and returns the composed forward map with the stage record, truncated
    to weight W.  The output surface satisfies the three trace conditions
    exactly.
    """
    if sigma.sig != F.sig:
        raise DimensionMismatch("sigma and the surface have different signatures")
    if W < 4:
        raise DegeneracyError("normalize", "weight cap below 4 makes the conditions vacuous")
    sig = F.sig
    n = sig.n
    Wi = W + 2
    Fi = F.truncate(Wi)
    _require_quadric_leading(Fi, "normalize")

    p, (g, F1, D, E, U, F2) = solve_chain_jet(Fi, sigma.a, Wi)

    H33 = F2.type_component(3, 3)
    q = solve_q(H33, sigma.rho, sigma.r, Wi, sig)
    m3, F3jet = phi3_map(HypersurfaceJet(sig, F2), sigma.C, q)
    F3 = F3jet.F

    if not check_normal_form_conditions(sig, F3):
        raise ContractionError("pipeline output violates the trace conditions")

    # assemble the forward map
    back1 = MapJet(
        tuple(HoloSeries.z_var(n, Wi, i) + p[i] for i in range(n)),
        HoloSeries.w_var(n, Wi) + g,
    )
    m1 = back1.invert()
    m2 = _phi2_forward(D, E, U, n, Wi)
    full = m3.compose(m2).compose(m1).truncate(W)

    stages = {"p": p, "g": g, "D": D, "E": E, "U": U, "q": q}
    return NormalizationResult(full, HypersurfaceJet(sig, F3.truncate(W)), stages)


def sigma_of_map(sig: Signature, M: MapJet) -> GroupElement:
    """Recover (C, a, rho, r) from the first-order data of a normalization."""
    n = sig.n
    J = M.jacobian0()
    C = tuple(tuple(J[i][j] for j in range(n)) for i in range(n))
    fw = tuple(J[i][n] for i in range(n))
    a = tuple(-x for x in linalg.mat_vec(linalg.mat_inv(C), fw))
    gw = J[n][n]
    rho = Scalar(gw.re)
    key2 = (0,) * n + (2,)
    gww = M.g.coeff(key2) * Scalar(2)
    r = Scalar(gww.re) / (Scalar(2) * rho)
    return GroupElement(sig, C, a, rho, r)


def decompose_check(F: HypersurfaceJet, sigma: GroupElement, W: int) -> bool:
    """Whether normalize(F, sigma) equals the fractional-linear part applied
    after normalize(F, (id, a, 1, 0)), as exact jets."""
    sig = F.sig
    n = sig.n
    full = normalize(F, sigma, W)
    sigma1 = GroupElement(sig, linalg.identity(n), sigma.a, ONE, ZERO)
    part = normalize(F, sigma1, W)
    frac = GroupElement(sig, sigma.C, (ZERO,) * n, sigma.rho, sigma.r)
    composed = frac.jet_of(W).compose(part.map).truncate(W)
    return composed == full.map.truncate(W)
