"""Truncated power series with exact Gaussian-rational coefficients.

Three sparse rings share one representation (a dict from a flat exponent
tuple to a nonzero Scalar), all graded by the anisotropic weight that gives
z and z-bar weight 1 and the real variables u, v (and the holomorphic w)
weight 2:

* ``BigradedSeries``  -- series in (z_1..z_n, zbar_1..zbar_n, u); key
  ``(a_1..a_n, b_1..b_n, m)``.
* ``HoloSeries``      -- holomorphic series in (z_1..z_n, w); key
  ``(a_1..a_n, m)``.
* ``VSeries``         -- series in (z, zbar, u, v) with v kept as an
  independent variable; key ``(a_1..a_n, b_1..b_n, m, l)``.  Used to expand
  defining equations before the implicit solve eliminates v.

Every operation truncates to the weight cap, so results are exact jets of
the untruncated objects.  Values are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .errors import ContractionError, DegeneracyError, DimensionMismatch, TruncationError
from .scalar import HALF, I, ONE, ZERO, QQ, Scalar, rat, rat_str


from operator import add as _add_op


def _kadd(ka: tuple, kb: tuple) -> tuple:
    return tuple(map(_add_op, ka, kb))


class _Series:
    """Shared sparse-jet implementation; subclasses fix the key layout."""

    __slots__ = ("dim", "weight_cap", "terms", "_ws")

    #: number of trailing key slots that carry weight 2 (the rest weigh 1)
    _HEAVY = 1

    def __init__(self, dim: int, weight_cap: int, terms=None):
        if dim < 1:
            raise DimensionMismatch("dim must be positive")
        if weight_cap < 0:
            raise DimensionMismatch("weight_cap must be nonnegative")
        self.dim = dim
        self.weight_cap = weight_cap
        self._ws = None
        klen = self._key_len(dim)
        clean: dict = {}
        if terms:
            items = terms.items() if isinstance(terms, dict) else terms
            for key, coeff in items:
                key = tuple(int(e) for e in key)
                if len(key) != klen or any(e < 0 for e in key):
                    raise DimensionMismatch(f"bad key {key} for {type(self).__name__}(dim={dim})")
                coeff = Scalar.of(coeff)
                if self._kw(key) <= weight_cap and not coeff.is_zero():
                    prev = clean.get(key)
                    s = coeff if prev is None else prev + coeff
                    if s.is_zero():
                        clean.pop(key, None)
                    else:
                        clean[key] = s
        self.terms = clean

    # -- layout hooks --------------------------------------------------------

    @classmethod
    def _key_len(cls, dim: int) -> int:
        raise NotImplementedError

    @classmethod
    def _kw(cls, key: tuple) -> int:
        h = cls._HEAVY
        return sum(key) + sum(key[-h:])

    @classmethod
    def _raw(cls, dim: int, cap: int, terms: dict):
        s = object.__new__(cls)
        s.dim = dim
        s.weight_cap = cap
        s.terms = terms
        s._ws = None
        return s

    def _weight_sorted(self) -> list:
        got = self._ws
        if got is None:
            kw = self._kw
            got = sorted((kw(k), k, c) for k, c in self.terms.items())
            self._ws = got
        return got

    # -- constructors ----------------------------------------------------------

    @classmethod
    def zero(cls, dim: int, cap: int):
        return cls._raw(dim, cap, {})

    @classmethod
    def constant(cls, dim: int, cap: int, c) -> "_Series":
        c = Scalar.of(c)
        if c.is_zero():
            return cls.zero(dim, cap)
        return cls._raw(dim, cap, {(0,) * cls._key_len(dim): c})

    @classmethod
    def one(cls, dim: int, cap: int):
        return cls.constant(dim, cap, ONE)

    @classmethod
    def monomial(cls, dim: int, cap: int, key: tuple, c=ONE):
        return cls(dim, cap, {tuple(key): Scalar.of(c)})

    def _unit(self, slot: int, cap: int | None = None):
        """The plain variable for a key slot."""
        key = [0] * self._key_len(self.dim)
        key[slot] = 1
        return type(self).monomial(self.dim, self.weight_cap if cap is None else cap, tuple(key))

    # -- basics ---------------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self):
        return bool(self.terms)

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return self.dim == other.dim and self.terms == other.terms

    def __hash__(self):
        return hash((type(self).__name__, self.dim, frozenset(self.terms.items())))

    def coeff(self, key: tuple) -> Scalar:
        return self.terms.get(tuple(key), ZERO)

    def min_weight(self) -> int | None:
        if not self.terms:
            return None
        return min(self._kw(k) for k in self.terms)

    def truncate(self, cap: int):
        if cap >= self.weight_cap:
            return type(self)._raw(self.dim, cap, dict(self.terms))
        kw = self._kw
        return type(self)._raw(self.dim, cap, {k: c for k, c in self.terms.items() if kw(k) <= cap})

    def with_cap(self, cap: int):
        """Reinterpret at a (typically larger) cap; terms must already fit."""
        kw = self._kw
        if any(kw(k) > cap for k in self.terms):
            raise TruncationError("terms exceed the requested cap")
        return type(self)._raw(self.dim, cap, dict(self.terms))

    def weight_slice(self, w: int):
        kw = self._kw
        return type(self)._raw(self.dim, self.weight_cap, {k: c for k, c in self.terms.items() if kw(k) == w})

    # -- ring operations --------------------------------------------------------

    def _check(self, other):
        if type(other) is not type(self) or other.dim != self.dim:
            raise DimensionMismatch(f"cannot combine {type(self).__name__}(dim={self.dim}) with {other!r}")

    def __add__(self, other):
        self._check(other)
        cap = min(self.weight_cap, other.weight_cap)
        kw = self._kw
        out = {k: c for k, c in self.terms.items() if kw(k) <= cap}
        for k, c in other.terms.items():
            if kw(k) > cap:
                continue
            prev = out.get(k)
            s = c if prev is None else prev + c
            if s.is_zero():
                out.pop(k, None)
            else:
                out[k] = s
        return type(self)._raw(self.dim, cap, out)

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return type(self)._raw(self.dim, self.weight_cap, {k: -c for k, c in self.terms.items()})

    def scale(self, c) -> "_Series":
        c = Scalar.of(c)
        if c.is_zero():
            return type(self).zero(self.dim, self.weight_cap)
        return type(self)._raw(self.dim, self.weight_cap, {k: c * v for k, v in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, Scalar)) or type(other).__name__ in ("mpq", "Fraction"):
            return self.scale(other)
        self._check(other)
        cap = min(self.weight_cap, other.weight_cap)
        a = self._weight_sorted()
        b = other._weight_sorted()
        if len(a) > len(b):
            a, b = b, a
        out: dict = {}
        get = out.get
        for wa, ka, ca in a:
            lim = cap - wa
            if lim < 0:
                break
            car = ca.re
            cai = ca.im
            for wb, kb, cb in b:
                if wb > lim:
                    break
                k = tuple(map(_add_op, ka, kb))
                cbr = cb.re
                cbi = cb.im
                got = get(k)
                if got is None:
                    out[k] = [car * cbr - cai * cbi, car * cbi + cai * cbr]
                else:
                    got[0] += car * cbr - cai * cbi
                    got[1] += car * cbi + cai * cbr
        terms = {}
        for k, (re, im) in out.items():
            if re or im:
                terms[k] = Scalar._new(re, im)
        return type(self)._raw(self.dim, cap, terms)

    __rmul__ = __mul__

    def __pow__(self, e: int):
        if e < 0:
            raise ValueError("negative series power")
        out = type(self).one(self.dim, self.weight_cap)
        base = self
        while e:
            if e & 1:
                out = out * base
            base = base * base if e > 1 else base
            e >>= 1
        return out

    def inverse(self):
        """Multiplicative inverse of a series with nonzero constant term."""
        c0 = self.coeff((0,) * self._key_len(self.dim))
        if c0.is_zero():
            raise DegeneracyError("series inverse", "vanishing constant term")
        rest = self - type(self).constant(self.dim, self.weight_cap, c0)
        # 1/(c0 + r) = (1/c0) * sum (-r/c0)^k ; r has weight >= 1 so this stops
        t = rest.scale(-(ONE / c0))
        acc = type(self).one(self.dim, self.weight_cap)
        term = type(self).one(self.dim, self.weight_cap)
        for _ in range(self.weight_cap):
            term = term * t
            if term.is_zero():
                break
            acc = acc + term
        return acc.scale(ONE / c0)

    def diff(self, slot: int):
        """Partial derivative with respect to the variable in ``slot``."""
        out: dict = {}
        for k, c in self.terms.items():
            e = k[slot]
            if e:
                nk = list(k)
                nk[slot] = e - 1
                out[tuple(nk)] = c * e
        return type(self)._raw(self.dim, self.weight_cap, out)

    def map_coeffs(self, fn: Callable[[Scalar], Scalar]):
        out = {}
        for k, c in self.terms.items():
            nc = fn(c)
            if not nc.is_zero():
                out[k] = nc
        return type(self)._raw(self.dim, self.weight_cap, out)

    def __repr__(self):
        head = ", ".join(
            f"{k}:{c!r}" for k, c in sorted(self.terms.items())[:6]
        )
        more = "" if len(self.terms) <= 6 else f", ... ({len(self.terms)} terms)"
        return f"{type(self).__name__}(dim={self.dim}, cap={self.weight_cap}, {{{head}{more}}})"


# -----------------------------------------------------------------------------


class BigradedSeries(_Series):
    """Real-analytic jet in (z, zbar, u), graded by |alpha|+|beta|+2m."""

    _HEAVY = 1

    @classmethod
    def _key_len(cls, dim: int) -> int:
        return 2 * dim + 1

    # slots: 0..n-1 z, n..2n-1 zbar, 2n the u exponent

    @classmethod
    def z_var(cls, dim: int, cap: int, i: int):
        key = [0] * (2 * dim + 1)
        key[i] = 1
        return cls.monomial(dim, cap, tuple(key))

    @classmethod
    def zbar_var(cls, dim: int, cap: int, i: int):
        key = [0] * (2 * dim + 1)
        key[dim + i] = 1
        return cls.monomial(dim, cap, tuple(key))

    @classmethod
    def u_var(cls, dim: int, cap: int):
        key = [0] * (2 * dim + 1)
        key[-1] = 1
        return cls.monomial(dim, cap, tuple(key))

    def alpha(self, key) -> tuple:
        return key[: self.dim]

    def beta(self, key) -> tuple:
        return key[self.dim : 2 * self.dim]

    def dz(self, i: int):
        return self.diff(i)

    def dzbar(self, i: int):
        return self.diff(self.dim + i)

    def du(self):
        return self.diff(2 * self.dim)

    def type_component(self, s: int, t: int) -> "BigradedSeries":
        n = self.dim
        out = {
            k: c
            for k, c in self.terms.items()
            if sum(k[:n]) == s and sum(k[n : 2 * n]) == t
        }
        return BigradedSeries._raw(n, self.weight_cap, out)

    def types_min_at_most(self, bound: int) -> "BigradedSeries":
        """Restriction to components with min(s, t) <= bound."""
        n = self.dim
        out = {
            k: c
            for k, c in self.terms.items()
            if min(sum(k[:n]), sum(k[n : 2 * n])) <= bound
        }
        return BigradedSeries._raw(n, self.weight_cap, out)

    def types_min_at_least(self, bound: int) -> "BigradedSeries":
        n = self.dim
        out = {
            k: c
            for k, c in self.terms.items()
            if min(sum(k[:n]), sum(k[n : 2 * n])) >= bound
        }
        return BigradedSeries._raw(n, self.weight_cap, out)

    def conjugate(self) -> "BigradedSeries":
        n = self.dim
        out = {}
        for k, c in self.terms.items():
            nk = k[n : 2 * n] + k[:n] + (k[2 * n],)
            out[nk] = c.conjugate()
        return BigradedSeries._raw(n, self.weight_cap, out)

    def is_real(self) -> bool:
        n = self.dim
        for k, c in self.terms.items():
            nk = k[n : 2 * n] + k[:n] + (k[2 * n],)
            if self.terms.get(nk, ZERO) != c.conjugate():
                return False
        return True

    def u_poly(self) -> list[Scalar]:
        """Coefficient list in u of a pure type-(0,0) series."""
        n = self.dim
        out = [ZERO] * (self.weight_cap // 2 + 1)
        for k, c in self.terms.items():
            if any(k[:2 * n]):
                raise DegeneracyError("u_poly", "series is not of pure type (0,0)")
            out[k[2 * n]] = c
        return out

    def eval(self, zvals: Sequence[Scalar], zbarvals: Sequence[Scalar], uval: Scalar) -> Scalar:
        n = self.dim
        total = ZERO
        for k, c in self.terms.items():
            term = c
            for i in range(n):
                if k[i]:
                    term = term * zvals[i] ** k[i]
            for i in range(n):
                if k[n + i]:
                    term = term * zbarvals[i] ** k[n + i]
            if k[2 * n]:
                term = term * uval ** k[2 * n]
            total = total + term
        return total

    # -- serialization ------------------------------------------------------

    def to_obj(self) -> dict:
        n = self.dim
        items = []
        for k in sorted(self.terms):
            c = self.terms[k]
            items.append(
                {
                    "alpha": list(k[:n]),
                    "beta": list(k[n : 2 * n]),
                    "m": k[2 * n],
                    "re": rat_str(c.re),
                    "im": rat_str(c.im),
                }
            )
        return {"dim": n, "weight_cap": self.weight_cap, "terms": items}

    @classmethod
    def from_obj(cls, obj: dict) -> "BigradedSeries":
        n = int(obj["dim"])
        cap = int(obj["weight_cap"])
        terms = {}
        for t in obj["terms"]:
            key = tuple(t["alpha"]) + tuple(t["beta"]) + (int(t["m"]),)
            terms[key] = Scalar(rat(t["re"]), rat(t["im"]))
        return cls(n, cap, terms)


class HoloSeries(_Series):
    """Holomorphic jet in (z, w), graded by |alpha|+2m.

    ``conjugate`` returns the series with conjugated coefficients; it stands
    for the function acting on the conjugated variables (zbar, wbar) and the
    caller is responsible for feeding it antiholomorphic slots.
    """

    _HEAVY = 1

    @classmethod
    def _key_len(cls, dim: int) -> int:
        return dim + 1

    @classmethod
    def z_var(cls, dim: int, cap: int, i: int):
        key = [0] * (dim + 1)
        key[i] = 1
        return cls.monomial(dim, cap, tuple(key))

    @classmethod
    def w_var(cls, dim: int, cap: int):
        key = [0] * (dim + 1)
        key[-1] = 1
        return cls.monomial(dim, cap, tuple(key))

    def dz(self, i: int):
        return self.diff(i)

    def dw(self):
        return self.diff(self.dim)

    def conjugate(self) -> "HoloSeries":
        return HoloSeries._raw(self.dim, self.weight_cap, {k: c.conjugate() for k, c in self.terms.items()})

    def z_degree_component(self, d: int) -> "HoloSeries":
        n = self.dim
        return HoloSeries._raw(
            n, self.weight_cap, {k: c for k, c in self.terms.items() if sum(k[:n]) == d}
        )

    def w_poly(self) -> list[Scalar]:
        """Coefficient list in w of a z-independent series."""
        n = self.dim
        out = [ZERO] * (self.weight_cap // 2 + 1)
        for k, c in self.terms.items():
            if any(k[:n]):
                raise DegeneracyError("w_poly", "series depends on z")
            out[k[n]] = c
        return out

    @classmethod
    def from_w_poly(cls, dim: int, cap: int, coeffs: Sequence[Scalar]) -> "HoloSeries":
        terms = {}
        for m, c in enumerate(coeffs):
            c = Scalar.of(c)
            if not c.is_zero() and 2 * m <= cap:
                key = (0,) * dim + (m,)
                terms[key] = c
        return cls._raw(dim, cap, terms)

    def eval(self, zvals: Sequence[Scalar], wval: Scalar) -> Scalar:
        n = self.dim
        total = ZERO
        for k, c in self.terms.items():
            term = c
            for i in range(n):
                if k[i]:
                    term = term * zvals[i] ** k[i]
            if k[n]:
                term = term * wval ** k[n]
            total = total + term
        return total

    def to_obj(self) -> dict:
        n = self.dim
        items = []
        for k in sorted(self.terms):
            c = self.terms[k]
            items.append(
                {"alpha": list(k[:n]), "m": k[n], "re": rat_str(c.re), "im": rat_str(c.im)}
            )
        return {"dim": n, "weight_cap": self.weight_cap, "terms": items}

    @classmethod
    def from_obj(cls, obj: dict) -> "HoloSeries":
        n = int(obj["dim"])
        cap = int(obj["weight_cap"])
        terms = {}
        for t in obj["terms"]:
            key = tuple(t["alpha"]) + (int(t["m"]),)
            terms[key] = Scalar(rat(t["re"]), rat(t["im"]))
        return cls(n, cap, terms)


class VSeries(_Series):
    """Jet in (z, zbar, u, v) with v independent; key (alpha, beta, m, l)."""

    _HEAVY = 2

    @classmethod
    def _key_len(cls, dim: int) -> int:
        return 2 * dim + 2

    @classmethod
    def z_var(cls, dim: int, cap: int, i: int):
        key = [0] * (2 * dim + 2)
        key[i] = 1
        return cls.monomial(dim, cap, tuple(key))

    @classmethod
    def zbar_var(cls, dim: int, cap: int, i: int):
        key = [0] * (2 * dim + 2)
        key[dim + i] = 1
        return cls.monomial(dim, cap, tuple(key))

    @classmethod
    def u_var(cls, dim: int, cap: int):
        key = [0] * (2 * dim + 2)
        key[-2] = 1
        return cls.monomial(dim, cap, tuple(key))

    @classmethod
    def v_var(cls, dim: int, cap: int):
        key = [0] * (2 * dim + 2)
        key[-1] = 1
        return cls.monomial(dim, cap, tuple(key))

    def dz(self, i: int):
        return self.diff(i)

    def dzbar(self, i: int):
        return self.diff(self.dim + i)

    def du(self):
        return self.diff(2 * self.dim)

    def conjugate(self) -> "VSeries":
        n = self.dim
        out = {}
        for k, c in self.terms.items():
            nk = k[n : 2 * n] + k[:n] + k[2 * n :]
            out[nk] = c.conjugate()
        return VSeries._raw(n, self.weight_cap, out)

    def v_coefficients(self) -> list[BigradedSeries]:
        """Split sum_l P_l(z, zbar, u) v^l into the list [P_0, P_1, ...]."""
        n = self.dim
        lmax = self.weight_cap // 2
        buckets: list[dict] = [dict() for _ in range(lmax + 1)]
        for k, c in self.terms.items():
            buckets[k[-1]][k[:-1]] = c
        return [BigradedSeries._raw(n, self.weight_cap, b) for b in buckets]

    @classmethod
    def from_bigraded(cls, F: BigradedSeries, cap: int | None = None) -> "VSeries":
        cap = F.weight_cap if cap is None else cap
        return cls._raw(F.dim, cap, {k + (0,): c for k, c in F.terms.items() if cls._kw(k + (0,)) <= cap})

    def at_v_zero(self) -> BigradedSeries:
        return BigradedSeries._raw(
            self.dim, self.weight_cap, {k[:-1]: c for k, c in self.terms.items() if k[-1] == 0}
        )


# -----------------------------------------------------------------------------
# substitution machinery
# -----------------------------------------------------------------------------


def series_compose(src: _Series, targets: Sequence[_Series], proto: _Series) -> _Series:
    """Fully generic composition: substitute ``targets[slot]`` for each key slot.

    Suited to small jets (map components, linear substitutions); the heavy
    surface transforms go through the Taylor-shift path below.  Any target
    whose slot appears with positive exponent must have zero constant term
    or, for weight-2 slots, at least weight 2; otherwise the composition is
    not weight-filtered and is rejected.
    """
    cls = type(proto)
    dim, cap = proto.dim, proto.weight_cap
    klen = src._key_len(src.dim)
    if len(targets) != klen:
        raise DimensionMismatch("one target per source variable required")
    heavy = src._HEAVY
    zerokey = (0,) * cls._key_len(dim)
    for slot, t in enumerate(targets):
        if type(t) is not cls or t.dim != dim:
            raise DimensionMismatch("targets must live in the destination ring")
        used = any(k[slot] for k in src.terms)
        if used:
            minw = t.min_weight()
            need = 2 if slot >= klen - heavy else 1
            if minw is not None and minw < need or (not t.coeff(zerokey).is_zero()):
                raise ContractionError(
                    f"target for slot {slot} has a constant term or weight below {need}; "
                    "composition would not be weight-filtered"
                )
    pows: list[dict] = [{} for _ in range(klen)]

    def power(slot: int, e: int) -> _Series:
        cache = pows[slot]
        got = cache.get(e)
        if got is None:
            got = targets[slot] ** e
            cache[e] = got
        return got

    acc: dict = {}
    for key, c in src.terms.items():
        cur = None
        for slot, e in enumerate(key):
            if not e:
                continue
            p = power(slot, e)
            cur = p if cur is None else cur * p
            if cur.is_zero():
                break
        if cur is None:
            prev = acc.get(zerokey)
            s = c if prev is None else prev + c
            if s.is_zero():
                acc.pop(zerokey, None)
            else:
                acc[zerokey] = s
            continue
        for k2, c2 in cur.terms.items():
            p = c * c2
            prev = acc.get(k2)
            s = p if prev is None else prev + p
            if s.is_zero():
                acc.pop(k2, None)
            else:
                acc[k2] = s
    return cls._raw(dim, cap, acc)


def substitute(
    F: BigradedSeries,
    zmap: Sequence[HoloSeries],
    zbar_map: Sequence[HoloSeries],
    u_series: BigradedSeries,
) -> BigradedSeries:
    """Compose F with holomorphic z-targets, antiholomorphic zbar-targets and
    a real u-target, on the real locus w = u_series.

    ``zmap[i]`` is read as a function of (z, w) and evaluated with the
    identity z's and w = u_series; ``zbar_map[j]`` as a function of
    (zbar, wbar), evaluated with the identity zbar's and wbar equal to the
    conjugate of u_series.
    """
    n, cap = F.dim, min(F.weight_cap, u_series.weight_cap)
    if len(zmap) != n or len(zbar_map) != n:
        raise DimensionMismatch("need n z-targets and n zbar-targets")
    proto = BigradedSeries.zero(n, cap)
    z_ids = [BigradedSeries.z_var(n, cap, i) for i in range(n)]
    zb_ids = [BigradedSeries.zbar_var(n, cap, i) for i in range(n)]
    u_conj = u_series.conjugate()
    ztargets = [series_compose(h, z_ids + [u_series], proto) for h in zmap]
    zbtargets = [series_compose(h, zb_ids + [u_conj], proto) for h in zbar_map]
    return series_compose(F, ztargets + zbtargets + [u_series], proto)


def holo_to_v(h: HoloSeries, w_pows: Sequence[VSeries], bar_side: bool, cap: int) -> VSeries:
    """Evaluate a (z, w) jet at w = u + iv (or its bar at w = u - iv).

    The z's pass through to the z block (or the zbar block when
    ``bar_side``); the caller supplies cached powers of u ± iv and, for the
    bar side, a series whose coefficients are already conjugated.
    """
    n = h.dim
    acc: dict = {}
    kw = VSeries._kw
    for key, c in h.terms.items():
        al = key[:n]
        m = key[n]
        base = (0,) * n + al + (0, 0) if bar_side else al + (0,) * n + (0, 0)
        for k2, c2 in w_pows[m].terms.items():
            nk = _kadd(base, k2)
            if kw(nk) > cap:
                continue
            p = c * c2
            prev = acc.get(nk)
            s = p if prev is None else prev + p
            if s.is_zero():
                acc.pop(nk, None)
            else:
                acc[nk] = s
    return VSeries._raw(n, cap, acc)


def w_plus_minus_powers(n: int, cap: int) -> tuple[list[VSeries], list[VSeries]]:
    """Cached powers of u+iv and u-iv up to the cap."""
    wp = VSeries.u_var(n, cap) + VSeries.v_var(n, cap).scale(I)
    wm = VSeries.u_var(n, cap) + VSeries.v_var(n, cap).scale(-I)
    mmax = cap // 2
    wps = [VSeries.one(n, cap)]
    wms = [VSeries.one(n, cap)]
    for _ in range(mmax):
        wps.append(wps[-1] * wp)
        wms.append(wms[-1] * wm)
    return wps, wms


def taylor_substitute(
    F: BigradedSeries,
    zdeltas: Sequence[VSeries],
    zbardeltas: Sequence[VSeries],
    udelta: VSeries,
    cap: int,
) -> VSeries:
    """Exact evaluation of F(z + dz, zbar + dzb, u + du) as a VSeries.

    Uses the polynomial Taylor identity F(x+d) = sum d^g * (d/dx)^g F / g!,
    which is valid for arbitrary series increments; finiteness comes from
    every increment having weight >= 2.
    """
    n = F.dim
    base = VSeries.from_bigraded(F, cap)
    deltas = list(zdeltas) + list(zbardeltas) + [udelta]
    for d in deltas:
        mw = d.min_weight()
        if mw is not None and mw < 2:
            raise ContractionError("taylor_substitute increments must have weight >= 2")
    nslots = 2 * n + 1

    acc: dict = dict(base.terms)

    def add_into(series: VSeries):
        for k, c in series.terms.items():
            prev = acc.get(k)
            s = c if prev is None else prev + c
            if s.is_zero():
                acc.pop(k, None)
            else:
                acc[k] = s

    # depth-first over multi-indices, extending slots in nondecreasing order
    dmin = [d.min_weight() if d.min_weight() is not None else cap + 1 for d in deltas]

    def descend(deriv: VSeries, prod: VSeries, prod_minw: int, counts: list[int], min_slot: int):
        for slot in range(min_slot, nslots):
            d = deltas[slot]
            if d.is_zero():
                continue
            nminw = prod_minw + dmin[slot]
            if nminw > cap:
                continue
            nd = deriv.diff(slot).scale(Scalar(QQ(1, counts[slot] + 1)))
            if nd.is_zero():
                continue
            np = prod * d
            if np.is_zero():
                continue
            term = nd.truncate(cap - nminw).with_cap(cap) * np
            if term:
                add_into(term)
            counts[slot] += 1
            descend(nd, np, nminw, counts, slot)
            counts[slot] -= 1

    descend(base, VSeries.one(n, cap), 0, [0] * nslots, 0)
    return VSeries._raw(n, cap, acc)


def linear_substitute(F: BigradedSeries, L, cap: int | None = None) -> BigradedSeries:
    """F(Lz, conj(L) zbar, u) for an exact constant matrix L."""
    n = F.dim
    cap = F.weight_cap if cap is None else cap
    zforms = []
    zbforms = []
    for i in range(n):
        zt = {}
        zbt = {}
        for j in range(n):
            c = Scalar.of(L[i][j])
            if not c.is_zero():
                key = [0] * (2 * n + 1)
                key[j] = 1
                zt[tuple(key)] = c
                key2 = [0] * (2 * n + 1)
                key2[n + j] = 1
                zbt[tuple(key2)] = c.conjugate()
        zforms.append(BigradedSeries._raw(n, cap, zt))
        zbforms.append(BigradedSeries._raw(n, cap, zbt))

    pc: list[dict] = [{} for _ in range(2 * n)]

    def fpow(idx: int, e: int, forms) -> BigradedSeries:
        cache = pc[idx]
        got = cache.get(e)
        if got is None:
            got = forms ** e
            cache[e] = got
        return got

    acc: dict = {}
    ushift = [0] * (2 * n + 1)
    for key, c in F.terms.items():
        cur = None
        for i in range(n):
            if key[i]:
                p = fpow(i, key[i], zforms[i])
                cur = p if cur is None else cur * p
        for i in range(n):
            if key[n + i]:
                p = fpow(n + i, key[n + i], zbforms[i])
                cur = p if cur is None else cur * p
        m = key[2 * n]
        if cur is None:
            nk = tuple(ushift[:-1]) + (m,)
            prev = acc.get(nk)
            s = c if prev is None else prev + c
            if not s.is_zero():
                acc[nk] = s
            elif nk in acc:
                del acc[nk]
            continue
        for k2, c2 in cur.terms.items():
            nk = k2[:-1] + (k2[-1] + m,)
            if BigradedSeries._kw(nk) > cap:
                continue
            p = c * c2
            prev = acc.get(nk)
            s = p if prev is None else prev + p
            if s.is_zero():
                acc.pop(nk, None)
            else:
                acc[nk] = s
    return BigradedSeries._raw(n, cap, acc)


def bigraded_to_holo(
    F: BigradedSeries,
    zdeltas: Sequence[HoloSeries],
    zbar_targets: Sequence[HoloSeries],
    u_target: HoloSeries,
    cap: int,
) -> HoloSeries:
    """F(z + zdeltas, zbar_targets, u_target) inside the holomorphic ring.

    The z block is shifted by arbitrary increments (Taylor identity); the
    zbar block and the u slot are substituted outright by grouping keys, so
    no per-monomial products are formed.  All non-identity inputs must have
    weight >= 2 apart from the zbar targets, which only need weight >= 1.
    """
    n = F.dim
    hlen = n + 1
    one = HoloSeries.one(n, cap)
    pcache: dict = {((0,) * n, 0): one}

    def prod_bm(beta: tuple, m: int) -> HoloSeries:
        got = pcache.get((beta, m))
        if got is not None:
            return got
        if m > 0:
            got = prod_bm(beta, m - 1) * u_target
        else:
            j = next(i for i, e in enumerate(beta) if e)
            nb = list(beta)
            nb[j] -= 1
            got = prod_bm(tuple(nb), 0) * zbar_targets[j]
        pcache[(beta, m)] = got
        return got

    kw = HoloSeries._kw

    def inner(G: BigradedSeries) -> HoloSeries:
        acc: dict = {}
        for key, c in G.terms.items():
            al = key[:n]
            beta = key[n : 2 * n]
            m = key[2 * n]
            base = prod_bm(beta, m)
            for k2, c2 in base.terms.items():
                nk = _kadd(al + (0,), k2)
                if kw(nk) > cap:
                    continue
                p = c * c2
                prev = acc.get(nk)
                s = p if prev is None else prev + p
                if s.is_zero():
                    acc.pop(nk, None)
                else:
                    acc[nk] = s
        return HoloSeries._raw(n, cap, acc)

    total = inner(F)

    def descend(D: BigradedSeries, prod: HoloSeries, counts: list[int], min_slot: int):
        nonlocal total
        for i in range(min_slot, n):
            d = zdeltas[i]
            if d.is_zero():
                continue
            nd = D.dz(i).scale(Scalar(QQ(1, counts[i] + 1)))
            if nd.is_zero():
                continue
            np_ = prod * d
            if np_.is_zero():
                continue
            term = inner(nd) * np_
            if term:
                total = total + term
            counts[i] += 1
            descend(nd, np_, counts, i)
            counts[i] -= 1

    if any(not d.is_zero() for d in zdeltas):
        descend(F, one, [0] * n, 0)
    return total


# -----------------------------------------------------------------------------
# scalar coefficient lists in one real/holomorphic variable of weight 2
# -----------------------------------------------------------------------------


def upoly_trim(a: list) -> list:
    while a and a[-1].is_zero():
        a.pop()
    return a


def upoly_add(a: list, b: list) -> list:
    m = max(len(a), len(b))
    out = []
    for k in range(m):
        x = a[k] if k < len(a) else ZERO
        y = b[k] if k < len(b) else ZERO
        out.append(x + y)
    return upoly_trim(out)


def upoly_scale(a: list, s: Scalar) -> list:
    return upoly_trim([x * s for x in a])


def upoly_mul(a: list, b: list, kmax: int) -> list:
    out = [ZERO] * (kmax + 1)
    for i, x in enumerate(a):
        if i > kmax or x.is_zero():
            continue
        for j, y in enumerate(b):
            if i + j > kmax:
                break
            out[i + j] = out[i + j] + x * y
    return upoly_trim(out)


def upoly_inv(a: list, kmax: int) -> list:
    if not a or a[0].is_zero():
        raise DegeneracyError("series inverse", "vanishing constant term")
    inv0 = ONE / a[0]
    out = [inv0]
    for k in range(1, kmax + 1):
        acc = ZERO
        for j in range(1, min(k, len(a) - 1) + 1):
            acc = acc + a[j] * out[k - j]
        out.append(-inv0 * acc)
    return upoly_trim(out)


def upoly_deriv(a: list) -> list:
    return upoly_trim([a[k] * k for k in range(1, len(a))])


def upoly_conj(a: list) -> list:
    return [x.conjugate() for x in a]


def upoly_compose(a: list, b: list, kmax: int) -> list:
    """a(b(t)) for b with zero constant term."""
    if b and not b[0].is_zero():
        raise ContractionError("inner series must have zero constant term")
    out = [ZERO] * (kmax + 1)
    power = [ONE]
    if a:
        out[0] = a[0]
    for k in range(1, len(a)):
        power = upoly_mul(power, b, kmax)
        if not power:
            break
        if a[k].is_zero():
            continue
        for j, y in enumerate(power):
            if j <= kmax:
                out[j] = out[j] + a[k] * y
    return upoly_trim(out)


def upoly_reversion(a: list, kmax: int) -> list:
    """g with a(g(t)) = t, for a with a[0] = 0 and a[1] != 0."""
    if not a or not a[0].is_zero() or len(a) < 2 or a[1].is_zero():
        raise DegeneracyError("series reversion", "need a(0) = 0, a'(0) != 0")
    inv1 = ONE / a[1]
    g = [ZERO, inv1]
    for k in range(2, kmax + 1):
        comp = upoly_compose(a, g + [ZERO], k)
        err = comp[k] if len(comp) > k else ZERO
        g.append(-err * inv1)
    return upoly_trim(g)


def upoly_sqrt(a: list, kmax: int) -> list:
    """Square root of a series with constant term 1."""
    if not a or a[0] != ONE:
        raise DegeneracyError("series sqrt", "constant term must be 1")
    x = upoly_add(a, [Scalar(-1)])
    out = [ONE]
    coeff = ONE
    power = [ONE]
    for k in range(1, kmax + 1):
        coeff = coeff * Scalar(QQ(3 - 2 * k, 2 * k))  # binomial(1/2, k) recursion
        power = upoly_mul(power, x, kmax)
        if not power:
            break
        out = upoly_add(out, upoly_scale(power, coeff))
    return out


# -----------------------------------------------------------------------------
# implicit solve for v
# -----------------------------------------------------------------------------


def _implicit_loop(evaluate, b0: Scalar, dim: int, cap: int) -> BigradedSeries:
    if b0 == ONE:
        raise ContractionError("v-linear part has constant coefficient 1; 1 - B is not invertible", 0)
    corr = ONE / (ONE - b0)
    v = BigradedSeries.zero(dim, cap)
    for k in range(2, cap + 1):
        r = evaluate(v, k)
        delta = (r - v.truncate(k)).weight_slice(k).with_cap(cap)
        if delta:
            v = v + delta.scale(corr)
    resid = (evaluate(v, cap).with_cap(cap) - v).truncate(cap)
    if resid:
        raise ContractionError("implicit v solve did not close", resid.min_weight())
    return v


def solve_implicit_v(rhs, W: int, dim: int | None = None) -> BigradedSeries:
    """Solve v = rhs(z, zbar, u, v) for the unique jet v(z, zbar, u).

    ``rhs`` is either a VSeries (a polynomial in the independent v) or a
    procedure mapping a candidate BigradedSeries v to the evaluated
    right-hand side.  The v-free part must have weight >= 2 and no constant
    term; the weight-0 coefficient b0 of the v-linear part must differ from
    1.  Each weight level is closed exactly with the factor (1 - b0)^-1, so
    the loop finishes in at most W passes.
    """
    if isinstance(rhs, VSeries):
        n = rhs.dim
        parts = rhs.v_coefficients()
        while parts and parts[-1].is_zero():
            parts.pop()
        if not parts:
            parts = [BigradedSeries.zero(n, W)]
        zk = (0,) * (2 * n + 1)
        a0 = parts[0]
        if not a0.coeff(zk).is_zero() or (a0.min_weight() or 2) < 2:
            raise ContractionError("v-free part must have weight >= 2 and no constant term")
        b0 = parts[1].coeff(zk) if len(parts) > 1 else ZERO
        trunc_cache: dict = {}

        def evaluate(v: BigradedSeries, klimit: int) -> BigradedSeries:
            pk = trunc_cache.get(klimit)
            if pk is None:
                pk = [p.truncate(klimit) for p in parts]
                trunc_cache[klimit] = pk
            vt = v.truncate(klimit)
            acc = pk[-1]
            for l in range(len(pk) - 2, -1, -1):
                acc = acc * vt + pk[l]
            return acc

        return _implicit_loop(evaluate, b0, n, W)

    if dim is None:
        raise DimensionMismatch("dim is required for a procedural rhs")
    zero = BigradedSeries.zero(dim, W)
    r0 = rhs(zero)
    zk = (0,) * (2 * dim + 1)
    if not r0.coeff(zk).is_zero() or (r0.min_weight() or 2) < 2:
        raise ContractionError("v-free part must have weight >= 2 and no constant term")
    probe = BigradedSeries.u_var(dim, W)
    ukey = zk[:-1] + (1,)
    b0 = (rhs(probe) - r0).coeff(ukey)

    def evaluate(v: BigradedSeries, klimit: int) -> BigradedSeries:
        return rhs(v)

    return _implicit_loop(evaluate, b0, dim, W)


# -----------------------------------------------------------------------------
# holomorphic map jets
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class MapJet:
    """An origin-preserving holomorphic jet (f, g): C^n x C -> C^n x C."""

    f: tuple
    g: HoloSeries

    def __post_init__(self):
        n = self.g.dim
        zero = (0,) * (n + 1)
        for comp in list(self.f) + [self.g]:
            if not isinstance(comp, HoloSeries) or comp.dim != n:
                raise DimensionMismatch("map components must be HoloSeries of one dim")
            if not comp.coeff(zero).is_zero():
                raise DimensionMismatch("map must preserve the origin")

    @property
    def dim(self) -> int:
        return self.g.dim

    @property
    def weight_cap(self) -> int:
        return self.g.weight_cap

    @staticmethod
    def identity(dim: int, cap: int) -> "MapJet":
        return MapJet(
            tuple(HoloSeries.z_var(dim, cap, i) for i in range(dim)),
            HoloSeries.w_var(dim, cap),
        )

    def jacobian0(self):
        n = self.dim
        rows = []
        for comp in list(self.f) + [self.g]:
            row = []
            for j in range(n):
                key = [0] * (n + 1)
                key[j] = 1
                row.append(comp.coeff(tuple(key)))
            key = [0] * (n + 1)
            key[n] = 1
            row.append(comp.coeff(tuple(key)))
            rows.append(tuple(row))
        return tuple(rows)

    def compose(self, inner: "MapJet") -> "MapJet":
        """self after inner: (self o inner)(z, w)."""
        n = self.dim
        cap = min(self.weight_cap, inner.weight_cap)
        proto = HoloSeries.zero(n, cap)
        targets = [h.truncate(cap) for h in inner.f] + [inner.g.truncate(cap)]
        f = tuple(series_compose(c, targets, proto) for c in self.f)
        g = series_compose(self.g, targets, proto)
        return MapJet(f, g)

    def invert(self) -> "MapJet":
        """The inverse jet; requires an invertible linear part."""
        from . import linalg

        n, cap = self.dim, self.weight_cap
        L = self.jacobian0()
        Linv = linalg.mat_inv(L)
        lin_keys = []
        for j in range(n + 1):
            key = [0] * (n + 1)
            key[j] = 1
            lin_keys.append(tuple(key))
        nonlin = []
        for comp in list(self.f) + [self.g]:
            terms = {k: c for k, c in comp.terms.items() if k not in lin_keys}
            nonlin.append(HoloSeries._raw(n, cap, terms))

        cur = MapJet.identity(n, cap)
        proto = HoloSeries.zero(n, cap)
        for _ in range(cap + 2):
            targets = list(cur.f) + [cur.g]
            rem = [series_compose(nl, targets, proto) for nl in nonlin]
            comps = []
            for i in range(n + 1):
                base = HoloSeries.z_var(n, cap, i) if i < n else HoloSeries.w_var(n, cap)
                comps.append(base - rem[i])
            new = []
            for i in range(n + 1):
                acc = HoloSeries.zero(n, cap)
                for j in range(n + 1):
                    if not Linv[i][j].is_zero():
                        acc = acc + comps[j].scale(Linv[i][j])
                new.append(acc)
            nxt = MapJet(tuple(new[:n]), new[n])
            if nxt == cur:
                break
            cur = nxt
        check = self.compose(cur)
        if check != MapJet.identity(n, cap):
            raise ContractionError("map inversion did not close")
        return cur

    def truncate(self, cap: int) -> "MapJet":
        return MapJet(tuple(h.truncate(cap) for h in self.f), self.g.truncate(cap))

    def __eq__(self, other):
        if not isinstance(other, MapJet):
            return NotImplemented
        return self.f == other.f and self.g == other.g

    def to_obj(self) -> dict:
        return {"f": [h.to_obj() for h in self.f], "g": self.g.to_obj()}

    @staticmethod
    def from_obj(obj: dict) -> "MapJet":
        return MapJet(
            tuple(HoloSeries.from_obj(o) for o in obj["f"]),
            HoloSeries.from_obj(obj["g"]),
        )


# -----------------------------------------------------------------------------
# surface transform along a holomorphic map
# -----------------------------------------------------------------------------


def transform_surface(
    F: BigradedSeries,
    Zvec: Sequence[HoloSeries],
    Wser: HoloSeries,
    cap: int | None = None,
) -> BigradedSeries:
    """Defining function of the image surface.

    ``Zvec``/``Wser`` express the OLD coordinates as holomorphic jets of the
    NEW ones: z_old = Z(z, w), w_old = W(z, w).  Starting from
    Im w_old = F(z_old, zbar_old, Re w_old), the new defining function is the
    unique implicit solution v = F_new(z, zbar, u) of

        v = v - Im W(z, u+iv) + F(Z(z, u+iv), conj Z(zbar, u-iv), Re W).
    """
    from . import linalg

    n = F.dim
    cap = F.weight_cap if cap is None else cap
    wps, wms = w_plus_minus_powers(n, cap)

    # constant linear part of the z-targets
    L = []
    for Zi in Zvec:
        row = []
        for j in range(n):
            key = [0] * (n + 1)
            key[j] = 1
            row.append(Zi.coeff(tuple(key)))
        L.append(tuple(row))
    L = tuple(L)

    Fbase = F.truncate(cap) if F.weight_cap != cap else F
    ident = linalg.identity(n)
    if not linalg.mat_eq(L, ident):
        Linv = linalg.mat_inv(L)
        Fbase = linear_substitute(Fbase, L, cap)
    else:
        Linv = None

    zdeltas = []
    zbardeltas = []
    for i in range(n):
        if Linv is None:
            delta_h = Zvec[i] - HoloSeries.z_var(n, Zvec[i].weight_cap, i)
            dv = holo_to_v(delta_h, wps, False, cap)
            dbv = holo_to_v(delta_h.conjugate(), wms, True, cap)
        else:
            acc = HoloSeries.zero(n, Zvec[i].weight_cap)
            for j in range(n):
                if not Linv[i][j].is_zero():
                    acc = acc + Zvec[j].scale(Linv[i][j])
            delta_h = acc - HoloSeries.z_var(n, acc.weight_cap, i)
            dv = holo_to_v(delta_h, wps, False, cap)
            dbv = holo_to_v(delta_h.conjugate(), wms, True, cap)
        zdeltas.append(dv)
        zbardeltas.append(dbv)

    Wp = holo_to_v(Wser, wps, False, cap)
    Wm = holo_to_v(Wser.conjugate(), wms, True, cap)
    u_old = (Wp + Wm).scale(HALF)
    im_w = (Wp - Wm).scale(Scalar(0, QQ(-1, 2)))  # division by 2i
    udelta = u_old - VSeries.u_var(n, cap)

    shifted = taylor_substitute(Fbase, zdeltas, zbardeltas, udelta, cap)
    rhs = VSeries.v_var(n, cap) + shifted - im_w
    return solve_implicit_v(rhs, cap)
