"""Sparse multivariate polynomials with float coefficients.

A monomial is a tuple of (variable index, exponent) pairs, sorted by
variable index, with every exponent >= 1.  The empty tuple is the unit
monomial.  A polynomial stores a hash map from monomial to coefficient,
so merging terms during sums and products is amortised O(1) per term.

Coefficients whose magnitude drops below ``CLEANUP_EPS`` are dropped on
write.  That threshold is far below every tolerance used by the solvers,
so cleanup never changes a result, it only stops float noise from
accumulating into phantom terms.

Example (variables x0, x1):

    x0^2 * x1 + 3   ->   {(((0, 2), (1, 1))): 1.0, (): 3.0}
"""

from __future__ import annotations

import numpy as np

# Coefficients below this magnitude are dropped when a polynomial is built.
CLEANUP_EPS = 1e-30

# The unit monomial (degree 0).
MONO_ONE = ()


def make_mono(pairs):
    """Build a monomial from (variable, exponent) pairs, validating invariants."""
    pairs = tuple(sorted((int(v), int(e)) for v, e in pairs if e != 0))
    last = -1
    for v, e in pairs:
        if v < 0:
            raise ValueError(f"negative variable index {v}")
        if v == last:
            raise ValueError(f"repeated variable index {v}")
        if e < 1:
            raise ValueError(f"exponent {e} must be >= 1")
        last = v
    return pairs


def mono_mul(a, b):
    """Product of two monomials (merge of sorted pair lists)."""
    if not a:
        return b
    if not b:
        return a
    out = []
    i = j = 0
    na, nb = len(a), len(b)
    while i < na and j < nb:
        va, ea = a[i]
        vb, eb = b[j]
        if va < vb:
            out.append(a[i])
            i += 1
        elif vb < va:
            out.append(b[j])
            j += 1
        else:
            out.append((va, ea + eb))
            i += 1
            j += 1
    out.extend(a[i:])
    out.extend(b[j:])
    return tuple(out)


def mono_degree(m):
    return sum(e for _, e in m)


def mono_key(m):
    """Deterministic sort key: degree first, then the pair tuple itself."""
    return (mono_degree(m), m)


def mono_str(m):
    if not m:
        return "1"
    return "*".join(f"x{v}" + (f"^{e}" if e > 1 else "") for v, e in m)


class Polynomial:
    """Immutable-by-convention sparse polynomial over float64 coefficients.

    ``terms`` maps monomials to coefficients; ``nvars`` is a variable-count
    hint (at least 1 + the largest index that appears).  Arithmetic returns
    new objects and never mutates inputs, so polynomials can be shared
    freely across threads.
    """

    __slots__ = ("terms", "nvars")

    def __init__(self, terms=None, nvars=0):
        clean = {}
        max_index = -1
        if terms:
            for mono, coeff in terms.items():
                c = float(coeff)
                if abs(c) < CLEANUP_EPS:
                    continue
                clean[mono] = c
                if mono and mono[-1][0] > max_index:
                    max_index = mono[-1][0]
        self.terms = clean
        self.nvars = max(int(nvars), max_index + 1)

    # -- constructors -------------------------------------------------

    @classmethod
    def zero(cls, nvars=0):
        return cls({}, nvars)

    @classmethod
    def constant(cls, value, nvars=0):
        return cls({MONO_ONE: float(value)}, nvars)

    @classmethod
    def variable(cls, index, nvars=0):
        if index < 0:
            raise ValueError("variable index must be non-negative")
        return cls({((index, 1),): 1.0}, max(nvars, index + 1))

    @classmethod
    def from_terms(cls, pairs, nvars=0):
        """Build from an iterable of (mono-pairs, coefficient), validating monomials."""
        terms = {}
        for pairs_, coeff in pairs:
            mono = make_mono(pairs_)
            terms[mono] = terms.get(mono, 0.0) + float(coeff)
        return cls(terms, nvars)

    # -- queries ------------------------------------------------------

    def degree(self):
        if not self.terms:
            return 0
        return max(mono_degree(m) for m in self.terms)

    def max_index(self):
        """Largest variable index actually used, or -1 for constants."""
        best = -1
        for m in self.terms:
            if m and m[-1][0] > best:
                best = m[-1][0]
        return best

    def coefficient(self, pairs):
        return self.terms.get(make_mono(pairs), 0.0)

    def is_zero(self):
        return not self.terms

    def __len__(self):
        return len(self.terms)

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def allclose(self, other, tol=1e-12):
        """Term-for-term comparison with an absolute/relative mixed tolerance."""
        keys = set(self.terms) | set(other.terms)
        for k in keys:
            a = self.terms.get(k, 0.0)
            b = other.terms.get(k, 0.0)
            if abs(a - b) > tol * max(1.0, abs(a), abs(b)):
                return False
        return True

    # -- arithmetic ---------------------------------------------------

    def add(self, other, scale=1.0):
        """Return self + scale * other."""
        out = dict(self.terms)
        for mono, coeff in other.terms.items():
            out[mono] = out.get(mono, 0.0) + scale * coeff
        return Polynomial(out, max(self.nvars, other.nvars))

    def mul(self, other):
        """Distributive product with merged monomials."""
        if not self.terms or not other.terms:
            return Polynomial({}, max(self.nvars, other.nvars))
        out = {}
        for ma, ca in self.terms.items():
            for mb, cb in other.terms.items():
                mono = mono_mul(ma, mb)
                out[mono] = out.get(mono, 0.0) + ca * cb
        return Polynomial(out, max(self.nvars, other.nvars))

    def scaled(self, factor):
        return Polynomial({m: c * factor for m, c in self.terms.items()}, self.nvars)

    def __add__(self, other):
        if isinstance(other, Polynomial):
            return self.add(other)
        return self.add(Polynomial.constant(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Polynomial):
            return self.add(other, -1.0)
        return self.add(Polynomial.constant(other), -1.0)

    def __rsub__(self, other):
        return Polynomial.constant(other, self.nvars).add(self, -1.0)

    def __neg__(self):
        return self.scaled(-1.0)

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            return self.mul(other)
        return self.scaled(float(other))

    __rmul__ = __mul__

    def __pow__(self, n):
        if not isinstance(n, int) or n < 0:
            raise ValueError("only non-negative integer powers")
        out = Polynomial.constant(1.0, self.nvars)
        for _ in range(n):
            out = out.mul(self)
        return out

    # -- calculus -----------------------------------------------------

    def differentiate(self, v):
        """Partial derivative with respect to variable v (power rule)."""
        out = {}
        for mono, coeff in self.terms.items():
            for k, (var, exp) in enumerate(mono):
                if var == v:
                    if exp == 1:
                        new = mono[:k] + mono[k + 1:]
                    else:
                        new = mono[:k] + ((var, exp - 1),) + mono[k + 1:]
                    out[new] = out.get(new, 0.0) + coeff * exp
                    break
                if var > v:
                    break
        return Polynomial(out, self.nvars)

    def integrate(self, v):
        """Antiderivative in variable v with integration constant 0.

        Every term of the result contains v with a positive exponent.
        """
        out = {}
        for mono, coeff in self.terms.items():
            placed = False
            for k, (var, exp) in enumerate(mono):
                if var == v:
                    new = mono[:k] + ((var, exp + 1),) + mono[k + 1:]
                    out[new] = out.get(new, 0.0) + coeff / (exp + 1)
                    placed = True
                    break
                if var > v:
                    new = mono[:k] + ((v, 1),) + mono[k:]
                    out[new] = out.get(new, 0.0) + coeff
                    placed = True
                    break
            if not placed:
                new = mono + ((v, 1),)
                out[new] = out.get(new, 0.0) + coeff
        return Polynomial(out, max(self.nvars, v + 1))

    def gradient(self):
        return [self.differentiate(v) for v in range(self.nvars)]

    def hessian(self):
        """Matrix of second partials; the lower triangle mirrors the upper."""
        n = self.nvars
        rows = [[None] * n for _ in range(n)]
        for i in range(n):
            gi = self.differentiate(i)
            for j in range(i, n):
                hij = gi.differentiate(j)
                rows[i][j] = hij
                rows[j][i] = hij
        return rows

    # -- evaluation ---------------------------------------------------

    def evaluate(self, x):
        """Value at a point; x must cover every variable index used."""
        used = self.max_index()
        if used >= len(x):
            raise ValueError(
                f"point of length {len(x)} does not cover variable x{used}")
        total = 0.0
        for mono, coeff in self.terms.items():
            term = coeff
            for var, exp in mono:
                xv = x[var]
                term *= xv if exp == 1 else xv ** exp
            total += term
        return total

    def substitute(self, v, value):
        """Replace variable v by a constant; the result does not mention v."""
        value = float(value)
        out = {}
        for mono, coeff in self.terms.items():
            c = coeff
            new = mono
            for k, (var, exp) in enumerate(mono):
                if var == v:
                    c = coeff * value ** exp
                    new = mono[:k] + mono[k + 1:]
                    break
                if var > v:
                    break
            out[new] = out.get(new, 0.0) + c
        return Polynomial(out, self.nvars)

    # -- text form ----------------------------------------------------

    def to_text(self):
        """One term per line: ``coeff i1^e1 i2^e2 ...``, unit monomial as ``coeff 1``.

        Coefficients print with shortest-roundtrip decimals, so parsing the
        text reproduces the polynomial bit-exactly for finite floats.
        """
        lines = []
        for mono in sorted(self.terms, key=mono_key):
            coeff = self.terms[mono]
            if mono:
                body = " ".join(f"{v}^{e}" for v, e in mono)
            else:
                body = "1"
            lines.append(f"{coeff!r} {body}")
        return "\n".join(lines)

    @classmethod
    def from_text(cls, text, nvars=0):
        terms = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            coeff = float(fields[0])
            if len(fields) == 2 and fields[1] == "1":
                mono = MONO_ONE
            else:
                pairs = []
                for f in fields[1:]:
                    v, _, e = f.partition("^")
                    pairs.append((int(v), int(e)))
                mono = make_mono(pairs)
            terms[mono] = terms.get(mono, 0.0) + coeff
        return cls(terms, nvars)

    def __repr__(self):
        if not self.terms:
            return "Polynomial(0)"
        parts = []
        for mono in sorted(self.terms, key=mono_key):
            parts.append(f"{self.terms[mono]:g}*{mono_str(mono)}")
        return "Polynomial(" + " + ".join(parts) + ")"


class CompiledPolys:
    """Vectorised evaluator for a fixed list of polynomials.

    Flattens every term of every polynomial into parallel numpy arrays so
    that repeated evaluation (Newton iterations, grid scans) runs at array
    speed instead of per-term Python speed.  Values agree with
    ``Polynomial.evaluate`` up to float summation order.
    """

    def __init__(self, polys, nvars):
        self.npolys = len(polys)
        self.nvars = int(nvars)
        coeffs = []
        out_index = []
        factor_var = []
        factor_exp = []
        term_start = []
        pos = 0
        for k, p in enumerate(polys):
            if p.max_index() >= nvars:
                raise ValueError("polynomial uses a variable beyond nvars")
            for mono in sorted(p.terms, key=mono_key):
                coeffs.append(p.terms[mono])
                out_index.append(k)
                term_start.append(pos)
                if mono:
                    for v, e in mono:
                        factor_var.append(v)
                        factor_exp.append(e)
                        pos += 1
                else:
                    # constant term: one sentinel factor that evaluates to 1
                    factor_var.append(nvars)
                    factor_exp.append(1)
                    pos += 1
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.out_index = np.asarray(out_index, dtype=np.intp)
        self.factor_var = np.asarray(factor_var, dtype=np.intp)
        self.factor_exp = np.asarray(factor_exp, dtype=np.intp)
        self.term_start = np.asarray(term_start, dtype=np.intp)
        self._needs_pow = bool((self.factor_exp > 1).any())

    def evaluate(self, x):
        """Values of all polynomials at one point; returns shape (npolys,)."""
        out = np.zeros(self.npolys)
        if self.coeffs.size == 0:
            return out
        xx = np.empty(self.nvars + 1)
        xx[:self.nvars] = x[:self.nvars]
        xx[self.nvars] = 1.0
        fv = xx[self.factor_var]
        if self._needs_pow:
            mask = self.factor_exp > 1
            fv[mask] = fv[mask] ** self.factor_exp[mask]
        tv = np.multiply.reduceat(fv, self.term_start)
        return np.bincount(self.out_index, weights=self.coeffs * tv,
                           minlength=self.npolys)

    def evaluate_many(self, pts):
        """Values at a batch of points; pts is (N, nvars), result (N, npolys)."""
        pts = np.asarray(pts, dtype=float)
        n = pts.shape[0]
        out = np.zeros((n, self.npolys))
        if self.coeffs.size == 0:
            return out
        xx = np.empty((n, self.nvars + 1))
        xx[:, :self.nvars] = pts[:, :self.nvars]
        xx[:, self.nvars] = 1.0
        fv = xx[:, self.factor_var]
        if self._needs_pow:
            mask = self.factor_exp > 1
            fv[:, mask] = fv[:, mask] ** self.factor_exp[mask]
        tv = np.multiply.reduceat(fv, self.term_start, axis=1)
        weighted = tv * self.coeffs
        for k in range(self.npolys):
            sel = self.out_index == k
            out[:, k] = weighted[:, sel].sum(axis=1)
        return out
