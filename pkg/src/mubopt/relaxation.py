"""Moment relaxations: monomial linearisation, moment matrices, and the
lambda-feasibility program for a region of the variable box.

Every monomial x_i x_j ... of degree at most twice the relaxation level
becomes one moment variable; the level-k moment matrix is indexed by the
deduplicated monomials of degree <= k and its (alpha, beta) entry is the
moment of alpha*beta.  A region's program consists of the linearised
equalities (at level 2 also their products with low-degree monomials),
the linearised symmetry inequalities, per-variable box rows, diagonal
secant cuts x_ii <= (l+u) x_i - l u, and the PSD constraint
M(y) + lambda * I >= 0 with objective min lambda.  A strictly positive
optimum certifies that the region contains no solution.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np
import scipy.sparse

from .conic import ConicProgram
from .poly import MONO_ONE, Polynomial, mono_mul

# Hard floor placed on lambda so the program is always bounded; the unit
# moment pins the matrix's top-left entry to 1, so the true optimum can
# never go below -1, let alone -dim.
def _lambda_floor(dim):
    return -float(dim)


class LevelError(ValueError):
    """A polynomial's degree exceeds what the relaxation level supports."""


def _mono_of(combo):
    """Monomial tuple from a sorted variable multiset."""
    if not combo:
        return MONO_ONE
    pairs = []
    prev = combo[0]
    count = 0
    for v in combo:
        if v == prev:
            count += 1
        else:
            pairs.append((prev, count))
            prev = v
            count = 1
    pairs.append((prev, count))
    return tuple(pairs)


def _monos_up_to(nvars, degree):
    out = []
    for k in range(degree + 1):
        for combo in combinations_with_replacement(range(nvars), k):
            out.append(_mono_of(combo))
    return out


@dataclass(frozen=True)
class MomentLayout:
    """Basis monomials (degree <= level) and the moment-variable indexing.

    ``index`` maps every distinct monomial of degree <= 2*level to a
    moment-variable index, with the unit monomial at index 0 (pinned to 1).
    """

    level: int
    nvars: int
    basis: tuple
    index: dict

    @property
    def count(self):
        return len(self.index)

    @property
    def basis_size(self):
        return len(self.basis)


def make_layout(nvars, level):
    if level not in (1, 2):
        raise LevelError(f"relaxation level must be 1 or 2, got {level}")
    basis = tuple(_monos_up_to(nvars, level))
    index = {m: k for k, m in enumerate(_monos_up_to(nvars, 2 * level))}
    return MomentLayout(level=level, nvars=nvars, basis=basis, index=index)


def linearize(p, layout):
    """Linear row over moment variables plus constant, with exact coefficients."""
    coefs = {}
    const = 0.0
    for mono, coeff in p.terms.items():
        if not mono:
            const += coeff
            continue
        idx = layout.index.get(mono)
        if idx is None:
            raise LevelError(
                f"monomial of degree {sum(e for _, e in mono)} exceeds level "
                f"{layout.level} (max degree {2 * layout.level})")
        coefs[idx] = coefs.get(idx, 0.0) + coeff
    return coefs, const


def moment_matrix(layout):
    """Symmetric matrix of moment indices; entry (a, b) indexes basis_a * basis_b."""
    b = layout.basis_size
    out = np.empty((b, b), dtype=np.intp)
    for i in range(b):
        for j in range(i, b):
            idx = layout.index[mono_mul(layout.basis[i], layout.basis[j])]
            out[i, j] = idx
            out[j, i] = idx
    return out


@dataclass
class RelaxedProblem:
    """Linear rows over moment variables plus the PSD block description.

    ``eq_rows`` are (coefficient dict, constant) meaning row + const = 0;
    ``ineq_rows`` mean row + const >= 0.  ``psd`` is the moment-index
    matrix; lambda rides on its diagonal with objective min lambda and the
    hard bound lambda >= lambda_bound.
    """

    layout: MomentLayout
    eq_rows: list
    ineq_rows: list
    psd: np.ndarray
    lambda_bound: float


@dataclass
class ExtractedPoint:
    """First-order moments and the per-variable square-consistency errors."""

    point: np.ndarray
    errors: np.ndarray
    max_error: float
    argmax: int


def extract(moments, layout):
    """Extract x-hat and err(x_i) = (x_ii - x_i^2)^2 from a moment vector.

    ``moments`` is the full moment vector including the unit entry at
    index 0.  Ties in the largest error go to the lowest variable index.
    """
    moments = np.asarray(moments, dtype=float)
    n = layout.nvars
    point = np.array([moments[layout.index[((i, 1),)]] for i in range(n)])
    diag = np.array([moments[layout.index[((i, 2),)]] for i in range(n)])
    errors = (diag - point * point) ** 2
    argmax = int(np.argmax(errors)) if n else 0
    max_error = float(errors[argmax]) if n else 0.0
    return ExtractedPoint(point=point, errors=errors,
                          max_error=max_error, argmax=argmax)


def _product_rows(system, layout):
    """Equality rows multiplied by monomials of degree >= 1 (level 2 only)."""
    rows = []
    if layout.level < 2:
        return rows
    max_deg = 2 * layout.level
    multipliers = [m for m in _monos_up_to(layout.nvars, max_deg) if m]
    for h in system.equalities:
        room = max_deg - h.degree()
        for mult in multipliers:
            if sum(e for _, e in mult) > room:
                continue
            shifted = Polynomial(
                {mono_mul(mono, mult): c for mono, c in h.terms.items()},
                h.nvars)
            rows.append(linearize(shifted, layout))
    return rows


class RegionAssembler:
    """Caches everything region-independent for one (system, level) pair.

    The layout, moment matrix, linearised equalities (with level-2
    products), and symmetry rows never change between regions; only the
    box and secant rows do.
    """

    def __init__(self, system, level, products=True, mccormick=False):
        self.system = system
        self.level = level
        self.products = products
        self.mccormick = mccormick
        self.layout = make_layout(system.nvars, level)
        self.psd = moment_matrix(self.layout)
        self.base_eq = [linearize(h, self.layout) for h in system.equalities]
        if products:
            self.base_eq.extend(_product_rows(system, self.layout))
        self.base_ineq = [linearize(h, self.layout) for h in system.inequalities]
        self.bounds = system.bounds()
        self.lambda_bound = _lambda_floor(self.layout.basis_size)
        self._template = None

    def relax(self, region):
        """RelaxedProblem for one region (box + secant rows added)."""
        intervals = np.asarray(region.intervals, dtype=float)
        if intervals.shape != (self.layout.nvars, 2):
            raise ValueError("region does not match the variable count")
        eps = 1e-9
        if self.bounds.size and (
                (intervals[:, 0] < self.bounds[:, 0] - eps).any()
                or (intervals[:, 1] > self.bounds[:, 1] + eps).any()):
            raise ValueError("region intervals exceed the registry bounds")
        ineq = list(self.base_ineq)
        lay = self.layout
        for i in range(lay.nvars):
            lo, hi = intervals[i]
            xi = lay.index[((i, 1),)]
            xii = lay.index[((i, 2),)]
            ineq.append(({xi: 1.0}, -lo))                    # x_i - lo >= 0
            ineq.append(({xi: -1.0}, hi))                    # hi - x_i >= 0
            ineq.append(({xi: lo + hi, xii: -1.0}, -lo * hi))  # secant cut
        if self.mccormick:
            for i in range(lay.nvars):
                for j in range(i + 1, lay.nvars):
                    li, ui = intervals[i]
                    lj, uj = intervals[j]
                    yij = lay.index[((i, 1), (j, 1))]
                    xi = lay.index[((i, 1),)]
                    xj = lay.index[((j, 1),)]
                    ineq.append(({yij: 1.0, xi: -lj, xj: -li}, li * lj))
                    ineq.append(({yij: 1.0, xi: -uj, xj: -ui}, ui * uj))
                    ineq.append(({yij: -1.0, xi: lj, xj: ui}, -ui * lj))
                    ineq.append(({yij: -1.0, xi: uj, xj: li}, -li * uj))
        return RelaxedProblem(
            layout=lay,
            eq_rows=list(self.base_eq),
            ineq_rows=ineq,
            psd=self.psd,
            lambda_bound=self.lambda_bound,
        )

    def conic_for(self, region):
        return to_conic(self.relax(region))


def assemble(system, region, level, products=True, mccormick=False):
    """One-shot relaxation of a region (see RegionAssembler for the cache)."""
    return RegionAssembler(
        system, level, products=products, mccormick=mccormick).relax(region)


def to_conic(rp):
    """Encode a relaxed problem as min c^T x, A x = b, x in free x R+ x PSD.

    Variable layout: moment variables 1..M-1 (the unit moment is folded
    into constants), then lambda, then one slack per inequality row, then
    the packed PSD block (upper triangle, unscaled entries).

    lambda rides on the PSD diagonal and also on every inequality row
    (g(y) + lambda >= 0).  With the equality rows consistent the program
    is therefore always feasible: regions whose box or secant rows
    contradict the equalities surface as a decisively positive lambda
    instead of an infeasible program the first-order solver could only
    diverge on.  A solution's moment vector still certifies lambda <= 0.
    """
    lay = rp.layout
    m_vars = lay.count - 1          # moment variables (unit excluded)
    lam = m_vars                    # lambda's column
    n_free = m_vars + 1
    n_ineq = len(rp.ineq_rows) + 1  # + lambda lower bound
    k = lay.basis_size
    packed = k * (k + 1) // 2
    n = n_free + n_ineq + packed

    rows_i, cols_i, data = [], [], []
    b = []
    r = 0

    def put(col, val):
        rows_i.append(r)
        cols_i.append(col)
        data.append(val)

    for coefs, const in rp.eq_rows:
        rhs = -const
        for idx, c in sorted(coefs.items()):
            if idx == 0:
                rhs -= c
            else:
                put(idx - 1, c)
        b.append(rhs)
        r += 1
    slack = n_free
    for coefs, const in rp.ineq_rows:
        rhs = -const
        for idx, c in sorted(coefs.items()):
            if idx == 0:
                rhs -= c
            else:
                put(idx - 1, c)
        put(lam, 1.0)
        put(slack, -1.0)
        b.append(rhs)
        slack += 1
        r += 1
    # lambda >= lambda_bound
    put(lam, 1.0)
    put(slack, -1.0)
    b.append(rp.lambda_bound)
    slack += 1
    r += 1
    # PSD linking: M(y)_ij + lambda * [i == j] - P_ij = 0
    pcol = n_free + n_ineq
    for i in range(k):
        for j in range(i, k):
            rhs = 0.0
            idx = rp.psd[i, j]
            if idx == 0:
                rhs -= 1.0
            else:
                put(idx - 1, 1.0)
            if i == j:
                put(lam, 1.0)
            put(pcol, -1.0)
            b.append(rhs)
            pcol += 1
            r += 1

    a = scipy.sparse.csr_matrix(
        (np.asarray(data), (np.asarray(rows_i), np.asarray(cols_i))),
        shape=(r, n))
    c = np.zeros(n)
    c[lam] = 1.0
    return ConicProgram(c=c, A=a, b=np.asarray(b),
                        n_free=n_free, n_nonneg=n_ineq, psd_dim=k)


def moments_of_point(x, layout):
    """Moment vector of a concrete point (every basis monomial evaluated)."""
    x = np.asarray(x, dtype=float)
    out = np.empty(layout.count)
    for mono, idx in layout.index.items():
        val = 1.0
        for v, e in mono:
            val *= x[v] ** e
        out[idx] = val
    return out
