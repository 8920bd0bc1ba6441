"""Symmetry-reduced real polynomial systems for mutually unbiased
(sub-)bases.

A problem instance asks for n sets of orthonormal vectors in C^d, with
s_i vectors in set i, such that every cross-set inner product has
magnitude 1/sqrt(d).  The builder applies the standard gauge fixing:

* set 1 is the first s_1 computational basis vectors (fully fixed),
* the first vector of set 2 is the uniform vector (1/sqrt(d))(1,...,1),
* every remaining ("free") vector has its first element pinned to
  1/sqrt(d) real.

Unbiasedness against set 1 then pins the magnitude of elements 2..s_1 of
every free vector, and each free vector contributes one real and one
imaginary coordinate per element 2..d.  Every cross-set pair of free
vectors gets two extra circle variables (c, d) holding the real and
imaginary part of its inner product, constrained to c^2 + d^2 = 1/d.
Keeping those pair variables keeps every equality at degree <= 2.

Variable order is deterministic: free vectors in (set, vector, element)
order with the real part before the imaginary part, then the circle
pairs in pair order.  Equalities are emitted grouped as norms, element
magnitudes, intra-set orthogonality, uniform unbiasedness, and cross-set
pair equations.  The orthogonality of the uniform vector against a free
vector produces two linear scalar equations that are counted as one in
reported totals; everything else counts per scalar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .poly import MONO_ONE, Polynomial

_KINDS = ("re", "im", "cre", "cim")
_KIND_LETTER = {"re": "a", "im": "b", "cre": "c", "cim": "d"}


@dataclass(frozen=True)
class ProblemSpec:
    """Dimension, per-set vector counts, and symmetry-constraint flags."""

    d: int
    sizes: tuple
    vector_swap: bool = True
    set_swap: bool = True
    conjugation: bool = True
    reduction: str = "full"

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if self.d < 2:
            raise ValueError("dimension must be >= 2")
        if len(self.sizes) < 2:
            raise ValueError("need at least two sets")
        for s in self.sizes:
            if not 1 <= s <= self.d:
                raise ValueError(f"set size {s} outside 1..{self.d}")
        if list(self.sizes) != sorted(self.sizes, reverse=True):
            raise ValueError("set sizes must be sorted non-increasing")
        if self.reduction not in ("full", "none"):
            raise ValueError("reduction must be 'full' or 'none'")

    @property
    def n_sets(self):
        return len(self.sizes)


@dataclass(frozen=True)
class VariableInfo:
    """One registry entry: a vector coordinate or a circle-pair coordinate."""

    index: int
    kind: str  # 're' | 'im' | 'cre' | 'cim'
    lo: float
    hi: float
    set_index: int = 0   # 1-based; 0 for pair variables
    vec_index: int = 0   # 1-based within the set
    element: int = 0     # 2..d; 0 for pair variables
    pair_index: int = -1

    @property
    def name(self):
        letter = _KIND_LETTER[self.kind]
        if self.kind in ("re", "im"):
            return f"{letter}[{self.set_index},{self.vec_index},{self.element}]"
        return f"{letter}[{self.pair_index}]"


class VariableRegistry:
    """Ordered variable descriptors plus index lookups."""

    def __init__(self, variables, free_vectors, pairs):
        self.variables = list(variables)
        self.free_vectors = list(free_vectors)   # [(set, vec)] 1-based
        self.pairs = list(pairs)                 # [((set, vec), (set, vec))]
        self._re = {}
        self._im = {}
        self._cre = {}
        self._cim = {}
        for v in self.variables:
            if v.kind == "re":
                self._re[(v.set_index, v.vec_index, v.element)] = v.index
            elif v.kind == "im":
                self._im[(v.set_index, v.vec_index, v.element)] = v.index
            elif v.kind == "cre":
                self._cre[v.pair_index] = v.index
            else:
                self._cim[v.pair_index] = v.index

    def __len__(self):
        return len(self.variables)

    def __iter__(self):
        return iter(self.variables)

    def bounds(self):
        """Per-variable [lo, hi] as an (n, 2) array."""
        out = np.empty((len(self.variables), 2))
        for k, v in enumerate(self.variables):
            out[k, 0] = v.lo
            out[k, 1] = v.hi
        return out

    def index_re(self, set_index, vec_index, element):
        return self._re[(set_index, vec_index, element)]

    def index_im(self, set_index, vec_index, element):
        return self._im[(set_index, vec_index, element)]

    def index_cre(self, pair_index):
        return self._cre[pair_index]

    def index_cim(self, pair_index):
        return self._cim[pair_index]

    def im_indices(self):
        return [v.index for v in self.variables if v.kind == "im"]


@dataclass
class EquationSystem:
    """Equalities (= 0), inequalities (>= 0), and the variable registry."""

    registry: VariableRegistry
    equalities: list
    equality_labels: list
    inequalities: list
    inequality_labels: list
    reported_equalities: int
    spec: ProblemSpec | None = None

    @property
    def nvars(self):
        return len(self.registry)

    def bounds(self):
        return self.registry.bounds()

    def to_text(self):
        """Deterministic text form: header, registry, then the polynomials."""
        lines = ["mub-system v1"]
        if self.spec is not None:
            lines.append(f"dim {self.spec.d}")
            lines.append("sizes " + ",".join(str(s) for s in self.spec.sizes))
            flags = []
            for name in ("vector_swap", "set_swap", "conjugation"):
                flags.append(f"{name}={'on' if getattr(self.spec, name) else 'off'}")
            lines.append("flags " + " ".join(flags))
        lines.append(f"vars {self.nvars}")
        for v in self.registry:
            if v.kind in ("re", "im"):
                where = f"set={v.set_index} vec={v.vec_index} elem={v.element}"
            else:
                where = f"pair={v.pair_index}"
            lines.append(f"{v.index} {v.kind} {where} lo={v.lo!r} hi={v.hi!r}")
        lines.append(f"equalities {len(self.equalities)} reported {self.reported_equalities}")
        for label, p in zip(self.equality_labels, self.equalities):
            lines.append(f"[{label}]")
            lines.append(p.to_text())
        lines.append(f"inequalities {len(self.inequalities)}")
        for label, p in zip(self.inequality_labels, self.inequalities):
            lines.append(f"[{label}]")
            lines.append(p.to_text())
        return "\n".join(lines) + "\n"


def plain_registry(bounds):
    """Registry of anonymous real variables; handy for toy systems."""
    variables = [
        VariableInfo(index=k, kind="re", lo=float(lo), hi=float(hi),
                     set_index=0, vec_index=k + 1, element=0)
        for k, (lo, hi) in enumerate(bounds)
    ]
    return VariableRegistry(variables, [], [])


def toy_system(equalities, bounds, inequalities=()):
    """EquationSystem over anonymous variables, for tests and experiments."""
    eqs = list(equalities)
    ineqs = list(inequalities)
    return EquationSystem(
        registry=plain_registry(bounds),
        equalities=eqs,
        equality_labels=[f"eq{k}" for k in range(len(eqs))],
        inequalities=ineqs,
        inequality_labels=[f"ineq{k}" for k in range(len(ineqs))],
        reported_equalities=len(eqs),
        spec=None,
    )


# ---------------------------------------------------------------------------
# counting


def unreduced_count(d, n):
    """Real variable count of the unreduced formulation: n*d^2 + d^2*n*(n-1)/2."""
    if d < 2 or n < 2:
        raise ValueError("need d >= 2 and n >= 2")
    return n * d * d + (d * d * n * (n - 1)) // 2


def _free_vector_list(spec):
    free = []
    for i in range(2, spec.n_sets + 1):
        start = 2 if i == 2 else 1
        for k in range(start, spec.sizes[i - 1] + 1):
            free.append((i, k))
    return free


def _pair_list(free):
    pairs = []
    for p in range(len(free)):
        for q in range(p + 1, len(free)):
            if free[p][0] != free[q][0]:
                pairs.append((free[p], free[q]))
    return pairs


def count_profile(spec):
    """(variables, reported equalities, inequalities) without building the system."""
    d = spec.d
    sizes = spec.sizes
    n = spec.n_sets
    free_per_set = [0, 0] + [0] * (n - 1)  # 1-based padding
    free_per_set[2] = sizes[1] - 1
    for i in range(3, n + 1):
        free_per_set[i] = sizes[i - 1]
    f_total = sum(free_per_set)
    pair_total = 0
    for i in range(2, n + 1):
        for j in range(i + 1, n + 1):
            pair_total += free_per_set[i] * free_per_set[j]

    variables = 2 * (d - 1) * f_total + 2 * pair_total

    eqs = 0
    if sizes[0] < d:
        eqs += f_total                       # norms
    eqs += (sizes[0] - 1) * f_total          # element magnitudes
    eqs += free_per_set[2]                   # uniform-vs-free orthogonality, counted once
    for i in range(2, n + 1):
        fi = free_per_set[i]
        eqs += 2 * (fi * (fi - 1) // 2)      # free-free orthogonality, two scalars
    eqs += sum(sizes[2:])                    # uniform unbiasedness for sets 3..n
    eqs += 3 * pair_total                    # pair real/imag/circle

    ineqs = 0
    if spec.conjugation and f_total > 0:
        ineqs += 1
    if spec.vector_swap:
        for i in range(2, n + 1):
            ineqs += max(free_per_set[i] - 1, 0)
    if spec.set_swap:
        for i in range(3, n):
            if sizes[i - 1] == sizes[i]:
                ineqs += 1
    return variables, eqs, ineqs


# ---------------------------------------------------------------------------
# system construction


def _build_registry(spec):
    d = spec.d
    s1 = spec.sizes[0]
    inv_sqrt_d = 1.0 / math.sqrt(d)
    free = _free_vector_list(spec)
    pairs = _pair_list(free)
    variables = []
    idx = 0
    for (i, k) in free:
        for m in range(2, d + 1):
            bound = inv_sqrt_d if m <= s1 else 1.0
            for kind in ("re", "im"):
                variables.append(VariableInfo(
                    index=idx, kind=kind, lo=-bound, hi=bound,
                    set_index=i, vec_index=k, element=m))
                idx += 1
    for t in range(len(pairs)):
        for kind in ("cre", "cim"):
            variables.append(VariableInfo(
                index=idx, kind=kind, lo=-inv_sqrt_d, hi=inv_sqrt_d,
                pair_index=t))
            idx += 1
    return VariableRegistry(variables, free, pairs)


def build_problem(spec):
    """Construct the reduced equation system for a problem instance."""
    if spec.reduction == "none":
        raise ValueError(
            "only the reduced construction is supported; "
            "use unreduced_count for the raw variable count")
    d = spec.d
    s1 = spec.sizes[0]
    inv_d = 1.0 / d
    inv_sqrt_d = 1.0 / math.sqrt(d)
    registry = _build_registry(spec)
    nv = len(registry)

    def var(idx):
        return ((idx, 1),)

    def sq(idx):
        return ((idx, 2),)

    equalities = []
    labels = []

    def emit(terms, label):
        equalities.append(Polynomial(terms, nv))
        labels.append(label)

    free = registry.free_vectors

    # (a) norms, only needed when set 1 does not span the space
    if s1 < d:
        for (i, k) in free:
            terms = {MONO_ONE: -(1.0 - inv_d)}
            for m in range(2, d + 1):
                terms[sq(registry.index_re(i, k, m))] = 1.0
                terms[sq(registry.index_im(i, k, m))] = 1.0
            emit(terms, f"norm[{i},{k}]")

    # (b) element magnitudes pinned by unbiasedness against set 1
    for (i, k) in free:
        for m in range(2, s1 + 1):
            terms = {
                sq(registry.index_re(i, k, m)): 1.0,
                sq(registry.index_im(i, k, m)): 1.0,
                MONO_ONE: -inv_d,
            }
            emit(terms, f"mag[{i},{k},{m}]")

    # (c) intra-set orthogonality
    uniform_free_pairs = 0
    for i in range(2, spec.n_sets + 1):
        size = spec.sizes[i - 1]
        if i == 2:
            # uniform vector against each free vector of set 2: linear scalars
            for k in range(2, size + 1):
                terms = {MONO_ONE: inv_sqrt_d}
                for m in range(2, d + 1):
                    terms[var(registry.index_re(i, k, m))] = 1.0
                emit(terms, f"orth_u_re[{i},{k}]")
                terms = {}
                for m in range(2, d + 1):
                    terms[var(registry.index_im(i, k, m))] = 1.0
                emit(terms, f"orth_u_im[{i},{k}]")
                uniform_free_pairs += 1
            lo_vec = 2
        else:
            lo_vec = 1
        for k in range(lo_vec, size + 1):
            for l in range(k + 1, size + 1):
                real = {MONO_ONE: inv_d}
                imag = {}
                for m in range(2, d + 1):
                    a1 = registry.index_re(i, k, m)
                    b1 = registry.index_im(i, k, m)
                    a2 = registry.index_re(i, l, m)
                    b2 = registry.index_im(i, l, m)
                    real[mono2(a1, a2)] = real.get(mono2(a1, a2), 0.0) + 1.0
                    real[mono2(b1, b2)] = real.get(mono2(b1, b2), 0.0) + 1.0
                    imag[mono2(a1, b2)] = imag.get(mono2(a1, b2), 0.0) + 1.0
                    imag[mono2(b1, a2)] = imag.get(mono2(b1, a2), 0.0) - 1.0
                emit(real, f"orth_re[{i},{k},{l}]")
                emit(imag, f"orth_im[{i},{k},{l}]")

    # (d) unbiasedness of free vectors in sets 3..n against the uniform vector
    for (i, k) in free:
        if i < 3:
            continue
        sum_a = Polynomial.constant(inv_sqrt_d, nv)
        sum_b = Polynomial.zero(nv)
        for m in range(2, d + 1):
            sum_a = sum_a.add(Polynomial.variable(registry.index_re(i, k, m), nv))
            sum_b = sum_b.add(Polynomial.variable(registry.index_im(i, k, m), nv))
        p = sum_a.mul(sum_a).add(sum_b.mul(sum_b)) - 1.0
        equalities.append(p)
        labels.append(f"unbias_u[{i},{k}]")

    # (e) cross-set pairs: inner product equals (c, d) on the 1/sqrt(d) circle
    for t, ((i, k), (j, l)) in enumerate(registry.pairs):
        real = {MONO_ONE: inv_d, var(registry.index_cre(t)): -1.0}
        imag = {var(registry.index_cim(t)): -1.0}
        for m in range(2, d + 1):
            a1 = registry.index_re(i, k, m)
            b1 = registry.index_im(i, k, m)
            a2 = registry.index_re(j, l, m)
            b2 = registry.index_im(j, l, m)
            real[mono2(a1, a2)] = real.get(mono2(a1, a2), 0.0) + 1.0
            real[mono2(b1, b2)] = real.get(mono2(b1, b2), 0.0) + 1.0
            imag[mono2(a1, b2)] = imag.get(mono2(a1, b2), 0.0) + 1.0
            imag[mono2(b1, a2)] = imag.get(mono2(b1, a2), 0.0) - 1.0
        emit(real, f"pair_re[{t}]")
        emit(imag, f"pair_im[{t}]")
        emit({sq(registry.index_cre(t)): 1.0,
              sq(registry.index_cim(t)): 1.0,
              MONO_ONE: -inv_d}, f"circle[{t}]")

    reported = len(equalities) - uniform_free_pairs

    # symmetry inequalities (>= 0)
    inequalities = []
    ineq_labels = []

    def vec_sum_terms(i, k, sign):
        terms = {}
        for m in range(2, d + 1):
            terms[var(registry.index_re(i, k, m))] = sign
            terms[var(registry.index_im(i, k, m))] = sign
        return terms

    if spec.conjugation:
        im = registry.im_indices()
        if im:
            inequalities.append(Polynomial({var(b): 1.0 for b in im}, nv))
            ineq_labels.append("conjugation")
    if spec.vector_swap:
        for i in range(2, spec.n_sets + 1):
            vecs = [k for (si, k) in free if si == i]
            for k, l in zip(vecs, vecs[1:]):
                terms = vec_sum_terms(i, k, 1.0)
                for mono, c in vec_sum_terms(i, l, -1.0).items():
                    terms[mono] = terms.get(mono, 0.0) + c
                inequalities.append(Polynomial(terms, nv))
                ineq_labels.append(f"vec_swap[{i},{k},{l}]")
    if spec.set_swap:
        for i in range(3, spec.n_sets):
            if spec.sizes[i - 1] != spec.sizes[i]:
                continue
            terms = {}
            for k in range(1, spec.sizes[i - 1] + 1):
                for mono, c in vec_sum_terms(i, k, 1.0).items():
                    terms[mono] = terms.get(mono, 0.0) + c
            for k in range(1, spec.sizes[i] + 1):
                for mono, c in vec_sum_terms(i + 1, k, -1.0).items():
                    terms[mono] = terms.get(mono, 0.0) + c
            inequalities.append(Polynomial(terms, nv))
            ineq_labels.append(f"set_swap[{i},{i + 1}]")

    return EquationSystem(
        registry=registry,
        equalities=equalities,
        equality_labels=labels,
        inequalities=inequalities,
        inequality_labels=ineq_labels,
        reported_equalities=reported,
        spec=spec,
    )


def mono2(i, j):
    """Degree-2 monomial x_i * x_j (handles i == j)."""
    if i == j:
        return ((i, 2),)
    if i < j:
        return ((i, 1), (j, 1))
    return ((j, 1), (i, 1))


# ---------------------------------------------------------------------------
# candidate verification and reconstruction


@dataclass
class CandidateSolution:
    """Residual report for an assignment against an equation system."""

    assignment: np.ndarray
    residuals: np.ndarray
    max_residual: float
    combined_value: float
    inequality_values: np.ndarray

    def violated_inequalities(self, tol=1e-12):
        return [k for k, v in enumerate(self.inequality_values) if v < -tol]


def verify_candidate(system, assignment):
    """Evaluate every equality and inequality at an assignment."""
    x = np.asarray(assignment, dtype=float)
    if x.shape != (system.nvars,):
        raise ValueError(
            f"assignment has length {x.shape}, expected ({system.nvars},)")
    res = np.array([p.evaluate(x) for p in system.equalities])
    ineq = np.array([p.evaluate(x) for p in system.inequalities])
    max_res = float(np.abs(res).max()) if res.size else 0.0
    return CandidateSolution(
        assignment=x,
        residuals=res,
        max_residual=max_res,
        combined_value=float((res * res).sum()),
        inequality_values=ineq,
    )


def embed_assignment(system, assignment):
    """Rebuild the full complex vector sets from reduced coordinates."""
    spec = system.spec
    if spec is None:
        raise ValueError("system has no problem spec attached")
    d = spec.d
    inv_sqrt_d = 1.0 / math.sqrt(d)
    x = np.asarray(assignment, dtype=float)
    reg = system.registry
    sets = []
    for i in range(1, spec.n_sets + 1):
        vectors = []
        for k in range(1, spec.sizes[i - 1] + 1):
            if i == 1:
                v = np.zeros(d, dtype=complex)
                v[k - 1] = 1.0
            elif i == 2 and k == 1:
                v = np.full(d, inv_sqrt_d, dtype=complex)
            else:
                v = np.empty(d, dtype=complex)
                v[0] = inv_sqrt_d
                for m in range(2, d + 1):
                    v[m - 1] = (x[reg.index_re(i, k, m)]
                                + 1j * x[reg.index_im(i, k, m)])
            vectors.append(v)
        sets.append(vectors)
    return sets


def extract_assignment(system, sets, tol=1e-9):
    """Reduced coordinates of explicit vector sets in the fixed gauge.

    The sets must already satisfy the gauge: set 1 computational, first
    vector of set 2 uniform, first element of every free vector equal to
    1/sqrt(d) real.  Circle variables are recomputed as inner products.
    """
    spec = system.spec
    if spec is None:
        raise ValueError("system has no problem spec attached")
    d = spec.d
    inv_sqrt_d = 1.0 / math.sqrt(d)
    reg = system.registry
    x = np.zeros(system.nvars)
    for (i, k) in reg.free_vectors:
        v = np.asarray(sets[i - 1][k - 1], dtype=complex)
        if abs(v[0] - inv_sqrt_d) > tol:
            raise ValueError(
                f"vector ({i},{k}) is not in the fixed gauge: "
                f"first element {v[0]:.6g}")
        for m in range(2, d + 1):
            x[reg.index_re(i, k, m)] = v[m - 1].real
            x[reg.index_im(i, k, m)] = v[m - 1].imag
    for t, ((i, k), (j, l)) in enumerate(reg.pairs):
        v = np.asarray(sets[i - 1][k - 1], dtype=complex)
        w = np.asarray(sets[j - 1][l - 1], dtype=complex)
        ip = np.vdot(v, w)
        x[reg.index_cre(t)] = ip.real
        x[reg.index_cim(t)] = ip.imag
    return x


def reconstruction_error(system, assignment):
    """Worst deviation of any pairwise inner-product magnitude from its target.

    Within a set the magnitudes must be 1 (self) or 0 (distinct pair);
    across sets they must be 1/sqrt(d).
    """
    spec = system.spec
    sets = embed_assignment(system, assignment)
    inv_sqrt_d = 1.0 / math.sqrt(spec.d)
    worst = 0.0
    flat = [(i, v) for i, vecs in enumerate(sets) for v in vecs]
    for a in range(len(flat)):
        for b in range(a, len(flat)):
            ia, va = flat[a]
            ib, vb = flat[b]
            mag = abs(np.vdot(va, vb))
            if a == b:
                target = 1.0
            elif ia == ib:
                target = 0.0
            else:
                target = inv_sqrt_d
            worst = max(worst, abs(mag - target))
    return worst


def _ineq_value_from_sets(sets, d, i, k, j, l):
    """Component-sum difference used by the swap constraints."""
    v = sets[i - 1][k - 1]
    w = sets[j - 1][l - 1]
    sv = sum(v[m].real + v[m].imag for m in range(1, d))
    sw = sum(w[m].real + w[m].imag for m in range(1, d))
    return sv - sw


def canonicalize_assignment(system, assignment, max_passes=100):
    """Map a solution onto the symmetry-inequality cone.

    Applies conjugation, swaps of free vectors within a set, and swaps of
    consecutive equal-size sets (from set 3 on) until every default
    symmetry inequality is non-negative.  All three transforms preserve
    the equalities, so a verified solution stays verified.
    """
    spec = system.spec
    d = spec.d
    sets = embed_assignment(system, assignment)
    free = system.registry.free_vectors
    for _ in range(max_passes):
        changed = False
        total_im = sum(
            sets[i - 1][k - 1][m].imag for (i, k) in free for m in range(1, d))
        if total_im < 0:
            sets = [[np.conj(v) for v in vecs] for vecs in sets]
            changed = True
        for i in range(2, spec.n_sets + 1):
            vecs = [k for (si, k) in free if si == i]
            for k, l in zip(vecs, vecs[1:]):
                if _ineq_value_from_sets(sets, d, i, k, i, l) < 0:
                    si = sets[i - 1]
                    si[k - 1], si[l - 1] = si[l - 1], si[k - 1]
                    changed = True
        for i in range(3, spec.n_sets):
            if spec.sizes[i - 1] != spec.sizes[i]:
                continue
            diff = 0.0
            for k in range(1, spec.sizes[i - 1] + 1):
                v = sets[i - 1][k - 1]
                diff += sum(v[m].real + v[m].imag for m in range(1, d))
            for k in range(1, spec.sizes[i] + 1):
                v = sets[i][k - 1]
                diff -= sum(v[m].real + v[m].imag for m in range(1, d))
            if diff < 0:
                sets[i - 1], sets[i] = sets[i], sets[i - 1]
                changed = True
        if not changed:
            break
    return extract_assignment(system, sets)
