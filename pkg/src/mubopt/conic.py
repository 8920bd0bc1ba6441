"""First-order operator-splitting solver for linear-conic programs of the
form

    minimize    c^T x
    subject to  A x = b,   x in F x R+^l x S+(k)

where F is a free block, R+^l a non-negative block, and S+(k) the cone of
k x k positive semidefinite matrices stored as the packed upper triangle
(row-major, entries unscaled).  The solver alternates a projection onto
the affine set {A x = b} (one cached factorisation of A A^T) with a
projection onto the cone, with over-relaxation and an adaptive penalty.
Residuals are always judged in the original problem scale, never the
equilibrated one.

Programs can also be exported in sparse SDPA format for cross-checking
against external solvers; ``parse_sdpa`` reads such a file back into an
exactly equal program.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from . import linalg

OPTIMAL = "optimal"
MAX_ITERS = "max_iters"
NUMERICAL_TROUBLE = "numerical_trouble"

_CHECK_EVERY = 25
_RHO_EVERY = 100
_OVER_RELAX = 1.6
_DENSE_LIMIT = 1200  # factor A A^T densely up to this many rows


@dataclass
class ConicProgram:
    c: np.ndarray
    A: scipy.sparse.csr_matrix
    b: np.ndarray
    n_free: int
    n_nonneg: int
    psd_dim: int

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if not scipy.sparse.issparse(self.A):
            self.A = scipy.sparse.csr_matrix(np.asarray(self.A, dtype=float))
        self.A = self.A.tocsr()
        if self.n_free < 0 or self.n_nonneg < 0 or self.psd_dim < 0:
            raise ValueError("block sizes must be non-negative")
        if self.n != self.A.shape[1] or self.c.shape != (self.n,):
            raise ValueError("variable partition does not sum to the column count")
        if self.b.shape != (self.A.shape[0],):
            raise ValueError("right-hand side length does not match A")

    @property
    def psd_len(self):
        return self.psd_dim * (self.psd_dim + 1) // 2

    @property
    def n(self):
        return self.n_free + self.n_nonneg + self.psd_len

    @property
    def m(self):
        return self.A.shape[0]


@dataclass
class SolveResult:
    status: str
    x: np.ndarray
    objective: float
    primal_residual: float
    dual_residual: float
    iterations: int


def _packed_sqrt2_scale(program):
    """Column scale turning packed entries into self-dual svec coordinates."""
    s = np.ones(program.n)
    k = program.psd_dim
    if k:
        off = np.ones(k * (k + 1) // 2)
        pos = 0
        for i in range(k):
            for j in range(i, k):
                if i != j:
                    off[pos] = np.sqrt(2.0)
                pos += 1
        s[program.n_free + program.n_nonneg:] = off
    return s


def _svec_diag_mask(k):
    mask = np.zeros(k * (k + 1) // 2, dtype=bool)
    pos = 0
    for i in range(k):
        mask[pos] = True
        pos += k - i
    return mask


class _ConeProjector:
    """Projection onto free x R+ x PSD in svec coordinates, structure cached."""

    def __init__(self, program):
        self.lo = program.n_free
        self.hi = program.n_free + program.n_nonneg
        self.k = program.psd_dim
        if self.k:
            self.iu = np.triu_indices(self.k)
            self.diag_mask = _svec_diag_mask(self.k)
            self.unscale = np.where(self.diag_mask, 1.0, 1.0 / np.sqrt(2.0))
            self.rescale = np.where(self.diag_mask, 1.0, np.sqrt(2.0))

    def project(self, z):
        out = z.copy()
        if self.hi > self.lo:
            np.maximum(out[self.lo:self.hi], 0.0, out=out[self.lo:self.hi])
        if self.k:
            packed = out[self.hi:] * self.unscale
            mat = np.zeros((self.k, self.k))
            mat[self.iu] = packed
            mat.T[self.iu] = packed
            proj = linalg.psd_project(mat)
            out[self.hi:] = proj[self.iu] * self.rescale
        return out


def _ruiz_scale(a, program, iters=10):
    """Equilibrate rows and columns; the PSD block gets one uniform scale."""
    m, n = a.shape
    row = np.ones(m)
    col = np.ones(n)
    psd_lo = program.n_free + program.n_nonneg
    work = a.copy().tocsr()
    for _ in range(iters):
        rmax = np.sqrt(np.asarray(abs(work).max(axis=1).todense()).ravel())
        rmax[rmax == 0] = 1.0
        dr = 1.0 / rmax
        work = scipy.sparse.diags(dr) @ work
        row *= dr
        cmax = np.sqrt(np.asarray(abs(work).max(axis=0).todense()).ravel())
        cmax[cmax == 0] = 1.0
        if program.psd_len:
            block = cmax[psd_lo:]
            uniform = np.exp(np.mean(np.log(block[block > 0]))) if (block > 0).any() else 1.0
            cmax[psd_lo:] = uniform
        dcol = 1.0 / cmax
        work = work @ scipy.sparse.diags(dcol)
        col *= dcol
    return work.tocsr(), row, col


class _AffineProjector:
    """Cached projector onto {x : A x = b}."""

    def __init__(self, a):
        self.a = a.tocsr()
        self.at = a.T.tocsr()
        m = a.shape[0]
        gram = (a @ a.T).tocsc()
        diag_mean = gram.diagonal().mean() if m else 1.0
        reg = 1e-10 * (1.0 + diag_mean)
        gram = gram + reg * scipy.sparse.identity(m, format="csc")
        if m <= _DENSE_LIMIT:
            self._chol = scipy.linalg.cho_factor(gram.toarray(), lower=True,
                                                 check_finite=False)
            self._solve = lambda r: scipy.linalg.cho_solve(
                self._chol, r, check_finite=False)
        else:
            lu = scipy.sparse.linalg.splu(gram)
            self._solve = lu.solve

    def project(self, v, b):
        w = self._solve(self.a @ v - b)
        return v - self.at @ w


def solve(program, tol_primal=1e-8, tol_dual=1e-8, max_iters=200000):
    """Solve the conic program; deterministic for fixed inputs."""
    n = program.n
    m = program.m
    if m == 0 or n == 0:
        return SolveResult(OPTIMAL, np.zeros(n), 0.0, 0.0, 0.0, 0)

    svec = _packed_sqrt2_scale(program)
    a_int = program.A @ scipy.sparse.diags(1.0 / svec)
    c_int = program.c / svec
    a_s, row_scale, col_scale = _ruiz_scale(a_int, program)
    b_s = row_scale * program.b
    c_s = col_scale * c_int
    # x_original = total_col * z_scaled
    total_col = col_scale / svec

    projector = _AffineProjector(a_s)
    cone = _ConeProjector(program)

    a_orig = program.A
    b_orig = program.b
    c_orig = program.c
    b_den = 1.0 + np.abs(b_orig).max() if b_orig.size else 1.0
    c_den = 1.0 + np.abs(c_orig).max()

    rho = 1.0
    z = np.zeros(n)
    u = np.zeros(n)
    best = None
    history = []
    status = MAX_ITERS
    it = 0
    pri = dual = np.inf
    while it < max_iters:
        v = z - u - c_s / rho
        x_hat = projector.project(v, b_s)
        x_r = _OVER_RELAX * x_hat + (1.0 - _OVER_RELAX) * z
        z_new = cone.project(x_r + u)
        u = u + x_r - z_new
        dz = z_new - z
        z = z_new
        it += 1
        if it % _CHECK_EVERY == 0 or it == max_iters:
            x_orig = total_col * z
            pri_vec = a_orig @ x_orig - b_orig
            pri = np.abs(pri_vec).max() / b_den if m else 0.0
            dual_vec = rho * dz / total_col
            dual = np.abs(dual_vec).max() / c_den
            if not np.isfinite(pri) or not np.isfinite(dual):
                status = NUMERICAL_TROUBLE
                break
            metric = max(pri, dual)
            history.append(metric)
            if best is None or metric < best[0]:
                best = (metric, z.copy(), pri, dual, it)
            if pri <= tol_primal and dual <= tol_dual:
                status = OPTIMAL
                break
            window = 1000 // _CHECK_EVERY
            if len(history) > window and metric > 10.0 * history[-window - 1] \
                    and metric > 1.0:
                status = NUMERICAL_TROUBLE
                break
            if it % _RHO_EVERY == 0:
                if pri > 10.0 * dual and rho < 1e6:
                    rho *= 2.0
                    u *= 0.5
                elif dual > 10.0 * pri and rho > 1e-6:
                    rho *= 0.5
                    u *= 2.0

    if status == OPTIMAL or best is None:
        x_out = total_col * z
        pri_out, dual_out, it_out = pri, dual, it
    else:
        _, z_best, pri_out, dual_out, _ = best
        x_out = total_col * z_best
        it_out = it
    return SolveResult(
        status=status,
        x=x_out,
        objective=float(c_orig @ x_out),
        primal_residual=float(pri_out),
        dual_residual=float(dual_out),
        iterations=it_out,
    )


# ---------------------------------------------------------------------------
# SDPA sparse export / import
#
# The file encodes the standard pair
#     (P) min  c_file^T v   s.t.  sum_i v_i F_i - F_0 >= 0
#     (D) max  F_0 . Y      s.t.  F_i . Y = c_file_i,  Y >= 0
# Our program maps onto (D): Y holds the split free block (p, q with
# x_free = p - q), the non-negative block, and the PSD block; c_file is
# our b; F_0 carries the negated objective.  Off-diagonal PSD
# coefficients are written halved (exactly, as floats) because the trace
# inner product counts them twice.


def _program_hash(program):
    h = hashlib.sha1()
    h.update(program.c.tobytes())
    h.update(program.b.tobytes())
    coo = program.A.tocoo()
    h.update(coo.row.astype(np.int64).tobytes())
    h.update(coo.col.astype(np.int64).tobytes())
    h.update(coo.data.tobytes())
    h.update(np.asarray([program.n_free, program.n_nonneg,
                         program.psd_dim]).tobytes())
    return h.hexdigest()[:12]


def _packed_position(program):
    """(i, j) matrix position of every packed PSD coordinate, 1-based."""
    k = program.psd_dim
    pos = []
    for i in range(1, k + 1):
        for j in range(i, k + 1):
            pos.append((i, j))
    return pos


def export_sdpa(program, path):
    """Write the program in sparse SDPA format (.dat-s)."""
    f = program.n_free
    l = program.n_nonneg
    k = program.psd_dim
    blocks = []
    if f:
        blocks.extend([-f, -f])
    if l:
        blocks.append(-l)
    if k:
        blocks.append(k)
    pos = _packed_position(program)

    def entries_for(col_coeffs):
        """(blk, i, j, value) entries for one constraint row / the objective."""
        out = []
        for col, val in col_coeffs:
            if val == 0.0:
                continue
            if col < f:
                out.append((1, col + 1, col + 1, val))
                out.append((2, col + 1, col + 1, -val))
            elif col < f + l:
                blk = 3 if f else 1
                j = col - f + 1
                out.append((blk, j, j, val))
            else:
                blk = (2 if f else 0) + (1 if l else 0) + 1
                i, j = pos[col - f - l]
                out.append((blk, i, j, val if i == j else val / 2.0))
        return out

    lines = []
    lines.append(f'"mubopt conic export free={f} nonneg={l} psd={k} '
                 f'hash={_program_hash(program)}')
    lines.append(f"{program.m}")
    lines.append(f"{len(blocks)}")
    lines.append(" ".join(str(s) for s in blocks))
    lines.append(" ".join(f"{v:.17g}" for v in program.b))
    obj = entries_for([(j, -c) for j, c in enumerate(program.c)])
    for blk, i, j, val in obj:
        lines.append(f"0 {blk} {i} {j} {val:.17g}")
    acsr = program.A.tocsr()
    for r in range(program.m):
        cols = acsr.indices[acsr.indptr[r]:acsr.indptr[r + 1]]
        vals = acsr.data[acsr.indptr[r]:acsr.indptr[r + 1]]
        for blk, i, j, val in entries_for(zip(cols, vals)):
            lines.append(f"{r + 1} {blk} {i} {j} {val:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def parse_sdpa(path):
    """Read a file written by export_sdpa back into an equal ConicProgram."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    header = lines[0]
    if not header.startswith('"mubopt conic export'):
        raise ValueError("not a mubopt SDPA export")
    meta = dict(field.split("=") for field in header.split()[3:6])
    f = int(meta["free"])
    l = int(meta["nonneg"])
    k = int(meta["psd"])
    m = int(lines[1])
    b = np.array([float(v) for v in lines[4].split()])
    if b.shape != (m,):
        raise ValueError("constraint count mismatch")
    pos_index = {}
    pidx = 0
    for i in range(1, k + 1):
        for j in range(i, k + 1):
            pos_index[(i, j)] = pidx
            pidx += 1
    blk_nonneg = 3 if f else 1
    blk_psd = (2 if f else 0) + (1 if l else 0) + 1
    n = f + l + k * (k + 1) // 2
    c = np.zeros(n)
    rows_i, cols_i, data = [], [], []
    for line in lines[5:]:
        if not line.strip():
            continue
        matno_s, blk_s, i_s, j_s, val_s = line.split()
        matno, blk, i, j = int(matno_s), int(blk_s), int(i_s), int(j_s)
        val = float(val_s)
        if f and blk == 2:
            continue  # mirror of the split free block
        if blk == 1 and f:
            col = i - 1
        elif blk == blk_nonneg and l and blk != blk_psd:
            col = f + i - 1
        else:
            col = f + l + pos_index[(i, j)]
            if i != j:
                val = val * 2.0
        if matno == 0:
            c[col] = -val
        else:
            rows_i.append(matno - 1)
            cols_i.append(col)
            data.append(val)
    a = scipy.sparse.csr_matrix(
        (np.asarray(data), (np.asarray(rows_i), np.asarray(cols_i))),
        shape=(m, n))
    return ConicProgram(c=c, A=a, b=b, n_free=f, n_nonneg=l, psd_dim=k)
