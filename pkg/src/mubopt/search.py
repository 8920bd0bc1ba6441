"""Stationary-point search over the lifted squared-residual objective.

The equalities h_i(x) = 0 are combined into f(x) = sum_i h_i(x)^2, which
is non-negative everywhere and zero exactly on the solution set.  f is
then lifted by integration: f_v = integral of f over one variable.  The
partial of f_v in the integration variable is f itself and every other
partial carries that variable as a factor, so every stationary point of
f_v is a solution of the original system.  A damped Newton iteration
(solve H p = g, step x -= alpha * p) hunts for one.

By default the integration variable is a fresh auxiliary coordinate, so
the lift is simply x_aux * f.  For that case the gradient and Hessian
have exact closed forms built from the quadratic structure of the
equalities, which is what the iteration engine evaluates; integrating by
an existing coordinate falls back to compiled symbolic derivatives.
Both routes compute the same exact second partials, not a quasi-Newton
approximation.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .poly import CompiledPolys, Polynomial

CONVERGED = "converged"
ITERATION_LIMIT = "iteration_limit"
NUMERICAL_FAILURE = "numerical_failure"

# Per-equation residual bound that convergence must also satisfy.
RESIDUAL_TOL = 1e-7


@dataclass
class SearchConfig:
    alpha: float = 1.0
    max_iters: int = 100000
    tol: float = 1e-13
    damping: float = 1e-10
    seed: int = 0
    starts: int = 1
    integration_variable: int | str = "aux"
    record_trace: bool = False

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.starts < 1:
            raise ValueError("starts must be >= 1")


@dataclass
class SearchOutcome:
    status: str
    point: np.ndarray            # registry variables only
    combined_value: float
    max_equation_residual: float
    iterations: int
    seed: int = 0
    trace: list | None = None


def build_objective(system):
    """Combined objective f = sum of squared equalities (inequalities excluded)."""
    nv = system.nvars
    f = Polynomial.zero(nv)
    for h in system.equalities:
        f = f.add(h.mul(h))
    return f


def lift_objective(f, v):
    """Integrate f by variable v; v may be 'aux' for a fresh trailing variable."""
    if v == "aux":
        v = f.nvars
        return f.mul(Polynomial.variable(v, f.nvars + 1))
    if not isinstance(v, int) or v < 0 or v >= f.nvars:
        raise ValueError(f"integration variable {v!r} not in 0..{f.nvars - 1}")
    return f.integrate(v)


def newton_step(fv, x, cfg):
    """One damped Newton step on a lifted objective given as a polynomial.

    Evaluates the symbolic gradient and Hessian of fv at x and returns
    x - alpha * p with p solving (H + damping * I) p = g.
    """
    x = np.asarray(x, dtype=float)
    n = fv.nvars
    if x.shape != (n,):
        raise ValueError(f"point has shape {x.shape}, expected ({n},)")
    g = np.array([gi.evaluate(x) for gi in fv.gradient()])
    hess = fv.hessian()
    h = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            h[i, j] = hess[i][j].evaluate(x)
            h[j, i] = h[i, j]
    p = linalg.lu_solve(h, g, cfg.damping)
    return x - cfg.alpha * p


class QuadraticSystem:
    """Equalities of degree <= 2 compiled to flat arrays.

    Each h_r(x) = 0.5 x^T A_r x + L_r x + c_r with A_r constant symmetric,
    so residuals, the Jacobian, and the exact Hessian of f = sum h_r^2
    come out of a few vectorised passes:

        grad f = 2 J^T h,   hess f = 2 (J^T J + sum_r h_r A_r).
    """

    def __init__(self, system):
        n = system.nvars
        m = len(system.equalities)
        self.n = n
        self.m = m
        self.lin = np.zeros((m, n))
        self.const = np.zeros(m)
        qrow, qi, qj, qv = [], [], [], []
        for r, p in enumerate(system.equalities):
            if p.degree() > 2:
                raise ValueError("equalities must have degree <= 2")
            for mono, coeff in sorted(p.terms.items()):
                if not mono:
                    self.const[r] += coeff
                elif len(mono) == 1 and mono[0][1] == 1:
                    self.lin[r, mono[0][0]] += coeff
                elif len(mono) == 1:  # x_i^2
                    i = mono[0][0]
                    qrow.append(r); qi.append(i); qj.append(i); qv.append(2.0 * coeff)
                else:  # x_i x_j with i < j: store both symmetric entries
                    i, j = mono[0][0], mono[1][0]
                    qrow.append(r); qi.append(i); qj.append(j); qv.append(coeff)
                    qrow.append(r); qi.append(j); qj.append(i); qv.append(coeff)
        self.qrow = np.asarray(qrow, dtype=np.intp)
        self.qi = np.asarray(qi, dtype=np.intp)
        self.qj = np.asarray(qj, dtype=np.intp)
        self.qv = np.asarray(qv, dtype=float)
        self._jflat = self.qrow * n + self.qi
        self._sflat = self.qi * n + self.qj

    def residuals(self, x):
        h = self.lin @ x + self.const
        if self.qv.size:
            h += 0.5 * np.bincount(
                self.qrow, weights=self.qv * x[self.qi] * x[self.qj],
                minlength=self.m)
        return h

    def residuals_many(self, pts):
        """Residual matrix for a batch of points; pts (N, n) -> (N, m)."""
        pts = np.asarray(pts, dtype=float)
        h = pts @ self.lin.T + self.const
        for k in range(self.qv.size):
            h[:, self.qrow[k]] += 0.5 * self.qv[k] * pts[:, self.qi[k]] * pts[:, self.qj[k]]
        return h

    def combined(self, x):
        h = self.residuals(x)
        return float(h @ h)

    def combined_many(self, pts):
        h = self.residuals_many(pts)
        return (h * h).sum(axis=1)

    def jacobian(self, x):
        j = self.lin.copy()
        if self.qv.size:
            j += np.bincount(
                self._jflat, weights=self.qv * x[self.qj],
                minlength=self.m * self.n).reshape(self.m, self.n)
        return j

    def f_grad_hess(self, x):
        """f, residuals, grad f, hess f at a point (all exact)."""
        h = self.residuals(x)
        j = self.jacobian(x)
        grad = 2.0 * (j.T @ h)
        hess = 2.0 * (j.T @ j)
        if self.qv.size:
            hess += 2.0 * np.bincount(
                self._sflat, weights=self.qv * h[self.qrow],
                minlength=self.n * self.n).reshape(self.n, self.n)
        return float(h @ h), h, grad, hess


class _AuxEngine:
    """Gradient/Hessian of x_aux * f from the quadratic structure."""

    def __init__(self, system):
        self.quad = QuadraticSystem(system)
        self.n = self.quad.n

    @property
    def dim(self):
        return self.n + 1

    def start_point(self, x0):
        return np.append(x0, 0.1)

    def state(self, z):
        x = z[:self.n]
        aux = z[self.n]
        f, h, gf, hf = self.quad.f_grad_hess(x)
        g = np.empty(self.n + 1)
        g[:self.n] = aux * gf
        g[self.n] = f
        big = np.empty((self.n + 1, self.n + 1))
        big[:self.n, :self.n] = aux * hf
        big[:self.n, self.n] = gf
        big[self.n, :self.n] = gf
        big[self.n, self.n] = 0.0
        return f, h, g, big


class _SymbolicEngine:
    """Gradient/Hessian of an arbitrary lifted polynomial, compiled."""

    def __init__(self, system, fv):
        self.quad = QuadraticSystem(system)
        self.n = fv.nvars
        self._grad = CompiledPolys(fv.gradient(), self.n)
        hess = fv.hessian()
        self._iu = np.triu_indices(self.n)
        uppers = [hess[i][j] for i, j in zip(*self._iu)]
        self._hess = CompiledPolys(uppers, self.n)

    @property
    def dim(self):
        return self.n

    def start_point(self, x0):
        return np.asarray(x0, dtype=float)

    def state(self, z):
        h = self.quad.residuals(z[:self.quad.n])
        f = float(h @ h)
        g = self._grad.evaluate(z)
        vals = self._hess.evaluate(z)
        big = np.empty((self.n, self.n))
        big[self._iu] = vals
        big.T[self._iu] = vals
        return f, h, g, big


def _make_engine(system, cfg):
    if cfg.integration_variable == "aux":
        return _AuxEngine(system)
    fv = lift_objective(build_objective(system), cfg.integration_variable)
    return _SymbolicEngine(system, fv)


def _run_single(system, cfg, engine, start_index):
    rng = np.random.default_rng([cfg.seed, start_index])
    bounds = system.bounds()
    if bounds.size:
        x0 = rng.uniform(bounds[:, 0], bounds[:, 1])
    else:
        x0 = np.zeros(0)
    z = engine.start_point(x0)
    trace = [] if cfg.record_trace else None
    singular_streak = 0
    n = system.nvars
    status = ITERATION_LIMIT
    f = np.inf
    h = None
    it = 0
    while True:
        f, h, g, big = engine.state(z)
        if trace is not None:
            trace.append(f)
        if not np.isfinite(f) or not np.isfinite(g).all():
            singular_streak += 1
            if singular_streak >= 3:
                status = NUMERICAL_FAILURE
                break
            z = engine.start_point(x0 * 0.5)  # deterministic pull-back
            continue
        if f <= cfg.tol and (h.size == 0 or np.abs(h).max() <= RESIDUAL_TOL):
            status = CONVERGED
            break
        if it >= cfg.max_iters:
            break
        damping = cfg.damping
        step = None
        for attempt in range(3):
            try:
                step = linalg.lu_solve(big, g, damping)
                break
            except linalg.SingularSystemError:
                damping = max(damping, cfg.damping, 1e-12) * 1e6
        if step is None or not np.isfinite(step).all():
            singular_streak += 1
            if singular_streak >= 3:
                status = NUMERICAL_FAILURE
                break
            it += 1
            continue
        singular_streak = 0
        z = z - cfg.alpha * step
        it += 1
    point = z[:n].copy()
    max_res = float(np.abs(h).max()) if h is not None and h.size else 0.0
    return SearchOutcome(
        status=status,
        point=point,
        combined_value=float(f) if np.isfinite(f) else float("inf"),
        max_equation_residual=max_res,
        iterations=it,
        seed=cfg.seed,
        trace=trace,
    )


def _outcome_rank(outcome):
    order = {CONVERGED: 0, ITERATION_LIMIT: 1, NUMERICAL_FAILURE: 2}
    return (order[outcome.status], outcome.combined_value)


def run(system, cfg=None):
    """Multi-start damped Newton search; returns the best outcome."""
    cfg = cfg or SearchConfig()
    engine = _make_engine(system, cfg)
    if cfg.starts == 1:
        return _run_single(system, cfg, engine, 0)
    workers = int(os.environ.get("MUB_THREADS", "0")) or (os.cpu_count() or 1)
    workers = max(1, min(cfg.starts, workers))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        outcomes = list(pool.map(
            lambda s: _run_single(system, cfg, engine, s), range(cfg.starts)))
    return min(outcomes, key=_outcome_rank)
