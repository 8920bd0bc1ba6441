"""Spatial branch and bound over the variable box.

Each region of the box gets one moment-relaxation solve.  A region is
pruned when the optimal lambda is decisively positive (the relaxation is
infeasible there, so no solution lives inside).  If the relaxed point is
square-consistent to within the error threshold it is verified against
the original equations and reported as a feasible point when it truly
solves them.  Otherwise the region splits in two at the relaxed value of
the variable with the worst square-consistency error.  Pruned volume is
tracked as a fraction of the initial box, which gives a running
completion estimate by linear extrapolation.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field

import numpy as np

from . import conic, model, relaxation

FEASIBLE_POINT = "feasible_point"
PROVEN_INFEASIBLE = "proven_infeasible"
BUDGET = "budget"

PRUNED = "pruned"
CANDIDATE = "candidate"
BRANCH = "branch"
FAILED = "failed"


@dataclass
class Region:
    """An axis-aligned box with its volume as a fraction of the root box."""

    intervals: np.ndarray  # (n, 2)
    volume_fraction: float = 1.0
    depth: int = 0
    history: tuple = ()
    retries: int = 0

    def width(self, var):
        return self.intervals[var, 1] - self.intervals[var, 0]


def initial_region(system):
    """Root region: the registry bounds with volume fraction 1."""
    return Region(intervals=system.bounds().copy(), volume_fraction=1.0,
                  depth=0, history=())


def split_region(region, var, point):
    """Split at an interior point; child volumes are width-proportional."""
    lo, hi = region.intervals[var]
    if not lo < point < hi:
        raise ValueError(
            f"split point {point} not strictly inside [{lo}, {hi}]")
    width = hi - lo
    frac_lo = (point - lo) / width
    frac_hi = (hi - point) / width
    left = region.intervals.copy()
    left[var, 1] = point
    right = region.intervals.copy()
    right[var, 0] = point
    mk = lambda iv, frac: Region(
        intervals=iv,
        volume_fraction=region.volume_fraction * frac,
        depth=region.depth + 1,
        history=region.history + ((var, float(point)),),
    )
    return mk(left, frac_lo), mk(right, frac_hi)


@dataclass
class BnbConfig:
    level: int = 1
    eps_err: float = 1e-8
    eps_infeas: float = 1e-7
    min_width_fraction: float = 0.01
    queue: str = "lifo"            # 'lifo' | 'best_first'
    workers: int = 1
    max_regions: int | None = None
    progress_interval: float | None = None
    export_sdpa_dir: str | None = None
    export_every: int = 100
    products: bool = True
    mccormick: bool = False
    solver_tol: float = 1e-8
    solver_max_iters: int = 200000
    residual_tol: float = 1e-6     # true-equation bound for feasible points
    ineq_tol: float = 1e-8
    track_pruned: bool = False

    def __post_init__(self):
        if self.eps_err <= 0 or self.eps_infeas <= 0:
            raise ValueError("thresholds must be positive")
        if self.queue not in ("lifo", "best_first"):
            raise ValueError("queue must be 'lifo' or 'best_first'")


@dataclass
class ProgressEstimate:
    pruned_fraction: float
    regions_processed: int
    queue_depth: int
    elapsed_seconds: float
    estimate_total_seconds: float | None
    eta_seconds: float | None


def progress(pruned_fraction, regions_processed, queue_depth, elapsed_seconds):
    """Completion estimate by linear extrapolation of the pruned fraction."""
    if pruned_fraction > 0:
        total = elapsed_seconds / pruned_fraction
        eta = max(total - elapsed_seconds, 0.0)
    else:
        total = None
        eta = None
    return ProgressEstimate(
        pruned_fraction=pruned_fraction,
        regions_processed=regions_processed,
        queue_depth=queue_depth,
        elapsed_seconds=elapsed_seconds,
        estimate_total_seconds=total,
        eta_seconds=eta,
    )


def format_progress(est):
    eta = f"{est.eta_seconds:.1f}s" if est.eta_seconds is not None else "unknown"
    return (f"pruned={est.pruned_fraction:.6f} "
            f"regions={est.regions_processed} eta={eta}")


@dataclass
class RegionVerdict:
    kind: str
    lambda_star: float
    solve_status: str
    point: np.ndarray | None = None
    max_error: float | None = None
    residual: float | None = None
    branch_var: int | None = None
    split_at: float | None = None
    iterations: int = 0


@dataclass
class BnbOutcome:
    status: str
    point: np.ndarray | None
    residual: float | None
    regions_processed: int
    pruned_fraction: float
    elapsed_seconds: float
    estimate: ProgressEstimate
    lambda_star: float | None = None
    message: str = ""
    pruned_regions: list | None = None


def process_region(system, region, cfg, assembler=None, solver_max_iters=None):
    """Solve one region's relaxation and classify it."""
    if assembler is None:
        assembler = relaxation.RegionAssembler(
            system, cfg.level, products=cfg.products, mccormick=cfg.mccormick)
    program = assembler.conic_for(region)
    result = conic.solve(
        program,
        tol_primal=cfg.solver_tol,
        tol_dual=cfg.solver_tol,
        max_iters=solver_max_iters or cfg.solver_max_iters,
    )
    lam = result.objective
    if result.status == conic.NUMERICAL_TROUBLE:
        return RegionVerdict(kind=FAILED, lambda_star=lam,
                             solve_status=result.status,
                             iterations=result.iterations)
    if lam > cfg.eps_infeas:
        return RegionVerdict(kind=PRUNED, lambda_star=lam,
                             solve_status=result.status,
                             iterations=result.iterations)
    layout = assembler.layout
    moments = np.empty(layout.count)
    moments[0] = 1.0
    moments[1:] = result.x[:layout.count - 1]
    ext = relaxation.extract(moments, layout)
    if ext.max_error <= cfg.eps_err:
        cand = model.verify_candidate(system, ext.point)
        ineq_ok = (cand.inequality_values.size == 0
                   or cand.inequality_values.min() >= -cfg.ineq_tol)
        if cand.max_residual <= cfg.residual_tol and ineq_ok:
            return RegionVerdict(kind=CANDIDATE, lambda_star=lam,
                                 solve_status=result.status,
                                 point=ext.point,
                                 max_error=ext.max_error,
                                 residual=cand.max_residual,
                                 iterations=result.iterations)
    # branch on the worst square-consistency error, at the relaxed point
    var = ext.argmax
    n = layout.nvars
    order = np.argsort(-ext.errors, kind="stable") if n else []
    for cand_var in order:
        if region.width(cand_var) > 0:
            var = int(cand_var)
            break
    else:
        return RegionVerdict(kind=FAILED, lambda_star=lam,
                             solve_status=result.status,
                             iterations=result.iterations)
    lo, hi = region.intervals[var]
    w = hi - lo
    split = float(np.clip(ext.point[var],
                          lo + w * cfg.min_width_fraction,
                          hi - w * cfg.min_width_fraction))
    return RegionVerdict(kind=BRANCH, lambda_star=lam,
                         solve_status=result.status,
                         point=ext.point,
                         max_error=ext.max_error,
                         branch_var=var, split_at=split,
                         iterations=result.iterations)


class _Queue:
    """LIFO stack or best-first heap keyed on the parent's lambda."""

    def __init__(self, discipline):
        self.discipline = discipline
        self.items = []
        self.volume = 0.0
        self._counter = 0

    def push(self, region, priority=0.0):
        self.volume += region.volume_fraction
        if self.discipline == "lifo":
            self.items.append(region)
        else:
            import heapq
            heapq.heappush(self.items, (priority, self._counter, region))
            self._counter += 1

    def pop(self):
        if self.discipline == "lifo":
            region = self.items.pop()
        else:
            import heapq
            region = heapq.heappop(self.items)[2]
        self.volume -= region.volume_fraction
        return region

    def __len__(self):
        return len(self.items)


def run(system, cfg=None, progress_callback=None):
    """Process regions until a verified point, exhaustion, or the budget."""
    cfg = cfg or BnbConfig()
    t0 = time.monotonic()
    assembler = relaxation.RegionAssembler(
        system, cfg.level, products=cfg.products, mccormick=cfg.mccormick)
    queue = _Queue(cfg.queue)
    queue.push(initial_region(system), priority=-np.inf)
    pruned_volume = 0.0
    processed = 0
    last_progress = t0
    last_lambda = None
    pruned_regions = [] if cfg.track_pruned else None
    workers = cfg.workers or 1

    def make_estimate():
        return progress(pruned_volume, processed, len(queue),
                        time.monotonic() - t0)

    def outcome(status, point=None, residual=None, message=""):
        return BnbOutcome(
            status=status, point=point, residual=residual,
            regions_processed=processed, pruned_fraction=pruned_volume,
            elapsed_seconds=time.monotonic() - t0,
            estimate=make_estimate(), lambda_star=last_lambda,
            message=message, pruned_regions=pruned_regions)

    def handle(region, verdict):
        """Apply one verdict; returns a final BnbOutcome or None."""
        nonlocal pruned_volume, last_lambda
        last_lambda = verdict.lambda_star
        if verdict.kind == FAILED:
            if region.retries >= 1:
                return outcome(
                    BUDGET,
                    message=(f"solver failed twice on region at depth "
                             f"{region.depth} (status {verdict.solve_status})"))
            region.retries += 1
            queue.push(region, priority=verdict.lambda_star)
            return None
        if verdict.kind == PRUNED:
            pruned_volume += region.volume_fraction
            if pruned_regions is not None:
                pruned_regions.append(region)
            return None
        if verdict.kind == CANDIDATE:
            return outcome(FEASIBLE_POINT, point=verdict.point,
                           residual=verdict.residual)
        left, right = split_region(region, verdict.branch_var, verdict.split_at)
        queue.push(right, priority=verdict.lambda_star)
        queue.push(left, priority=verdict.lambda_star)
        return None

    def solve_one(region):
        extra = cfg.solver_max_iters * 2 if region.retries else None
        return process_region(system, region, cfg, assembler=assembler,
                              solver_max_iters=extra)

    def maybe_progress():
        nonlocal last_progress
        if (cfg.progress_interval is not None and progress_callback is not None
                and time.monotonic() - last_progress >= cfg.progress_interval):
            progress_callback(make_estimate())
            last_progress = time.monotonic()

    def export_maybe(region, index):
        if cfg.export_sdpa_dir and index % cfg.export_every == 0:
            os.makedirs(cfg.export_sdpa_dir, exist_ok=True)
            conic.export_sdpa(
                assembler.conic_for(region),
                os.path.join(cfg.export_sdpa_dir, f"region_{index:08d}.dat-s"))

    if workers <= 1:
        while len(queue):
            if cfg.max_regions is not None and processed >= cfg.max_regions:
                return outcome(BUDGET, message="region budget reached")
            region = queue.pop()
            export_maybe(region, processed)
            verdict = solve_one(region)
            processed += 1
            final = handle(region, verdict)
            if final is not None:
                return final
            maybe_progress()
        return outcome(PROVEN_INFEASIBLE)

    # multi-worker: identical verdict semantics, region counts may differ
    inflight = {}
    inflight_volume = 0.0
    with ThreadPoolExecutor(max_workers=workers) as pool:
        while len(queue) or inflight:
            while (len(queue) and len(inflight) < workers
                   and (cfg.max_regions is None
                        or processed + len(inflight) < cfg.max_regions)):
                region = queue.pop()
                export_maybe(region, processed + len(inflight))
                inflight_volume += region.volume_fraction
                inflight[pool.submit(solve_one, region)] = region
            if not inflight:
                if len(queue):
                    return outcome(BUDGET, message="region budget reached")
                break
            done, _ = wait(inflight, return_when=FIRST_COMPLETED)
            for fut in done:
                region = inflight.pop(fut)
                inflight_volume -= region.volume_fraction
                processed += 1
                final = handle(region, fut.result())
                if final is not None:
                    return final
            maybe_progress()
    if len(queue) == 0:
        return outcome(PROVEN_INFEASIBLE)
    return outcome(BUDGET, message="region budget reached")
