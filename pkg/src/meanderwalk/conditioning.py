"""Conditioning the walk to keep its first coordinate positive.

The conditioning event over horizon n is

    Lambda_n = { X_1(k) > 0 for all k = 1, ..., n }

(the walk starts at the origin ON the hyperplane; time 0 is exempt).
Because steps are nearest-neighbour, leaving the positive half-space
means standing on the hyperplane {x_1 = 0}, so Lambda_n is exactly the
event that the absorbed walk of :func:`meanderwalk.walk.exact_kernel`
survives n steps.

Two samplers are provided: plain rejection (works at any n, embarrassingly
parallel over counter-based streams, deterministic for any worker count)
and an exact backward sampler driven by the DP tables (n <= 64), useful
for separating sampler bugs from statistic bugs.
"""

from __future__ import annotations

import concurrent.futures
import json
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rng
from .environment import (Environment, EnvironmentManifest,
                          incident_conductances, load_manifest, save_manifest)
from .errors import BudgetExhaustedError, ParameterError, ResourceLimitError
from .tableio import read_csv, write_csv
from .walk import (DEFAULT_CELL_CAP, Hyperplane, KernelTable, exact_kernel,
                   moves, simulate_surviving_paths)

DEFAULT_BUDGET_FACTOR = 10 ** 4
DEFAULT_BLOCK = 8192
BACKWARD_MAX_N = 64


@dataclass
class ConditionedSampleSet:
    """Accepted paths under Q^n = P[ . | Lambda_n], with sampling metadata.

    ``stream_ids`` are the counter-stream indices of the accepted paths;
    the accepted set is the prefix rule "first ``count`` surviving streams
    by id", so it does not depend on block or worker layout.
    """
    manifest: EnvironmentManifest
    n: int
    seed: int
    paths: np.ndarray        # (count, n+1, d) int32
    stream_ids: np.ndarray   # (count,)
    raw_attempts: int
    budget: int
    complete: bool

    @property
    def count(self) -> int:
        return int(self.paths.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.paths.shape[2])

    @property
    def acceptance_rate(self) -> float:
        return self.count / self.raw_attempts if self.raw_attempts else 0.0

    @property
    def endpoints(self) -> np.ndarray:
        return self.paths[:, -1, :]

    def save(self, directory, endpoint_only: bool = False) -> None:
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
            fh.write(self.manifest.to_json() + "\n")
        meta = {
            "n": self.n,
            "seed": self.seed,
            "raw_attempts": self.raw_attempts,
            "budget": self.budget,
            "complete": self.complete,
            "endpoint_only": endpoint_only,
            "count": self.count,
            "manifest_sha256": self.manifest.content_hash(),
        }
        with open(os.path.join(directory, "meta.json"), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, sort_keys=True, indent=2)
            fh.write("\n")
        d = self.dimension
        header = ["path_id", "time"] + [f"x{j + 1}" for j in range(d)]
        rows = []
        for i in range(self.count):
            sid = int(self.stream_ids[i])
            if endpoint_only:
                rows.append([sid, self.n] + self.paths[i, -1].tolist())
            else:
                for k in range(self.n + 1):
                    rows.append([sid, k] + self.paths[i, k].tolist())
        write_csv(os.path.join(directory, "samples.csv"), header, rows)

    @classmethod
    def load(cls, directory) -> "ConditionedSampleSet":
        with open(os.path.join(directory, "manifest.json"), encoding="utf-8") as fh:
            manifest = load_manifest(fh.read())
        with open(os.path.join(directory, "meta.json"), encoding="utf-8") as fh:
            meta = json.load(fh)
        header, rows = read_csv(os.path.join(directory, "samples.csv"))
        d = len(header) - 2
        count = meta["count"]
        horizon = 1 if meta["endpoint_only"] else meta["n"] + 1
        paths = np.zeros((count, horizon, d), dtype=np.int32)
        ids = np.zeros(count, dtype=np.int64)
        row_iter = iter(rows)
        for i in range(count):
            for k in range(horizon):
                row = next(row_iter)
                ids[i] = int(row[0])
                paths[i, k] = [int(v) for v in row[2:]]
        return cls(manifest, meta["n"], meta["seed"], paths, ids,
                   meta["raw_attempts"], meta["budget"], meta["complete"])


def _survivor_block(args):
    env, n, seed, lo, hi = args
    ids = np.arange(lo, hi, dtype=np.int64)
    return simulate_surviving_paths(env, n, ids, seed=seed)


def rejection_sample(env: Environment, n: int, target_count: int, seed: int = 0,
                     budget: Optional[int] = None, workers: int = 1,
                     block_size: int = DEFAULT_BLOCK,
                     on_exhausted: str = "warn") -> ConditionedSampleSet:
    """Draw ``target_count`` paths from Q^n by rejection.

    The accepted set is deterministic for a given (env, n, seed): the
    first ``target_count`` surviving stream ids.  ``budget`` caps the
    number of attempted streams (default 10^4 * target_count).  If the
    budget is exhausted first, behaviour follows ``on_exhausted``:
    "warn" returns the partial (possibly empty) set with complete=False,
    "raise" raises BudgetExhaustedError.
    """
    if n < 1:
        raise ParameterError("conditioning horizon n must be >= 1")
    if target_count < 1:
        raise ParameterError("target_count must be >= 1")
    if budget is None:
        budget = DEFAULT_BUDGET_FACTOR * target_count
    manifest = save_manifest(env)

    got_ids = []
    got_paths = []
    total = 0
    consumed = 0

    def blocks():
        lo = 0
        while lo < budget:
            hi = min(lo + block_size, budget)
            yield (env, n, seed, lo, hi)
            lo = hi

    def consume(ids, paths):
        nonlocal total
        got_ids.append(ids)
        got_paths.append(paths)
        total += ids.size

    gen = blocks()
    if workers <= 1:
        for job in gen:
            consume(*_survivor_block(job))
            consumed = job[4]
            if total >= target_count:
                break
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            pending = {}
            done = False
            next_blk = 0
            results = {}
            jobs = list(gen)
            submitted = 0
            while not done:
                while submitted < len(jobs) and len(pending) < 2 * workers:
                    fut = pool.submit(_survivor_block, jobs[submitted])
                    pending[fut] = submitted
                    submitted += 1
                if not pending:
                    break
                finished = next(concurrent.futures.as_completed(list(pending)))
                results[pending.pop(finished)] = finished.result()
                while next_blk in results:
                    ids, paths = results.pop(next_blk)
                    consume(ids, paths)
                    consumed = jobs[next_blk][4]
                    next_blk += 1
                    if total >= target_count:
                        done = True
                        break

    all_ids = np.concatenate(got_ids) if got_ids else np.zeros(0, dtype=np.int64)
    d = env.dimension
    all_paths = (np.concatenate(got_paths, axis=0) if got_paths
                 else np.zeros((0, n + 1, d), dtype=np.int32))
    order = np.argsort(all_ids)
    all_ids = all_ids[order]
    all_paths = all_paths[order]
    if total >= target_count:
        all_ids = all_ids[:target_count]
        all_paths = all_paths[:target_count]
        raw = int(all_ids[-1]) + 1
        complete = True
    else:
        raw = consumed if consumed else budget
        complete = False
        if on_exhausted == "raise":
            raise BudgetExhaustedError(
                f"budget {budget} exhausted with {total}/{target_count} acceptances")
        import warnings
        warnings.warn(f"rejection budget {budget} exhausted with {total} "
                      f"of {target_count} acceptances", RuntimeWarning)
    return ConditionedSampleSet(manifest, n, seed, all_paths, all_ids,
                                raw, budget, complete)


# ---------------------------------------------------------------------------
# exact DP quantities

def _survival_window(env: Environment, n: int):
    d = env.dimension
    lower = np.asarray([0] + [-n] * (d - 1), dtype=np.int64)
    upper = np.asarray([n] * d, dtype=np.int64)
    return lower, upper


def exact_survival_series(env: Environment, n: int,
                          cell_cap: int = DEFAULT_CELL_CAP) -> np.ndarray:
    """Exact P[Lambda_k] for k = 0..n, one DP pass."""
    if n < 0:
        raise ParameterError("n must be >= 0")
    origin = (0,) * env.dimension
    _, series = exact_kernel(env, origin, n, absorbing=Hyperplane(0, 0),
                             cell_cap=cell_cap, window=_survival_window(env, n),
                             record_step_mass=True)
    return series


def exact_survival(env: Environment, n: int,
                   cell_cap: int = DEFAULT_CELL_CAP) -> float:
    """Exact P[Lambda_n]."""
    return float(exact_survival_series(env, n, cell_cap)[-1])


def exact_conditioned_endpoint(env: Environment, n: int,
                               cell_cap: int = DEFAULT_CELL_CAP) -> KernelTable:
    """Exact law of X(n) under Q^n, as a normalized KernelTable."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    origin = (0,) * env.dimension
    table = exact_kernel(env, origin, n, absorbing=Hyperplane(0, 0),
                         cell_cap=cell_cap, window=_survival_window(env, n))
    total = table.total_mass
    if total <= 0.0:
        raise ParameterError("absorbing event has zero probability")
    table.mass = table.mass / total
    return table


def backward_sample(env: Environment, n: int, count: int, seed: int = 0,
                    cell_cap: int = DEFAULT_CELL_CAP) -> np.ndarray:
    """Exact conditioned paths sampled backward from the DP tables.

    Limited to n <= 64 (table storage grows with n); returns an array of
    shape (count, n+1, d).  Distribution is exactly Q^n, so statistics on
    these paths isolate errors in the rejection sampler.
    """
    if n < 1 or n > BACKWARD_MAX_N:
        raise ParameterError(f"backward sampling supports 1 <= n <= {BACKWARD_MAX_N}")
    if count < 1:
        raise ParameterError("count must be >= 1")
    d = env.dimension
    lower, upper = _survival_window(env, n)
    sizes = tuple((upper - lower + 1).tolist())
    if int(np.prod(sizes)) > cell_cap:
        raise ResourceLimitError("window exceeds cell cap")

    grids = np.meshgrid(*[np.arange(lo, hi + 1, dtype=np.int64)
                          for lo, hi in zip(lower, upper)], indexing="ij")
    pts = np.stack([g.reshape(-1) for g in grids], axis=1)
    w = incident_conductances(env, pts)
    prob = (w / w.sum(axis=1, keepdims=True)).reshape(sizes + (2 * d,))
    absorb = (pts[:, 0] == 0).reshape(sizes)

    tables = []
    mass = np.zeros(sizes, dtype=np.float64)
    origin_idx = tuple((-lower).tolist())
    mass[origin_idx] = 1.0
    tables.append(mass)
    full = (slice(None),) * d
    for _ in range(n):
        new = np.zeros_like(mass)
        for j in range(d):
            src_hi = full[:j] + (slice(0, -1),) + full[j + 1:]
            dst_hi = full[:j] + (slice(1, None),) + full[j + 1:]
            new[dst_hi] += (mass * prob[..., 2 * j])[src_hi]
            new[src_hi] += (mass * prob[..., 2 * j + 1])[dst_hi]
        new[absorb] = 0.0
        mass = new
        tables.append(mass)

    final = tables[n]
    total = final.sum()
    if total <= 0.0:
        raise ParameterError("conditioning event has zero probability")

    flat = final.reshape(-1) / total
    cdf = np.cumsum(flat)
    cdf[-1] = 1.0
    u = rng.uniform(rng.DOMAIN_WALK, seed, 0x42414B57, np.arange(count, dtype=np.int64), n)
    pick = np.searchsorted(cdf, u, side="right")
    pos = np.stack(np.unravel_index(pick, sizes), axis=1)  # window indices

    mv = moves(d)
    out = np.zeros((count, n + 1, d), dtype=np.int32)
    out[:, n] = pos + lower
    shape = np.asarray(sizes, dtype=np.int64)
    for k in range(n - 1, -1, -1):
        table_k = tables[k]
        weights = np.zeros((count, 2 * d), dtype=np.float64)
        cand = np.zeros((2 * d, count, d), dtype=np.int64)
        for j in range(2 * d):
            z = pos - mv[j]
            cand[j] = z
            inside = np.all((z >= 0) & (z < shape), axis=1)
            zi = tuple(z[inside].T)
            m_z = table_k[zi]
            # transition prob from z to current point along move j
            p_zy = prob[zi + (j,)]
            weights[inside, j] = m_z * p_zy
        tot = weights.sum(axis=1)
        if np.any(tot <= 0.0):
            raise ParameterError("backward step found no admissible predecessor")
        c = np.cumsum(weights, axis=1)
        c /= c[:, -1:]
        uk = rng.uniform(rng.DOMAIN_WALK, seed, 0x42414B57,
                         np.arange(count, dtype=np.int64), k)
        idx = np.minimum(np.sum(c < uk[:, None], axis=1), 2 * d - 1)
        pos = cand[idx, np.arange(count)]
        out[:, k] = pos + lower
    return out


# ---------------------------------------------------------------------------
# derived checks

@dataclass(frozen=True)
class SurvivalRatio:
    n: int
    t: float
    m: int
    ratio: float
    reference: float

    @property
    def relative_error(self) -> float:
        return abs(self.ratio - self.reference) / self.reference


def survival_ratio_check(env: Environment, n: int, t: float,
                         cell_cap: int = DEFAULT_CELL_CAP) -> SurvivalRatio:
    """Exact P[Lambda_floor(nt)] / P[Lambda_n] against the t^(-1/2) limit."""
    if not 0.0 < t <= 1.0:
        raise ParameterError("t must lie in (0, 1]")
    m = int(np.floor(n * t))
    if m < 1:
        raise ParameterError("floor(n t) must be >= 1")
    series = exact_survival_series(env, n, cell_cap)
    ratio = float(series[m] / series[n])
    return SurvivalRatio(n, t, m, ratio, float(t ** -0.5))


def survival_slope(env: Environment, ns, cell_cap: int = DEFAULT_CELL_CAP):
    """Least-squares slope of log P[Lambda_n] against log n."""
    ns = sorted(int(v) for v in ns)
    series = exact_survival_series(env, ns[-1], cell_cap)
    ps = np.asarray([series[v] for v in ns])
    slope, intercept = np.polyfit(np.log(ns), np.log(ps), 1)
    return float(slope), {int(v): float(p) for v, p in zip(ns, ps)}


@dataclass(frozen=True)
class HittingStats:
    """Conditional hitting statistics under Q^n for a level N = floor(eps sqrt(n)).

    p_slow: fraction of paths that have not reached {x_1 = N} by time
    sqrt(eps) * n.  p_transversal: fraction whose transverse sup before
    that hitting time exceeds N / sqrt(eps).
    """
    n: int
    eps: float
    level: int
    time_threshold: float
    transversal_threshold: float
    p_slow: float
    p_slow_stderr: float
    p_transversal: float
    p_transversal_stderr: float
    sample_count: int


def conditional_hitting_stats(env: Environment, n: int, eps: float,
                              sample_count: int = 2000, seed: int = 0,
                              samples: Optional[ConditionedSampleSet] = None,
                              workers: int = 1) -> HittingStats:
    if eps <= 0.0 or eps > 1.0:
        raise ParameterError("eps must lie in (0, 1]")
    level = int(np.floor(eps * np.sqrt(n)))
    if level < 1:
        raise ParameterError(f"floor(eps sqrt(n)) = {level} must be >= 1")
    if samples is None:
        samples = rejection_sample(env, n, sample_count, seed=seed, workers=workers)
    paths = samples.paths
    count = paths.shape[0]
    first = paths[:, :, 0]
    reached = first >= level
    has = reached.any(axis=1)
    tau = np.where(has, np.argmax(reached, axis=1), n + 1)

    time_threshold = float(np.sqrt(eps) * n)
    slow = tau > time_threshold
    p_slow = float(slow.mean())

    trans = np.abs(paths[:, :, 1:]).max(axis=2) if paths.shape[2] > 1 else np.zeros_like(first)
    run = np.maximum.accumulate(trans, axis=1)
    upto = np.minimum(tau, n)
    sup_before = run[np.arange(count), upto]
    trans_threshold = float(level / np.sqrt(eps))
    exceed = sup_before > trans_threshold
    p_trans = float(exceed.mean())

    def se(p):
        return float(np.sqrt(max(p * (1.0 - p), 1e-12) / count))

    return HittingStats(n, eps, level, time_threshold, trans_threshold,
                        p_slow, se(p_slow), p_trans, se(p_trans), count)


def survival_curve(env: Environment, ns, seed: int = 0,
                   mc_attempts: int = 200000,
                   exact_cell_limit: int = DEFAULT_CELL_CAP):
    """Survival estimates across horizons: exact DP when the window fits,
    Monte Carlo otherwise.  Returns rows (n, p, stderr, method)."""
    rows = []
    d = env.dimension
    exact_ns = [v for v in ns
                if (v + 1) * (2 * v + 1) ** (d - 1) <= exact_cell_limit]
    if exact_ns:
        series = exact_survival_series(env, max(exact_ns))
        for v in sorted(exact_ns):
            rows.append((int(v), float(series[v]), 0.0, "exact"))
    for v in sorted(set(int(x) for x in ns) - set(exact_ns)):
        ids, _ = simulate_surviving_paths(env, v, np.arange(mc_attempts), seed=seed)
        p = ids.size / mc_attempts
        rows.append((v, float(p), float(np.sqrt(p * (1 - p) / mc_attempts)), "mc"))
    return rows
