"""Parallel trial execution, weight statistics, rate inversion and fits.

Trials are distributed over worker processes in chunks; every trial draws
its own counter-based random stream keyed by (master seed, p index, trial
index), so aggregated results are bit-identical for any worker count or
scheduling order.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .css import AncillaSpec
from .distill import DistillationConfig, ProtocolRunner
from .frames import FailureModel

_ENV_WORKERS = "CSSDISTILL_WORKERS"


def default_workers() -> int:
    env = os.environ.get(_ENV_WORKERS)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass
class PStats:
    """Counters for one failure-rate grid point.

    ``hist_x``/``hist_z`` count accepted output blocks by residual weight:
    bins 0..3 exact, the last bin is everything beyond (weight above the
    table cap included).
    """

    p: float
    trials: int = 0
    aborted: int = 0
    cand1: int = 0
    rej1: int = 0
    cand2: int = 0
    rej2: int = 0
    accepted: int = 0
    hist_x: list[int] = field(default_factory=lambda: [0] * 5)
    hist_z: list[int] = field(default_factory=lambda: [0] * 5)

    def merge(self, other: "PStats") -> None:
        assert self.p == other.p
        self.trials += other.trials
        self.aborted += other.aborted
        self.cand1 += other.cand1
        self.rej1 += other.rej1
        self.cand2 += other.cand2
        self.rej2 += other.rej2
        self.accepted += other.accepted
        for i in range(5):
            self.hist_x[i] += other.hist_x[i]
            self.hist_z[i] += other.hist_z[i]

    @property
    def r1(self) -> float:
        return self.rej1 / self.cand1 if self.cand1 else 0.0

    @property
    def r2(self) -> float:
        return self.rej2 / self.cand2 if self.cand2 else 0.0

    def weight_fraction(self, side: str, w: int | str) -> float | None:
        """P_X(w) / P_Z(w) over accepted blocks; None with no acceptances."""
        if not self.accepted:
            return None
        hist = self.hist_x if side == "x" else self.hist_z
        idx = 4 if w == "gt" else int(w)
        return hist[idx] / self.accepted

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "trials": self.trials,
            "aborted": self.aborted,
            "cand1": self.cand1,
            "rej1": self.rej1,
            "cand2": self.cand2,
            "rej2": self.rej2,
            "accepted": self.accepted,
            "hist_x": list(self.hist_x),
            "hist_z": list(self.hist_z),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PStats":
        return cls(
            p=d["p"], trials=d["trials"], aborted=d["aborted"],
            cand1=d["cand1"], rej1=d["rej1"], cand2=d["cand2"], rej2=d["rej2"],
            accepted=d["accepted"], hist_x=list(d["hist_x"]), hist_z=list(d["hist_z"]),
        )


@dataclass
class RunStats:
    """Aggregated experiment results over a failure-rate grid."""

    meta: dict
    per_p: list[PStats]

    def merge(self, other: "RunStats") -> None:
        for a, b in zip(self.per_p, other.per_p):
            a.merge(b)

    def to_dict(self) -> dict:
        return {"meta": self.meta, "per_p": [s.to_dict() for s in self.per_p]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "RunStats":
        return cls(meta=dict(d["meta"]), per_p=[PStats.from_dict(x) for x in d["per_p"]])

    @classmethod
    def from_json(cls, text: str) -> "RunStats":
        return cls.from_dict(json.loads(text))


def classify_outcome(outcome, table, stats: PStats, w_cap: int) -> None:
    """Fold one trial into the counters."""
    stats.trials += 1
    stats.cand1 += outcome.cand1
    stats.rej1 += outcome.rej1
    stats.cand2 += outcome.cand2
    stats.rej2 += outcome.rej2
    if outcome.aborted:
        stats.aborted += 1
        return
    hist_x = stats.hist_x
    hist_z = stats.hist_z
    for e, f in outcome.outputs:
        stats.accepted += 1
        if any(e):
            wx = table.x_weight(e)
            hist_x[wx if wx is not None and wx <= 3 else 4] += 1
        else:
            hist_x[0] += 1
        if any(f):
            wz = table.z_weight(f)
            hist_z[wz if wz is not None and wz <= 3 else 4] += 1
        else:
            hist_z[0] += 1


# Worker-global state, built once per process from the pickled config.
_WORKER: dict = {}


def _init_worker(config: DistillationConfig, p_grid, seed: int, w_cap: int) -> None:
    _WORKER["runners"] = {}
    _WORKER["config"] = config
    _WORKER["p_grid"] = list(p_grid)
    _WORKER["seed"] = seed
    _WORKER["w_cap"] = w_cap
    _WORKER["table"] = config.spec.weight_table(w_cap)


def _runner_for(p_index: int) -> ProtocolRunner:
    runner = _WORKER["runners"].get(p_index)
    if runner is None:
        config: DistillationConfig = _WORKER["config"]
        p = _WORKER["p_grid"][p_index]
        model = FailureModel(p_gate=p, p_meas=p, p_mem=config.model.p_mem)
        cfg = DistillationConfig(
            spec=config.spec,
            code_c1=config.code_c1,
            code_c2=config.code_c2,
            code_d1=config.code_d1,
            code_d2=config.code_d2,
            model=model,
            n_extra=config.n_extra,
        )
        runner = ProtocolRunner(cfg)
        _WORKER["runners"][p_index] = runner
    return runner


def _run_chunk(task: tuple[int, int, int]) -> tuple[int, dict]:
    p_index, start, count = task
    runner = _runner_for(p_index)
    stats = PStats(p=_WORKER["p_grid"][p_index])
    table = _WORKER["table"]
    seed = _WORKER["seed"]
    w_cap = _WORKER["w_cap"]
    for trial in range(start, start + count):
        outcome = runner.run_trial(runner._trial_rng(seed, p_index, trial))
        classify_outcome(outcome, table, stats, w_cap)
    return p_index, stats.to_dict()


def run_experiment(
    config: DistillationConfig,
    p_grid: list[float],
    trials_per_p: int,
    seed: int,
    workers: int | None = None,
    w_cap: int = 4,
    chunk_size: int = 20_000,
) -> RunStats:
    """Run the protocol over a grid of failure rates.

    The per-trial stream depends only on (seed, p index, trial index), so
    the aggregate is independent of worker count and chunking.
    """
    if trials_per_p < 1:
        raise ValueError("trials_per_p must be >= 1")
    workers = workers or default_workers()
    per_p = [PStats(p=p) for p in p_grid]
    tasks = []
    for p_index in range(len(p_grid)):
        start = 0
        while start < trials_per_p:
            n = min(chunk_size, trials_per_p - start)
            tasks.append((p_index, start, n))
            start += n

    if workers <= 1:
        _init_worker(config, p_grid, seed, w_cap)
        try:
            for task in tasks:
                p_index, d = _run_chunk(task)
                per_p[p_index].merge(PStats.from_dict(d))
        finally:
            _WORKER.clear()
    else:
        import multiprocessing as mp

        ctx = mp.get_context("fork") if hasattr(os, "fork") else mp.get_context("spawn")
        with ctx.Pool(
            workers, initializer=_init_worker, initargs=(config, p_grid, seed, w_cap)
        ) as pool:
            for p_index, d in pool.imap_unordered(_run_chunk, tasks):
                per_p[p_index].merge(PStats.from_dict(d))

    spec: AncillaSpec = config.spec
    meta = {
        "kind": spec.kind,
        "n": spec.blocks[0].n,
        "k_c1": config.code_c1.k,
        "n_c1": config.code_c1.n,
        "k_c2": config.code_c2.k,
        "n_c2": config.code_c2.n,
        "n_extra": config.n_extra,
        "seed": seed,
        "w_cap": w_cap,
        "trials_per_p": trials_per_p,
        "postselection": not (config.code_d1 is None and config.code_d2 is None),
        "p_grid": list(p_grid),
    }
    return RunStats(meta=meta, per_p=per_p)


def wilson_ci(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    phat = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (phat + z2 / (2 * trials)) / denom
    half = (z / denom) * math.sqrt(phat * (1 - phat) / trials + z2 / (4 * trials * trials))
    return max(0.0, center - half), min(1.0, center + half)


def _binom_tail(p: float, n: int, t: int) -> float:
    return sum(math.comb(n, w) * p**w * (1 - p) ** (n - w) for w in range(t + 1, n + 1))


def _binom_point(p: float, n: int, t: int) -> float:
    return math.comb(n, t) * p**t * (1 - p) ** (n - t)


def effective_rate(prob: float, n: int, t: int, kind: str = "tail") -> float:
    """Invert the binomial weight model for the effective error rate.

    ``tail`` solves P = sum_{w>t} C(n,w) p^w (1-p)^(n-w) on (0, 1);
    ``point`` solves P = C(n,t) p^t (1-p)^(n-t) on its increasing branch
    (0, t/n].  Bisection to 1e-12 relative tolerance.
    """
    if prob < 0:
        raise ValueError("probability must be nonnegative")
    if prob == 0.0:
        return 0.0
    if kind == "tail":
        if prob >= 1.0:
            raise ValueError("tail probability must be < 1")
        fn = _binom_tail
        lo, hi = 0.0, 1.0
    elif kind == "point":
        mode = t / n
        if prob > _binom_point(mode, n, t):
            raise ValueError("point probability exceeds the binomial mode maximum")
        fn = _binom_point
        lo, hi = 0.0, mode
    else:
        raise ValueError("kind must be 'tail' or 'point'")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if fn(mid, n, t) < prob:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    stderr: float


def slope_fit(points: list[tuple[float, float]]) -> FitResult:
    """Least-squares slope of log P against log p."""
    if len(points) < 2:
        raise ValueError("need at least two points")
    if any(p <= 0 or v <= 0 for p, v in points):
        raise ValueError("nonpositive values cannot be fit in log space")
    xs = np.log([p for p, _ in points])
    ys = np.log([v for _, v in points])
    n = len(xs)
    xbar, ybar = xs.mean(), ys.mean()
    sxx = float(((xs - xbar) ** 2).sum())
    slope = float(((xs - xbar) * (ys - ybar)).sum() / sxx)
    intercept = float(ybar - slope * xbar)
    if n > 2:
        resid = ys - (slope * xs + intercept)
        stderr = math.sqrt(float((resid**2).sum()) / (n - 2) / sxx)
    else:
        stderr = 0.0
    return FitResult(slope=slope, intercept=intercept, stderr=stderr)


def yields(stats: PStats, meta: dict, t: int, r_naive: float = 0.0) -> tuple[float, float]:
    """(Yield_FT, Yield_naive).

    Yield_FT applies the counted per-round rejection rates to the ideal
    k1 k2 / (n1 n2) throughput; the naive verification benchmark needs
    t^2 + t identically prepared blocks per qualified ancilla.
    """
    base = (meta["k_c1"] * meta["k_c2"]) / (meta["n_c1"] * meta["n_c2"])
    yield_ft = base * (1.0 - stats.r1) * (1.0 - stats.r2)
    yield_naive = (1.0 - r_naive) / (t * t + t)
    return yield_ft, yield_naive
