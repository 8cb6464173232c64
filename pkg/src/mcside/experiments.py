"""Scenario sweeps, error metrics and CSV output for the synthetic experiments.

A :class:`ScenarioSpec` fixes the data model and one swept parameter
(observation probability ``p``, model SNR of ``B'``, or the number of
subspaces ``S``). Every (grid value, trial) pair gets its own seed derived
from ``(base_seed, grid_index, trial)``, so records do not depend on the
order or process in which trials run.
"""

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .completion import CompletionConfig, complete
from .exceptions import SpecValidationError, ZeroDenominatorError
from .io import format_float
from .synth import (
    GmmNoise,
    SubspaceModel,
    add_measurement_noise,
    add_model_noise,
    generate_ground_truth,
    sample_pattern,
)

SWEEPS = ("p", "snr_b", "S")
METHODS = ("proposed", "baseline")
JOBS_ENV = "MCSIDE_JOBS"


def nmse(M, M_hat):
    """``||M - M_hat||_F^2 / ||M||_F^2``."""
    M = np.asarray(M, dtype=np.float64)
    den = float(np.vdot(M, M))
    if den == 0.0:
        raise ZeroDenominatorError("||M||_F = 0")
    E = M - np.asarray(M_hat, dtype=np.float64)
    return float(np.vdot(E, E)) / den


def rnmse(M, M_hat, pattern):
    """NMSE restricted to the observed entries."""
    mask = getattr(pattern, "mask", pattern)
    M = np.where(mask, M, 0.0)
    den = float(np.vdot(M, M))
    if den == 0.0:
        raise ZeroDenominatorError("||P_Omega(M)||_F = 0")
    E = np.where(mask, M - np.asarray(M_hat, dtype=np.float64), 0.0)
    return float(np.vdot(E, E)) / den


@dataclass(frozen=True)
class ScenarioSpec:
    """One sweep of synthetic completion problems.

    ``r = None`` means ``r = S * d`` (the rank sweep). ``counts`` maps a
    number of subspaces to the block sizes ``N_s``; values of ``S`` not listed
    get the most even split of ``n``. ``measurement_reference`` selects the
    signal power for the measurement SNR: ``"observed"`` uses
    ``||P_Omega(M)||^2``, ``"full"`` uses ``||M||^2``.
    """

    name: str
    sweep: str
    grid: tuple
    m: int = 20
    n: int = 60
    r: int | None = 12
    S: int = 3
    d: int = 4
    counts: tuple = ()
    p: float = 0.4
    snr_b: float = 20.0
    snr_a: float = 10.0
    noisy: bool = False
    gmm: GmmNoise = field(default_factory=GmmNoise)
    measurement_snr: float = 8.0
    measurement_reference: str = "observed"
    trials: int = 20
    base_seed: int = 0
    methods: tuple = METHODS
    outer_max_iters: int = 50

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(v) for v in self.grid))
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "counts", tuple((int(s), tuple(int(c) for c in cs)) for s, cs in self.counts))
        if isinstance(self.gmm, dict):
            object.__setattr__(self, "gmm", GmmNoise(**{k: tuple(v) if isinstance(v, list) else v
                                                        for k, v in self.gmm.items()}))
        self.validate()

    def validate(self):
        def bad(msg):
            raise SpecValidationError(f"{self.name}: {msg}")

        if self.sweep not in SWEEPS:
            bad(f"sweep must be one of {SWEEPS}, got {self.sweep!r}")
        if not self.grid:
            bad("grid is empty")
        if self.trials < 1:
            bad("trials must be at least 1")
        if not self.methods or any(mth not in METHODS for mth in self.methods):
            bad(f"methods must be a nonempty subset of {METHODS}")
        if self.m < 1 or self.n < 1 or self.d < 1:
            bad("m, n and d must be positive")
        if self.measurement_reference not in ("observed", "full"):
            bad("measurement_reference must be 'observed' or 'full'")
        if self.outer_max_iters < 1:
            bad("outer_max_iters must be at least 1")
        for k in range(len(self.grid)):
            try:
                model, p, _ = self.point(k)
            except (ValueError, SpecValidationError) as exc:
                bad(str(exc))
            if not 0.0 < p <= 1.0:
                bad(f"p = {p} outside (0, 1]")
            if model.n != self.n:
                bad(f"counts {model.counts} do not sum to n = {self.n}")
            if self.rank_for(model) > min(self.m, self.n):
                bad(f"rank {self.rank_for(model)} exceeds min(m, n)")

    def rank_for(self, model):
        return model.r

    def point(self, k):
        """``(model, p, snr_b)`` at grid index ``k``."""
        v = self.grid[k]
        S, p, snr_b = self.S, self.p, self.snr_b
        if self.sweep == "p":
            p = v
        elif self.sweep == "snr_b":
            snr_b = v
        else:
            if v != int(v) or v < 1:
                raise SpecValidationError(f"S grid values must be positive integers, got {v}")
            S = int(v)
        r = self.r if self.r is not None else S * self.d
        listed = dict(self.counts)
        if S in listed:
            model = SubspaceModel(S, self.d, r, listed[S])
        else:
            model = SubspaceModel.even(S, self.d, r, self.n)
        return model, p, snr_b

    def to_dict(self):
        out = asdict(self)
        out["grid"] = list(self.grid)
        out["methods"] = list(self.methods)
        out["counts"] = [[s, list(cs)] for s, cs in self.counts]
        out["gmm"] = {k: list(v) if isinstance(v, tuple) else v for k, v in out["gmm"].items()}
        return out

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise SpecValidationError(f"unknown spec fields: {sorted(unknown)}")
        try:
            return cls(**data)
        except SpecValidationError:
            raise
        except (TypeError, ValueError) as exc:
            raise SpecValidationError(str(exc)) from exc


def scenario1(noisy=False, trials=20, base_seed=0):
    """Observation-probability sweep, rank 12 from three 4-dimensional subspaces."""
    return ScenarioSpec(
        "scenario1", "p", (0.25, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9),
        m=20, n=60, r=12, S=3, d=4, snr_b=20.0, snr_a=10.0,
        noisy=noisy, trials=trials, base_seed=base_seed,
    )


def scenario2(noisy=False, trials=20, base_seed=0):
    """Model-SNR sweep of ``B'`` at ``p = 0.4``, rank 15 from three 5-dimensional subspaces."""
    return ScenarioSpec(
        "scenario2", "snr_b", (5.0, 10.0, 15.0, 20.0, 30.0, 50.0, 75.0, 100.0),
        m=20, n=60, r=15, S=3, d=5, p=0.4, snr_a=10.0,
        noisy=noisy, trials=trials, base_seed=base_seed,
    )


def scenario3(noisy=False, trials=50, base_seed=0):
    """Rank sweep ``r = 2 S`` for ``S = 2..10`` at ``p = 0.3``."""
    return ScenarioSpec(
        "scenario3", "S", tuple(range(2, 11)),
        m=20, n=64, r=None, S=2, d=2, p=0.3, snr_b=15.0, snr_a=5.0,
        counts=((6, (9, 9, 9, 10, 13, 14)),),
        noisy=noisy, trials=trials, base_seed=base_seed,
    )


SCENARIOS = {"scenario1": scenario1, "scenario2": scenario2, "scenario3": scenario3}


@dataclass
class MetricsRecord:
    scenario: str
    sweep_value: float
    grid_index: int
    trial: int
    seed: int
    method: str
    nmse: float = math.nan
    rnmse: float = math.nan
    outer_iters: int = 0
    inner_iters: int = 0
    termination: str = ""
    max_violation: float = 0.0
    error: str = ""
    seconds: float = 0.0

    @property
    def ok(self):
        return not self.error

    @property
    def seconds_per_iteration(self):
        return self.seconds / self.inner_iters if self.inner_iters else math.nan


TRIAL_COLUMNS = [
    "scenario", "sweepValue", "gridIndex", "trial", "seed", "method", "nmse", "rnmse",
    "outerIters", "innerIters", "termination", "maxViolation", "error",
]
AGGREGATE_COLUMNS = [
    "method", "sweepValue", "count", "failures", "nmseMean", "nmseStderr", "rnmseMean", "rnmseStderr",
]
TIMING_COLUMNS = ["scenario", "sweepValue", "trial", "method", "seconds", "innerIters", "secondsPerIteration"]


@dataclass(frozen=True, eq=False)
class TrialData:
    M: np.ndarray
    observed: np.ndarray
    pattern: object
    Bprime: np.ndarray
    Aprime: np.ndarray
    truth: object
    rank: int


def trial_seed(spec, k, trial):
    return np.random.SeedSequence([spec.base_seed, k, trial])


def make_trial_data(spec, k, trial):
    """Deterministic data for grid index ``k`` and trial number ``trial``."""
    model, p, snr_b = spec.point(k)
    s_truth, s_b, s_a, s_mask, s_noise = trial_seed(spec, k, trial).spawn(5)
    truth = generate_ground_truth(model, spec.m, s_truth)
    M = truth.M
    Bprime = add_model_noise(truth.B, snr_b, s_b)
    Aprime = add_model_noise(truth.A, spec.snr_a, s_a)
    pattern = sample_pattern(spec.m, spec.n, p, s_mask)
    observed = np.where(pattern.mask, M, 0.0)
    if spec.noisy:
        ref = float(np.vdot(M, M)) if spec.measurement_reference == "full" else None
        observed = add_measurement_noise(observed, pattern, spec.gmm, spec.measurement_snr, s_noise, ref)
    return TrialData(M, observed, pattern, Bprime, Aprime, truth, model.r)


def run_trial(spec, k, trial):
    """Run every requested method on one dataset; failures become error records."""
    seed = int(trial_seed(spec, k, trial).generate_state(1)[0])
    base = dict(scenario=spec.name, sweep_value=spec.grid[k], grid_index=k, trial=trial, seed=seed)
    try:
        data = make_trial_data(spec, k, trial)
    except Exception as exc:
        return [MetricsRecord(method=mth, error=f"{type(exc).__name__}: {exc}", **base) for mth in spec.methods]
    records = []
    for mth in spec.methods:
        rec = MetricsRecord(method=mth, **base)
        cfg = CompletionConfig(r=data.rank, baseline=(mth == "baseline"), seed=seed,
                               outer_max_iters=spec.outer_max_iters)
        t0 = time.perf_counter()
        try:
            res = complete(data.observed, data.pattern, data.Bprime, cfg)
            rec.seconds = time.perf_counter() - t0
            X = res.X_hat
            rec.nmse = nmse(data.M, X)
            rec.rnmse = rnmse(data.M, X, data.pattern)
            rec.outer_iters = res.outer_iterations
            rec.inner_iters = res.inner_iterations
            rec.termination = res.termination_reason
            rec.max_violation = res.max_membership_violation
        except Exception as exc:
            rec.seconds = time.perf_counter() - t0
            rec.error = f"{type(exc).__name__}: {exc}"
        records.append(rec)
    return records


def _run_task(args):
    return run_trial(*args)


def default_jobs():
    env = os.environ.get(JOBS_ENV)
    if env:
        try:
            jobs = int(env)
        except ValueError:
            raise SpecValidationError(f"{JOBS_ENV} must be an integer, got {env!r}") from None
        if jobs < 1:
            raise SpecValidationError(f"{JOBS_ENV} must be at least 1")
        return jobs
    return os.cpu_count() or 1


def run_scenario(spec, jobs=None, progress=None):
    """All records of a sweep in canonical order (grid index, trial, method)."""
    jobs = default_jobs() if jobs is None else jobs
    tasks = [(spec, k, t) for k in range(len(spec.grid)) for t in range(spec.trials)]
    if jobs <= 1 or len(tasks) <= 1:
        results = []
        for task in tasks:
            results.append(_run_task(task))
            if progress:
                progress(len(results), len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_task, tasks))
    order = {m: i for i, m in enumerate(METHODS)}
    records = [rec for batch in results for rec in batch]
    records.sort(key=lambda r: (r.grid_index, r.trial, order[r.method]))
    return records


def _stderr(values):
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1) / np.sqrt(len(values)))


@dataclass
class AggregateRow:
    method: str
    sweep_value: float
    count: int
    failures: int
    nmse_mean: float
    nmse_stderr: float
    rnmse_mean: float
    rnmse_stderr: float


def aggregate(records):
    """Mean and standard error of NMSE and RNMSE per (method, sweep value)."""
    groups = {}
    for rec in records:
        groups.setdefault((rec.method, rec.grid_index, rec.sweep_value), []).append(rec)
    order = {m: i for i, m in enumerate(METHODS)}
    rows = []
    for (mth, _, v), recs in sorted(groups.items(), key=lambda kv: (order[kv[0][0]], kv[0][1])):
        good = [r for r in recs if r.ok]
        a = np.array([r.nmse for r in good])
        b = np.array([r.rnmse for r in good])
        rows.append(AggregateRow(
            mth, v, len(good), len(recs) - len(good),
            float(a.mean()) if a.size else math.nan, _stderr(a),
            float(b.mean()) if b.size else math.nan, _stderr(b),
        ))
    return rows


def _open_writer(path):
    fh = open(path, "w", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def write_trials_csv(path, records):
    fh, w = _open_writer(path)
    with fh:
        w.writerow(TRIAL_COLUMNS)
        for r in records:
            w.writerow([
                r.scenario, format_float(r.sweep_value), r.grid_index, r.trial, r.seed, r.method,
                format_float(r.nmse), format_float(r.rnmse), r.outer_iters, r.inner_iters,
                r.termination, format_float(r.max_violation), r.error,
            ])


def write_aggregate_csv(path, rows):
    fh, w = _open_writer(path)
    with fh:
        w.writerow(AGGREGATE_COLUMNS)
        for a in rows:
            w.writerow([
                a.method, format_float(a.sweep_value), a.count, a.failures,
                format_float(a.nmse_mean), format_float(a.nmse_stderr),
                format_float(a.rnmse_mean), format_float(a.rnmse_stderr),
            ])


def write_timing_csv(path, records):
    fh, w = _open_writer(path)
    with fh:
        w.writerow(TIMING_COLUMNS)
        for r in records:
            w.writerow([
                r.scenario, format_float(r.sweep_value), r.trial, r.method, format_float(r.seconds),
                r.inner_iters, format_float(r.seconds_per_iteration),
            ])


def read_aggregate_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        AggregateRow(
            r["method"], float(r["sweepValue"]), int(r["count"]), int(r["failures"]),
            float(r["nmseMean"]), float(r["nmseStderr"]), float(r["rnmseMean"]), float(r["rnmseStderr"]),
        )
        for r in rows
    ]


@dataclass
class RuntimeRow:
    sweep_value: float
    proposed: float
    baseline: float


def runtime_probe(spec, trials=None):
    """Mean wall-clock seconds per inner iteration for each method and grid value.

    One untimed warm-up trial runs first so that import and cache effects do
    not land in the first measurement. Trials are sequential.
    """
    spec = replace(spec, methods=METHODS, trials=trials or spec.trials)
    run_trial(spec, 0, 0)
    rows = []
    for k, v in enumerate(spec.grid):
        per = {m: [] for m in METHODS}
        for t in range(spec.trials):
            for rec in run_trial(spec, k, t):
                if rec.ok and rec.inner_iters:
                    per[rec.method].append(rec.seconds_per_iteration)
        rows.append(RuntimeRow(v, *(float(np.mean(per[m])) if per[m] else math.nan for m in METHODS)))
    return rows


def write_runtime_csv(path, rows):
    fh, w = _open_writer(path)
    with fh:
        w.writerow(["sweepValue", "proposedSecondsPerIter", "baselineSecondsPerIter"])
        for r in rows:
            w.writerow([format_float(r.sweep_value), format_float(r.proposed), format_float(r.baseline)])
