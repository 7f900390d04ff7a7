"""Repeated train/validation/test protocol around Soft Impute.

Each repetition ``n`` permutes the rows, selects ``floor(s * C) + 1`` of
them, hides each eligible cell of those rows with probability
``p_missing`` and solves once per lambda on the remaining cells. For
every selected row ``h`` the hidden cells of ``h`` are the test set and the
hidden cells of the other selected rows are the validation set. Test
predictions at the validation-optimal lambda are thresholded at 0 and
accumulated into per-cell vote counts.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .data_ingest import DiscreteMatrix, LogRcaMatrix
from .errors import ConfigError, ContractViolation, NumericalFailure
from .soft_impute import MaskedMatrix, SolverConfig, solve

log = logging.getLogger(__name__)

COUNTRY_STREAM = 0
PRODUCT_STREAM = 1
_TIE_TAG = int.from_bytes(b"tie", "big")


class ProtocolWarning(UserWarning):
    pass


def step_grid(count: int = 30) -> tuple[float, ...]:
    """``2 ** ((k - 1) / 2)`` for ``k = 1..count``."""
    return tuple(float(2.0 ** ((k - 1) / 2)) for k in range(1, count + 1))


def appendix_grid(count: int = 30) -> tuple[float, ...]:
    """``count`` points log2-uniform on ``[2**-1, 2**15]``."""
    return tuple(float(x) for x in 2.0 ** np.linspace(-1.0, 15.0, count))


@dataclass
class ProtocolConfig:
    repetitions: int = 50
    row_fraction: float = 0.25
    missing_probability: float = 0.3
    lambda_grid: tuple[float, ...] = field(default_factory=step_grid)
    clip_bounds: tuple[float, float] | None = (-4.0, 4.0)
    base_seed: int = 0
    tolerance: float = 1e-9
    max_iterations: int = 1500
    warm_start: bool = False
    threads: int = 1

    def __post_init__(self):
        self.lambda_grid = tuple(float(x) for x in self.lambda_grid)
        grid = np.asarray(self.lambda_grid)
        if grid.size == 0:
            raise ConfigError("lambda grid is empty")
        if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
            raise ConfigError("lambda grid must be positive and strictly increasing")
        if not 0 < self.missing_probability < 1:
            raise ConfigError(f"missing_probability must lie in (0, 1), got {self.missing_probability}")
        if not 0 < self.row_fraction <= 1:
            raise ConfigError(f"row_fraction must lie in (0, 1], got {self.row_fraction}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.clip_bounds is not None:
            lo, hi = self.clip_bounds
            if not lo < hi:
                raise ConfigError(f"clip bounds must satisfy lo < hi, got {self.clip_bounds}")
            self.clip_bounds = (float(lo), float(hi))

    def selected_count(self, n_rows: int) -> int:
        return min(n_rows, math.floor(self.row_fraction * n_rows) + 1)


@dataclass
class ExperimentInput:
    """The matrix fed to completion plus the cells allowed in any split."""
    values: np.ndarray
    eligible: np.ndarray
    rows: list[str]
    cols: list[str]

    @classmethod
    def from_discrete(cls, d: DiscreteMatrix) -> "ExperimentInput":
        return cls(d.groups.astype(float), d.groups != 0, list(d.countries), list(d.products))

    @classmethod
    def from_log(cls, m: LogRcaMatrix) -> "ExperimentInput":
        return cls(np.where(m.observed, m.values, 0.0), m.observed.copy(), list(m.countries), list(m.products))

    @property
    def shape(self):
        return self.values.shape

    @property
    def truth(self) -> np.ndarray:
        """Class 1 where the value is >= 0 (RCA >= 1), restricted to eligible cells."""
        return (self.values >= 0) & self.eligible

    def transpose(self) -> "ExperimentInput":
        return ExperimentInput(self.values.T.copy(), self.eligible.T.copy(), list(self.cols), list(self.rows))


@dataclass
class MaskPartition:
    repetition: int
    selected_rows: np.ndarray
    training: np.ndarray
    obscured: np.ndarray

    def test_mask(self, h: int) -> np.ndarray:
        m = np.zeros_like(self.obscured)
        m[h] = self.obscured[h]
        return m

    def validation_mask(self, h: int) -> np.ndarray:
        m = self.obscured.copy()
        m[h] = False
        return m

    def check(self, eligible: np.ndarray) -> None:
        if np.any(self.training & self.obscured):
            raise ContractViolation("training and held-out cells overlap")
        if np.any((self.training | self.obscured) & ~eligible):
            raise ContractViolation("an ineligible (group 0) cell entered a split")
        outside = np.ones(self.obscured.shape[0], dtype=bool)
        outside[self.selected_rows] = False
        if np.any(self.obscured[outside]):
            raise ContractViolation("cells hidden outside the selected rows")


@dataclass
class RmseRecord:
    n: int
    h: int
    lam: float
    val_rmse: float
    test_rmse: float


@dataclass
class RepetitionResult:
    n: int
    records: list[RmseRecord]
    test_rows: np.ndarray
    test_cols: np.ndarray
    test_predictions: np.ndarray
    unconverged: int = 0


@dataclass
class AggregatedPredictions:
    rows: list[str]
    cols: list[str]
    mean_class: np.ndarray
    majority_class: np.ndarray
    votes: np.ndarray
    test_appearances: np.ndarray
    fpr_by_row: np.ndarray
    fnr_by_row: np.ndarray
    rmse_records: list[RmseRecord]
    failed_repetitions: list[int] = field(default_factory=list)
    repetitions: int = 0


def rng_for(base_seed: int, stream: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([int(base_seed), int(stream), *map(int, key)])


def build_partition(A: ExperimentInput, n: int, config: ProtocolConfig,
                    stream: int = COUNTRY_STREAM) -> MaskPartition:
    C, P = A.shape
    size = config.selected_count(C)
    usable = A.eligible.any(axis=1)
    if int(usable.sum()) < size:
        raise ContractViolation(f"need {size} rows with eligible cells, only {int(usable.sum())} available")
    rng = rng_for(config.base_seed, stream, n)
    perm = rng.permutation(C)
    skipped = [int(r) for r in perm[:size] if not usable[r]]
    if skipped:
        warnings.warn(f"repetition {n}: rows {skipped} have no eligible cells, replaced from permutation tail",
                      ProtocolWarning, stacklevel=2)
    selected = perm[usable[perm]][:size]
    hide = rng.random((size, P)) < config.missing_probability
    obscured = np.zeros((C, P), dtype=bool)
    obscured[selected] = hide & A.eligible[selected]
    training = A.eligible & ~obscured
    part = MaskPartition(n, selected, training, obscured)
    part.check(A.eligible)
    return part


def _clip(Z, bounds):
    return Z if bounds is None else np.clip(Z, bounds[0], bounds[1])


def run_repetition(A: ExperimentInput, partition: MaskPartition, config: ProtocolConfig) -> RepetitionResult:
    """Solve along the lambda grid once and score every (validation, test) split.

    Lambda ties on validation RMSE go to the smaller lambda.
    """
    obs_r, obs_c = np.nonzero(partition.obscured)
    truth = A.values[obs_r, obs_c]
    masked = MaskedMatrix(A.values, partition.training)
    grid = config.lambda_grid
    preds = np.empty((len(grid), obs_r.size))
    unconverged = 0
    prev = None
    order = range(len(grid) - 1, -1, -1) if config.warm_start else range(len(grid))
    for k in order:
        cfg = SolverConfig(grid[k], config.tolerance, config.max_iterations,
                           warm_start=prev if config.warm_start else None)
        res = solve(masked, cfg)
        unconverged += not res.converged
        prev = res.completed
        preds[k] = _clip(res.completed, config.clip_bounds)[obs_r, obs_c]
    sq = (preds - truth) ** 2
    total_sse = sq.sum(axis=1)
    total_cnt = obs_r.size

    records = []
    t_rows, t_cols, t_pred = [], [], []
    for h in partition.selected_rows:
        in_h = obs_r == h
        cnt_h = int(in_h.sum())
        val_cnt = total_cnt - cnt_h
        if cnt_h == 0:
            continue
        if val_cnt == 0:
            warnings.warn(f"repetition {partition.repetition}, row {h}: empty validation set, skipped",
                          ProtocolWarning, stacklevel=2)
            continue
        sse_h = sq[:, in_h].sum(axis=1)
        val_rmse = np.sqrt((total_sse - sse_h) / val_cnt)
        k_best = int(np.argmin(val_rmse))
        test_rmse = math.sqrt(sse_h[k_best] / cnt_h)
        records.append(RmseRecord(partition.repetition, int(h), grid[k_best], float(val_rmse[k_best]), test_rmse))
        t_rows.append(obs_r[in_h])
        t_cols.append(obs_c[in_h])
        t_pred.append(preds[k_best, in_h])
    cat = (lambda xs, dt: np.concatenate(xs) if xs else np.empty(0, dtype=dt))
    return RepetitionResult(partition.repetition, records, cat(t_rows, int), cat(t_cols, int),
                            cat(t_pred, float), unconverged)


def _one_repetition(A, n, config, stream):
    part = build_partition(A, n, config, stream)
    try:
        return run_repetition(A, part, config)
    except NumericalFailure as exc:
        log.warning("repetition %d aborted: %s", n, exc)
        return None


def classify_and_aggregate(results, A: ExperimentInput, config: ProtocolConfig,
                           stream: int = COUNTRY_STREAM) -> AggregatedPredictions:
    """Majority and mean vote per cell; prediction is class 1 when the completed value is >= 0."""
    ok = [r for r in results if r is not None]
    if not ok:
        raise NumericalFailure("every repetition failed")
    shape = A.shape
    votes = np.zeros(shape, dtype=np.int64)
    appearances = np.zeros(shape, dtype=np.int64)
    records = []
    for r in sorted(ok, key=lambda r: r.n):
        np.add.at(votes, (r.test_rows, r.test_cols), (r.test_predictions >= 0).astype(np.int64))
        np.add.at(appearances, (r.test_rows, r.test_cols), 1)
        records.extend(r.records)
    seen = appearances > 0
    mean = np.zeros(shape)
    mean[seen] = votes[seen] / appearances[seen]
    majority = (2 * votes > appearances).astype(np.int8)
    for c, p in zip(*np.nonzero(seen & (2 * votes == appearances))):
        majority[c, p] = rng_for(config.base_seed, stream, _TIE_TAG, c, p).integers(2)
    failed = sorted({n for n in range(config.repetitions)} - {r.n for r in ok})
    agg = AggregatedPredictions(list(A.rows), list(A.cols), mean, majority, votes, appearances,
                                np.full(shape[0], np.nan), np.full(shape[0], np.nan), records,
                                failed, config.repetitions)
    agg.fpr_by_row, agg.fnr_by_row = row_error_rates(agg, A.truth)
    return agg


def row_error_rates(agg: AggregatedPredictions, truth: np.ndarray):
    """Per-row false positive / false negative frequency over all test appearances.

    NaN where the row never had a true-negative (resp. true-positive) cell in a test set.
    """
    truth = np.asarray(truth, dtype=bool)
    app = agg.test_appearances
    pos_votes = agg.votes
    neg_app = np.where(~truth, app, 0).sum(axis=1)
    pos_app = np.where(truth, app, 0).sum(axis=1)
    fp = np.where(~truth, pos_votes, 0).sum(axis=1)
    fn = np.where(truth, app - pos_votes, 0).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        fpr = np.where(neg_app > 0, fp / neg_app, np.nan)
        fnr = np.where(pos_app > 0, fn / pos_app, np.nan)
    return fpr, fnr


def run_experiment(A: ExperimentInput, config: ProtocolConfig, stream: int = COUNTRY_STREAM) -> AggregatedPredictions:
    """All repetitions on ``A``, threaded across repetitions; output is thread-count independent."""
    reps = range(config.repetitions)
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(lambda n: _one_repetition(A, n, config, stream), reps))
    else:
        results = [_one_repetition(A, n, config, stream) for n in reps]
    return classify_and_aggregate(results, A, config, stream)


def run_product_side(A: ExperimentInput, config: ProtocolConfig) -> AggregatedPredictions:
    """The same protocol on the transposed matrix, with its own seed stream."""
    return run_experiment(A.transpose(), config, stream=PRODUCT_STREAM)


def surrogate_incidence(agg: AggregatedPredictions, missing: np.ndarray):
    """Mean-vote and majority-vote surrogates with originally missing RCA cells set to 0."""
    missing = np.asarray(missing, dtype=bool)
    if missing.shape != agg.mean_class.shape:
        raise ContractViolation(f"mask shape {missing.shape} != {agg.mean_class.shape}")
    mbar = np.where(missing, 0.0, agg.mean_class)
    mhat = np.where(missing, 0, agg.majority_class).astype(np.int8)
    return mbar, mhat


def expected_test_appearances(n_rows: int, config: ProtocolConfig) -> float:
    return config.repetitions * config.selected_count(n_rows) / n_rows * config.missing_probability


def with_overrides(config: ProtocolConfig, **kw) -> ProtocolConfig:
    return replace(config, **kw)
