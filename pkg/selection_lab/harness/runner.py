import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from selection_lab.config import _settings
from selection_lab.errors import DomainError, InfeasibleParametersError, InstanceValidationError
from selection_lab.harness.models import Cell, ExperimentConfig, ExperimentResult, SkippedCell, TrialBatch
from selection_lab.harness.problems import PreparedInstance, ProblemRunner, runner_for
from selection_lab.utils import trial_rng

logger = logging.getLogger(__name__)

# spawn-key tags of the two rng streams of a cell
INSTANCE_STREAM = 0
TRIAL_STREAM = 1


def _summarise(ratios: np.ndarray):
    trials = ratios.size
    mean = float(np.mean(ratios))
    stddev = float(np.std(ratios, ddof=1)) if trials > 1 else 0.0
    return mean, stddev, stddev / math.sqrt(trials)


def run_cell(runner: ProblemRunner, config: ExperimentConfig, cell: Cell,
             pool: Optional[ThreadPoolExecutor] = None) -> List[TrialBatch]:
    """One batch per prepared instance, over the trials that used it."""
    runner.check_cell(cell)
    prepared: List[PreparedInstance] = [
        runner.prepare(cell, trial_rng(config.seed, cell.index, INSTANCE_STREAM, k))
        for k in range(config.instances_per_cell)
    ]

    def trial(t: int) -> float:
        rng = trial_rng(config.seed, cell.index, TRIAL_STREAM, t)
        return runner.run_trial(cell, prepared[t % len(prepared)], rng)

    indices = range(config.trials)
    if pool is not None:
        ratios = np.fromiter(pool.map(trial, indices), dtype=float, count=config.trials)
    else:
        ratios = np.fromiter((trial(t) for t in indices), dtype=float, count=config.trials)

    batches = []
    for k, p in enumerate(prepared):
        own = ratios[k::len(prepared)]
        mean, stddev, stderr = _summarise(own)
        batches.append(TrialBatch(
            problem=config.problem,
            algorithm=config.algorithm,
            n=p.arrivals,
            c=cell.c,
            d=cell.d,
            lam=p.relative_lam,
            eta=p.relative_eta,
            trials=own.size,
            mean_ratio=mean,
            stddev=stddev,
            stderr=stderr,
            bound=p.bound,
            seed=config.seed,
        ))
    return batches


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None) -> ExperimentResult:
    """
    Run every cell of the grid in config order.

    Trial t of cell i draws from the stream (seed, i, 1, t) and uses
    prepared instance t mod instances_per_cell, so results do not depend
    on the number of worker threads. Each prepared instance yields its own
    row, with lambda and eta in OPT units so the bound can be recomputed
    from the row. Cells whose parameters the algorithm
    cannot accept are skipped with the reason.
    """
    workers = workers or _settings.WORKERS
    runner = runner_for(config)
    result = ExperimentResult()
    cells = config.cells()
    logger.info(f"Running {config.problem}/{config.algorithm}: {len(cells)} cell(s) x {config.trials} trial(s), "
                f"seed {config.seed}")

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for cell in cells:
            try:
                batches = run_cell(runner, config, cell, pool)
            except (InfeasibleParametersError, DomainError, InstanceValidationError, ValidationError) as e:
                logger.warning(f"Skipping cell {cell.index} (c={cell.c}, d={cell.d}): {e}")
                result.skipped.append(SkippedCell(index=cell.index, c=cell.c, d=cell.d, reason=str(e)))
                continue
            for batch in batches:
                logger.debug(f"Cell {cell.index}: mean ratio {batch.mean_ratio:.4f} +/- {batch.stderr:.4f}, "
                             f"bound {batch.bound:.4f}")
            result.batches.extend(batches)
    finally:
        if pool is not None:
            pool.shutdown()

    logger.info(f"Finished {len(result.batches)} cell(s), skipped {len(result.skipped)}")
    return result
