import csv
import io
import logging
import math
from typing import Iterable, List, Optional

from selection_lab.config import _settings
from selection_lab.errors import InstanceParseError, SelectionLabError
from selection_lab.harness.models import BoundVerdict, TrialBatch

logger = logging.getLogger(__name__)

CSV_HEADER = ('problem', 'algorithm', 'n', 'c', 'd', 'lambda', 'eta', 'trials', 'mean_ratio', 'stderr', 'bound', 'seed')


def _number(x: float) -> str:
    return repr(float(x))


def emit_csv(batches: Iterable[TrialBatch]) -> str:
    """One row per batch, floats in shortest round-trip form."""
    batches = list(batches)
    if not batches:
        raise SelectionLabError('nothing to emit: no completed cells')
    out = io.StringIO()
    writer = csv.writer(out, lineterminator='\n')
    writer.writerow(CSV_HEADER)
    for b in batches:
        writer.writerow((
            b.problem, b.algorithm, b.n, _number(b.c), _number(b.d), _number(b.lam), _number(b.eta),
            b.trials, _number(b.mean_ratio), _number(b.stderr), _number(b.bound), b.seed,
        ))
    return out.getvalue()


def write_csv(batches: Iterable[TrialBatch], path: str) -> None:
    text = emit_csv(batches)
    try:
        with open(path, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
    except OSError as e:
        raise SelectionLabError(f'cannot write {path}: {e}') from e
    logger.info(f"Wrote results to {path}")


def parse_csv(text: str) -> List[TrialBatch]:
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise InstanceParseError('unexpected CSV header', 1)
    batches = []
    for line_number, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(CSV_HEADER):
            raise InstanceParseError(f'expected {len(CSV_HEADER)} columns, got {len(row)}', line_number)
        record = dict(zip(CSV_HEADER, row))
        try:
            trials = int(record['trials'])
            stderr = float(record['stderr'])
            batches.append(TrialBatch(
                problem=record['problem'],
                algorithm=record['algorithm'],
                n=int(record['n']),
                c=float(record['c']),
                d=float(record['d']),
                lam=float(record['lambda']),
                eta=float(record['eta']),
                trials=trials,
                mean_ratio=float(record['mean_ratio']),
                stddev=stderr * math.sqrt(trials),
                stderr=stderr,
                bound=float(record['bound']),
                seed=int(record['seed']),
            ))
        except ValueError as e:
            raise InstanceParseError(str(e), line_number) from e
    return batches


def compare_with_bound(batch: TrialBatch, slack: Optional[float] = None) -> BoundVerdict:
    """PASS iff mean_ratio >= bound - 3 * stderr - slack."""
    slack = _settings.slack_for(batch.problem) if slack is None else slack
    threshold = batch.bound - 3.0 * batch.stderr - slack
    margin = batch.mean_ratio - threshold
    return BoundVerdict(batch=batch, slack=slack, threshold=threshold, margin=margin, passed=margin >= 0)


def compare_all(batches: Iterable[TrialBatch], slack: Optional[float] = None) -> List[BoundVerdict]:
    verdicts = [compare_with_bound(b, slack) for b in batches]
    failed = sum(not v.passed for v in verdicts)
    if failed:
        logger.warning(f"{failed} of {len(verdicts)} cell(s) fell below their bound")
    return verdicts
