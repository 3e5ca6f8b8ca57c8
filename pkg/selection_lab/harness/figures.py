"""
Bound curves behind the secretary figures, emitted as CSV.

Each sweep is a pure function of its grid; nothing is simulated.
"""
import csv
import io
import math
from typing import Dict, Iterable, List, Sequence

import numpy as np

from selection_lab.errors import DomainError
from selection_lab.numerics import INV_E, f_of_c
from selection_lab.secretary import LambdaDistribution, SecretaryParams, expected_ratio_random_lambda, g_secretary

FIGURES = ('secretary-grid', 'random-lambda', 'naive')


def secretary_bound_grid(c_values: Iterable[float], lambda_ratios: Iterable[float]) -> List[Dict[str, float]]:
    """max{1/(ce), f(c)(1 - lambda/p*)} with exact predictions, p* = OPT."""
    rows = []
    for c in c_values:
        f = f_of_c(c)
        for ratio in lambda_ratios:
            rows.append({'c': c, 'lambda_over_p': ratio,
                         'bound': max(1.0 / (c * math.e), f * (1.0 - ratio))})
    return rows


def random_lambda_curves(eta_values: Iterable[float], c: float = 2.0, p_star: float = 100.0, lam: float = 25.0,
                         distributions: Dict[str, LambdaDistribution] = None) -> List[Dict[str, float]]:
    """Deterministic lambda against randomised lambda, OPT = p*, as a function of eta."""
    if distributions is None:
        distributions = {
            'uniform': LambdaDistribution.uniform(20.0, 30.0),
            'normal': LambdaDistribution.normal(25.0, 10.0),
            'normal_at_zero': LambdaDistribution.normal(0.0, 32.0),
        }
    params = SecretaryParams(c=c, lam=lam, p_star=p_star)
    rows = []
    for eta in eta_values:
        row = {'eta': eta, 'deterministic': g_secretary(eta, params, p_star)}
        for name, distribution in distributions.items():
            row[name] = expected_ratio_random_lambda(eta, c, p_star, p_star, distribution)
        rows.append(row)
    return rows


def naive_comparison(c_values: Iterable[float], delta: float = 0.1) -> List[Dict[str, float]]:
    """Algorithm 1 against its naive randomisation with gamma = 1/c at lambda + eta = delta * OPT."""
    if not 0.0 <= delta < 1.0:
        raise DomainError(f'delta must lie in [0, 1), got {delta}')
    rows = []
    for c in c_values:
        rows.append({
            'c': c,
            'classical': INV_E,
            'algorithm1': f_of_c(c) * (1.0 - delta),
            'naive': 1.0 / (c * math.e) + (1.0 - 1.0 / c) * (1.0 - delta),
        })
    return rows


def rows_to_csv(rows: Sequence[Dict[str, float]]) -> str:
    if not rows:
        return ''
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=list(rows[0]), lineterminator='\n')
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(float(v)) for k, v in row.items()})
    return out.getvalue()


def figure_csv(name: str, points: int = 50) -> str:
    """CSV for one of FIGURES on its default axes."""
    if name == 'secretary-grid':
        rows = secretary_bound_grid(np.linspace(1.0, 10.0, points), np.linspace(0.0, 1.0, points))
    elif name == 'random-lambda':
        rows = random_lambda_curves(np.linspace(0.0, 60.0, points))
    elif name == 'naive':
        rows = naive_comparison(np.linspace(1.0, 5.0, points))
    else:
        raise DomainError(f"unknown figure {name!r}, choose one of {', '.join(FIGURES)}")
    return rows_to_csv(rows)
