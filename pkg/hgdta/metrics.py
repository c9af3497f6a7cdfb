"""Regression and clustering metrics."""
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence

import numpy as np
import sklearn.metrics as m
from numba import njit
from scipy.stats import pearsonr

from hgdta.errors import ContractViolation, UndefinedMetricError

REGRESSION_METRICS = ('mse', 'ci', 'rm2', 'pearson')
CLUSTER_METRICS = ('sc', 'chi', 'dbi')


def _pair(truths, predictions, min_len=1):
    y = np.asarray(truths, dtype=np.float64).ravel()
    y_hat = np.asarray(predictions, dtype=np.float64).ravel()
    if y.shape != y_hat.shape:
        raise ContractViolation(f'{y.size} truths for {y_hat.size} predictions')
    if y.size < min_len:
        raise UndefinedMetricError(f'need at least {min_len} values, got {y.size}')
    return y, y_hat


@njit(cache=True)
def _c_index_counts(y_true, y_pred):
    summ = 0.0
    pair = 0
    for i in range(len(y_true)):
        for j in range(len(y_true)):
            if y_true[i] > y_true[j]:
                pair += 1
                if y_pred[i] > y_pred[j]:
                    summ += 1.0
                elif y_pred[i] == y_pred[j]:
                    summ += 0.5
    return summ, pair


def concordance_index(truths, predictions) -> float:
    """Share of truth-ordered pairs (y_i > y_j) whose predictions keep the order;
    prediction ties count 0.5 and truth ties are skipped."""
    y, y_hat = _pair(truths, predictions, min_len=2)
    summ, pair = _c_index_counts(y, y_hat)
    if pair == 0:
        raise UndefinedMetricError('concordance index is undefined when all truths are equal')
    return summ / pair


def mse(truths, predictions) -> float:
    y, y_hat = _pair(truths, predictions)
    return float(m.mean_squared_error(y, y_hat))


def pearson(truths, predictions) -> float:
    y, y_hat = _pair(truths, predictions, min_len=2)
    if np.ptp(y) == 0 or np.ptp(y_hat) == 0:
        raise UndefinedMetricError('Pearson correlation is undefined for a constant vector')
    return float(pearsonr(y, y_hat)[0])


def r_m_squared(truths, predictions) -> float:
    '''r^2 * (1 - sqrt(r^2 - r0^2))
    r0^2 is the determination coefficient of truths regressed on predictions through
    the origin; the difference under the root is clamped at 0.
    '''
    y, y_hat = _pair(truths, predictions, min_len=2)
    r2 = pearson(y, y_hat) ** 2
    k = np.sum(y * y_hat) / np.sum(y_hat * y_hat)
    r02 = 1 - np.sum((y - k * y_hat) ** 2) / np.sum((y - y.mean()) ** 2)
    return float(r2 * (1 - np.sqrt(max(r2 - r02, 0.0))))


def regression_report(truths, predictions) -> Dict[str, float]:
    return {'mse': mse(truths, predictions),
            'ci': concordance_index(truths, predictions),
            'rm2': r_m_squared(truths, predictions),
            'pearson': pearson(truths, predictions)}


def _clusters(points, labels):
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    labels = np.asarray(labels)
    if labels.shape[0] != X.shape[0]:
        raise ContractViolation(f'{labels.shape[0]} labels for {X.shape[0]} points')
    uniq = np.unique(labels)
    if uniq.size < 2:
        raise UndefinedMetricError('cluster metrics need at least 2 clusters')
    return X, labels, uniq


def silhouette(points, labels) -> float:
    """Mean silhouette coefficient (Euclidean). A point alone in its cluster has
    a(i) = 0, hence s(i) = 1 unless it coincides with another cluster."""
    X, labels, uniq = _clusters(points, labels)
    D = m.pairwise_distances(X)
    scores = np.zeros(X.shape[0])
    for i in range(X.shape[0]):
        own = labels == labels[i]
        n_own = own.sum() - 1
        a = D[i, own].sum() / n_own if n_own else 0.0
        b = min(D[i, labels == c].mean() for c in uniq if c != labels[i])
        denom = max(a, b)
        scores[i] = (b - a) / denom if denom > 0 else 0.0
    return float(scores.mean())


def calinski_harabasz(points, labels) -> float:
    """Between / within dispersion ratio scaled by (n - k) / (k - 1); 1.0 when every
    cluster has zero spread."""
    X, labels, uniq = _clusters(points, labels)
    if uniq.size == X.shape[0]:
        return 1.0
    return float(m.calinski_harabasz_score(X, labels))


def davies_bouldin(points, labels) -> float:
    """Mean over clusters of the worst (s_k + s_l) / |c_k - c_l| ratio, with s_k the
    mean distance of a cluster's points to its centroid. Distinct clusters with
    coincident centroids give an infinite index."""
    X, labels, uniq = _clusters(points, labels)
    centroids = np.stack([X[labels == c].mean(axis=0) for c in uniq])
    spread = np.array([np.linalg.norm(X[labels == c] - centroids[k], axis=1).mean()
                       for k, c in enumerate(uniq)])
    M = m.pairwise_distances(centroids)
    worst = np.zeros(uniq.size)
    for k in range(uniq.size):
        ratios = []
        for l in range(uniq.size):
            if l == k:
                continue
            s = spread[k] + spread[l]
            if s == 0:
                ratios.append(0.0)
            elif M[k, l] == 0:
                ratios.append(np.inf)
            else:
                ratios.append(s / M[k, l])
        worst[k] = max(ratios)
    return float(worst.mean())


def cluster_report(points, labels) -> Dict[str, float]:
    return {'sc': silhouette(points, labels),
            'chi': calinski_harabasz(points, labels),
            'dbi': davies_bouldin(points, labels)}


@dataclass
class EvaluationReport():
    """Mean and (population) standard deviation of each metric over repeated runs."""
    scenario: str
    runs: int
    means: Dict[str, float] = field(default_factory=dict)
    stds: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_runs(cls, scenario: str, results: Sequence[Mapping[str, float]]):
        if not results:
            raise UndefinedMetricError('cannot summarize zero runs')
        keys = list(results[0])
        values = {key: np.array([r[key] for r in results], dtype=np.float64) for key in keys}
        return cls(scenario, len(results),
                   {key: float(v.mean()) for key, v in values.items()},
                   {key: float(v.std()) for key, v in values.items()})

    def to_lines(self) -> List[str]:
        """key=value lines of report.txt."""
        lines = [f'scenario={self.scenario}', f'runs={self.runs}']
        for key in self.means:
            lines.append(f'{key}_mean={self.means[key]!r}')
            lines.append(f'{key}_std={self.stds[key]!r}')
        return lines
