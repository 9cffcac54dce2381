"""Rasch-model calibration.

The Rasch model puts respondents and items on one logit scale: the
probability of a correct response is sigma(theta - b) for respondent
ability theta and item difficulty b.

Difficulties are estimated by marginal maximum likelihood with a
standard-normal latent ability distribution discretized on a fixed
quadrature grid (EM); abilities by MAP under the same prior. Under the
Rasch model an item's raw score (its count of correct responses) is a
sufficient statistic, and the M-step here solves one equation per
distinct raw score, so items with equal column sums receive bit-equal
difficulties by construction.

Estimated difficulties are min-max normalized onto [0, 1] and bucketed
into ordered categorical labels (5- or 3-level scheme) for use in
generation prompts.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
from scipy.special import expit, log_expit

from qgforge.corpus import DifficultyLabel, DifficultyLabel3
from qgforge.responses import ResponseMatrix


class CalibrationError(ValueError):
    """Raised for unusable calibration inputs."""


def rasch_prob(theta, b):
    """P(correct) = exp(theta - b) / (1 + exp(theta - b)), overflow-safe.

    Accepts scalars or numpy arrays (broadcasting); scalar inputs return
    a float.
    """
    theta_arr = np.asarray(theta, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    if not (np.isfinite(theta_arr).all() and np.isfinite(b_arr).all()):
        raise CalibrationError("rasch_prob requires finite inputs")
    out = expit(theta_arr - b_arr)
    if np.isscalar(theta) and np.isscalar(b):
        return float(out)
    return out


@dataclass(frozen=True)
class EmConfig:
    """EM settings: quadrature grid, stopping rule, Newton safeguards."""

    n_points: int = 61
    lo: float = -6.0
    hi: float = 6.0
    tol: float = 1e-4
    max_iters: int = 500
    newton_tol: float = 1e-10
    newton_max_iter: int = 100

    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        """Equally spaced points with standard-normal weights summing to 1."""
        points = np.linspace(self.lo, self.hi, self.n_points)
        weights = np.exp(-0.5 * points**2)
        return points, weights / weights.sum()


@dataclass
class Convergence:
    iterations: int
    final_delta: float
    final_loglik: float
    converged: bool


@dataclass
class EmResult:
    """EM estimates plus the diagnostics the stopping rule produced."""

    difficulties: dict[str, float]
    convergence: Convergence
    loglik_history: list[float] = field(default_factory=list)


def _solve_decreasing(
    f: Callable[[float], float],
    fprime: Callable[[float], float],
    lo: float,
    hi: float,
    x0: float,
    tol: float,
    max_iter: int,
) -> float:
    """Root of a strictly decreasing f on [lo, hi], clamping at the ends.

    Newton steps keep a sign bracket; a step that overshoots the bracket
    is halved, and after 5 halvings the iterate falls back to bisection.
    """
    f_lo = f(lo)
    if f_lo <= 0.0:
        return lo
    f_hi = f(hi)
    if f_hi >= 0.0:
        return hi

    x = min(max(x0, lo), hi)
    bracket_lo, bracket_hi = lo, hi
    for _ in range(max_iter):
        fx = f(x)
        if fx > 0.0:
            bracket_lo = max(bracket_lo, x)
        else:
            bracket_hi = min(bracket_hi, x)
        dfx = fprime(x)
        step = -fx / dfx if dfx != 0.0 else 0.0
        x_new = x + step
        halvings = 0
        while not (bracket_lo < x_new < bracket_hi) and halvings < 5:
            step *= 0.5
            x_new = x + step
            halvings += 1
        if not (bracket_lo < x_new < bracket_hi):
            x_new = 0.5 * (bracket_lo + bracket_hi)
        if abs(x_new - x) < tol:
            return x_new
        x = x_new
    return x


def _item_count_stats(cells: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Collapse items into raw-score classes.

    Returns (class score values, item -> class index, per-respondent
    correct counts within each class of shape (n_respondents, n_classes)).
    """
    scores = cells.sum(axis=0)
    class_scores, item_class = np.unique(scores, return_inverse=True)
    n_classes = class_scores.size
    counts = np.zeros((cells.shape[0], n_classes))
    for c in range(n_classes):
        counts[:, c] = cells[:, item_class == c].sum(axis=1)
    return class_scores, item_class, counts


def _class_loglik(
    b_class: np.ndarray,
    class_sizes: np.ndarray,
    counts: np.ndarray,
    points: np.ndarray,
    log_weights: np.ndarray,
) -> tuple[np.ndarray, float]:
    """Posterior node weights per respondent and the marginal log-likelihood."""
    z = points[:, None] - b_class[None, :]
    logp = log_expit(z)
    log1mp = log_expit(-z)
    # (n_respondents, n_nodes): sum over classes of count-weighted log-probs
    ll = counts @ logp.T + (class_sizes[None, :] - counts) @ log1mp.T
    joint = ll + log_weights[None, :]
    peak = joint.max(axis=1, keepdims=True)
    expd = np.exp(joint - peak)
    norm = expd.sum(axis=1, keepdims=True)
    posterior = expd / norm
    marginal = float((peak[:, 0] + np.log(norm[:, 0])).sum())
    return posterior, marginal


def estimate_difficulties_em(matrix: ResponseMatrix, config: EmConfig = EmConfig()) -> EmResult:
    """Marginal maximum-likelihood difficulties via EM.

    E-step: posterior ability weights per respondent on the quadrature
    grid. M-step: per raw-score class, Newton-solve the expected-correct
    equation sum_k n_k sigma(theta_k - b) = score, with b clamped to the
    quadrature range so all-correct and all-incorrect items still get a
    value. Stops when max |delta b| < tol; non-convergence is flagged
    and warned, with estimates still returned.
    """
    n_resp, n_items = matrix.cells.shape
    if n_resp < 2 or n_items < 2:
        raise CalibrationError(
            f"need at least 2 respondents and 2 items, got {n_resp}x{n_items}"
        )
    cells = matrix.cells.astype(float)
    points, weights = config.quadrature()
    log_weights = np.log(weights)

    class_scores, item_class, counts = _item_count_stats(cells)
    class_sizes = np.bincount(item_class, minlength=class_scores.size).astype(float)

    # Start from the classical logit of the (smoothed) proportion correct.
    p0 = (class_scores + 0.5) / (n_resp + 1.0)
    b_class = np.clip(np.log((1.0 - p0) / p0), config.lo, config.hi)

    loglik_history: list[float] = []
    delta = math.inf
    iterations = 0
    for iterations in range(1, config.max_iters + 1):
        posterior, marginal = _class_loglik(b_class, class_sizes, counts, points, log_weights)
        loglik_history.append(marginal)
        node_mass = posterior.sum(axis=0)  # expected respondents per node

        b_new = np.empty_like(b_class)
        for c, score in enumerate(class_scores):
            target = float(score)

            def f(b: float) -> float:
                return float(node_mass @ expit(points - b)) - target

            def fprime(b: float) -> float:
                p = expit(points - b)
                return -float(node_mass @ (p * (1.0 - p)))

            b_new[c] = _solve_decreasing(
                f, fprime, config.lo, config.hi, b_class[c],
                config.newton_tol, config.newton_max_iter,
            )
        delta = float(np.abs(b_new - b_class).max())
        b_class = b_new
        if delta < config.tol:
            break

    _, final_loglik = _class_loglik(b_class, class_sizes, counts, points, log_weights)
    loglik_history.append(final_loglik)
    converged = delta < config.tol
    if not converged:
        warnings.warn(
            f"EM did not converge in {config.max_iters} iterations "
            f"(max |delta b| = {delta:.3g}); estimates returned anyway",
            stacklevel=2,
        )
    difficulties = {
        qid: float(b_class[item_class[j]]) for j, qid in enumerate(matrix.question_ids)
    }
    return EmResult(
        difficulties=difficulties,
        convergence=Convergence(iterations, delta, final_loglik, converged),
        loglik_history=loglik_history,
    )


def estimate_abilities_map(
    matrix: ResponseMatrix,
    difficulties: Mapping[str, float],
    tol: float = 1e-6,
    max_iter: int = 200,
) -> dict[str, float]:
    """MAP abilities under a standard-normal prior.

    Per respondent, maximizes the Bernoulli log-likelihood plus
    log N(theta; 0, 1); the objective is strictly concave, so a
    safeguarded Newton iteration suffices. A respondent with zero items
    sits at the prior mode, 0.
    """
    missing = [qid for qid in matrix.question_ids if qid not in difficulties]
    if missing:
        raise CalibrationError(f"difficulties missing for {len(missing)} item(s): {missing[:5]}")
    b = np.array([difficulties[qid] for qid in matrix.question_ids], dtype=float)
    if b.size and not np.isfinite(b).all():
        raise CalibrationError("difficulties must be finite")

    abilities: dict[str, float] = {}
    for name, row in zip(matrix.respondents, matrix.cells):
        if b.size == 0:
            abilities[name] = 0.0
            continue
        x = row.astype(float)

        def f(theta: float) -> float:
            return float((x - expit(theta - b)).sum()) - theta

        def fprime(theta: float) -> float:
            p = expit(theta - b)
            return -float((p * (1.0 - p)).sum()) - 1.0

        # f is strictly decreasing with a root in [-(J+1), J+1].
        bound = float(b.size) + 1.0
        abilities[name] = _solve_decreasing(f, fprime, -bound, bound, 0.0, tol, max_iter)
    return abilities


def _middle_label(scheme) -> object:
    labels = list(scheme)
    return labels[len(labels) // 2]


def normalize_and_label(
    difficulties: Mapping[str, float], scheme=DifficultyLabel
) -> tuple[dict[str, float], dict[str, object]]:
    """Min-max normalize difficulties and assign ordered categorical labels.

    ``scheme`` is DifficultyLabel (5-level), DifficultyLabel3, or the
    level count 5 or 3. When the number of distinct values equals the
    label count, labels go to distinct values in ascending order;
    otherwise values fall into equal-width bins over [0, 1]. A single
    distinct value normalizes to 0.5 and takes the middle label.
    """
    if isinstance(scheme, int):
        scheme = DifficultyLabel if scheme == 5 else DifficultyLabel3
    if scheme not in (DifficultyLabel, DifficultyLabel3):
        raise CalibrationError(f"unknown difficulty scheme: {scheme!r}")
    if not difficulties:
        raise CalibrationError("cannot normalize an empty difficulty map")

    labels = list(scheme)
    n_labels = len(labels)
    values = np.array(list(difficulties.values()), dtype=float)
    distinct = np.unique(values)

    if distinct.size == 1:
        middle = _middle_label(scheme)
        return (
            {qid: 0.5 for qid in difficulties},
            {qid: middle for qid in difficulties},
        )

    lo, hi = float(distinct[0]), float(distinct[-1])
    span = hi - lo
    normalized = {qid: (b - lo) / span for qid, b in difficulties.items()}

    if distinct.size == n_labels:
        rank_of = {float(v): i for i, v in enumerate(distinct)}
        label_map = {qid: labels[rank_of[float(b)]] for qid, b in difficulties.items()}
    else:
        label_map = {
            qid: labels[min(int(v * n_labels), n_labels - 1)] for qid, v in normalized.items()
        }
    return normalized, label_map


@dataclass
class RaschCalibration:
    """Full calibration output: logit-scale estimates plus prompt labels."""

    difficulties: dict[str, float]
    abilities: dict[str, float]
    normalized: dict[str, float]
    labels: dict[str, object]
    scheme_levels: int
    quadrature_points: np.ndarray
    quadrature_weights: np.ndarray
    convergence: Convergence

    def to_json(self) -> dict:
        return {
            "items": [
                {
                    "question_id": qid,
                    "b": self.difficulties[qid],
                    "normalized": self.normalized[qid],
                    "label": self.labels[qid].value,
                }
                for qid in sorted(self.difficulties)
            ],
            "respondents": [
                {"name": name, "theta": theta}
                for name, theta in sorted(self.abilities.items())
            ],
            "scheme_levels": self.scheme_levels,
            "quadrature": {
                "points": [float(p) for p in self.quadrature_points],
                "weights": [float(w) for w in self.quadrature_weights],
            },
            "convergence": {
                "iterations": self.convergence.iterations,
                "final_delta": self.convergence.final_delta,
                "final_loglik": self.convergence.final_loglik,
                "converged": self.convergence.converged,
            },
        }

    @classmethod
    def from_json(cls, data: dict) -> "RaschCalibration":
        scheme = DifficultyLabel if data["scheme_levels"] == 5 else DifficultyLabel3
        conv = data["convergence"]
        return cls(
            difficulties={row["question_id"]: row["b"] for row in data["items"]},
            abilities={row["name"]: row["theta"] for row in data["respondents"]},
            normalized={row["question_id"]: row["normalized"] for row in data["items"]},
            labels={row["question_id"]: scheme.parse(row["label"]) for row in data["items"]},
            scheme_levels=data["scheme_levels"],
            quadrature_points=np.array(data["quadrature"]["points"]),
            quadrature_weights=np.array(data["quadrature"]["weights"]),
            convergence=Convergence(
                conv["iterations"], conv["final_delta"], conv["final_loglik"], conv["converged"]
            ),
        )


def save_calibration(calibration: RaschCalibration, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(calibration.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_calibration(path: str | Path) -> RaschCalibration:
    return RaschCalibration.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def calibrate(
    matrix: ResponseMatrix,
    config: EmConfig = EmConfig(),
    scheme=DifficultyLabel,
) -> RaschCalibration:
    """EM difficulties, MAP abilities, and normalization in one pass."""
    em = estimate_difficulties_em(matrix, config)
    abilities = estimate_abilities_map(matrix, em.difficulties)
    normalized, labels = normalize_and_label(em.difficulties, scheme)
    points, weights = config.quadrature()
    if isinstance(scheme, int):
        levels = scheme
    else:
        levels = len(list(scheme))
    return RaschCalibration(
        difficulties=em.difficulties,
        abilities=abilities,
        normalized=normalized,
        labels=labels,
        scheme_levels=levels,
        quadrature_points=points,
        quadrature_weights=weights,
        convergence=em.convergence,
    )


@dataclass
class ItemFit:
    question_id: str
    observed_correct: int
    expected_correct: float


@dataclass
class FitReport:
    """Sanity diagnostics: joint log-likelihood and per-item fit."""

    loglik: float
    items: list[ItemFit]


def simulate_fit_report(matrix: ResponseMatrix, calibration: RaschCalibration) -> FitReport:
    """Expected vs observed correct counts at the calibrated estimates."""
    missing_items = [q for q in matrix.question_ids if q not in calibration.difficulties]
    missing_resp = [r for r in matrix.respondents if r not in calibration.abilities]
    if missing_items or missing_resp:
        raise CalibrationError(
            f"calibration does not cover the matrix: {len(missing_items)} item(s), "
            f"{len(missing_resp)} respondent(s) missing"
        )
    theta = np.array([calibration.abilities[r] for r in matrix.respondents])
    b = np.array([calibration.difficulties[q] for q in matrix.question_ids])
    probs = expit(theta[:, None] - b[None, :])
    expected = probs.sum(axis=0)
    observed = matrix.cells.sum(axis=0)
    x = matrix.cells.astype(float)
    loglik = float((x * np.log(probs) + (1.0 - x) * np.log1p(-probs)).sum())
    return FitReport(
        loglik=loglik,
        items=[
            ItemFit(qid, int(observed[j]), float(expected[j]))
            for j, qid in enumerate(matrix.question_ids)
        ],
    )
