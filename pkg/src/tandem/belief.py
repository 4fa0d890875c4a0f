"""Grid Bayes estimation of the human's latent traits.

Two independent beliefs live on the 11-point grid W = (0.0, 0.1, ..., 1.0):
the human's *following preference* (how willing they are to act on robot
assignments) and their *error proneness* (how often they pick wrong colors).
Updates consume a bounded window of recently classified actions, so old
evidence ages out after ``history_k`` observations of the same family.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import stats

from .model import ActionKind

GRID = np.linspace(0.0, 1.0, 11)

# Following-evidence classes: delegating work to the robot and performing
# robot-assigned work both signal willingness to follow; refusing signals
# the opposite. Error-evidence classes judge self-chosen placements and
# delegations by color correctness.


class FollowClass(str, Enum):
    DELEGATED = "delegated"
    COMPLIED = "complied"
    REFUSED = "refused"


class ErrorClass(str, Enum):
    WRONG = "wrong"
    CORRECT = "correct"


class BeliefKind(str, Enum):
    FOLLOWING = "following"
    ERROR = "error"


@dataclass(frozen=True)
class EstimatorParams:
    alpha_weight: float = 2.0  # explicit delegation counts double; must be > 1
    sigma: float = 0.15
    beta_wrong: float = 4.0
    beta_correct: float = -4.0
    prior_p_following: float = 0.7
    prior_p_error: float = 0.1
    history_k: int = 3

    def __post_init__(self) -> None:
        if self.alpha_weight <= 1:
            raise ValueError("alpha_weight must exceed 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if not (0 < self.prior_p_following < 1 and 0 < self.prior_p_error < 1):
            raise ValueError("priors must lie strictly inside (0, 1)")

    def to_dict(self) -> dict:
        return {
            "alpha_weight": self.alpha_weight,
            "sigma": self.sigma,
            "beta_wrong": self.beta_wrong,
            "beta_correct": self.beta_correct,
            "prior_p_following": self.prior_p_following,
            "prior_p_error": self.prior_p_error,
            "history_k": self.history_k,
        }

    @staticmethod
    def from_dict(d: dict) -> "EstimatorParams":
        return EstimatorParams(**{k: (int(v) if k == "history_k" else float(v))
                                  for k, v in d.items()})


@dataclass(frozen=True)
class BeliefGrid:
    kind: BeliefKind
    probs: np.ndarray

    def __post_init__(self) -> None:
        if self.probs.shape != GRID.shape:
            raise ValueError("belief must live on the 11-point grid")
        if np.any(self.probs < 0) or abs(float(self.probs.sum()) - 1.0) > 1e-9:
            raise ValueError("belief must be a normalized distribution")

    def to_list(self) -> list[float]:
        return [float(p) for p in self.probs]


class HistoryWindow:
    """Bounded FIFO of classified actions, newest last."""

    def __init__(self, capacity: int = 3, entries: tuple = ()):
        self._entries: deque = deque(entries, maxlen=capacity)

    def push(self, cls: FollowClass | ErrorClass) -> None:
        self._entries.append(cls)

    def count(self, cls: FollowClass | ErrorClass) -> int:
        return sum(1 for e in self._entries if e == cls)

    def __len__(self) -> int:
        return len(self._entries)

    def to_list(self) -> list[str]:
        return [e.value for e in self._entries]


def init_belief(kind: BeliefKind, params: EstimatorParams) -> BeliefGrid:
    """Binomial prior over the grid: b(i; 10, p), index i maps to w_i."""
    p = (
        params.prior_p_following
        if kind == BeliefKind.FOLLOWING
        else params.prior_p_error
    )
    probs = stats.binom.pmf(np.arange(11), 10, p)
    return BeliefGrid(kind=kind, probs=probs / probs.sum())


def expected_value(belief: BeliefGrid) -> float:
    return float(np.dot(GRID, belief.probs))


def classify_action(
    kind: ActionKind, color_correct: bool | None
) -> tuple[FollowClass | None, ErrorClass | None]:
    """Map one observed human action to its evidence classes.

    ``color_correct`` applies to color-choosing kinds only. Robot-assigned
    performances (H4) carry no error evidence: the color was dictated.
    """
    if kind == ActionKind.H2:
        assert color_correct is not None
        return (
            FollowClass.DELEGATED,
            ErrorClass.CORRECT if color_correct else ErrorClass.WRONG,
        )
    if kind == ActionKind.H1:
        assert color_correct is not None
        return (None, ErrorClass.CORRECT if color_correct else ErrorClass.WRONG)
    if kind == ActionKind.H4:
        return (FollowClass.COMPLIED, None)
    if kind == ActionKind.H6:
        return (FollowClass.REFUSED, None)
    return (None, None)


def update_following(
    belief: BeliefGrid,
    history: HistoryWindow,
    observed: FollowClass,
    params: EstimatorParams,
) -> BeliefGrid:
    """Reweight by the windowed following likelihood; trait assumed static.

    Delegation/compliance evidence is proportional to the trait value y,
    refusal to (1 - y). The window must already contain ``observed``.
    """
    n_delegate = history.count(FollowClass.DELEGATED)
    n_comply = history.count(FollowClass.COMPLIED)
    n_refuse = history.count(FollowClass.REFUSED)
    denom = params.alpha_weight * n_delegate + n_comply + n_refuse
    if denom == 0:
        return belief
    if observed in (FollowClass.DELEGATED, FollowClass.COMPLIED):
        coef = (params.alpha_weight * n_delegate + n_comply) / denom
        likelihood = coef * GRID
    else:
        coef = n_refuse / denom
        likelihood = coef * (1.0 - GRID)
    weighted = likelihood * belief.probs
    total = float(weighted.sum())
    if total <= 0.0:
        return belief
    return BeliefGrid(kind=belief.kind, probs=weighted / total)


def update_error(
    belief: BeliefGrid,
    history: HistoryWindow,
    observed: ErrorClass,
    params: EstimatorParams,
) -> BeliefGrid:
    """Reweight by windowed correctness evidence, then drift the trait.

    Wrong actions shift probability mass one cell upward through a
    right-skewed kernel; correct actions shift it downward through the
    mirrored kernel. The window must already contain ``observed``.
    """
    m_wrong = history.count(ErrorClass.WRONG)
    m_correct = history.count(ErrorClass.CORRECT)
    total_m = m_wrong + m_correct
    if total_m == 0:
        return belief
    if observed == ErrorClass.WRONG:
        # a wrong pick is more likely the more error-prone the human is
        likelihood = (m_wrong / total_m) * GRID
        kernel = transition_matrix("up", params.sigma, params.beta_wrong)
    else:
        likelihood = (m_correct / total_m) * (1.0 - GRID)
        kernel = transition_matrix("down", params.sigma, params.beta_correct)
    weighted = likelihood * belief.probs
    total = float(weighted.sum())
    if total <= 0.0:
        return belief
    drifted = kernel.T @ (weighted / total)
    return BeliefGrid(kind=belief.kind, probs=drifted / drifted.sum())


@dataclass(frozen=True)
class TraitEstimator:
    """Both trait beliefs plus their evidence windows, updated as one unit.

    Immutable: ``observe`` returns a new estimator. The windows hold the
    last ``history_k`` classified actions of each family.
    """

    params: EstimatorParams
    belief_f: BeliefGrid
    belief_e: BeliefGrid
    window_f: tuple[FollowClass, ...] = ()
    window_e: tuple[ErrorClass, ...] = ()

    @staticmethod
    def fresh(params: EstimatorParams) -> "TraitEstimator":
        return TraitEstimator(
            params=params,
            belief_f=init_belief(BeliefKind.FOLLOWING, params),
            belief_e=init_belief(BeliefKind.ERROR, params),
        )

    @property
    def p_f(self) -> float:
        return expected_value(self.belief_f)

    @property
    def p_e(self) -> float:
        return expected_value(self.belief_e)

    def observe(
        self, kind: ActionKind, color_correct: bool | None
    ) -> tuple["TraitEstimator", bool, bool]:
        """Fold one human action in; returns (next, f_updated, e_updated)."""
        follow_cls, error_cls = classify_action(kind, color_correct)
        k = self.params.history_k
        belief_f, window_f = self.belief_f, self.window_f
        belief_e, window_e = self.belief_e, self.window_e
        if follow_cls is not None:
            window_f = (window_f + (follow_cls,))[-k:]
            belief_f = update_following(
                belief_f, HistoryWindow(k, window_f), follow_cls, self.params
            )
        if error_cls is not None:
            window_e = (window_e + (error_cls,))[-k:]
            belief_e = update_error(
                belief_e, HistoryWindow(k, window_e), error_cls, self.params
            )
        nxt = TraitEstimator(
            params=self.params,
            belief_f=belief_f,
            belief_e=belief_e,
            window_f=window_f,
            window_e=window_e,
        )
        return nxt, follow_cls is not None, error_cls is not None


_KERNEL_CACHE: dict[tuple[str, float, float], np.ndarray] = {}


def transition_matrix(direction: str, sigma: float, beta: float) -> np.ndarray:
    """Row-stochastic drift kernel over the grid.

    Row i is the distribution of a skew-normal variable centered one cell
    above (``up``) or below (``down``) w_i, binned into grid cells with the
    out-of-range tails clamped into the boundary cells. Saturation: the top
    row of ``up`` and the bottom row of ``down`` center on themselves.
    """
    key = (direction, sigma, beta)
    cached = _KERNEL_CACHE.get(key)
    if cached is not None:
        return cached
    if direction not in ("up", "down"):
        raise ValueError("direction must be 'up' or 'down'")
    rows = []
    for i in range(11):
        if direction == "up":
            loc = GRID[min(i + 1, 10)]
        else:
            loc = GRID[max(i - 1, 0)]
        cdf = stats.skewnorm.cdf(GRID, beta, loc=loc, scale=sigma)
        row = np.empty(11)
        if direction == "up":
            # cell j spans [w_j, w_{j+1}); below-grid tail joins cell 0,
            # the mass at and above w_10 joins cell 10
            row[0] = cdf[1]
            row[1:10] = cdf[2:11] - cdf[1:10]
            row[10] = 1.0 - cdf[10]
        else:
            # cell j spans [w_{j-1}, w_j); mirrored clamping
            row[0] = cdf[0]
            row[1:10] = cdf[1:10] - cdf[0:9]
            row[10] = 1.0 - cdf[9]
        rows.append(row / row.sum())
    kernel = np.array(rows)
    kernel.setflags(write=False)
    _KERNEL_CACHE[key] = kernel
    return kernel
