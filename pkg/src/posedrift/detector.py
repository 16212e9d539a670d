"""Threshold calibration and the 3-class accept/drop/force-pass policy.

Soft threshold: median + 3 * MAD of clean validation scores, with MAD
left unscaled (no Gaussian consistency factor).  Hard threshold: the 98th
percentile (linear interpolation between order statistics), floored at
the soft threshold.  Comparisons: strict < for Normal, >= for Hard.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

DEFAULT_FORCE_PASS_LIMIT = 12


class VerdictClass(enum.Enum):
    NORMAL = "normal"
    SOFT_ANOMALY = "soft"
    HARD_ANOMALY = "hard"


class Decision(enum.Enum):
    ACCEPT = "accept"
    DROP = "drop"
    FORCE_PASS = "force_pass"


@dataclass(frozen=True)
class Thresholds:
    t_soft: float
    t_hard_raw: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.t_soft and np.isfinite(self.t_soft) and np.isfinite(self.t_hard_raw)):
            raise ValueError("thresholds must be finite and non-negative")

    @property
    def t_hard(self) -> float:
        """Effective hard threshold; never below the soft one."""
        return max(self.t_soft, self.t_hard_raw)


@dataclass(frozen=True)
class Verdict:
    klass: VerdictClass
    decision: Decision
    mse: float
    hard_streak_after: int

    def __post_init__(self) -> None:
        if self.decision is Decision.FORCE_PASS and self.klass is not VerdictClass.HARD_ANOMALY:
            raise ValueError("force-pass only applies to hard anomalies")

    @property
    def accepted(self) -> bool:
        return self.decision in (Decision.ACCEPT, Decision.FORCE_PASS)


@dataclass(frozen=True)
class PolicyState:
    consecutive_hard: int = 0
    force_pass_limit: int = DEFAULT_FORCE_PASS_LIMIT

    def __post_init__(self) -> None:
        if not 0 <= self.consecutive_hard < self.force_pass_limit:
            raise ValueError("hard streak out of range")


def calibrate(clean_scores) -> Thresholds:
    """Fit thresholds from clean validation reconstruction errors."""
    scores = np.asarray(clean_scores, dtype=float)
    if scores.size == 0:
        raise ValueError("cannot calibrate on an empty score set")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    med = float(np.median(scores))
    mad = float(np.median(np.abs(scores - med)))
    t_soft = med + 3.0 * mad
    t_hard_raw = float(np.percentile(scores, 98.0))
    return Thresholds(t_soft=t_soft, t_hard_raw=t_hard_raw)


def classify(mse: float, thresholds: Thresholds, state: PolicyState) -> tuple[Verdict, PolicyState]:
    """Pure transition: (score, thresholds, state) -> (verdict, next state)."""
    if mse < thresholds.t_soft:
        verdict = Verdict(VerdictClass.NORMAL, Decision.ACCEPT, mse, 0)
        return verdict, PolicyState(0, state.force_pass_limit)
    if mse < thresholds.t_hard:
        verdict = Verdict(VerdictClass.SOFT_ANOMALY, Decision.DROP, mse, 0)
        return verdict, PolicyState(0, state.force_pass_limit)
    streak = state.consecutive_hard + 1
    if streak >= state.force_pass_limit:
        verdict = Verdict(VerdictClass.HARD_ANOMALY, Decision.FORCE_PASS, mse, 0)
        return verdict, PolicyState(0, state.force_pass_limit)
    verdict = Verdict(VerdictClass.HARD_ANOMALY, Decision.DROP, mse, streak)
    return verdict, PolicyState(streak, state.force_pass_limit)
