"""Small statistical helpers: Wilson intervals and Mann-Kendall trends."""

from __future__ import annotations

import math
from dataclasses import dataclass

TREND_LEVEL = 1e-2  # one-sided Mann-Kendall significance level


def wilson_interval(hits: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("need at least one trial")
    if not 0 <= hits <= trials:
        raise ValueError(f"hits {hits} outside [0, {trials}]")
    phat = hits / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (phat + z2 / (2.0 * trials)) / denom
    half = (
        z
        * math.sqrt(phat * (1.0 - phat) / trials + z2 / (4.0 * trials * trials))
        / denom
    )
    return max(0.0, center - half), min(1.0, center + half)


def _phi(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


@dataclass(frozen=True)
class MannKendall:
    """One-sided Mann-Kendall trend statistics for a short series.

    p_increasing is the p-value against the increasing alternative,
    p_decreasing against the decreasing one (normal approximation with
    tie correction and continuity correction).
    """

    s: int
    z: float
    p_increasing: float
    p_decreasing: float

    def significant_increase(self, level: float = TREND_LEVEL) -> bool:
        return self.p_increasing < level

    def significant_decrease(self, level: float = TREND_LEVEL) -> bool:
        return self.p_decreasing < level

    def non_decreasing(self, level: float = TREND_LEVEL) -> bool:
        """Accept the asserted non-decrease unless a decrease is significant."""
        return not self.significant_decrease(level)

    def non_increasing(self, level: float = TREND_LEVEL) -> bool:
        return not self.significant_increase(level)


def mann_kendall(values) -> MannKendall:
    xs = [float(v) for v in values]
    n = len(xs)
    if n < 3:
        raise ValueError("need at least 3 points for a trend test")
    s = 0
    for i in range(n):
        for j in range(i + 1, n):
            d = xs[j] - xs[i]
            s += (d > 0) - (d < 0)
    var = n * (n - 1) * (2 * n + 5) / 18.0
    # tie correction
    seen: dict[float, int] = {}
    for x in xs:
        seen[x] = seen.get(x, 0) + 1
    for cnt in seen.values():
        if cnt > 1:
            var -= cnt * (cnt - 1) * (2 * cnt + 5) / 18.0
    if var <= 0.0:
        return MannKendall(s, 0.0, 1.0, 1.0)
    sd = math.sqrt(var)
    if s > 0:
        z = (s - 1) / sd
    elif s < 0:
        z = (s + 1) / sd
    else:
        z = 0.0
    return MannKendall(s, z, 1.0 - _phi(z), _phi(z))
