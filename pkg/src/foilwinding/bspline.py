"""Quadratic B-splines on a uniform open (clamped) knot vector."""
from __future__ import annotations

import numpy as np

from .errors import DomainError

DEGREE = 2


class BSplineBasis:
    """``n`` quadratic B-splines on ``[a, b]``.

    The knot vector repeats each end three times and spaces the ``n - 3``
    interior knots uniformly.  Evaluation uses the Cox-de Boor recursion and
    takes right-sided limits at knots, except at ``b`` where the left-sided
    limit is used so that the last function equals one there.
    """

    def __init__(self, n: int, interval: tuple[float, float]):
        n = int(n)
        if n < DEGREE + 1:
            raise DomainError(f"a quadratic basis needs n >= 3 functions, got {n}")
        a, b = float(interval[0]), float(interval[1])
        if not a < b:
            raise DomainError(f"empty interval [{a}, {b}]")
        self.n = n
        self.interval = (a, b)
        self.knots = np.concatenate([[a, a], np.linspace(a, b, n - 1), [b, b]])
        self.knots.setflags(write=False)

    def __repr__(self):
        return f"BSplineBasis(n={self.n}, interval={self.interval})"

    @property
    def breakpoints(self) -> np.ndarray:
        """Distinct knots, i.e. the ends of the polynomial pieces."""
        return np.unique(self.knots)

    @property
    def greville(self) -> np.ndarray:
        t = self.knots
        return 0.5 * (t[1:self.n + 1] + t[2:self.n + 2])

    @property
    def integrals(self) -> np.ndarray:
        """Exact integrals of every basis function over the interval."""
        t = self.knots
        return (t[3:] - t[:-3]) / 3.0

    def _prepare(self, alpha):
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        a, b = self.interval
        tol = 1e-12 * (b - a)
        if np.any(alpha < a - tol) or np.any(alpha > b + tol):
            bad = alpha[(alpha < a - tol) | (alpha > b + tol)][0]
            raise DomainError(f"alpha={bad!r} outside [{a}, {b}]")
        alpha = np.clip(alpha, a, b)
        # span s satisfies t[s] <= alpha < t[s+1], with 2 <= s <= n-1
        span = np.searchsorted(self.knots, alpha, side="right") - 1
        span = np.clip(span, DEGREE, self.n - 1)
        return alpha, span

    def _local(self, alpha, span):
        """Nonzero degree-1 and degree-2 values on each span (Cox-de Boor triangle)."""
        t = self.knots
        left1 = alpha - t[span]
        right1 = t[span + 1] - alpha
        left2 = alpha - t[span - 1]
        right2 = t[span + 2] - alpha
        # degree 1: functions span-1, span
        temp = 1.0 / (right1 + left1)
        n1 = np.stack([right1 * temp, left1 * temp], axis=1)
        # degree 2: functions span-2, span-1, span
        d0 = right1 + left2
        d1 = right2 + left1
        t0 = n1[:, 0] / d0
        t1 = n1[:, 1] / d1
        n2 = np.stack([right1 * t0, left2 * t0 + right2 * t1, left1 * t1], axis=1)
        return n1, n2

    def values(self, alpha) -> np.ndarray:
        """Matrix ``B[k, i] = B_i(alpha[k])`` of shape (len(alpha), n)."""
        alpha, span = self._prepare(alpha)
        _, n2 = self._local(alpha, span)
        out = np.zeros((len(alpha), self.n))
        rows = np.arange(len(alpha))
        for k in range(3):
            out[rows, span - 2 + k] = n2[:, k]
        return out

    def derivatives(self, alpha) -> np.ndarray:
        """Matrix of first derivatives ``dB_i/dalpha`` (1/m), same layout as :meth:`values`."""
        alpha, span = self._prepare(alpha)
        n1, _ = self._local(alpha, span)
        t = self.knots
        # dB_{i,2} = 2 B_{i,1}/(t[i+2]-t[i]) - 2 B_{i+1,1}/(t[i+3]-t[i+1]);
        # nonzero B_{.,1} are i = span-1 and span
        c_lo = 2.0 * n1[:, 0] / (t[span + 1] - t[span - 1])
        c_hi = 2.0 * n1[:, 1] / (t[span + 2] - t[span])
        out = np.zeros((len(alpha), self.n))
        rows = np.arange(len(alpha))
        out[rows, span - 2] = -c_lo
        out[rows, span - 1] = c_lo - c_hi
        out[rows, span] = c_hi
        return out

    def eval(self, i: int, alpha):
        self._check_index(i)
        v = self.values(alpha)[:, i]
        return v if np.ndim(alpha) else float(v[0])

    def eval_deriv(self, i: int, alpha):
        self._check_index(i)
        v = self.derivatives(alpha)[:, i]
        return v if np.ndim(alpha) else float(v[0])

    def _check_index(self, i):
        if not 0 <= i < self.n:
            raise DomainError(f"basis index {i} outside [0, {self.n})")


def make_basis(n: int, interval: tuple[float, float]) -> BSplineBasis:
    return BSplineBasis(n, interval)
