"""Adaptive-windowing change detector over a stream of bounded values.

Keeps a variable-length window of the most recent inputs, stored as
exponentially growing buckets, and shrinks the window whenever two
sub-windows show means that differ more than a confidence bound allows.
Used by the forest to monitor per-tree prediction correctness with two
confidence levels (warning and drift).
"""

from __future__ import annotations

import math


class _BucketRow:
    """Buckets of equal capacity (2**level elements each)."""

    __slots__ = ("sums", "variances", "count")

    def __init__(self, max_buckets: int):
        self.sums = [0.0] * (max_buckets + 1)
        self.variances = [0.0] * (max_buckets + 1)
        self.count = 0

    def append(self, total: float, variance: float) -> None:
        self.sums[self.count] = total
        self.variances[self.count] = variance
        self.count += 1

    def drop_oldest(self, n: int) -> None:
        keep = self.count - n
        for i in range(keep):
            self.sums[i] = self.sums[i + n]
            self.variances[i] = self.variances[i + n]
        for i in range(keep, self.count):
            self.sums[i] = 0.0
            self.variances[i] = 0.0
        self.count = keep


class AdaptiveWindow:
    """Change detector with confidence ``delta``; smaller delta means
    fewer, more certain detections.

    ``update(value)`` returns True when a change in the stream mean was
    detected (the window has been shrunk to the recent regime).
    """

    def __init__(
        self,
        delta: float = 0.002,
        max_buckets: int = 5,
        min_clock: int = 32,
        min_window: int = 10,
        min_sub_window: int = 5,
    ):
        if delta <= 0 or delta >= 1:
            raise ValueError("delta must lie in (0, 1)")
        self.delta = delta
        self.max_buckets = max_buckets
        self.min_clock = min_clock
        self.min_window = min_window
        self.min_sub_window = min_sub_window
        self._rows: list[_BucketRow] = [_BucketRow(max_buckets)]
        self._ticks = 0
        self.width = 0
        self.total = 0.0
        self.variance = 0.0

    @property
    def mean(self) -> float:
        return self.total / self.width if self.width else 0.0

    def update(self, value: float) -> bool:
        self._ticks += 1
        self._insert(value)
        return self._shrink()

    def _insert(self, value: float) -> None:
        self._rows[0].append(value, 0.0)
        if self.width > 0:
            mean = self.total / self.width
            self.variance += self.width * (value - mean) ** 2 / (self.width + 1)
        self.width += 1
        self.total += value
        self._compress()

    def _compress(self) -> None:
        level = 0
        while level < len(self._rows):
            row = self._rows[level]
            if row.count <= self.max_buckets:
                break
            if level + 1 == len(self._rows):
                self._rows.append(_BucketRow(self.max_buckets))
            n = 2.0**level
            mean0 = row.sums[0] / n
            mean1 = row.sums[1] / n
            merged_var = (
                row.variances[0]
                + row.variances[1]
                + n * n * (mean0 - mean1) ** 2 / (n + n)
            )
            self._rows[level + 1].append(row.sums[0] + row.sums[1], merged_var)
            row.drop_oldest(2)
            level += 1

    def _shrink(self) -> bool:
        if self._ticks % self.min_clock != 0 or self.width <= self.min_window:
            return False
        changed = False
        reducing = True
        while reducing:
            reducing = False
            n0, sum0 = 0.0, 0.0
            n1, sum1 = float(self.width), self.total
            # walk buckets oldest-first
            for level in range(len(self._rows) - 1, -1, -1):
                row = self._rows[level]
                size = 2.0**level
                for i in range(row.count):
                    if level == 0 and i == row.count - 1:
                        break  # newest bucket never moves to the old side
                    n0 += size
                    n1 -= size
                    sum0 += row.sums[i]
                    sum1 -= row.sums[i]
                    if n0 <= self.min_sub_window or n1 <= self.min_sub_window:
                        continue
                    diff = sum0 / n0 - sum1 / n1
                    if self._cut(n0, n1, diff):
                        changed = True
                        reducing = self.width > self.min_window
                        self._drop_oldest_bucket()
                        break
                else:
                    continue
                break
        return changed

    def _cut(self, n0: float, n1: float, diff: float) -> bool:
        m = 1.0 / (n0 - self.min_sub_window + 1) + 1.0 / (n1 - self.min_sub_window + 1)
        d = math.log(2.0 * math.log(self.width) / self.delta)
        v = self.variance / self.width
        eps = math.sqrt(2.0 * m * v * d) + 2.0 / 3.0 * m * d
        return abs(diff) > eps

    def _drop_oldest_bucket(self) -> None:
        level = len(self._rows) - 1
        row = self._rows[level]
        n = 2.0**level
        self.width -= int(n)
        self.total -= row.sums[0]
        if self.width > 0:
            mean = row.sums[0] / n
            self.variance -= row.variances[0] + n * self.width * (
                mean - self.total / self.width
            ) ** 2 / (n + self.width)
            self.variance = max(self.variance, 0.0)
        else:
            self.variance = 0.0
        row.drop_oldest(1)
        if row.count == 0 and level > 0:
            self._rows.pop()
