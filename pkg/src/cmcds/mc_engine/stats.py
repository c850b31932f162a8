import numpy as np


class RunningMoments:
    """Mean and sum of squared deviations merged batch by batch (Chan et al.).

    Merging is associative in exact arithmetic; callers merge in batch order
    so floating-point results are reproducible.
    """

    def __init__(self, shape=()):
        self.count = 0
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)

    def update(self, values: np.ndarray) -> None:
        """Fold in samples stacked along axis 0."""
        values = np.asarray(values, dtype=float)
        n = values.shape[0]
        if n == 0:
            return
        mean_b = values.mean(axis=0)
        # constant columns reduce exactly (a plain mean can be off by an ulp)
        mean_b = np.where(np.ptp(values, axis=0) == 0, values[0], mean_b)
        m2_b = ((values - mean_b) ** 2).sum(axis=0)
        self.merge(n, mean_b, m2_b)

    def merge(self, n, mean_b, m2_b) -> None:
        total = self.count + n
        delta = mean_b - self.mean
        self.mean = self.mean + delta * (n / total)
        self.m2 = self.m2 + m2_b + delta**2 * (self.count * n / total)
        self.count = total

    @property
    def variance(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros_like(self.mean)
        return self.m2 / (self.count - 1)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)

    @property
    def stderr(self) -> np.ndarray:
        return self.std / np.sqrt(max(self.count, 1))
