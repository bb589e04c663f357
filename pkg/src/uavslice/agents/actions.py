"""Discretised displacement grid for the value-based learner."""
import itertools
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DiscreteActionTable:
    a_min: float
    step: float
    n_points: int
    dims: int

    @property
    def values(self) -> np.ndarray:
        return self.a_min + self.step * np.arange(self.n_points)

    @property
    def size(self) -> int:
        return self.n_points ** self.dims

    @property
    def table(self) -> np.ndarray:
        """All joint actions, row-major (last dimension varies fastest)."""
        return np.array(list(itertools.product(self.values, repeat=self.dims)))

    def to_vector(self, index) -> np.ndarray:
        index = np.asarray(index)
        if np.any((index < 0) | (index >= self.size)):
            raise IndexError("action index out of range")
        digits = np.stack(np.unravel_index(index, (self.n_points,) * self.dims), axis=-1)
        return self.a_min + self.step * digits

    def to_index(self, vector) -> np.ndarray:
        digits = np.rint((np.asarray(vector, dtype=float) - self.a_min) / self.step).astype(int)
        if np.any((digits < 0) | (digits >= self.n_points)):
            raise ValueError("vector is not on the action grid")
        return np.ravel_multi_index(tuple(np.moveaxis(digits, -1, 0)), (self.n_points,) * self.dims)

    def zero_index(self) -> int:
        """Index of the all-zero action, if it lies on the grid."""
        return int(self.to_index(np.zeros(self.dims)))


def discretize_actions(a_min: float, step: float, n_points: int, dims: int) -> DiscreteActionTable:
    if step <= 0:
        raise ValueError("discretisation step must be positive")
    if n_points < 2 or dims < 1:
        raise ValueError("need at least two points per dimension and one dimension")
    return DiscreteActionTable(float(a_min), float(step), int(n_points), int(dims))


def symmetric_table(v_max: float, n_points: int = 3, dims: int = 3) -> DiscreteActionTable:
    """Grid spanning ``[-v_max, v_max]`` in every dimension."""
    return discretize_actions(-v_max, 2.0 * v_max / (n_points - 1), n_points, dims)
