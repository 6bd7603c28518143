"""Observation multisets."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ObservationSet:
    """Observations at one time step.

    ``points`` holds integer ids into a finite observation alphabet, or an
    ``(n, dy)`` array of real observations. Duplicates are kept: the set is
    the counting measure of the points.
    """

    points: np.ndarray
    step: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points)
        if pts.dtype.kind in "iu":
            pts = pts.astype(np.int64).ravel()
        else:
            pts = pts.astype(np.float64)
            if pts.ndim == 1:
                pts = pts[:, None] if pts.size else pts.reshape(0, 1)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def ids(cls, ids, step: int = 0) -> "ObservationSet":
        return cls(np.asarray(list(ids), dtype=np.int64), step)

    @classmethod
    def empty(cls, step: int = 0, dim: int | None = None) -> "ObservationSet":
        if dim is None:
            return cls(np.zeros(0, dtype=np.int64), step)
        return cls(np.zeros((0, dim)), step)

    @property
    def count(self) -> int:
        return int(self.points.shape[0])

    def __len__(self):
        return self.count


def as_observation(obs, step: int = 0) -> ObservationSet:
    if isinstance(obs, ObservationSet):
        return obs
    return ObservationSet(np.asarray(obs) if len(obs) else np.zeros(0, dtype=np.int64), step)
