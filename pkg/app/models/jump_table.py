from pathlib import Path
from typing import List, Sequence

import numpy as np

from app.core.exceptions import ResourceConflictException

TABLE_MAGIC = "WDLA-JUMP"
TABLE_VERSION = 1


class JumpTable:
    """
    Exit law of a free square-lattice walk started at the centre of the
    (2k+1) x (2k+1) box, over the non-corner sites of the box boundary.
    """

    def __init__(self, k: int, exit_dx: np.ndarray, exit_dy: np.ndarray,
                 weights: np.ndarray, mean_exit_steps: float):
        self.k = int(k)
        self.exit_dx = np.asarray(exit_dx, dtype=np.int64)
        self.exit_dy = np.asarray(exit_dy, dtype=np.int64)
        self.weights = np.asarray(weights, dtype=np.float64)
        self.mean_exit_steps = float(mean_exit_steps)
        cumulative = np.cumsum(self.weights)
        # the last bin absorbs rounding so every u in [0, 1) lands somewhere
        cumulative[-1] = 1.0
        self.cumulative = cumulative

    def __len__(self) -> int:
        return len(self.weights)

    def weight_of(self, dx: int, dy: int) -> float:
        hit = np.flatnonzero((self.exit_dx == dx) & (self.exit_dy == dy))
        return float(self.weights[hit[0]]) if len(hit) else 0.0

    def save(self, path: Path) -> None:
        # np.savez on an open handle keeps the .tbl name as given
        with open(path, "wb") as handle:
            np.savez(handle, magic=np.array(TABLE_MAGIC), version=np.array(TABLE_VERSION),
                     k=np.array(self.k), exit_dx=self.exit_dx, exit_dy=self.exit_dy,
                     weights=self.weights, mean_exit_steps=np.array(self.mean_exit_steps))

    @classmethod
    def load(cls, path: Path) -> "JumpTable":
        with open(path, "rb") as handle:
            data = np.load(handle, allow_pickle=False)
            if str(data["magic"]) != TABLE_MAGIC or int(data["version"]) != TABLE_VERSION:
                raise ResourceConflictException(f"jump table {path} has an unknown header")
            return cls(int(data["k"]), data["exit_dx"], data["exit_dy"], data["weights"],
                       float(data["mean_exit_steps"]))


class JumpLadder:
    """Several jump tables packed into rectangular arrays for the walk kernel."""

    def __init__(self, tables: Sequence[JumpTable]):
        self.tables: List[JumpTable] = sorted(tables, key=lambda t: t.k)
        n = len(self.tables)
        width = max((len(t) for t in self.tables), default=1)
        self.ks = np.array([t.k for t in self.tables], dtype=np.int64)
        self.cumulative = np.ones((n, width), dtype=np.float64)
        self.exit_dx = np.zeros((n, width), dtype=np.int64)
        self.exit_dy = np.zeros((n, width), dtype=np.int64)
        self.n_exits = np.array([len(t) for t in self.tables], dtype=np.int64)
        self.mean_exit = np.array([t.mean_exit_steps for t in self.tables], dtype=np.float64)
        for i, t in enumerate(self.tables):
            self.cumulative[i, :len(t)] = t.cumulative
            self.exit_dx[i, :len(t)] = t.exit_dx
            self.exit_dy[i, :len(t)] = t.exit_dy

    @classmethod
    def empty(cls) -> "JumpLadder":
        return cls([])

    def __bool__(self) -> bool:
        return bool(self.tables)
