import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, TypeVar

import numpy as np

from app.core.config import settings
from app.core.exceptions import InvalidParameterException

logger = logging.getLogger(__name__)

T = TypeVar("T")


def experiment_id(name: str) -> int:
    """Stable 32-bit id of an experiment name."""
    return zlib.crc32(name.encode("utf-8"))


class UniformStream:
    """
    Uniform(0,1) doubles from one counter-based Philox stream, handed out in chunks.

    Each (master seed, experiment, trial) triple owns its own stream, so a trial's
    draws never depend on which worker ran it or on what ran before it.
    """

    def __init__(self, seed: int, experiment: str, trial: int, chunk: Optional[int] = None):
        self.seed = int(seed)
        self.experiment = experiment
        self.trial = int(trial)
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=(experiment_id(experiment), self.trial))
        self._generator = np.random.Generator(np.random.Philox(sequence))
        self._chunk = int(chunk or settings.UNIFORM_CHUNK)
        self.buffer = self._generator.random(self._chunk)
        self.position = 0
        self.drawn = self._chunk

    def refill(self) -> None:
        self.buffer = self._generator.random(self._chunk)
        self.position = 0
        self.drawn += self._chunk

    def next_uniform(self) -> float:
        if self.position >= len(self.buffer):
            self.refill()
        u = float(self.buffer[self.position])
        self.position += 1
        return u

    def choice_index(self, n: int) -> int:
        """Uniform index in [0, n) from a single draw."""
        if n <= 0:
            raise InvalidParameterException("cannot choose from an empty collection")
        return min(int(self.next_uniform() * n), n - 1)


def trial_stream(seed: int, experiment: str, trial: int) -> UniformStream:
    return UniformStream(seed, experiment, trial)


def run_trials(task: Callable[[int], T], n_trials: int, workers: Optional[int] = None) -> List[T]:
    """
    Run `task(trial_index)` for every trial and return the results in trial order.
    The compiled kernels release the GIL, so threads overlap the heavy part.
    """
    if n_trials < 0:
        raise InvalidParameterException(f"trial count must be non-negative, got {n_trials}")
    workers = int(workers or settings.WORKERS)
    if workers <= 1 or n_trials <= 1:
        return [task(i) for i in range(n_trials)]
    logger.debug(f"Running {n_trials} trials on {workers} workers")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, range(n_trials)))


class StreamLedger:
    """Which experiment names consumed streams during a run, and how many trials each."""

    def __init__(self):
        self.allocations: Dict[str, Dict[str, int]] = {}

    def record(self, experiment: str, trials: int) -> None:
        entry = self.allocations.setdefault(experiment, {"id": experiment_id(experiment), "trials": 0})
        entry["trials"] += int(trials)
