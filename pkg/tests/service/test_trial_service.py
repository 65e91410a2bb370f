import zlib

import numpy as np
import pytest

from app.core.exceptions import InvalidParameterException
from app.services.trial_service import (
    StreamLedger,
    UniformStream,
    experiment_id,
    run_trials,
    trial_stream
)


# ====================================================================
# TEST GROUP 1: streams
# ====================================================================

def test_experiment_id_is_stable():
    assert experiment_id("grow") == zlib.crc32(b"grow")
    assert experiment_id("grow") != experiment_id("attach")


def test_same_triple_gives_same_draws():
    """
    Scenario: Two streams for the same (seed, experiment, trial).
    Expected: Identical uniforms.
    """
    # Arrange
    a = trial_stream(7, "escape", 3)
    b = trial_stream(7, "escape", 3)

    # Act
    draws_a = [a.next_uniform() for _ in range(50)]
    draws_b = [b.next_uniform() for _ in range(50)]

    # Assert
    assert draws_a == draws_b


@pytest.mark.parametrize("other", [(8, "escape", 3), (7, "ring", 3), (7, "escape", 4)])
def test_changing_any_coordinate_changes_the_stream(other):
    # Arrange
    base = trial_stream(7, "escape", 3)
    changed = trial_stream(*other)

    # Assert
    assert [base.next_uniform() for _ in range(8)] != [changed.next_uniform() for _ in range(8)]


def test_chunk_size_does_not_change_the_sequence():
    """
    Scenario: The same stream buffered in chunks of 7 and of 4096.
    Expected: Refills are invisible to the consumer.
    """
    # Arrange
    small = UniformStream(11, "grow", 5, chunk=7)
    large = UniformStream(11, "grow", 5, chunk=4096)

    # Act
    draws_small = [small.next_uniform() for _ in range(40)]
    draws_large = [large.next_uniform() for _ in range(40)]

    # Assert
    assert np.allclose(draws_small, draws_large, rtol=0, atol=0)
    assert small.drawn >= 40


def test_choice_index_stays_in_range():
    stream = trial_stream(0, "choice", 0)
    picks = [stream.choice_index(3) for _ in range(500)]
    assert set(picks) == {0, 1, 2}


def test_choice_index_rejects_empty():
    with pytest.raises(InvalidParameterException):
        trial_stream(0, "choice", 0).choice_index(0)


# ====================================================================
# TEST GROUP 2: run_trials
# ====================================================================

def test_run_trials_keeps_trial_order():
    """
    Scenario: Trials run on 4 threads.
    Expected: Results come back in trial order and match a serial run.
    """
    # Arrange
    def task(trial: int) -> float:
        return trial_stream(3, "order", trial).next_uniform()

    # Act
    serial = run_trials(task, 64, workers=1)
    threaded = run_trials(task, 64, workers=4)

    # Assert
    assert serial == threaded


def test_run_trials_rejects_negative_count():
    with pytest.raises(InvalidParameterException):
        run_trials(lambda i: i, -1)


def test_stream_ledger_accumulates():
    # Arrange
    ledger = StreamLedger()

    # Act
    ledger.record("grow", 10)
    ledger.record("grow", 5)

    # Assert
    assert ledger.allocations["grow"] == {"id": experiment_id("grow"), "trials": 15}
