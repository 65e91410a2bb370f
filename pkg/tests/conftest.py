import os
import tempfile

# --- 1. ENVIRONMENT ---
# Settings are read when 'app.core.config' is first imported,
# so the scratch locations must be in os.environ before any app import.

_SCRATCH = tempfile.mkdtemp(prefix="wedge-dla-tests-")
os.environ["OUTPUT_ROOT"] = os.path.join(_SCRATCH, "runs")
os.environ["CACHE_DIR"] = os.path.join(_SCRATCH, "cache")
os.environ["WORKERS"] = "1"
os.environ["LOG_LEVEL"] = "WARNING"
os.environ["PROJECT_NAME"] = "wedge-dla-test"

# --- 2. NOW IMPORTS ARE SAFE ---
import math

import pytest

from app.schemas.wedge_schema import WedgeSpec


# --- 3. WEDGE FIXTURES ---

@pytest.fixture(scope="session")
def quarter_wedge():
    """W_{0, pi/4}: slopes 0/1 and 1/1."""
    return WedgeSpec.from_slopes("0/1", "1/1")


@pytest.fixture(scope="session")
def right_wedge():
    """W_{0, pi/2}: the quarter plane x, y >= 0."""
    return WedgeSpec.from_slopes("0/1", "1/0")


@pytest.fixture(scope="session")
def symmetric_wedge():
    """W_{-pi/4, pi/4}."""
    return WedgeSpec.from_slopes("-1/1", "1/1")


@pytest.fixture(scope="session")
def narrow_wedge():
    """W_{0, pi/8} through its rational approximation."""
    return WedgeSpec.from_angles(0.0, math.pi / 8)


@pytest.fixture(scope="session")
def ray_wedge():
    """The degenerate wedge: the non-negative x-axis."""
    return WedgeSpec.ray()
