import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from workcell.kinematics import KinematicChain


@pytest.fixture(scope="session")
def chain() -> KinematicChain:
    path = Path(__file__).parent.parent / "src" / "workcell" / "data" / "chain6.json"
    return KinematicChain.from_file(path)
