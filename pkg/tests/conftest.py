import json
import sys
from pathlib import Path

import pytest

from wormhole_nc.model import parse_config

TESTS = Path(__file__).parent
DATA = TESTS / "data"
sys.path.insert(0, str(TESTS))


@pytest.fixture
def net_y_doc():
    return json.loads((DATA / "net_y.json").read_text())


@pytest.fixture
def net_y(net_y_doc):
    return parse_config(net_y_doc)
