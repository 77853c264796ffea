"""Shared fixtures for kronoma tests."""
import json
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

for module_name in list(sys.modules):
    if module_name == "kronoma" or module_name.startswith("kronoma."):
        sys.modules.pop(module_name, None)

from kronoma.designer import find_combining  # noqa: E402
from kronoma.patterns import BinaryMatrix, KroneckerPattern  # noqa: E402

P3_ROWS = [[1, 1, 0], [1, 0, 1], [0, 1, 1]]
P4_ROWS = [[0, 0, 0, 1], [0, 1, 1, 0], [1, 0, 1, 0], [1, 1, 0, 0]]
F2X3_ROWS = [[1, 0, 1], [1, 1, 0]]
F4X8_ROWS = [
    [1, 1, 1, 0, 1, 0, 0, 0],
    [1, 1, 0, 1, 0, 1, 0, 0],
    [1, 0, 1, 1, 0, 0, 1, 0],
    [0, 1, 1, 1, 0, 0, 0, 1],
]
P3P4_POLICY = [{"detect": [1, 2], "reform": [{"target": 3, "from": [2, 3], "subtract": [1, 2]}]}]


@pytest.fixture()
def p3():
    return BinaryMatrix.from_rows(P3_ROWS)


@pytest.fixture()
def p4():
    return BinaryMatrix.from_rows(P4_ROWS)


@pytest.fixture()
def d3(p3):
    return find_combining(p3)


@pytest.fixture()
def d4(p4):
    return find_combining(p4)


@pytest.fixture()
def p3p4(d3, d4):
    return KroneckerPattern((), (d3, d4))


@pytest.fixture()
def ones_f2f2():
    f2 = BinaryMatrix.from_rows(F2X3_ROWS)
    return KroneckerPattern((BinaryMatrix.from_rows([[1, 1]]), f2, f2))


@pytest.fixture()
def qpsk_example():
    return KroneckerPattern((BinaryMatrix.from_rows([[1, 1]]), BinaryMatrix.from_rows(F2X3_ROWS)))


@pytest.fixture()
def write_json(tmp_path):
    def write(name, obj):
        p = tmp_path / name
        p.write_text(json.dumps(obj))
        return str(p)

    return write


@pytest.fixture()
def tmp_p3p4(write_json):
    return write_json("p3p4.json", {"rect": [], "square": [P3_ROWS, P4_ROWS]})


@pytest.fixture()
def tmp_policy(write_json):
    return write_json("policy.json", P3P4_POLICY)
