from __future__ import annotations

import sys
from pathlib import Path

import pytest

from rmtmap.hw_spec import read_hw_spec
from rmtmap.ir_model import read_ir

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
HW_PATH = FIXTURES / "hw" / "rmt_v1model_32.json"

sys.path.insert(0, str(Path(__file__).resolve().parent))


def fixture_path(name: str) -> Path:
    return FIXTURES / f"{name}.nir.json"


@pytest.fixture(scope="session")
def hw():
    return read_hw_spec(HW_PATH)


@pytest.fixture(scope="session")
def qos():
    return read_ir(fixture_path("qos_modifier"))


@pytest.fixture(scope="session")
def load():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = read_ir(fixture_path(name))
        return cache[name]

    return get


def pytest_terminal_summary(terminalreporter):
    lines = [v for reports in terminalreporter.stats.values() for r in reports
             for k, v in getattr(r, "user_properties", ()) if k == "criterion"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(set(lines)):
            terminalreporter.write_line(line)
