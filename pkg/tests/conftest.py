from pathlib import Path

import pytest
import yaml

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


@pytest.fixture
def write_config(tmp_path):
    """Write a config mapping (or a packaged config with overrides) to a temp file."""

    def _write(doc=None, base=None, name="run.yaml", **sections):
        if base is not None:
            doc = yaml.safe_load((CONFIGS / base).read_text())
        doc = dict(doc or {})
        for key, val in sections.items():
            doc[key] = val
        path = tmp_path / name
        path.write_text(yaml.safe_dump(doc, sort_keys=False))
        return path

    return _write


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
