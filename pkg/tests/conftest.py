import sys
from pathlib import Path

import pytest

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(Path(__file__).resolve().parent))

from irinstr.ir import parse_ir  # noqa: E402


@pytest.fixture(scope="session")
def repo_root() -> Path:
    return REPO


@pytest.fixture(scope="session")
def runtime_defs():
    return parse_ir((REPO / "runtime" / "checks.ll").read_text(encoding="utf-8"))


def read_repo(relpath: str) -> str:
    return (REPO / relpath).read_text(encoding="utf-8")
