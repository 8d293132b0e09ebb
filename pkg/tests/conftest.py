import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fundnet.synthgen import SynthSpec, generate  # noqa: E402

# filled by test_acceptance.py, printed at the end of the session
ACCEPTANCE: dict = {}

SMALL = dict(n_funds=60, n_constituents=400, n_quarters=6, popular_pool=60, holdings_per_fund=10)


@pytest.fixture(scope="session")
def small_triple(tmp_path_factory):
    """A small noisy synthetic input triple shared by several test modules."""
    d = tmp_path_factory.mktemp("small")
    paths = generate(SynthSpec(seed=3, s_c=0.0004, sigma=0.002, **SMALL), d)
    return paths


def write_config(path: Path, data_dir: Path, out: str = "out", extra: str = "") -> Path:
    path.write_text(
        "[inputs]\n"
        f"holdings = {data_dir / 'holdings.csv'}\n"
        f"returns = {data_dir / 'returns.csv'}\n"
        f"factors = {data_dir / 'factors.csv'}\n\n"
        "[run]\n"
        f"out = {out}\n"
        + extra
    )
    return path


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, name, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num:2d}. {name}: {detail}")
