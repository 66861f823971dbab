import pytest

from tmirs.config import SystemConfig, desk_config, random_config
from tmirs.geometry import reference_scenario
from tmirs.training import make_rng


@pytest.fixture
def rng():
    return make_rng(12345)


@pytest.fixture(scope="session")
def desk():
    cfg = desk_config()
    return cfg, reference_scenario(cfg)


@pytest.fixture(scope="session")
def full():
    cfg = SystemConfig()
    return cfg, reference_scenario(cfg)


@pytest.fixture(scope="session")
def small_learned():
    cfg = desk_config(irs_cols=2, irs_rows=2, n_subcarriers=4, learn_phase=True, q_phase=4)
    return cfg, reference_scenario(cfg)


def random_configs(cfg, n, seed=0, learn_phase=None):
    r = make_rng(seed)
    return [random_config(cfg, r, learn_phase) for _ in range(n)]


# acceptance verdicts, printed once more in the terminal summary
ACCEPTANCE_LINES = {}


@pytest.fixture
def report():
    def _report(number: int, ok: bool, detail: str) -> bool:
        line = f"CRITERION {number:>2} {'PASS' if ok else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return ok
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
