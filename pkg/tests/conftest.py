import pytest

from proving_ground.orchestrator.config import example_config_path, load_config
from proving_ground.scenario import TestMatrix


@pytest.fixture(scope="session")
def example_cfg():
    return load_config(example_config_path())


def small_config(base, out_dir, suts=("det-A", "det-B"), times=("1pm", "7pm"),
                 weathers=("clear", "heavy_fog"), batch_size=4, **overrides):
    matrix = TestMatrix(tuple(suts), tuple(times), tuple(weathers), batch_size, base.matrix.base_seed)
    return base.with_overrides(matrix=matrix, output_dir=str(out_dir), name="small", **overrides)


@pytest.fixture
def small_cfg(example_cfg, tmp_path):
    return small_config(example_cfg, tmp_path / "out")


ACCEPTANCE_LINES = []


def record_criterion(name, ok, detail):
    """Print and remember one acceptance verdict, then fail the calling test if it did not hold."""
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
