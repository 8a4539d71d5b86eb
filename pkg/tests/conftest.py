import pytest

from posebranch.synth import DataConfig, generate_dataset, load_manifest

TINY = DataConfig(num_categories=3, instances_per_category=3, views_per_instance=8, seed=1, degenerate=(2,))


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny")
    generate_dataset(TINY, root)
    return load_manifest(root)


@pytest.fixture(scope="session")
def reference_dataset(tmp_path_factory):
    """4 categories x 8 instances x 64 views, 32x32 crops, seed 0."""
    root = tmp_path_factory.mktemp("reference")
    generate_dataset(DataConfig(), root)
    return load_manifest(root)


_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion and fail the test if any check failed."""

    def record(number: int, title: str, checks: list[tuple[str, bool]]):
        ok = all(passed for _, passed in checks)
        failed = [name for name, passed in checks if not passed]
        detail = "; ".join(name for name, _ in checks)
        _CRITERIA.append(f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({detail})")
        assert ok, f"criterion {number} failed checks: {failed}"

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
