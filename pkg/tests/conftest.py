import numpy as np
import pytest

from tcrgan.dataset import compute_stats, make_synthetic, normalize_sample
from tcrgan.discriminator import DiscriminatorConfig
from tcrgan.generator import GeneratorConfig
from tcrgan.training import TrainConfig

_criteria = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _criteria.append((marker.args[0], marker.args[1], report.outcome, report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number, text, outcome, duration in sorted(_criteria):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {text} ({duration:.1f}s)")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_config():
    """Factory for CPU-cheap configs used by loop and checkpoint tests."""

    def make(variant="tcr-gan", size=32, **kwargs):
        gen = GeneratorConfig(variant=variant, levels=3, base_channels=8, input_size=size)
        disc = DiscriminatorConfig(base_channels=8, input_size=size)
        return TrainConfig(generator=gen, discriminator=disc, **kwargs)

    return make


@pytest.fixture
def tiny_set():
    samples = make_synthetic(6, 32, seed=3)
    stats = compute_stats(samples)
    return [normalize_sample(s, stats) for s in samples], stats
