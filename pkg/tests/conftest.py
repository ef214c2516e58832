import pytest

from geomgait.datasets import perturbed_record
from geomgait.plants import SwimmerPlant
from geomgait.prediction import PipelineConfig, cross_validate, fit_model, prepare
from geomgait.waveforms import builtin_box, synth_waveform

DT = 1 / 128


@pytest.fixture(scope="session")
def plant():
    return SwimmerPlant()


@pytest.fixture(scope="session")
def box():
    return builtin_box("swimmer-full")


@pytest.fixture(scope="session")
def record(plant, box):
    """100 perturbed cycles drawn from the full swimmer box."""
    return perturbed_record(plant, box, 100, DT, seed=1)


@pytest.fixture(scope="session")
def cfg():
    return PipelineConfig()


@pytest.fixture(scope="session")
def prep(record, cfg):
    return prepare(record, cfg)


@pytest.fixture(scope="session")
def model(prep, cfg):
    return fit_model(prep, cfg)


@pytest.fixture(scope="session")
def nominal(plant, box):
    """Steady-state record at the box centre (twelve settling cycles dropped)."""
    p = box.make(box.center)
    return perturbed_record(plant, box, 20, DT, params=[p] * 20, warmup=12)


@pytest.fixture(scope="session")
def centre_input(box):
    return synth_waveform(box.make(box.center), DT, 6)


@pytest.fixture(scope="session")
def cv_report(prep, cfg):
    return cross_validate(prep, cfg, seed=0)


@pytest.fixture(scope="session")
def nominal_model(nominal, cfg):
    return fit_model(prepare(nominal, cfg), cfg)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
