"""
Shared fixtures: the paper-2um detector, a fast sweep configuration and one fast simulated run
"""
import pytest

from src.core.characterization_service import CharacterizationService
from src.data.presets import paper_2um
from src.models.experiment import SweepConfig


def sweep_with(sweep: SweepConfig, **updates) -> SweepConfig:
    """Validated copy of a sweep configuration"""
    return SweepConfig(**{**sweep.model_dump(), **updates})


@pytest.fixture(scope="session")
def paper_setup():
    return paper_2um()


@pytest.fixture(scope="session")
def paper_model(paper_setup):
    return paper_setup.model


@pytest.fixture(scope="session")
def paper_lo(paper_setup):
    return paper_setup.lo


@pytest.fixture(scope="session")
def fast_sweep(paper_setup):
    return sweep_with(
        paper_setup.sweep,
        n_averages=16,
        sweep_powers=[2e-4, 4e-4, 6e-4, 8e-4, 1e-3, 1.2e-3],
    )


@pytest.fixture(scope="session")
def fast_run(paper_model, paper_lo, fast_sweep):
    """(measurements, report) of a fast full characterization"""
    service = CharacterizationService()
    measurements = service.simulate_measurements(paper_model, paper_lo, fast_sweep)
    report = service.characterize_measurements(paper_model, paper_lo, measurements, fast_sweep)
    return measurements, report
