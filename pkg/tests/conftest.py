import pytest

from ctsdr import default_config, run_scenario, scenario_by_name
from ctsdr.cli import default_phantom


@pytest.fixture(scope="session")
def config():
    return default_config()


@pytest.fixture(scope="session")
def s2_record(config):
    """S2 without a phantom: kinematic trajectory only, no carving."""
    return run_scenario(scenario_by_name("S2", config), config)


@pytest.fixture(scope="session")
def s2_record_carved(config):
    """S2 drilled into the stock block at 0.5 mm voxels.

    Shared read-only by analysis and simulator tests; the acceptance tests
    run their own timed copy.
    """
    phantom = default_phantom(voxel_size=0.5)
    return run_scenario(scenario_by_name("S2", config), config, phantom=phantom)
