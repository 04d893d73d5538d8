import numpy as np
import pytest

from erpspeller.core.paradigm import build_flash_code, build_schedule
from erpspeller.core.session import OfflineProtocol, OnlineProtocol, ProtocolConfig
from erpspeller.core.synth import SubjectProfile


@pytest.fixture(scope="session")
def flash_code():
    return build_flash_code()


@pytest.fixture
def noiseless_profile():
    return SubjectProfile(noise_rms_uv=0.0, alpha_base_uv=0.0, amplitude_jitter=0.0, erp_decline_rate=0.0, seed=7)


@pytest.fixture
def no_erp_profile():
    return SubjectProfile(erp_components=(), seed=11)


@pytest.fixture
def short_protocol():
    """One offline run and six online blocks, for fast end-to-end checks."""
    return ProtocolConfig(
        offline=OfflineProtocol(runs=1, blocks_per_run=5, trials_per_block=16),
        online=OnlineProtocol(blocks=6),
    )


@pytest.fixture
def schedule_for(flash_code):
    def make(targets, n_trials=2, seed=0, **kwargs):
        return build_schedule(flash_code, targets, n_trials, np.random.default_rng(seed), **kwargs)
    return make
