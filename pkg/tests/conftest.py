import numpy as np
import pytest

from hitsync.synth import BackgroundSpec, SynthSpec, generate, make_rally
from hitsync.timeline import SegmentGrid


@pytest.fixture(scope="session")
def grid():
    return SegmentGrid()


@pytest.fixture(scope="session")
def rally_20db():
    """A 90 s rally corpus at 20 dB SNR with bounces, generated once."""
    template = SynthSpec(duration_s=90.0, background=BackgroundSpec(noise_level=0.05), seed=11)
    spec = make_rally(template, n_hits=40, inter_hit_frames=(24, 40), with_bounces=True)
    buf, track, truth = generate(spec)
    return spec, buf, track, truth


@pytest.fixture()
def rng():
    return np.random.default_rng(0xC0FFEE)
