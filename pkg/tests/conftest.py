import numpy as np
import pytest

import spikescan as sk
from spikescan.rng import RngStream


@pytest.fixture(scope="session")
def small_template():
    """d=4 renewal template on a 100 ms window (fast desk-scale runs)."""
    rng = RngStream(11)
    trains = [sk.simulate_renewal_deadtime(24.0, 1.0, 100.0, rng.child(i))
              for i in range(4)]
    return sk.MultiTrain(trains)


@pytest.fixture(scope="session")
def hamming_kernel(small_template):
    return sk.build_template_kernel(small_template, sk.ScoreFunction.hamming(5.0, 0.4))


@pytest.fixture(scope="session")
def box_kernel(small_template):
    return sk.build_template_kernel(small_template, sk.ScoreFunction.box(4.0, "0.3"))


@pytest.fixture(scope="session")
def single_spike_box():
    """The hand-checkable instance: one template spike at 10 on [0, 20)."""
    tpl = sk.MultiTrain([sk.SpikeTrain(np.array([10.0]), (0.0, 20.0))])
    return sk.build_template_kernel(tpl, sk.ScoreFunction.box(4.0, "0.3"))
