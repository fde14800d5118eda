import numpy as np
import pytest

from xfmr_tl import gridgen, surrogate
from xfmr_tl.gridgen import GridSpec, Sweep
from xfmr_tl.nn import kernels


@pytest.fixture(scope="session")
def techs():
    return surrogate.load_profiles()


@pytest.fixture(scope="session")
def tech(techs):
    return techs["tgt22_qalb_30g"]


def tiny_spec(steps=(2, 2, 2, 2, 2), tech="tgt22_qalb_30g", name="tiny"):
    lims = {"d_out": (40.0, 100.0), "w_p": (3.0, 9.0), "w_s": (3.0, 9.0),
            "c1": (0.0, 150.0), "c2": (10.0, 150.0)}
    sweeps = {d: Sweep(*lims[d], s) for d, s in zip(gridgen.SWEEP_DIMS, steps)}
    return GridSpec(name=name, tech=tech, sweeps=sweeps)


@pytest.fixture(scope="session")
def small_ds(tech):
    # 4*3*3*6*5 = 1080 points
    return gridgen.prepare(tiny_spec((4, 3, 3, 6, 5)), tech, split_seed=0)


@pytest.fixture(params=kernels.available())
def backend(request):
    prev = kernels.BACKEND
    kernels.use(request.param)
    yield request.param
    kernels.use(prev)


def kink_margin(layers, x):
    """Smallest |pre-activation| at any ReLU in a stack (training-mode forward).

    Central differences straddle the kink when this is within a step of zero.
    """
    from xfmr_tl.nn.layers import BatchNorm1d, ReLU
    margin, h = np.inf, x
    for layer in layers:
        if isinstance(layer, BatchNorm1d) and layer.relu:
            layer.relu = False
            try:
                pre = layer.forward(h, training=True, update_stats=False)
            finally:
                layer.relu = True
            margin = min(margin, float(np.min(np.abs(pre))))
        elif isinstance(layer, ReLU):
            margin = min(margin, float(np.min(np.abs(h))))
        h = layer.forward(h, training=True, update_stats=False)
    return margin


def rng(seed=0):
    return np.random.default_rng(seed)


# "CRITERION n: PASS|FAIL ..." lines from test_acceptance, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
