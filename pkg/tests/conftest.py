import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from oracles import central_difference, rel_err  # noqa: E402

from vodepth.synth import generate_dataset  # noqa: E402


def fd_check(fn, *inputs, h=1e-6):
    """Worst relative error between autograd and central differences of scalar fn."""
    leaves = [t.detach().clone().double().requires_grad_(True) for t in inputs]
    fn(*leaves).backward()
    worst = 0.0
    for i, leaf in enumerate(leaves):
        def f(arr, i=i):
            args = [t.detach() for t in leaves]
            args[i] = torch.from_numpy(arr)
            with torch.no_grad():
                return float(fn(*args))
        num = central_difference(f, leaf.detach().numpy(), h)
        worst = max(worst, rel_err(leaf.grad.numpy(), num))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_dataset():
    return generate_dataset(6, seed=5, size=(32, 64))


@pytest.fixture(scope="session")
def small_sample():
    return generate_dataset(1, seed=3)[0]


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
