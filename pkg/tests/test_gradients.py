import time

import torch

from csgkit.eagcn import EaGcn, EaGcnConfig
from csgkit.gradcheck import STEP, TOLERANCE, finite_difference, run_gradcheck, six_node_graph
from csgkit.ksr import KernelScaledRepresentation, KsrConfig

from helpers import fixture


def test_six_node_fixture_file_matches_builder():
    assert fixture("six_node.json") == six_node_graph()


def test_finite_difference_on_a_quadratic():
    w = torch.tensor([1.0, -2.0, 0.5], dtype=torch.float64, requires_grad=True)
    res = finite_difference(lambda: (w ** 2).sum() + w.prod(), {"w": w})
    assert len(res) == 1 and res[0].passed and res[0].rel_error < 1e-9


def test_finite_difference_catches_a_wrong_gradient():
    w = torch.tensor([0.3, 0.7], dtype=torch.float64, requires_grad=True)

    class Wrong(torch.autograd.Function):
        @staticmethod
        def forward(ctx, x):
            return (x ** 3).sum()

        @staticmethod
        def backward(ctx, g):
            return g * torch.ones(2, dtype=torch.float64)

    assert not finite_difference(lambda: Wrong.apply(w), {"w": w})[0].passed


def test_every_learnable_tensor_passes():
    t0 = time.perf_counter()
    results = run_gradcheck(0)
    elapsed = time.perf_counter() - t0
    assert STEP == 1e-3 and TOLERANCE == 1e-4
    names = {r.name for r in results}
    expected = {"eagcn." + n for n, _ in EaGcn(EaGcnConfig(2, 2, 8)).named_parameters()}
    expected |= {"ksr." + n for n, _ in KernelScaledRepresentation(KsrConfig(8, 8)).named_parameters()}
    assert names == expected
    bad = [(r.name, r.rel_error) for r in results if not r.passed]
    assert not bad, bad
    assert elapsed < 120
