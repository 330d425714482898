import numpy as np
import pytest

from hexmg.material import NeoHookean, set_jacobian_perturbation
from hexmg.mesh import BoundaryCondition, build_box_mesh
from hexmg.operator import HyperelasticOperator

MAT = NeoHookean(mu=1.0, lam=1.5)
SKEW = np.array([[1.0, 0.1, 0.0], [0.0, 0.9, 0.05], [0.02, 0.0, 1.1]])


def make_problem(p=2, counts=(2, 2, 2), extents=(1.0, 1.0, 1.0), traction=(0.0, 0.02, 0.01),
                 variant="current", affine=SKEW, material=MAT, fixed=("-x",), **kw):
    mesh = build_box_mesh(extents, counts, p, affine=affine)
    bcs = [BoundaryCondition(f, "dirichlet", (0.0, 0.0, 0.0)) for f in fixed]
    if traction is not None:
        bcs.append(BoundaryCondition("+x", "traction", traction))
    return HyperelasticOperator(mesh, material, bcs, variant=variant, **kw)


def smooth_state(op, seed, amp=0.03):
    """Smooth random displacement (affine + sine mode + small noise), lifted."""
    rng = np.random.default_rng(seed)
    X = op.mesh.coords
    u = X @ (amp * rng.standard_normal((3, 3))).T
    u += 0.5 * amp * np.sin(np.pi * X @ rng.uniform(0.5, 1.5, 3))[:, None] * rng.standard_normal(3)
    u += 0.01 * amp * rng.standard_normal(u.shape)
    return op.lift(u.ravel())


def rel(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


@pytest.fixture(autouse=True)
def _reset_mutation_hook():
    yield
    set_jacobian_perturbation(0.0)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
