import json
import os
import subprocess
import sys

import numpy as np
import pytest

from fractura import kernels
from fractura._accel import USE_NUMBA
from fractura.mesh import structured_rectangle

needs_numba = pytest.mark.skipif(not USE_NUMBA, reason="numba backend disabled")


@pytest.fixture
def distorted_mesh(rng):
    m = structured_rectangle(6, 5)
    nodes = m.nodes + rng.uniform(-0.03, 0.03, m.nodes.shape) * (m.nodes > 0) * (m.nodes < 1)
    return np.ascontiguousarray(nodes), np.ascontiguousarray(m.triangles)


@needs_numba
def test_scalar_stiffness_flavours_agree(distorted_mesh, rng):
    nodes, tris = distorted_mesh
    a = rng.normal(size=(len(tris), 2, 2))
    coef = np.einsum("mij,mkj->mik", a, a) + np.eye(2)
    np.testing.assert_allclose(kernels.numba_scalar_stiffness(nodes, tris, coef),
                               kernels.numpy_scalar_stiffness(nodes, tris, coef), rtol=1e-12, atol=1e-12)


@needs_numba
def test_vector_stiffness_flavours_agree(distorted_mesh, rng):
    nodes, tris = distorted_mesh
    a = rng.normal(size=(len(tris), 3, 3))
    cmat = np.einsum("mij,mkj->mik", a, a) + np.eye(3)
    np.testing.assert_allclose(kernels.numba_vector_stiffness(nodes, tris, cmat),
                               kernels.numpy_vector_stiffness(nodes, tris, cmat), rtol=1e-12, atol=1e-12)


@needs_numba
def test_hausdorff_flavours_agree_within_tolerance(rng):
    for _ in range(30):
        a, b = rng.random((int(rng.integers(1, 6)), 4)), rng.random((int(rng.integers(1, 6)), 4))
        pa, pb = rng.random((int(rng.integers(0, 3)), 2)), rng.random((int(rng.integers(0, 3)), 2))
        x = kernels.numba_directed_hausdorff(a, pa, b, pb, 1e-9)
        y = kernels.numpy_directed_hausdorff(a, pa, b, pb, 1e-9)
        assert abs(x - y) <= 1e-9


def test_element_matrices_have_constant_kernel(distorted_mesh):
    nodes, tris = distorted_mesh
    k = kernels.scalar_stiffness(nodes, tris, np.tile(np.eye(2), (len(tris), 1, 1)))
    np.testing.assert_allclose(k.sum(-1), 0.0, atol=1e-12)
    kv = kernels.vector_stiffness(nodes, tris, np.tile(np.eye(3), (len(tris), 1, 1)))
    # rigid translations and rotations produce no strain
    p = nodes[tris]
    for mode in (np.tile([1.0, 0.0], 3), np.tile([0.0, 1.0], 3)):
        np.testing.assert_allclose(kv @ mode, 0.0, atol=1e-12)
    rot = np.stack((-p[..., 1], p[..., 0]), axis=-1).reshape(len(tris), 6)
    np.testing.assert_allclose(np.einsum("mij,mj->mi", kv, rot), 0.0, atol=1e-12)


def test_env_flag_selects_numpy_backend():
    code = ("import json, fractura._accel as a, fractura.kernels as k;"
            "print(json.dumps([a.backend(), hasattr(k, 'numba_directed_hausdorff')]))")
    env = dict(os.environ, FRACTURA_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env, check=True)
    assert json.loads(out.stdout) == ["numpy", False]
    env["FRACTURA_DISABLE_NUMBA"] = "off"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env, check=True)
    assert json.loads(out.stdout)[0] == "numba"
