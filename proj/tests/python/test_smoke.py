import math
import os
import subprocess

import numpy as np
import pytest

import hlab

FREE2D = """[scenario]
dimension = 2
lambda = 1
epsilon = 0.5
half_width = 4
points = 33
[fields]
n = "1"
f = "exp(-r^2)"
"""


def test_version_and_hash():
    assert hlab.__version__ == hlab.version()
    assert hlab.fnv1a64("a") == 0xAF63DC4C8601EC8C


def test_describe_and_errors():
    d = hlab.describe(FREE2D)
    assert d["dimension"] == 2 and d["points"] == 33
    assert not d["magnetic"]
    with pytest.raises(hlab.ConfigError):
        hlab.describe(FREE2D.replace("epsilon = 0.5", "epsilon = 0"))


def test_solve_residual():
    u, info = hlab.solve(FREE2D)
    assert u.shape == (33, 33) and u.dtype == np.complex128
    assert info["residual"] <= 1e-8
    h = info["spacing"]
    x = -4 + (np.arange(33) + 0.5) * h
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    f = np.exp(-(X1**2 + X2**2))
    Au = hlab.apply_operator(FREE2D, u)
    interior = (slice(1, -1), slice(1, -1))
    err = np.linalg.norm((Au - f)[interior]) / np.linalg.norm(f[interior])
    assert err <= 1e-7


def test_norms_homogeneous():
    rng = np.random.default_rng(1)
    f = rng.normal(size=(17, 17, 17)) + 1j * rng.normal(size=(17, 17, 17))
    a, b = hlab.norms(3, 4.0, f)
    a2, b2 = hlab.norms(3, 4.0, 3.7 * f)
    assert a2 == pytest.approx(3.7 * a, rel=1e-12)
    assert b2 == pytest.approx(3.7 * b, rel=1e-12)
    # |<f, f>| <= |||f||| |||f|||* with the cell volume h^3 in the integral
    assert abs(np.vdot(f, f).real) * (8.0 / 16) ** 3 <= a * b * (1 + 1e-12)


def test_saito():
    a, b = hlab.saito_coefficients(2.0)
    assert a == pytest.approx(0.9659258, abs=1e-7)
    assert b == pytest.approx(0.2588190, abs=1e-7)
    assert 2 * a * b == pytest.approx(0.5, rel=1e-13)
    r = hlab.eikonal_saito(2.0, 3, 50.0)
    assert r["residual"] <= 1e-10
    # c0 is the minimum over grid directions; the sphere grid misses the pole by at most pi/16
    assert a - b - 1e-12 <= r["c0"] <= a - b * math.cos(math.pi / 16)


def test_presets_and_cli(tmp_path):
    assert "saito" in hlab.preset_names()
    code, out, _ = hlab.run(["solve", "--preset", "free", "--dry-run", "--out", str(tmp_path / "d")])
    assert code == 0 and "config ok" in out
    code, _, err = hlab.run(["solve", "--preset", "nosuch", "--out", str(tmp_path / "e")])
    assert code == 2 and err
    exe = os.environ.get("HLAB_BIN")
    if exe:
        p = subprocess.run([exe, "--version"], capture_output=True, text=True)
        assert p.returncode == 0 and hlab.version() in p.stdout
