import os
import subprocess
import sys

import numpy as np
import pytest

from approxtopk import _backend


def selected(env_value):
    env = dict(os.environ, ATK_BACKEND=env_value)
    out = subprocess.run(
        [sys.executable, "-c", "import approxtopk; print(approxtopk.BACKEND_NAME)"],
        env=env,
        capture_output=True,
        text=True,
    )
    return out.returncode, out.stdout.strip()


def test_force_python():
    assert selected("python") == (0, "python")


def test_auto_prefers_compiled():
    code, name = selected("auto")
    assert code == 0
    assert name == ("compiled" if "compiled" in _backend.BACKENDS else "python")


def test_bad_value_fails_import():
    code, _ = selected("gpu")
    assert code != 0


def test_get_unknown():
    with pytest.raises(ValueError):
        _backend.get("fortran")


def test_kernel_argument_checks(backend):
    kern = _backend.get(backend)
    vals = np.full((2, 8), -np.inf, np.float32)
    idx = np.zeros((2, 8), np.uint32)
    with pytest.raises(ValueError):
        kern.update_state(vals, idx, np.zeros((3, 4), np.float32), 0, 4, 2)
    with pytest.raises(ValueError):
        kern.update_state(vals, idx, np.zeros((2, 4), np.float32), 0, 4, 3)
    with pytest.raises(ValueError):
        kern.dot_block(np.zeros((2, 3), np.float32), np.zeros((5, 4), np.float32), 0, 5,
                       np.zeros((2, 5), np.float32))
    with pytest.raises(ValueError):
        kern.dot_block(np.zeros((2, 3), np.float32), np.zeros((5, 3), np.float32), 0, 5,
                       np.zeros((2, 4), np.float32))
