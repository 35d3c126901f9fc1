import os
import subprocess
import sys

import numpy as np

from degenerate_elliptic._accel import NUMBA_ENABLED, njit
from degenerate_elliptic.special_functions import MAX_TERMS, REL_STOP, _series_kernel


def test_py_func_always_available():
    @njit
    def add(a, b):
        return a + b

    assert add(1, 2) == 3 and add.py_func(1, 2) == 3


def test_series_kernel_paths_agree():
    for x in np.linspace(0, 40, 9):
        a = _series_kernel(0.7, 1.3, float(x), MAX_TERMS, REL_STOP)
        b = _series_kernel.py_func(0.7, 1.3, float(x), MAX_TERMS, REL_STOP)
        assert a[0] == b[0] and a[1] == b[1]


def test_env_flag_disables_numba():
    env = dict(os.environ, DEGENERATE_ELLIPTIC_NO_NUMBA="1")
    code = ("from degenerate_elliptic._accel import NUMBA_ENABLED; from degenerate_elliptic import kummer_M;"
            "print(NUMBA_ENABLED, repr(kummer_M(1.0, 1.0, 3.0).value))")
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    flag, val = res.stdout.split()
    assert flag == "False"
    from degenerate_elliptic import kummer_M
    assert float(val) == kummer_M(1.0, 1.0, 3.0).value


def test_numba_state_reported():
    assert isinstance(NUMBA_ENABLED, bool)
