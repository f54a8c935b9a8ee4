"""Backend selection for the RK4 plant kernel.

The compiled extension is used when it was built; otherwise, or when
``CDFILTER_PURE_PYTHON=1`` is set, the pure-Python kernel is used. Both
produce bit-identical results.
"""

import os

from . import _rk4_py
from ._rk4_py import (  # noqa: F401
    FLAG_C_R,
    FLAG_H_CAKE,
    FLAG_OMEGA,
    FLAG_P_V,
    STATUS_BLOWUP,
    STATUS_OK,
    STATUS_RESISTANCE,
)

integrate_python = _rk4_py.integrate

try:
    from ._rk4_ext import integrate as integrate_compiled
except ImportError:  # extension not built
    integrate_compiled = None

if integrate_compiled is not None and os.environ.get("CDFILTER_PURE_PYTHON", "") not in ("1", "true"):
    integrate = integrate_compiled
    BACKEND = "cython"
else:
    integrate = integrate_python
    BACKEND = "python"

FLAG_NAMES = {
    FLAG_OMEGA: "neg_omega",
    FLAG_P_V: "neg_p_v",
    FLAG_C_R: "neg_c_r",
    FLAG_H_CAKE: "neg_h_cake",
}


def flag_names(flags):
    return [name for bit, name in FLAG_NAMES.items() if flags & bit]
