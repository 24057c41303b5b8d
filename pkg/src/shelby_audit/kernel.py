"""Backend selection for the Monte Carlo epoch kernel.

The compiled Cython module is used when it imports; otherwise the
pure-Python implementation runs. Setting ``SHELBY_AUDIT_PURE_PYTHON=1``
forces the fallback. Both produce identical counts.
"""

from __future__ import annotations

import os

from . import _kernel_py
from ._kernel_py import (  # noqa: F401
    AUDITS,
    EXTRA,
    EXTRA_FAILS,
    FALSE_ONES,
    FURNISHED,
    INSPECTED,
    INSPECTION_FAILS,
    NCOUNTS,
    ONES,
    PASSES,
    RECON,
    RULE_ONE,
    RULE_TRUTHFUL,
    RULE_ZERO,
)

COUNT_NAMES = (
    "passes",
    "ones",
    "audits",
    "reconstructions",
    "inspected",
    "inspection_fails",
    "furnished",
    "false_ones",
    "extra_audits",
    "extra_fails",
)

try:
    from . import _kernel as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _kernel_py.simulate_counts}
if _compiled is not None:
    BACKENDS["cython"] = _compiled.simulate_counts

if os.environ.get("SHELBY_AUDIT_PURE_PYTHON", "") not in ("", "0") or _compiled is None:
    BACKEND = "python"
else:
    BACKEND = "cython"


def simulate_counts(*args, backend: str | None = None, **kwargs):
    name = backend or BACKEND
    try:
        fn = BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} is not available (have {sorted(BACKENDS)})") from None
    return fn(*args, **kwargs)
