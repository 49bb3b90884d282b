"""Thin wrapper over the HiGHS dual simplex shipped with scipy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

# HiGHS defaults to 1e-7; the solvers here compare payoffs at 1e-9.
_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
    "presolve": True,
}


class LPError(RuntimeError):
    """The LP backend failed for a reason other than infeasibility."""


@dataclass
class LPSolution:
    x: np.ndarray
    value: float


def maximize(c, A_ge=None, b_ge=None, A_eq=None, b_eq=None, bounds=(0, None)) -> LPSolution | None:
    """Maximise ``c @ x`` subject to ``A_ge @ x >= b_ge`` and ``A_eq @ x == b_eq``.

    Returns ``None`` when the program is infeasible and raises ``LPError`` on
    any other failure (unbounded, numerical trouble).
    """
    c = np.asarray(c, dtype=float)
    A_ub = b_ub = None
    if A_ge is not None and len(A_ge):
        A_ub = -np.asarray(A_ge, dtype=float)
        b_ub = -np.asarray(b_ge, dtype=float)
    if A_eq is not None and len(A_eq) == 0:
        A_eq = b_eq = None
    res = linprog(
        -c,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=bounds,
        method="highs-ds",
        options=_OPTIONS,
    )
    if res.status == 2:
        return None
    if res.status != 0:
        raise LPError(f"LP solve failed (status {res.status}): {res.message}")
    return LPSolution(np.asarray(res.x, dtype=float), float(-res.fun))
