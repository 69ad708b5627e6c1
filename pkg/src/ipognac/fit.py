"""Coarse grid search for the default imperfection set.

The hardware values behind the measured error rates (PBS extinction,
modulator phase noise, detector polarization dependence, dark counts) are
not published. This search picks the grid point whose expected key-basis
and check-basis QBERs are closest to the measured 0.175% and 0.07%.

The detector polarization dependence is not searched: the detector fibers
start aligned, so it leaves the t = 0 expectation unchanged and only shapes
the drift. It stays at ``FIT_EPS_POL``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .config import ExperimentConfig
from .harness import expected_qber

TARGET_QK = 0.00175
TARGET_QC = 0.0007

GRID = {
    "pbs.extinction": (5e-4, 1e-3, 2e-3),
    "modulator.sigma_phi": (0.015, 0.03, 0.045, 0.055, 0.065, 0.075),
    "snspd.dark_hz": (0.0, 25.0, 50.0, 100.0, 200.0),
}


@dataclass(frozen=True)
class FitPoint:
    params: dict
    q_k: float
    q_c: float

    @property
    def cost(self) -> float:
        return abs(self.q_k - TARGET_QK) + abs(self.q_c - TARGET_QC)


def evaluate(params: dict, base: ExperimentConfig | None = None) -> FitPoint:
    base = base or ExperimentConfig()
    qk = expected_qber(ExperimentConfig.from_flat({**params, "receiver.basis": "K"}, base))
    qc = expected_qber(ExperimentConfig.from_flat({**params, "receiver.basis": "C"}, base))
    return FitPoint(params, qk, qc)


def grid_search(base: ExperimentConfig | None = None, grid: dict = GRID) -> list[FitPoint]:
    """All grid points, best first. Ties keep grid order."""
    keys = list(grid)
    pts = [evaluate(dict(zip(keys, vals)), base) for vals in itertools.product(*grid.values())]
    return sorted(pts, key=lambda p: p.cost)
