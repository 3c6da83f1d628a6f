"""Complex bus admittance matrix assembly (dense, per-unit)."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .matpower import GridCase


class ZeroImpedanceBranch(InputError):
    """A branch with r = x = 0 cannot contribute a series admittance."""


@dataclass(frozen=True)
class AdmittanceMatrix:
    """Dense n x n complex Y = G + jB in per-unit."""

    matrix: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def g(self) -> np.ndarray:
        return self.matrix.real

    @property
    def b(self) -> np.ndarray:
        return self.matrix.imag


def build_ybus(case: GridCase) -> AdmittanceMatrix:
    """Assemble Y from in-service branches and bus shunts.

    For a branch with series admittance y = 1/(r + jx), charging b and
    complex tap t = tap * e^{j shift}:

        Y[f,f] += (y + jb/2) / |t|^2      Y[f,t] -= y / conj(t)
        Y[t,t] +=  y + jb/2               Y[t,f] -= y / t

    Bus shunts (Gs + jBs, MW/MVAr at V=1) are divided by baseMVA and
    added to the diagonal. A tap of 0 means nominal (1.0).
    """
    pos = case.bus_positions()
    n = case.n
    y = np.zeros((n, n), dtype=complex)

    for br in case.branches:
        if not br.in_service:
            continue
        if br.r == 0.0 and br.x == 0.0:
            raise ZeroImpedanceBranch(f"branch {br.from_bus}-{br.to_bus} has r = x = 0")
        ys = 1.0 / complex(br.r, br.x)
        ysh = 0.5j * br.b_total
        tap = br.tap if br.tap != 0.0 else 1.0
        t = tap * cmath.exp(1j * math.radians(br.shift_deg))
        f, k = pos[br.from_bus], pos[br.to_bus]
        y[f, f] += (ys + ysh) / (tap * tap)
        y[k, k] += ys + ysh
        y[f, k] -= ys / t.conjugate()
        y[k, f] -= ys / t

    for bus in case.buses:
        i = pos[bus.id]
        y[i, i] += complex(bus.gs_mw, bus.bs_mvar) / case.base_mva

    return AdmittanceMatrix(matrix=y)
