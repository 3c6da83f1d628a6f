"""AC power flow by full Newton-Raphson in polar form.

Every non-slack bus is treated as PQ: both active and reactive net
injections are specified, and the slack bus (fixed |V| = start value,
angle 0) absorbs the system imbalance. The solver is a pure equality-
constraint kernel; voltage-magnitude limits are someone else's job.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalError
from .ybus import AdmittanceMatrix


class DimensionMismatch(InputError):
    """Injection arrays do not match the admittance matrix size."""


class SingularJacobian(NumericalError):
    """The Newton Jacobian is numerically singular."""


@dataclass(frozen=True)
class InjectionSpec:
    """Net scheduled bus injections in per-unit.

    ``slack`` is the position of the slack bus in the bus ordering; its
    p/q entries are placeholders overwritten by the solution.
    """

    p_pu: np.ndarray
    q_pu: np.ndarray
    slack: int


@dataclass(frozen=True)
class PowerFlowSolution:
    vm: np.ndarray
    va: np.ndarray
    slack_p_pu: float
    slack_q_pu: float
    iterations: int
    converged: bool
    max_mismatch_pu: float
    mismatch_trace: tuple[float, ...]


def calculated_injections(vm: np.ndarray, va: np.ndarray, y: AdmittanceMatrix):
    """Per-bus (P, Q) implied by the voltage state, in per-unit."""
    v = vm * np.exp(1j * va)
    s = v * np.conj(y.matrix @ v)
    return s.real, s.imag


def residual(vm: np.ndarray, va: np.ndarray, y: AdmittanceMatrix, spec: InjectionSpec):
    """Scheduled minus calculated injections, (dP, dQ) over all buses.

    The slack row is included in the output but carries no meaning; it
    is excluded from the mismatch norm by the solver.
    """
    n = y.n
    if len(vm) != n or len(va) != n or len(spec.p_pu) != n or len(spec.q_pu) != n:
        raise DimensionMismatch(
            f"state/spec arrays must all have length {n}"
        )
    p_calc, q_calc = calculated_injections(vm, va, y)
    return spec.p_pu - p_calc, spec.q_pu - q_calc


def power_jacobian(vm: np.ndarray, va: np.ndarray, y: AdmittanceMatrix) -> np.ndarray:
    """Dense 2n x 2n Jacobian d[P; Q] / d[va; vm] of the calculated injections."""
    v = vm * np.exp(1j * va)
    i_bus = y.matrix @ v
    vnorm = v / vm

    ds_dva = 1j * v[:, None] * np.conj(np.diag(i_bus) - y.matrix * v[None, :])
    ds_dvm = v[:, None] * np.conj(y.matrix * vnorm[None, :]) + np.diag(
        np.conj(i_bus) * vnorm
    )

    top = np.hstack([ds_dva.real, ds_dvm.real])
    bottom = np.hstack([ds_dva.imag, ds_dvm.imag])
    return np.vstack([top, bottom])


def solve_newton(
    y: AdmittanceMatrix,
    spec: InjectionSpec,
    tol: float = 1e-8,
    max_iter: int = 20,
    flat_start: bool = True,
    vm0: np.ndarray | None = None,
    va0: np.ndarray | None = None,
) -> PowerFlowSolution:
    """Solve the power-flow equations; divergence is reported, not raised.

    A state that blows up to non-finite values or exhausts ``max_iter``
    comes back with ``converged=False`` and the per-iteration mismatch
    trace. A singular Jacobian raises :class:`SingularJacobian`.
    """
    if tol <= 0 or max_iter < 1:
        raise ValueError("tol must be > 0 and max_iter >= 1")
    n = y.n
    if flat_start or vm0 is None or va0 is None:
        vm = np.ones(n)
        va = np.zeros(n)
    else:
        vm = np.asarray(vm0, dtype=float).copy()
        va = np.asarray(va0, dtype=float).copy()
        va = va - va[spec.slack]  # slack angle pinned to zero

    ns = np.array([i for i in range(n) if i != spec.slack])
    trace: list[float] = []
    iterations = 0

    def mismatch_vec() -> np.ndarray:
        dp, dq = residual(vm, va, y, spec)
        return np.concatenate([dp[ns], dq[ns]])

    f = mismatch_vec()
    max_mis = float(np.max(np.abs(f))) if len(f) else 0.0
    trace.append(max_mis)
    converged = max_mis <= tol

    while not converged and iterations < max_iter:
        jac_full = power_jacobian(vm, va, y)
        idx = np.concatenate([ns, n + ns])
        jac = jac_full[np.ix_(idx, idx)]
        try:
            dx = np.linalg.solve(jac, f)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian(str(exc)) from exc
        m = len(ns)
        va[ns] += dx[:m]
        vm[ns] += dx[m:]
        iterations += 1

        if not (np.all(np.isfinite(vm)) and np.all(np.isfinite(va))) or np.any(
            vm <= 0.0
        ):
            max_mis = float("inf")
            trace.append(max_mis)
            break

        f = mismatch_vec()
        max_mis = float(np.max(np.abs(f))) if len(f) else 0.0
        trace.append(max_mis)
        converged = max_mis <= tol

    p_calc, q_calc = calculated_injections(vm, va, y)
    return PowerFlowSolution(
        vm=vm,
        va=va,
        slack_p_pu=float(p_calc[spec.slack]),
        slack_q_pu=float(q_calc[spec.slack]),
        iterations=iterations,
        converged=bool(converged),
        max_mismatch_pu=max_mis,
        mismatch_trace=tuple(trace),
    )
