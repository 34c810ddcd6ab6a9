"""Nonlinear unbalanced power flow on the radial network.

A backward/forward sweep with constant-power injections: backward passes
aggregate branch currents from the leaves toward the substation, forward
passes propagate voltage drops across the line impedance matrices from the
substation outward, and the loop runs until the complex power implied by
the final phasors matches the specified injections everywhere. Acts as the
nonlinear counterpart of the linear voltage update in feedback mode and as
the yardstick for linearization error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import Network
from .sensitivity import OMEGA, SensitivityMatrices, voltage_linear


class SweepError(RuntimeError):
    """Sweep did not converge or hit a singular operating point."""


@dataclass(frozen=True)
class VoltageSolution:
    phasors: np.ndarray      # complex phasors over the flat index space, p.u.
    v: np.ndarray            # squared magnitudes, p.u.^2
    iterations: int
    max_mismatch: float      # worst complex power mismatch, p.u.


def backward_forward_sweep(
    net: Network,
    p: np.ndarray,
    q: np.ndarray,
    tol: float = 1e-8,
    max_sweeps: int = 100,
) -> VoltageSolution:
    """Solve nonlinear power flow for the given injections.

    p and q are real/reactive injections over the flat index space
    (negative values are loads). Sweeps alternate in a fixed order (levels
    descending for the backward pass, ascending for the forward pass), so
    identical inputs give bitwise identical solutions.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != (net.n_flat,) or q.shape != (net.n_flat,):
        raise ValueError(f"injection vectors must have shape ({net.n_flat},)")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
        raise ValueError("injections must be finite")

    n = net.n_buses
    s = np.zeros((n, 3), dtype=np.complex128)
    s[net.flat_bus_pos, net.flat_phase] = p + 1j * q
    mask = net.phase_mask.copy()
    mask[net.bus_pos(0)] = False  # the slack bus balances the rest

    # Flat start: substation magnitude with 0 / -120 / +120 degree angles.
    ref = np.sqrt(net.base_v_squared) * np.array([1.0, OMEGA, OMEGA * OMEGA])
    volt = np.tile(ref, (n, 1))

    max_depth = int(net.depth.max())
    levels = [np.flatnonzero(net.depth == dep) for dep in range(max_depth + 1)]
    parent = net.parent_pos
    nonroot = np.flatnonzero(parent >= 0)

    mismatch = np.inf
    for sweep in range(1, max_sweeps + 1):
        if np.any(np.abs(volt[mask]) < 1e-9):
            raise SweepError("zero voltage encountered; operating point is singular")
        # Backward: branch current into each bus = local draw + downstream.
        inj = np.zeros((n, 3), dtype=np.complex128)
        inj[mask] = np.conj(s[mask] / volt[mask])
        branch = -inj
        for dep in range(max_depth, 0, -1):
            kids = levels[dep]
            np.add.at(branch, parent[kids], branch[kids])
        # Forward: voltage drops across the line impedance matrices.
        for dep in range(1, max_depth + 1):
            kids = levels[dep]
            drop = np.einsum("nij,nj->ni", net.z_line[kids], branch[kids])
            volt[kids] = volt[parent[kids]] - drop
        # Power implied by the new phasors and the currents just used.
        child_sum = np.zeros((n, 3), dtype=np.complex128)
        np.add.at(child_sum, parent[nonroot], branch[nonroot])
        implied = volt * np.conj(child_sum - branch)
        mismatch = float(np.max(np.abs(implied[mask] - s[mask]), initial=0.0))
        if mismatch < tol:
            phasors = volt[net.flat_bus_pos, net.flat_phase]
            return VoltageSolution(
                phasors=phasors,
                v=np.abs(phasors) ** 2,
                iterations=sweep,
                max_mismatch=mismatch,
            )
    raise SweepError(
        f"no convergence after {max_sweeps} sweeps "
        f"(power mismatch {mismatch:.3e} p.u.); loading may be excessive"
    )


@dataclass(frozen=True)
class ModelDivergence:
    """Per-index gap between nonlinear and linearized squared voltages."""

    v_linear: np.ndarray
    v_nonlinear: np.ndarray
    diff: np.ndarray         # v_nonlinear - v_linear
    max_abs: float
    rms: float
    sweep: VoltageSolution


def compare_models(
    net: Network,
    sens: SensitivityMatrices,
    p: np.ndarray,
    q: np.ndarray,
    tol: float = 1e-8,
    max_sweeps: int = 100,
) -> ModelDivergence:
    """Run both voltage models at the same injections and report the gap."""
    sol = backward_forward_sweep(net, p, q, tol=tol, max_sweeps=max_sweeps)
    v_lin = voltage_linear(sens, p, q)
    diff = sol.v - v_lin
    return ModelDivergence(
        v_linear=v_lin,
        v_nonlinear=sol.v,
        diff=diff,
        max_abs=float(np.max(np.abs(diff), initial=0.0)),
        rms=float(np.sqrt(np.mean(diff**2))) if len(diff) else 0.0,
        sweep=sol,
    )
