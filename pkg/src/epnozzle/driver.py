"""Outer fixed-point iteration and solution extraction.

Starting from the unperturbed state, each sweep (a) transports the inlet
entropy along the streamlines of the current momentum field, (b) solves
the rotational Poisson problem with the new baroclinic source, and (c)
solves the viscosity-continued mixed-type pair with coefficients frozen
at the current iterate, optionally damped.  The unperturbed state is an
exact fixed point, so zero boundary data converge immediately; small data
contract geometrically.

After convergence the sonic interface is extracted as the per-line root
of the principal-part determinant ``a11 - a12^2``, the Mach field is
cross-checked against the determinant sign (the two classifications agree
away from the interface cell), and primitive variables plus the residuals
of the original balance laws are reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .background import BackgroundSolution
from .boundary import BoundaryDataSpec
from .coefficients import (
    CoefficientSet,
    FlowState,
    assemble_coefficients,
    background_profile,
    check_smallness,
    default_d0,
    momentum_field,
    require_admissible,
    varrho,
)
from .errors import InputError, InternalError, NonConvergenceError
from .fields import Grid, grid_d2_parity_split
from .mixed_solver import solve_linear_problem
from .transport import lagrangian_map, stream_function, transport_entropy

DEFAULT_TOL_OUTER = 1e-9
DEFAULT_MAX_OUTER = 100
THETA_FLOOR = 1.0 / 32.0


@dataclass
class SolveOutcome:
    """Converged state plus extracted diagnostics."""

    state: FlowState
    background: BackgroundSolution
    coeffs: CoefficientSet
    sonic_x2: np.ndarray
    sonic_interface: np.ndarray
    sup_gs_minus_ls: float
    mach: np.ndarray
    classification_mismatches: int
    primitives: dict
    residuals: dict
    iterations: int
    converged: bool
    increments: list = field(default_factory=list)
    margins: dict = field(default_factory=dict)
    d0: float = 0.0
    eps_trace: list = field(default_factory=list)


def default_sigma_cap(bg: BackgroundSolution) -> float:
    """Perturbation-amplitude cap ``1e-3 min(S0, |E0|, u0)`` (contraction regime)."""
    return 1e-3 * min(bg.params.S0, abs(bg.E0) if bg.E0 != 0 else bg.u0, bg.u0)


def fixed_point_solve(
    bg: BackgroundSolution,
    bdata: BoundaryDataSpec,
    grid: Grid,
    d0: float | None = None,
    tol_outer: float = DEFAULT_TOL_OUTER,
    max_outer: int = DEFAULT_MAX_OUTER,
    theta: float = 1.0,
    eps0: float = 0.1,
    tol_eps: float = 1e-6,
    eps_cap: int = 20,
    eps_floor_factor: float = 1.0,
    certificate=None,
    override_certificate: bool = False,
    sigma_cap: float | None = None,
    root_tol: float = 1e-12,
    trace_sink=None,
) -> SolveOutcome:
    """Run the damped Picard iteration to a fixed point and extract results.

    Requires either a certified regime report or ``override_certificate``;
    the boundary amplitude must stay below the configured cap.

    Raises
    ------
    InputError
        Missing certificate/cap violations or domain too long (L >= l_max).
    AdmissibilityError
        An iterate left the admissible set (the violated bound and the
        iterate number are named in the message).
    NonConvergenceError
        Divergence persisting after damping reaches its floor, or budget
        exhaustion.
    """
    if grid.L >= bg.l_max:
        raise InputError(f"domain length L={grid.L} must stay below l_max={bg.l_max}")
    if not override_certificate:
        if certificate is None or not getattr(certificate, "certified", False):
            raise InputError(
                "no certified regime report for these parameters; pass "
                "override_certificate=True to proceed anyway"
            )
    cap = default_sigma_cap(bg) if sigma_cap is None else sigma_cap
    if abs(bdata.sigma) > cap:
        raise InputError(f"boundary amplitude sigma={bdata.sigma} exceeds cap {cap}")
    if d0 is None:
        d0 = default_d0(bg, grid)

    state = FlowState.zeros(grid)
    increments: list = []
    eps_trace: list = []
    theta_cur = float(theta)
    converged = False
    iterations = 0
    growth_streak = 0

    for it in range(1, max_outer + 1):
        iterations = it
        m1, _, _ = momentum_field(state, bg, d0, check=False)
        sf = stream_function(m1, grid)
        label = lagrangian_map(sf)
        T_new = transport_entropy(bdata.s_en_minus_s0, label, grid)

        def sink(entry, _it=it):
            entry = dict(entry)
            entry["iterations"] = _it
            eps_trace.append(entry)
            if trace_sink is not None:
                trace_sink(entry)

        psi_new, Psi_new, phi_new, _, _ = solve_linear_problem(
            T_new, state, bdata, bg, grid, d0,
            eps0=eps0, tol_eps=tol_eps, eps_cap=eps_cap,
            eps_floor_factor=eps_floor_factor, trace_sink=sink,
        )
        update = FlowState(psi=psi_new, phi=phi_new, Psi=Psi_new, T=T_new)
        new_state = state.blend(update, theta_cur)
        require_admissible(new_state, bg, d0, context=f"at outer iterate {it}")
        incr = new_state.h1_distance(state)
        increments.append(incr)
        state = new_state
        if incr <= tol_outer:
            converged = True
            break
        if len(increments) >= 2 and incr > increments[-2]:
            growth_streak += 1
            if growth_streak >= 2:
                theta_cur *= 0.5
                growth_streak = 0
                if theta_cur < THETA_FLOOR:
                    raise NonConvergenceError(
                        f"outer iteration diverging after damping floor (iterate {it})"
                    )
        else:
            growth_streak = 0
    if not converged:
        raise NonConvergenceError(f"no outer convergence within {max_outer} iterations")

    coeffs = assemble_coefficients(state, bg, d0)
    x2s, gs = sonic_interface(coeffs, root_tol=root_tol)
    sup_dev = float(np.max(np.abs(gs - bg.l_s)))
    mach, mismatches = mach_field(state, bg, coeffs, gs)
    prim = reconstruct_primitives(state, bg)
    residuals = fixed_point_residuals(state, bg, coeffs, prim)
    margins = check_smallness(state, bg, d0)
    return SolveOutcome(
        state=state,
        background=bg,
        coeffs=coeffs,
        sonic_x2=x2s,
        sonic_interface=gs,
        sup_gs_minus_ls=sup_dev,
        mach=mach,
        classification_mismatches=mismatches,
        primitives=prim,
        residuals=residuals,
        iterations=iterations,
        converged=converged,
        increments=increments,
        margins=margins,
        d0=d0,
        eps_trace=eps_trace,
    )


def sonic_interface(coeffs: CoefficientSet, root_tol: float = 1e-12):
    """Per-line root of the principal determinant ``a11 - a12^2``.

    Asserts exactly one sign change per wall-normal line (elliptic at the
    inlet, hyperbolic at the exit) and refines each root with Brent's
    method (bisection + inverse quadratic interpolation) on a monotone
    interpolant of the determinant profile.
    """
    g = coeffs.grid
    det = coeffs.det_principal()
    gs = np.empty(g.n_x2)
    for j in range(g.n_x2):
        col = det[:, j]
        if not (col[0] > 0 > col[-1]):
            raise InternalError(
                f"type indicator lacks the elliptic->hyperbolic pattern on line x2={g.x2[j]:.4f}"
            )
        signs = np.sign(col)
        changes = np.nonzero(np.diff(signs) != 0)[0]
        crossings = np.nonzero((signs[:-1] > 0) & (signs[1:] < 0))[0]
        if len(changes) != 1 or len(crossings) != 1:
            raise InternalError(
                f"type indicator changes sign {len(changes)} times on line x2={g.x2[j]:.4f}; "
                f"profile head {col[:5]}"
            )
        i = crossings[0]
        prof = PchipInterpolator(g.x1, col)
        gs[j] = brentq(prof, g.x1[i], g.x1[i + 1], xtol=min(root_tol, 1e-10), rtol=8.9e-16)
    return g.x2.copy(), gs


def mach_field(state: FlowState, bg: BackgroundSolution, coeffs: CoefficientSet, gs: np.ndarray):
    """Mach number ``|u| / sqrt(gamma S rho^(gamma-1))`` plus a classification audit.

    Verifies ``sign(1 - M^2) = sign(a11 - a12^2)`` at every node farther
    than one cell from the interface and that M crosses 1 exactly once per
    line; returns ``(M, mismatch_count)``.
    """
    p = bg.params
    g = state.grid
    prof = background_profile(bg, g)
    u1 = prof.u1[:, None] + state.psi.d1() + state.phi.d2()
    u2 = state.psi.d2() - state.phi.d1()
    T = state.T.values()
    Psi = state.Psi.values()
    rho = varrho(T, prof.Phi[:, None] + Psi, u1 ** 2 + u2 ** 2, p)
    sound_sq = p.gamma * (p.S0 + T) * rho ** (p.gamma - 1)
    M = np.sqrt((u1 ** 2 + u2 ** 2) / sound_sq)
    det = coeffs.det_principal()
    away = np.abs(g.x1[:, None] - gs[None, :]) > 1.5 * g.h1
    mismatches = int(np.sum(np.sign(1.0 - M ** 2)[away] != np.sign(det)[away]))
    crossings = np.sum(np.diff(np.sign(M - 1.0), axis=0) != 0, axis=0)
    if np.any(crossings != 1):
        raise InternalError("Mach number does not cross 1 exactly once on some line")
    return M, mismatches


def reconstruct_primitives(state: FlowState, bg: BackgroundSolution) -> dict:
    """Primitive fields and residuals of the original balance laws."""
    p = bg.params
    g = state.grid
    prof = background_profile(bg, g)
    u1 = prof.u1[:, None] + state.psi.d1() + state.phi.d2()
    u2 = state.psi.d2() - state.phi.d1()
    T = state.T.values()
    Psi = state.Psi.values()
    S = p.S0 + T
    Phi = prof.Phi[:, None] + Psi
    rho = varrho(T, Phi, u1 ** 2 + u2 ** 2, p)

    mass = g.D1 @ (rho * u1) + grid_d2_parity_split(rho * u2, g)
    poisson = g.D2 @ (prof.Phi[:, None] + state.Psi.values()) + state.Psi.d22() - (
        rho - p.rho_bar_inf
    )
    vorticity = g.D1 @ u2 - grid_d2_parity_split(u1, g) - rho ** (p.gamma - 1) * state.T.d2() / (
        (p.gamma - 1) * u1
    )
    entropy = rho * (u1 * state.T.d1() + u2 * state.T.d2())
    return {
        "rho": rho,
        "u1": u1,
        "u2": u2,
        "S": S,
        "Phi": Phi,
        "residual_mass": mass,
        "residual_poisson": poisson,
        "residual_vorticity": vorticity,
        "residual_entropy": entropy,
    }


def fixed_point_residuals(
    state: FlowState,
    bg: BackgroundSolution,
    coeffs: CoefficientSet,
    prim: dict,
    margin: float = 0.05,
) -> dict:
    """Sup and L2 residuals of the perturbation system at the fixed point.

    Differential rows are evaluated on the fixed physical interior
    ``margin * L <= x1 <= (1 - margin) * L``: the viscous construction
    forces ``d1(psi) = 0`` at the inlet, a condition the limit problem
    sheds through a sub-grid layer of width ~eps whose H1 content vanishes
    like sqrt(eps) but whose pointwise residual in the first cells does
    not converge.  Interior residuals refine at second order.
    """
    g = state.grid
    mask = (g.x1 >= margin * g.L) & (g.x1 <= (1.0 - margin) * g.L)
    res_psi = (
        coeffs.a11 * state.psi.d11()
        + 2.0 * coeffs.a12 * state.psi.d12()
        + state.psi.d22()
        + coeffs.a * state.psi.d1()
        + coeffs.b1 * state.Psi.d1()
        + coeffs.b0 * state.Psi.values()
        - coeffs.f1
    )[mask]
    res_Psi = (
        state.Psi.d11() + state.Psi.d22()
        - coeffs.c0[:, None] * state.Psi.values()
        - coeffs.c1[:, None] * state.psi.d1()
        - coeffs.f2
    )[mask]
    res_phi = (-(state.phi.d11() + state.phi.d22()) - coeffs.f3)[mask]
    out = {}
    for name, arr in (
        ("psi", res_psi),
        ("Psi", res_Psi),
        ("phi", res_phi),
        ("mass", prim["residual_mass"][mask]),
        ("poisson_Phi", prim["residual_poisson"][mask]),
        ("entropy", prim["residual_entropy"][mask]),
    ):
        out[f"sup_{name}"] = float(np.max(np.abs(arr)))
        out[f"l2_{name}"] = float(np.sqrt(np.mean(arr ** 2)))
    return out
