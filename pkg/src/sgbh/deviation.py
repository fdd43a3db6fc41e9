"""Moderate-deviation machinery: speed functions, the minimum-energy rate
function over the skeleton dynamics, controllability Gramians, and tail
(tightness) reports.

The rate function for an endpoint target psi is

    I(psi) = inf { (1/2) int_0^T ||hdot(s)||^2 ds  :  Z_h(T) = psi },

where h -> Z_h is the (linear) skeleton solve.  Discretely Z_h(T) = Phi h for
a linear map Phi from piecewise-constant controls to endpoint coefficients,
and the infimum is attained by the minimum-norm least-squares solution
h* = Phi^+ psi, computed with LSQR (Golub-Kahan bidiagonalization, the
numerically stable form of CG on the normal equations; it handles targets
outside the reachable subspace by converging to the projection).  The
adjoint Phi* is the exact discrete adjoint of the forward scheme
(transposed dynamics run backward in time), so <Phi h, w> = <h, Phi* w>
holds to roundoff, and LSQR's iterate norms increase monotonically, so the
value estimate (1/2)||h_m||^2 grows to I(psi) -- in particular it never
exceeds the action of any feasible control.
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, lsqr

from .model import noise_coefficient_eval
from .noise import ControlPath, NoiseSpec
from .solvers import SolverEngine, _check_traj

__all__ = [
    "SpeedFunction",
    "RateFunctionResult",
    "TailReport",
    "EndpointControlMap",
    "rate_function_endpoint",
    "controllability_gramian",
    "mdp_tail_estimate",
    "tail_report",
    "wilson_interval",
]


@dataclass(frozen=True)
class SpeedFunction:
    """Power-law moderate-deviation speed lambda(eps) = eps^(-theta).

    The genuine MDP regime is 0 < theta < 1/2 (lambda -> infinity while
    sqrt(eps)*lambda -> 0); theta = 0 is admitted as the CLT scale lambda == 1.
    """

    theta: float

    def __post_init__(self):
        if not 0 <= self.theta < 0.5:
            raise ValueError(f"theta must lie in [0, 1/2), got {self.theta}")

    def __call__(self, eps):
        if eps <= 0:
            raise ValueError(f"eps must be > 0, got {eps}")
        return float(eps) ** (-self.theta)

    @property
    def is_mdp_scale(self):
        return 0 < self.theta < 0.5

    def check_sequence(self, eps_seq):
        """On a decreasing eps sequence: lambda increases, sqrt(eps)*lambda decreases."""
        eps = np.asarray(eps_seq, dtype=float)
        if np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
            raise ValueError("eps_seq must be positive and strictly decreasing")
        lam = eps ** (-self.theta)
        return bool(np.all(np.diff(lam) >= 0) and np.all(np.diff(np.sqrt(eps) * lam) <= 0))


@dataclass
class RateFunctionResult:
    value: float
    control: ControlPath
    endpoint_residual: float
    iterations: int
    converged: bool

    def to_dict(self, control_file=None):
        return {
            "value": self.value,
            "endpoint_residual": self.endpoint_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "control_file": control_file,
        }

    def to_json(self, control_file=None):
        return json.dumps(self.to_dict(control_file), indent=2)


class EndpointControlMap:
    """Discrete linear map Phi: control -> skeleton endpoint, with exact adjoint.

    Forward marches the skeleton scheme
        z_{k+1} = E (z_k + dt L_k z_k + dt C_k hdot_k),
    adjoint runs the transposed recursion backward:
        rho_K = w;  (Phi* w)_k = C_k^T E rho_{k+1};  rho_k = (I + dt L_k^T) E rho_{k+1},
    with the control inner product <h, g> = sum_k dt hdot_k . gdot_k.
    """

    def __init__(self, u0_traj, params, g, cfg, noise_spec=None):
        _check_traj(u0_traj, cfg)
        spec = noise_spec if noise_spec is not None else NoiseSpec(n_modes=cfg.n_modes)
        self.eng = SolverEngine(params, cfg, g=g, noise_spec=spec)
        self.n_steps = cfg.n_steps
        self.n_control_modes = spec.n_modes
        self.u0_grid = u0_traj.grid_values()
        self.p1, self.c1 = self.eng.linearization_profiles(self.u0_grid)

    def forward(self, hdot):
        """Endpoint coefficients Z_h(T) for hdot of shape (J_noise, n_steps)."""
        eng = self.eng
        dt = eng.dt
        z = np.zeros(eng.cfg.n_modes)
        for k in range(self.n_steps):
            z_grid = eng.grid_values(z)
            lin = eng.linearized_drift(
                z_grid,
                None if self.p1 is None else self.p1[k],
                None if self.c1 is None else self.c1[k],
            )
            ctl = eng.forcing_term(k * dt, self.u0_grid[k], hdot[:, k])
            # same op order as the skeleton solver so endpoints agree bitwise
            z = eng.semigroup * (z + dt * lin + dt * ctl)
        return z

    def adjoint(self, w):
        """(Phi* w) of shape (J_noise, n_steps)."""
        eng = self.eng
        p = eng.params
        dt = eng.dt
        q = eng.q[: self.n_control_modes]
        phi_n = eng.phi[: self.n_control_modes]
        out = np.empty((self.n_control_modes, self.n_steps))
        rho = np.asarray(w, dtype=float)
        for k in range(self.n_steps - 1, -1, -1):
            e_rho = eng.semigroup * rho
            rho_grid = e_rho @ eng.phi
            gv = noise_coefficient_eval(eng.g, k * dt, eng.grid.nodes, self.u0_grid[k])
            out[:, k] = eng.h * (q * (phi_n @ (gv * rho_grid)))
            lt = 0.0
            if self.c1 is not None:
                lt = eng.project(self.c1[k] * rho_grid)
            if self.p1 is not None:
                adv = (p.alpha / (p.delta + 1)) * eng.project(
                    self.p1[k] * (e_rho @ eng.dphi)
                )
                lt = adv if isinstance(lt, float) else lt + adv
            rho = e_rho if isinstance(lt, float) else e_rho + dt * lt
        return out

    def control_path(self, hdot):
        return ControlPath(dt=self.eng.dt, n_steps=self.n_steps, hdot=hdot)


def _target_coeffs(target, eng):
    from .spectral import Field, to_spectral

    if isinstance(target, Field):
        return to_spectral(target, eng.basis).data
    target = np.asarray(target, dtype=float)
    if target.shape != (eng.cfg.n_modes,):
        raise ValueError(f"target must have {eng.cfg.n_modes} coefficients")
    return target


def rate_function_endpoint(target, u0_traj, params, g, cfg, tol=1e-8, noise_spec=None, max_iterations=None):
    """Minimum Cameron-Martin action over controls steering the skeleton to ``target``.

    Runs LSQR on the Cameron-Martin-weighted operator (controls are scaled
    by sqrt(dt) so the Euclidean norm of the unknown is the control norm)
    and returns the achieved control, its action as the value, and the
    endpoint residual ||Phi h - psi||_2 (the L^2 distance, by Parseval).
    ``converged`` records whether the residual ended below tol * ||psi||;
    targets outside the numerically reachable subspace surface as a large
    residual with the control steering to the reachable projection.
    """
    cmap = EndpointControlMap(u0_traj, params, g, cfg, noise_spec=noise_spec)
    psi = _target_coeffs(target, cmap.eng)
    jc, k_steps = cmap.n_control_modes, cmap.n_steps
    if max_iterations is None:
        max_iterations = 10 * jc * k_steps

    b_norm = float(np.linalg.norm(psi))
    if b_norm == 0.0:
        control = cmap.control_path(np.zeros((jc, k_steps)))
        return RateFunctionResult(0.0, control, 0.0, 0, True)

    root_dt = np.sqrt(cmap.eng.dt)
    op = LinearOperator(
        shape=(cmap.eng.cfg.n_modes, jc * k_steps),
        matvec=lambda x: cmap.forward(x.reshape(jc, k_steps) / root_dt),
        rmatvec=lambda w: (root_dt * cmap.adjoint(w)).ravel(),
    )
    # stop a notch below tol so the recomputed residual decides convergence
    x, _istop, itn = lsqr(op, psi, atol=0.1 * tol, btol=0.1 * tol, iter_lim=max_iterations)[:3]
    hdot = x.reshape(jc, k_steps) / root_dt
    control = cmap.control_path(hdot)
    value = control.action()
    residual = float(np.linalg.norm(cmap.forward(hdot) - psi))
    return RateFunctionResult(value, control, residual, int(itn), residual <= tol * b_norm)


def controllability_gramian(u0_traj, params, g, cfg, mode_cap, noise_spec=None):
    """Dense Gramian (Phi Phi*) restricted to the first mode_cap endpoint modes."""
    if mode_cap > 16:
        raise ValueError(f"mode_cap must be <= 16 for dense assembly, got {mode_cap}")
    if mode_cap > cfg.n_modes:
        raise ValueError(f"mode_cap {mode_cap} exceeds n_modes {cfg.n_modes}")
    cmap = EndpointControlMap(u0_traj, params, g, cfg, noise_spec=noise_spec)
    m = np.empty((mode_cap, mode_cap))
    for i in range(mode_cap):
        e = np.zeros(cfg.n_modes)
        e[i] = 1.0
        m[:, i] = cmap.forward(cmap.adjoint(e))[:mode_cap]
    return 0.5 * (m + m.T)  # symmetrize roundoff


def wilson_interval(successes, n, z=1.96):
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("n must be positive")
    phat = successes / n
    denom = 1.0 + z**2 / n
    center = (phat + z**2 / (2 * n)) / denom
    half = (z / denom) * np.sqrt(phat * (1 - phat) / n + z**2 / (4 * n**2))
    return max(0.0, center - half), min(1.0, center + half)


@dataclass
class TailReport:
    """Empirical tail probabilities P(sup_t ||Z(t)||_p > rho) per (eps, rho)."""

    eps_list: list
    rho_list: list
    n_paths: list
    counts: np.ndarray  # (n_eps, n_rho) exceedance counts
    p_norm: int

    @property
    def p_hat(self):
        n = np.asarray(self.n_paths, dtype=float)[:, None]
        return self.counts / n

    def wilson_bounds(self):
        lo = np.empty_like(self.counts, dtype=float)
        hi = np.empty_like(self.counts, dtype=float)
        for i, n in enumerate(self.n_paths):
            for j in range(len(self.rho_list)):
                lo[i, j], hi[i, j] = wilson_interval(self.counts[i, j], n)
        return lo, hi

    def monotone_in_rho(self):
        """Estimates are non-increasing in rho for each eps (nested events)."""
        return bool(np.all(np.diff(self.p_hat, axis=1) <= 0))

    def to_dict(self):
        lo, hi = self.wilson_bounds()
        return {
            "p_norm": self.p_norm,
            "rho": list(map(float, self.rho_list)),
            "per_eps": [
                {
                    "eps": float(e),
                    "n_paths": int(n),
                    "exceed_counts": [int(c) for c in self.counts[i]],
                    "p_hat": [float(x) for x in self.p_hat[i]],
                    "wilson_lo": [float(x) for x in lo[i]],
                    "wilson_hi": [float(x) for x in hi[i]],
                }
                for i, (e, n) in enumerate(zip(self.eps_list, self.n_paths))
            ],
            "monotone_in_rho": self.monotone_in_rho(),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self, path):
        lo, hi = self.wilson_bounds()
        with open(path, "w") as fh:
            fh.write("eps,rho,n_paths,n_exceed,p_hat,wilson_lo,wilson_hi\n")
            for i, (e, n) in enumerate(zip(self.eps_list, self.n_paths)):
                for j, rho in enumerate(self.rho_list):
                    fh.write(
                        f"{float(e)!r},{float(rho)!r},{int(n)},{int(self.counts[i, j])},"
                        f"{float(self.p_hat[i, j])!r},{float(lo[i, j])!r},{float(hi[i, j])!r}\n"
                    )


def tail_report(sup_norms_by_eps, rho_list, p_norm):
    """Build a TailReport from per-eps arrays of sup-in-time L^p norms."""
    rho_list = [float(r) for r in np.atleast_1d(rho_list)]
    eps_list, n_paths, rows = [], [], []
    for eps, sups in sup_norms_by_eps.items():
        sups = np.asarray(sups, dtype=float)
        if sups.size == 0:
            raise ValueError(f"empty ensemble for eps={eps}")
        eps_list.append(float(eps))
        n_paths.append(int(sups.size))
        rows.append([int(np.sum(sups > rho)) for rho in rho_list])
    return TailReport(
        eps_list=eps_list,
        rho_list=rho_list,
        n_paths=n_paths,
        counts=np.asarray(rows, dtype=int),
        p_norm=p_norm,
    )


def mdp_tail_estimate(ensemble, rho, p_norm=None):
    """Tail estimate from trajectories.

    ``ensemble`` is either a list of Z trajectories (single unnamed eps group)
    or a dict mapping eps -> list of trajectories.  ``rho`` is a threshold or
    a list of thresholds.
    """
    if isinstance(ensemble, dict):
        groups = ensemble
    else:
        groups = {1.0: list(ensemble)}
    sups = {}
    p_used = None
    for eps, trajs in groups.items():
        if len(trajs) == 0:
            raise ValueError(f"empty ensemble for eps={eps}")
        vals = []
        for tr in trajs:
            p = p_norm or tr.norm_p or 2
            p_used = p
            norms = tr.norms if (tr.norms is not None and p == tr.norm_p) else tr.lp_norms(p)
            vals.append(float(np.max(norms)))
        sups[eps] = np.asarray(vals)
    return tail_report(sups, rho, p_used)
