"""Equilibrium assembly and verification of the decoupling identities.

Builds the state-estimate feedback gains of both players from the Riccati
output, assembles the closed-loop coefficient matrices, reconstructs the
adjoint processes along simulated paths, and evaluates the residuals of
every identity the decoupling rests on: first-order (stationarity)
conditions, drift-matching of the two ansatz substitutions, and the discrete
backward-equation step for the follower's adjoint.

Residuals come in two flavours and are never conflated: algebraic identities
(zero to rounding, tolerance ~1e-8 of scale) and statistical ones (bounded
by 3 standard errors plus an O(dt) discretization allowance).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .filtering import DeterministicPath, FilteredLeaderPath, solve_leader_xhat
from .model import LQModel, sample_at, validate_model
from .riccati import (FollowerRiccati, LeaderBlocks, LeaderRiccati, Sigmas,
                      assemble_leader_blocks, compute_sigmas, solve_follower_P,
                      solve_leader_riccati)
from .simulate import ClosedLoopSystem, TrajectoryEnsemble


@dataclass(frozen=True)
class FeedbackGains:
    """Row gains on the half grid (t = j * dt/2); node values at even indices.

    Leader control:  u2(t) = lx(t) . X(t) + lxhat(t) . Xhat(t),
    filtered leader control:  u2hat(t) = lhat(t) . Xhat(t), lhat = lx + lxhat,
    follower control:  u1(t) = f(t) . Xhat(t).
    """

    lx: np.ndarray
    lxhat: np.ndarray
    lhat: np.ndarray
    f: np.ndarray

    @property
    def lx_nodes(self) -> np.ndarray:
        return self.lx[::2]

    @property
    def lxhat_nodes(self) -> np.ndarray:
        return self.lxhat[::2]

    @property
    def lhat_nodes(self) -> np.ndarray:
        return self.lhat[::2]

    @property
    def f_nodes(self) -> np.ndarray:
        return self.f[::2]


def build_gains(model: LQModel, P: FollowerRiccati, blocks: LeaderBlocks,
                leader: LeaderRiccati, sigmas: Sigmas) -> FeedbackGains:
    """Evaluate both players' feedback rows at every half-grid point."""
    n2 = 2 * model.grid.steps
    D1 = model.nodes("D1", 4)
    D2 = model.nodes("D2", 4)
    cross = blocks.s_inv * D1 * D2 * P.fine

    lx = np.empty((n2 + 1, 2))
    lxhat = np.empty((n2 + 1, 2))
    f = np.empty((n2 + 1, 2))
    for j in range(n2 + 1):
        q = blocks.half_index(j)
        rr = 1.0 / blocks.r2[q]
        p1 = leader.p1_fine[j]
        p2 = leader.p2_at_half(j)
        p12 = p1 + p2
        s1 = sigmas.s1[j]
        lx[j] = -rr * (blocks.d2[q] @ p1 + blocks.d4[q] @ sigmas.s2[j])
        lxhat[j] = -rr * (blocks.d1[q] @ p12 + blocks.d2[q] @ p2
                          + blocks.d3[q] @ s1 + blocks.d4[q] @ sigmas.s3[j] + blocks.d5[q])
        d12 = blocks.d1[q] + blocks.d2[q]
        d34 = blocks.d3[q] + blocks.d4[q]
        f[j] = blocks.a6[q] + blocks.b2[q] @ p12 + cross[q] * rr * (d12 @ p12 + d34 @ s1 + blocks.d5[q])
    return FeedbackGains(lx=lx, lxhat=lxhat, lhat=lx + lxhat, f=f)


def closed_loop_matrices(blocks: LeaderBlocks, leader: LeaderRiccati, sigmas: Sigmas):
    """Node-sampled drift/diffusion coefficient matrices of the closed loop."""
    n = leader.grid.steps
    fx = np.empty((n + 1, 2, 2))
    fxh = np.empty((n + 1, 2, 2))
    gx = np.empty((n + 1, 2, 2))
    gxh = np.empty((n + 1, 2, 2))
    p1n = leader.p1
    for k in range(n + 1):
        q = blocks.node_index(k)
        j = 2 * k
        rr = 1.0 / blocks.r2[q]
        p1 = p1n[k]
        p2 = leader.p2[k]
        p12 = p1 + p2
        s1 = sigmas.s1[j]
        s2 = sigmas.s2[j]
        s3 = sigmas.s3[j]
        d1 = blocks.d1[q]
        d2 = blocks.d2[q]
        d3 = blocks.d3[q]
        d4 = blocks.d4[q]
        d5 = blocks.d5[q]
        d12 = d1 + d2
        d34 = d3 + d4
        bb = blocks.b1[q] - np.outer(d2, d2) * rr
        cc = blocks.c1[q] - np.outer(d2, d4) * rr
        cct = blocks.c1[q].T - np.outer(d4, d2) * rr
        fx[k] = blocks.a1[q] + bb @ p1 + cc @ s2
        fxh[k] = (blocks.a2[q] - np.outer(d12, d5) * rr + bb @ p2
                  - (np.outer(d1, d12) + np.outer(d2, d1)) * rr @ p12
                  + cc @ s3 - (np.outer(d1, d34) + np.outer(d2, d3)) * rr @ s1)
        gx[k] = blocks.a3[q] + cct @ p1 - np.outer(d4, d4) * rr @ s2
        gxh[k] = (blocks.a4[q] - np.outer(d34, d5) * rr + cct @ p2
                  - (np.outer(d3, d12) + np.outer(d4, d1)) * rr @ p12
                  - np.outer(d4, d4) * rr @ s3
                  - (np.outer(d3, d34) + np.outer(d4, d3)) * rr @ s1)
    return fx, fxh, gx, gxh


@dataclass(frozen=True)
class EquilibriumSolution:
    """Everything the closed-loop equilibrium needs, solved once per model."""

    model: LQModel
    P: FollowerRiccati
    blocks: LeaderBlocks
    leader: LeaderRiccati
    sigmas: Sigmas
    gains: FeedbackGains
    xhat: FilteredLeaderPath

    def closed_loop(self) -> ClosedLoopSystem:
        fx, fxh, gx, gxh = closed_loop_matrices(self.blocks, self.leader, self.sigmas)
        return ClosedLoopSystem(
            grid=self.model.grid, drift_x=fx, drift_xhat=fxh, diff_x=gx, diff_xhat=gxh,
            lx=self.gains.lx_nodes, lxhat=self.gains.lxhat_nodes, f=self.gains.f_nodes,
            xhat=self.xhat,
        )

    def u1_path(self) -> DeterministicPath:
        """The follower's equilibrium control (deterministic along the filter)."""
        vals = np.einsum("ji,ji->j", self.gains.f, self._xhat_half())
        return DeterministicPath(nodes=vals[::2], mids=vals[1::2])

    def u2hat_path(self) -> DeterministicPath:
        """The leader's filtered equilibrium control."""
        vals = np.einsum("ji,ji->j", self.gains.lhat, self._xhat_half())
        return DeterministicPath(nodes=vals[::2], mids=vals[1::2])

    def theta_hat_path(self) -> DeterministicPath:
        """Filtered offset reconstructed from the estimate coupling."""
        n2 = 2 * self.model.grid.steps
        vals = np.empty(n2 + 1)
        for j in range(n2 + 1):
            p12 = self.leader.p1_fine[j] + self.leader.p2_at_half(j)
            vals[j] = p12[1] @ self._xhat_half()[j]
        return DeterministicPath(nodes=vals[::2], mids=vals[1::2])

    def xhat_scalar_path(self) -> DeterministicPath:
        """First component of the filtered augmented state."""
        return DeterministicPath(nodes=self.xhat.nodes[:, 0], mids=self.xhat.mids[:, 0])

    def _xhat_half(self) -> np.ndarray:
        n = self.model.grid.steps
        out = np.empty((2 * n + 1, 2))
        out[::2] = self.xhat.nodes
        out[1::2] = self.xhat.mids
        return out


def solve_equilibrium(model: LQModel, *, det_tol: float = 1e-10,
                      blow_up_factor: float = 1e8) -> EquilibriumSolution:
    """Run the full deterministic pipeline for a validated model."""
    validate_model(model)
    P = solve_follower_P(model, blow_up_factor=blow_up_factor)
    blocks = assemble_leader_blocks(model, P)
    leader = solve_leader_riccati(model, blocks, det_tol=det_tol, blow_up_factor=blow_up_factor)
    sigmas = compute_sigmas(blocks, leader, det_tol=det_tol)
    gains = build_gains(model, P, blocks, leader, sigmas)
    xhat = solve_leader_xhat(model, blocks, leader, sigmas)
    return EquilibriumSolution(model=model, P=P, blocks=blocks, leader=leader,
                               sigmas=sigmas, gains=gains, xhat=xhat)


@dataclass(frozen=True)
class AdjointReconstruction:
    """Adjoint processes recovered algebraically along simulated paths.

    p, k: follower adjoint pair per path and node.
    y, z: leader adjoint pair (2-vectors) per path and node.
    zhat: filtered leader adjoint diffusion (shared across paths).
    The second component of z is a structural zero.
    """

    p: np.ndarray
    k: np.ndarray
    y: np.ndarray
    z: np.ndarray
    zhat: np.ndarray


def reconstruct_adjoints(eq: EquilibriumSolution, ens: TrajectoryEnsemble,
                         theta: np.ndarray) -> AdjointReconstruction:
    """Evaluate the decoupling ansatz quantities on a closed-loop ensemble."""
    model = eq.model
    n = model.grid.steps
    m = ens.m
    pn = eq.P.values
    C = model.nodes("C")
    D1 = model.nodes("D1")
    D2 = model.nodes("D2")

    u1 = np.broadcast_to(ens.u1, (m, n + 1)) if ens.u1.ndim == 1 else ens.u1
    p = pn[None, :] * ens.x + theta
    k = pn[None, :] * (C[None, :] * ens.x + D1[None, :] * u1 + D2[None, :] * ens.u2)

    xh = eq.xhat.nodes
    y = np.empty((m, n + 1, 2))
    z = np.empty((m, n + 1, 2))
    zhat = np.empty((n + 1, 2))
    X = np.stack([ens.x, ens.q], axis=-1)
    p1n = eq.leader.p1
    s1n = eq.sigmas.s1_nodes
    s2n = eq.sigmas.s2_nodes
    s3n = eq.sigmas.s3_nodes
    for j in range(n + 1):
        y[:, j] = X[:, j] @ p1n[j].T + eq.leader.p2[j] @ xh[j]
        z[:, j] = X[:, j] @ s2n[j].T + s3n[j] @ xh[j]
        zhat[j] = s1n[j] @ xh[j]
    return AdjointReconstruction(p=p, k=k, y=y, z=z, zhat=zhat)


@dataclass(frozen=True)
class ResidualStats:
    """Per-node residual with optional Monte-Carlo standard errors."""

    residual: np.ndarray
    stderr: np.ndarray | None
    scale: float

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.residual)))

    @property
    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.residual ** 2)))


def follower_stationarity_residual(eq: EquilibriumSolution, ens: TrajectoryEnsemble,
                                   recon: AdjointReconstruction) -> ResidualStats:
    """First-order condition of the follower along the equilibrium.

    r(t) = R1 u1 + B1 E[p | obs] + D1 E[k | obs]; the conditional means are
    plain ensemble means because the observation is uninformative about the
    state noise.  Statistical residual: compare against 3 stderr + O(dt).
    """
    model = eq.model
    m = ens.m
    B1 = model.nodes("B1")
    D1 = model.nodes("D1")
    R1 = model.nodes("R1")
    u1 = ens.u1 if ens.u1.ndim == 1 else ens.u1.mean(axis=0)
    combo = B1[None, :] * recon.p + D1[None, :] * recon.k
    mean = combo.mean(axis=0)
    stderr = combo.std(axis=0, ddof=1) / np.sqrt(m) if m > 1 else np.zeros_like(mean)
    residual = R1 * u1 + mean
    scale = float(np.max(np.abs(R1 * u1) + np.abs(mean)) + 1e-300)
    return ResidualStats(residual=residual, stderr=stderr, scale=scale)


@dataclass(frozen=True)
class LeaderStationarity:
    """Leader first-order condition residuals, algebraic and statistical.

    algebraic: max over paths/nodes of the residual with the filtered
    quantities read from the reconstructions (zero up to rounding).
    statistical: per-node residual using ensemble-mean filtered quantities,
    with its standard error.
    """

    algebraic_max: float
    scale: float
    statistical: ResidualStats


def leader_stationarity_residual(eq: EquilibriumSolution, ens: TrajectoryEnsemble,
                                 recon: AdjointReconstruction) -> LeaderStationarity:
    blocks = eq.blocks
    model = eq.model
    n = model.grid.steps
    m = ens.m
    xh = eq.xhat.nodes
    p1n = eq.leader.p1

    R2 = model.nodes("R2")
    qn = blocks.node_index(np.arange(n + 1))
    c_phi = blocks.d2[qn, 0]
    c_delta = blocks.d4[qn, 0]
    c_phih = blocks.d1[qn, 0]
    c_deltah = blocks.d3[qn, 0]
    c_qh = blocks.d5[qn, 1]

    phi = recon.y[:, :, 0]
    delta = recon.z[:, :, 0]
    phih_rec = np.array([(p1n[j] + eq.leader.p2[j])[0] @ xh[j] for j in range(n + 1)])
    deltah_rec = recon.zhat[:, 0]
    qh_rec = xh[:, 1]

    base = R2[None, :] * ens.u2 + c_phi[None, :] * phi + c_delta[None, :] * delta
    algebraic = base + (c_phih * phih_rec + c_deltah * deltah_rec + c_qh * qh_rec)[None, :]
    scale = float(np.max(np.abs(R2[None, :] * ens.u2)) + np.max(np.abs(c_phi[None, :] * phi)) + 1e-300)

    phih_mc = phi.mean(axis=0)
    deltah_mc = delta.mean(axis=0)
    qh_mc = ens.q.mean(axis=0)
    stat = base.mean(axis=0) + c_phih * phih_mc + c_deltah * deltah_mc + c_qh * qh_mc
    spread = (base + (c_phih[None, :] * phi + c_deltah[None, :] * delta + c_qh[None, :] * ens.q))
    stderr = spread.std(axis=0, ddof=1) / np.sqrt(m) if m > 1 else np.zeros_like(stat)
    return LeaderStationarity(
        algebraic_max=float(np.max(np.abs(algebraic))),
        scale=scale,
        statistical=ResidualStats(residual=stat, stderr=stderr, scale=scale),
    )


@dataclass(frozen=True)
class DriftResiduals:
    """Residual coefficient grids of the two drift-matching identities.

    Interior nodes only (time derivatives by central differences).  The
    follower identity is grouped by what each coefficient multiplies; only
    the state coefficient carries the O(dt^2) differencing signal, the other
    groups cancel algebraically.  The leader identity is grouped by the raw
    augmented state and its estimate; both vanish at O(dt^2) when the two
    backward equations hold.
    """

    times: np.ndarray
    follower_x: np.ndarray
    follower_xhat: np.ndarray
    follower_u2: np.ndarray
    follower_u2hat: np.ndarray
    follower_theta_hat: np.ndarray
    leader_x: np.ndarray
    leader_xhat: np.ndarray

    @property
    def follower_max(self) -> float:
        return float(np.max(np.abs(self.follower_x)))

    @property
    def leader_max(self) -> float:
        return float(max(np.max(np.abs(self.leader_x)), np.max(np.abs(self.leader_xhat))))


def drift_residuals(eq: EquilibriumSolution) -> DriftResiduals:
    model = eq.model
    n = model.grid.steps
    dt = model.grid.dt
    blocks = eq.blocks

    A = model.nodes("A")
    B1 = model.nodes("B1")
    B2 = model.nodes("B2")
    C = model.nodes("C")
    D1 = model.nodes("D1")
    D2 = model.nodes("D2")
    Q1 = model.nodes("Q1")
    pn = eq.P.values
    si = blocks.s_inv[::blocks.refine]
    bc = B1 + D1 * C

    inner = slice(1, n)
    dp = (pn[2:] - pn[:-2]) / (2.0 * dt)
    fol_x = dp + (2.0 * A * pn + C * C * pn - si * bc * bc * pn * pn + Q1)[inner]
    # Coefficient groups that cancel identically once the control substitution
    # and the offset drift are inserted; kept as an honesty check.
    cd = C * D1 * pn + pn * B1
    fol_xhat = (cd * si * bc * pn - bc * bc * si * pn * pn)[inner]
    fol_u2 = (-(C * D2 * pn + pn * B2) + (B2 + D2 * C) * pn)[inner]
    fol_u2hat = (cd * si * D1 * D2 * pn - bc * si * D1 * D2 * pn * pn)[inner]
    fol_theta_hat = (cd * si * B1 - bc * si * B1 * pn)[inner]

    p1n = eq.leader.p1
    p2n = eq.leader.p2
    s1n = eq.sigmas.s1_nodes
    s2n = eq.sigmas.s2_nodes
    s3n = eq.sigmas.s3_nodes
    lead_x = np.empty((n - 1, 2, 2))
    lead_xh = np.empty((n - 1, 2, 2))
    for k in range(1, n):
        q = blocks.node_index(k)
        rr = 1.0 / blocks.r2[q]
        p1 = p1n[k]
        p2 = p2n[k]
        p12 = p1 + p2
        d1 = blocks.d1[q]
        d2 = blocks.d2[q]
        d3 = blocks.d3[q]
        d4 = blocks.d4[q]
        d5 = blocks.d5[q]
        d12 = d1 + d2
        d34 = d3 + d4
        a1 = blocks.a1[q]
        a2 = blocks.a2[q]
        a3 = blocks.a3[q]
        c1 = blocks.c1[q]
        bb = blocks.b1[q] - np.outer(d2, d2) * rr
        dp1 = (p1n[k + 1] - p1n[k - 1]) / (2.0 * dt)
        dp2 = (p2n[k + 1] - p2n[k - 1]) / (2.0 * dt)

        lead_x[k - 1] = (dp1 + p1 @ a1 + a1 @ p1 + p1 @ bb @ p1
                         + (p1 @ (c1 - np.outer(d2, d4) * rr) + a3) @ s2n[k] + blocks.a5[q])
        term = p1 @ (a2 - np.outer(d12, d5) * rr)
        term += p1 @ bb @ p2
        term -= p1 @ (np.outer(d1, d12) + np.outer(d2, d1)) * rr @ p12
        term += p1 @ (c1 - np.outer(d2, d4) * rr) @ s3n[k]
        term -= p1 @ (np.outer(d1, d34) + np.outer(d2, d3)) * rr @ s1n[k]
        term += dp2
        term += p2 @ (a1 + a2 - np.outer(d12, d5) * rr)
        term += p2 @ (blocks.b1[q] - np.outer(d12, d12) * rr) @ p12
        term += p2 @ (c1 - np.outer(d12, d34) * rr) @ s1n[k]
        term += a1 @ p2
        term += (a2 - np.outer(d5, d12) * rr) @ p12
        term += a3 @ s3n[k]
        term += (blocks.a4[q] - np.outer(d5, d34) * rr) @ s1n[k]
        term -= np.outer(d5, d5) * rr
        lead_xh[k - 1] = term

    return DriftResiduals(
        times=model.grid.times()[inner],
        follower_x=fol_x, follower_xhat=fol_xhat, follower_u2=fol_u2,
        follower_u2hat=fol_u2hat, follower_theta_hat=fol_theta_hat,
        leader_x=lead_x, leader_xhat=lead_xh,
    )


def hamiltonian_H1(model: LQModel, x: float, u1: float, u2: float,
                   p: float, k: float, t: float) -> float:
    """Follower Hamiltonian: drift . p + diffusion . k + running cost."""
    g = model.grid
    A = sample_at(model.A, t, g)
    B1 = sample_at(model.B1, t, g)
    B2 = sample_at(model.B2, t, g)
    C = sample_at(model.C, t, g)
    D1 = sample_at(model.D1, t, g)
    D2 = sample_at(model.D2, t, g)
    Q1 = sample_at(model.Q1, t, g)
    R1 = sample_at(model.R1, t, g)
    return ((A * x + B1 * u1 + B2 * u2) * p + (C * x + D1 * u1 + D2 * u2) * k
            + 0.5 * Q1 * x * x + 0.5 * R1 * u1 * u1)


@dataclass(frozen=True)
class BsdeResidual:
    """Discrete backward-step residual of the follower adjoint, per path.

    step_residual[i, k] = p_{k+1} - p_k + (Q1 x_k + A p_k + C k_k) dt - k_k dW_k;
    time_summed[i] accumulates the steps; rms is over paths of the sum.
    Shrinks at first order when the grid is refined.
    """

    time_summed: np.ndarray
    rms: float


def bsde_residual(eq: EquilibriumSolution, ens: TrajectoryEnsemble,
                  recon: AdjointReconstruction) -> BsdeResidual:
    model = eq.model
    dt = model.grid.dt
    A = model.nodes("A")[:-1]
    C = model.nodes("C")[:-1]
    Q1 = model.nodes("Q1")[:-1]
    p = recon.p
    k = recon.k[:, :-1]
    steps = (p[:, 1:] - p[:, :-1]
             + (Q1[None, :] * ens.x[:, :-1] + A[None, :] * p[:, :-1] + C[None, :] * k) * dt
             - k * ens.noise.dw)
    summed = steps.sum(axis=1)
    return BsdeResidual(time_summed=summed, rms=float(np.sqrt(np.mean(summed ** 2))))
