"""Command-line pipeline: validate | solve | simulate | verify.

JSON problem files in, CSV artifacts out.  Exit codes: 0 ok, 1 validation
failure, 2 parse failure, 3 solver failure (Riccati blow-up or a gain
inverse degenerating, with the failing time in the message), 4 verification
failure (the report is still written).

Every output is a pure function of the problem file, the flags and the seed;
reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from . import costs as costs_mod
from . import equilibrium as eq_mod
from . import reporting
from .errors import (H3Violated, LQStackError, M1NotInvertible, M2NotInvertible,
                     ModelValidationError, ParseError, RiccatiBlowUp)
from .filtering import solve_follower_filter
from .model import LQModel, check_hypotheses, load_model
from .riccati import solve_follower_P
from .simulate import backfill_theta, density_process, generate_noise, simulate_closed_loop

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_PARSE = 2
EXIT_SOLVER = 3
EXIT_VERIFY = 4


@dataclass(frozen=True)
class Tolerances:
    """Verification tolerances; defaults match the module contracts.

    Algebraic identities are relative bounds; statistical checks use
    stderr_mult standard errors plus dt_coeff * dt * scale for the
    first-order discretization bias of the Euler ensemble.
    """

    det_tol: float = 1e-10
    blow_up_factor: float = 1e8
    algebraic_rel: float = 1e-8
    gain_rel: float = 1e-10
    structural_rel: float = 1e-9
    sigma_rel: float = 1e-12
    drift_coeff: float = 200.0
    stderr_mult: float = 3.0
    dt_coeff: float = 2.0
    grid_stderr_mult: float = 2.0

    def override(self, pairs: dict[str, float]) -> "Tolerances":
        unknown = set(pairs) - set(self.__dataclass_fields__)
        if unknown:
            raise ParseError(f"unknown tolerance name(s): {', '.join(sorted(unknown))}")
        return replace(self, **pairs)


@dataclass(frozen=True)
class RunConfig:
    model_path: str
    out_dir: str = "."
    seed: int = 42
    paths: int = 20000
    steps: int | None = None
    eps: tuple = (0.05, 0.1, 0.2)
    tolerances: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        if self.paths < 1:
            raise ParseError(f"paths must be >= 1, got {self.paths}")
        if self.steps is not None and self.steps < 2:
            raise ParseError(f"steps must be >= 2, got {self.steps}")
        if any(e == 0.0 for e in self.eps):
            raise ParseError("epsilon values must be nonzero")


def _load(config: RunConfig) -> LQModel:
    return load_model(config.model_path, steps_override=config.steps)


def cmd_validate(config: RunConfig) -> int:
    """Print one pass/fail line per standing hypothesis."""
    model = _load(config)
    report = check_hypotheses(model)
    ok = True
    for name in ("H1", "H2", "H4"):
        violations = report[name]
        status = "PASS" if not violations else "FAIL"
        ok &= not violations
        detail = "" if not violations else " (" + "; ".join(f"{v.error}: {v.detail}" for v in violations) + ")"
        print(f"({name}) {status}{detail}")
    if ok:
        try:
            P = solve_follower_P(model)
            print("(H3) PASS")
        except (H3Violated, RiccatiBlowUp) as exc:
            print(f"(H3) FAIL ({exc})")
            ok = False
    else:
        print("(H3) SKIPPED (requires a valid model)")
    return EXIT_OK if ok else EXIT_VALIDATION


def _solve(config: RunConfig, model: LQModel) -> eq_mod.EquilibriumSolution:
    tol = config.tolerances
    return eq_mod.solve_equilibrium(model, det_tol=tol.det_tol, blow_up_factor=tol.blow_up_factor)


def cmd_solve(config: RunConfig) -> int:
    """Run the deterministic pipeline and write riccati/gains/xhat CSVs."""
    model = _load(config)
    eq = _solve(config, model)
    times = model.grid.times()
    reporting.ensure_dir(config.out_dir)
    out = lambda name: f"{config.out_dir}/{name}"
    fp = solve_follower_filter(model, eq.P, eq.u2hat_path())
    reporting.write_riccati_csv(out("riccati.csv"), times, eq.P.values, eq.leader.p1, eq.leader.p2)
    reporting.write_gains_csv(out("gains.csv"), times, eq.gains)
    reporting.write_xhat_csv(out("xhat.csv"), times, fp, eq.xhat)
    print(f"solved: P(0)={eq.P.values[0]!r}, min|det| gain guards: "
          f"{eq.leader.min_det_m1!r}, {eq.leader.min_det_m2!r}")
    print(f"wrote {out('riccati.csv')}, {out('gains.csv')}, {out('xhat.csv')}")
    return EXIT_OK


def cmd_simulate(config: RunConfig) -> int:
    """Closed-loop Monte-Carlo run: trajectories.csv and costs.csv."""
    model = _load(config)
    eq = _solve(config, model)
    noise = generate_noise(config.seed, config.paths, model.grid)
    ens = simulate_closed_loop(eq.closed_loop(), noise)
    j1 = costs_mod.estimate_J1(model, ens)
    j2 = costs_mod.estimate_J2(model, ens)
    reporting.ensure_dir(config.out_dir)
    reporting.write_trajectories_csv(f"{config.out_dir}/trajectories.csv", ens)
    reporting.write_costs_csv(f"{config.out_dir}/costs.csv", [j1, j2])
    print(f"J1 = {j1.mean!r} (stderr {j1.stderr!r}), J2 = {j2.mean!r} (stderr {j2.stderr!r}), M = {config.paths}")
    return EXIT_OK


def _verify_rows(config: RunConfig, model: LQModel, eq, noise, ens) -> list[reporting.CheckRow]:
    tol = config.tolerances
    rows: list[reporting.CheckRow] = []
    n = model.grid.steps
    dt = model.grid.dt

    def add(name, kind, residual, tolerance, note=""):
        rows.append(reporting.CheckRow(name=name, kind=kind, residual=float(residual),
                                       tolerance=float(tolerance), passed=bool(residual <= tolerance),
                                       note=note))

    # Exact terminal/initial data.
    term = max(
        float(np.max(np.abs(eq.leader.p1[-1] - eq.blocks.gbar))),
        float(np.max(np.abs(eq.leader.p2[-1]))),
        abs(eq.P.values[-1] - model.G1),
        float(np.max(np.abs(eq.xhat.nodes[0] - np.array([model.x0, 0.0])))),
    )
    add("terminal_data", "algebraic", term, 0.0, "stored bit-exactly")

    # Gain-matrix identity between the two eliminations of the adjoint diffusion.
    sig_scale = float(np.max(np.abs(eq.sigmas.s1))) + 1.0
    add("sigma_identity", "algebraic",
        np.max(np.abs(eq.sigmas.s1 - (eq.sigmas.s2 + eq.sigmas.s3))), tol.sigma_rel * sig_scale)

    # Follower control: gain form vs the filtered-feedback substitution with
    # the offset and filtered control read from the reconstructions.
    xh = eq.xhat.nodes
    u1_gain = np.einsum("ki,ki->k", eq.gains.f_nodes, xh)
    pn = eq.P.values
    B1 = model.nodes("B1")
    D1n = model.nodes("D1")
    si = 1.0 / (D1n * D1n * pn + model.nodes("R1"))
    theta_rec = np.array([(eq.leader.p1[k] + eq.leader.p2[k])[1] @ xh[k] for k in range(n + 1)])
    u2hat_rec = np.einsum("ki,ki->k", eq.gains.lhat_nodes, xh)
    u1_sub = -si * ((B1 + D1n * model.nodes("C")) * pn * xh[:, 0] + B1 * theta_rec
                    + D1n * model.nodes("D2") * pn * u2hat_rec)
    scale_u1 = float(np.max(np.abs(u1_gain))) + 1.0
    add("gain_consistency", "algebraic", np.max(np.abs(u1_gain - u1_sub)),
        tol.gain_rel * scale_u1, "two control representations")

    # The follower filter driven by the leader's filtered feedback must
    # reproduce the first component of the augmented estimate (same ODE,
    # 4th-order discretizations).
    fp = solve_follower_filter(model, eq.P, eq.u2hat_path())
    route_gap = float(np.max(np.abs(fp.xhat.nodes - xh[:, 0])))
    xh_scale = float(np.max(np.abs(xh[:, 0]))) + 1.0
    add("filter_route_consistency", "algebraic", route_gap,
        max(tol.structural_rel, 1e2 * dt ** 4) * xh_scale)

    # Ensemble reconstructions.
    theta = backfill_theta(model, eq.P, ens.x, ens.u2, eq.xhat_scalar_path(), eq.u2hat_path())
    recon = eq_mod.reconstruct_adjoints(eq, ens, theta)
    z_scale = float(np.max(np.abs(recon.z))) + 1.0
    add("structural_zero", "algebraic", np.max(np.abs(recon.z[:, :, 1])), tol.structural_rel * z_scale)
    X = np.stack([ens.x, ens.q], axis=-1)
    yterm = recon.y[:, -1, :] - X[:, -1, :] @ eq.blocks.gbar.T
    yscale = float(np.max(np.abs(recon.y[:, -1, :]))) + 1.0
    add("terminal_reconstruction", "algebraic", np.max(np.abs(yterm)), 1e-12 * yscale)

    ls = eq_mod.leader_stationarity_residual(eq, ens, recon)
    add("leader_stationarity", "algebraic", ls.algebraic_max, tol.algebraic_rel * ls.scale)

    fs = eq_mod.follower_stationarity_residual(eq, ens, recon)
    fs_tol = tol.stderr_mult * float(np.max(fs.stderr)) + tol.dt_coeff * dt * fs.scale
    add("follower_stationarity", "statistical", fs.max_abs, fs_tol, "3 stderr + O(dt) allowance")

    dr = eq_mod.drift_residuals(eq)
    add("drift_residual_follower", "order", dr.follower_max, tol.drift_coeff * dt * dt)
    add("drift_residual_leader", "order", dr.leader_max, tol.drift_coeff * dt * dt)

    br = eq_mod.bsde_residual(eq, ens, recon)
    p_scale = float(np.max(np.abs(recon.p))) + 1.0
    add("bsde_residual", "statistical", br.rms, tol.dt_coeff * 10.0 * dt * p_scale, "first-order in dt")

    # Tower property with the first-order weak-error allowance.
    mean = X.mean(axis=0)
    stderr = X.std(axis=0, ddof=1) / np.sqrt(ens.m)
    x_scale = float(np.max(np.abs(xh))) + 1.0
    checkpoints = [int(round(f * n)) for f in np.linspace(0.1, 1.0, 10)]
    worst = 0.0
    for k in checkpoints:
        gap = np.abs(mean[k] - xh[k]) - tol.stderr_mult * stderr[k]
        worst = max(worst, float(np.max(gap)))
    add("tower_property", "statistical", worst, tol.dt_coeff * dt * x_scale,
        "gap beyond 3 stderr vs O(dt) weak-error allowance")

    # Observation-density martingale.
    if not (np.all(model.nodes("h") == 0.0)):
        dens = density_process(model, noise)
        zt = dens.z[:, -1]
        add("density_martingale", "statistical", abs(float(zt.mean()) - 1.0),
            tol.stderr_mult * float(zt.std(ddof=1) / np.sqrt(len(zt))) + 1e-12)

    # Optimality perturbations.
    t = model.grid.times()
    dirs = {"const": np.ones(n + 1), "ramp": t / model.grid.horizon,
            "sine": np.sin(2.0 * np.pi * t / model.grid.horizon)}
    rep1 = costs_mod.verify_follower_optimality(eq, ens, dirs, config.eps)
    rep2 = costs_mod.verify_leader_optimality(eq, ens, dirs, config.eps)
    for rep, player in ((rep1, "follower"), (rep2, "leader")):
        for c in rep.curves:
            add(f"{player}_optimality_{c.name}", "statistical", -c.min_delta_margin(tol.stderr_mult), 0.0,
                "min over eps of dJ + 3 stderr, negated")
            slope_tol = tol.stderr_mult * c.slope_stderr + tol.dt_coeff * dt * (1.0 + abs(c.baseline_mean))
            add(f"{player}_slope_{c.name}", "statistical", abs(c.slope), slope_tol,
                "3 stderr + O(dt) allowance")
            add(f"{player}_curvature_{c.name}", "statistical", -c.curvature, 0.0)

    # Brute-force dominance on a reduced path count.
    grid_paths = max(min(config.paths, 4000), 2)
    sub_noise = generate_noise(config.seed, grid_paths, model.grid)
    sub_ens = simulate_closed_loop(eq.closed_loop(), sub_noise)
    grid = costs_mod.gain_grid_search(eq, sub_ens, np.linspace(-3, 3, 21), np.linspace(-3, 3, 21))
    add("grid_dominance", "statistical", -grid.dominance_margin(tol.grid_stderr_mult), 0.0,
        f"best grid ({grid.best_alpha!r},{grid.best_beta!r}) J1={grid.best_mean!r}")

    reporting.ensure_dir(config.out_dir)
    reporting.write_perturbation_csv(f"{config.out_dir}/perturbations.csv", [rep1, rep2])
    reporting.write_grid_csv(f"{config.out_dir}/grid_search.csv", grid)
    return rows


def cmd_verify(config: RunConfig) -> int:
    """Full identity and optimality suite; writes verify_report.csv."""
    model = _load(config)
    eq = _solve(config, model)
    noise = generate_noise(config.seed, config.paths, model.grid)
    ens = simulate_closed_loop(eq.closed_loop(), noise)
    rows = _verify_rows(config, model, eq, noise, ens)
    reporting.ensure_dir(config.out_dir)
    reporting.write_verify_csv(f"{config.out_dir}/verify_report.csv", rows)
    ok = True
    for r in rows:
        status = "PASS" if r.passed else "FAIL"
        ok &= r.passed
        print(f"{status} {r.name} [{r.kind}] residual={r.residual!r} tol={r.tolerance!r}")
    print(f"report: {config.out_dir}/verify_report.csv")
    return EXIT_OK if ok else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lqstack",
                                     description="Leader-follower LQ game solver and verifier")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("validate", cmd_validate), ("solve", cmd_solve),
                     ("simulate", cmd_simulate), ("verify", cmd_verify)):
        p = sub.add_parser(name)
        p.add_argument("--model", required=True, help="JSON problem file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--paths", type=int, default=20000)
        p.add_argument("--steps", type=int, default=None, help="override the grid steps")
        p.add_argument("--eps", default="0.05,0.1,0.2", help="comma-separated epsilon magnitudes")
        p.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE",
                       help="tolerance override, repeatable")
        p.set_defaults(func=fn)
    return parser


def _config_from_args(args) -> RunConfig:
    try:
        eps = tuple(float(x) for x in str(args.eps).split(",") if x.strip())
    except ValueError as exc:
        raise ParseError(f"bad --eps list: {args.eps}") from exc
    overrides = {}
    for item in args.tol:
        if "=" not in item:
            raise ParseError(f"bad --tol item (expected NAME=VALUE): {item}")
        key, _, val = item.partition("=")
        try:
            overrides[key.strip()] = float(val)
        except ValueError as exc:
            raise ParseError(f"bad --tol value: {item}") from exc
    return RunConfig(model_path=args.model, out_dir=args.out, seed=args.seed,
                     paths=args.paths, steps=args.steps, eps=eps,
                     tolerances=Tolerances().override(overrides))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _config_from_args(args)
        return args.func(config)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ModelValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (RiccatiBlowUp, H3Violated, M1NotInvertible, M2NotInvertible) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except LQStackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
