"""Command-line front end.

Every command takes a JSON config, writes CSV tables plus a
``*_summary.json`` into the output directory, and exits 0 on success,
2 when a mathematical verdict fails (non-coercive problem, generator
with no uniform scale, iteration budget exhausted, ...), and 1 on
usage or config errors.  CSV files are deterministic: running the same
config twice produces byte-identical output, decimal point '.' and
separator ','.
"""

from __future__ import annotations

import json
import os
import sys
import time

import click
import numpy as np

from .convex import ConvexSetNet
from .errors import (
    ConfigInvalid,
    GennetError,
    InvalidBasis,
    InvalidSpec,
    MalformedSummary,
)
from .fem import (
    CoefficientNet,
    Mesh1D,
    ProblemSpec,
    h1_norm_net,
    solve_dirichlet,
    solve_obstacle,
)
from .gennum import (
    EpsGrid,
    GenScalar,
    IndexSet,
    NumericPolicy,
    is_moderate,
    is_negligible,
    make_power_net,
    sharp_norm,
    valuation_estimate,
)
from .hilbert import GenVector
from .operators import BasicOperator, classify_operator, op_norm_net
from .submodules import GeneratorSet, classify_submodule
from .variational import certify_coercivity, vi_solve_contraction


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigInvalid("config must be a JSON object")
    return cfg


def _build_grid(cfg: dict, grid_k: int | None) -> EpsGrid:
    gspec = cfg.get("grid", {})
    if not isinstance(gspec, dict):
        raise ConfigInvalid("/grid: must be an object")
    K = grid_k if grid_k is not None else int(gspec.get("K", 24))
    base = float(gspec.get("base", 0.5))
    try:
        return EpsGrid.geometric(K=K, base=base)
    except ValueError as exc:
        raise ConfigInvalid(f"/grid: {exc}") from exc


def _build_policy(cfg: dict) -> NumericPolicy:
    pspec = cfg.get("policy", {})
    if not isinstance(pspec, dict):
        raise ConfigInvalid("/policy: must be an object")
    try:
        return NumericPolicy(**{k: pspec[k] for k in pspec})
    except TypeError as exc:
        raise ConfigInvalid(f"/policy: {exc}") from exc


def _workers(parallel: bool) -> int:
    if not parallel:
        return 1
    try:
        return max(1, int(os.environ.get("GENNET_THREADS", "4")))
    except ValueError:
        return 4


def _scalar_net(spec, grid: EpsGrid, ptr: str = "/nets") -> GenScalar:
    if isinstance(spec, (int, float)):
        return GenScalar.constant(float(spec), grid)
    if not isinstance(spec, dict):
        raise ConfigInvalid(f"{ptr}: net spec must be a number or an object")
    kind = spec.get("kind")
    if kind == "power":
        return make_power_net(float(spec.get("c", 1.0)), float(spec["a"]), grid)
    if kind == "constant":
        return GenScalar.constant(float(spec["value"]), grid)
    if kind == "samples":
        vals = np.asarray(spec["values"], dtype=float)
        if vals.shape != (grid.K,):
            raise ConfigInvalid(f"{ptr}/values: must have length {grid.K}")
        return GenScalar(grid, vals)
    raise ConfigInvalid(f"{ptr}/kind: unknown net kind {kind!r}")


def _operator_net(spec, grid: EpsGrid) -> BasicOperator:
    if not isinstance(spec, dict):
        raise ConfigInvalid("/operator: must be an object")
    kind = spec.get("kind")
    if kind == "constant":
        return BasicOperator.constant(np.asarray(spec["matrix"], dtype=float), grid)
    if kind == "rotation":
        theta = grid.values ** float(spec.get("theta_power", 1.0))
        c, s = np.cos(theta), np.sin(theta)
        mats = np.stack([np.stack([c, -s], axis=1), np.stack([s, c], axis=1)], axis=1)
        return BasicOperator(grid, mats)
    if kind == "diag_powers":
        powers = np.asarray(spec["powers"], dtype=float)
        diags = grid.values[:, None] ** powers[None, :]
        mats = np.zeros((grid.K, powers.size, powers.size))
        np.einsum("kii->ki", mats)[:] = diags
        return BasicOperator(grid, mats)
    if kind == "idempotent_diag":
        members = {int(m) for m in spec["members"]}
        dim = int(spec.get("dim", 2))
        S = IndexSet(frozenset(members), grid.K)
        mats = np.zeros((grid.K, dim, dim))
        np.einsum("kii->ki", mats)[:] = S.mask().astype(float)[:, None]
        return BasicOperator(grid, mats)
    if kind == "samples":
        mats = np.asarray(spec["matrices"], dtype=float)
        if mats.ndim != 3 or mats.shape[0] != grid.K:
            raise ConfigInvalid("/operator/matrices: must be (K, d_out, d_in)")
        return BasicOperator(grid, mats)
    raise ConfigInvalid(f"/operator/kind: unknown operator kind {kind!r}")


def _coefficient(spec, grid: EpsGrid, ptr: str = "/coefficient") -> CoefficientNet | None:
    if spec is None:
        return None
    if isinstance(spec, (int, float)):
        return CoefficientNet.constant(grid, float(spec))
    if not isinstance(spec, dict):
        raise ConfigInvalid(f"{ptr}: must be a number or an object")
    kind = spec.get("kind")
    try:
        if kind == "constant":
            return CoefficientNet.constant(grid, float(spec["value"]))
        if kind == "heaviside_nu":
            return CoefficientNet.heaviside_nu(
                grid,
                nu_exponent=float(spec.get("nu_exponent", 1.0)),
                jump_at=float(spec.get("jump_at", 0.0)),
                high=float(spec.get("high", 1.0)),
            )
        if kind == "mollified_measure":
            masses = [(float(x), float(w)) for x, w in spec.get("masses", [])]
            density = spec.get("density")
            return CoefficientNet.mollified_measure(grid, masses, density)
        if kind == "tabulated":
            return CoefficientNet.tabulated(grid, spec["xs"], spec["values"])
    except KeyError as exc:
        raise ConfigInvalid(f"{ptr}: missing field {exc}") from exc
    raise ConfigInvalid(f"{ptr}/kind: unknown coefficient kind {kind!r}")


def _problem(cfg: dict, grid: EpsGrid) -> ProblemSpec:
    p = cfg.get("problem")
    if not isinstance(p, dict):
        raise ConfigInvalid("/problem: must be an object")
    try:
        a, b = (float(v) for v in p["interval"])
        mesh = Mesh1D(a, b, int(p["n_elems"]))
        diffusion = _coefficient(p["diffusion"], grid, "/problem/diffusion")
    except KeyError as exc:
        raise ConfigInvalid(f"/problem: missing field {exc}") from exc
    obstacle = p.get("obstacle")
    if isinstance(obstacle, dict):
        obstacle = _coefficient(obstacle, grid, "/problem/obstacle")
    boundary = tuple(p.get("boundary", (0.0, 0.0)))
    rhs = p.get("rhs", 0.0)
    if isinstance(rhs, dict):
        rhs = _coefficient(rhs, grid, "/problem/rhs")
    return ProblemSpec(
        grid=grid,
        mesh=mesh,
        diffusion=diffusion,
        rhs=rhs,
        potential=_coefficient(p.get("potential"), grid, "/problem/potential"),
        point_loads=tuple((float(x), float(w)) for x, w in p.get("point_loads", [])),
        obstacle=obstacle,
        boundary=boundary,
    )


def _write_summary(out: str, name: str, summary: dict) -> str:
    path = os.path.join(out, f"{name}_summary.json")
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _finish(out: str, name: str, summary: dict) -> int:
    path = _write_summary(out, name, summary)
    verdicts = summary.get("verdicts", {})
    ok = all(bool(v) for v in verdicts.values())
    status = "ok" if ok else "FAILED"
    click.echo(f"{name}: {status} ({path})")
    return 0 if ok else 2


def _csv_open(out: str, name: str):
    return open(os.path.join(out, name), "w", newline="")


_CONFIG_OPTS = [
    click.option("--config", "config_path", required=True,
                 type=click.Path(exists=True, dir_okay=False), help="JSON config file."),
    click.option("--out", "out", default=".", type=click.Path(file_okay=False),
                 help="Output directory for CSV and summary files."),
    click.option("--grid-K", "grid_k", default=None, type=int,
                 help="Override the number of grid points."),
    click.option("--seed", default=0, type=int, show_default=True,
                 help="Seed for randomized fixtures in configs."),
    click.option("--parallel", default=False, type=bool, show_default=True,
                 help="Run per-eps work in GENNET_THREADS threads where the "
                      "command supports it (the assembly-heavy solvers)."),
]


def _with_config_opts(fn):
    for opt in reversed(_CONFIG_OPTS):
        fn = opt(fn)
    return fn


@click.group()
def cli():
    """Generalized-number nets: arithmetic, submodules, variational solvers."""


@cli.command("gennum-check")
@_with_config_opts
def gennum_check(config_path, out, grid_k, seed, parallel):
    """Valuations, sharp norms, and negligibility/moderateness verdicts."""
    t0 = time.perf_counter()
    cfg = _load_config(config_path)
    grid = _build_grid(cfg, grid_k)
    policy = _build_policy(cfg)
    specs = cfg.get("nets")
    if not isinstance(specs, list) or not specs:
        raise ConfigInvalid("/nets: must be a nonempty list")
    nets = [_scalar_net(s, grid, f"/nets/{j}") for j, s in enumerate(specs)]
    os.makedirs(out, exist_ok=True)
    with _csv_open(out, "nets.csv") as fh:
        fh.write("k,eps," + ",".join(f"net{j}" for j in range(len(nets))) + "\n")
        for k in range(grid.K):
            cells = [str(k + 1), repr(float(grid.values[k]))]
            cells += [repr(float(np.real(net.samples[k]))) for net in nets]
            fh.write(",".join(cells) + "\n")
    rows = []
    for j, net in enumerate(nets):
        rows.append({
            "net": j,
            "valuation": float(valuation_estimate(net, policy)),
            "sharp_norm": float(sharp_norm(net, policy)),
            "negligible": bool(is_negligible(net, policy)),
            "moderate": bool(is_moderate(net, policy)),
        })
    summary = {
        "command": "gennum-check",
        "results": rows,
        "valuations": {f"net{r['net']}": r["valuation"] for r in rows},
        "verdicts": {},
        "timings": {"total_s": time.perf_counter() - t0},
    }
    return _finish(out, "gennum-check", summary)


@cli.command("classify-op")
@_with_config_opts
def classify_op(config_path, out, grid_k, seed, parallel):
    """Isometric / unitary / self-adjoint / projection flags for an operator net."""
    t0 = time.perf_counter()
    cfg = _load_config(config_path)
    grid = _build_grid(cfg, grid_k)
    policy = _build_policy(cfg)
    T = _operator_net(cfg.get("operator"), grid)
    flags = classify_operator(T, policy)
    norms = op_norm_net(T)
    os.makedirs(out, exist_ok=True)
    with _csv_open(out, "opnorm.csv") as fh:
        fh.write("k,eps,op_norm\n")
        for k in range(grid.K):
            fh.write(f"{k + 1},{float(grid.values[k])!r},{float(norms.samples[k])!r}\n")
    summary = {
        "command": "classify-op",
        "flags": {key: bool(v) for key, v in flags.items()},
        "valuations": {"op_norm": float(valuation_estimate(norms, policy))},
        "verdicts": {},
        "timings": {"total_s": time.perf_counter() - t0},
    }
    return _finish(out, "classify-op", summary)


@cli.command("gram-schmidt")
@_with_config_opts
def gram_schmidt(config_path, out, grid_k, seed, parallel):
    """Orthogonalize a generator set; exit 2 if no uniform scale exists."""
    t0 = time.perf_counter()
    cfg = _load_config(config_path)
    grid = _build_grid(cfg, grid_k)
    policy = _build_policy(cfg)
    gens = _generators(cfg, grid, seed)
    result = classify_submodule(GeneratorSet(gens), policy)
    os.makedirs(out, exist_ok=True)
    valuations = {}
    with _csv_open(out, "basis.csv") as fh:
        if result.basis is None:
            fh.write("k,eps\n")
            for k in range(grid.K):
                fh.write(f"{k + 1},{float(grid.values[k])!r}\n")
        else:
            vecs = result.basis.vecs
            header = ["k", "eps"]
            for j, w in enumerate(vecs):
                header += [f"v{j}_c{i}" for i in range(w.dim)]
            fh.write(",".join(header) + "\n")
            for k in range(grid.K):
                cells = [str(k + 1), repr(float(grid.values[k]))]
                for w in vecs:
                    cells += [repr(float(np.real(w.samples[k, i])))
                              for i in range(w.dim)]
                fh.write(",".join(cells) + "\n")
            for j, w in enumerate(vecs):
                norm_net = GenScalar(grid, np.linalg.norm(w.samples, axis=1))
                valuations[f"v{j}_norm"] = float(valuation_estimate(norm_net, policy))
    summary = {
        "command": "gram-schmidt",
        "closed_edged": result.closed_edged,
        "diagnostics": result.diagnostics,
        "supports": [sorted(S.members) for S in result.basis.supports]
        if result.basis is not None else None,
        "valuations": valuations,
        "verdicts": {"closed_edged": result.closed_edged},
        "timings": {"total_s": time.perf_counter() - t0},
    }
    return _finish(out, "gram-schmidt", summary)


def _generators(cfg: dict, grid: EpsGrid, seed: int) -> list:
    if "random" in cfg:
        r = cfg["random"]
        rng = np.random.default_rng(seed)
        m, d = int(r["m"]), int(r["d"])
        powers = r.get("powers", [0] * m)
        if len(powers) != m:
            raise ConfigInvalid("/random/powers: must list one exponent per generator")
        vecs = rng.standard_normal((m, d))
        return [
            GenVector(grid, grid.values[:, None] ** float(p) * v[None, :])
            for p, v in zip(powers, vecs)
        ]
    specs = cfg.get("generators")
    if not isinstance(specs, list) or not specs:
        raise ConfigInvalid("/generators: need a nonempty list (or a /random object)")
    gens = []
    for s in specs:
        if not isinstance(s, dict):
            raise ConfigInvalid(f"/generators/{len(gens)}: must be an object")
        kind = s.get("kind")
        if kind == "constant":
            gens.append(GenVector.constant(np.asarray(s["vector"], dtype=float), grid))
        elif kind == "power_scaled":
            v = np.asarray(s["vector"], dtype=float)
            p = float(s.get("power", 0.0))
            gens.append(GenVector(grid, grid.values[:, None] ** p * v[None, :]))
        elif kind == "power_tower":
            # sample norm eps_k^k: scales drift without bound across the grid
            v = np.asarray(s["vector"], dtype=float)
            v = v / np.linalg.norm(v)
            ks = np.arange(1, grid.K + 1, dtype=float)
            gens.append(GenVector(grid, (grid.values ** ks)[:, None] * v[None, :]))
        elif kind == "samples":
            vals = np.asarray(s["values"], dtype=float)
            if vals.ndim != 2 or vals.shape[0] != grid.K:
                raise ConfigInvalid(f"/generators/{len(gens)}/values: must be (K, d)")
            gens.append(GenVector(grid, vals))
        else:
            raise ConfigInvalid(f"/generators/{len(gens)}/kind: unknown generator kind {kind!r}")
    return gens


@cli.command("vi-solve")
@_with_config_opts
def vi_solve(config_path, out, grid_k, seed, parallel):
    """Projected contraction iteration for a small variational inequality."""
    t0 = time.perf_counter()
    cfg = _load_config(config_path)
    grid = _build_grid(cfg, grid_k)
    policy = _build_policy(cfg)
    T = _operator_net(cfg.get("operator"), grid)
    rhs = cfg.get("rhs")
    if not isinstance(rhs, list):
        raise ConfigInvalid("/rhs: must be a vector (list of numbers)")
    c = GenVector.constant(np.asarray(rhs, dtype=float), grid)
    C = _convex_set(cfg.get("set"), grid)
    cert = certify_coercivity(T, policy)
    sol = vi_solve_contraction(T, c, C, cert, policy)
    solve_s = time.perf_counter() - t0
    os.makedirs(out, exist_ok=True)
    with _csv_open(out, "iterations.csv") as fh:
        fh.write("k,eps,alpha,M,rho,contraction_k,iterations,residual\n")
        for row in sol.report_rows():
            fh.write(",".join([
                str(row["k"]), repr(row["eps"]), repr(row["alpha"]), repr(row["M"]),
                repr(row["rho"]), repr(row["contraction_k"]), str(row["iterations"]),
                repr(row["residual"]),
            ]) + "\n")
    with _csv_open(out, "solution.csv") as fh:
        fh.write("k,eps," + ",".join(f"u{i}" for i in range(sol.u.dim)) + "\n")
        for k in range(grid.K):
            cells = [str(k + 1), repr(float(grid.values[k]))]
            cells += [repr(float(sol.u.samples[k, i])) for i in range(sol.u.dim)]
            fh.write(",".join(cells) + "\n")
    u_norm = GenScalar(grid, np.linalg.norm(sol.u.samples, axis=1))
    summary = {
        "command": "vi-solve",
        "certificate": cert.to_json(),
        "max_iterations": int(sol.iterations.max()),
        "max_residual": float(sol.residual.samples.max()),
        "valuations": {"u_norm": float(valuation_estimate(u_norm, policy))},
        "verdicts": {"coercive": cert.valid},
        "timings": {"solve_s": solve_s, "total_s": time.perf_counter() - t0},
    }
    return _finish(out, "vi-solve", summary)


def _convex_set(spec, grid: EpsGrid) -> ConvexSetNet:
    if not isinstance(spec, dict):
        raise ConfigInvalid("/set: must be an object")
    kind = spec.get("kind")
    if kind == "box":
        return ConvexSetNet.box(grid, np.asarray(spec["lower"], dtype=float),
                                np.asarray(spec["upper"], dtype=float))
    if kind == "obstacle":
        return ConvexSetNet.obstacle(grid, np.asarray(spec["lower"], dtype=float))
    raise ConfigInvalid(f"/set/kind: unknown set kind {kind!r}")


@cli.command("solve-dirichlet")
@_with_config_opts
def solve_dirichlet_cmd(config_path, out, grid_k, seed, parallel):
    """P1 solve of -(a u')' + c u = f with Dirichlet data, per grid point."""
    t0 = time.perf_counter()
    cfg = _load_config(config_path)
    grid = _build_grid(cfg, grid_k)
    policy = _build_policy(cfg)
    spec = _problem(cfg, grid)
    result = solve_dirichlet(spec, policy, workers=_workers(parallel))
    solve_s = time.perf_counter() - t0
    os.makedirs(out, exist_ok=True)
    result.write_solution_csv(os.path.join(out, "solution.csv"))
    summary = {
        "command": "solve-dirichlet",
        **result.to_json(),
        "valuations": {"h1_norm": result.valuation},
        "verdicts": {
            "coercive": result.cert.valid,
            "residual_ok": bool(np.all(result.residual.samples <= 1e-10)),
            "moderate": result.moderate,
        },
        "timings": {"solve_s": solve_s, "total_s": time.perf_counter() - t0},
    }
    return _finish(out, "solve-dirichlet", summary)


@cli.command("solve-obstacle")
@_with_config_opts
def solve_obstacle_cmd(config_path, out, grid_k, seed, parallel):
    """Obstacle-constrained P1 solve via the projected contraction iteration."""
    t0 = time.perf_counter()
    cfg = _load_config(config_path)
    grid = _build_grid(cfg, grid_k)
    policy = _build_policy(cfg)
    spec = _problem(cfg, grid)
    result = solve_obstacle(spec, policy, workers=_workers(parallel))
    solve_s = time.perf_counter() - t0
    os.makedirs(out, exist_ok=True)
    result.write_solution_csv(os.path.join(out, "solution.csv"))
    with _csv_open(out, "iterations.csv") as fh:
        fh.write("k,eps,alpha,M,rho,contraction_k,iterations,residual\n")
        for row in result.vi.report_rows():
            fh.write(",".join([
                str(row["k"]), repr(row["eps"]), repr(row["alpha"]), repr(row["M"]),
                repr(row["rho"]), repr(row["contraction_k"]), str(row["iterations"]),
                repr(row["residual"]),
            ]) + "\n")
    hn = h1_norm_net(spec.mesh, grid, result.u.samples)
    summary = {
        "command": "solve-obstacle",
        **result.to_json(),
        "valuations": {"h1_norm": float(valuation_estimate(hn, policy))},
        "verdicts": {
            "coercive": result.cert.valid,
            "complementarity_ok": result.complementarity_ok,
        },
        "timings": {"solve_s": solve_s, "total_s": time.perf_counter() - t0},
    }
    return _finish(out, "solve-obstacle", summary)


@cli.command("report")
@click.argument("summaries", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--out", default=None, type=click.Path(file_okay=False),
              help="Also write the merged report.json here.")
def report(summaries, out):
    """Merge command summaries into one table; exit 2 if any verdict failed."""
    merged = []
    for path in summaries:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise MalformedSummary(f"cannot read summary {path}: {exc}") from exc
        if not isinstance(data, dict) or "command" not in data or "verdicts" not in data:
            raise MalformedSummary(f"{path} is not a command summary")
        merged.append(data)
    all_ok = True
    click.echo(f"{'command':<16} {'verdict':<20} value")
    for data in merged:
        verdicts = data["verdicts"]
        if not verdicts:
            click.echo(f"{data['command']:<16} {'(informational)':<20} ok")
        for name, value in sorted(verdicts.items()):
            click.echo(f"{data['command']:<16} {name:<20} {'pass' if value else 'FAIL'}")
            all_ok = all_ok and bool(value)
    if out is not None:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "report.json"), "w") as fh:
            json.dump({"reports": merged, "all_ok": all_ok}, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0 if all_ok else 2


def main(argv=None):
    try:
        rv = cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except (ConfigInvalid, MalformedSummary, InvalidSpec, InvalidBasis) as exc:
        click.echo(f"config error: {exc}", err=True)
        return 1
    except GennetError as exc:
        click.echo(f"verdict failure: {exc.__class__.__name__}: {exc}", err=True)
        return 2
    return int(rv) if isinstance(rv, int) else 0


if __name__ == "__main__":
    sys.exit(main())
