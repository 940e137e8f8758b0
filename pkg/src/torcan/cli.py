"""Command-line surface: model inspection, simulation, cycles, singularities,
continuation, manifold sweeps, explosion prediction and regime maps.

Outputs are plot-ready CSV/JSON; every artifact embeds the hash of the fully
resolved run configuration so a run can be reproduced bit-for-bit.  Exit
codes: 0 success, 2 numerical failure (diagnostic JSON on stderr), 64 usage.
"""
from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__, averaging, continuation, cycles, explosion
from . import integrate as itg
from . import manifolds, pipeline, singularities
from .models import get_model, model_names, registry_info


class NumericalFailure(SystemExit):
    pass


# bad flags exit with the conventional usage code
click.UsageError.exit_code = 64


def _config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _resolve_config(model, params, eps, extra):
    cfg = {"model": model, "params": dict(sorted(params.items())),
           "eps": eps, "torcan": __version__}
    cfg.update(extra)
    return cfg


def _parse_params(pairs, config_file=None):
    out = {}
    if config_file:
        with open(config_file) as fh:
            data = json.load(fh)
        out.update(data.get("params", {}))
    for pair in pairs:
        if "=" not in pair:
            raise click.UsageError(f"--param expects K=V, got '{pair}'")
        key, val = pair.split("=", 1)
        out[key] = float(val)
    return out


def _out_dir(out):
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_csv(path, header, rows, cfg_hash):
    with open(path, "w") as fh:
        fh.write(f"# config_hash: {cfg_hash}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def _write_json(path, payload, cfg_hash):
    payload = dict(payload)
    payload["config_hash"] = cfg_hash
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, default=str)
        fh.write("\n")


def _fail(msg, **diag):
    diag["error"] = msg
    click.echo(json.dumps(diag, default=str), err=True)
    sys.exit(2)


@click.group()
def main():
    """Torus-canard analysis toolkit."""


# -- model ----------------------------------------------------------------------

@main.group()
def model():
    """Model registry inspection."""


@model.command("list")
@click.option("--json", "as_json", is_flag=True, help="dump the full registry")
def model_list(as_json):
    if as_json:
        click.echo(json.dumps(registry_info(), indent=2))
    else:
        for name in model_names():
            click.echo(name)


@model.command("show")
@click.argument("name")
def model_show(name):
    try:
        info = registry_info()[name]
    except KeyError:
        raise click.UsageError(
            f"unknown model '{name}'; registered: {', '.join(model_names())}")
    click.echo(json.dumps({name: info}, indent=2))


# -- simulate -------------------------------------------------------------------

@main.command()
@click.option("--model", "model_name", required=True)
@click.option("--param", "params", multiple=True, help="override K=V (repeatable)")
@click.option("--config", "config_file", type=click.Path(exists=True))
@click.option("--eps", type=float, default=None)
@click.option("--t-end", type=float, required=True)
@click.option("--init", type=str, default=None, help="comma-separated initial state")
@click.option("--rel-tol", type=float, default=1e-7)
@click.option("--abs-tol", type=float, default=1e-9)
@click.option("--out", default="out")
@click.option("--samples", type=int, default=2000)
@click.option("--classify", "do_classify", is_flag=True)
def simulate(model_name, params, config_file, eps, t_end, init, rel_tol,
             abs_tol, out, samples, do_classify):
    """Integrate the full system; write trajectory, envelope and label files."""
    system = get_model(model_name)
    overrides = _parse_params(params, config_file)
    eps = system.eps_default if eps is None else eps
    if init is None:
        if system.cycle_seed is None:
            raise click.UsageError("model has no default init; pass --init")
        (x0, y0), _ = system.cycle_seed
        z0 = np.concatenate([x0, y0])
    else:
        z0 = np.array([float(v) for v in init.split(",")])
    cfg = _resolve_config(model_name, overrides, eps,
                          {"t_end": t_end, "init": z0.tolist(),
                           "rel_tol": rel_tol, "abs_tol": abs_tol,
                           "command": "simulate"})
    h = _config_hash(cfg)
    path = _out_dir(out)
    try:
        traj = itg.integrate(system, z0, eps, t_end, rel_tol, abs_tol,
                             params=overrides)
    except itg.StiffnessError as exc:
        _fail(str(exc), t=exc.t, state=list(exc.state))
    ts = np.linspace(traj.t0, traj.t_final, samples)
    zz = np.atleast_2d(traj.interpolate(ts))
    header = ["t"] + list(system.state_names)
    _write_csv(path / "traj.csv", header,
               [(float(t), *map(float, row)) for t, row in zip(ts, zz)], h)
    env = traj.raw_peaks
    _write_csv(path / "envelope.csv", ["t_peak", "value"],
               list(zip(map(float, env.peak_times), map(float, env.peak_values))), h)
    result = {"status": int(traj.status), "nsteps": traj.nsteps,
              "t_final": traj.t_final, "final_state": traj.states[-1].tolist()}
    if do_classify:
        label = itg.classify_rhythm(traj)
        result["rhythm"] = label.as_dict()
        _write_json(path / "rhythm.json", label.as_dict(), h)
    _write_json(path / "run.json", {"config": cfg, **result}, h)
    click.echo(json.dumps(result.get("rhythm", result), default=str))


# -- cycle ----------------------------------------------------------------------

@main.group()
def cycle():
    """Layer-problem limit cycles."""


def _orbit_csv(path, orbit, h):
    taus = orbit.disc.node_tau
    rows = [(float(t), float(x[0]), float(x[1])) for t, x in zip(taus, orbit.X)]
    _write_csv(path, ["tau", "x1", "x2"], rows, h)


@cycle.command("solve")
@click.option("--model", "model_name", required=True)
@click.option("--param", "params", multiple=True)
@click.option("--config", "config_file", type=click.Path(exists=True))
@click.option("--y", "y_str", required=True, help="frozen slow coordinates, comma-separated")
@click.option("--out", default="out")
def cycle_solve(model_name, params, config_file, y_str, out):
    system = get_model(model_name)
    overrides = _parse_params(params, config_file)
    y = np.array([float(v) for v in y_str.split(",")])
    cfg = _resolve_config(model_name, overrides, 0.0,
                          {"command": "cycle solve", "y": y.tolist()})
    h = _config_hash(cfg)
    path = _out_dir(out)
    try:
        orb = cycles.orbit_from_simulation(system, y, overrides=overrides)
        fl = cycles.floquet_exponents(system, orb)
    except Exception as exc:
        _fail(str(exc))
    _orbit_csv(path / "orbit.csv", orb, h)
    payload = {"T": orb.T, "y": orb.y.tolist(), "residual": orb.residual,
               "phi1": fl.phi1, "phi2": fl.phi2,
               "phi2_monodromy": fl.phi2_monodromy,
               "multiplier_trivial": fl.m_trivial, "multiplier_second": fl.m_second}
    _write_json(path / "cycle.json", payload, h)
    click.echo(json.dumps(payload))


@cycle.command("continue")
@click.option("--model", "model_name", required=True)
@click.option("--param", "params", multiple=True)
@click.option("--y", "y_str", required=True)
@click.option("--free-index", type=int, default=0)
@click.option("--range", "rng", type=(float, float), required=True)
@click.option("--step", type=float, default=0.02)
@click.option("--out", default="out")
def cycle_continue(model_name, params, y_str, free_index, rng, step, out):
    system = get_model(model_name)
    overrides = _parse_params(params)
    y = np.array([float(v) for v in y_str.split(",")])
    cfg = _resolve_config(model_name, overrides, 0.0,
                          {"command": "cycle continue", "y": y.tolist(),
                           "free_index": free_index, "range": list(rng)})
    h = _config_hash(cfg)
    path = _out_dir(out)
    try:
        orb = cycles.orbit_from_simulation(system, y, overrides=overrides)
        fam = cycles.continue_cycle_family(system, orb, free_index, rng, step=step)
    except Exception as exc:
        _fail(str(exc))
    rows = []
    for i, (o, p2) in enumerate(zip(fam.orbits, fam.phi2s)):
        rows.append((i, *map(float, o.y), float(o.T), float(p2), float(o.residual)))
    k = system.k_slow
    _write_csv(path / "family.csv",
               ["index"] + [f"y{j+1}" for j in range(k)] + ["T", "phi2", "residual"],
               rows, h)
    click.echo(json.dumps({"members": len(fam), "end_reason": fam.end_reason}))


@cycle.command("fold")
@click.option("--model", "model_name", required=True)
@click.option("--param", "params", multiple=True)
@click.option("--out", default="out")
def cycle_fold(model_name, params, out):
    system = get_model(model_name)
    overrides = _parse_params(params)
    cfg = _resolve_config(model_name, overrides, 0.0, {"command": "cycle fold"})
    h = _config_hash(cfg)
    path = _out_dir(out)
    try:
        fold = pipeline.seed_fold(system, overrides or None)
    except Exception as exc:
        _fail(str(exc))
    _orbit_csv(path / "fold_orbit.csv", fold.orbit, h)
    payload = {"y": fold.orbit.y.tolist(), "T": fold.orbit.T,
               "phi2": fold.phi2, "multiplier_second": fold.multiplier_second}
    _write_json(path / "fold.json", payload, h)
    click.echo(json.dumps(payload))


# -- tfs ------------------------------------------------------------------------

@main.group()
def tfs():
    """Toral folded singularities."""


@tfs.command("find")
@click.option("--model", "model_name", required=True)
@click.option("--param", "params", multiple=True)
@click.option("--tol", type=float, default=1e-9)
@click.option("--out", default="out")
def tfs_find_cmd(model_name, params, tol, out):
    system = get_model(model_name)
    overrides = _parse_params(params)
    cfg = _resolve_config(model_name, overrides, 0.0, {"command": "tfs find",
                                                       "tol": tol})
    h = _config_hash(cfg)
    path = _out_dir(out)
    try:
        found = pipeline.find_tfs(system, overrides or None, tol=tol)
    except Exception as exc:
        _fail(str(exc))
    payload = {"count": len(found), "singularities": [t.as_dict() for t in found]}
    _write_json(path / "tfs.json", payload, h)
    click.echo(json.dumps(payload, default=str))


@tfs.command("classify")
@click.option("--model", "model_name", required=True)
@click.option("--param", "params", multiple=True)
@click.option("--out", default="out")
def tfs_classify(model_name, params, out):
    system = get_model(model_name)
    overrides = _parse_params(params)
    cfg = _resolve_config(model_name, overrides, 0.0, {"command": "tfs classify"})
    h = _config_hash(cfg)
    path = _out_dir(out)
    try:
        ts = pipeline.classify_at(system, overrides or None)
    except Exception as exc:
        _fail(str(exc))
    _write_json(path / "tfs_classify.json", ts.as_dict(), h)
    click.echo(json.dumps(ts.as_dict(), default=str))


@tfs.command("resonances")
@click.option("--model", "model_name", required=True)
@click.option("--param", "params", multiple=True)
@click.option("--sweep-param", required=True)
@click.option("--values", required=True, help="comma-separated grid")
@click.option("--out", default="out")
def tfs_resonances(model_name, params, sweep_param, values, out):
    system = get_model(model_name)
    overrides = _parse_params(params)
    grid = [float(v) for v in values.split(",")]
    cfg = _resolve_config(model_name, overrides, 0.0,
                          {"command": "tfs resonances", "sweep_param": sweep_param,
                           "values": grid})
    h = _config_hash(cfg)
    path = _out_dir(out)
    try:
        mus = pipeline.mu_of_parameter(system, sweep_param, grid, overrides or None)
        vals = [v for v, m in mus]
        mvals = [np.nan if m is None else m for _, m in mus]
        res = singularities.resonance_parameters(vals, mvals)
    except Exception as exc:
        _fail(str(exc))
    payload = {"mu_grid": [[v, None if not np.isfinite(m) else m]
                           for v, m in zip(vals, mvals)],
               "resonances": [{"odd_integer": o, "value": v} for o, v in res]}
    _write_json(path / "resonances.json", payload, h)
    click.echo(json.dumps(payload, default=str))


# -- continue -------------------------------------------------------------------

@main.group(name="continue")
def continue_group():
    """Constrained continuation (FSN II curves, k = 1 TFS curves)."""


def _branch_csv(path, system, branch, h):
    k = system.k_slow
    header = (["arclength"] + branch.frees
              + [f"y{j+1}" for j in range(k)] + ["T", "phi2", "rho0"]
              + [f"gbar{j+1}" for j in range(k)])
    rows = []
    for p in branch.points:
        row = [p.arclength] + [p.free_values[f] for f in branch.frees]
        row += list(map(float, p.orbit.y)) + [p.orbit.T,
                                              p.diagnostics.get("phi2", np.nan),
                                              p.diagnostics.get("rho0", np.nan)]
        row += [p.diagnostics.get(f"gbar{j}", np.nan) for j in range(k)]
        rows.append(tuple(map(float, row)))
    _write_csv(path, header, rows, h)


@continue_group.command("fsn2")
@click.option("--model", "model_name", required=True)
@click.option("--param", "params", multiple=True)
@click.option("--two-params", required=True, help="comma-separated parameter names")
@click.option("--step", type=float, default=0.02)
@click.option("--max-points", type=int, default=100)
@click.option("--out", default="out")
def continue_fsn2(model_name, params, two_params, step, max_points, out):
    system = get_model(model_name)
    overrides = _parse_params(params)
    names = tuple(two_params.split(","))
    cfg = _resolve_config(model_name, overrides, 0.0,
                          {"command": "continue fsn2", "two_params": names})
    h = _config_hash(cfg)
    path = _out_dir(out)
    try:
        fold = pipeline.seed_fold(system, overrides or None)
        br = continuation.fsn2_curve(system, fold, names, step=step,
                                     max_points=max_points)
    except Exception as exc:
        _fail(str(exc))
    _branch_csv(path / "fsn2_branch.csv", system, br, h)
    _write_json(path / "fsn2_manifest.json",
                {"points": len(br), "end_reason": br.end_reason,
                 "frees": br.frees, "constraints": br.constraints}, h)
    click.echo(json.dumps({"points": len(br), "end_reason": br.end_reason}))


@continue_group.command("tfs1")
@click.option("--model", "model_name", required=True)
@click.option("--param", "params", multiple=True)
@click.option("--two-params", required=True)
@click.option("--step", type=float, default=0.02)
@click.option("--max-points", type=int, default=100)
@click.option("--out", default="out")
def continue_tfs1(model_name, params, two_params, step, max_points, out):
    system = get_model(model_name)
    overrides = _parse_params(params)
    names = tuple(two_params.split(","))
    cfg = _resolve_config(model_name, overrides, 0.0,
                          {"command": "continue tfs1", "two_params": names})
    h = _config_hash(cfg)
    path = _out_dir(out)
    try:
        fold = pipeline.seed_fold(system, overrides or None)
        br = continuation.tfs_curve_one_slow(system, fold, names, step=step,
                                             max_points=max_points)
    except Exception as exc:
        _fail(str(exc))
    _branch_csv(path / "tfs1_branch.csv", system, br, h)
    click.echo(json.dumps({"points": len(br), "end_reason": br.end_reason}))


# -- manifolds ------------------------------------------------------------------

@main.group(name="manifolds")
def manifolds_group():
    """Invariant-manifold sweeps and maximal torus canards."""


@manifolds_group.command("sweep")
@click.option("--model", "model_name", required=True)
@click.option("--param", "params", multiple=True)
@click.option("--eps", type=float, required=True)
@click.option("--offset", type=float, default=0.05)
@click.option("--count", type=int, default=40)
@click.option("--side", type=click.Choice(["attracting", "repelling"]),
              default="attracting")
@click.option("--span", type=(float, float), default=None,
              help="seed-curve window (default: +-0.3 slow units about the TFS)")
@click.option("--threads", type=int, default=1)
@click.option("--out", default="out")
def manifolds_sweep(model_name, params, eps, offset, count, side, span,
                    threads, out):
    system = get_model(model_name)
    overrides = _parse_params(params)
    cfg = _resolve_config(model_name, overrides, eps,
                          {"command": "manifolds sweep", "offset": offset,
                           "count": count, "side": side, "span": list(span)})
    h = _config_hash(cfg)
    path = _out_dir(out)
    try:
        ts = pipeline.classify_at(system, overrides or None)
        branch = pipeline.fold_branch_for(system, overrides or None)
        if span is None:
            span = manifolds.span_near(branch, ts.y_star, 0.3)
        seeds = manifolds.seed_cycles(system, branch, offset, count, side=side,
                                      span=span)
        direction = int(np.sign(ts.coeffs.g_bar[0])) or 1
        if side == "repelling":
            direction = -direction
        section = (2, float(ts.y_star[0]), direction)
        mesh = manifolds.sweep(system, seeds, eps, section, ts.y_star,
                               side=side, threads=threads,
                               params=overrides or None)
    except Exception as exc:
        _fail(str(exc))
    rows = []
    for i, sw in enumerate(mesh.swept):
        sec = sw.section_state
        rows.append((i, float(sw.seed.s), *map(float, sw.seed.y),
                     sw.rotation_count, int(sw.escape),
                     *(map(float, sec[2:]) if sec is not None else [np.nan] * system.k_slow),
                     *(map(float, sec[:2]) if sec is not None else [np.nan, np.nan])))
    k = system.k_slow
    _write_csv(path / "mesh.csv",
               ["seed_id", "seed_param"] + [f"seed_y{j+1}" for j in range(k)]
               + ["rotation_count", "escape_flag"]
               + [f"section_y{j+1}" for j in range(k)] + ["section_x1", "section_x2"],
               rows, h)
    counts = mesh.rotation_counts()
    click.echo(json.dumps({"seeds": len(seeds),
                           "rotation_counts": counts.tolist()}))


@manifolds_group.command("canards")
@click.option("--model", "model_name", required=True)
@click.option("--param", "params", multiple=True)
@click.option("--eps", type=float, required=True)
@click.option("--n-target", type=int, default=None)
@click.option("--offset", type=float, default=0.05)
@click.option("--count", type=int, default=40)
@click.option("--span", type=(float, float), default=None)
@click.option("--bracket-tol", type=float, default=1e-8)
@click.option("--threads", type=int, default=1)
@click.option("--out", default="out")
def manifolds_canards(model_name, params, eps, n_target, offset, count, span,
                      bracket_tol, threads, out):
    system = get_model(model_name)
    overrides = _parse_params(params)
    cfg = _resolve_config(model_name, overrides, eps,
                          {"command": "manifolds canards", "offset": offset,
                           "count": count, "span": list(span),
                           "n_target": n_target})
    h = _config_hash(cfg)
    path = _out_dir(out)
    try:
        ts = pipeline.classify_at(system, overrides or None)
        if ts.kind != singularities.FOLDED_NODE:
            _fail(f"singularity is {ts.kind}, not a toral folded node")
        n_t = n_target if n_target is not None else ts.s_max
        branch = pipeline.fold_branch_for(system, overrides or None)
        if span is None:
            span = manifolds.span_near(branch, ts.y_star, 0.3)
        canards, mesh = manifolds.locate_maximal_canards(
            system, branch, ts, eps, n_t, offset, count=count, span=span,
            bracket_tol=bracket_tol, threads=threads,
            params=overrides or None)
    except SystemExit:
        raise
    except Exception as exc:
        _fail(str(exc))
    payload = {"s_max": ts.s_max, "found": len(canards),
               "canards": [c.as_dict() for c in canards],
               "rotation_counts": mesh.rotation_counts().tolist()}
    _write_json(path / "canards.json", payload, h)
    click.echo(json.dumps(payload))


# -- explosion ------------------------------------------------------------------

@main.command("explosion")
@click.option("--model", "model_name", required=True)
@click.option("--param", "params", multiple=True)
@click.option("--eps", type=float, required=True)
@click.option("--sweep-param", default=None,
              help="parameter carrying the explosion (default: model control)")
@click.option("--out", default="out")
def explosion_cmd(model_name, params, eps, sweep_param, out):
    system = get_model(model_name)
    overrides = _parse_params(params)
    if sweep_param is None:
        sweep_param = {"fvdp": "alpha", "mlt": "k", "hr": "beta", "wci": "k"}.get(
            model_name)
        if sweep_param is None:
            raise click.UsageError("pass --sweep-param for this model")
    cfg = _resolve_config(model_name, overrides, eps,
                          {"command": "explosion", "sweep_param": sweep_param})
    h = _config_hash(cfg)
    path = _out_dir(out)
    try:
        fold = pipeline.seed_fold(system, overrides or None)
        pred = explosion.explosion_locus(system, sweep_param, eps, fold)
    except explosion.InapplicableError as exc:
        _fail(str(exc))
    except Exception as exc:
        _fail(str(exc))
    _write_json(path / "explosion.json", pred.as_dict(), h)
    click.echo(json.dumps(pred.as_dict()))


# -- regime map -----------------------------------------------------------------

@main.command("regime-map")
@click.option("--model", "model_name", required=True)
@click.option("--param", "params", multiple=True)
@click.option("--eps", type=float, default=None)
@click.option("--grid-param1", required=True, help="NAME=lo:hi:n")
@click.option("--grid-param2", required=True, help="NAME=lo:hi:n")
@click.option("--t-end", type=float, required=True)
@click.option("--init", type=str, default=None)
@click.option("--threads", type=int, default=1)
@click.option("--rel-tol", type=float, default=1e-7)
@click.option("--abs-tol", type=float, default=1e-9)
@click.option("--out", default="out")
def regime_map(model_name, params, eps, grid_param1, grid_param2, t_end, init,
               threads, rel_tol, abs_tol, out):
    """Grid of classify_rhythm over two parameters."""
    from concurrent.futures import ThreadPoolExecutor

    system = get_model(model_name)
    overrides = _parse_params(params)
    eps = system.eps_default if eps is None else eps

    def parse_grid(spec):
        name, rng = spec.split("=")
        lo, hi, n = rng.split(":")
        return name, np.linspace(float(lo), float(hi), int(n))

    n1, g1 = parse_grid(grid_param1)
    n2, g2 = parse_grid(grid_param2)
    if init is None:
        (x0, y0), _ = system.cycle_seed
        z0 = np.concatenate([x0, y0])
    else:
        z0 = np.array([float(v) for v in init.split(",")])
    cfg = _resolve_config(model_name, overrides, eps,
                          {"command": "regime-map", "grid1": grid_param1,
                           "grid2": grid_param2, "t_end": t_end,
                           "init": z0.tolist()})
    h = _config_hash(cfg)
    path = _out_dir(out)

    tasks = [(i, j, v1, v2) for i, v1 in enumerate(g1) for j, v2 in enumerate(g2)]

    def run(task):
        i, j, v1, v2 = task
        ov = dict(overrides)
        ov[n1] = float(v1)
        ov[n2] = float(v2)
        try:
            traj = itg.integrate(system, z0, eps, t_end, rel_tol, abs_tol,
                                 params=ov, store=False, envelope_coord=0)
            label = itg.classify_rhythm(traj)
            return (i, j, v1, v2, label.kind, label.envelope_oscillations)
        except Exception as exc:
            return (i, j, v1, v2, f"error:{type(exc).__name__}", None)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]
    results.sort(key=lambda r: (r[0], r[1]))
    rows = [(i, j, float(v1), float(v2), kind,
             -1 if osc is None else osc) for i, j, v1, v2, kind, osc in results]
    _write_csv(path / "regime_map.csv",
               ["i", "j", n1, n2, "kind", "envelope_oscillations"], rows, h)
    click.echo(json.dumps({"cells": len(rows)}))


if __name__ == "__main__":
    main()
