"""Command-line front end: YAML job files in, CSV/JSON artifacts out.

Subcommands: ``profile``, ``simulate``, ``energy``, ``linear``, ``sweep``, ``check``.
Exit codes: 0 success, 1 a declared check failed, 2 invalid input,
3 numerical failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import datetime as _dt
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np
import yaml

from .core import Grid1D, NumericalError, PhysParamsOne, PhysParamsTwo, ValidationError
from .rarewave import profile_onefluid, profile_twofluid, wave_for

log = logging.getLogger("nsplab")

EXIT_OK, EXIT_CHECK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3, 4

_NUM = (int, float)

# section -> {key: (type, default)}; a default of _REQ marks a required key
_REQ = object()
_SCHEMA = {
    "params_one": {"A": (_NUM, _REQ), "n_minus": (_NUM, _REQ), "n_plus": (_NUM, _REQ),
                   "u_minus": (_NUM, 0.0), "eps_smooth": (_NUM, 0.1), "u_plus": (_NUM, None)},
    "params_two": {"m_i": (_NUM, _REQ), "m_e": (_NUM, _REQ), "T_i": (_NUM, _REQ), "T_e": (_NUM, _REQ),
                   "n_minus": (_NUM, _REQ), "n_plus": (_NUM, _REQ), "u_minus": (_NUM, 0.0),
                   "eps_smooth": (_NUM, 0.1), "mu_i": (_NUM, 1.0), "mu_e": (_NUM, 1.0), "u_plus": (_NUM, None)},
    "grid": {"L": (_NUM, None), "dx": (_NUM, 0.05), "x_min": (_NUM, None), "x_max": (_NUM, None),
             "n_cells": (int, None)},
    "time": {"t_final": (_NUM, _REQ), "cfl_number": (_NUM, 0.4), "viscous_theta": (_NUM, 0.5),
             "output_stride": (int, 100), "dt": (_NUM, None)},
    "perturbation": {"shape": (str, "gaussian"), "amplitude": (_NUM, 0.0), "target": (str, "n"),
                     "center": (_NUM, 0.0), "width": (_NUM, 1.0), "species": (str, "both"), "seed": (int, 0)},
    "outputs": {"dump_states": (bool, False), "dump_stride": (int, 1)},
    "sponge": {"width": (_NUM, 0.0), "strength": (_NUM, 1.0)},
    "profile": {"times": (list, _REQ)},
    "linear": {"xi": (list, None), "xi_min": (_NUM, -10.0), "xi_max": (_NUM, 10.0), "xi_count": (int, 201),
               "eps": (_NUM, 1.0), "A": (_NUM, 1.0), "literal_mode": (bool, False), "kappa": (_NUM, 0.05),
               "greens_t": (_NUM, None)},
    "sweep": {"param": (str, _REQ), "values": (list, _REQ), "job": (str, "simulate")},
}

_SECTIONS = {
    "simulate": ("model", "params", "grid", "time", "perturbation", "outputs", "sponge"),
    "profile": ("model", "params", "grid", "profile"),
    "linear": ("linear",),
    "sweep": ("model", "params", "grid", "time", "perturbation", "outputs", "sponge", "sweep"),
}


@dataclass
class Job:
    """A validated job: its kind, the fully materialised settings and, for runs, the SimConfig."""

    kind: str
    settings: dict
    sim: object = None

    @property
    def digest(self) -> str:
        blob = json.dumps(self.settings, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class RunManifest:
    config_hash: str
    tool_version: str
    started: str
    finished: str = ""
    outputs: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _typecheck(path, value, typ):
    if typ is _NUM:
        ok = isinstance(value, _NUM) and not isinstance(value, bool)
    elif typ is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, typ)
    if not ok:
        name = "number" if typ is _NUM else typ.__name__
        raise ValidationError(f"{path}: expected {name}, got {type(value).__name__} ({value!r})")


def _section(raw, name, schema_key, missing, required=True):
    schema = _SCHEMA[schema_key]
    data = raw.get(name)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ValidationError(f"section {name!r} must be a mapping")
    unknown = sorted(set(data) - set(schema))
    if unknown:
        raise ValidationError(f"unknown key(s) in {name}: {', '.join(unknown)}")
    out = {}
    for key, (typ, default) in schema.items():
        if key in data and data[key] is not None:
            _typecheck(f"{name}.{key}", data[key], typ)
            out[key] = float(data[key]) if typ is _NUM else data[key]
        elif default is _REQ:
            if required:
                missing.append(f"{name}.{key}")
        else:
            out[key] = default
    return out


def parse_config(text: str, kind: str = "simulate") -> Job:
    """Parse and validate a YAML job description.

    Unknown sections or keys are rejected, every missing required key is
    reported at once, and defaults are materialised in ``Job.settings``.
    ``params.u_plus`` is derived from the 2-rarefaction curve; if supplied it
    must agree to 1e-12.

    Raises:
        ValidationError: on any of the above, or inconsistent physics.
    """
    if kind not in _SECTIONS:
        raise ValidationError(f"unknown job kind {kind!r}")
    try:
        raw = yaml.safe_load(text) if text and text.strip() else {}
    except yaml.YAMLError as exc:
        raise ValidationError(f"config is not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ValidationError("config must be a mapping of sections")
    allowed = set(_SECTIONS[kind])
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ValidationError(f"unknown section(s) for {kind}: {', '.join(unknown)}")
    missing: list[str] = []
    settings: dict = {}
    if kind == "linear":
        settings["linear"] = _section(raw, "linear", "linear", missing)
        lin = settings["linear"]
        if lin["xi"] is not None:
            for v in lin["xi"]:
                _typecheck("linear.xi[]", v, _NUM)
        return Job(kind, settings)

    model = raw.get("model")
    if model is None:
        missing.append("model")
        model_key = "params_one"
    elif model not in ("one_fluid", "two_fluid"):
        raise ValidationError(f"model must be one_fluid or two_fluid, got {model!r}")
    else:
        model_key = "params_one" if model == "one_fluid" else "params_two"
    settings["model"] = model
    settings["params"] = _section(raw, "params", model_key, missing)
    settings["grid"] = _section(raw, "grid", "grid", missing)
    g = settings["grid"]
    if g["L"] is None and (g["x_min"] is None or g["x_max"] is None):
        missing.append("grid.L (or grid.x_min and grid.x_max)")
    for name in _SECTIONS[kind][3:]:
        settings[name] = _section(raw, name, name, missing)
    if "time" not in settings:
        settings["time"] = {"t_final": 0.0}
    if missing:
        raise ValidationError("missing required key(s): " + ", ".join(missing))

    params = _build_params(settings["model"], settings["params"])
    settings["params"]["u_plus"] = params.u_plus
    grid = _build_grid(settings, params)
    settings["grid"].update(x_min=grid.x_min, x_max=grid.x_max, n_cells=grid.n_cells)
    if kind == "profile":
        for v in settings["profile"]["times"]:
            _typecheck("profile.times[]", v, _NUM)
            if v < 0:
                raise ValidationError("profile.times must be nonnegative")
        return Job(kind, settings, sim=(params, grid))
    if kind == "sweep":
        sw = settings["sweep"]
        if sw["job"] != "simulate":
            raise ValidationError("sweep.job must be simulate")
        key = sw["param"]
        section, _, name = key.partition(".")
        if not name or section not in settings or name not in settings[section]:
            raise ValidationError(f"sweep.param {key!r} does not name a config key like params.eps_smooth")
        for v in sw["values"]:
            _typecheck(f"sweep.values[] for {key}", v, _NUM)
        return Job(kind, settings)
    return Job(kind, settings, sim=_build_sim(settings, params, grid))


def _build_params(model, p):
    if model == "one_fluid":
        params = PhysParamsOne(p["A"], p["n_minus"], p["n_plus"], p["u_minus"], p["eps_smooth"])
    else:
        params = PhysParamsTwo(p["m_i"], p["m_e"], p["T_i"], p["T_e"], p["n_minus"], p["n_plus"],
                               p["u_minus"], p["eps_smooth"], p["mu_i"], p["mu_e"])
    if not params.is_r2():
        raise ValidationError("far-field states must satisfy n_plus > n_minus for a 2-rarefaction")
    given = p.get("u_plus")
    if given is not None and abs(given - params.u_plus) > 1e-12 * max(1.0, abs(params.u_plus)):
        raise ValidationError(
            f"params.u_plus={given!r} is off the 2-rarefaction curve; expected "
            f"u_minus + c*ln(n_plus/n_minus) = {params.u_plus!r} (omit it to derive)")
    return params


def _build_grid(settings, params) -> Grid1D:
    g = settings["grid"]
    if g["x_min"] is not None and g["x_max"] is not None:
        if g["n_cells"] is not None:
            return Grid1D(g["x_min"], g["x_max"], g["n_cells"])
        return Grid1D.from_spacing(g["x_min"], g["x_max"], g["dx"])
    # margin L on both sides of the fan's extent over the run
    t_end = settings.get("time", {}).get("t_final", 0.0)
    if "profile" in settings:
        t_end = max([t_end] + list(settings["profile"]["times"]))
    wave = wave_for(params)
    lo = min(0.0, wave.w_minus * (t_end + 1.0)) - g["L"]
    hi = max(0.0, wave.w_plus * (t_end + 1.0)) + g["L"]
    if g["n_cells"] is not None:
        return Grid1D(lo, hi, g["n_cells"])
    return Grid1D.from_spacing(lo, hi, g["dx"])


def _build_sim(settings, params, grid):
    from .sim import Perturbation, SimConfig

    t = settings["time"]
    return SimConfig(
        model=settings["model"], params=params, grid=grid, t_final=t["t_final"],
        cfl_number=t["cfl_number"], viscous_theta=t["viscous_theta"], output_stride=t["output_stride"],
        perturbation=Perturbation(**settings["perturbation"]), dt=t["dt"],
        sponge_width=settings["sponge"]["width"], sponge_strength=settings["sponge"]["strength"],
    )


# ---------------------------------------------------------------- output helpers

def fmt(v) -> str:
    return format(float(v), ".17g")


class _Writer:
    """Tracks every file written so the manifest is complete."""

    def __init__(self, out: Path):
        self.out = out
        self.files: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def csv(self, name, header, rows):
        path = self.out / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([fmt(v) for v in row])
        self.files.append(name)
        return path

    def json(self, name, obj):
        path = self.out / name
        with open(path, "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")
        self.files.append(name)
        return path


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return repr(o)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _finish(writer: _Writer, manifest: RunManifest) -> RunManifest:
    manifest.finished = _now()
    manifest.outputs = list(writer.files) + ["manifest.json"]
    writer.json("manifest.json", asdict(manifest))
    return manifest


# ---------------------------------------------------------------- jobs

def run_profile(job: Job, out: Path) -> RunManifest:
    params, grid = job.sim
    w = _Writer(out)
    man = RunManifest(job.digest, _version(), _now())
    w.json("config.json", job.settings)
    build = profile_onefluid if isinstance(params, PhysParamsOne) else profile_twofluid
    monotone = True
    for t in job.settings["profile"]["times"]:
        pr = build(params, float(t), grid)
        monotone &= bool(np.all(np.diff(pr.nr) >= 0))
        w.csv(f"profile_t{fmt(t)}.csv", ["x", "nr", "ur", "phir", "dnr", "dur", "dphir"],
              zip(grid.x, pr.nr, pr.ur, pr.phir, pr.dnr, pr.dur, pr.dphir))
    man.checks["nr_monotone"] = monotone
    return _finish(w, man)


STATE_COLUMNS = {"one_fluid": ["x", "n", "u", "phi"], "two_fluid": ["x", "n_i", "u_i", "n_e", "u_e", "phi"]}
ENERGY_HEADER = ["t", "E_zero", "E_first", "D_wave", "D_flat", "sup_n", "sup_u", "sup_phi"]


def _state_rows(state, grid):
    if hasattr(state, "n_i"):
        return zip(grid.x, state.n_i, state.u_i, state.n_e, state.u_e, state.phi)
    return zip(grid.x, state.n, state.u, state.phi)


def _energy_rows(reports):
    for r in reports:
        yield (r.time, r.E_zero, r.E_first, r.D_wave, r.D_flat, r.sup_n, r.sup_u, r.sup_phi)


def run_simulate(job: Job, out: Path) -> RunManifest:
    from .sim import run_simulation

    cfg = job.sim
    w = _Writer(out)
    man = RunManifest(job.digest, _version(), _now())
    w.json("config.json", job.settings)
    outs = job.settings["outputs"]
    dumps = []

    def dump(k, state):
        if outs["dump_states"] and (len(dumps) % outs["dump_stride"] == 0 or state.time >= cfg.t_final):
            name = f"state_{k:08d}.csv"
            w.csv(name, STATE_COLUMNS[cfg.model], _state_rows(state, cfg.grid))
            w.json(name.replace(".csv", ".json"), {"time": state.time, "step": k, "config_hash": job.digest})
        dumps.append(k)

    traj = run_simulation(cfg, callback=dump)
    reports = [s.report for s in traj.snapshots]
    w.csv("energy.csv", ENERGY_HEADER, _energy_rows(reports))
    man.checks["mass_balance"] = traj.mass_balance_error <= 1e-10
    man.checks["elliptic_identity"] = max(r.elliptic_identity for r in reports) <= 1e-8
    man.checks["dissipation_nonnegative"] = all(min(r.D_visc, r.D_density, r.D_flat) >= 0 for r in reports)
    if cfg.model == "two_fluid":
        man.checks["quad_form_nonnegative"] = all(r.quad_form >= 0 for r in reports)
    w.json("summary.json", {"steps": traj.steps, "t_final": cfg.t_final,
                            "mass_balance_error": traj.mass_balance_error,
                            "final_sup_n": reports[-1].sup_n, "final_sup_u": reports[-1].sup_u})
    return _finish(w, man)


def run_energy(run_dir: Path, out: Path) -> RunManifest:
    """Recompute the energy table from the state dumps of a finished ``simulate`` run."""
    from .diagnostics import energy_report
    from .sim import FluidState, TwoFluidState, profile_for

    with open(run_dir / "config.json") as fh:
        settings = json.load(fh)
    job = parse_config(yaml.safe_dump(_user_view(settings)), "simulate")
    cfg = job.sim
    files = sorted(run_dir.glob("state_*.csv"))
    if not files:
        raise ValidationError(f"no state dumps in {run_dir} (run simulate with outputs.dump_states: true)")
    reports = []
    for f in files:
        with open(f.with_suffix(".json")) as fh:
            meta = json.load(fh)
        data = np.loadtxt(f, delimiter=",", skiprows=1, ndmin=2)
        cols = data.T
        if cfg.model == "one_fluid":
            st = FluidState(meta["time"], cols[1], cols[2], cols[3])
        else:
            st = TwoFluidState(meta["time"], cols[1], cols[2], cols[3], cols[4], cols[5])
        reports.append(energy_report(st, profile_for(cfg.params, st.time, cfg.grid), cfg.params, cfg.grid))
    w = _Writer(out)
    man = RunManifest(job.digest, _version(), _now())
    w.csv("energy.csv", ENERGY_HEADER, _energy_rows(reports))
    return _finish(w, man)


def _user_view(settings):
    # drop derived entries so the stored settings re-parse
    s = json.loads(json.dumps(settings))
    s["params"].pop("u_plus", None)
    return s


def run_linear(job: Job, out: Path) -> RunManifest:
    from .linear import eigensystem, greens_matrix, mode_coefficients

    lin = job.settings["linear"]
    xs = lin["xi"] if lin["xi"] is not None else np.linspace(lin["xi_min"], lin["xi_max"], lin["xi_count"])
    w = _Writer(out)
    man = RunManifest(job.digest, _version(), _now())
    w.json("config.json", {**job.settings, "coefficient_mode": "literal" if lin["literal_mode"] else "consistent"})
    rows, grows = [], []
    stable = True
    for xi in xs:
        m = eigensystem(mode_coefficients(float(xi), lin["eps"], lin["A"], lin["literal_mode"]))
        lp, lm = m.lambda_plus, m.lambda_minus
        stable &= max(lp.real, lm.real) <= 0.0
        rows.append((xi, lp.real, lp.imag, lm.real, lm.imag, -lp.real))
        if lin["greens_t"] is not None:
            G = greens_matrix(m, lin["greens_t"])
            grows.append((xi, lin["greens_t"], *[v for z in G.ravel() for v in (z.real, z.imag)]))
    w.csv("spectrum.csv", ["xi", "re_lp", "im_lp", "re_lm", "im_lm", "decay_rate"], rows)
    if grows:
        w.csv("greens.csv", ["xi", "t", "re_G11", "im_G11", "re_G12", "im_G12",
                             "re_G21", "im_G21", "re_G22", "im_G22"], grows)
    man.checks["spectrally_stable"] = bool(stable)
    return _finish(w, man)


def _sweep_one(args):
    settings, out = args
    job = parse_config(yaml.safe_dump(_user_view(settings)), "simulate")
    man = run_simulate(job, Path(out))
    return asdict(man)


def run_sweep(job: Job, out: Path, workers: int | None = None) -> RunManifest:
    sw = job.settings["sweep"]
    section, _, name = sw["param"].partition(".")
    w = _Writer(out)
    man = RunManifest(job.digest, _version(), _now())
    tasks = []
    for i, v in enumerate(sw["values"]):
        s = json.loads(json.dumps(job.settings))
        s.pop("sweep")
        s[section][name] = v
        if "L" in s["grid"] and s["grid"]["L"] is not None:
            s["grid"]["x_min"] = s["grid"]["x_max"] = s["grid"]["n_cells"] = None
        tasks.append((s, str(out / f"run_{i:03d}")))
    workers = workers or os.cpu_count() or 1
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(_sweep_one, tasks))
    summary = []
    for (s, d), res in zip(tasks, results):
        rel = os.path.relpath(d, out)
        w.files.extend(f"{rel}/{f}" for f in res["outputs"])
        summary.append({"value": s[section][name], "dir": rel, "config_hash": res["config_hash"],
                        "checks": res["checks"]})
        for key, ok in res["checks"].items():
            man.checks[f"{rel}:{key}"] = ok
    w.json("summary.json", {"param": sw["param"], "runs": summary})
    return _finish(w, man)


def run_check(out: Path | None, criteria) -> tuple[int, list]:
    from .acceptance import run_criteria

    results = run_criteria(criteria, echo=True)
    if out is not None:
        w = _Writer(out)
        w.json("check.json", [r.as_dict() for r in results])
    return (EXIT_OK if all(r.passed for r in results) else EXIT_CHECK), results


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nsplab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", type=Path, required=config_required, help="YAML job file")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override perturbation.seed")
        return p

    common(sub.add_parser("profile", help="tabulate the smooth rarefaction profile"))
    common(sub.add_parser("simulate", help="run one simulation"))
    pe = sub.add_parser("energy", help="energy table from a simulate run's state dumps")
    pe.add_argument("run_dir", type=Path)
    pe.add_argument("--out", type=Path, default=None)
    pl = common(sub.add_parser("linear", help="per-mode spectrum and Green's matrix"))
    pl.add_argument("--greens", type=float, default=None, metavar="T", help="also emit G(T, xi)")
    ps = common(sub.add_parser("sweep", help="parallel parameter sweep"))
    ps.add_argument("--workers", type=int, default=None)
    pc = sub.add_parser("check", help="run the acceptance criteria")
    pc.add_argument("--out", type=Path, default=None)
    pc.add_argument("--criteria", default="1-9", help="e.g. 1,2,6 or 1-9")
    return ap


def _parse_criteria(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        a, _, b = part.partition("-")
        lo, hi = int(a), int(b or a)
        out.extend(range(lo, hi + 1))
    if any(c < 1 or c > 9 for c in out):
        raise ValidationError("criteria are numbered 1..9")
    return out


def _load(args, kind) -> Job:
    try:
        text = args.config.read_text()
    except OSError as exc:
        raise _IOFailure(str(exc)) from exc
    if args.seed is not None and kind in ("simulate", "sweep"):
        raw = yaml.safe_load(text) or {}
        raw.setdefault("perturbation", {})["seed"] = args.seed
        text = yaml.safe_dump(raw)
    if kind == "linear" and getattr(args, "greens", None) is not None:
        raw = yaml.safe_load(text) or {}
        raw.setdefault("linear", {})["greens_t"] = args.greens
        text = yaml.safe_dump(raw)
    return parse_config(text, kind)


class _IOFailure(Exception):
    pass


def main(argv=None) -> int:
    level = os.environ.get("NSP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "check":
            code, _ = run_check(args.out, _parse_criteria(args.criteria))
            return code
        if args.command == "energy":
            man = run_energy(args.run_dir, args.out or args.run_dir)
        else:
            job = _load(args, args.command)
            if args.command == "profile":
                man = run_profile(job, args.out)
            elif args.command == "simulate":
                man = run_simulate(job, args.out)
            elif args.command == "linear":
                man = run_linear(job, args.out)
            else:
                man = run_sweep(job, args.out, args.workers)
        for name, ok in man.checks.items():
            if not ok:
                log.error("check failed: %s", name)
        return EXIT_OK if man.passed else EXIT_CHECK
    except ValidationError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        where = f" at t={exc.time:.6g}" if getattr(exc, "time", None) is not None else ""
        print(f"numerical failure{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, _IOFailure) as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
