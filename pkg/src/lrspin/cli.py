"""Command line entry point: ``lrspin <command> [--config FILE] [--section.key=value ...]``.

Commands and what they write into ``output.dir``::

    sample     samples/L{L}/T{T}.spnl, magnetization_L{L}.csv
    scaling    scaling_L{L}.csv, tc_L{L}.csv
    thermo     thermo_L{L}.thrm, thermo_L{L}.csv
    rbm-train  rbm_L{L}.rbmw, rbm_trace_L{L}.csv
    flow       flow_L{L}_T{T}.csv (one per seed temperature)
    rg         rg/step{k}.spnl, rg_temps.csv
    stack      stack/layer{k}.rbmw, stack_trace.csv, stack_temps.csv
    vh         vh/{rg,rbm}_l{l}_a{a}.csv and .pgm, vh/manifest.csv
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import io
from .config import ConfigError, config_hash, temperature_grid
from .flow import measure_flow, rbm_flow
from .geometry import LatticeGeometry, build_kernel
from .mcmc import McmcConfig, SampleSet, run_chain
from .observables import (FitError, NoCrossingError, energy_correlator, find_tc,
                          fit_power_law, interpolate, magnetizations, spin_correlator)
from .rbm import TrainConfig, train
from .rg import rg_flow
from .stack import (DESK_LAYERS, FULL_LAYERS, StackSpec, all_maps, coarse_states,
                    propagate, rank_by_variance, train_stack)
from .thermometer import measure, train_on_samplesets


class MissingArtifact(FileNotFoundError):
    def __init__(self, path, producer):
        super().__init__(f"missing {path}; produce it with `lrspin {producer}`")
        self.producer = producer


def tlabel(T: float) -> str:
    return f"{float(T):.4f}"


class Workspace:
    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.root = Path(str(cfg["output"]["dir"]))
        self.hash = config_hash(cfg)

    def path(self, *parts) -> Path:
        return self.root.joinpath(*parts)

    def sample_path(self, L: int, T: float) -> Path:
        return self.path("samples", f"L{L}", f"T{tlabel(T)}.spnl")

    def require(self, path: Path, producer: str) -> Path:
        if not path.is_file():
            raise MissingArtifact(path, producer)
        return path

    def samples(self, L: int, T: float) -> SampleSet:
        mu = self.cfg["lattice"]["mu"]
        return io.read_samples(self.require(self.sample_path(L, T), "sample"), mu)

    def thermometer(self, L: int):
        return io.read_thermometer(self.require(self.path(f"thermo_L{L}.thrm"), "thermo"))

    def csv(self, name, header, rows, seed):
        io.write_csv(self.path(name), header, rows, f"config_hash={self.hash} seed={seed}")


@contextmanager
def locked(root: Path):
    root.mkdir(parents=True, exist_ok=True)
    lock = root / ".lrspin.lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RuntimeError(f"{root} is locked by another invocation ({lock})") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _geometry(cfg, L=None) -> LatticeGeometry:
    lat = cfg["lattice"]
    return LatticeGeometry(L or lat["L"], float(lat["alpha"]), float(lat["mu"]))


def cmd_sample(ws: Workspace) -> None:
    cfg = ws.cfg
    m = cfg["mcmc"]
    geom = _geometry(cfg)
    kernel = build_kernel(geom)
    rows = []
    for i, T in enumerate(temperature_grid(m["temps"])):
        mc = McmcConfig(T, m["burn_in"], m["stride"], m["seed"] + i)
        samples = run_chain(geom, kernel, mc, m["n_samples"])
        io.write_samples(ws.sample_path(geom.L, T), samples)
        mags = magnetizations(samples.grids)
        rows.append((T, mags.mean(), np.abs(mags).mean(), len(samples)))
    ws.csv(f"magnetization_L{geom.L}.csv", ["T", "m", "abs_m", "n_samples"], rows, m["seed"])


def _dims(samples, kernel, r_max):
    out = []
    for profile in (spin_correlator(samples), energy_correlator(samples, kernel)):
        try:
            fit = fit_power_law(profile, 1.0, r_max)
            out += [fit.delta, fit.delta_err]
        except FitError:
            out += [float("nan"), float("nan")]
    return out


def cmd_scaling(ws: Workspace) -> None:
    cfg = ws.cfg
    geom = _geometry(cfg)
    kernel = build_kernel(geom)
    rows = []
    for T in temperature_grid(cfg["mcmc"]["temps"]):
        samples = ws.samples(geom.L, T)
        ds, ds_err, de, de_err = _dims(samples, kernel, geom.L / 2)
        rows.append((T, ds, ds_err, de, de_err, np.abs(magnetizations(samples.grids)).mean()))
    seed = cfg["mcmc"]["seed"]
    ws.csv(f"scaling_L{geom.L}.csv",
           ["T", "delta_s", "delta_s_err", "delta_e", "delta_e_err", "abs_m"], rows, seed)
    tc = find_tc([(r[0], r[3]) for r in rows])
    ds_tc = interpolate([(r[0], r[1]) for r in rows], tc)
    ws.csv(f"tc_L{geom.L}.csv", ["tc", "delta_s_at_tc"], [(tc, ds_tc)], seed)
    print(f"T_c = {tc!r}  delta_s(T_c) = {ds_tc!r}")


def cmd_thermo(ws: Workspace) -> None:
    cfg = ws.cfg
    th = cfg["thermometer"]
    L = cfg["lattice"]["L"]
    temps = temperature_grid(th["temps"])
    sets = [ws.samples(L, T) for T in temps]
    model = train_on_samplesets(sets, th["epochs"], float(th["lr"]), th["seed"], th["width"],
                                th["batch"])
    io.write_thermometer(ws.path(f"thermo_L{L}.thrm"), model)
    rows = []
    for s in sets:
        r = measure(model, s)
        rows.append((s.temperature, r.mean_temperature, r.argmax_temperature,
                     model.held_out_accuracy))
    ws.csv(f"thermo_L{L}.csv", ["T", "temp_mean", "temp_argmax", "held_out_accuracy"], rows,
           th["seed"])


def _rbm_config(section: dict, steps_key="steps") -> TrainConfig:
    return TrainConfig(section[steps_key], float(section["lr"]), section["batch"],
                       section["cd_k"], section["seed"],
                       bool(section.get("mean_field_data", False)))


def cmd_rbm_train(ws: Workspace) -> None:
    cfg = ws.cfg
    r = cfg["rbm"]
    L = cfg["lattice"]["L"]
    data = np.concatenate([ws.samples(L, T).flat() for T in temperature_grid(r["temps"])])
    result = train(data, _rbm_config(r), n_hidden=r["n_hidden"])
    io.write_rbm(ws.path(f"rbm_L{L}.rbmw"), result.params)
    ws.csv(f"rbm_trace_L{L}.csv", ["step", "recon_error"],
           [(k + 1, e) for k, e in enumerate(result.recon_error)], r["seed"])


def cmd_flow(ws: Workspace) -> None:
    cfg = ws.cfg
    f = cfg["flow"]
    geom = _geometry(cfg)
    kernel = build_kernel(geom)
    params = io.read_rbm(ws.require(ws.path(f"rbm_L{geom.L}.rbmw"), "rbm-train"))
    thermo = ws.thermometer(geom.L)
    for i, T in enumerate(temperature_grid(f["seed_temperatures"])):
        seed_set = ws.samples(geom.L, T)
        trace = rbm_flow(seed_set, params, f["length"], np.random.default_rng(f["seed"] + i))
        measure_flow(trace, kernel, thermo)
        header = ["step", "delta_s", "delta_s_err", "delta_e", "delta_e_err", "temp_argmax",
                  "temp_mean"] + [f"p_{tlabel(t)}" for t in thermo.temperatures]
        rows = [[s.step, s.delta_s, s.delta_s_err, s.delta_e, s.delta_e_err,
                 s.argmax_temperature, s.mean_temperature, *s.temp_probs]
                for s in trace.steps]
        ws.csv(f"flow_L{geom.L}_T{tlabel(T)}.csv", header, rows, f["seed"] + i)


def stack_layers(cfg) -> tuple[int, ...]:
    st = cfg["stack"]
    if st["layer_sizes"]:
        return tuple(st["layer_sizes"])
    return DESK_LAYERS if st["desk_scale"] else FULL_LAYERS


def _temp_rows(ws, levels):
    """Thermometer readings for (level, flat states) pairs; sizes pick the thermometer."""
    rows, header_temps = [], None
    for level, states in levels:
        side = int(round(np.sqrt(states.shape[1])))
        thermo = ws.thermometer(side)
        r = measure(thermo, states)
        if header_temps is None:
            header_temps = thermo.temperatures
        elif not np.array_equal(header_temps, thermo.temperatures):
            raise ValueError("per-size thermometers must share one temperature grid")
        rows.append([level, side, r.mean_temperature, r.argmax_temperature, *r.probs])
    header = ["step", "L", "temp_mean", "temp_argmax"] + [f"p_{tlabel(t)}" for t in header_temps]
    return header, rows


def cmd_rg(ws: Workspace) -> None:
    cfg = ws.cfg
    st = cfg["stack"]
    side = stack_layers(cfg)[0]
    L = int(round(np.sqrt(side)))
    samples = ws.samples(L, st["temperature"])
    flow = rg_flow(samples, st["rg_steps"], np.random.default_rng(st["seed"]))
    for k, s in enumerate(flow, start=1):
        io.write_samples(ws.path("rg", f"step{k}.spnl"), s)
    header, rows = _temp_rows(ws, [(k, s.flat()) for k, s in enumerate(flow, start=1)])
    ws.csv("rg_temps.csv", header, rows, st["seed"])


def cmd_stack(ws: Workspace) -> None:
    cfg = ws.cfg
    st = cfg["stack"]
    sizes = stack_layers(cfg)
    L = int(round(np.sqrt(sizes[0])))
    samples = ws.samples(L, st["temperature"])
    configs = tuple(TrainConfig(st["steps"], float(st["lr"]), st["batch"], st["cd_k"],
                                st["seed"] + layer) for layer in range(len(sizes) - 1))
    trained = train_stack(samples, StackSpec(sizes, configs))
    for k, p in enumerate(trained.params, start=1):
        io.write_rbm(ws.path("stack", f"layer{k}.rbmw"), p)
    rows = [(k, i + 1, e) for k, tr in enumerate(trained.recon_error, start=1)
            for i, e in enumerate(tr)]
    ws.csv("stack_trace.csv", ["layer", "step", "recon_error"], rows, st["seed"])
    header, rows = _temp_rows(ws, list(enumerate(trained.hidden, start=1)))
    header[0] = "layer"
    ws.csv("stack_temps.csv", header, rows, st["seed"])


def cmd_vh(ws: Workspace) -> None:
    cfg = ws.cfg
    st, vh = cfg["stack"], cfg["vh"]
    sizes = stack_layers(cfg)
    L = int(round(np.sqrt(sizes[0])))
    samples = ws.samples(L, st["temperature"])
    params = [io.read_rbm(ws.require(ws.path("stack", f"layer{k}.rbmw"), "stack"))
              for k in range(1, len(sizes))]
    manifest = []
    for kind in ("rg", "rbm"):
        for layer in range(1, len(sizes)):
            rng = np.random.default_rng(vh["seed"] + 100 * layer + (kind == "rbm"))
            if kind == "rg":
                hidden = coarse_states(samples, layer, rng)
            else:
                hidden = propagate(samples, params, layer, rng, bool(vh["mean_field"]))
            maps = all_maps(samples, hidden)
            order = rank_by_variance(maps)
            rank = np.empty_like(order)
            rank[order] = np.arange(len(order))
            for a, m in enumerate(maps):
                stem = f"{kind}_l{layer}_a{a}"
                ws.csv(f"vh/{stem}.csv", [f"c{j}" for j in range(L)], m.tolist(), vh["seed"])
                io.write_graymap(ws.path("vh", f"{stem}.pgm"), m)
                manifest.append((kind, layer, a, float(m.var()), int(rank[a]),
                                 int(rank[a] < vh["top"]), f"{stem}.csv", f"{stem}.pgm"))
    ws.csv("vh/manifest.csv", ["kind", "layer", "index", "variance", "rank", "selected", "csv",
                               "pgm"], manifest, vh["seed"])


def required_inputs(command: str, ws: Workspace) -> list[tuple[Path, str]]:
    """(path, producing command) pairs a command reads; checked before compute."""
    cfg = ws.cfg
    L = cfg["lattice"]["L"]
    need = []
    if command == "scaling":
        need += [(ws.sample_path(L, T), "sample") for T in temperature_grid(cfg["mcmc"]["temps"])]
    elif command == "thermo":
        need += [(ws.sample_path(L, T), "sample")
                 for T in temperature_grid(cfg["thermometer"]["temps"])]
    elif command == "rbm-train":
        need += [(ws.sample_path(L, T), "sample") for T in temperature_grid(cfg["rbm"]["temps"])]
    elif command == "flow":
        need += [(ws.path(f"rbm_L{L}.rbmw"), "rbm-train"), (ws.path(f"thermo_L{L}.thrm"), "thermo")]
        need += [(ws.sample_path(L, T), "sample")
                 for T in temperature_grid(cfg["flow"]["seed_temperatures"])]
    elif command in ("rg", "stack", "vh"):
        sizes = stack_layers(cfg)
        side = int(round(np.sqrt(sizes[0])))
        need.append((ws.sample_path(side, cfg["stack"]["temperature"]), "sample"))
        if command == "vh":
            need += [(ws.path("stack", f"layer{k}.rbmw"), "stack") for k in range(1, len(sizes))]
        else:
            n_levels = cfg["stack"]["rg_steps"] if command == "rg" else len(sizes) - 1
            need += [(ws.path(f"thermo_L{side >> k}.thrm"), "thermo")
                     for k in range(1, n_levels + 1)]
    return need


COMMANDS = {
    "sample": cmd_sample,
    "scaling": cmd_scaling,
    "thermo": cmd_thermo,
    "rbm-train": cmd_rbm_train,
    "flow": cmd_flow,
    "rg": cmd_rg,
    "stack": cmd_stack,
    "vh": cmd_vh,
}


def _error(command, kind, message) -> None:
    print(f"error: command={command} kind={kind} message={json.dumps(str(message))}",
          file=sys.stderr)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="lrspin", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="INI file with [section] key = value entries")
    parser.add_argument("--seed", type=int, help="base seed; section i gets seed + i")
    args, extra = parser.parse_known_args(argv)
    overrides = []
    for item in extra:
        if not item.startswith("--"):
            _error(args.command, "usage", f"unexpected argument {item!r}")
            return 2
        overrides.append(item[2:])
    try:
        cfg = config_mod.load(args.config, overrides, args.seed)
        ws = Workspace(cfg)
        for path, producer in required_inputs(args.command, ws):
            ws.require(path, producer)
        with locked(ws.root):
            COMMANDS[args.command](ws)
    except ConfigError as exc:
        _error(args.command, "config", exc)
        return 2
    except MissingArtifact as exc:
        _error(args.command, "missing-input", exc)
        return 3
    except NoCrossingError as exc:
        _error(args.command, "no-crossing", exc)
        return 4
    except (OSError, RuntimeError) as exc:
        _error(args.command, "io", exc)
        return 5
    except ValueError as exc:
        _error(args.command, "invalid", exc)
        return 6
    return 0


if __name__ == "__main__":
    sys.exit(main())
