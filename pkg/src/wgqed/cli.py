"""Scenario runner: ``wgqed run`` and ``wgqed sweep``.

A scenario is a JSON file naming one task, a system config, task
parameters and grids.  Each run writes one data table (CSV or JSON) and a
summary record; data files are byte-for-byte reproducible.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import gme, single_photon, transient, two_photon
from .core import (ComputationError, Mode, Model, UnknownParameterPath,
                   ValidationError, Wavepacket, WgqedError, _error, check_grid,
                   config_from_dict)

IoError = _error("IoError", ValidationError)

TASKS = ("Spectrum", "G2", "TransientSpontaneous", "TransientAbsorption",
         "StimulatedOptimum", "ArrayRetardation", "MirrorEntanglement",
         "PolaritonSingle", "PolaritonPair", "GmeEvolve")


# ---------------------------------------------------------------------------
# scenario parsing
# ---------------------------------------------------------------------------

@dataclass
class Scenario:
    name: str
    task: str
    system: dict
    params: dict
    grids: dict
    output: dict
    raw: dict

    @property
    def config(self):
        return config_from_dict(self.system)

    def grid(self, key: str, required: bool = True):
        if key not in self.grids:
            if required:
                raise ValidationError(f"task {self.task} needs grids.{key}")
            return None
        return parse_grid(self.grids[key], key)


def parse_grid(spec, name: str = "grid") -> np.ndarray:
    """A grid is an explicit list or {start, stop, num[, spacing: linear|log]}."""
    if isinstance(spec, dict):
        try:
            start, stop, num = float(spec["start"]), float(spec["stop"]), int(spec["num"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{name} needs start, stop and num") from exc
        spacing = spec.get("spacing", "linear")
        if spacing == "linear":
            values = np.linspace(start, stop, num)
        elif spacing == "log":
            if start <= 0 or stop <= 0:
                raise ValidationError(f"{name}: log spacing needs positive bounds")
            values = np.geomspace(start, stop, num)
        else:
            raise ValidationError(f"{name}: unknown spacing {spacing!r}")
    else:
        values = spec
    return check_grid(values, name)


def load_scenario(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ValidationError("scenario must be a JSON object")
    unknown = set(data) - {"name", "task", "system", "params", "grids", "output", "description"}
    if unknown:
        raise ValidationError(f"unknown scenario fields {sorted(unknown)}")
    for key in ("name", "task", "system"):
        if key not in data:
            raise ValidationError(f"scenario needs '{key}'")
    if data["task"] not in TASKS:
        raise ValidationError(f"unknown task {data['task']!r}")
    sc = Scenario(str(data["name"]), data["task"], dict(data["system"]),
                  dict(data.get("params", {})), dict(data.get("grids", {})),
                  dict(data.get("output", {})), data)
    sc.config  # validates the system block
    for key, spec in sc.grids.items():
        parse_grid(spec, key)
    return sc


def read_scenario(path) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read scenario {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc.msg})") from exc
    return load_scenario(data)


def config_hash(scenario: Scenario) -> str:
    body = {k: v for k, v in scenario.raw.items() if k != "output"}
    text = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def set_path(data: dict, path: str, value) -> dict:
    """Copy of ``data`` with the dotted scalar field ``path`` replaced."""
    out = copy.deepcopy(data)
    keys = path.split(".")
    node = out
    for k in keys[:-1]:
        if not isinstance(node, dict) or k not in node:
            raise UnknownParameterPath(f"no field {path!r} in scenario")
        node = node[k]
    last = keys[-1]
    if not isinstance(node, dict) or last not in node:
        raise UnknownParameterPath(f"no field {path!r} in scenario")
    if isinstance(node[last], (dict, list)):
        raise UnknownParameterPath(f"{path!r} is not a scalar field")
    node[last] = value
    return out


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------

@dataclass
class Table:
    """Named columns; complex columns are split into _re/_im on output."""

    columns: list
    data: list
    headline: dict

    def expanded(self):
        names, cols = [], []
        for name, col in zip(self.columns, self.data):
            arr = np.asarray(col)
            if np.iscomplexobj(arr):
                names += [f"{name}_re", f"{name}_im"]
                cols += [arr.real, arr.imag]
            else:
                names.append(name)
                cols.append(arr)
        return names, cols


def _fmt(v) -> str:
    if isinstance(v, (str, np.str_)):
        return str(v)
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    x = float(v)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def _json_value(v) -> str:
    if isinstance(v, (str, np.str_)):
        return json.dumps(str(v))
    s = _fmt(v)
    return s if s not in ("nan", "inf", "-inf") else "null"


def to_csv(table: Table) -> str:
    names, cols = table.expanded()
    lines = [",".join(names)]
    n = len(cols[0]) if cols else 0
    for i in range(n):
        lines.append(",".join(_fmt(c[i]) for c in cols))
    return "\n".join(lines) + "\n"


def to_json(table: Table) -> str:
    names, cols = table.expanded()
    n = len(cols[0]) if cols else 0
    rows = []
    for i in range(n):
        fields = ", ".join(f"{json.dumps(k)}: {_json_value(c[i])}" for k, c in zip(names, cols))
        rows.append("    {" + fields + "}")
    head = ", ".join(f"{json.dumps(k)}: {_json_value(v)}" for k, v in sorted(table.headline.items()))
    body = ",\n".join(rows)
    return ("{\n  \"columns\": " + json.dumps(names) + ",\n  \"headline\": {" + head
            + "},\n  \"rows\": [\n" + body + ("\n" if rows else "") + "  ]\n}\n")


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# tasks
# ---------------------------------------------------------------------------

def _wavepacket(p: dict, prefix: str = "") -> Wavepacket:
    return Wavepacket(int(p.get(prefix + "direction", 1)), float(p.get(prefix + "gamma_wp", 1.0)),
                      float(p.get(prefix + "x0", 0.0)))


def _modes(p: dict) -> list:
    modes = p.get("modes", [p.get("mode", "markov")])
    return [Mode(str(m).lower()) for m in modes]


def task_spectrum(sc: Scenario) -> Table:
    cfg = sc.config
    k = sc.grid("k_grid")
    cols = {"mode": [], "k": [], "R": [], "T": [], "R2": [], "T2": [], "phase_R": []}
    for mode in _modes(sc.params):
        for kk in k:
            pt = single_photon.rt(cfg, float(kk), mode)
            cols["mode"].append(mode.value)
            cols["k"].append(kk)
            cols["R"].append(pt.r)
            cols["T"].append(pt.t)
            cols["R2"].append(abs(pt.r) ** 2)
            cols["T2"].append(abs(pt.t) ** 2)
            cols["phase_R"].append(float(np.angle(pt.r)))
    i0 = int(np.argmin(np.abs(np.asarray(cols["k"]))))
    head = {"T0_sq": cols["T2"][i0], "R0_sq": cols["R2"][i0]}
    return Table(list(cols), [np.asarray(v) for v in cols.values()], head)


def _pair_psi(cfg, k1, k2, mode, x):
    model = cfg.model
    if model == Model.TWO_LEVEL:
        return two_photon.psi2_two_level(k1, k2, cfg.rates[0])
    if model == Model.JAYNES_CUMMINGS:
        return two_photon.psi2_jc(k1, k2, cfg.jc.g, cfg.rates[0])
    if model == Model.TWO_LEVEL_ARRAY:
        return two_photon.psi2_array(cfg, k1, k2, mode, x_grid=np.abs(x))
    if model == Model.RYDBERG_EIT_ARRAY:
        return two_photon.psi2_rydberg(cfg, k1, k2)
    raise ValidationError("G2 is not available for the mirror model")


def task_g2(sc: Scenario) -> Table:
    """quantity: g2_x (g2 vs x at fixed E), g2_zero (g2(0) vs E), tmatrix (vs d)."""
    p = sc.params
    quantity = p.get("quantity", "g2_x")
    if quantity == "tmatrix":
        return _task_tmatrix(sc)
    variants = p.get("variants", [{}])
    cols = {"variant": [], "mode": [], "E": [], "x": [], "g2": []}
    for var in variants:
        system = copy.deepcopy(sc.system)
        for key, val in var.items():
            node = system
            parts = key.split(".")
            for part in parts[:-1]:
                node = node.setdefault(part, {})
            node[parts[-1]] = val
        cfg = config_from_dict(system)
        label = ",".join(f"{k}={v}" for k, v in sorted(var.items())) or "base"
        for mode in _modes(p):
            if quantity == "g2_x":
                x = sc.grid("x_grid")
                E = float(p.get("E", 0.0))
                psi = _pair_psi(cfg, E / 2, E / 2, mode, x)
                vals = two_photon.g2(psi, x)
                es = np.full(x.size, E)
            elif quantity == "g2_zero":
                es = sc.grid("E_grid")
                x = np.zeros(es.size)
                vals = np.array([two_photon.g2(_pair_psi(cfg, e / 2, e / 2, mode, np.array([0.0])),
                                               np.array([0.0]))[0] for e in es])
            else:
                raise ValidationError(f"unknown G2 quantity {quantity!r}")
            cols["variant"] += [label] * len(vals)
            cols["mode"] += [mode.value] * len(vals)
            cols["E"] += list(es)
            cols["x"] += list(x)
            cols["g2"] += list(vals)
    g = np.asarray(cols["g2"])
    i0 = int(np.argmin(np.abs(np.asarray(cols["x"]))))
    return Table(list(cols), [np.asarray(v) for v in cols.values()], {"g2_0": float(g[i0])})


def _task_tmatrix(sc: Scenario) -> Table:
    p = sc.params
    E = float(p.get("E", 1.0))
    ds = sc.grid("d_grid")
    n = int(sc.system.get("n", 2))
    cols = {"mode": [], "d": [], "T11": [], "T12": []}
    for mode in _modes(p):
        for d in ds:
            system = dict(sc.system, n=n, d=float(d))
            system.pop("positions", None)
            cfg = config_from_dict(system)
            tm = two_photon.tmatrix(cfg, E, mode)
            mat = tm.matrix
            m = cfg.n_emitters
            cols["mode"].append(mode.value)
            cols["d"].append(d)
            # hardcore channels (1,1) and (2,2) of the ordered pair basis
            cols["T11"].append(mat[0, 0])
            cols["T12"].append(mat[0, m + 1])
    t11 = np.abs(np.asarray(cols["T11"]))
    return Table(list(cols), [np.asarray(v) for v in cols.values()], {"max_abs_T11": float(t11.max())})


def task_spontaneous(sc: Scenario) -> Table:
    p = sc.params
    gamma = float(p.get("gamma", sc.config.rates[0]))
    T = float(p.get("T", 10.0))
    x = sc.grid("x_grid")
    direction = int(p.get("direction", 1))
    psi = transient.spontaneous_field(gamma, T, x, direction)
    return Table(["x", "psi", "prob"], [x, psi, np.abs(psi) ** 2],
                 {"emitted_norm": transient.spontaneous_norm(gamma, T)})


def task_absorption(sc: Scenario) -> Table:
    p = sc.params
    t = sc.grid("t_grid")
    gamma = float(sc.config.rates[0])
    x0 = float(p.get("x0", 0.0))
    widths = p.get("gamma_wp_list", [p.get("gamma_wp", 1.0)])
    cols = {"gamma_wp": [], "T": [], "A": [], "prob": []}
    for g in widths:
        a = transient.absorption_amplitude(float(g), x0, t, gamma)
        cols["gamma_wp"] += [float(g)] * t.size
        cols["T"] += list(t)
        cols["A"] += list(a)
        cols["prob"] += list(np.abs(a) ** 2)
    return Table(list(cols), [np.asarray(v) for v in cols.values()],
                 {"max_prob": float(np.max(cols["prob"]))})


def task_stimulated(sc: Scenario) -> Table:
    gamma = float(sc.config.rates[0])
    opt = transient.stimulated_optimum(gamma, n=int(sc.params.get("n", 600)))
    return Table(["x", "f", "f_exact"], [opt.x, opt.f, opt.f_exact],
                 {"lambda_max": opt.lambda_max, "l2_error": opt.l2_error})


def task_retardation(sc: Scenario) -> Table:
    """quantity: excitation (A(j,T) exact and Markov) or field (A_r, A_l at T)."""
    cfg = sc.config
    p = sc.params
    quantity = p.get("quantity", "excitation")
    if quantity == "field":
        x = sc.grid("x_grid")
        T = float(p["T"])
        mode = Mode(p.get("mode", "exact"))
        ar = transient.field_amplitude(cfg, x, T, 1, mode)
        al = transient.field_amplitude(cfg, x, T, -1, mode)
        return Table(["x", "A_r", "A_l"], [x, ar, al],
                     {"emitter_prob": float(sum(abs(transient.excitation_amplitude(cfg, j, T, mode)) ** 2
                                                for j in range(cfg.n_emitters)))})
    t = sc.grid("t_grid")
    j = int(p.get("emitter", 1))
    ex = transient.excitation_amplitude(cfg, j, t, Mode.EXACT)
    mk = transient.excitation_amplitude(cfg, j, t, Mode.MARKOV)
    dev = float(np.max(np.abs(ex - mk)))
    return Table(["T", "A_exact", "A_markov", "P_exact", "P_markov"],
                 [t, ex, mk, np.abs(ex) ** 2, np.abs(mk) ** 2],
                 {"markov_deviation": dev, "P_final": float(abs(ex[-1]) ** 2)})


def task_mirror_entanglement(sc: Scenario) -> Table:
    cfg = sc.config
    p = sc.params
    n = int(p.get("n", 256))
    widths = p.get("gamma_wp_list", [p.get("gamma_wp", 1.0)])
    rows = {"gamma_wp": [], "entropy": [], "norm": []}
    for g in widths:
        pair = two_photon.entangled_pair(cfg, Wavepacket(1, float(g), 0.0), n=n)
        rows["gamma_wp"].append(float(g))
        rows["norm"].append(pair.norm)
        rows["entropy"].append(pair.entropy())
    return Table(list(rows), [np.asarray(v) for v in rows.values()],
                 {"entropy": float(rows["entropy"][0])})


def task_polariton_single(sc: Scenario) -> Table:
    cfg = sc.config
    t = sc.grid("t_grid")
    amps = transient.single_excitation_amplitudes(cfg, _wavepacket(sc.params), t)
    n = cfg.n_emitters
    cols = {"T": [], "site": [], "P_e": [], "P_s": []}
    for k, tk in enumerate(t):
        for i in range(n):
            cols["T"].append(tk)
            cols["site"].append(i)
            cols["P_e"].append(abs(amps[k, i]) ** 2)
            cols["P_s"].append(abs(amps[k, n + i]) ** 2)
    ps = np.asarray(cols["P_s"]).reshape(t.size, n)
    return Table(list(cols), [np.asarray(v) for v in cols.values()],
                 {"max_P_e": float(np.max(cols["P_e"])), "max_total_P_s": float(ps.sum(1).max())})


def task_polariton_pair(sc: Scenario) -> Table:
    cfg = sc.config
    p = sc.params
    t = sc.grid("t_grid")
    wp1 = _wavepacket(p, "wp1_")
    wp2 = _wavepacket(p, "wp2_")
    hist = transient.polariton_pair_history(cfg, wp1, wp2, t, p.get("geometry", "counter"))
    n = cfg.n_emitters
    cols = {"T": [], "i1": [], "i2": [], "P_ss": []}
    for k, tk in enumerate(t):
        block = np.abs(hist.amplitudes[k, n:, n:]) ** 2
        for i1 in range(n):
            for i2 in range(n):
                cols["T"].append(tk)
                cols["i1"].append(i1)
                cols["i2"].append(i2)
                cols["P_ss"].append(block[i1, i2])
    return Table(list(cols), [np.asarray(v) for v in cols.values()],
                 {"total_P_ss": float(np.sum(np.abs(hist.amplitudes[-1, n:, n:]) ** 2))})


def task_gme(sc: Scenario) -> Table:
    cfg = sc.config
    p = sc.params
    t = sc.grid("t_grid")
    photons = int(p.get("photons", 1))
    wp = _wavepacket(p)
    hier = gme.evolve_hierarchy(cfg, wp, float(t[-1]), dt=float(p.get("dt", 0.005)),
                                photons=photons, t_start=float(t[0]), times=t)
    pops = gme.populations(hier, photons)
    labels = hier.space.labels
    cols = ["T"] + [f"P_{i}{kind}" for i, kind in labels]
    return Table(cols, [hier.times] + [pops[:, a] for a in range(len(labels))],
                 {"max_population": float(pops.max()), "step_error": hier.error_estimate})


RUNNERS = {
    "Spectrum": task_spectrum, "G2": task_g2,
    "TransientSpontaneous": task_spontaneous, "TransientAbsorption": task_absorption,
    "StimulatedOptimum": task_stimulated, "ArrayRetardation": task_retardation,
    "MirrorEntanglement": task_mirror_entanglement, "PolaritonSingle": task_polariton_single,
    "PolaritonPair": task_polariton_pair, "GmeEvolve": task_gme,
}


# ---------------------------------------------------------------------------
# run / sweep
# ---------------------------------------------------------------------------

def run(scenario: Scenario, output_dir, fmt: str | None = None, stem: str | None = None) -> dict:
    """Run one scenario and write ``<stem>.<fmt>`` plus ``<stem>.summary.json``."""
    fmt = (fmt or scenario.output.get("format", "csv")).lower()
    if fmt not in ("csv", "json"):
        raise ValidationError(f"unknown output format {fmt!r}")
    stem = stem or scenario.output.get("path", scenario.name)
    out = Path(output_dir)
    start = time.perf_counter()
    try:
        table = RUNNERS[scenario.task](scenario)
    except WgqedError as exc:
        exc.context.setdefault("scenario", scenario.name)
        raise
    wall = time.perf_counter() - start
    text = to_csv(table) if fmt == "csv" else to_json(table)
    data_path = out / f"{stem}.{fmt}"
    try:
        atomic_write(data_path, text)
        summary = {"name": scenario.name, "task": scenario.task,
                   "config_hash": config_hash(scenario), "wall_time": round(wall, 3),
                   "headline": {k: float(v) for k, v in table.headline.items()},
                   "output": data_path.name}
        atomic_write(out / f"{stem}.summary.json", json.dumps(summary, indent=2) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write to {out}: {exc.strerror}") from exc
    return summary


def _sweep_one(args):
    data, param, value, output_dir, fmt, stem = args
    sc = load_scenario(set_path(data, param, value))
    return value, run(sc, output_dir, fmt, stem)


def sweep(scenario: Scenario, param: str, values, output_dir, fmt: str | None = None,
          threads: int = 1) -> list:
    """Run the scenario once per value of the dotted field ``param``."""
    set_path(scenario.raw, param, 0.0)      # path check before any work
    values = sorted(float(v) for v in values)
    fmt = (fmt or scenario.output.get("format", "csv")).lower()
    base = scenario.output.get("path", scenario.name)
    jobs = [(scenario.raw, param, v, output_dir, fmt, f"{base}__{param}={_fmt(v)}") for v in values]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    head_names = sorted(results[0][1]["headline"]) if results else []
    lines = [",".join(["value"] + head_names + ["output"])]
    for v, summ in results:
        lines.append(",".join([_fmt(v)] + [_fmt(summ["headline"][h]) for h in head_names]
                              + [summ["output"]]))
    try:
        atomic_write(Path(output_dir) / f"{base}.index.csv", "\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write index: {exc.strerror}") from exc
    return results


def _parse_values(text: str) -> list:
    text = text.strip()
    if not text:
        return []
    if text.startswith("["):
        try:
            return [float(v) for v in json.loads(text)]
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad --values list {text!r}") from exc
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ValidationError(f"bad --values list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wgqed", description="Waveguide QED scenario runner")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep"):
        sp = sub.add_parser(name)
        sp.add_argument("scenario", help="scenario JSON file")
        sp.add_argument("--output-dir", default=".", help="directory for artifacts")
        sp.add_argument("--format", choices=("csv", "json"), default=None)
        sp.add_argument("--threads", type=int, default=1)
        if name == "sweep":
            sp.add_argument("--param", required=True, help="dotted scalar field, e.g. params.gamma_wp")
            sp.add_argument("--values", required=True, help="comma list or JSON array")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ValidationError("--threads must be >= 1")
        os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
        sc = read_scenario(args.scenario)
        if args.command == "run":
            summary = run(sc, args.output_dir, args.format)
            print(json.dumps(summary))
        else:
            results = sweep(sc, args.param, _parse_values(args.values), args.output_dir,
                            args.format, args.threads)
            for v, summ in results:
                print(json.dumps({"value": v, **summ}))
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ComputationError as exc:
        ctx = f" [{exc.context['scenario']}]" if "scenario" in exc.context else ""
        print(f"error: {exc}{ctx}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
