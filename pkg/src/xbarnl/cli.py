"""
Command-line front end.

Every command reads one YAML project file whose keys carry their units
(``fs_ghz``, ``g_uw_per_k``, ...), writes its artifacts into ``--out`` and
stamps each file with the config hash and the conventions in force.

Exit status: 0 success, 2 invalid configuration, 3 numerical failure,
4 file I/O problem.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__, cal, drive, imd, ladder, mbvd, rfnet
from .platforms import get_platform
from .thermal import ThermalNode

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

COMMANDS = ("simulate", "fit", "power-sweep", "imd3", "calibrate", "reduce", "report")

# sections each command needs (a ``platform`` key stands in for the circuit ones)
_CIRCUIT = ("resonators", "topology", "sweep")
REQUIRED = {
    "simulate": _CIRCUIT,
    "fit": ("fit",),
    "power-sweep": _CIRCUIT + ("power_sweep",),
    "imd3": ("resonators", "topology", "two_tone"),
    "calibrate": ("calibration",),
    "reduce": ("reduce",),
    "report": (),
}


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.problems))


# ---------------------------------------------------------------------------
# configuration


def _num(d, key, problems, where, positive=False, default=None, required=True):
    if key not in d:
        if required and default is None:
            problems.append(f"{where}: missing '{key}'")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        problems.append(f"{where}.{key}: expected a number, got {v!r}")
        return default
    if positive and not v > 0:
        problems.append(f"{where}.{key}: must be > 0, got {v}")
        return default
    return float(v)


def _power_list(spec, problems, where):
    if isinstance(spec, list):
        if not spec or not all(isinstance(p, (int, float)) and not isinstance(p, bool) for p in spec):
            problems.append(f"{where}: power list must be non-empty numbers")
            return None
        return np.array(spec, dtype=float)
    if isinstance(spec, dict):
        a = _num(spec, "start", problems, where)
        b = _num(spec, "stop", problems, where)
        s = _num(spec, "step", problems, where, positive=True)
        if None in (a, b, s):
            return None
        if b < a:
            problems.append(f"{where}: stop must be >= start")
            return None
        n = int(np.floor((b - a) / s + 1e-9)) + 1
        return a + s * np.arange(n)
    problems.append(f"{where}: expected a list or a start/stop/step mapping")
    return None


def _resonator(d, problems, where):
    if not isinstance(d, dict):
        problems.append(f"{where}: expected a mapping")
        return None
    if "fs_ghz" in d:
        fs = _num(d, "fs_ghz", problems, where, True)
        k2 = _num(d, "k2", problems, where, True)
        q = _num(d, "q", problems, where, True)
        c0 = _num(d, "c0_ff", problems, where, True)
        if None in (fs, k2, q, c0):
            return None
        try:
            p = mbvd.from_specs(fs * 1e9, k2, q, c0 * 1e-15)
        except ValueError as exc:
            problems.append(f"{where}: {exc}")
            return None
        rs = _num(d, "rs_ohm", problems, where, default=0.0, required=False)
        ls = _num(d, "ls_ph", problems, where, default=0.0, required=False)
        return mbvd.MbvdParams(p.c0, p.cm, p.lm, p.rm, rs, ls * 1e-12)
    vals = {}
    for key, scale in (("c0_ff", 1e-15), ("cm_ff", 1e-15), ("lm_nh", 1e-9), ("rm_ohm", 1.0)):
        v = _num(d, key, problems, where, positive=key != "rm_ohm")
        vals[key] = None if v is None else v * scale
    rs = _num(d, "rs_ohm", problems, where, default=0.0, required=False)
    ls = _num(d, "ls_ph", problems, where, default=0.0, required=False)
    if None in vals.values():
        return None
    try:
        return mbvd.MbvdParams(vals["c0_ff"], vals["cm_ff"], vals["lm_nh"], vals["rm_ohm"], rs, ls * 1e-12)
    except ValueError as exc:
        problems.append(f"{where}: {exc}")
        return None


@dataclass
class ProjectConfig:
    raw: dict
    path: str
    digest: str
    name: str = "project"
    seed: int = 0
    tcf: float = -80.0
    topology: ladder.LadderTopology | None = None
    grid: rfnet.FrequencyGrid | None = None
    z_ref: float = 50.0
    extra: dict = field(default_factory=dict)

    @property
    def header(self):
        return [f"xbarnl {__version__}", f"config: {os.path.basename(self.path)}",
                f"config_sha256: {self.digest}", f"seed: {self.seed}",
                "conventions: " + json.dumps(self.extra.get("conventions", {}), sort_keys=True)]


def load_config(path, command, seed=None):
    """Parse and validate ``path`` for ``command``; raises ConfigError with every problem."""
    try:
        text = Path(path).read_text()
    except OSError:
        raise
    digest = hashlib.sha256(text.encode()).hexdigest()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"YAML parse error: {exc}"]) from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be a mapping"])
    return validate(raw, command, path, digest, seed)


def validate(raw, command, path="<memory>", digest="", seed=None):
    problems = []
    cfg = ProjectConfig(raw, path, digest)
    cfg.name = str(raw.get("name", Path(path).stem if path != "<memory>" else "project"))
    s = raw.get("seed", 0)
    if not isinstance(s, int) or isinstance(s, bool):
        problems.append(f"seed: expected an integer, got {s!r}")
        s = 0
    cfg.seed = int(seed) if seed is not None else s
    cfg.tcf = _num(raw, "tcf_ppm_per_k", problems, "<root>", default=-80.0, required=False)
    cfg.z_ref = _num(raw, "z_ref_ohm", problems, "<root>", positive=True, default=50.0, required=False)

    needed = list(REQUIRED[command])
    if "platform" in raw:
        needed = [k for k in needed if k not in ("resonators", "topology")]
    missing = [k for k in needed if k not in raw]
    for k in missing:
        problems.append(f"missing section '{k}' (required by '{command}')")

    # thermal nodes
    nodes = {}
    for name, d in (raw.get("thermal_nodes") or {}).items():
        where = f"thermal_nodes.{name}"
        if not isinstance(d, dict):
            problems.append(f"{where}: expected a mapping")
            continue
        g = _num(d, "g_uw_per_k", problems, where, True)
        if "tau_us" in d:
            tau = _num(d, "tau_us", problems, where, True)
            if None not in (g, tau):
                nodes[name] = ThermalNode.from_tau(g * 1e-6, tau * 1e-6)
        else:
            c = _num(d, "c_nj_per_k", problems, where, True)
            if None not in (g, c):
                nodes[name] = ThermalNode(g * 1e-6, c * 1e-9)

    # circuit
    if "platform" in raw:
        try:
            plat = get_platform(str(raw["platform"]))
            cfg.topology = plat.filter()
            cfg.extra["platform"] = plat
            if "tcf_ppm_per_k" not in raw:
                cfg.tcf = plat.tcf
        except ValueError as exc:
            problems.append(f"platform: {exc}")
    elif "resonators" in raw or "topology" in raw:
        res = {}
        rsec = raw.get("resonators")
        if not isinstance(rsec, dict) or not rsec:
            problems.append("resonators: expected a non-empty mapping")
            rsec = {}
        for name, d in rsec.items():
            p = _resonator(d, problems, f"resonators.{name}")
            if p is not None:
                res[name] = p
        branches = []
        tsec = raw.get("topology")
        if not isinstance(tsec, list) or not tsec:
            problems.append("topology: expected a non-empty list of branches")
            tsec = []
        for i, b in enumerate(tsec):
            where = f"topology[{i}]"
            if not isinstance(b, dict):
                problems.append(f"{where}: expected a mapping")
                continue
            orient = b.get("orientation")
            if orient not in ("series", "shunt"):
                problems.append(f"{where}.orientation: must be 'series' or 'shunt', got {orient!r}")
            rname = b.get("resonator")
            if rname not in rsec:
                problems.append(f"{where}.resonator: unknown resonator {rname!r}")
            tname = b.get("thermal")
            if tname is not None and tname not in (raw.get("thermal_nodes") or {}):
                problems.append(f"{where}.thermal: unknown thermal node {tname!r}")
            eps = _num(b, "eps_per_v2", problems, where, default=0.0, required=False)
            if orient in ("series", "shunt") and rname in res and (tname is None or tname in nodes):
                branches.append(ladder.Branch(orient, res[rname], nodes.get(tname), eps or 0.0, f"b{i}"))
        if branches and len(branches) == len(tsec):
            cfg.topology = ladder.LadderTopology(branches)

    if "sweep" in raw:
        sw = raw["sweep"]
        if not isinstance(sw, dict):
            problems.append("sweep: expected a mapping")
        else:
            a = _num(sw, "f_start_ghz", problems, "sweep", True)
            b = _num(sw, "f_stop_ghz", problems, "sweep", True)
            n = sw.get("points")
            if not isinstance(n, int) or isinstance(n, bool) or n < 2:
                problems.append(f"sweep.points: expected an integer >= 2, got {n!r}")
                n = None
            if None not in (a, b, n):
                if b <= a:
                    problems.append("sweep: f_stop_ghz must exceed f_start_ghz")
                else:
                    cfg.grid = rfnet.FrequencyGrid.linspace(a * 1e9, b * 1e9, n)

    conv = {"z_ref_ohm": cfg.z_ref, "tcf_ppm_per_k": cfg.tcf}
    if command == "power-sweep" and isinstance(raw.get("power_sweep"), dict):
        ps = raw["power_sweep"]
        cfg.extra["powers"] = _power_list(ps.get("powers_dbm"), problems, "power_sweep.powers_dbm")
        cfg.extra["probe"] = _num(ps, "probe_ghz", problems, "power_sweep", True)
        cfg.extra["edge"] = _num(ps, "edge_level_db", problems, "power_sweep", True, 2.0, False)
        cfg.extra["coupling"] = _num(ps, "coupling", problems, "power_sweep", True, None, False)
        cfg.extra["target_df"] = _num(ps, "calibrate_delta_f_mhz", problems, "power_sweep", True,
                                      None, False)
        cfg.extra["touchstones"] = bool(ps.get("write_touchstones", False))
        conv["reference_power"] = "lowest swept power"
    if command in ("imd3", "reduce"):
        sec = raw.get("two_tone") if command == "imd3" else raw.get("reduce")
        if isinstance(sec, dict):
            where = "two_tone" if command == "imd3" else "reduce"
            pc = sec.get("power_convention", "per_tone")
            if pc not in ("per_tone", "total"):
                problems.append(f"{where}.power_convention: must be 'per_tone' or 'total'")
            cfg.extra["power_convention"] = pc
            cfg.extra["noise_floor"] = _num(sec, "noise_floor_dbm", problems, where, default=-110.0,
                                            required=False)
            mp = sec.get("min_points", 4)
            if not isinstance(mp, int) or mp < 1:
                problems.append(f"{where}.min_points: expected a positive integer")
            cfg.extra["min_points"] = mp
            conv.update(power_convention=pc, noise_floor_dbm=cfg.extra["noise_floor"])
            if command == "imd3":
                cfg.extra["df"] = _num(sec, "delta_f_mhz", problems, where, True)
                cfg.extra["powers"] = _power_list(sec.get("powers_dbm"), problems, f"{where}.powers_dbm")
                cfg.extra["f_start"] = _num(sec, "f_start_ghz", problems, where, True)
                cfg.extra["f_stop"] = _num(sec, "f_stop_ghz", problems, where, True)
                cfg.extra["f_step"] = _num(sec, "f_step_ghz", problems, where, True)
                cfg.extra["repeats"] = sec.get("repeats", 1)
                cfg.extra["noise_db"] = _num(sec, "noise_db", problems, where, default=0.0, required=False)
                cfg.extra["thermal_coupling"] = _num(sec, "thermal_coupling", problems, where, True, 1.0,
                                                     False)
                mech = sec.get("mechanisms", ["cubic"])
                if not isinstance(mech, list) or not set(mech) <= {"cubic", "thermal"} or not mech:
                    problems.append(f"{where}.mechanisms: list drawn from 'cubic', 'thermal'")
                cfg.extra["mechanisms"] = tuple(mech) if isinstance(mech, list) else ("cubic",)
                anchor = sec.get("anchor")
                if anchor is not None:
                    if not isinstance(anchor, dict):
                        problems.append(f"{where}.anchor: expected a mapping")
                    else:
                        cfg.extra["anchor"] = (_num(anchor, "f_ghz", problems, f"{where}.anchor", True),
                                               _num(anchor, "iip3_dbm", problems, f"{where}.anchor"))
                conv["mechanisms"] = list(cfg.extra["mechanisms"])
            else:
                path = sec.get("two_tone_csv")
                if not isinstance(path, str):
                    problems.append("reduce.two_tone_csv: expected a file path")
                cfg.extra["csv"] = path
    if command == "fit" and isinstance(raw.get("fit"), dict):
        path = raw["fit"].get("admittance_csv")
        if not isinstance(path, str):
            problems.append("fit.admittance_csv: expected a file path")
        cfg.extra["csv"] = path
        cfg.extra["fit_routing"] = bool(raw["fit"].get("fit_routing", True))
    if command == "calibrate" and isinstance(raw.get("calibration"), dict):
        _validate_calibration(raw["calibration"], problems, cfg)
    cfg.extra["conventions"] = conv
    if problems:
        raise ConfigError(problems)
    return cfg


def _validate_calibration(c, problems, cfg):
    where = "calibration"
    thru = c.get("thru")
    lines = c.get("lines")
    if not isinstance(thru, dict):
        problems.append(f"{where}.thru: expected a mapping with length_m (or length_um) and waves")
    if not isinstance(lines, list) or not lines:
        problems.append(f"{where}.lines: expected a non-empty list")
        lines = []
    for i, ln in enumerate([thru] + lines if isinstance(thru, dict) else lines):
        w = f"{where}.{'thru' if (isinstance(thru, dict) and i == 0) else 'lines'}"
        if not isinstance(ln, dict):
            problems.append(f"{w}: expected a mapping")
            continue
        if "length_m" in ln:
            _num(ln, "length_m", problems, w)
        else:
            _num(ln, "length_um", problems, w)
        if not isinstance(ln.get("waves"), str):
            problems.append(f"{w}.waves: expected a file path")
    for key in ("reflect",):
        if not isinstance(c.get(key), dict) or not isinstance(c[key].get("waves"), str):
            problems.append(f"{where}.{key}.waves: expected a file path")
    g = c.get("reflect_guess", -1)
    if g not in (1, -1):
        problems.append(f"{where}.reflect_guess: must be +1 or -1")
    res = c.get("resistor")
    if res is not None:
        if not isinstance(res, dict) or not isinstance(res.get("waves"), str):
            problems.append(f"{where}.resistor.waves: expected a file path")
        else:
            _num(res, "r_dc_ohm", problems, f"{where}.resistor", True)
    duts = c.get("duts", [])
    if not isinstance(duts, list):
        problems.append(f"{where}.duts: expected a list")
    else:
        names = [d.get("name") for d in duts if isinstance(d, dict)]
        if len(names) != len(set(names)):
            problems.append(f"{where}.duts: duplicate DUT names")
        for i, d in enumerate(duts):
            if not isinstance(d, dict) or not isinstance(d.get("waves"), str) or not d.get("name"):
                problems.append(f"{where}.duts[{i}]: needs 'name' and 'waves'")
    _num(c, "plane_offset_um", problems, where, default=20.0, required=False)
    _num(c, "z_target_ohm", problems, where, True, 50.0, False)
    _num(c, "ereff_est", problems, where, True, None, False)


# ---------------------------------------------------------------------------
# output helpers


class _Outputs:
    """Tracks written files so a failed command leaves nothing behind."""

    def __init__(self, out_dir, header):
        self.dir = Path(out_dir)
        self.header = header
        self.written = []

    def path(self, name):
        p = self.dir / name
        self.written.append(p)
        return p

    def csv(self, name, columns, rows):
        p = self.path(name)
        with open(p, "w", newline="") as fh:
            for h in self.header:
                fh.write(f"# {h}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
        return p

    def text(self, name, text):
        p = self.path(name)
        p.write_text(text)
        return p

    def touchstone(self, name, net, fmt):
        return self.text(name, rfnet.write_touchstone(net, format=fmt, comments=self.header))

    def rollback(self):
        for p in self.written:
            try:
                p.unlink()
            except FileNotFoundError:
                pass


def _fmt(v):
    if isinstance(v, str):
        return v
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return "nan"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


def _p_tone(p, convention):
    return p - 10 * np.log10(2) if convention == "total" else p


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg, out, args):
    net = ladder.assemble(cfg.topology, cfg.grid, cfg.z_ref)
    out.touchstone(f"{cfg.name}.s2p", net, args.format)
    m = ladder.filter_metrics(net)
    out.csv("metrics.csv", ["name", "fc_Hz", "il_dB", "fbw3_pct", "oob_dB", "rl_min_dB", "iip3_dBm",
                            "size_mm2"],
            [[cfg.name, m.fc, m.il, 100 * m.fbw3, m.oob, m.rl_min, cfg.raw.get("iip3_dbm"),
              cfg.raw.get("size_mm2")]])
    plat = cfg.extra.get("platform")
    if plat is not None:
        # published hardware row, for side-by-side reports
        ms = plat.measured
        out.csv("measured.csv", ["name", "fc_Hz", "il_dB", "fbw3_pct", "oob_dB", "rl_min_dB", "iip3_dBm",
                                 "size_mm2"],
                [[plat.name, ms["fc"], ms["il"], 100 * ms["fbw3"], None, None, plat.iip3_dbm,
                  cfg.raw.get("size_mm2")]])
    return f"fc = {m.fc / 1e9:.3f} GHz, IL = {m.il:.2f} dB, FBW3 = {100 * m.fbw3:.1f} %, OoB = {m.oob:.1f} dB"


def cmd_fit(cfg, out, args):
    base = Path(cfg.path).parent
    f, y = mbvd.read_admittance_csv(base / cfg.extra["csv"])
    r = mbvd.fit_mbvd(f, y, fit_routing=cfg.extra["fit_routing"])
    p, m = r.params, r.metrics
    out.csv("fit.csv", ["c0_F", "cm_F", "lm_H", "rm_ohm", "rs_ohm", "ls_H", "fs_Hz", "fp_Hz", "k2", "q",
                        "residual_rms"],
            [[p.c0, p.cm, p.lm, p.rm, p.rs, p.ls, m.fs, m.fp, m.k2, m.q, r.residual_rms]])
    return f"fs = {m.fs / 1e9:.4f} GHz, k2 = {100 * m.k2:.2f} %, Q = {m.q:.1f}"


def cmd_power_sweep(cfg, out, args):
    e = cfg.extra
    coupling = e["coupling"]
    if coupling is None:
        if e["target_df"] is not None:
            coupling = drive.calibrate_coupling(cfg.topology, cfg.grid, cfg.tcf, e["target_df"] * 1e6,
                                                e["powers"][0], e["powers"][-1], e["edge"])
        else:
            coupling = 1.0
    r = drive.power_sweep(cfg.topology, cfg.grid, e["powers"], cfg.tcf, e["probe"] * 1e9, e["edge"],
                          coupling)
    out.header = out.header + [f"heating_coupling: {coupling:.12g}"]
    out.csv("power_sweep.csv", ["power_dBm", "delta_il_dB", "delta_f_Hz"],
            zip(r.powers, r.delta_il, r.delta_f))
    if e["touchstones"]:
        for p, net in zip(r.powers, r.networks):
            out.touchstone(f"{cfg.name}_{p:+.1f}dBm.s2p", net, args.format)
    return f"max |dIL| = {r.max_abs_delta_il:.3f} dB, max |df| = {r.max_abs_delta_f / 1e6:.1f} MHz"


def _threaded_map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def cmd_imd3(cfg, out, args):
    e = cfg.extra
    conv = e["power_convention"]
    powers = _p_tone(e["powers"], conv)
    top = cfg.topology
    kw = dict(mechanisms=e["mechanisms"], tcf=cfg.tcf, thermal_coupling=e["thermal_coupling"])
    stim = imd.TwoToneStimulus(e["f_start"] * 1e9, e["df"] * 1e6)
    if "anchor" in e:
        fa, target = e["anchor"]
        eps = imd.calibrate_eps(top, stim.at(f1=fa * 1e9), powers, target, e["noise_floor"],
                                min_points=e["min_points"], **kw)
        top = top.with_eps(eps)
        out.header = out.header + [f"eps_per_v2: {eps:.12g}"]
    freqs = imd.sweep_frequencies(e["f_start"] * 1e9, e["f_stop"] * 1e9, e["f_step"] * 1e9)
    rng = np.random.default_rng(cfg.seed)
    seeds = rng.integers(0, 2**63 - 1, size=freqs.size)

    def one(i):
        f = float(freqs[i])
        recs = imd.power_sweep_records(top, stim.at(f1=f), powers, noise_floor=e["noise_floor"], **kw)
        [(_, res)] = imd.iip3_vs_frequency(top, f, f + 0.5 * e["f_step"] * 1e9, e["f_step"] * 1e9,
                                           stim.at(f1=f), powers, e["repeats"], e["noise_db"],
                                           int(seeds[i]), e["noise_floor"], e["min_points"], **kw)
        return f, recs, res

    results = _threaded_map(one, range(freqs.size), args.threads)
    rows, summary = [], []
    for f, recs, res in results:
        for r, p in zip(recs, e["powers"]):
            rows.append([f, p, r.p_fund, r.p_imd3_lo, r.p_imd3_hi, res.iip3])
        summary.append([f, res.iip3, res.fund_slope, res.imd3_slope, int(res.clipped_by_sensitivity)])
    out.csv("two_tone.csv", ["f_Hz", "p_in_dBm", "p_fund_dBm", "p_imd3_lo_dBm", "p_imd3_hi_dBm",
                             "iip3_dBm"], rows)
    out.csv("iip3.csv", ["f_Hz", "iip3_dBm", "fund_slope", "imd3_slope", "clipped_by_sensitivity"],
            summary)
    ok = [s[1] for s in summary if np.isfinite(s[1])]
    return f"{len(summary)} frequencies, {len(ok)} with IIP3" + (
        f", max {max(ok):.1f} dBm" if ok else "")


def cmd_reduce(cfg, out, args):
    e = cfg.extra
    groups = imd.read_two_tone_csv(Path(cfg.path).parent / e["csv"])
    rows = []
    for f in sorted(groups):
        recs = [imd.TwoToneRecord(_p_tone(r.p_in, e["power_convention"]), r.p_fund, r.p_imd3_lo,
                                  r.p_imd3_hi) for r in groups[f]]
        try:
            res = imd.iip3_from_records(recs, e["noise_floor"], min_points=e["min_points"])
        except imd.SensitivityLimitError as exc:
            res = exc.result
        rows.append([f, res.iip3, res.fund_slope, res.imd3_slope, int(res.clipped_by_sensitivity)])
    out.csv("iip3.csv", ["f_Hz", "iip3_dBm", "fund_slope", "imd3_slope", "clipped_by_sensitivity"], rows)
    return f"{len(rows)} frequencies reduced"


def _length(std):
    """Standard length in metres from ``length_m`` or ``length_um``."""
    return float(std["length_m"]) if "length_m" in std else float(std["length_um"]) * 1e-6


def _raw_two_port(base, path, switch_terms):
    w = cal.read_wave_csv(base / path)
    return cal.switch_term_correct(w["forward"], w["reverse"], switch_terms)


def cmd_calibrate(cfg, out, args):
    c = cfg.raw["calibration"]
    base = Path(cfg.path).parent
    thru_w = cal.read_wave_csv(base / c["thru"]["waves"])
    st = c.get("switch_terms")
    if st is None:
        gf, gr = cal.switch_terms_from_waves(thru_w["forward"], thru_w["reverse"])
    else:
        sw = cal.read_wave_csv(base / st["waves"])
        gf, gr = cal.switch_terms_from_waves(sw["forward"], sw["reverse"])
    terms = (gf, gr)
    thru = cal.LineStandard(_length(c["thru"]),
                            cal.switch_term_correct(thru_w["forward"], thru_w["reverse"], terms))
    lines = [cal.LineStandard(_length(ln), _raw_two_port(base, ln["waves"], terms))
             for ln in c["lines"]]
    rw = cal.read_wave_csv(base / c["reflect"]["waves"])
    refl = (rw["forward"].b1 / rw["forward"].a1, rw["reverse"].b4 / rw["reverse"].a4)
    res = cal.mtrl(thru, lines, refl, c.get("reflect_guess", -1), c.get("ereff_est"))
    grid = thru.raw.grid
    out.header = out.header + ["reference: thru centre moved to the probe-side plane offset"]
    cal.write_gamma_csv(out.path("gamma.csv"), grid.points, res.gamma, out.header)
    boxes = res.boxes
    offset = c.get("plane_offset_um", 20.0) * 1e-6
    # leave `offset` of line between the probe tips and the reference plane
    boxes = cal.translate_boxes(boxes, res.gamma, thru.length / 2 - offset)
    if c.get("resistor") is not None:
        rr = _raw_two_port(base, c["resistor"]["waves"], terms)
        sr = cal.series_resistor_c0(cal.apply_calibration(res.boxes, rr), res.gamma, c["resistor"]["r_dc_ohm"])
        cal.write_c0_csv(out.path("c0_z0.csv"), grid.points, sr.c0, sr.z0, out.header)
        boxes = cal.impedance_transform_boxes(boxes, sr.z0, c.get("z_target_ohm", 50.0))
    for d in c.get("duts", []):
        raw = _raw_two_port(base, d["waves"], terms)
        out.touchstone(f"{d['name']}.s2p", cal.apply_calibration(boxes, raw), args.format)
    return f"gamma on {len(grid)} points, {len(c.get('duts', []))} DUT(s) corrected"


def cmd_report(cfg, out, args, inputs):
    rows, names = [], set()
    for path in inputs:
        with open(path, newline="") as fh:
            reader = csv.DictReader(line for line in fh if not line.startswith("#"))
            for r in reader:
                name = r.get("name", Path(path).stem)
                if name in names:
                    raise ConfigError([f"report: duplicate configuration name {name!r}"])
                names.add(name)
                rows.append(r)
    if not rows:
        raise ConfigError(["report: no metrics rows found"])

    def cell(r, key, scale=1.0, digits=2):
        v = r.get(key, "")
        try:
            x = float(v)
        except (TypeError, ValueError):
            return "-"
        return "-" if not np.isfinite(x) else f"{x * scale:.{digits}f}"

    table = [["Ref.", "f_c (GHz)", "IL (dB)", "3 dB FBW (%)", "IIP3 (dBm)", "Size (mm2)"]]
    for r in rows:
        table.append([r.get("name", "-"), cell(r, "fc_Hz", 1e-9, 1), cell(r, "il_dB"), cell(r, "fbw3_pct", 1, 1),
                      cell(r, "iip3_dBm", 1, 1), cell(r, "size_mm2")])
    widths = [max(len(t[i]) for t in table) for i in range(len(table[0]))]
    text = "\n".join("  ".join(c.ljust(w) for c, w in zip(t, widths)).rstrip() for t in table) + "\n"
    out.text("report.txt", text)
    out.csv("report.csv", table[0], table[1:])
    return text.rstrip()


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    ap = argparse.ArgumentParser(prog="xbarnl", description="XBAR ladder filter modelling and reduction")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "report")
        p.add_argument("--out", default=".")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--format", choices=("ri", "ma", "db"), default="ri")
        p.add_argument("--threads", type=int, default=1)
        if name == "report":
            p.add_argument("inputs", nargs="*", help="metrics CSV files")
    return ap


_NUMERIC = (mbvd.FitConvergenceError, mbvd.NoResonanceError, ladder.NoPassbandError,
            ladder.LadderConditioningError, drive.BandEdgeError, imd.SensitivityLimitError,
            imd.OracleInstabilityError, cal.CalibrationError, rfnet.ConversionSingularityError,
            ArithmeticError, RuntimeError, np.linalg.LinAlgError)


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.format = args.format.upper()
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    out = None
    try:
        if args.command == "report":
            cfg = None
            inputs = list(args.inputs)
            if args.config:
                cfg = load_config(args.config, "report", args.seed)
                inputs += [str(Path(args.config).parent / p) for p in cfg.raw.get("report", {}).get("inputs", [])]
            if not inputs:
                raise ConfigError(["report: no input metrics files given"])
            header = cfg.header if cfg else [f"xbarnl {__version__}"]
        else:
            cfg = load_config(args.config, args.command, args.seed)
            header = cfg.header
        os.makedirs(args.out, exist_ok=True)
        out = _Outputs(args.out, header)
        if args.command == "report":
            msg = cmd_report(cfg, out, args, inputs)
        else:
            fn = {"simulate": cmd_simulate, "fit": cmd_fit, "power-sweep": cmd_power_sweep,
                  "imd3": cmd_imd3, "calibrate": cmd_calibrate, "reduce": cmd_reduce}[args.command]
            msg = fn(cfg, out, args)
        print(msg)
        return EXIT_OK
    except ConfigError as exc:
        code, text = EXIT_CONFIG, str(exc)
    except (OSError, rfnet.TouchstoneError) as exc:
        code, text = EXIT_IO, f"I/O error: {exc}"
    except _NUMERIC as exc:
        code, text = EXIT_NUMERIC, f"numerical failure: {exc}"
    except ValueError as exc:
        code, text = EXIT_CONFIG, f"invalid input: {exc}"
    if out is not None:
        out.rollback()
    print(text, file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
