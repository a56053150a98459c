"""Command-line entry point: profiles, evolve, verify, counterexample, report, selftest.

Exit codes: 0 success, 1 a failed check, 2 a configuration error.
Outputs go to --out, else $COEL_OUT_DIR, else ./coel_out; every file name
carries the hash of the resolved run configuration.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import glob
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone

import numpy as np

from . import profiles as P
from . import verification as V
from .errors import CoelError, ConfigError
from .grid import RadialGrid
from .solver import CauchyData, Potential, SolverConfig, evolve
from .tiers import TIERS, tier

# experiment -> (default sweep, per-seed?)
EXPERIMENTS = {
    "theorem6d": ((), True),
    "theorem8d": ((), True),
    "odd_lemma": ((0.0, 0.25, 0.5, 2.0, 8.0), True),
    "even_lemma": ((0.5, 2.0), True),
    "multisoliton": ((0.25, 0.125, 0.0625), True),
    "free8d": ((), True),
    "radiation": ((), True),
    "resonance": ((0.25, 0.125, 0.0625), False),
    "interaction": ((), False),
    "appendix_b": ((), False),
    "claimz": ((), False),
}


# ---------------------------------------------------------------- config

def _out_dir(args):
    d = args.out or os.environ.get("COEL_OUT_DIR") or "coel_out"
    os.makedirs(d, exist_ok=True)
    return d


def _floats(text):
    if text is None or text == "":
        return None
    try:
        return tuple(float(x) for x in str(text).split(","))
    except ValueError:
        raise ConfigError(f"--sweep expects comma-separated numbers, got {text!r}") from None


def _read_config(path, section):
    """Flat key/value options of one INI section ({} when absent)."""
    if not path:
        return {}
    cp = configparser.ConfigParser()
    try:
        read = cp.read(path)
    except configparser.Error as e:
        raise ConfigError(f"malformed config {path}: {e}") from None
    if not read:
        raise ConfigError(f"config file {path} not found")
    return dict(cp[section]) if cp.has_section(section) else {}


def _merge(args, section):
    """Command-line flags override the config section, which overrides defaults."""
    conf = _read_config(args.config, section)
    out = {}
    for key in ("dim", "tier", "samples", "seed", "sweep", "parallel"):
        val = getattr(args, key, None)
        out[key] = val if val is not None else conf.get(key)
    out["extra"] = {k: v for k, v in conf.items() if k not in out}
    out["tier"] = out["tier"] or "draft"
    if out["tier"] not in TIERS:
        raise ConfigError(f"unknown tier {out['tier']!r}; choose from {', '.join(TIERS)}")
    for key, default in (("samples", 10), ("seed", 0), ("parallel", 1)):
        try:
            out[key] = int(out[key]) if out[key] is not None else default
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {out[key]!r}") from None
    if out["dim"] is not None:
        out["dim"] = int(out["dim"])
    return out


def _stamp():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_jsonl(path, lines):
    with open(path, "w") as fh:
        for ln in lines:
            fh.write(ln + "\n")


# ---------------------------------------------------------------- profiles

def profile_grid(N, tier_name):
    row = tier("profiles", tier_name)
    # r_min = 2^-10 makes r = 1 an exact node (where Gamma vanishes)
    return RadialGrid.geometric(N, 2.0**-10, row["r_max"], int(row["per_octave"]))


def _fit_rows(N, profs):
    wins = {"zero": (2.0**-10, 2.0**-6), "infinity": (1e3, 1e4)}
    rows = []
    for name, prof in profs.items():
        for end, w in wins.items():
            try:
                f = P.asymptotic_fit(prof, end, w)
                rows.append([name, end, f"{w[0]:g}", f"{w[1]:g}", f.exponent, f.coefficient, f.residual])
            except CoelError as e:
                rows.append([name, end, f"{w[0]:g}", f"{w[1]:g}", "", "", f"rejected: {e}"])
    return rows


def cmd_profiles(args):
    opts = _merge(args, "profiles")
    N = opts["dim"] or 6
    grid = profile_grid(N, opts["tier"])
    h = V.config_hash({"command": "profiles", "dim": N, "tier": opts["tier"], "grid": grid.describe()})
    profs = {"W": P.ground_state_profile(N, grid), "V": P.potential_profile(N, grid),
             "LambdaW": P.lambda_w_profile(N, grid), "Gamma": P.gamma_profile(N, grid)}
    if N == 6:
        profs["Upsilon"] = P.upsilon_profile(grid)
        profs["GammaTilde"] = P.truncated_gamma(grid)
    elif N == 8:
        T = P.t_profiles_8d(grid)
        profs.update({"TInf1": T.t_inf_1, "T01": T.t0_1, "T00tilde": T.t0_0_tilde})
    out = _out_dir(args)
    for name, prof in profs.items():
        prof.to_csv(os.path.join(out, f"profile_{name}_dim{N}_{h}.csv"), {"config_hash": h})
    rows = _fit_rows(N, profs)
    head = ["profile", "end", "r_lo", "r_hi", "exponent", "coefficient", "residual"]
    with open(os.path.join(out, f"fits_dim{N}_{h}.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(head)
        w.writerows(rows)
    with open(os.path.join(out, f"fits_dim{N}_{h}.md"), "w") as fh:
        fh.write(_markdown(head, rows))
    print(f"profiles dim={N} -> {out} (hash {h})")
    return 0


# ---------------------------------------------------------------- evolve

def _evolve_setup(opts):
    x = opts["extra"]
    N = opts["dim"] or int(x.get("dim", 6))
    try:
        h = float(x.get("h", 0.02))
        T = float(x.get("t", 10.0))
        support = float(x.get("support", 4.0))
        r_max = float(x.get("r_max", support + abs(T) + 2.0))
        cfl = float(x.get("cfl", 0.4))
        scales = _floats(x.get("scales", "1.0"))
    except ValueError as e:
        raise ConfigError(f"bad evolve option: {e}") from None
    kind = x.get("potential", "soliton")
    pots = {"none": Potential.none, "soliton": lambda: Potential.soliton(scales[0]),
            "multisoliton": lambda: Potential.multisoliton(scales)}
    if kind not in pots:
        raise ConfigError(f"potential must be one of {sorted(pots)}, got {kind!r}")
    data_kind = x.get("data", "bump")
    cfg = SolverConfig(h=h, r_max=r_max, cfl=cfl,
                       snapshot_times=tuple(np.linspace(0.0, T, 5)))
    grid = cfg.grid(N)
    if data_kind in ("bump", "multiscale", "u0_only", "u1_only"):
        data, _, desc = V.sample_data(data_kind, opts["seed"], grid, scales=scales)
    elif data_kind == "lambda_w":
        lw = P.lambda_w_profile(N, grid)
        data, desc = CauchyData(lw, lw.scale(0.0)), {"kind": "lambda_w"}
    else:
        raise ConfigError(f"data must be bump, multiscale, u0_only, u1_only or lambda_w, got {data_kind!r}")
    return N, pots[kind](), data, T, cfg, desc


def cmd_evolve(args):
    opts = _merge(args, "evolve")
    N, pot, data, T, cfg, desc = _evolve_setup(opts)
    tr = evolve(N, pot, data, None, T, cfg)
    man = tr.export(os.path.join(_out_dir(args), f"evolve_{cfg.hash({'dim': N, 'data': desc})}"))
    print(f"evolved to t={T:g}: {len(man['files'])} snapshots (hash {man['config_hash']})")
    return 0


# ---------------------------------------------------------------- verify

def _run_chunk(experiment, seeds, tier_name, sweep, kernels):
    """Records for one block of seeds (module level so it pickles)."""
    if experiment == "theorem6d":
        return V.verify_theorem_6d(seeds, tier_name, V.kernel_inputs(6) if kernels else ())
    if experiment == "theorem8d":
        return V.verify_8d(seeds, tier_name, V.kernel_inputs(8) if kernels else ())
    if experiment == "odd_lemma":
        return V.verify_odd_lemma(sweep, seeds, tier_name)
    if experiment == "even_lemma":
        return V.verify_even_lemma(sweep, seeds, tier_name)
    if experiment == "multisoliton":
        extra = V.multisoliton_kernel_inputs() if kernels else ()
        return V.verify_multisoliton(sweep, seeds, tier_name, extra)
    if experiment == "free8d":
        return V.free_wave_half_energy(seeds, tier_name)
    if experiment == "radiation":
        return V.radiation_identity(seeds, tier_name)
    raise ConfigError(f"unknown experiment {experiment!r}")


def _run_summary(experiment, tier_name, sweep):
    if experiment == "resonance":
        res = V.verify_resonance_interaction(sweep, tier_name)
    elif experiment == "interaction":
        res = V.verify_interaction_estimates(tier=tier_name)
    elif experiment == "appendix_b":
        return [], V.verify_appendix_b()
    elif experiment == "claimz":
        res = V.claim_z_suite(tier=tier_name)
        return [], {k: v for k, v in res.items() if not isinstance(v, list)}
    else:
        raise ConfigError(f"unknown experiment {experiment!r}")
    recs = res.pop("records", [])
    return recs, res


def _checks(experiment, records, summary):
    """Experiment-level assertions; returns a list of failure messages."""
    bad = [r for r in records if r.degenerate is None and not np.isfinite(r.ratio)]
    msgs = [f"{len(bad)} non-finite ratios"] if bad else []
    if experiment == "free8d":
        low = [r.seed for r in records if r.ratio is not None and r.ratio < 0.475]
        if low:
            msgs.append(f"half-energy ratio below 0.475 for seeds {low}")
    if experiment == "radiation":
        off = [r.seed for r in records if r.ratio is not None and abs(r.ratio - 1) > 0.03]
        if off:
            msgs.append(f"radiation identity off by more than 3% for seeds {off}")
    if experiment == "claimz" and summary.get("embedding_max", 0.0) > 1.0 + 1e-12:
        msgs.append("embedding constant exceeds 1")
    return msgs


def cmd_verify(args):
    opts = _merge(args, "verify." + args.experiment)
    exp = args.experiment
    if exp == "theorem":
        exp = f"theorem{opts['dim'] or 6}d"
    if exp not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp!r}; choose from {', '.join(sorted(EXPERIMENTS))}")
    default_sweep, per_seed = EXPERIMENTS[exp]
    sweep = _floats(opts["sweep"]) or default_sweep
    seeds = list(range(opts["seed"], opts["seed"] + opts["samples"]))
    kernels = bool(args.kernels)
    run_hash = V.config_hash({"command": "verify", "experiment": exp, "tier": opts["tier"],
                              "seeds": seeds if per_seed else None, "sweep": list(sweep),
                              "kernels": kernels})
    summary = {}
    if per_seed:
        k = max(1, opts["parallel"])
        blocks = [seeds[i::k] for i in range(k)] if k > 1 else [seeds]
        if k > 1:
            with ProcessPoolExecutor(k) as ex:
                futs = [ex.submit(_run_chunk, exp, b, opts["tier"], sweep, kernels and i == 0)
                        for i, b in enumerate(blocks)]
                records = [r for f in futs for r in f.result()]
        else:
            records = _run_chunk(exp, seeds, opts["tier"], sweep, kernels)
    else:
        records, summary = _run_summary(exp, opts["tier"], sweep)
    stamp = _stamp()
    for r in records:
        r.config_hash = run_hash
        r.timestamp = stamp
    # order-independent file: sort by content, not by completion order
    lines = sorted(r.to_json() for r in records)
    if summary:
        lines.append(json.dumps(V._plain({"experiment": exp, "summary": summary,
                                          "config_hash": run_hash, "timestamp": stamp}),
                                sort_keys=True))
    out = _out_dir(args)
    path = os.path.join(out, f"records_{exp}_{run_hash}.jsonl")
    _write_jsonl(path, lines)
    rows = summarize(records)
    _write_summary(out, f"summary_{exp}_{run_hash}", rows)
    print(f"{exp}: {len(records)} records -> {path}")
    for row in rows:
        print("  " + ", ".join(f"{k}={v}" for k, v in row.items()))
    if summary:
        print("  " + json.dumps(V._plain(summary), sort_keys=True)[:400])
    msgs = _checks(exp, records, summary)
    for m in msgs:
        print(f"FAILED: {m}")
    return 1 if msgs else 0


# ---------------------------------------------------------------- counterexample

def cmd_counterexample(args):
    opts = _merge(args, "counterexample")
    ns = [int(x) for x in (_floats(opts["sweep"]) or (2, 4, 8))]
    try:
        delta = float(opts["extra"].get("delta", 0.25))
    except ValueError:
        raise ConfigError("delta must be a number") from None
    mode = args.mode or opts["extra"].get("mode", "superposition")
    if mode not in ("superposition", "direct"):
        raise ConfigError(f"mode must be superposition or direct, got {mode!r}")
    run_hash = V.config_hash({"command": "counterexample", "n": ns, "delta": delta,
                              "mode": mode, "tier": opts["tier"]})
    stamp = _stamp()
    results = [V.run_counterexample(V.CounterexampleSpec(n, delta), mode, opts["tier"]) for n in ns]
    lines = [json.dumps(V._plain(dict(r, experiment="counterexample", config_hash=run_hash,
                                      timestamp=stamp)), sort_keys=True) for r in results]
    out = _out_dir(args)
    path = os.path.join(out, f"records_counterexample_{run_hash}.jsonl")
    _write_jsonl(path, lines)
    growth = [r["growth"] for r in results]
    for r in results:
        print(f"n={r['n']}: growth={r['growth']:.4f} E_out={r['E_out_superposition']:.4f} "
              f"young_bound={r['young_bound']:.4f}")
    msgs = []
    for a, b in zip(growth, growth[1:]):
        if not 1.10 <= b / a <= 1.35:
            msgs.append(f"growth ratio {b / a:.3f} outside [1.10, 1.35]")
    for m in msgs:
        print(f"FAILED: {m}")
    print(f"-> {path}")
    return 1 if msgs else 0


# ---------------------------------------------------------------- report

def summarize(records):
    """Per-experiment count, max and median ratio, degenerate count."""
    groups = {}
    for r in records:
        d = r if isinstance(r, dict) else json.loads(r.to_json())
        if "ratio" not in d:
            continue
        groups.setdefault(d["experiment"], []).append(d)
    rows = []
    for exp in sorted(groups):
        g = groups[exp]
        ratios = [d["ratio"] for d in g if d.get("ratio") is not None]
        rows.append({"experiment": exp, "count": len(g),
                     "max_ratio": float(np.max(ratios)) if ratios else "",
                     "median_ratio": float(np.median(ratios)) if ratios else "",
                     "degenerate": sum(1 for d in g if d.get("degenerate"))})
    return rows


def _markdown(head, rows):
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for row in rows:
        lines.append("| " + " | ".join(f"{x:.6g}" if isinstance(x, float) else str(x) for x in row) + " |")
    return "\n".join(lines) + "\n"


def _write_summary(out, stem, rows):
    head = ["experiment", "count", "max_ratio", "median_ratio", "degenerate"]
    with open(os.path.join(out, stem + ".csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=head)
        w.writeheader()
        w.writerows(rows)
    with open(os.path.join(out, stem + ".md"), "w") as fh:
        fh.write(_markdown(head, [[r[k] for k in head] for r in rows]))


def cmd_report(args):
    paths = []
    for p in args.inputs:
        paths += sorted(glob.glob(os.path.join(p, "*.jsonl"))) if os.path.isdir(p) else [p]
    if not paths:
        raise ConfigError("report: no JSON-lines inputs found")
    records = []
    for p in paths:
        if not os.path.exists(p):
            raise ConfigError(f"report: input {p} does not exist")
        with open(p) as fh:
            for k, ln in enumerate(fh, 1):
                if ln.strip():
                    try:
                        records.append(json.loads(ln))
                    except json.JSONDecodeError:
                        raise ConfigError(f"report: {p}:{k} is not valid JSON") from None
    hashes = sorted({d.get("config_hash", "") for d in records})
    if len(hashes) > 1 and not args.force:
        raise ConfigError(f"report: inputs mix config hashes {hashes}; rerun with --force to aggregate")
    tag = hashes[0] if len(hashes) == 1 else V.config_hash({"mixed": hashes})
    rows = summarize(records)
    out = _out_dir(args)
    _write_summary(out, f"report_{tag}", rows)
    print(_markdown(list(rows[0]) if rows else ["experiment"], [list(r.values()) for r in rows]))
    return 0


# ---------------------------------------------------------------- selftest

def _selftest_checks(tier_name):
    from .norms import z_norm, gradient_profile
    from .projections import make_projector, project_out

    def wronskian():
        r = np.geomspace(0.05, 200, 400)
        assert P.wronskian_defect(6, r) <= 1e-6 and P.wronskian_defect(8, r) <= 1e-5

    def gamma_anchor():
        assert abs(P.gamma_values(6, np.array([1.0]))[0][0]) <= 1e-10

    def tiers_parse():
        for name in TIERS:
            tier("theorem6d", name)

    def stationary():
        cfg = SolverConfig(h=0.05, r_max=20.0)
        lw = P.lambda_w_profile(6, cfg.grid(6))
        from .solver import discrete_kernel
        k = discrete_kernel(6, cfg, Potential.soliton(), lw.values[0])
        data = CauchyData(lw.with_values(k, np.gradient(k, cfg.grid(6).nodes)), lw.scale(0.0))
        tr = evolve(6, Potential.soliton(), data, None, 2.0, cfg)
        # keep 2 units behind the front coming from the Dirichlet edge
        m = cfg.grid(6).nodes < 20.0 - 2.0 - 2.0
        assert np.max(np.abs(tr.snapshots[-1].u - k)[m]) <= 1e-10 * np.max(np.abs(k))

    def cfl_rejected():
        from .errors import CFLViolationError
        try:
            SolverConfig(h=0.05, r_max=5.0, cfl=0.95)
        except CFLViolationError:
            return
        raise AssertionError("cfl 0.95 accepted")

    def projector():
        grid = RadialGrid.uniform(6, 40.0, 0.02)
        p = make_projector("L2", 6, grid)
        data, _, _ = V.sample_data("span_perturbation", 3, grid)
        again = project_out(p, data.u1)
        assert np.max(np.abs(again.values - data.u1.values)) <= 1e-8 * np.max(np.abs(data.u1.values))

    def embedding():
        res = V.claim_z_suite(range(10), tier_name)
        assert res["embedding_max"] <= 1.0 + 1e-12

    def degenerate_routing():
        rec = V.make_record("t", 0, {}, 0.0, "", 0.0, "", 1.0, {}, 1.0)
        assert rec.ratio is None and rec.degenerate == "lhs+rhs_below_floor"

    def z_positive():
        grid = RadialGrid.geometric(6, 2.0**-8, 256.0, 32)
        f, _ = V.random_test_function(1, grid)
        assert z_norm(gradient_profile(f), -3.0, on_boundary="flag").value > 0

    return [("wronskian", wronskian), ("gamma(1)=0", gamma_anchor), ("tier table", tiers_parse),
            ("discrete stationary state", stationary), ("cfl guard", cfl_rejected),
            ("projector idempotent", projector), ("H1 -> Z embedding", embedding),
            ("degenerate routing", degenerate_routing), ("Z norm positive", z_positive)]


def cmd_selftest(args):
    opts = _merge(args, "selftest")
    failed = 0
    for name, fn in _selftest_checks(opts["tier"]):
        try:
            fn()
            print(f"PASS {name}")
        except (AssertionError, CoelError) as e:
            failed += 1
            print(f"FAIL {name}: {e}")
    return 1 if failed else 0


# ---------------------------------------------------------------- entry point

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--dim", type=int, choices=(6, 8))
    common.add_argument("--tier", choices=TIERS)
    common.add_argument("--samples", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--sweep", help="comma-separated sweep values (R, gamma or n)")
    common.add_argument("--out", help="output directory (default $COEL_OUT_DIR or ./coel_out)")
    common.add_argument("--parallel", type=int, help="worker processes for per-seed experiments")
    common.add_argument("--force", action="store_true", help="aggregate mixed config hashes")
    common.add_argument("--config", help="INI file; sections [profiles], [evolve], [verify.<name>], ...")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="coel", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("profiles", parents=[common], help="profile CSVs and asymptotic fits")
    sub.add_parser("evolve", parents=[common], help="one trajectory from the [evolve] config section")
    v = sub.add_parser("verify", parents=[common], help="run a verification experiment")
    v.add_argument("experiment", help="one of: theorem, " + ", ".join(sorted(EXPERIMENTS)))
    v.add_argument("--kernels", action="store_true", help="append the kernel (degenerate) inputs")
    c = sub.add_parser("counterexample", parents=[common], help="the growth counter-example")
    c.add_argument("--mode", choices=("superposition", "direct"))
    r = sub.add_parser("report", parents=[common], help="aggregate JSON-lines records")
    r.add_argument("inputs", nargs="+", help="record files or directories")
    sub.add_parser("selftest", parents=[common], help="fast invariant checks")
    return p


COMMANDS = {"profiles": cmd_profiles, "evolve": cmd_evolve, "verify": cmd_verify,
            "counterexample": cmd_counterexample, "report": cmd_report, "selftest": cmd_selftest}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
