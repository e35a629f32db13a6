"""Command-line front end.

``qet validate`` parses and checks a scenario file, ``qet run`` executes it
and writes delimited artifacts plus a reproducibility manifest, ``qet check``
runs built-in numerical invariant suites.  Exit codes: 0 success, 2 config
parse error, 3 validation failure, 4 check failure.

Heavy imports are deferred so that ``--threads`` can cap the BLAS pool via
environment variables before numerics load.
"""
from __future__ import annotations

import argparse
import os
import sys

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INVALID = 3
EXIT_CHECK = 4


def _write_csv(path, header: str, columns) -> None:
    import numpy as np
    data = np.column_stack([np.asarray(c).ravel() for c in columns])
    np.savetxt(path, data, delimiter=",", header=header, comments="",
               fmt="%.17g")


def _write_report(path, sections: dict) -> None:
    """Structured text report: ``key: value`` lines grouped by [section]."""
    lines = []
    for name, entries in sections.items():
        lines.append(f"[{name}]")
        for key, value in entries.items():
            if isinstance(value, float):
                value = f"{value:.12g}"
            lines.append(f"{key}: {value}")
        lines.append("")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))


def _flatten(node, prefix=""):
    items = {}
    if isinstance(node, dict):
        for key, val in node.items():
            items.update(_flatten(val, f"{prefix}.{key}" if prefix else key))
    elif isinstance(node, list) and node and isinstance(node[0], dict):
        for i, val in enumerate(node):
            items.update(_flatten(val, f"{prefix}[{i}]"))
    else:
        items[prefix] = node
    return items


def _write_manifest(out_dir, cfg: dict, extra: dict) -> None:
    from . import __version__
    sections = {
        "engine": {"package": "qet", "version": __version__,
                   "time_operator": "lattice",
                   "fourier_kernel": "exp(-i(Et-px)/hbar)",
                   "theta_at_zero": "1 (coincident slice is retarded)"},
        "config": dict(sorted(_flatten(cfg).items())),
        "runtime": extra,
    }
    _write_report(os.path.join(out_dir, "manifest.txt"), sections)


# ---------------------------------------------------------------------------
# tasks


def _run_orbit(cfg, out_dir, seed):
    import numpy as np
    from . import config as cfgmod
    from .evolution import CRANK_NICOLSON, FULL, EvolutionKernel, orbit, \
        schrodinger_residual
    node = cfg.get("task", {}).get("orbit", {})
    grid = cfgmod.build_grid(cfg)
    ham = cfgmod.build_hamiltonian(cfg)
    event = cfgmod.build_initial(cfg, grid)
    integrator = node.get("integrator", CRANK_NICOLSON)
    variant = node.get("variant", FULL)
    kernel = EvolutionKernel(grid, ham, integrator)
    orb = orbit(kernel, event, variant)

    tt, xx = np.meshgrid(grid.times, grid.xs, indexing="ij")
    _write_csv(os.path.join(out_dir, "orbit.csv"), "t,x,re_psi,im_psi",
               [tt, xx, orb.values.real, orb.values.imag])
    _write_csv(os.path.join(out_dir, "marginal.csv"), "t,density",
               [grid.times, orb.marginal_density()])
    _write_report(os.path.join(out_dir, "report.txt"), {
        "orbit": {"variant": variant, "integrator": integrator,
                  "charge": orb.charge,
                  "charge_max_rel_deviation": orb.charge_rel_deviation,
                  "schrodinger_residual": schrodinger_residual(orb, ham)},
    })
    return {"integrator": integrator, "variant": variant}


def _run_measure(cfg, out_dir, seed):
    from . import config as cfgmod
    from .evolution import CRANK_NICOLSON, FULL, EvolutionKernel, orbit
    from .measurement import expectation, outcome_probabilities, window_weight
    from .observables import IDENTITY, POSITION, TIME, energy_op, \
        hamiltonian_op, momentum_op
    node = cfg["task"]["measure"]
    grid = cfgmod.build_grid(cfg)
    ham = cfgmod.build_hamiltonian(cfg)
    event = cfgmod.build_initial(cfg, grid)
    integrator = node.get("integrator", CRANK_NICOLSON)
    variant = node.get("variant", FULL)
    kernel = EvolutionKernel(grid, ham, integrator)
    orb = orbit(kernel, event, variant)
    meas = cfgmod.build_measurement(node, grid)
    meas.verify_partition(grid)

    probs = outcome_probabilities(meas, orb)
    with open(os.path.join(out_dir, "probabilities.csv"), "w") as fh:
        fh.write("label,probability\n")
        for label, p in probs.items():
            fh.write(f"\"{label}\",{p:.17g}\n")

    ops = {"identity": IDENTITY, "time": TIME, "position": POSITION,
           "energy": energy_op(), "momentum": momentum_op(),
           "hamiltonian": hamiltonian_op(ham)}
    values = {name: expectation(ops[name], orb, meas.window)
              for name in node.get("operators", ["identity"])}
    _write_report(os.path.join(out_dir, "report.txt"), {
        "window": {"weight": window_weight(orb, meas.window)},
        "expectations": values,
    })
    return {"integrator": integrator, "variant": variant}


def _run_history(cfg, out_dir, seed):
    from . import config as cfgmod
    from .grid import save_event_csv
    from .evolution import CRANK_NICOLSON, RETARDED, EvolutionKernel
    from .measurement import run_history
    node = cfg["task"]["history"]
    grid = cfgmod.build_grid(cfg)
    ham = cfgmod.build_hamiltonian(cfg)
    event = cfgmod.build_initial(cfg, grid)
    integrator = node.get("integrator", CRANK_NICOLSON)
    variant = node.get("variant", RETARDED)
    kernel = EvolutionKernel(grid, ham, integrator)
    measurements = [cfgmod.build_measurement(m, grid)
                    for m in node["measurements"]]
    for meas in measurements:
        meas.verify_partition(grid)
    hist = run_history(kernel, event, measurements, variant, seed)

    sections = {"history": {"seed": hist.seed, "variant": hist.variant,
                            "stages": len(hist.stages)}}
    for i, stage in enumerate(hist.stages):
        sections[f"stage {i}"] = {"outcome": stage.label,
                                  "probability": stage.probability,
                                  "outcome_file": f"outcome_{i}.csv"}
        save_event_csv(os.path.join(out_dir, f"outcome_{i}.csv"),
                       stage.outcome)
    _write_report(os.path.join(out_dir, "history.txt"), sections)
    return {"integrator": integrator, "variant": variant, "seed": seed}


def _run_golden_rule(cfg, out_dir, seed):
    import numpy as np
    from .perturbation import DiscreteContinuumModel, fit_decay_rate, \
        golden_rule_rate, survival_probability
    node = cfg["task"]["golden-rule"]
    model = DiscreteContinuumModel.flat(
        node["level"], node["coupling"], node["omega_min"], node["omega_max"],
        node.get("n_omega", 2000), node.get("density", 1.0),
        node.get("hbar", 1.0))
    rate = golden_rule_rate(model)
    if rate.rate <= 0:
        raise ValueError("level lies outside the continuum band; no decay")
    t_lo = node.get("fit_t_min_frac", 0.1) / rate.rate
    t_hi = node.get("fit_t_max_frac", 1.0) / rate.rate
    times = np.linspace(t_lo, t_hi, 200)
    surv = survival_probability(model, 0, times)
    fitted = fit_decay_rate(times, surv)

    _write_csv(os.path.join(out_dir, "survival.csv"),
               "t,survival,exponential_model",
               [times, surv, np.exp(-rate.rate * times)])
    _write_csv(os.path.join(out_dir, "rate_resolved.csv"),
               "omega,rate_density", [model.omega, rate.resolved])
    bandwidth = node["omega_max"] - node["omega_min"]
    _write_report(os.path.join(out_dir, "golden_rule.txt"), {
        "rates": {"formula": rate.rate, "fit": fitted,
                  "relative_error": abs(fitted - rate.rate) / rate.rate},
        "regime": {"rate_over_bandwidth": rate.rate / bandwidth,
                   "rate_over_level_spacing":
                       rate.rate / (bandwidth / (len(model.omega) - 1)),
                   "fit_window": f"[{t_lo:.6g}, {t_hi:.6g}]"},
    })
    return {"seed": seed}


def _run_scatter(cfg, out_dir, seed):
    import numpy as np
    from . import config as cfgmod
    from .evolution import SPLIT_STEP
    from .perturbation import ScatteringSetup, born_smatrix, exact_smatrix
    node = cfg["task"]["scatter"]
    setup = ScatteringSetup(
        node.get("mass", 1.0), cfgmod.build_potential(node["potential"]),
        node["x_min"], node["x_max"], node["n_x"], node["horizon"],
        node.get("hbar", 1.0))
    n_t = node.get("n_t", 1024)
    integrator = node.get("integrator", SPLIT_STEP)
    rows = []
    for p, p_prime in node["pairs"]:
        born = born_smatrix(setup, p, p_prime)
        exact = exact_smatrix(setup, p, p_prime, n_t, integrator)
        rows.append((p, p_prime, born, exact))
    cols = list(zip(*[(p, q, b.real, b.imag, e.real, e.imag, abs(b - e))
                      for p, q, b, e in rows]))
    _write_csv(os.path.join(out_dir, "smatrix.csv"),
               "p,p_prime,re_born,im_born,re_exact,im_exact,abs_diff",
               [np.asarray(c) for c in cols])
    _write_report(os.path.join(out_dir, "report.txt"), {
        "scatter": {"pairs": len(rows), "n_t": n_t, "integrator": integrator,
                    "max_abs_diff": max(abs(b - e) for _, _, b, e in rows)},
    })
    return {"integrator": integrator, "n_t": n_t}


# ---------------------------------------------------------------------------
# invariant check suites


def _checks_lattice():
    import numpy as np
    from .grid import from_energy_momentum, gaussian_event, make_grid, \
        to_energy_momentum
    grid = make_grid(0.0, 8.0, 128, -8.0, 8.0, 128)
    ev = gaussian_event(grid, 4.0, 0.6, 0.0, 1.0, 2.0, -1.0)
    tr = to_energy_momentum(ev)
    back = from_energy_momentum(tr)
    yield ("fourier round trip",
           np.max(np.abs(back.values - ev.values)), 1e-12)
    yield ("parseval", abs(tr.norm() - ev.norm()), 1e-10)
    yield ("event normalization", abs(ev.norm() - 1.0), 1e-6)


def _checks_propagator():
    import numpy as np
    from .grid import gaussian_event, make_grid
    from .observables import HamiltonianSpec, Potential
    from .evolution import ADVANCED, FULL, RETARDED, EvolutionKernel, orbit
    grid = make_grid(0.0, 6.0, 192, -10.0, 10.0, 128)
    ham = HamiltonianSpec(1.0, Potential.harmonic(0.5))
    kernel = EvolutionKernel(grid, ham)
    ev = gaussian_event(grid, 3.0, 0.4, 0.0, 1.0, 0.0, 1.0)
    full = orbit(kernel, ev, FULL)
    ret = orbit(kernel, ev, RETARDED)
    adv = orbit(kernel, ev, ADVANCED)
    yield ("retarded + advanced = full",
           np.max(np.abs(ret.values + adv.values - full.values)), 1e-12)
    yield ("charge conservation", full.charge_rel_deviation, 1e-6)


def _checks_measurement():
    from .grid import gaussian_event, make_grid
    from .observables import HamiltonianSpec, Potential
    from .evolution import EvolutionKernel, orbit
    from .measurement import (CompleteMeasurement, ObservationWindow,
                              outcome_probabilities, position_bin_projectors)
    grid = make_grid(0.0, 6.0, 128, -10.0, 10.0, 64)
    kernel = EvolutionKernel(grid, HamiltonianSpec(1.0, Potential.zero()))
    orb = orbit(kernel, gaussian_event(grid, 3.0, 0.4, 0.0, 1.0))
    window = ObservationWindow.time_slab(grid, 4.0, 5.5)
    meas = CompleteMeasurement.of(
        position_bin_projectors(grid, [-10.0, 0.0, 10.0]), window)
    meas.verify_partition(grid)
    probs = outcome_probabilities(meas, orb)
    yield ("probabilities sum to one",
           abs(sum(probs.values()) - 1.0), 1e-10)
    yield ("projector partition", 0.0, 1.0)   # verify_partition raised if bad


def _checks_perturbation():
    from .grid import gaussian_event, make_grid
    from .observables import HamiltonianSpec, Potential
    from .evolution import EvolutionKernel
    from .perturbation import dyson_recursion_residual
    grid = make_grid(0.0, 4.0, 256, -8.0, 8.0, 64)
    free = HamiltonianSpec(1.0, Potential.zero())
    bump = Potential.gaussian_barrier(0.3, 1.0)
    full = HamiltonianSpec(1.0, bump)
    kf = EvolutionKernel(grid, full)
    k0 = EvolutionKernel(grid, free)
    ev = gaussian_event(grid, 1.2, 0.2, -2.0, 1.0, 0.0, 1.5)
    yield ("propagator self-consistency",
           dyson_recursion_residual(kf, k0, bump, ev), 1e-8)


_SUITES = {
    "lattice": _checks_lattice,
    "propagator": _checks_propagator,
    "measurement": _checks_measurement,
    "perturbation": _checks_perturbation,
}


def run_checks(suite: str = "all", stream=None) -> bool:
    stream = stream or sys.stdout
    names = list(_SUITES) if suite == "all" else [suite]
    ok = True
    for name in names:
        if name not in _SUITES:
            print(f"unknown check suite {name!r}; "
                  f"available: {', '.join(_SUITES)} or 'all'", file=stream)
            return False
        for label, value, tol in _SUITES[name]():
            passed = bool(value <= tol)
            ok = ok and passed
            status = "PASS" if passed else "FAIL"
            print(f"{status} {name}/{label}: {value:.3e} (tol {tol:.1e})",
                  file=stream)
    return ok


# ---------------------------------------------------------------------------
# entry points


_TASK_RUNNERS = {
    "orbit": _run_orbit,
    "measure": _run_measure,
    "history": _run_history,
    "golden-rule": _run_golden_rule,
    "scatter": _run_scatter,
}


def _load_and_validate(path):
    from . import config as cfgmod
    try:
        cfg = cfgmod.load_config(path)
    except cfgmod.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(EXIT_PARSE)
    diags = cfgmod.validate_config(cfg)
    if diags:
        for d in diags:
            print(f"invalid: {d}", file=sys.stderr)
        sys.exit(EXIT_INVALID)
    return cfg


def _cmd_validate(args):
    _load_and_validate(args.config)
    print("config OK")
    return EXIT_OK


def _cmd_run(args):
    cfg = _load_and_validate(args.config)
    kind = cfg["task"]["kind"]
    seed = args.seed if args.seed is not None \
        else cfg.get("run", {}).get("seed", 0)
    out_dir = args.out or cfg.get("output", {}).get("directory", "out")
    os.makedirs(out_dir, exist_ok=True)
    if kind == "check":
        suite = cfg["task"].get("check", {}).get("suite", "all")
        ok = run_checks(suite)
        _write_manifest(out_dir, cfg, {"seed": seed, "suite": suite})
        return EXIT_OK if ok else EXIT_CHECK
    extra = {"seed": seed}
    try:
        extra.update(_TASK_RUNNERS[kind](cfg, out_dir, seed))
    except Exception as exc:
        print(f"error: {kind} task failed: {exc}", file=sys.stderr)
        return 1
    finally:
        # the manifest is always written once validation has passed, even
        # when the task itself fails
        _write_manifest(out_dir, cfg, extra)
    print(f"wrote {kind} artifacts to {out_dir}")
    return EXIT_OK


def _cmd_check(args):
    return EXIT_OK if run_checks(args.suite) else EXIT_CHECK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qet",
        description="Spacetime-lattice event quantum mechanics engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario file")
    p_run.add_argument("config")
    p_run.add_argument("--out", help="output directory (default from config)")
    p_run.add_argument("--seed", type=int, help="override run.seed")
    p_run.add_argument("--threads", type=int,
                       help="cap BLAS/FFT worker threads")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="parse and validate a scenario")
    p_val.add_argument("config")
    p_val.set_defaults(func=_cmd_validate)

    p_chk = sub.add_parser("check", help="run built-in invariant suites")
    p_chk.add_argument("--suite", default="all",
                       help="one of %s, or 'all'" % ", ".join(_SUITES))
    p_chk.set_defaults(func=_cmd_check)

    args = parser.parse_args(argv)
    threads = getattr(args, "threads", None)
    if threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(threads)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
