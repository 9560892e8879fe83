"""Command-line interface: ``dirtyderiv {certify,simulate,estimate,sweep}``.

Every run reads one JSON config (``--config``) and writes its artifacts
atomically into ``--out``. Exit codes::

    0  success
    2  certification failure (gain not stabilising, unstable at the cap,
       or a sweep pass rate below 100%)
    3  configuration error
    4  I/O error
    5  divergence during simulation (message carries the step index)

Stability verdicts use the rule ``spectral abscissa < -1e-9``, decided
exactly on a rational copy of the closed-loop matrix.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .certificates import (
    certify_thm1,
    certify_thm2,
    minimal_sigma,
    thm1_builder,
    thm2_builder,
)
from .closed_loop import build_aug_thm1
from .errors import (
    DirtyDerivError,
    IterationDivergence,
    NonFiniteState,
    NotStabilizing,
    UnstableAtCap,
)
from .numerics import HURWITZ_MARGIN
from .plant import (
    AdaptivePlant,
    ControllerFormPlant,
    adaptive_gain,
    build_matrices,
    lqr_gain,
    pole_placement_gain,
    random_adaptive_plant,
    random_plant,
)
from .sim import NoiseConfig, rms_after, run_closed_loop_study, run_estimation_study
from .svg import line_chart

EXIT_OK = 0
EXIT_CERT = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_DIVERGED = 5


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def atomic_write(path: str, data: str) -> None:
    """Write text through a temporary file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(data)
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def csv_text(header, columns) -> str:
    """CSV with 17 significant digits and ``\\n`` line endings."""
    table = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    buf = io.StringIO()
    np.savetxt(buf, table, fmt="%.17g", delimiter=",", header=",".join(header),
               comments="", newline="\n")
    return buf.getvalue()


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not serialisable: {type(o)}")


def _fmt(v) -> str:
    return f"{v:.10g}" if isinstance(v, float) else str(v)


def table(rows) -> str:
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k.ljust(width)}  {_fmt(v)}" for k, v in rows)


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    cfg["_dir"] = os.path.dirname(os.path.abspath(path))
    return cfg


def _plant_dict(cfg: dict) -> dict:
    entry = cfg.get("plant")
    if isinstance(entry, str):
        path = entry if os.path.isabs(entry) else os.path.join(cfg.get("_dir", "."), entry)
        try:
            with open(path) as fh:
                entry = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read plant file {path}: {exc}") from None
    if not isinstance(entry, dict):
        raise ConfigError("config needs a 'plant' object or file path")
    return entry


def parse_plant(cfg: dict, kind: str):
    entry = _plant_dict(cfg)
    if kind == "thm2":
        return AdaptivePlant.from_dict(entry)
    return ControllerFormPlant.from_dict(entry)


def parse_gain(cfg: dict, plant, kind: str) -> np.ndarray:
    entry = cfg.get("gain", {"poles": None})
    if not isinstance(entry, dict):
        raise ConfigError("'gain' must be an object")
    modes = [m for m in ("k", "poles", "lqr") if m in entry]
    if len(modes) != 1:
        raise ConfigError("gain needs exactly one of 'k', 'poles', 'lqr'")
    mode = modes[0]
    if mode == "k":
        return np.asarray(entry["k"], dtype=float)
    if mode == "poles":
        poles = entry["poles"]
        if poles is not None:
            poles = np.asarray([complex(*p) if isinstance(p, list) else p for p in poles])
        if kind == "thm2":
            return adaptive_gain(plant, poles)
        return pole_placement_gain(plant, poles)
    if kind == "thm2":
        raise ConfigError("lqr gains are only supported for the static loop")
    lqr = entry["lqr"]
    q = lqr.get("q", "CtC")
    if q == "CtC":
        _, _, c = build_matrices(plant)
        q = c.T @ c
    return lqr_gain(plant, np.asarray(q, dtype=float), float(lqr.get("r", 1.0)))


def parse_noise(cfg: dict, seed=None) -> NoiseConfig:
    entry = dict(cfg.get("noise", {}))
    if seed is not None:
        entry["seed"] = seed
    return NoiseConfig.from_dict(entry)


def _number(cfg, key, default=None, positive=True):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing '{key}'")
        return default
    try:
        val = float(cfg[key])
    except (TypeError, ValueError):
        raise ConfigError(f"'{key}' must be a number") from None
    if positive and not val > 0:
        raise ConfigError(f"'{key}' must be positive, got {val}")
    return val


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_certify(cfg: dict, args) -> tuple[int, dict]:
    kind = cfg.get("kind", "thm1")
    if kind not in ("thm1", "thm2"):
        raise ConfigError("kind must be 'thm1' or 'thm2'")
    plant = parse_plant(cfg, kind)
    k = parse_gain(cfg, plant, kind)
    q_mat = cfg.get("q_mat")
    eps_factor = _number(cfg, "eps_factor", 0.5)
    report = {"kind": kind, "hurwitz_rule": f"abscissa < -{HURWITZ_MARGIN:g}"}
    if kind == "thm1":
        cert = certify_thm1(plant, k, q_mat, eps_factor)
        sigma = _number(cfg, "sigma", 1.01 * cert.sigma_bar)
        system = cert.build(sigma)
        sigma_min = minimal_sigma(thm1_builder(plant, k), cert.sigma_bar)
        report.update(cert.to_dict())
        rows = [("sigma_bar", cert.sigma_bar)]
    else:
        cert = certify_thm2(plant, k, q_mat, eps_factor)
        gamma = _number(cfg, "gamma", cert.gamma_for(1.01), positive=False)
        if gamma * plant.beta <= 0:
            raise ConfigError("gamma must share the sign of beta")
        sbar = cert.sigma_bar(gamma)
        sigma = _number(cfg, "sigma", 1.01 * sbar)
        system = cert.build(gamma, sigma)
        sigma_min = minimal_sigma(thm2_builder(plant, k, gamma), sbar)
        report.update(cert.to_dict())
        report["gamma"] = gamma
        report["sigma_bar_at_gamma"] = sbar
        report["gamma_exceeds_gamma_bar"] = bool(gamma > cert.gamma_bar)
        rows = [("gamma_bar", cert.gamma_bar), ("gamma", gamma),
                ("gamma > gamma_bar", bool(gamma > cert.gamma_bar)), ("sigma_bar", sbar)]
        cert_sigma_bar = sbar
    hurwitz = system.is_hurwitz()
    abscissa = system.spectrum(precise=True).abscissa
    sbar = cert.sigma_bar if kind == "thm1" else cert_sigma_bar
    ratio = sbar / max(sigma_min, 1e-9)
    report.update({
        "k": np.asarray(k).tolist(),
        "sigma": sigma,
        "sigma_min": sigma_min,
        "conservativeness_ratio": ratio,
        "sigma_exceeds_sigma_bar": bool(sigma > sbar),
        "hurwitz_at_sigma": bool(hurwitz),
        "abscissa_at_sigma": abscissa,
    })
    rows += [
        ("epsilon", cert.epsilon),
        ("d", cert.d),
        ("sigma_min", sigma_min),
        ("ratio sigma_bar/max(sigma_min,1e-9)", ratio),
        ("sigma", sigma),
        ("sigma > sigma_bar", bool(sigma > sbar)),
        ("abscissa at sigma", abscissa),
        ("Hurwitz at sigma (abscissa < -1e-9)", bool(hurwitz)),
    ]
    print(table(rows))
    _write(args, "certificate.json", json_text(report))
    return (EXIT_OK if hurwitz else EXIT_CERT), report


def _write(args, name, text):
    os.makedirs(args.out, exist_ok=True)
    atomic_write(os.path.join(args.out, name), text)


def cmd_simulate(cfg: dict, args) -> tuple[int, dict]:
    plant = parse_plant(cfg, "thm1")
    k = parse_gain(cfg, plant, "thm1")
    sigma = _number(cfg, "sigma")
    noise = parse_noise(cfg, args.seed)
    t_end = _number(cfg, "t_end", 10.0)
    dt = _number(cfg, "dt", 1e-4)
    stride = int(cfg.get("stride", 10))
    x0 = cfg.get("x0")
    limit = _number(cfg, "divergence_limit", 1e12)
    estimators = cfg.get("estimator", "dirty")
    estimators = ["dirty", "hgo"] if estimators == "both" else [estimators]
    for e in estimators:
        if e not in ("dirty", "hgo"):
            raise ConfigError(f"unknown estimator {e!r}")
    n = plant.n
    summary = {}
    curves_x1, curves_err = [], []
    for name in estimators:
        try:
            traj = run_closed_loop_study(plant, k, sigma, noise, name, t_end, dt=dt, x0=x0,
                                         eps=cfg.get("eps"), hgo_poles=cfg.get("hgo_poles"),
                                         stride=stride, limit=limit)
        except NonFiniteState as exc:
            raise NonFiniteState(f"{name} loop diverged at step {exc.step}", exc.step) from None
        header = (["t"] + [f"x{i}" for i in range(1, n + 1)]
                  + [f"xhat{i}" for i in range(1, n + 1)] + ["u", "y"])
        cols = ([traj.t] + list(traj.states.T) + list(traj.estimates.T)
                + [traj.control, traj.measurement])
        _write(args, f"trajectory_{name}.csv", csv_text(header, cols))
        err = np.linalg.norm(traj.extra["tracking_error"], axis=1)
        summary[name] = {
            "peak_estimate_norm": float(np.linalg.norm(traj.estimates, axis=1).max()),
            "peak_state_norm": float(np.linalg.norm(traj.states, axis=1).max()),
            "final_state_norm": float(np.linalg.norm(traj.states[-1])),
            "rms_tracking_error_after_5s": float(rms_after(traj.t, err, min(5.0, t_end / 2))),
        }
        curves_x1.append((traj.t, traj.states[:, 0], f"x1 ({name})"))
        curves_err.append((traj.t, err, name))
        ref = traj.extra["reference"]
    _write(args, "reference.csv",
           csv_text(["t"] + [f"x{i}" for i in range(1, n + 1)], [traj.t] + list(ref.T)))
    if args.plot:
        curves_x1.insert(0, (traj.t, ref[:, 0], "x1 (state feedback)"))
        _write(args, "x1.svg", line_chart(curves_x1, "first state", "t [s]", "x1"))
        _write(args, "tracking_error.svg",
               line_chart(curves_err, "tracking error norm", "t [s]", "|x - x_ref|", log_y=True))
    _write(args, "summary.json", json_text(summary))
    for name, vals in summary.items():
        print(f"[{name}]")
        print(table(list(vals.items())))
    return EXIT_OK, summary


def cmd_estimate(cfg: dict, args) -> tuple[int, dict]:
    noise = parse_noise(cfg, args.seed)
    sigma = _number(cfg, "sigma", 5.0)
    t_end = _number(cfg, "t_end", 20.0)
    dt = _number(cfg, "dt", noise.sample_dt)
    stride = int(cfg.get("stride", 10))
    t_transient = _number(cfg, "t_transient", 2.0, positive=False)
    traj = run_estimation_study(noise, sigma, t_end, x0=cfg.get("x0"), dt=dt,
                                eps=cfg.get("eps"), hgo_poles=cfg.get("hgo_poles"),
                                stride=stride)
    order = traj.extra["dirty"].shape[1]
    labels = [f"x{j + 2}" for j in range(order)]
    header = ["t", "x1", "y"] + labels
    cols = [traj.t, traj.states[:, 0], traj.measurement] + [traj.states[:, j + 1] for j in range(order)]
    for est in ("dirty", "hgo"):
        header += [f"{est}_{lab}" for lab in labels] + [f"{est}_abs_err_{lab}" for lab in labels]
        cols += list(traj.extra[est].T) + list(traj.extra[f"{est}_error"].T)
    _write(args, "estimates.csv", csv_text(header, cols))
    summary = {"t_transient": t_transient, "sigma": sigma}
    rows = []
    for est in ("dirty", "hgo"):
        rms = rms_after(traj.t, traj.extra[f"{est}_error"], t_transient)
        for lab, v in zip(labels, rms):
            summary[f"rms_{est}_{lab}"] = float(v)
            rows.append((f"RMS error {lab} ({est}, t > {t_transient:g} s)", float(v)))
    if args.plot:
        for j, lab in enumerate(labels):
            _write(args, f"estimate_{lab}.svg", line_chart(
                [(traj.t, traj.states[:, j + 1], "truth"),
                 (traj.t, traj.extra["dirty"][:, j], "dirty derivative"),
                 (traj.t, traj.extra["hgo"][:, j], "high-gain observer")],
                f"estimates of {lab}", "t [s]", lab))
            _write(args, f"abs_error_{lab}.svg", line_chart(
                [(traj.t, traj.extra["dirty_error"][:, j], "dirty derivative"),
                 (traj.t, traj.extra["hgo_error"][:, j], "high-gain observer")],
                f"absolute error of {lab}", "t [s]", "|error|", log_y=True))
    _write(args, "summary.json", json_text(summary))
    print(table(rows))
    return EXIT_OK, summary


def sweep_one(task):
    """Certificate and Hurwitz checks for one seeded random plant."""
    kind, seed, index, n, beta, factors, with_min = task
    rng = np.random.default_rng([seed, index])
    rec = {"index": index, "n": n}
    if kind == "thm1":
        plant = random_plant(rng, n)
        k = pole_placement_gain(plant)
        cert = certify_thm1(plant, k)
        rec.update(plant=plant.to_dict(), k=k.tolist(), sigma_bar=cert.sigma_bar)
        rec["checks"] = {str(f): bool(cert.build(f * cert.sigma_bar).is_hurwitz())
                         for f in factors}
        if with_min:
            rec["sigma_min"] = minimal_sigma(thm1_builder(plant, k), cert.sigma_bar)
    else:
        plant = random_adaptive_plant(rng, n, beta)
        k = adaptive_gain(plant)
        cert = certify_thm2(plant, k)
        rec.update(plant=plant.to_dict(), k=k.tolist(), gamma_bar=cert.gamma_bar)
        checks = {}
        for f in factors:
            g = cert.gamma_for(f)
            checks[str(f)] = bool(cert.build(g, f * cert.sigma_bar(g)).is_hurwitz())
        rec["checks"] = checks
        if with_min:
            g = cert.gamma_for(factors[0])
            rec["sigma_min"] = minimal_sigma(thm2_builder(plant, k, g), cert.sigma_bar(g))
    rec["pass"] = all(rec["checks"].values())
    return rec


def sweep_tasks(kind, count, seed, n_values, betas, factors, with_min):
    tasks = []
    for i in range(count):
        n = n_values[i % len(n_values)]
        beta = betas[i % len(betas)] if kind == "thm2" else None
        tasks.append((kind, seed, i, n, beta, tuple(factors), with_min))
    return tasks


def run_sweep(kind, count, seed, n_values, betas=(0.5, 1.0, 2.0), factors=None,
              with_min=True, jobs=1) -> dict:
    if factors is None:
        factors = (1.01, 10.0, 100.0) if kind == "thm1" else (1.01, 10.0)
    tasks = sweep_tasks(kind, count, seed, list(n_values), list(betas), factors, with_min)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(sweep_one, tasks, chunksize=4))
    else:
        records = [sweep_one(t) for t in tasks]
    per_factor = {str(f): (sum(r["checks"][str(f)] for r in records) / len(records)
                           if records else None) for f in factors}
    return {
        "kind": kind,
        "count": count,
        "seed": seed,
        "factors": list(factors),
        "pass_rate": (sum(r["pass"] for r in records) / len(records)) if records else None,
        "pass_rate_by_factor": per_factor,
        "records": records,
    }


def cmd_sweep(cfg: dict, args) -> tuple[int, dict]:
    kind = cfg.get("kind", "thm1")
    if kind not in ("thm1", "thm2"):
        raise ConfigError("kind must be 'thm1' or 'thm2'")
    count = int(cfg.get("count", 200))
    if count < 0:
        raise ConfigError("count must be nonnegative")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    lo, hi = (1, 6) if kind == "thm1" else (2, 7)
    n_values = cfg.get("n_values", list(range(int(cfg.get("n_min", lo)), int(cfg.get("n_max", hi)) + 1)))
    if kind == "thm2" and min(n_values, default=2) < 2:
        raise ConfigError("the adaptive loop needs n >= 2")
    agg = run_sweep(kind, count, seed, n_values, cfg.get("betas", (0.5, 1.0, 2.0)),
                    cfg.get("factors"), bool(cfg.get("sigma_min", True)), args.jobs)
    _write(args, "sweep.json", json_text(agg))
    rate = agg["pass_rate"]
    print(table([("plants", count),
                 ("pass rate", "n/a" if rate is None else f"{100 * rate:.1f}%")]
                + [(f"pass rate at {f} x bound", "n/a" if v is None else f"{100 * v:.1f}%")
                   for f, v in agg["pass_rate_by_factor"].items()]))
    return (EXIT_OK if rate in (None, 1.0) else EXIT_CERT), agg


COMMANDS = {
    "certify": cmd_certify,
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dirtyderiv",
        description="Dirty-derivative output feedback: certificates and simulations.",
        epilog="Stability rule: spectral abscissa < -1e-9, decided in exact arithmetic.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("certify", "stability thresholds for one plant"),
                           ("simulate", "noisy closed-loop simulation"),
                           ("estimate", "noisy differentiation study"),
                           ("sweep", "certificate soundness over random plants")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--plot", action="store_true", help="also write SVG charts")
        if name == "sweep":
            p.add_argument("--jobs", type=int, default=1, help="worker processes")
        else:
            p.set_defaults(jobs=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        code, _ = COMMANDS[args.command](cfg, args)
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NotStabilizing, UnstableAtCap) as exc:
        print(f"certification failed: {exc}", file=sys.stderr)
        return EXIT_CERT
    except NonFiniteState as exc:
        print(f"divergence: {exc} (step {exc.step})", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DirtyDerivError, ValueError, TypeError, KeyError) as exc:
        if isinstance(exc, IterationDivergence):
            print(f"gain synthesis failed: {exc}", file=sys.stderr)
        else:
            print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
