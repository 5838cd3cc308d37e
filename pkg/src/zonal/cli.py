"""Command-line entry point.

Every subcommand resolves its configuration from built-in defaults, an
optional JSON config file, and explicit flags (flags win), echoes the
resolved configuration into the output directory, and writes plain CSV/JSON
artifacts.  Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import checks, gap, harness, krr, spectra
from .errors import NumericalError, ValidationError
from .harmonics import sphere_sample
from .spectra import builtin_kernel, compute_spectrum

__all__ = ["build_parser", "dispatch", "main"]


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; route through ValidationError
    # so the CLI's documented exit-code contract (1 = validation) holds.
    def error(self, message):
        raise ValidationError(message)


_KERNEL_FLAGS = ("kernel", "d", "kmax", "h", "alpha", "seed", "out", "threads")


def _add_common(p: _Parser, *, kernel: bool = True) -> None:
    if kernel:
        p.add_argument("--kernel", type=str, default=None,
                       help="kernel name: arccos0 arccos1 relu_alpha gaussian "
                            "sigmoid softplus silu heaviside")
        p.add_argument("--d", type=int, default=None, help="sphere dimension (>= 3)")
        p.add_argument("--kmax", type=int, default=None, help="spectrum truncation degree")
        p.add_argument("--h", type=float, default=None, help="gaussian bandwidth h")
        p.add_argument("--alpha", type=int, default=None, help="relu_alpha exponent")
    p.add_argument("--config", type=str, default=None, help="JSON config file")
    p.add_argument("--out", type=str, default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--threads", type=int, default=None, help="worker pool size")


def build_parser() -> _Parser:
    parser = _Parser(prog="zonal", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", parents=[], help="kernel -> spectrum.csv")
    _add_common(p)

    p = sub.add_parser("tail", help="tail mass table (m, T, Lambda)")
    _add_common(p)
    p.add_argument("--m-list", type=str, default=None,
                   help="comma-separated tail indices (default: degree boundaries)")

    p = sub.add_parser("synth", help="spectrum -> activation samples CSV")
    _add_common(p)
    p.add_argument("--points", type=int, default=None, help="number of t samples")

    p = sub.add_parser("beta", help="fit the eigenvalue decay exponent")
    _add_common(p)
    p.add_argument("--window", type=str, default=None, help="fit window j_min,j_max")

    p = sub.add_parser("bounds", help="upper/lower bound table over n")
    _add_common(p)
    p.add_argument("--n-grid", type=str, default=None, help="comma-separated sample sizes")
    p.add_argument("--sigma", type=float, default=None, help="noise level")
    p.add_argument("--delta", type=float, default=None, help="failure probability")
    p.add_argument("--L-choice", type=str, default=None,
                   help="envelope: inverse_m | power_law | spectral")

    p = sub.add_parser("krr", help="single constrained fit with errors")
    _add_common(p)
    p.add_argument("--n", type=int, default=None, help="training sample size")
    p.add_argument("--sigma", type=float, default=None, help="noise level")
    p.add_argument("--target-centers", type=int, default=None)
    p.add_argument("--sup-grid", type=int, default=None)
    p.add_argument("--mc-points", type=int, default=None)

    p = sub.add_parser("gap", help="gap certificates and hard-function identities")
    _add_common(p)
    p.add_argument("--mode", type=str, default=None, help="delta | hard | project")
    p.add_argument("--n", type=int, default=None, help="constraint sample size")
    p.add_argument("--epsilon", type=float, default=None, help="empirical norm budget")
    p.add_argument("--probes", type=int, default=None, help="number of probe points")
    p.add_argument("--degree", type=int, default=None, help="degree k for hard/project")

    p = sub.add_parser("curve", help="learning-curve experiment with report files")
    _add_common(p)
    p.add_argument("--n-grid", type=str, default=None, help="comma-separated sample sizes")
    p.add_argument("--trials", type=int, default=None, help="trials per sample size")
    p.add_argument("--sigma", type=float, default=None, help="noise level")
    p.add_argument("--delta", type=float, default=None, help="failure probability")
    p.add_argument("--target-centers", type=int, default=None)
    p.add_argument("--sup-grid", type=int, default=None)
    p.add_argument("--mc-points", type=int, default=None)
    p.add_argument("--L-choice", type=str, default=None)

    p = sub.add_parser("check", help="run the full invariant suite")
    _add_common(p, kernel=False)
    return parser


def _load_config(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError("config file must hold a JSON object")
    return data


def _resolve(args, defaults: dict, flag_names) -> dict:
    """defaults <- config file <- explicit flags; unknown config keys rejected."""
    resolved = dict(defaults)
    if getattr(args, "config", None):
        file_cfg = _load_config(args.config)
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        resolved.update(file_cfg)
    for name in flag_names:
        val = getattr(args, name.replace("-", "_"), None)
        if val is not None:
            resolved[name.replace("-", "_")] = val
    return resolved


def _echo_config(resolved: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved_config.json").write_text(
        json.dumps(resolved, sort_keys=True, indent=2) + "\n")


def _kernel_from(resolved: dict):
    params = {}
    if resolved.get("h") is not None:
        params["h"] = resolved["h"]
    if resolved.get("alpha") is not None:
        params["alpha"] = resolved["alpha"]
    return builtin_kernel(resolved["kernel"], resolved["d"], params), params


_KERNEL_DEFAULTS = {"kernel": "arccos0", "d": 5, "kmax": 40, "h": None,
                    "alpha": None, "seed": 0, "out": "zonal_out", "threads": 1}


def _parse_int_list(text: str, flag: str) -> list:
    try:
        return [int(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise ValidationError(f"bad {flag} value {text!r}") from exc


def _cmd_spectrum(args) -> int:
    resolved = _resolve(args, _KERNEL_DEFAULTS, _KERNEL_FLAGS)
    spec, _ = _kernel_from(resolved)
    spectrum = compute_spectrum(spec, k_max=resolved["kmax"])
    out = Path(resolved["out"])
    _echo_config(resolved, out)
    spectra.spectrum_to_csv(spectrum, out / "spectrum.csv")
    print(f"wrote {out / 'spectrum.csv'} (trace {spectrum.trace_target!r}, "
          f"residual {spectrum.truncation_residual!r})")
    return 0


def _cmd_tail(args) -> int:
    defaults = dict(_KERNEL_DEFAULTS, m_list=None)
    resolved = _resolve(args, defaults, _KERNEL_FLAGS + ("m-list",))
    spec, _ = _kernel_from(resolved)
    spectrum = compute_spectrum(spec, k_max=resolved["kmax"])
    if resolved["m_list"]:
        ms = _parse_int_list(resolved["m_list"], "--m-list")
    else:
        ms = [int(b) for b in spectrum.boundaries if b < 2 ** 53]
    out = Path(resolved["out"])
    _echo_config(resolved, out)
    lines = ["m,T,Lambda,beyond_truncation"]
    for m in ms:
        tv = spectrum.tail(m)
        lines.append(f"{m},{tv.T!r},{tv.Lambda!r},{int(tv.beyond_truncation)}")
    (out / "tail.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {out / 'tail.csv'}")
    return 0


def _cmd_synth(args) -> int:
    defaults = dict(_KERNEL_DEFAULTS, points=201)
    resolved = _resolve(args, defaults, _KERNEL_FLAGS + ("points",))
    spec, _ = _kernel_from(resolved)
    spectrum = compute_spectrum(spec, k_max=resolved["kmax"])
    sigma = spectra.synth_activation(spectrum)
    ts = np.linspace(-1.0, 1.0, resolved["points"])
    out = Path(resolved["out"])
    _echo_config(resolved, out)
    lines = ["t,sigma"] + [f"{float(t)!r},{float(v)!r}" for t, v in zip(ts, sigma(ts))]
    (out / "synth.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {out / 'synth.csv'}")
    return 0


def _cmd_beta(args) -> int:
    defaults = dict(_KERNEL_DEFAULTS, window=None)
    resolved = _resolve(args, defaults, _KERNEL_FLAGS + ("window",))
    spec, _ = _kernel_from(resolved)
    spectrum = compute_spectrum(spec, k_max=resolved["kmax"])
    window = None
    if resolved["window"]:
        vals = _parse_int_list(resolved["window"], "--window")
        if len(vals) != 2:
            raise ValidationError("--window takes j_min,j_max")
        window = tuple(vals)
    model = spectra.fit_beta(spectrum, window=window)
    d_exp, n_exp = spectra.predicted_rate(model.beta_hat, resolved["d"])
    out = Path(resolved["out"])
    _echo_config(resolved, out)
    payload = {"beta_hat": model.beta_hat, "window": list(model.window),
               "residual": model.residual, "slope": model.slope,
               "q_power_law": model.q_value,
               "predicted_exponents": {"d": d_exp, "n": n_exp}}
    (out / "beta.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    print(json.dumps(payload, sort_keys=True))
    return 0


def _cmd_bounds(args) -> int:
    defaults = dict(_KERNEL_DEFAULTS, n_grid="32,128,512,2048", sigma=0.1,
                    delta=0.05, L_choice="inverse_m")
    resolved = _resolve(args, defaults,
                        _KERNEL_FLAGS + ("n-grid", "sigma", "delta", "L-choice"))
    spec, _ = _kernel_from(resolved)
    spectrum = compute_spectrum(spec, k_max=resolved["kmax"])
    n_grid = (_parse_int_list(resolved["n_grid"], "--n-grid")
              if isinstance(resolved["n_grid"], str) else list(resolved["n_grid"]))
    beta = None
    if resolved["L_choice"] == "power_law":
        beta = spectra.fit_beta(spectrum).beta_hat
    terms = harness.bound_curves(spec, spectrum, resolved["sigma"],
                                 resolved["delta"], n_grid,
                                 L_choice=resolved["L_choice"], beta=beta)
    out = Path(resolved["out"])
    _echo_config(resolved, out)
    lines = ["n,epsilon,e,m_star,rhs,sqrt_qL_term,lower,q,q_at_cap"]
    for bt in terms:
        lines.append(",".join([str(bt.n), repr(bt.epsilon), repr(bt.e),
                               repr(bt.m_star), repr(bt.rhs),
                               repr(bt.sqrt_qL_term), repr(bt.lower),
                               repr(bt.q), str(int(bt.q_at_cap))]))
    (out / "bounds.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {out / 'bounds.csv'}")
    return 0


def _cmd_krr(args) -> int:
    defaults = dict(_KERNEL_DEFAULTS, n=128, sigma=0.1, target_centers=16,
                    sup_grid=4000, mc_points=4000)
    resolved = _resolve(args, defaults, _KERNEL_FLAGS + (
        "n", "sigma", "target-centers", "sup-grid", "mc-points"))
    spec, _ = _kernel_from(resolved)
    spectrum = compute_spectrum(spec, k_max=resolved["kmax"])
    profile = spectra.kernel_profile(spec, spectrum=spectrum)
    seed = harness.task_seed(resolved["seed"], resolved["n"], 0)
    s_target, s_x, s_noise, s_sup, s_mc = (
        int(v) for v in np.random.SeedSequence(seed).generate_state(5))
    target = krr.sample_target(spec, resolved["d"], resolved["target_centers"],
                               s_target, profile=profile)
    X = sphere_sample(resolved["d"], resolved["n"], s_x)
    y = target(X.points) + resolved["sigma"] * np.random.default_rng(
        s_noise).standard_normal(resolved["n"])
    K = krr.gram(spec, X, profile=profile)
    model = krr.fit_constrained(K, y, spec=spec, centers=X.points)
    err_centers = np.vstack([X.points, target.centers])
    err_coeffs = np.concatenate([model.coefficients, -target.coefficients])

    def err_fn(points):
        return krr.kernel_expansion(profile, err_centers, err_coeffs, points)

    sup = krr.sup_norm_estimate(err_fn, resolved["d"], resolved["sup_grid"], s_sup)
    mc = sphere_sample(resolved["d"], resolved["mc_points"], s_mc).points
    l2 = float(np.sqrt(np.mean(err_fn(mc) ** 2)))
    out = Path(resolved["out"])
    _echo_config(resolved, out)
    payload = model.to_json_dict()
    payload["errors"] = {"linf_lower_estimate": sup.value, "l2_mc": l2}
    payload["diagnostics"] = {k: (v if isinstance(v, (int, float, str)) else float(v))
                              for k, v in model.diagnostics.items()}
    (out / "krr_model.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    print(json.dumps(payload["errors"], sort_keys=True))
    return 0


def _cmd_gap(args) -> int:
    defaults = dict(_KERNEL_DEFAULTS, mode="delta", n=100, epsilon=0.1,
                    probes=4, degree=2)
    resolved = _resolve(args, defaults, _KERNEL_FLAGS + (
        "mode", "n", "epsilon", "probes", "degree"))
    spec, _ = _kernel_from(resolved)
    spectrum = compute_spectrum(spec, k_max=resolved["kmax"])
    out = Path(resolved["out"])
    _echo_config(resolved, out)
    d = resolved["d"]
    mode = resolved["mode"]
    if mode == "delta":
        X = sphere_sample(d, resolved["n"], resolved["seed"])
        probes = sphere_sample(d, resolved["probes"], resolved["seed"] + 1).points
        cert = gap.delta_estimate(spec, X, resolved["epsilon"], probes)
        payload = gap.certificate_to_json_dict(cert)
    elif mode == "hard":
        x0 = sphere_sample(d, 1, resolved["seed"]).points[0]
        hf = gap.hard_function(spectrum, resolved["degree"], x0)
        payload = {"degree": hf.k, "value_at_pole": hf.value_at_pole,
                   "l2_norm": hf.l2_norm, "rkhs_norm": hf.rkhs_norm,
                   "multiplicity": hf.multiplicity}
    elif mode == "project":
        if spec.variant != "activation":
            raise ValidationError("project mode needs an activation kernel")
        x0 = sphere_sample(d, 1, resolved["seed"]).points[0]
        proj = gap.project_neuron(spec.activation_fn, spectrum, d,
                                  resolved["degree"], x0)
        payload = {"k_trunc": proj.k_trunc, "l2_error_sq": proj.l2_error_sq,
                   "l2_error_sq_quadrature": proj.l2_error_sq_quadrature,
                   "rkhs_norm_sq": proj.rkhs_norm_sq,
                   "lemma_count": proj.lemma_count,
                   "count_differs_from_lemma": proj.count_differs_from_lemma,
                   "skipped_degrees": list(proj.skipped_degrees)}
    else:
        raise ValidationError(f"unknown gap mode {mode!r}")
    (out / "gap.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    print(json.dumps(payload, sort_keys=True))
    return 0


def _cmd_curve(args) -> int:
    defaults = dict(kernel="sigmoid", d=5, kmax=60, h=None, alpha=None,
                    seed=2024, out="zonal_out", threads=1,
                    n_grid="32,128,512,2048", trials=20, sigma=0.1, delta=0.05,
                    target_centers=16, sup_grid=10000, mc_points=10000,
                    L_choice="inverse_m")
    resolved = _resolve(args, defaults, _KERNEL_FLAGS + (
        "n-grid", "trials", "sigma", "delta", "target-centers", "sup-grid",
        "mc-points", "L-choice"))
    params = {}
    if resolved.get("h") is not None:
        params["h"] = resolved["h"]
    if resolved.get("alpha") is not None:
        params["alpha"] = resolved["alpha"]
    n_grid = (_parse_int_list(resolved["n_grid"], "--n-grid")
              if isinstance(resolved["n_grid"], str) else list(resolved["n_grid"]))
    config = harness.ExperimentConfig(
        kernel_name=resolved["kernel"], d=resolved["d"], kernel_params=params,
        n_grid=tuple(n_grid), trials=resolved["trials"],
        noise_sigma=resolved["sigma"], delta=resolved["delta"],
        target_centers=resolved["target_centers"], sup_grid=resolved["sup_grid"],
        mc_points=resolved["mc_points"], k_max=resolved["kmax"],
        master_seed=resolved["seed"], L_choice=resolved["L_choice"],
        threads=resolved["threads"], out_dir=resolved["out"])
    out = Path(resolved["out"])
    _echo_config(dict(resolved, n_grid=n_grid), out)
    report = harness.run_curve(config)
    paths = harness.write_report(report, out)
    print(f"wrote {paths['raw']}, {paths['agg']}, {paths['summary']}")
    if report.rate:
        print(f"empirical slope {report.rate.slope!r}, band {report.rate.band}")
    return 0


def _cmd_check(args) -> int:
    resolved = _resolve(args, {"seed": 0, "out": None, "threads": 1},
                        ("seed", "out", "threads"))
    results = checks.run_all()
    failed = [r for r in results if not r.ok]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if resolved.get("out"):
        out = Path(resolved["out"])
        _echo_config(resolved, out)
        (out / "check.json").write_text(json.dumps(
            [r._asdict() for r in results], sort_keys=True, indent=2) + "\n")
    return 0 if not failed else 2


_HANDLERS = {
    "spectrum": _cmd_spectrum,
    "tail": _cmd_tail,
    "synth": _cmd_synth,
    "beta": _cmd_beta,
    "bounds": _cmd_bounds,
    "krr": _cmd_krr,
    "gap": _cmd_gap,
    "curve": _cmd_curve,
    "check": _cmd_check,
}


def dispatch(argv=None) -> int:
    """Parse arguments and run the selected subcommand."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "threads", None) in (0, -1):
            args.threads = os.cpu_count() or 1
        return _HANDLERS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
