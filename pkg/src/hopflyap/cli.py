"""Command-line driver: rigorous proofs, parameter scans and grid exports.

`prove` runs the full certification pipeline and writes a machine-readable
JSON report; its exit code encodes the certified sign.  `scan` sweeps one
model parameter with the (non-rigorous) float pipeline and writes a CSV curve.
`export-grid` evaluates a stored eigenfunction or the expansion rate on a
uniform grid for plotting.

Config files are flat `key = value` text (a diffable proof artifact):

    mode = prove
    a = 1.0
    alpha = 1.0
    beta = 1.0
    b = 3.5
    sigma = 1.2
    r_min = 0.75
    r_max = 1.25
    K = 30
    N = 30
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .certify import (
    NormalizationFailed,
    PairingFailed,
    PositivityFailed,
    check_pairing,
    check_positivity,
    lyapunov_enclosure,
)
from .eig import FloatDiscretization, approx_eigenpairs, eig_shift_invert, eigh_smallest
from .homotopy import HomotopyOpts
from .newton import ValidationConfig, ValidationError, validate_eigenpair
from .operators import ModelParams, OperatorData, expansion_rate
from .series import ChebFourierSeries, Domain

__all__ = ["RunConfig", "load_config", "run_prove", "run_scan", "export_grid", "main"]

EXIT_POSITIVE = 0
EXIT_NEGATIVE = 1
EXIT_INDETERMINATE = 2
EXIT_CONFIG = 10
EXIT_VALIDATE_ETA = 11
EXIT_VALIDATE_PHI = 12
EXIT_POSITIVITY = 13
EXIT_PAIRING = 14
EXIT_ENCLOSURE = 15


@dataclass
class RunConfig:
    a: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    b: float = 3.5
    sigma: float = 1.2
    r_min: float = 0.75
    r_max: float = 1.25
    K: int = 30
    N: int = 30
    mode: str = "prove"
    # validation knobs
    theta: float = 1.0
    xi2: float | None = None
    eta_L: float = 0.5
    eta_L0: float = 0.25
    eta_S_frac: float = 0.5
    epsilon_positivity: float | None = None
    inv_modes: int = 80
    # homotopy knobs
    gamma_factor: float = 1.5
    backoff: float = 0.5
    max_retries: int = 8
    m_margin: float = 0.35
    guess_margin: float = 1.2
    max_drop: int = 4
    window_margin: float = 1.12
    max_attempts: int = 3
    # scan grid
    scan_parameter: str = "sigma"
    scan_lo: float = 0.8
    scan_hi: float = 2.0
    scan_steps: int = 25
    scan_K: int = 24
    scan_N: int = 12

    def validate(self):
        if not self.a > 0:
            raise ValueError("a must be positive")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not 0 < self.r_min < self.r_max:
            raise ValueError("need 0 < r_min < r_max")
        if self.K < 8:
            raise ValueError("K must be at least 8")
        if self.N < 4:
            raise ValueError("N must be at least 4")
        if self.mode not in ("prove", "scan"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def params(self) -> ModelParams:
        return ModelParams(
            a=self.a, alpha=self.alpha, beta=self.beta, b=self.b,
            sigma=self.sigma, r_min=self.r_min, r_max=self.r_max,
        )

    def validation_config(self) -> ValidationConfig:
        hom = HomotopyOpts(
            gamma_factor=self.gamma_factor,
            backoff=self.backoff,
            max_retries=self.max_retries,
            m_margin=self.m_margin,
            guess_margin=self.guess_margin,
            max_drop=self.max_drop,
        )
        return ValidationConfig(
            K=self.K, N=self.N, eta_L=self.eta_L, eta_L0=self.eta_L0,
            eta_S_frac=self.eta_S_frac, theta=self.theta, xi2=self.xi2,
            gamma_factor=self.gamma_factor, window_margin=self.window_margin,
            max_attempts=self.max_attempts, inv_modes=self.inv_modes, homotopy=hom,
        )

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def load_config(path: str) -> RunConfig:
    """Parse a flat key = value config file (comments with #)."""
    cfg = RunConfig()
    fields = cfg.__dataclass_fields__
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (part.strip() for part in line.split("=", 1))
            if key not in fields:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            ftype = fields[key].type
            val = val.strip().strip('"').strip("'")
            if val.lower() in ("none", ""):
                parsed = None
            elif "int" in str(ftype):
                parsed = int(float(val))
            elif "float" in str(ftype):
                parsed = float(val)
            else:
                parsed = val
            setattr(cfg, key, parsed)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# float pipeline shared by scan mode
# ---------------------------------------------------------------------------


def _quad_nodes(dom: Domain, nr: int, npsi: int):
    x, w = np.polynomial.legendre.leggauss(nr)
    r = 0.5 * (dom.r_max - dom.r_min) * x + 0.5 * (dom.r_max + dom.r_min)
    wr = 0.5 * w  # normalized radial measure
    psi = 2 * np.pi * np.arange(npsi) / npsi
    return r, wr, psi


def eval_series_float(s: ChebFourierSeries, R, P):
    c = s.coeffs.mid()
    t = (2 * R - (s.domain.r_max + s.domain.r_min)) / (s.domain.r_max - s.domain.r_min)
    out = np.zeros_like(R, dtype=complex)
    N = s.N
    for idx in range(2 * N - 1):
        n = idx - (N - 1)
        col = c[:, idx].copy()
        col[1:] *= 2.0
        out = out + np.polynomial.chebyshev.chebval(t, col) * np.exp(1j * n * P)
    return out


def float_lyapunov(params: ModelParams, K: int, N: int) -> dict:
    """Non-rigorous Lambda_c at one parameter point (the scan kernel)."""
    data = OperatorData.from_params(params, inv_modes=48)
    fd = FloatDiscretization(data, K, N)
    A, B = fd.radial_operator_matrix("L")
    out = approx_eigenpairs(A, B, A.shape[0], target=0.0, hermitian=False)
    lam0, vec_eta, resid_eta = max(out, key=lambda t: t[0].real)
    lam0 = lam0.real
    Af, Bf = fd.operator_pencil("Lstar")
    outs = eig_shift_invert(Af, Bf, target=lam0 + 1e-7 * (1 + abs(lam0)), k=3)
    lam_phi, vec_phi, resid_phi = min(outs, key=lambda t: abs(t[0] - lam0))

    dom = params.domain
    Kred, Nn = K - 2, 2 * N - 1
    lift = fd.lift_X()
    eta_prof = lift @ vec_eta  # radial profile coefficients
    phi_coef = lift @ vec_phi.reshape(Nn, Kred).T  # (K, Nn)

    nr, npsi = K + 12, max(4 * N, 16)
    r, wr, psi = _quad_nodes(dom, nr, npsi)
    R, P = np.meshgrid(r, psi, indexing="ij")
    t = (2 * R - (dom.r_max + dom.r_min)) / (dom.r_max - dom.r_min)

    def cheb_eval(coefs, tt):
        cc = coefs.copy()
        cc[1:] *= 2.0
        return np.polynomial.chebyshev.chebval(tt, cc)

    eta_vals = cheb_eval(eta_prof.real, t) + 1j * cheb_eval(eta_prof.imag, t)
    phi_vals = np.zeros_like(R, dtype=complex)
    for idx in range(Nn):
        n = idx - (N - 1)
        phi_vals += cheb_eval(phi_coef[:, idx], t) * np.exp(1j * n * P)
    c = math.hypot(params.a, params.b)
    e_vals = params.alpha - 2 * params.a * R**2 + R**2 * c * np.sin(P)

    def mean(f):
        return np.sum(f * wr[:, None]) / npsi

    den = mean(eta_vals * phi_vals)
    num = mean(e_vals * eta_vals * phi_vals)
    lam_c = (num / den).real if abs(den) > 0 else math.nan
    return {
        "lambda_c": lam_c,
        "lambda0": lam0,
        "lambda0_phi": lam_phi.real,
        "residual_eta": resid_eta,
        "residual_phi": resid_phi,
    }


def run_scan(config: RunConfig, out_path: str, log_fn=None) -> list[dict]:
    """Sweep one parameter; failures become NaN rows and the sweep continues."""
    say = log_fn or (lambda m: None)
    pts = np.linspace(config.scan_lo, config.scan_hi, config.scan_steps)
    workers = int(os.environ.get("HOPFLYAP_THREADS", "0")) or min(4, os.cpu_count() or 1)

    def one(value: float) -> dict:
        d = config.to_dict()
        d[config.scan_parameter] = float(value)
        p = ModelParams(
            a=d["a"], alpha=d["alpha"], beta=d["beta"], b=d["b"],
            sigma=d["sigma"], r_min=d["r_min"], r_max=d["r_max"],
        )
        try:
            row = float_lyapunov(p, config.scan_K, config.scan_N)
        except Exception as exc:  # per-point failure: record and continue
            say(f"scan point {value:.6g} failed: {exc}")
            row = {
                "lambda_c": math.nan, "lambda0": math.nan, "lambda0_phi": math.nan,
                "residual_eta": math.nan, "residual_phi": math.nan,
            }
        row[config.scan_parameter] = float(value)
        return row

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, pts))
    else:
        rows = [one(v) for v in pts]
    cols = [config.scan_parameter, "lambda_c", "lambda0", "lambda0_phi", "residual_eta", "residual_phi"]
    with open(out_path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(f"{row[c]:.12g}" for c in cols) + "\n")
    say(f"wrote {len(rows)} scan rows to {out_path}")
    return rows


# ---------------------------------------------------------------------------
# prove mode
# ---------------------------------------------------------------------------


def run_prove(config: RunConfig, out_path: str | None = None, log_fn=None) -> tuple[dict, int]:
    """Full rigorous pipeline; returns (report dict, exit code)."""
    say = log_fn or (lambda m: None)
    t0 = time.time()
    config.validate()
    params = config.params
    data = OperatorData.from_params(params, inv_modes=config.inv_modes)
    vcfg = config.validation_config()
    report: dict = {
        "tool": {"name": "hopflyap", "version": __version__,
                 "numpy": np.__version__, "python": sys.version.split()[0]},
        "config": config.to_dict(),
    }

    workers = int(os.environ.get("HOPFLYAP_THREADS", "0")) or 2

    def job(which, target=None):
        return validate_eigenpair(data, which, vcfg, target=target, log_fn=say)

    try:
        if workers >= 2:
            with ThreadPoolExecutor(max_workers=2) as pool:
                fut_eta = pool.submit(job, "L")
                fut_phi = pool.submit(job, "Lstar")
                eta = fut_eta.result()
                phi = fut_phi.result()
        else:
            eta = job("L")
            phi = job("Lstar", target=None)
    except Exception as exc:
        stage = getattr(exc, "stage", "validation")
        report["error"] = {"stage": str(stage), "message": str(exc)}
        _write_report(report, out_path)
        return report, EXIT_VALIDATE_ETA
    report["eta"] = eta.to_dict()
    report["phi"] = phi.to_dict()

    try:
        pos = check_positivity(eta, epsilon=config.epsilon_positivity)
    except PositivityFailed as exc:
        report["error"] = {"stage": "positivity", "message": str(exc)}
        _write_report(report, out_path)
        return report, EXIT_POSITIVITY
    try:
        pairing = check_pairing(eta, phi)
    except PairingFailed as exc:
        report["error"] = {"stage": "pairing", "message": str(exc)}
        _write_report(report, out_path)
        return report, EXIT_PAIRING
    try:
        cert = lyapunov_enclosure(eta, phi, params, positivity=pos, pairing=pairing)
    except NormalizationFailed as exc:
        report["error"] = {"stage": "normalization", "message": str(exc)}
        _write_report(report, out_path)
        return report, EXIT_ENCLOSURE

    report["certified"] = cert.to_dict()
    report["seconds_total"] = round(time.time() - t0, 1)
    _write_report(report, out_path)
    say(
        f"certified Lambda_c in [{cert.lambda_c.lo:.6g}, {cert.lambda_c.hi:.6g}] "
        f"({cert.sign}); escape rate in [{cert.lambda0.lo:.6g}, {cert.lambda0.hi:.6g}]"
    )
    code = {"positive": EXIT_POSITIVE, "negative": EXIT_NEGATIVE}.get(cert.sign, EXIT_INDETERMINATE)
    return report, code


def _write_report(report: dict, out_path: str | None):
    if out_path:
        with open(out_path, "w") as fh:
            json.dump(report, fh, indent=1)


# ---------------------------------------------------------------------------
# grid export
# ---------------------------------------------------------------------------


def export_grid(source, which: str, n: int, out_path: str, params: ModelParams | None = None):
    """Write (r, psi, value) rows of a stored eigenfunction or expansion rate."""
    if which == "e":
        if params is None:
            raise ValueError("expansion-rate export needs model parameters")
        series = expansion_rate(params)
    else:
        if isinstance(source, dict):
            series = ChebFourierSeries.from_dict(source[which]["series"])
        else:
            series = source
    dom = series.domain
    with open(out_path, "w") as fh:
        fh.write("r,psi,value\n")
        if n <= 0:
            return
        rs = np.linspace(dom.r_min, dom.r_max, n)
        ps = np.linspace(0.0, 2 * math.pi, n)
        R, P = np.meshgrid(rs, ps, indexing="ij")
        vals = eval_series_float(series, R, P).real
        for i in range(n):
            for j in range(n):
                fh.write(f"{R[i, j]:.10g},{P[i, j]:.10g},{vals[i, j]:.12g}\n")


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="hopflyap", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p_prove = sub.add_parser("prove", help="run the rigorous certification pipeline")
    p_prove.add_argument("--config", required=True)
    p_prove.add_argument("--out", required=True, help="JSON report path")
    p_prove.add_argument("--quiet", action="store_true")

    p_scan = sub.add_parser("scan", help="float parameter sweep")
    p_scan.add_argument("--config", required=True)
    p_scan.add_argument("--out", required=True, help="CSV curve path")
    p_scan.add_argument("--quiet", action="store_true")

    p_grid = sub.add_parser("export-grid", help="evaluate a report series on a grid")
    p_grid.add_argument("--report", required=True)
    p_grid.add_argument("--which", choices=["eta", "phi", "e"], required=True)
    p_grid.add_argument("--n", type=int, default=64)
    p_grid.add_argument("--out", required=True)

    args = ap.parse_args(argv)
    if args.command == "prove":
        try:
            cfg = load_config(args.config)
        except (OSError, ValueError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        say = (lambda m: None) if args.quiet else (lambda m: print(m, flush=True))
        _, code = run_prove(cfg, args.out, log_fn=say)
        return code
    if args.command == "scan":
        try:
            cfg = load_config(args.config)
        except (OSError, ValueError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        say = (lambda m: None) if args.quiet else (lambda m: print(m, flush=True))
        run_scan(cfg, args.out, log_fn=say)
        return 0
    if args.command == "export-grid":
        with open(args.report) as fh:
            report = json.load(fh)
        params = None
        if args.which == "e":
            c = report["config"]
            params = ModelParams(
                a=c["a"], alpha=c["alpha"], beta=c["beta"], b=c["b"],
                sigma=c["sigma"], r_min=c["r_min"], r_max=c["r_max"],
            )
        export_grid(report, args.which, args.n, args.out, params=params)
        return 0
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
