"""Command-line front end.

    mprobe m eval PROBLEM.json [--ray ...] [--out trace.csv]
    mprobe probe run P1.json P2.json [--ray ...] [--out report.json]
    mprobe replay borg-marchenko P1.json P2.json --z -10,-50
    mprobe kernel compute PROBLEM.json [--kernel-h H]
    mprobe jacobi order|reconstruct|m ...

Exit status is 0 on success, 2 for bad input and 3 for numerical failure;
errors are also written to stderr as one JSON object.  Flags fall back to
``MPROBE_<FLAG>`` environment variables (``MPROBE_RAY``, ``MPROBE_TOL_ODE``,
``MPROBE_KERNEL_H``, ``MPROBE_FLOOR``, ``MPROBE_JOBS``, ``MPROBE_OUT``).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import jacobi, kernels, probe, weyl
from .errors import ConfigurationError, InputError, MProbeError, NumericalError, ValidationError
from .model import HALF_LINE, PiecewisePotential, parse_problem
from .numerics import DEFAULT_FLOOR, SpectralRay

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3
DEFAULT_M_RAY = "neg,rmin=1,rmax=100,n=32"
DEFAULT_KERNEL_CELLS = 400


@dataclass
class RunConfig:
    subcommand: str
    inputs: list = field(default_factory=list)
    ray: SpectralRay | None = None
    tol_ode: float = weyl.DEFAULT_RTOL
    kernel_h: float | None = None
    floor: float = DEFAULT_FLOOR
    out: str | None = None
    jobs: int = 1

    def __post_init__(self):
        bad = [name for name in ("tol_ode", "floor") if not getattr(self, name) > 0]
        if self.kernel_h is not None and not self.kernel_h > 0:
            bad.append("kernel_h")
        if bad:
            raise ConfigurationError(f"tolerances must be positive: {', '.join(bad)}")
        if self.jobs < 1:
            raise ConfigurationError("--jobs must be >= 1")
        if self.out is not None:
            parent = Path(self.out).resolve().parent
            if not parent.is_dir() or not os.access(parent, os.W_OK):
                raise ConfigurationError(f"output path {self.out!r} is not writable")


# ---------------------------------------------------------------------------
# serialization


def _num(x):
    x = float(x)
    if not math.isfinite(x):
        return "null" if math.isnan(x) else ("1e999" if x > 0 else "-1e999")
    return format(x, ".17g")


def dumps(obj, indent=0):
    """JSON with every float written to 17 significant digits."""
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {dumps(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + dumps(v, indent + 1) for v in obj) + "\n" + pad + "]"
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    return json.dumps(str(obj))


def _complex(z):
    z = complex(z)
    return [z.real, z.imag]


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _read_json(path):
    try:
        text = sys.stdin.read() if path == "-" else Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError([(str(path), f"malformed JSON: {exc.msg} at line {exc.lineno}")]) from None


def _read_problem(path):
    doc = _read_json(path)
    try:
        return parse_problem(doc)
    except ValidationError as exc:
        raise ValidationError([(f"{path}:{p}" if p else str(path), m) for p, m in exc.errors]) from None


# ---------------------------------------------------------------------------
# commands


def cmd_m_eval(cfg: RunConfig):
    spec = _read_problem(cfg.inputs[0])
    ray = cfg.ray or SpectralRay.parse(DEFAULT_M_RAY)
    trace = weyl.m_trace(spec, ray, cfg.tol_ode, cfg.jobs)
    _emit(weyl.trace_to_csv(trace), cfg.out)


def _diff_csv(trace, diffs):
    fh = io.StringIO()
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["re_z", "im_z", "s", "delta_m"])
    for z, (s, d) in zip(trace.z, diffs):
        w.writerow([_num(z.real), _num(z.imag), _num(s), _num(d)])
    return fh.getvalue()


def cmd_probe(cfg: RunConfig):
    s1, s2 = (_read_problem(p) for p in cfg.inputs[:2])
    if s1.kind != s2.kind:
        raise ConfigurationError(f"problem kinds differ: {s1.kind} vs {s2.kind}")
    report, t1, t2 = probe.probe_agreement(s1, s2, cfg.ray, floor=cfg.floor, rtol=cfg.tol_ode, jobs=cfg.jobs)
    doc = report.to_dict()
    doc["kind"] = s1.kind
    _emit(dumps(doc) + "\n", cfg.out)
    diff = _diff_csv(t1, probe.delta_m_trace(t1, t2))
    if cfg.out is not None:
        Path(cfg.out).with_suffix(".diff.csv").write_text(diff)


def _scalar_half_line(spec, path):
    if spec.kind != "half_line":
        raise ConfigurationError(f"{path}: replay and kernels need a scalar half-line problem, got {spec.kind}")
    return spec.potential


def _kernel_h(cfg, a):
    h = cfg.kernel_h if cfg.kernel_h is not None else a / DEFAULT_KERNEL_CELLS
    kernels.kernel_cells(a, h)
    return h


def cmd_replay(cfg: RunConfig, zs, refine=True):
    q1 = _scalar_half_line(_read_problem(cfg.inputs[0]), cfg.inputs[0])
    q2 = _scalar_half_line(_read_problem(cfg.inputs[1]), cfg.inputs[1])
    a = max(q1.support_sup, q2.support_sup)
    if a <= 0:
        raise ConfigurationError("both potentials vanish; nothing to replay")
    h = _kernel_h(cfg, a)
    rows = []
    for z in zs:
        lhs, rhs, res = kernels.wronskian_identity_check(q1, q2, z, a, cfg.tol_ode)
        row = {
            "z": _complex(z),
            "wronskian_lhs": _complex(lhs),
            "wronskian_rhs": _complex(rhs),
            "wronskian_residual": res,
            "product_residual": kernels.product_identity_residual(q1, q2, z, h, a, cfg.tol_ode),
        }
        if refine:
            fine = kernels.product_identity_residual(q1, q2, z, h / 2, a, cfg.tol_ode)
            row["product_residual_half_h"] = fine
            row["refinement_ratio"] = row["product_residual"] / fine if fine > 0 else None
        rows.append(row)
    pipe = kernels.volterra_pipeline(q1, q2, h, a)
    doc = {"a": a, "h": h, "points": rows, "volterra": pipe}
    _emit(dumps(doc) + "\n", cfg.out)


def cmd_kernel(cfg: RunConfig, extended=False):
    q = _scalar_half_line(_read_problem(cfg.inputs[0]), cfg.inputs[0])
    if q.support_sup <= 0:
        raise ConfigurationError("the potential vanishes; the kernel is identically zero")
    K = kernels.transformation_kernel(q, _kernel_h(cfg, q.support_sup))
    _emit(kernels.kernel_to_csv(K, extended=extended), cfg.out)


def _read_jacobi(path):
    return jacobi.JacobiOperator.from_dict(_read_json(path))


def cmd_jacobi_order(cfg: RunConfig, k_max):
    J1, J2 = (_read_jacobi(p) for p in cfg.inputs[:2])
    rep = jacobi.verify_order_equivalence(J1, J2, k_max)
    predicted = None
    if not rep.order.at_least and rep.order.n >= 3:
        d = jacobi.agreement_depth(rep.order.n)
        predicted = {"a_max": d.a_max, "b_max": d.b_max}
    doc = {
        "N": rep.order.n,
        "at_least": rep.order.at_least,
        "predicted_depth": predicted,
        "actual_depth": {"a_max": rep.depth.a_max, "b_max": rep.depth.b_max},
        "violations": list(rep.violations),
    }
    _emit(dumps(doc) + "\n", cfg.out)


def cmd_jacobi_reconstruct(cfg: RunConfig, n=None):
    doc = _read_json(cfg.inputs[0])
    if isinstance(doc, dict) and "b" in doc:
        # round trip: operator -> spectral measure -> operator
        J = jacobi.JacobiOperator.from_dict(doc).to_float()
        n = J.n if n is None else n
        Jr, _ = jacobi.reconstruct(jacobi.DiscreteMeasure.of(J), n)
        if n != J.n:
            raise ConfigurationError("a round trip needs n equal to the operator size")
        out = {"jacobi": Jr.to_dict(), "coefficient_error": jacobi.coefficient_error(J, Jr)}
    else:
        mu = jacobi.DiscreteMeasure.from_dict(doc)
        n = len(mu.points) if n is None else n
        Jr, _ = jacobi.reconstruct(mu, n)
        out = {"jacobi": Jr.to_dict()}
    _emit(dumps(out) + "\n", cfg.out)


def cmd_jacobi_m(cfg: RunConfig, zs):
    J = _read_jacobi(cfg.inputs[0])
    fh = io.StringIO()
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["re_z", "im_z", "re_m", "im_m"])
    for z in zs:
        m = complex(jacobi.jacobi_m(J, z))
        w.writerow([_num(z.real), _num(z.imag), _num(m.real), _num(m.imag)])
    _emit(fh.getvalue(), cfg.out)


# ---------------------------------------------------------------------------
# argument handling


def _z_list(text):
    out = []
    for part in text.split(","):
        part = part.strip().replace(" ", "")
        if not part:
            continue
        try:
            out.append(complex(part.replace("i", "j")))
        except ValueError:
            raise ConfigurationError(f"bad spectral point {part!r}") from None
    if not out:
        raise ConfigurationError("empty list of spectral points")
    return out


def _common(p, ray=True, kernel=False):
    if ray:
        p.add_argument("--ray", help="neg,rmin=,rmax=,n=  or  eps=<rad>,rmin=,rmax=,n=")
    p.add_argument("--tol-ode", type=float, help="relative ODE tolerance")
    if kernel:
        p.add_argument("--kernel-h", type=float, help="kernel grid step (default a/400)")
    p.add_argument("--floor", type=float, help="fit floor for |m1 - m2|")
    p.add_argument("--jobs", type=int, help="worker processes for spectral points")
    p.add_argument("--out", help="output file (default stdout)")


def build_parser():
    ap = argparse.ArgumentParser(prog="mprobe", description="Local Borg-Marchenko probes for Schrodinger and Jacobi operators.")
    sub = ap.add_subparsers(dest="group", required=True)

    g = sub.add_parser("m", help="m-function traces").add_subparsers(dest="action", required=True)
    p = g.add_parser("eval", help="sample m along a ray, CSV out")
    p.add_argument("problem")
    _common(p)

    g = sub.add_parser("probe", help="agreement-length probe").add_subparsers(dest="action", required=True)
    p = g.add_parser("run", help="fit the decay of m1 - m2")
    p.add_argument("problem1")
    p.add_argument("problem2")
    _common(p)

    g = sub.add_parser("replay", help="numerical replay of the uniqueness proof").add_subparsers(dest="action", required=True)
    p = g.add_parser("borg-marchenko", help="Wronskian, product-kernel and Volterra residuals")
    p.add_argument("problem1")
    p.add_argument("problem2")
    p.add_argument("--z", default="-10,-50", help="comma-separated spectral points, e.g. -10,-50,-5+2j")
    p.add_argument("--no-refine", action="store_true", help="skip the h/2 refinement pass")
    _common(p, ray=False, kernel=True)

    g = sub.add_parser("kernel", help="transformation kernels").add_subparsers(dest="action", required=True)
    p = g.add_parser("compute", help="K(x, y) as CSV")
    p.add_argument("problem")
    p.add_argument("--extended", action="store_true", help="include the strip a < y <= 2a - x")
    _common(p, ray=False, kernel=True)

    g = sub.add_parser("jacobi", help="Jacobi operator tools").add_subparsers(dest="action", required=True)
    p = g.add_parser("order", help="decay order vs coefficient agreement")
    p.add_argument("jacobi1")
    p.add_argument("jacobi2")
    p.add_argument("--kmax", type=int, default=None, help="highest moment compared (default 2n)")
    p.add_argument("--out")
    p = g.add_parser("reconstruct", help="coefficients from a measure, or a round trip from an operator")
    p.add_argument("input")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--out")
    p = g.add_parser("m", help="m-function values, CSV out")
    p.add_argument("jacobi")
    p.add_argument("--z", required=True, help="comma-separated spectral points")
    p.add_argument("--out")
    return ap


def _env(name, cast, current):
    if current is not None:
        return current
    raw = os.environ.get(f"MPROBE_{name}")
    if raw is None or raw == "":
        return None
    try:
        return cast(raw)
    except ValueError:
        raise ConfigurationError(f"MPROBE_{name}={raw!r} is not valid") from None


def make_config(args) -> RunConfig:
    sub = f"{args.group} {args.action}"
    inputs = [getattr(args, k) for k in ("problem", "problem1", "problem2", "jacobi", "jacobi1", "jacobi2", "input") if getattr(args, k, None)]
    ray_text = _env("RAY", str, getattr(args, "ray", None))
    kw = {}
    for name, cast in (("tol_ode", float), ("kernel_h", float), ("floor", float), ("jobs", int), ("out", str)):
        v = _env(name.upper(), cast, getattr(args, name, None))
        if v is not None:
            kw[name] = v
    ray = SpectralRay.parse(ray_text) if ray_text and hasattr(args, "ray") else None
    return RunConfig(sub, inputs, ray, **kw)


def _error_doc(exc):
    doc = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ValidationError):
        doc["details"] = [{"path": p, "message": m} for p, m in exc.errors]
    return doc


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = make_config(args)
        if cfg.subcommand == "m eval":
            cmd_m_eval(cfg)
        elif cfg.subcommand == "probe run":
            cmd_probe(cfg)
        elif cfg.subcommand == "replay borg-marchenko":
            cmd_replay(cfg, _z_list(args.z), refine=not args.no_refine)
        elif cfg.subcommand == "kernel compute":
            cmd_kernel(cfg, extended=args.extended)
        elif cfg.subcommand == "jacobi order":
            J1 = _read_jacobi(cfg.inputs[0])
            cmd_jacobi_order(cfg, args.kmax if args.kmax is not None else 2 * J1.n)
        elif cfg.subcommand == "jacobi reconstruct":
            cmd_jacobi_reconstruct(cfg, args.n)
        elif cfg.subcommand == "jacobi m":
            cmd_jacobi_m(cfg, _z_list(args.z))
    except InputError as exc:
        sys.stderr.write(json.dumps(_error_doc(exc)) + "\n")
        return EXIT_INPUT
    except NumericalError as exc:
        sys.stderr.write(json.dumps(_error_doc(exc)) + "\n")
        return EXIT_NUMERICAL
    except MProbeError as exc:  # pragma: no cover - every subclass is handled above
        sys.stderr.write(json.dumps(_error_doc(exc)) + "\n")
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
