"""Command-line pipeline: field -> P -> LIC -> H -> L -> eigenpairs -> images.

Usage::

    flowembed --field center --dims 64x64 --kernel box --half-length 20 -k 6 --out out/

Every run writes ``report.txt``: a JSON object with one flat key per line
holding the resolved configuration (``config.*``), per-stage wall times,
matrix sizes, eigenvalues, residuals and the list of artifacts.  Passing that
file back through ``--config`` replays the run.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
import time
import warnings
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import _backend, field as fld, kernel as krn, matrix as mtx, render, spectral
from .errors import ConfigurationError, FlowEmbedError, StageError

log = logging.getLogger("flowembed")

STAGES = ("lic_only", "embeddings", "composite", "volume")
KERNELS = ("box", "gaussian", "forward", "backward")


class UsageError(ConfigurationError):
    """Missing, unknown or contradictory configuration keys."""


@dataclass
class PipelineConfig:
    field: str | None = None
    field_file: str | None = None
    field_args: dict = dc_field(default_factory=dict)
    dims: tuple | None = None
    spacing: tuple | None = None
    kernel: str = "gaussian"
    half_length: int = 20
    step: float | None = None
    param: str = "arc"
    deposit: str = "multilinear"
    k: int = 6
    m: int | None = None
    norm_p: float = math.inf
    seed: int = 0
    out: str = "out"
    stages: str = "composite"
    threads: int | None = None
    tol: float = 1e-8
    max_iter: int | None = None
    method: str = "lanczos"
    segments: int = 4

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["dims"] = None if self.dims is None else list(self.dims)
        d["spacing"] = None if self.spacing is None else list(self.spacing)
        d["norm_p"] = "inf" if math.isinf(self.norm_p) else self.norm_p
        return d


_KEYS = {f.name for f in dataclasses.fields(PipelineConfig)}


def _parse_tuple(text, cast, name):
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return tuple(cast(t) for t in text)
    try:
        return tuple(cast(t) for t in str(text).lower().replace(",", "x").split("x") if t)
    except ValueError:
        raise UsageError(f"cannot parse --{name.replace('_', '-')} '{text}'") from None


def _parse_value(text):
    parts = [p for p in str(text).split(",") if p]
    vals = tuple(float(p) for p in parts)
    return vals[0] if len(vals) == 1 else vals


def _norm_p(v):
    if isinstance(v, str) and v.lower() in ("inf", "infinity", "max"):
        return math.inf
    return float(v)


def _coerce(key, value):
    if value is None:
        return None
    if key == "dims":
        return _parse_tuple(value, int, key)
    if key == "spacing":
        return _parse_tuple(value, float, key)
    if key == "field_args":
        if isinstance(value, dict):
            return {str(k): (tuple(v) if isinstance(v, list) else v) for k, v in value.items()}
        out = {}
        for item in value:
            if "=" not in item:
                raise UsageError(f"--field-arg expects key=value, got '{item}'")
            k, v = item.split("=", 1)
            try:
                out[k] = _parse_value(v)
            except ValueError:
                raise UsageError(f"--field-arg {k}: '{v}' is not numeric") from None
        return out
    if key == "norm_p":
        return _norm_p(value)
    if key in ("half_length", "k", "m", "seed", "threads", "max_iter", "segments"):
        return int(value)
    if key in ("step", "tol"):
        return float(value)
    return value


def _load_config_file(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    if any(k.startswith("config.") for k in data):
        data = {k[len("config."):]: v for k, v in data.items() if k.startswith("config.")}
    data = {k.replace("-", "_"): v for k, v in data.items()}
    unknown = sorted(set(data) - _KEYS)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    return data


def build_parser():
    p = argparse.ArgumentParser(
        prog="flowembed",
        description="Flow spectral embeddings and LIC-style images from a vector field.",
        argument_default=argparse.SUPPRESS,
    )
    p.add_argument("--config", help="JSON config file or a previous report.txt")
    p.add_argument("--field", help="analytic field: " + ", ".join(sorted(fld.ANALYTIC_FIELDS)))
    p.add_argument("--field-file", help="FFLD1 grid field file")
    p.add_argument("--field-arg", dest="field_args", action="append", metavar="KEY=VALUE",
                   help="analytic field parameter, e.g. t=0.5 or value=1,0")
    p.add_argument("--dims", help="cells per axis, e.g. 64x64 or 32x32x32")
    p.add_argument("--spacing", help="cell size, one value or one per axis")
    p.add_argument("--kernel", choices=KERNELS)
    p.add_argument("--half-length", dest="half_length", type=int, metavar="L")
    p.add_argument("--step", type=float)
    p.add_argument("--param", choices=("arc", "time"))
    p.add_argument("--deposit", choices=mtx.DEPOSITIONS)
    p.add_argument("-k", dest="k", type=int, help="number of eigenpairs")
    p.add_argument("-m", dest="m", type=int, help="embeddings used in the composite")
    p.add_argument("--norm-p", dest="norm_p", help="amplitude norm order (>= 1 or inf)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--stages", choices=STAGES)
    p.add_argument("--threads", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--method", choices=spectral.METHODS)
    p.add_argument("--segments", type=int, help="thresholds for the volume segmentation")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def parse_config(argv=None, file=None):
    """Resolve a :class:`PipelineConfig` from a config file and flags.

    Flags override file values; unknown file keys and contradictory or
    missing settings raise :class:`UsageError`.
    """
    args = vars(build_parser().parse_args([] if argv is None else list(argv)))
    args.pop("verbose", None)
    cfg_file = args.pop("config", None) or file
    values = {}
    if cfg_file is not None:
        values.update(_load_config_file(cfg_file))
    values.update(args)
    values = {k: _coerce(k, v) for k, v in values.items()}
    cfg = PipelineConfig(**{k: v for k, v in values.items() if v is not None or k in
                            ("field", "field_file", "dims", "spacing", "step", "m",
                             "threads", "max_iter")})
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    problems = []
    if cfg.field is None and cfg.field_file is None:
        problems.append("one of --field or --field-file is required")
    if cfg.field is not None and cfg.field_file is not None:
        problems.append("--field and --field-file are mutually exclusive")
    if cfg.field is not None:
        if cfg.field not in fld.ANALYTIC_FIELDS:
            problems.append(f"unknown field '{cfg.field}'")
        if cfg.dims is None:
            problems.append("--dims is required for analytic fields")
    if cfg.field_file is not None and cfg.dims is not None:
        problems.append("--dims conflicts with --field-file (the file fixes the grid)")
    if cfg.dims is not None and (len(cfg.dims) not in (2, 3) or min(cfg.dims) < 1):
        problems.append(f"--dims must give 2 or 3 positive sizes, got {cfg.dims}")
    if cfg.spacing is not None and (min(cfg.spacing) <= 0 or
                                    (cfg.dims and len(cfg.spacing) not in (1, len(cfg.dims)))):
        problems.append(f"bad --spacing {cfg.spacing}")
    if cfg.kernel not in KERNELS:
        problems.append(f"unknown kernel '{cfg.kernel}'")
    if cfg.half_length < 0:
        problems.append("--half-length must be >= 0")
    if cfg.step is not None and not cfg.step > 0:
        problems.append("--step must be positive")
    if cfg.param not in ("arc", "time"):
        problems.append(f"--param must be arc or time, got '{cfg.param}'")
    if cfg.deposit not in mtx.DEPOSITIONS:
        problems.append(f"--deposit must be one of {mtx.DEPOSITIONS}")
    if cfg.k < 1:
        problems.append("-k must be >= 1")
    if cfg.m is not None and not 1 <= cfg.m <= cfg.k:
        problems.append("-m must lie in [1, k]")
    if not cfg.norm_p >= 1:
        problems.append("--norm-p must be >= 1")
    if cfg.stages not in STAGES:
        problems.append(f"--stages must be one of {STAGES}")
    if cfg.method not in spectral.METHODS:
        problems.append(f"--method must be one of {spectral.METHODS}")
    if problems:
        raise UsageError("invalid configuration: " + "; ".join(problems))


def build_field(cfg):
    if cfg.field_file is not None:
        return fld.load_grid_field(cfg.field_file)
    domain = fld.default_domain(cfg.field, cfg.dims, cfg.spacing)
    return fld.make_analytic(cfg.field, cfg.field_args, domain)


class _Run:
    """Mutable bookkeeping for one pipeline execution."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.report = {f"config.{k}": v for k, v in cfg.to_dict().items()}
        self.report["backend"] = _backend.NAME
        self.artifacts = []
        self.timings = {}

    def stage(self, name, fn, *args, **kwargs):
        t0 = time.perf_counter()
        log.info("stage %s ...", name)
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                result = fn(*args, **kwargs)
        except FlowEmbedError as exc:
            raise StageError(name, exc) from exc
        for w in caught:
            log.info("stage %s: %s", name, w.message)
        dt = time.perf_counter() - t0
        self.timings[name] = dt
        self.report[f"time.{name}"] = round(dt, 6)
        log.info("stage %s done in %.3f s", name, dt)
        return result

    def artifact(self, path):
        self.artifacts.append(Path(path).name)

    def write_report(self):
        self.report["artifacts"] = self.artifacts
        self.out.mkdir(parents=True, exist_ok=True)
        lines = [f"{json.dumps(k)}: {json.dumps(v, default=_json_default)}"
                 for k, v in self.report.items()]
        (self.out / "report.txt").write_text("{\n" + ",\n".join(lines) + "\n}\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _scalar_image(vec, domain):
    return render.RenderImage(render.rescale(vec).reshape(domain.shape))


def run_pipeline(cfg):
    """Execute the whole pipeline and write its artifacts to ``cfg.out``.

    Returns the report dictionary.  A failing stage raises :class:`StageError`
    after the report (with the artifacts written so far) has been saved.
    """
    run = _Run(cfg)
    run.out.mkdir(parents=True, exist_ok=True)
    try:
        _execute(run)
        run.report["status"] = "ok"
    except StageError as exc:
        run.report["status"] = "failed"
        run.report["failed_stage"] = exc.stage
        run.report["error"] = str(exc.cause)
        raise
    finally:
        run.write_report()
    return run.report


def _execute(run):
    cfg = run.cfg
    threads = cfg.threads if cfg.threads is not None else _backend.default_threads()
    run.report["threads"] = threads
    field = run.stage("field", build_field, cfg)
    domain = field.domain
    three_d = domain.ndim == 3
    run.report["cells"] = domain.ncells
    run.report["domain.dims"] = list(domain.dims)
    run.report["domain.origin"] = list(domain.origin)
    run.report["domain.spacing"] = list(domain.spacing)

    kern = krn.make_kernel(cfg.kernel, cfg.half_length)
    acfg = mtx.AssemblyConfig(
        kernel=kern, step=cfg.step, mode="time" if cfg.param == "time" else "arc_length",
        deposition=cfg.deposit, threads=threads,
    )
    P = run.stage("assemble", mtx.assemble_probability_matrix, field, domain, acfg)
    run.report["P.nnz"] = P.nnz
    P = run.stage("normalize_rows", mtx.normalize_rows, P)

    noise = render.binary_noise(domain, cfg.seed)
    lic = run.stage("lic", render.lic_image, P, noise, threads)
    equalized = render.histogram_equalize(lic)
    if three_d:
        for path in render.export_volume(lic.samples, run.out / "lic.vol"):
            run.artifact(path)
    else:
        run.artifact(render.export_image(lic, run.out / "lic.pgm"))
        run.artifact(render.export_image(equalized, run.out / "lic_equalized.pgm"))
    run.report["lic.mean"] = float(lic.samples.mean())
    if cfg.stages == "lic_only":
        return

    P = run.stage("normalize_cols", mtx.normalize_cols, P)
    H = run.stage("mixture", mtx.mixture_matrix, P, threads)
    run.report["H.nnz"] = H.nnz
    run.report["H.max_row_nnz"] = int(H.row_nnz().max()) if H.nrows else 0
    del P
    L = run.stage("laplacian", mtx.laplacian, H)
    del H
    run.report["L.nnz"] = L.nnz
    k = min(cfg.k, domain.ncells)
    emb = run.stage(
        "eigen", spectral.smallest_eigenpairs, L, k, tol=cfg.tol, max_iter=cfg.max_iter,
        seed=cfg.seed, p=cfg.norm_p, domain=domain, method=cfg.method, threads=threads,
    )
    run.report["eigenvalues"] = [float(v) for v in emb.values]
    run.report["residuals"] = [float(r) for r in emb.residuals]
    run.report["amplitudes"] = [float(a) for a in emb.amplitudes]
    run.report["eigen.stats"] = emb.stats
    run.report["warnings"] = list(emb.warnings)
    spectral.save_embeddings(emb, run.out / "embeddings.emb")
    run.artifact(run.out / "embeddings.emb")
    for i, pr in enumerate(emb.pairs):
        if three_d:
            for path in render.export_volume(pr.vector.reshape(domain.shape),
                                             run.out / f"embedding_{i:02d}.vol"):
                run.artifact(path)
        else:
            img = render.RenderImage(render.viridis(render.rescale(pr.vector))
                                     .reshape(domain.shape + (3,)), rgb=True)
            run.artifact(render.export_image(img, run.out / f"embedding_{i:02d}.ppm"))
    if cfg.stages == "embeddings" or len(emb) < 2:
        return

    m = cfg.m if cfg.m is not None else len(emb) - 1
    chosen = run.stage("select", spectral.select_eigenvectors, emb, m, cfg.norm_p)
    run.report["selected"] = [s.index for s in chosen]
    tf = render.TransferFunction(tuple(s.amplitude for s in chosen))
    comp = run.stage("composite", render.composite_transfer, chosen, tf, domain.shape)
    if three_d:
        for path in render.export_volume(comp, run.out / "composite.vol"):
            run.artifact(path)
    else:
        run.artifact(render.export_image(comp, run.out / "composite.ppm"))
        run.artifact(render.export_image(render.modulate(comp, lic), run.out / "composite_lic.ppm"))
    if cfg.stages == "composite":
        return

    coef = tf.coefficients()
    scalar = sum(c * s.vector for c, s in zip(coef, chosen))
    labels = run.stage("segment", render.segment_by_gaps, scalar, cfg.segments)
    shown = labels.reshape(domain.shape) / max(int(labels.max()), 1)
    if three_d:
        for path in render.export_volume(shown, run.out / "segments.vol"):
            run.artifact(path)
    else:
        run.artifact(render.export_image(render.RenderImage(shown), run.out / "segments.pgm"))


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    verbose = sum(a.count("v") for a in argv if a.startswith("-v") or a == "--verbose")
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        cfg = parse_config(argv)
    except UsageError as exc:
        print(f"flowembed: {exc}", file=sys.stderr)
        return 2
    try:
        report = run_pipeline(cfg)
    except StageError as exc:
        print(f"flowembed: {exc}", file=sys.stderr)
        return 1
    for w in report.get("warnings", []):
        print(f"flowembed: warning: {w}", file=sys.stderr)
    print(f"wrote {len(report['artifacts'])} artifacts and report.txt to {cfg.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
