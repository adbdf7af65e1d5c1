"""End-to-end orchestration behind the CLI verbs.

Each ``cmd_*`` function takes a :class:`~cfmsr.config.RunConfig` plus paths,
writes its artifacts into an output directory guarded by a lockfile and
returns the in-memory results so tests can inspect them without re-reading
files.
"""
from __future__ import annotations

import contextlib
import csv
import dataclasses
import json
import logging
import os
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .baselines import DiffusionSchedule, ddim_sample, regression_predict
from .checkpoint import load_checkpoint, save_checkpoint
from .codec import PatchCodec, upsample_latent
from .config import ConfigError, DataSpec, RunConfig
from .datasets import gen_2d_toy, gen_bimodal, gen_texture
from .metrics import FFD_MIN_SAMPLES, MetricReport, evaluate
from .nets import FieldNet, build_net, config_dict
from .optim import AdamState
from .paths import PathConfig, noise_augment
from .solvers import FIXED_STAGES, SolverConfig, SolverRun, integrate
from .tensor_core import NumericError, RngStream, ShapeError, gaussian, load_tensor, save_tensor, stream_id
from .training import TrainData, train

log = logging.getLogger("cfmsr")

FIELD_KINDS = ("cfm", "fm_naive")
EPS_KINDS = ("dm_upsampler", "ddpm_prior")
REG_KINDS = ("reg_l1", "reg_l2")
INFER_CHUNK = 16


class LockError(RuntimeError):
    pass


class PipelineError(ConfigError):
    """Checkpoints that cannot be chained."""


# ---------------------------------------------------------------------------
# output directories

def prepare_out(out, force: bool = False) -> Path:
    out = Path(out)
    if out.exists() and any(out.iterdir()) and not force:
        raise ConfigError(f"output directory {out} is not empty (use --force)")
    out.mkdir(parents=True, exist_ok=True)
    return out


@contextlib.contextmanager
def output_lock(out):
    lock = Path(out) / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as e:
        raise LockError(f"{out} is locked by another writer ({lock})") from e
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield Path(out)
    finally:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(lock)


# ---------------------------------------------------------------------------
# datasets

@dataclass
class Split:
    """Stacked pairs. For images ``high``/``low`` are (N, c, H, W); for the toy
    they hold ``x1``/``x0`` as (N, 2)."""

    high: np.ndarray
    low: np.ndarray
    rows: list = field(default_factory=list)


def test_seed(seed: int) -> int:
    return stream_id("test-split", seed)


def _split(spec: DataSpec, seed: int, n: int) -> Split:
    if spec.kind == "toy2d":
        x0, x1 = gen_2d_toy(seed, n, dtype=np.float32)
        rows = [{"seed": seed, "index": i, "row": i} for i in range(n)]
        return Split(high=x1, low=x0, rows=rows)
    if spec.kind == "texture":
        samples = gen_texture(seed, n, spec.H, spec.f, spec.channels)
    else:
        samples = gen_bimodal(seed, n, spec.H, spec.f, channels=spec.channels)
    rows = []
    for i, s in enumerate(samples):
        r = {"seed": seed, "index": s.index, "row": i}
        if hasattr(s, "mode"):
            r["mode"] = s.mode
        rows.append(r)
    return Split(high=np.stack([s.high for s in samples]), low=np.stack([s.low for s in samples]), rows=rows)


def make_dataset(spec: DataSpec, seed: int) -> dict:
    out = {"train": _split(spec, seed, spec.n)}
    if spec.n_test:
        out["test"] = _split(spec, test_seed(seed), spec.n_test)
    return out


def write_dataset(ds: dict, spec: DataSpec, out: Path) -> None:
    for name, sp in ds.items():
        hi, lo = f"{name}_high.fmt", f"{name}_low.fmt"
        save_tensor(sp.high, out / hi)
        save_tensor(sp.low, out / lo)
        with open(out / f"{name}.jsonl", "w", encoding="utf-8") as fh:
            for r in sp.rows:
                fh.write(json.dumps({**r, "kind": spec.kind, "high": hi, "low": lo}, sort_keys=True) + "\n")
    with open(out / "dataset.json", "w", encoding="utf-8") as fh:
        json.dump(dataclasses.asdict(spec), fh, sort_keys=True, indent=1)


def load_dataset(path) -> tuple[DataSpec, dict]:
    path = Path(path)
    try:
        with open(path / "dataset.json", encoding="utf-8") as fh:
            spec = DataSpec(**json.load(fh))
    except OSError as e:
        raise ConfigError(f"no dataset at {path}: {e}") from e
    ds = {}
    for name in ("train", "test"):
        man = path / f"{name}.jsonl"
        if not man.exists():
            continue
        with open(man, encoding="utf-8") as fh:
            rows = [json.loads(line) for line in fh if line.strip()]
        if not rows:
            continue
        high, low = load_tensor(path / rows[0]["high"]), load_tensor(path / rows[0]["low"])
        idx = [r["row"] for r in rows]
        ds[name] = Split(high=high[idx], low=low[idx], rows=rows)
    return spec, ds


def cmd_gen_data(cfg: RunConfig, out, force: bool = False) -> dict:
    out = prepare_out(out, force)
    with output_lock(out):
        ds = make_dataset(cfg.data, cfg.data_seed)
        write_dataset(ds, dataclasses.replace(cfg.data, seed=cfg.data_seed), out)
    log.info("wrote dataset to %s (%s)", out, {k: len(v.high) for k, v in ds.items()})
    return ds


# ---------------------------------------------------------------------------
# latents and models

def make_codec(spec: DataSpec, seed: int) -> PatchCodec:
    return PatchCodec(patch=2, channels=spec.channels, seed=seed)


@dataclass
class Latents:
    x1: np.ndarray      # high latents (targets)
    x0: np.ndarray      # upsampled low latents (source and conditioning)
    low: np.ndarray     # low latents (prior targets)


def encode_split(split: Split, spec: DataSpec, codec: PatchCodec | None, method: str) -> Latents:
    if spec.kind == "toy2d":
        return Latents(x1=split.high, x0=split.low, low=split.low)
    lo = codec.encode(split.low)
    return Latents(x1=codec.encode(split.high), x0=upsample_latent(lo, spec.f, method, codec), low=lo)


def build_model(cfg: RunConfig, kind: str, channels: int) -> FieldNet:
    cond = 0 if kind == "ddpm_prior" else channels
    if cfg.model.net == "mlp":
        return build_net("mlp", {**config_dict_of(cfg.mlp), "dim": channels, "cond_dim": cond})
    return build_net("unet", {**config_dict_of(cfg.arch), "in_channels": channels, "cond_channels": cond})


def config_dict_of(obj) -> dict:
    return dataclasses.asdict(obj)


def _train_arrays(kind: str, lat: Latents) -> TrainData:
    if kind == "ddpm_prior":
        return TrainData(x1=lat.low)
    return TrainData(x1=lat.x1, x0=lat.x0)


def _meta(cfg: RunConfig, kind: str, data: TrainData) -> dict:
    return {
        "data_kind": cfg.data.kind,
        "latent_shape": list(data.x1.shape[1:]),
        "factor": cfg.data.f,
        "codec_seed": cfg.eval.codec_seed,
        "path": dataclasses.asdict(cfg.path),
        "train": dataclasses.asdict(cfg.train_config()),
        "model_kind": kind,
    }


def train_model(cfg: RunConfig, lat: Latents, kind: str | None = None, ckpt: Path | None = None,
                resume: bool = False, loss_csv: Path | None = None):
    """Build and train one model; returns ``(net, history)``.

    With ``ckpt`` set, the checkpoint is written every ``train.ckpt_every``
    steps and at the end. On a non-finite loss the last good parameters are
    saved before the error propagates.
    """
    kind = kind or cfg.model.kind
    data = _train_arrays(kind, lat)
    tcfg = cfg.train_config()
    meta = _meta(cfg, kind, data)
    start, adam = 0, None
    if resume:
        if ckpt is None or not Path(ckpt).exists():
            raise ConfigError("resume requested but no checkpoint found")
        net, adam, header = load_checkpoint(ckpt)
        start = int(header["step"])
        if header["model_kind"] != kind:
            raise ConfigError(f"checkpoint holds a {header['model_kind']} model, not {kind}")
    else:
        net = build_model(cfg, kind, data.x1.shape[1])
        adam = AdamState.for_params(net.params, lr=tcfg.lr)
    done = {"step": start}

    def save(step):
        if ckpt is not None:
            save_checkpoint(ckpt, net, model_kind=kind, step=step, adam=adam, meta=meta)

    def callback(step, _net, _adam):
        done["step"] = step + 1
        if tcfg.ckpt_every and (step + 1) % tcfg.ckpt_every == 0:
            save(step + 1)

    history = []
    try:
        _, history = train(net, kind, data, tcfg, path=cfg.path, adam=adam, start_step=start, callback=callback)
    except NumericError:
        log.error("non-finite loss after %d steps; keeping last good parameters", done["step"])
        save(done["step"])
        raise
    finally:
        if loss_csv is not None:
            write_loss_csv(loss_csv, history, append=resume)
    save(done["step"])
    return net, history


def write_loss_csv(path, history, append: bool = False):
    new = not (append and Path(path).exists())
    with open(path, "a" if not new else "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        if new:
            wr.writerow(["step", "loss", "wall_time"])
        for step, loss, wall in history:
            wr.writerow([step, repr(float(loss)), f"{wall:.6f}"])


def read_loss_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return [(int(r["step"]), float(r["loss"]), float(r["wall_time"])) for r in csv.DictReader(fh)]


def cmd_train(cfg: RunConfig, data_dir, out, force: bool = False, resume: bool = False):
    spec, ds = load_dataset(data_dir)
    cfg = cfg.replace(data=spec)
    out = Path(out) if resume else prepare_out(out, force)
    with output_lock(out):
        codec = None if spec.kind == "toy2d" else make_codec(spec, cfg.eval.codec_seed)
        lat = encode_split(ds["train"], spec, codec, cfg.path.upsample)
        return train_model(cfg, lat, ckpt=out / "model.ckpt", resume=resume, loss_csv=out / "loss.csv")


# ---------------------------------------------------------------------------
# inference

@dataclass
class InferResult:
    final: np.ndarray
    start: np.ndarray | None
    nfe: int
    wall: float
    run: SolverRun | None = None


def _chunked(fn, n: int, chunk: int = INFER_CHUNK):
    """Evaluate ``fn(t, x, z)`` over batch chunks; per-sample t is split alongside."""

    def call(t, x, z):
        if len(x) <= chunk:
            return fn(t, x, z)
        t = np.asarray(t)
        outs = []
        for s in range(0, len(x), chunk):
            ts = t[s:s + chunk] if t.ndim else t
            outs.append(fn(ts, x[s:s + chunk], None if z is None else z[s:s + chunk]))
        return np.concatenate(outs)

    return call


def infer(net: FieldNet, kind: str, z, path: PathConfig, solver: SolverConfig, rng: RngStream,
          ddim_steps: int = 4, clip_x0: float | None = 2.0, shape=None) -> InferResult:
    """Map conditioning latents ``z`` (the upsampled lows) to predicted high latents."""
    t0 = time.perf_counter()
    n = len(z) if z is not None else shape[0]
    if kind in FIELD_KINDS:
        z = np.asarray(z, net.dtype)
        if kind == "cfm":
            start = noise_augment(z, path.aug(), rng.child("aug"))
        else:
            start = gaussian(z.shape, rng.child("noise"), dtype=z.dtype)
        field_fn = _chunked(lambda t, x, zz: net.forward(t, x, zz, record=False), n)
        run = integrate(field_fn, start, z, solver)
        return InferResult(run.final, start, run.nfe, time.perf_counter() - t0, run)
    if kind in EPS_KINDS:
        sched = DiffusionSchedule(path.T, path.s)
        eps_fn = _chunked(lambda t, x, zz: net.forward(np.asarray(t) / sched.T, x, zz, record=False), n)
        shp = np.shape(z) if z is not None else tuple(shape)
        x_T = gaussian(shp, rng.child("x_T"), dtype=net.dtype)
        out, nfe = ddim_sample(eps_fn, None if kind == "ddpm_prior" else z, sched, ddim_steps,
                               x_T=x_T, clip_x0=clip_x0)
        return InferResult(out, x_T, nfe, time.perf_counter() - t0)
    if kind in REG_KINDS:
        z = np.asarray(z, net.dtype)
        out = np.concatenate([regression_predict(net, z[s:s + INFER_CHUNK]) for s in range(0, n, INFER_CHUNK)])
        return InferResult(out, None, 1, time.perf_counter() - t0)
    raise ValueError(f"unknown model kind {kind!r}")


def to_images(latents, codec: PatchCodec) -> np.ndarray:
    return np.clip(codec.decode(latents), 0.0, 1.0)


# ---------------------------------------------------------------------------
# evaluation

def evaluate_model(cfg: RunConfig, net: FieldNet, kind: str, test: Split, spec: DataSpec,
                   solver: SolverConfig | None = None, rng: RngStream | None = None):
    """Returns ``(report, predictions, InferResult)``; predictions are images (points for the toy)."""
    solver = solver or cfg.solver
    rng = rng or RngStream(cfg.seed, stream_id("eval"))
    codec = None if spec.kind == "toy2d" else make_codec(spec, cfg.eval.codec_seed)
    lat = encode_split(test, spec, codec, cfg.path.upsample)
    res = infer(net, kind, lat.x0, cfg.path, solver, rng, cfg.eval.ddim_steps, cfg.eval.clip_x0)
    if spec.kind == "toy2d":
        rep = MetricReport()
        mse = float(np.mean((res.final.astype(np.float64) - test.high) ** 2))
        rep.add("endpoint_mse", mse, kind, "truth", len(test.high), cfg.seed)
        return rep, res.final, res
    pred = to_images(res.final, codec)
    return _image_report(cfg, pred, test.high, kind), pred, res


def _image_report(cfg, pred, truth, name):
    if len(pred) < FFD_MIN_SAMPLES and any(m in cfg.eval.metrics for m in ("ffd", "pffd")):
        warnings.warn(f"FFD on {len(pred)} < {FFD_MIN_SAMPLES} samples relies on covariance shrinkage",
                      RuntimeWarning, stacklevel=3)
    return evaluate(pred, truth, seed=cfg.seed, set_a=name, set_b="truth", metrics=cfg.eval.metrics,
                    patch=cfg.eval.patch, patches_per_image=cfg.eval.patches_per_image)


def cmd_eval(cfg: RunConfig, data_dir, ckpt, out, force: bool = False) -> MetricReport:
    spec, ds = load_dataset(data_dir)
    if "test" not in ds:
        raise ConfigError("dataset has no test split")
    cfg = cfg.replace(data=spec)
    out = prepare_out(out, force)
    with output_lock(out):
        if cfg.eval.source == "truth":
            rep = _image_report(cfg, ds["test"].high, ds["test"].high, "truth")
        else:
            net, _, header = load_checkpoint(ckpt)
            cfg = cfg.replace(path=PathConfig(**header["meta"]["path"]))
            rep, _, res = evaluate_model(cfg, net, header["model_kind"], ds["test"], spec)
            log.info("eval nfe=%d wall=%.3fs", res.nfe, res.wall)
        rep.write_csv(out / "metrics.csv")
    return rep


# ---------------------------------------------------------------------------
# two-stage sampling

@dataclass
class PipelineSpec:
    prior: str
    upsampler: str
    codec_seed: int = 1234
    solver: SolverConfig = field(default_factory=SolverConfig)
    n: int = 8
    seed: int = 0
    prior_steps: int = 50
    clip_x0: float | None = 2.0

    @classmethod
    def from_config(cls, cfg: RunConfig, prior=None, upsampler=None, times=None) -> "PipelineSpec":
        solver = cfg.solver
        if times is not None:
            solver = dataclasses.replace(solver, record_times=tuple(times))
        return cls(prior=prior or cfg.sample.prior, upsampler=upsampler or cfg.sample.upsampler,
                   codec_seed=cfg.eval.codec_seed, solver=solver, n=cfg.sample.n, seed=cfg.seed,
                   prior_steps=cfg.sample.prior_steps, clip_x0=cfg.eval.clip_x0)


@dataclass
class PipelineResult:
    low: np.ndarray
    start: np.ndarray
    final: np.ndarray
    images: np.ndarray
    run: SolverRun | None
    nfe: int
    prior_nfe: int
    wall: float
    codec: PatchCodec


def _check_chain(ph: dict, uh: dict):
    if ph["model_kind"] != "ddpm_prior":
        raise PipelineError(f"prior checkpoint holds a {ph['model_kind']} model")
    if uh["model_kind"] not in FIELD_KINDS + ("dm_upsampler",) + REG_KINDS:
        raise PipelineError(f"upsampler checkpoint holds a {uh['model_kind']} model")
    pc, ph_, pw = ph["meta"]["latent_shape"]
    uc, uh_, uw = uh["meta"]["latent_shape"]
    f = uh["meta"]["factor"]
    if pc != uc or ph_ * f != uh_ or pw * f != uw:
        raise PipelineError(f"prior latents {[pc, ph_, pw]} x factor {f} do not chain into "
                            f"upsampler latents {[uc, uh_, uw]}")


def run_pipeline(spec: PipelineSpec) -> PipelineResult:
    """Prior DDIM -> upsample (PSU by default) -> noise-augment -> ODE -> decode."""
    try:
        prior, _, ph = load_checkpoint(spec.prior)
        up, _, uh = load_checkpoint(spec.upsampler)
    except OSError as e:
        raise ConfigError(f"cannot load checkpoint: {e}") from e
    _check_chain(ph, uh)
    path = PathConfig(**uh["meta"]["path"])
    f = uh["meta"]["factor"]
    pc, phh, pww = ph["meta"]["latent_shape"]
    codec = PatchCodec(patch=2, channels=pc // 4, seed=spec.codec_seed)
    rng = RngStream(spec.seed, stream_id("pipeline"))
    t0 = time.perf_counter()
    low = infer(prior, "ddpm_prior", None, path, spec.solver, rng.child("prior"),
                ddim_steps=spec.prior_steps, clip_x0=spec.clip_x0, shape=(spec.n, pc, phh, pww))
    z = upsample_latent(low.final, f, path.upsample, codec)
    res = infer(up, uh["model_kind"], z, path, spec.solver, rng.child("upsampler"),
                ddim_steps=spec.prior_steps, clip_x0=spec.clip_x0)
    wall = time.perf_counter() - t0
    start = res.start if res.start is not None else z
    return PipelineResult(low=low.final, start=start, final=res.final, images=to_images(res.final, codec),
                          run=res.run, nfe=res.nfe, prior_nfe=low.nfe, wall=wall, codec=codec)


def _to_u8(img) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_png(path, img) -> None:
    """``(H, W)``, ``(1, H, W)`` or ``(3, H, W)`` floats -> 8-bit PNG."""
    img = np.asarray(img)
    if img.ndim == 3:
        img = img[0] if img.shape[0] == 1 else img.transpose(1, 2, 0)
    Image.fromarray(_to_u8(img)).save(path)


def tile(images, cols: int) -> np.ndarray:
    """Grid of ``(N, C, H, W)`` images with a 1-pixel white gutter."""
    n, c, h, w = images.shape
    rows = -(-n // cols)
    grid = np.ones((c, rows * (h + 1) - 1, cols * (w + 1) - 1), dtype=np.float64)
    for i, im in enumerate(images):
        r, k = divmod(i, cols)
        grid[:, r * (h + 1):r * (h + 1) + h, k * (w + 1):k * (w + 1) + w] = im
    return grid


def cmd_sample(cfg: RunConfig, out, prior=None, upsampler=None, force: bool = False) -> PipelineResult:
    spec = PipelineSpec.from_config(cfg, prior, upsampler)
    out = prepare_out(out, force)
    with output_lock(out):
        res = run_pipeline(spec)
        save_tensor(res.low, out / "low_latents.fmt")
        save_tensor(res.final, out / "latents.fmt")
        save_png(out / "grid.png", tile(res.images, min(8, spec.n)))
        with open(out / "sample_log.json", "w", encoding="utf-8") as fh:
            json.dump({"n": spec.n, "nfe": res.nfe, "prior_nfe": res.prior_nfe,
                       "wall_seconds": res.wall, "solver": dataclasses.asdict(spec.solver)}, fh, indent=1)
    log.info("sampled %d images: nfe=%d prior_nfe=%d wall=%.2fs", spec.n, res.nfe, res.prior_nfe, res.wall)
    return res


def trajectory_panels(res: PipelineResult, times) -> np.ndarray:
    """``(N, len(times), C, H, W)`` decoded solver snapshots."""
    if res.run is None:
        raise ConfigError("trajectories need an ODE upsampler (cfm or fm_naive)")
    return np.stack([to_images(res.run.snapshot(float(t)), res.codec) for t in times], axis=1)


def cmd_trajectory(cfg: RunConfig, out, prior=None, upsampler=None, times=None, force: bool = False):
    times = tuple(float(t) for t in (times if times is not None else cfg.sample.times))
    if not times or any(t < 0.0 or t > 1.0 for t in times):
        raise ConfigError(f"trajectory times must lie in [0, 1], got {times}")
    spec = PipelineSpec.from_config(cfg, prior, upsampler, times=times)
    out = prepare_out(out, force)
    with output_lock(out):
        res = run_pipeline(spec)
        panels = trajectory_panels(res, times)
        save_tensor(panels, out / "trajectory.fmt")
        for i, strip in enumerate(panels):
            save_png(out / f"trajectory_{i:03d}.png", tile(strip, len(times)))
    return res, panels


# ---------------------------------------------------------------------------
# ablations

def _solver_for_nfe(solver: SolverConfig, nfe: int) -> SolverConfig:
    method = solver.method if solver.method in FIXED_STAGES else "euler"
    stages = FIXED_STAGES[method]
    if nfe % stages:
        raise ConfigError(f"NFE {nfe} is not a multiple of the {stages} stages of {method}")
    return dataclasses.replace(solver, method=method, steps=nfe // stages)


def ablate(cfg: RunConfig, axis: str, values, ds: dict, net: FieldNet | None = None, progress=None) -> list:
    """One row per axis value: ``{"axis", "value", "nfe", <metric>: value}``.

    ``t_aug`` and ``upsample_method`` retrain a model per value; ``nfe``
    reuses ``net`` when given, otherwise trains one model.
    """
    values = list(values)
    if not values:
        raise ConfigError("ablation axis has no values")
    spec = cfg.data
    kind = cfg.model.kind
    codec = None if spec.kind == "toy2d" else make_codec(spec, cfg.eval.codec_seed)
    rows = []
    for v in values:
        run_cfg, solver = cfg, cfg.solver
        if axis == "t_aug":
            run_cfg = cfg.replace(path={"t_aug": int(v)})
        elif axis == "upsample_method":
            run_cfg = cfg.replace(path={"upsample": str(v)})
        elif axis == "nfe":
            solver = _solver_for_nfe(cfg.solver, int(v))
        else:
            raise ConfigError(f"unknown ablation axis {axis!r}")
        model = net
        if model is None or axis != "nfe":
            lat = encode_split(ds["train"], spec, codec, run_cfg.path.upsample)
            model, _ = train_model(run_cfg, lat, kind)
            if axis == "nfe":
                net = model
        rep, _, res = evaluate_model(run_cfg, model, kind, ds["test"], spec, solver=solver)
        row = {"axis": axis, "value": v, "nfe": res.nfe}
        row.update({r.metric: r.value for r in rep.rows})
        rows.append(row)
        if progress:
            progress(row)
    return rows


def write_rows_csv(path, rows) -> None:
    cols = list(rows[0])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.DictWriter(fh, fieldnames=cols)
        wr.writeheader()
        for r in rows:
            wr.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def cmd_ablate(cfg: RunConfig, data_dir, out, axis=None, values=None, ckpt=None, force: bool = False) -> list:
    spec, ds = load_dataset(data_dir)
    if "test" not in ds:
        raise ConfigError("dataset has no test split")
    cfg = cfg.replace(data=spec)
    axis = axis or cfg.ablate.axis
    values = cfg.ablate.values if values is None else values
    if axis not in ("t_aug", "nfe", "upsample_method"):
        raise ConfigError(f"unknown ablation axis {axis!r}")
    out = prepare_out(out, force)
    with output_lock(out):
        net = None
        if ckpt:
            net, _, header = load_checkpoint(ckpt)
            cfg = cfg.replace(path=PathConfig(**header["meta"]["path"]),
                              model={"kind": header["model_kind"]})
        rows = ablate(cfg, axis, values, ds, net=net,
                      progress=lambda r: log.info("ablate %s=%s: %s", axis, r["value"], r))
        write_rows_csv(out / f"ablate_{axis}.csv", rows)
    return rows
