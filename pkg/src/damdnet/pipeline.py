"""End-to-end training and inference glue used by the CLI and tests."""

import math
import os
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .augment import sample_from_record
from .dataset import read_dataset
from .errors import DataError, NumericError
from .losses import CombinedLossConfig, WingConfig, combined, wpdc_weights_from_std
from .morphable import POSE_DIM, MorphableModel, ParamVector, reconstruct_vertices
from .network import STEM_CHANNELS, DamdNet
from .optim import AdamState, adam_step, zero_grads
from .ppm import read_ppm
from .rng import stream
from .weights_io import load_weights, save_weights

META_MEAN = "meta.target_mean"
META_STD = "meta.target_std"

# Learning-rate decay points as fractions of the run (15/40, 25/40, 30/40
# epochs in the full-scale recipe), each decaying by 0.2:
# 0.01 -> 0.002 -> 0.0004 -> 0.00008.
LR_MILESTONES = (0.375, 0.625, 0.75)
LR_FACTOR = 0.2


@dataclass
class TrainConfig:
    variant: str = "damdnet"
    width: float = 0.125
    steps: int = 500
    batch: int = 16
    lr: float = 0.01
    lambda1: float = 0.5
    lambda2: float = 1.0
    omega: float = 10.0
    epsilon: float = 2.0
    seed: int = 0
    milestones: tuple = LR_MILESTONES
    lr_factor: float = LR_FACTOR
    # Short runs need a faster second-moment horizon than Adam's 0.999
    # default; 0.99 makes a 500-step overfit converge reliably.
    beta2: float = 0.99


def lr_at_step(step, total_steps, base_lr, milestones=LR_MILESTONES, factor=LR_FACTOR):
    """Piecewise-constant schedule; `step` counts from 0."""
    lr = base_lr
    for frac in milestones:
        if step >= frac * total_steps:
            lr *= factor
    return lr


def load_training_samples(model: MorphableModel, data_dir):
    records = read_dataset(data_dir)
    if not records:
        raise DataError(f"{data_dir}: dataset is empty")
    samples = []
    for rec in records:
        img = read_ppm(os.path.join(data_dir, rec.image_path))
        samples.append(sample_from_record(img, rec))
    return records, samples


def _stack_batch(samples):
    x = np.stack([s.crop.image.transpose(2, 0, 1) for s in samples]).astype(np.float32)
    p = np.stack([s.p_gt for s in samples])
    return x, p


def target_standardization(p_all):
    """Per-coordinate affine that maps the training targets near N(0, 1)."""
    mu = p_all.mean(axis=0)
    sd = p_all.std(axis=0)
    floor = 1e-3 * sd.max() + 1e-8
    return mu, np.maximum(sd, floor)


def training_wpdc_weights(model: MorphableModel, p_all):
    """Pose weights from the training set's pose-block spread, shape weights
    from the model's parameter spreads (inverse std, max-normalized)."""
    pose_std = p_all[:, :POSE_DIM].std(axis=0)
    floor = 1e-3 * max(pose_std.max(), 1e-6)
    pose_std = np.maximum(pose_std, floor)
    vec = np.concatenate([pose_std, model.param_std[POSE_DIM:]])
    return wpdc_weights_from_std(vec)


def run_training(model: MorphableModel, data_dir, cfg: TrainConfig, weights_out,
                 log_out=None):
    """Train the regressor; writes weights plus a per-step loss CSV.

    Returns (loss_rows, net).  A NaN loss aborts with the last finite-loss
    parameters written to `weights_out`.
    """
    _, samples = load_training_samples(model, data_dir)
    x_all, p_all = _stack_batch(samples)
    n = len(samples)
    mu, sd = target_standardization(p_all)
    weights = training_wpdc_weights(model, p_all)
    loss_cfg = CombinedLossConfig(lambda1=cfg.lambda1, lambda2=cfg.lambda2)
    wing_cfg = WingConfig(omega=cfg.omega, epsilon=cfg.epsilon)

    net = DamdNet(cfg.variant, width=cfg.width, input_size=x_all.shape[2], seed=cfg.seed)
    params = net.params()
    state = AdamState.for_params(params, lr=cfg.lr, beta2=cfg.beta2)
    shuffle_rng = stream(cfg.seed, "batch-shuffle")

    mu32 = T.Tensor(mu.astype(np.float32).reshape(1, -1))
    sd32 = T.Tensor(sd.astype(np.float32).reshape(1, -1))

    order = np.arange(n)
    cursor = n  # force an initial shuffle
    rows = []
    last_good = None
    for step in range(cfg.steps):
        if cfg.batch >= n:
            idx = np.arange(n)
        else:
            if cursor + cfg.batch > n:
                order = shuffle_rng.permutation(n)
                cursor = 0
            idx = order[cursor : cursor + cfg.batch]
            cursor += cfg.batch
        xb = T.Tensor(x_all[idx])
        pb = p_all[idx].astype(np.float32)

        out = net.forward(xb, training=True)
        p_pred = T.add(T.mul(out, sd32), mu32)
        loss = combined(p_pred, pb, model, loss_cfg, weights, wing_cfg)
        loss_val = loss.item()
        lr = lr_at_step(step, cfg.steps, cfg.lr, cfg.milestones, cfg.lr_factor)
        if not math.isfinite(loss_val):
            if last_good is not None:
                for p, saved in zip(params, last_good):
                    p.data = saved
            _save_net(net, mu, sd, weights_out)
            _write_log(rows, log_out)
            raise NumericError(
                f"loss became non-finite at step {step}; last good parameters saved"
            )
        last_good = [p.data.copy() for p in params]
        zero_grads(params)
        loss.backward()
        state.lr = lr
        adam_step(params, [p.grad for p in params], state)
        rows.append((step, lr, loss_val))

    _save_net(net, mu, sd, weights_out)
    _write_log(rows, log_out)
    return rows, net


def _write_log(rows, log_out):
    if log_out is None:
        return
    with open(log_out, "w", encoding="utf-8") as fh:
        fh.write("step,lr,loss\n")
        for step, lr, loss_val in rows:
            fh.write(f"{step},{lr:.10g},{loss_val:.10g}\n")


def _save_net(net: DamdNet, mu, sd, path):
    entries = list(net.named_params())
    entries = [(name, p.data) for name, p in entries]
    entries += list(net.buffers().items())
    entries.append((META_MEAN, mu.astype(np.float32)))
    entries.append((META_STD, sd.astype(np.float32)))
    save_weights(entries, path)


def _infer_variant(names):
    if any(".sge." in n for n in names):
        return "damdnet"
    if any(".se." in n for n in names):
        return "amdnet"
    return "mdnet"


def load_net(weights_path, input_size=120, width=None, variant=None):
    """Rebuild a network from a weights file (variant/width inferred)."""
    tensors = load_weights(weights_path)
    names = [n for n in tensors if not n.startswith("meta.")]
    if "stem.conv.w" not in tensors:
        raise DataError(f"{weights_path}: missing stem weights")
    stem_out = tensors["stem.conv.w"].shape[0]
    if width is None:
        width = stem_out / STEM_CHANNELS
    if variant is None:
        variant = _infer_variant(names)
    net = DamdNet(variant, width=width, input_size=input_size, seed=0)
    own_params = dict(net.named_params())
    own_buffers = net.buffers()
    expected = set(own_params) | set(own_buffers)
    got = set(names)
    if expected != got:
        missing = sorted(expected - got)[:4]
        extra = sorted(got - expected)[:4]
        raise DataError(
            f"{weights_path}: weight names do not match a {variant} net at width "
            f"{width} (missing {missing}, unexpected {extra}); pass explicit "
            f"--width/--variant"
        )
    for name, arr in tensors.items():
        if name.startswith("meta."):
            continue
        if name in own_params:
            if tuple(own_params[name].data.shape) != tuple(arr.shape):
                raise DataError(
                    f"{weights_path}: tensor '{name}' has shape {arr.shape}, "
                    f"expected {tuple(own_params[name].data.shape)}"
                )
            own_params[name].data = arr.astype(own_params[name].data.dtype)
        else:
            own_buffers[name][...] = arr
    mu = tensors.get(META_MEAN)
    sd = tensors.get(META_STD)
    if mu is None or sd is None:
        raise DataError(f"{weights_path}: missing target standardization tensors")
    return net, mu.astype(np.float64), sd.astype(np.float64)


def predict_params(net, mu, sd, crops):
    """Forward a list of FaceCrops; returns crop-space parameter vectors."""
    x = np.stack([c.image.transpose(2, 0, 1) for c in crops]).astype(np.float32)
    with T.no_grad():
        out = net.forward(T.Tensor(x), training=False)
    return out.data.astype(np.float64) * sd.reshape(1, -1) + mu.reshape(1, -1)


def run_fit(model: MorphableModel, net, mu, sd, data_dir, skip_missing_bbox=True):
    """Crop, regress, reconstruct and project; landmarks in source coords.

    Returns (predictions, skipped) where predictions is a list of
    (image_path, landmarks (68, 2), params_crop, crop).
    """
    records = read_dataset(data_dir)
    preds = []
    skipped = []
    from .augment import crop_face

    for rec in records:
        img = read_ppm(os.path.join(data_dir, rec.image_path))
        if rec.bbox is None or not np.isfinite(rec.bbox).all() or rec.bbox[2] <= 0:
            skipped.append(rec.image_path)
            continue
        crop = crop_face(img, rec.bbox)
        p = predict_params(net, mu, sd, [crop])[0]
        v = reconstruct_vertices(model, ParamVector(p), landmarks_only=True)
        lm_crop = v.reshape(-1, 3)[:, :2]
        lm_src = crop.crop_to_source(lm_crop)
        preds.append((rec.image_path, lm_src, p, crop))
    return preds, skipped
