"""Training and evaluation engine.

Composes input mixing, adversarial style search and the dual-decoder
network into one loop. Every stochastic choice draws from a stream keyed
by (seed, purpose, epoch, batch), so identical configs reproduce
bit-identical checkpoints regardless of which branches are active.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .augment import MixConfig, TraditionalConfig, apply_pipeline
from .corruption import CorruptionSpec, apply_corruption
from .fractal import sample_pool
from .network import SegNet, SegNetConfig
from .style import adversarial_style_search, dsu, mixstyle, sample_hook_state, seg_loss, styled_hook
from .synthdata import Dataset
from .tensor import AdamState, Tensor, adam_step, mse_loss

METHODS = ("baseline", "mixstyle", "dsu", "maxstyle", "compstyle")

_INIT, _POOL, _SHUFFLE, _AUG, _STYLE, _ADV = range(20, 26)


class DivergenceError(RuntimeError):
    """Raised when the training loss stops being finite."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass
class TrainConfig:
    method: str = "baseline"
    epochs: int = 60
    batch_size: int = 8
    lr: float = 1e-3
    adv_iters: int = 5
    adv_step: float = 0.1
    w_seg: float = 1.0
    w_rec: float = 1.0
    pool_size: int = 64
    mixstyle_alpha: float = 0.1
    seed: int = 0
    adv_enabled: bool = True   # ablation switch for the adversarial branch
    mix: MixConfig = field(default_factory=MixConfig)
    arch: SegNetConfig = field(default_factory=SegNetConfig)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; options: {METHODS}")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (style mixing needs pairs)")
        if min(self.w_seg, self.w_rec) < 0:
            raise ValueError("loss weights must be >= 0")


def _stream(seed, *tags) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed)] + [int(t) for t in tags]))


def _stack(samples):
    images = np.stack([s.image for s in samples]).astype(np.float32)
    masks = np.stack([s.mask for s in samples]).astype(np.int64)
    return images, masks


def dice_score(pred_mask: np.ndarray, true_mask: np.ndarray, label: int) -> float:
    """2|A n B| / (|A| + |B|); 1.0 when both masks are empty for the label."""
    a = pred_mask == label
    b = true_mask == label
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / total


def predict_masks(net: SegNet, images: np.ndarray, batch_size: int = 16) -> np.ndarray:
    preds = []
    with net.frozen_weights():
        for i in range(0, images.shape[0], batch_size):
            logits = net.forward_seg(Tensor(images[i:i + batch_size]))
            preds.append(np.argmax(logits.data, axis=1))
    return np.concatenate(preds, axis=0)


def _mean_fg_dice(net, samples, num_classes):
    images, masks = _stack(samples)
    preds = predict_masks(net, images)
    scores = []
    for p, t in zip(preds, masks):
        per_label = [dice_score(p, t, lab) for lab in range(1, num_classes)]
        scores.append(float(np.mean(per_label)))
    return float(np.mean(scores))


def train(cfg: TrainConfig, dataset: Dataset):
    """Run the configured method; returns (best-val model, history rows)."""
    if cfg.arch.num_classes != dataset.num_classes:
        raise ValueError("arch.num_classes must match the dataset")
    if cfg.method in ("maxstyle", "compstyle") and not cfg.arch.with_aux:
        raise ValueError(f"{cfg.method} needs the auxiliary decoder (arch.with_aux)")
    train_samples = dataset.split("train", dataset.train_domain)
    if not train_samples:
        raise ValueError("dataset has no training split")
    val_samples = dataset.split("val", dataset.train_domain)

    init = _stream(cfg.seed, _INIT)
    net = SegNet(cfg.arch, seed=int(init.integers(0, 2 ** 62)))
    pool = None
    if cfg.method == "compstyle":
        pool_seed = int(_stream(cfg.seed, _POOL).integers(0, 2 ** 62))
        pool = sample_pool(cfg.pool_size, dataset.size, seed=pool_seed)

    params = net.param_list()
    adam = AdamState.for_params(params)
    history = []
    best_dice = -1.0
    best_state = net.state_arrays()

    for epoch in range(cfg.epochs):
        order = _stream(cfg.seed, _SHUFFLE, epoch).permutation(len(train_samples))
        losses = []
        for bi in range(0, len(order), cfg.batch_size):
            idx = order[bi:bi + cfg.batch_size]
            if len(idx) < 2:
                continue
            loss_value = _train_step(net, cfg, pool,
                                     [train_samples[i] for i in idx],
                                     params, adam, epoch, bi // cfg.batch_size)
            if not np.isfinite(loss_value):
                raise DivergenceError(f"non-finite loss at epoch {epoch}", history)
            losses.append(loss_value)
        val_dice = _mean_fg_dice(net, val_samples, dataset.num_classes) if val_samples else float("nan")
        history.append({"epoch": epoch, "loss": float(np.mean(losses)), "val_dice": val_dice})
        if val_samples and val_dice > best_dice:
            best_dice = val_dice
            best_state = net.state_arrays()
    if val_samples and cfg.epochs > 0:
        net.load_state(best_state)
    return net, history


def _train_step(net, cfg, pool, samples, params, adam, epoch, batch_index):
    images, masks = _stack(samples)
    if cfg.method == "compstyle":
        arng = _stream(cfg.seed, _AUG, epoch, batch_index)
        images, masks = apply_pipeline(images, masks, pool, cfg.mix, arng)

    encoder_hook = None
    if cfg.method in ("mixstyle", "dsu"):
        srng = _stream(cfg.seed, _STYLE, epoch, batch_index)
        if cfg.method == "mixstyle":
            encoder_hook = lambda f, stage: mixstyle(f, cfg.mixstyle_alpha, srng)
        else:
            encoder_hook = lambda f, stage: dsu(f, srng)

    x = Tensor(images)
    net.zero_grads()
    latent = net.encode(x, stage_hook=encoder_hook)
    logits = net.decode_seg(latent)
    loss = cfg.w_seg * seg_loss(logits, masks)
    if cfg.w_rec > 0 and net.config.with_aux:
        rrng = _stream(cfg.seed, _STYLE, epoch, batch_index, 1)
        states = [sample_hook_state(images.shape[0], ch, rrng) for ch in net.hook_channels()]
        recon = net.decode_aux(latent, hooks=[lambda f, s=s: styled_hook(f, s) for s in states])
        loss = loss + cfg.w_rec * mse_loss(recon, x)
    loss.backward()
    total = float(loss.data)

    if cfg.method in ("maxstyle", "compstyle") and cfg.adv_enabled:
        adv_rng = _stream(cfg.seed, _ADV, epoch, batch_index)
        styled, _, _ = adversarial_style_search(net, images, masks,
                                                cfg.adv_iters, cfg.adv_step, adv_rng)
        adv_logits = net.forward_seg(Tensor(styled))
        adv_loss = cfg.w_seg * seg_loss(adv_logits, masks)
        adv_loss.backward()
        total += float(adv_loss.data)

    grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    adam_step(params, grads, adam, cfg.lr)
    return total


# -- evaluation -----------------------------------------------------------------


def evaluate_domains(net: SegNet, dataset: Dataset, method: str = "", seed: int = 0,
                     config_hash: str = ""):
    """Per-domain foreground DICE on held-out test splits plus the IID score."""
    from .reporting import DiceReport, ReportRow

    held_out = dataset.held_out_domains()
    if not held_out:
        raise ValueError("dataset has no held-out domains")
    rows = []
    domain_means = []
    for did in held_out:
        samples = dataset.split("test", did)
        if not samples:
            raise ValueError(f"domain {did} has an empty test split")
        per_label, mean = _domain_scores(net, samples, dataset.num_classes)
        for lab, score in per_label.items():
            rows.append(ReportRow(method, f"domain:{did}", str(lab), score))
        rows.append(ReportRow(method, f"domain:{did}", "mean", mean))
        domain_means.append(mean)
    rows.append(ReportRow(method, "ood", "mean", float(np.mean(domain_means))))

    iid_samples = dataset.split("test", dataset.train_domain) or dataset.split("val", dataset.train_domain)
    if iid_samples:
        per_label, mean = _domain_scores(net, iid_samples, dataset.num_classes)
        for lab, score in per_label.items():
            rows.append(ReportRow(method, "iid", str(lab), score))
        rows.append(ReportRow(method, "iid", "mean", mean))
    return DiceReport(method=method, seed=seed, config_hash=config_hash, rows=rows)


def _domain_scores(net, samples, num_classes):
    images, masks = _stack(samples)
    preds = predict_masks(net, images)
    labels = range(1, num_classes)
    per_label = {}
    for lab in labels:
        per_label[lab] = float(np.mean([dice_score(p, t, lab) for p, t in zip(preds, masks)]))
    sample_means = [float(np.mean([dice_score(p, t, lab) for lab in labels]))
                    for p, t in zip(preds, masks)]
    return per_label, float(np.mean(sample_means))


def evaluate_corruptions(net: SegNet, dataset: Dataset, specs, method: str = "",
                         seed: int = 0, config_hash: str = ""):
    """Clean vs corrupted DICE on the IID test split, per kind and label."""
    from .reporting import DiceReport, ReportRow

    samples = dataset.split("test", dataset.train_domain)
    if not samples:
        raise ValueError("dataset has no IID test split")
    images, masks = _stack(samples)
    rows = []

    def add_rows(group, imgs):
        preds = predict_masks(net, imgs)
        labels = range(1, dataset.num_classes)
        for lab in labels:
            score = float(np.mean([dice_score(p, t, lab) for p, t in zip(preds, masks)]))
            rows.append(ReportRow(method, group, str(lab), score))
        sample_means = [float(np.mean([dice_score(p, t, lab) for lab in labels]))
                        for p, t in zip(preds, masks)]
        rows.append(ReportRow(method, group, "mean", float(np.mean(sample_means))))

    add_rows("clean", images)
    for spec in specs:
        corrupted = np.stack([
            apply_corruption(img[0], replace(spec, seed=spec.seed * 100003 + i))[None]
            for i, img in enumerate(images)
        ])
        add_rows(f"corrupt:{spec.kind}:{spec.severity:g}", corrupted)
    return DiceReport(method=method, seed=seed, config_hash=config_hash, rows=rows)


# -- config files ----------------------------------------------------------------


def config_to_text(cfg: TrainConfig) -> str:
    t = cfg.mix.traditional
    pairs = [
        ("method", cfg.method), ("epochs", cfg.epochs), ("batch_size", cfg.batch_size),
        ("lr", cfg.lr), ("adv_iters", cfg.adv_iters), ("adv_step", cfg.adv_step),
        ("w_seg", cfg.w_seg), ("w_rec", cfg.w_rec), ("pool_size", cfg.pool_size),
        ("mixstyle_alpha", cfg.mixstyle_alpha), ("seed", cfg.seed),
        ("mix.p_apply", cfg.mix.p_apply), ("mix.intensity_max", cfg.mix.intensity_max),
        ("mix.mode_prob_additive", cfg.mix.mode_probs[0]),
        ("mix.noise_std", cfg.mix.noise_std),
        ("mix.rotate", int(t.rotate)),
        ("mix.contrast_lo", t.contrast_range[0]), ("mix.contrast_hi", t.contrast_range[1]),
        ("mix.crop_min_area", t.crop_min_area),
        ("arch.base_width", cfg.arch.base_width), ("arch.depth", cfg.arch.depth),
        ("arch.num_classes", cfg.arch.num_classes), ("arch.in_channels", cfg.arch.in_channels),
    ]
    return "\n".join(f"{k} = {v}" for k, v in pairs) + "\n"


def config_from_text(text: str) -> TrainConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, val = (part.strip() for part in line.split("=", 1))
        values[key] = val

    def pop(key, cast, default):
        if key not in values:
            return default
        return cast(values.pop(key))

    cfg = TrainConfig(
        method=pop("method", str, "baseline"),
        epochs=pop("epochs", int, 60),
        batch_size=pop("batch_size", int, 8),
        lr=pop("lr", float, 1e-3),
        adv_iters=pop("adv_iters", int, 5),
        adv_step=pop("adv_step", float, 0.1),
        w_seg=pop("w_seg", float, 1.0),
        w_rec=pop("w_rec", float, 1.0),
        pool_size=pop("pool_size", int, 64),
        mixstyle_alpha=pop("mixstyle_alpha", float, 0.1),
        seed=pop("seed", int, 0),
        mix=MixConfig(
            p_apply=pop("mix.p_apply", float, 0.4),
            intensity_max=pop("mix.intensity_max", float, 0.3),
            mode_probs=(lambda p: (p, 1.0 - p))(pop("mix.mode_prob_additive", float, 0.5)),
            noise_std=pop("mix.noise_std", float, 0.05),
            traditional=TraditionalConfig(
                rotate=bool(pop("mix.rotate", int, 1)),
                contrast_range=(pop("mix.contrast_lo", float, 0.7),
                                pop("mix.contrast_hi", float, 1.3)),
                crop_min_area=pop("mix.crop_min_area", float, 0.8),
            ),
        ),
        arch=SegNetConfig(
            base_width=pop("arch.base_width", int, 16),
            depth=pop("arch.depth", int, 3),
            num_classes=pop("arch.num_classes", int, 2),
            in_channels=pop("arch.in_channels", int, 1),
        ),
    )
    if values:
        raise ValueError(f"unknown config keys: {sorted(values)}")
    return cfg


def config_hash(cfg: TrainConfig) -> str:
    """Short digest of the config with the seed masked out."""
    text = config_to_text(replace(cfg, seed=0))
    return hashlib.sha256(text.encode()).hexdigest()[:12]
