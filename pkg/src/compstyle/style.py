"""Feature-level style augmentation.

``apply_style`` is the single primitive: features are instance-normalized,
then rescaled and shifted per channel by mixed style statistics plus
scaled Gaussian style noise. MixStyle (cross-instance interpolation) and
DSU (batch-variance noise) are expressed through it, and
``adversarial_style_search`` sign-ascends the styling parameters of the
auxiliary decoder against the segmentation loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import SIGMA_FLOOR, Tensor, instance_stats, soft_dice_loss, softmax_ce_loss


@dataclass
class StyleStats:
    """Per-channel spatial mean and deviation of a feature map."""

    mu: np.ndarray
    sigma: np.ndarray


@dataclass
class StyleParams:
    """Target style for one feature map: mixed stats plus optional noise."""

    gamma_mix: Tensor
    beta_mix: Tensor
    eps_gamma: Tensor | None = None
    eps_beta: Tensor | None = None
    lam: np.ndarray | None = None
    perm: np.ndarray | None = None


@dataclass
class StyleNoiseScale:
    """Per-channel noise scales estimated from batch style spread."""

    sigma_gamma: np.ndarray
    sigma_beta: np.ndarray

    @classmethod
    def zero(cls, channels: int):
        z = np.zeros(channels, dtype=np.float32)
        return cls(sigma_gamma=z, sigma_beta=z.copy())


def style_stats(f: Tensor) -> StyleStats:
    """Detached per-instance style statistics of an NCHW feature map."""
    mu, sigma = instance_stats(f)
    return StyleStats(mu=mu.data.copy(), sigma=sigma.data.copy())


def batch_style_variance(f: Tensor) -> StyleNoiseScale:
    """Population variance over the batch of per-instance style statistics."""
    b = f.shape[0]
    if b < 2:
        raise ValueError("batch style variance needs at least 2 instances")
    mu, sigma = instance_stats(f)
    mu = mu.data.astype(np.float64)
    sigma = sigma.data.astype(np.float64)
    var_gamma = sigma.var(axis=0)
    var_beta = mu.var(axis=0)
    return StyleNoiseScale(sigma_gamma=var_gamma.astype(f.dtype),
                           sigma_beta=var_beta.astype(f.dtype))


def apply_style(f: Tensor, p: StyleParams, scale: StyleNoiseScale) -> Tensor:
    """Normalize f per (instance, channel), then restyle:
    out = (gamma_mix + Sg*eps_gamma) * f_hat + (beta_mix + Sb*eps_beta)."""
    b, c = f.shape[0], f.shape[1]
    if p.gamma_mix.shape != (b, c) or p.beta_mix.shape != (b, c):
        raise ValueError(f"style params must have shape {(b, c)}")
    mu, sigma = instance_stats(f)
    f_hat = (f - mu.reshape(b, c, 1, 1)) / sigma.clip_min(SIGMA_FLOOR).reshape(b, c, 1, 1)
    gamma = p.gamma_mix
    beta = p.beta_mix
    if p.eps_gamma is not None:
        gamma = gamma + Tensor(scale.sigma_gamma.reshape(1, c)) * p.eps_gamma
    if p.eps_beta is not None:
        beta = beta + Tensor(scale.sigma_beta.reshape(1, c)) * p.eps_beta
    return gamma.reshape(b, c, 1, 1) * f_hat + beta.reshape(b, c, 1, 1)


def identity_params(f: Tensor) -> StyleParams:
    """Restyle with the feature's own statistics (an identity map)."""
    mu, sigma = instance_stats(f)
    return StyleParams(gamma_mix=sigma.detach(), beta_mix=mu.detach())


def mixstyle(f: Tensor, alpha: float, rng: np.random.Generator,
             lam: np.ndarray | None = None, perm: np.ndarray | None = None) -> Tensor:
    """Interpolate style statistics with a random other batch instance."""
    b, c = f.shape[0], f.shape[1]
    if b < 2:
        raise ValueError("mixstyle needs a batch of at least 2")
    if lam is None:
        lam = rng.beta(alpha, alpha, size=(b, 1))
    if perm is None:
        perm = rng.permutation(b)
    stats = style_stats(f)
    lam = lam.astype(f.dtype)
    gamma_mix = lam * stats.sigma + (1.0 - lam) * stats.sigma[perm]
    beta_mix = lam * stats.mu + (1.0 - lam) * stats.mu[perm]
    params = StyleParams(gamma_mix=Tensor(gamma_mix), beta_mix=Tensor(beta_mix),
                         lam=lam, perm=perm)
    return apply_style(f, params, StyleNoiseScale.zero(c))


def dsu(f: Tensor, rng: np.random.Generator) -> Tensor:
    """Perturb style statistics with noise scaled by the batch style spread."""
    b, c = f.shape[0], f.shape[1]
    if b < 2:
        raise ValueError("dsu needs a batch of at least 2")
    scale = batch_style_variance(f)
    stats = style_stats(f)
    eps_g = rng.standard_normal((b, c)).astype(f.dtype)
    eps_b = rng.standard_normal((b, c)).astype(f.dtype)
    gamma_mix = stats.sigma + np.sqrt(scale.sigma_gamma)[None, :] * eps_g
    beta_mix = stats.mu + np.sqrt(scale.sigma_beta)[None, :] * eps_b
    params = StyleParams(gamma_mix=Tensor(gamma_mix), beta_mix=Tensor(beta_mix))
    return apply_style(f, params, StyleNoiseScale.zero(c))


# -- adversarial search -------------------------------------------------------


@dataclass
class HookState:
    """Free variables of one style hook during the adversarial search."""

    lam_logit: Tensor
    eps_gamma: Tensor
    eps_beta: Tensor
    perm: np.ndarray


def sample_hook_state(batch: int, channels: int, rng: np.random.Generator,
                      requires_grad: bool = False) -> HookState:
    lam = np.clip(rng.beta(0.1, 0.1, size=(batch, 1)), 1e-4, 1.0 - 1e-4)
    return HookState(
        lam_logit=Tensor(np.log(lam / (1.0 - lam)).astype(np.float32), requires_grad=requires_grad),
        eps_gamma=Tensor(np.clip(rng.standard_normal((batch, channels)), -3, 3).astype(np.float32),
                         requires_grad=requires_grad),
        eps_beta=Tensor(np.clip(rng.standard_normal((batch, channels)), -3, 3).astype(np.float32),
                        requires_grad=requires_grad),
        perm=rng.permutation(batch),
    )


def styled_hook(f: Tensor, state: HookState) -> Tensor:
    """Mix the feature's own stats with a permuted instance via sigmoid(lam),
    add batch-scaled style noise, and restyle."""
    b, c = f.shape[0], f.shape[1]
    scale = batch_style_variance(f)
    stats = style_stats(f)
    mu_d = Tensor(stats.mu)
    sig_d = Tensor(stats.sigma)
    mu_p = Tensor(stats.mu[state.perm])
    sig_p = Tensor(stats.sigma[state.perm])
    lam = state.lam_logit.sigmoid()
    gamma_mix = lam * sig_d + (1.0 - lam) * sig_p
    beta_mix = lam * mu_d + (1.0 - lam) * mu_p
    params = StyleParams(gamma_mix=gamma_mix, beta_mix=beta_mix,
                         eps_gamma=state.eps_gamma, eps_beta=state.eps_beta,
                         perm=state.perm)
    return apply_style(f, params, scale)


def seg_loss(logits: Tensor, masks: np.ndarray) -> Tensor:
    return softmax_ce_loss(logits, masks) + soft_dice_loss(logits, masks)


def adversarial_style_search(model, images: np.ndarray, masks: np.ndarray,
                             iters: int, step: float, rng: np.random.Generator):
    """Sign-gradient ascent on the aux-decoder style parameters against the
    segmentation loss. Model weights are left untouched; the returned styled
    images are detached from the tape.

    Returns (styled_images, hook_states, loss_trace).
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    x = Tensor(images)
    with model.frozen_weights():
        latent = model.encode(x).detach()
        states = [sample_hook_state(x.shape[0], ch, rng, requires_grad=True)
                  for ch in model.hook_channels()]

        def decode_and_score():
            recon = model.decode_aux(latent, hooks=[lambda f, s=s: styled_hook(f, s) for s in states])
            logits = model.forward_seg(recon)
            return recon, seg_loss(logits, masks)

        recon, loss = decode_and_score()
        trace = [float(loss.data)]
        best = recon.data.copy()
        for _ in range(iters):
            for s in states:
                s.lam_logit.zero_grad()
                s.eps_gamma.zero_grad()
                s.eps_beta.zero_grad()
            loss.backward()
            for s in states:
                for t in (s.lam_logit, s.eps_gamma, s.eps_beta):
                    if t.grad is not None:
                        t.data += step * np.sign(t.grad)
                s.eps_gamma.data = np.clip(s.eps_gamma.data, -3.0, 3.0)
                s.eps_beta.data = np.clip(s.eps_beta.data, -3.0, 3.0)
            recon, loss = decode_and_score()
            if not np.isfinite(loss.data):
                break
            trace.append(float(loss.data))
            best = recon.data.copy()
    return best, states, trace
