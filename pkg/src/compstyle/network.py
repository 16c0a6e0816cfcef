"""Encoder-decoder fully convolutional segmentation network.

Two capacity variants (base width 16 or 64), three down/up stages, 3x3
convolutions, ReLU, nearest-neighbor upsampling. An auxiliary image
decoder shares the latent representation and carries the style hooks on
its two innermost stages; the segmentation path never touches it.
"""

from __future__ import annotations

import re
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .serial import read_tensor, write_tensor
from .tensor import Tensor, avgpool2x, conv2d, upsample2x


@dataclass
class SegNetConfig:
    base_width: int = 16
    depth: int = 3
    num_classes: int = 2
    in_channels: int = 1
    with_aux: bool = True


class SegNet:
    """Dual-decoder FCN; parameters live in a flat ordered name->Tensor map."""

    HOOK_STAGES = 2  # innermost auxiliary-decoder stages carrying style hooks

    def __init__(self, config: SegNetConfig, seed: int = 0):
        if config.depth < 2:
            raise ValueError("depth must be >= 2")
        self.config = config
        self.params: dict[str, Tensor] = {}
        self.hook_stages = min(self.HOOK_STAGES, config.depth - 1)
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5E6]))
        widths = [config.base_width * (2 ** i) for i in range(config.depth)]
        self._widths = widths

        chans = config.in_channels
        for i, w in enumerate(widths):
            self._add_conv(rng, f"enc{i}a", chans, w)
            self._add_conv(rng, f"enc{i}b", w, w)
            chans = w
        self._add_decoder(rng, "seg", widths, config.num_classes)
        if config.with_aux:
            self._add_decoder(rng, "aux", widths, 1)

    def _add_conv(self, rng, name, cin, cout, k=3):
        std = np.sqrt(2.0 / (cin * k * k))
        self.params[f"{name}.w"] = Tensor(
            (rng.standard_normal((cout, cin, k, k)) * std).astype(np.float32), requires_grad=True)
        self.params[f"{name}.b"] = Tensor(np.zeros(cout, dtype=np.float32), requires_grad=True)

    def _add_decoder(self, rng, tag, widths, out_channels):
        chans = widths[-1]
        for i, w in enumerate(reversed(widths[:-1])):
            self._add_conv(rng, f"{tag}{i}a", chans, w)
            self._add_conv(rng, f"{tag}{i}b", w, w)
            chans = w
        last = len(widths) - 1
        self._add_conv(rng, f"{tag}{last}a", chans, chans)
        self._add_conv(rng, f"{tag}{last}b", chans, out_channels)

    # -- parameter access ----------------------------------------------------

    def param_list(self):
        return list(self.params.values())

    def param_count(self):
        return sum(p.data.size for p in self.params.values())

    def state_arrays(self):
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state(self, arrays):
        for name, p in self.params.items():
            if p.data.shape != arrays[name].shape:
                raise ValueError(f"shape mismatch for {name}")
            p.data = arrays[name].astype(np.float32).copy()

    @contextmanager
    def frozen_weights(self):
        """Temporarily exclude weights from gradient computation."""
        for p in self.params.values():
            p.requires_grad = False
        try:
            yield self
        finally:
            for p in self.params.values():
                p.requires_grad = True

    def zero_grads(self):
        for p in self.params.values():
            p.grad = None

    # -- forward paths ---------------------------------------------------------

    def _conv(self, name, x, relu=True):
        out = conv2d(x, self.params[f"{name}.w"], stride=1, padding=1)
        out = out + self.params[f"{name}.b"].reshape(1, -1, 1, 1)
        return out.relu() if relu else out

    def encode(self, x: Tensor, stage_hook=None) -> Tensor:
        h, w = x.shape[2], x.shape[3]
        div = 2 ** self.config.depth
        if h % div or w % div:
            raise ValueError(f"spatial dims must be divisible by {div}")
        f = x
        for i in range(self.config.depth):
            f = self._conv(f"enc{i}a", f)
            f = self._conv(f"enc{i}b", f)
            f = avgpool2x(f)
            if stage_hook is not None and i < self.hook_stages:
                f = stage_hook(f, i)
        return f

    def _decode(self, tag, latent, hooks=None):
        f = latent
        depth = self.config.depth
        for i in range(depth):
            f = upsample2x(f)
            f = self._conv(f"{tag}{i}a", f)
            last = i == depth - 1
            f = self._conv(f"{tag}{i}b", f, relu=not last)
            if hooks is not None and i < self.hook_stages:
                f = hooks[i](f)
        return f

    def decode_seg(self, latent: Tensor) -> Tensor:
        return self._decode("seg", latent)

    def decode_aux(self, latent: Tensor, hooks=None) -> Tensor:
        if not self.config.with_aux:
            raise ValueError("network was built without the auxiliary decoder")
        if hooks is not None and len(hooks) != self.hook_stages:
            raise ValueError(f"expected {self.hook_stages} hooks")
        return self._decode("aux", latent, hooks=hooks).clip01()

    def hook_channels(self):
        """Channel counts at the auxiliary decoder's hooked stages."""
        return list(reversed(self._widths[:-1]))[: self.hook_stages]

    def forward_seg(self, x: Tensor, encoder_hook=None) -> Tensor:
        return self.decode_seg(self.encode(x, stage_hook=encoder_hook))

    def forward_style_decode(self, latent: Tensor, params_list, scales_list) -> Tensor:
        """Auxiliary decode with explicit style params applied at each hook."""
        from .style import apply_style

        if len(params_list) != self.hook_stages or len(scales_list) != self.hook_stages:
            raise ValueError(f"expected {self.hook_stages} param/scale sets")
        hooks = [lambda f, p=p, s=s: apply_style(f, p, s)
                 for p, s in zip(params_list, scales_list)]
        return self.decode_aux(latent, hooks=hooks)


# -- checkpoints ----------------------------------------------------------------


def save_checkpoint(net: SegNet, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = net.config
    lines = [
        "segnet-checkpoint v1",
        f"base_width {cfg.base_width}",
        f"depth {cfg.depth}",
        f"num_classes {cfg.num_classes}",
        f"in_channels {cfg.in_channels}",
        f"with_aux {int(cfg.with_aux)}",
    ]
    for name, p in net.params.items():
        fname = re.sub(r"[^A-Za-z0-9_]", "_", name) + ".cstn"
        write_tensor(out / fname, p.data)
        dims = "x".join(str(d) for d in p.data.shape)
        lines.append(f"param {name} {dims} {fname}")
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")
    return out / "manifest.txt"


def load_checkpoint(ckpt_dir) -> SegNet:
    ckpt = Path(ckpt_dir)
    lines = (ckpt / "manifest.txt").read_text().splitlines()
    if lines[0] != "segnet-checkpoint v1":
        raise ValueError("unrecognized checkpoint manifest")
    fields = {}
    params = []
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = line.split()
        if parts[0] == "param":
            params.append((parts[1], parts[3]))
        else:
            fields[parts[0]] = int(parts[1])
    cfg = SegNetConfig(base_width=fields["base_width"], depth=fields["depth"],
                       num_classes=fields["num_classes"], in_channels=fields["in_channels"],
                       with_aux=bool(fields["with_aux"]))
    net = SegNet(cfg, seed=0)
    arrays = {name: read_tensor(ckpt / fname) for name, fname in params}
    net.load_state(arrays)
    return net
