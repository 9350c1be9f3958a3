"""Unit-stride convolution layers from AlexNet, VGG and ResNet used as benchmarks."""

from __future__ import annotations

from dataclasses import dataclass

from .conv import ConvConfig
from .errors import ConfigError

TABLE_BATCHES = (32, 64, 128)


@dataclass(frozen=True)
class LayerPreset:
    name: str
    in_channels: int
    out_channels: int
    height: int
    width: int
    kernel_height: int
    kernel_width: int

    @property
    def network(self) -> str:
        return {"V": "VGG", "A": "AlexNet", "R": "ResNet"}[self.name[0]]

    def config(
        self,
        batch: int = 2,
        element_kind: str = "fp32",
        cap_channels: int | None = None,
        pad: int | None = None,
    ) -> ConvConfig:
        """Layer as a ConvConfig; padding defaults to same-size ``kernel // 2``."""
        c, cp = self.in_channels, self.out_channels
        if cap_channels is not None:
            if cap_channels < 1:
                raise ConfigError(f"channel cap must be >= 1, got {cap_channels}")
            c, cp = min(c, cap_channels), min(cp, cap_channels)
        return ConvConfig(
            batch=batch,
            in_channels=c,
            out_channels=cp,
            in_height=self.height,
            in_width=self.width,
            kernel_height=self.kernel_height,
            kernel_width=self.kernel_width,
            pad=self.kernel_height // 2 if pad is None else pad,
            element_kind=element_kind,
        )


def _p(name, c, cp, hw, k):
    return LayerPreset(name, c, cp, hw, hw, k, k)


PRESETS: dict[str, LayerPreset] = {
    p.name: p
    for p in (
        _p("Vconv1.1", 3, 64, 224, 3),
        _p("Vconv1.2", 64, 64, 224, 3),
        _p("Vconv2.1", 64, 128, 112, 3),
        _p("Vconv2.2", 128, 128, 112, 3),
        _p("Vconv3.1", 128, 256, 56, 3),
        _p("Vconv3.2", 256, 256, 56, 3),
        _p("Vconv4.1", 256, 512, 28, 3),
        _p("Vconv4.2", 512, 512, 28, 3),
        _p("Vconv5", 512, 512, 14, 3),
        _p("Aconv2", 48, 128, 27, 5),
        _p("Aconv3", 256, 384, 13, 3),
        _p("Aconv4", 192, 192, 13, 3),
        _p("Aconv5", 192, 128, 13, 3),
        _p("Rconv2.2", 64, 64, 56, 3),
        _p("Rconv3.2", 128, 128, 28, 3),
        _p("Rconv4.2", 256, 256, 14, 3),
        _p("Rconv5.2", 512, 512, 7, 3),
    )
}


def get_preset(name: str) -> LayerPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
