import pytest

from numafft.errors import ConfigError
from numafft.presets import PRESETS, TABLE_BATCHES, get_preset

# golden copy of the benchmark table: name, C, C', H_i = W_i, H_k = W_k
GOLDEN = [
    ("Vconv1.1", 3, 64, 224, 3),
    ("Vconv1.2", 64, 64, 224, 3),
    ("Vconv2.1", 64, 128, 112, 3),
    ("Vconv2.2", 128, 128, 112, 3),
    ("Vconv3.1", 128, 256, 56, 3),
    ("Vconv3.2", 256, 256, 56, 3),
    ("Vconv4.1", 256, 512, 28, 3),
    ("Vconv4.2", 512, 512, 28, 3),
    ("Vconv5", 512, 512, 14, 3),
    ("Aconv2", 48, 128, 27, 5),
    ("Aconv3", 256, 384, 13, 3),
    ("Aconv4", 192, 192, 13, 3),
    ("Aconv5", 192, 128, 13, 3),
    ("Rconv2.2", 64, 64, 56, 3),
    ("Rconv3.2", 128, 128, 28, 3),
    ("Rconv4.2", 256, 256, 14, 3),
    ("Rconv5.2", 512, 512, 7, 3),
]


def test_presets_equal_golden_table():
    assert list(PRESETS) == [g[0] for g in GOLDEN]
    for name, c, cp, hw, k in GOLDEN:
        p = PRESETS[name]
        assert (p.in_channels, p.out_channels) == (c, cp), name
        assert (p.height, p.width) == (hw, hw), name
        assert (p.kernel_height, p.kernel_width) == (k, k), name


def test_table_batches():
    assert TABLE_BATCHES == (32, 64, 128)
    cfg = PRESETS["Vconv4.2"].config(batch=128)
    assert cfg.batch == 128


def test_same_padding_default():
    assert PRESETS["Aconv2"].config().pad == 2
    assert PRESETS["Aconv2"].config().out_height == 27
    assert PRESETS["Rconv5.2"].config(pad=0).out_height == 5


def test_channel_cap():
    cfg = PRESETS["Aconv3"].config(cap_channels=64)
    assert (cfg.in_channels, cfg.out_channels) == (64, 64)
    cfg = PRESETS["Vconv1.1"].config(cap_channels=64)
    assert (cfg.in_channels, cfg.out_channels) == (3, 64)
    with pytest.raises(ConfigError):
        PRESETS["Vconv1.1"].config(cap_channels=0)


def test_network_names():
    assert {p.network for p in PRESETS.values()} == {"VGG", "AlexNet", "ResNet"}


def test_unknown_preset():
    with pytest.raises(ConfigError, match="unknown preset"):
        get_preset("Vconv9")
