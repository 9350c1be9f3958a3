import numpy as np
import pytest

from conftest import random_case, random_config
from numafft.bench import normwise_error, relative_error
from numafft.conv import ConvConfig, direct_conv
from numafft.errors import ConfigError
from numafft.numa import NumaTopology, Stage, WorkerPool
from numafft.pipeline import convolve, fft_convolution

POOL = WorkerPool(NumaTopology(nodes=8, cores_per_node=2), physical=False)


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("kind, tol", [("fp64", 1e-10), ("fp32", 1e-3)])
def test_matches_direct_conv_on_random_configs(seed, kind, tol):
    rng = np.random.default_rng(seed)
    cfg = random_config(rng, kind)
    I, K = random_case(rng, cfg)
    ref = direct_conv(I, K, cfg)
    for variant in ("nfft", "wfft"):
        out = fft_convolution(I, K, cfg, variant, POOL).output
        assert out.shape == cfg.output_shape and out.dtype == cfg.dtype
        assert relative_error(out, ref) <= tol, (variant, cfg)


def test_variants_produce_identical_output(rng):
    cfg = ConvConfig(2, 6, 5, 40, 37, 3, 3, pad=1)
    I, K = random_case(rng, cfg)
    a = fft_convolution(I, K, cfg, "nfft", POOL)
    b = fft_convolution(I, K, cfg, "wfft", POOL)
    assert normwise_error(a.output, b.output) <= 1e-6


def test_ledgers_differ_only_in_cmm_fetch_locality(rng):
    cfg = ConvConfig(2, 16, 16, 56, 56, 3, 3, pad=1)
    I, K = random_case(rng, cfg)
    n = fft_convolution(I, K, cfg, "nfft", POOL).ledger
    w = fft_convolution(I, K, cfg, "wfft", POOL).ledger
    for stage in Stage:
        assert n.total(stage) == w.total(stage), stage.label
    assert n.remote(Stage.CMM_FETCH) == 0
    assert w.remote(Stage.CMM_FETCH) > 0
    # D holds NT x C x M groups of 2L floats
    assert n.total(Stage.INPUT_STORE) == 36 * 16 * 2 * 16 * 8 * 4


def test_stage_times_reported(rng):
    cfg = ConvConfig(1, 2, 2, 20, 20, 3, 3)
    res = fft_convolution(*random_case(rng, cfg), cfg, "nfft", POOL)
    assert set(res.stage_seconds) == {"input_transform", "kernel_transform", "cmm", "output_transform"}
    assert all(v >= 0 for v in res.stage_seconds.values())


def test_unknown_variant(rng):
    cfg = ConvConfig(1, 1, 1, 8, 8, 3, 3)
    with pytest.raises(ConfigError):
        fft_convolution(*random_case(rng, cfg), cfg, "xfft", POOL)


def test_convolve_wrapper(rng):
    cfg = ConvConfig(1, 2, 3, 18, 18, 3, 3, pad=1, element_kind="fp64")
    I, K = random_case(rng, cfg)
    ref = direct_conv(I, K, cfg)
    np.testing.assert_array_equal(convolve(I, K, cfg, "direct"), ref)
    out = convolve(I, K, cfg, "nfft", NumaTopology(nodes=2, cores_per_node=1))
    assert normwise_error(out, ref) <= 1e-12
