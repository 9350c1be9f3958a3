import numpy as np
import pytest

from numafft.conv import ConvConfig

# (criterion, passed, detail) lines collected by test_acceptance.py
ACCEPTANCE_LINES: list[tuple[str, str, str]] = []


def record_criterion(name: str, status: str, detail: str = "") -> None:
    ACCEPTANCE_LINES.append((name, status, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{status:8s} {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_case(rng, cfg: ConvConfig):
    I = rng.uniform(-1, 1, cfg.input_shape).astype(cfg.dtype)
    K = rng.uniform(-1, 1, cfg.kernel_shape).astype(cfg.dtype)
    return I, K


def random_config(rng, element_kind="fp64", max_c=8, max_hw=32, max_b=4) -> ConvConfig:
    """Random layer within the small-problem envelope; kernel always fits a 16-tile."""
    k = int(rng.integers(1, 6))
    kw = int(rng.integers(1, k + 1))
    h = int(rng.integers(k, max_hw + 1))
    w = int(rng.integers(k, max_hw + 1))
    # wider padding than the kernel would create output borders that see only zeros
    pad = int(rng.integers(0, min(k, kw) // 2 + 1))
    return ConvConfig(
        batch=int(rng.integers(1, max_b + 1)),
        in_channels=int(rng.integers(1, max_c + 1)),
        out_channels=int(rng.integers(1, max_c + 1)),
        in_height=h,
        in_width=w,
        kernel_height=k,
        kernel_width=kw,
        pad=pad,
        element_kind=element_kind,
    )
