"""Benchmark harness: run a layer in one variant, verify against the oracle, serialize reports."""

from __future__ import annotations

import csv
import io
import json
import statistics
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .conv import ConvConfig, direct_conv, make_plan
from .errors import ConfigError, FormatError
from .numa import NumaTopology, Stage, WorkerPool, locality_report
from .pipeline import FFT_STAGES, VARIANTS, fft_convolution
from .presets import get_preset

SCHEMA_NAME = "numafft/run-report"
SCHEMA_VERSION = 1
DEFAULT_MAX_WORKING_SET = 2 * 1024**3
REL_ERROR_FLOOR = 1e-6

STAGE_COLUMNS = ("direct",) + FFT_STAGES
CSV_COLUMNS = (
    [
        "preset", "variant", "element_kind", "batch", "in_channels", "out_channels",
        "in_height", "in_width", "kernel_height", "kernel_width", "pad",
        "nodes", "cores_per_node", "tile", "lanes", "repeats", "seed",
    ]
    + [f"t_{s}" for s in STAGE_COLUMNS]
    + ["t_total"]
    + [f"{s.label}_{k}" for s in Stage for k in ("local", "remote")]
    + ["max_rel_error", "normwise_error", "speedup"]
)


@dataclass
class RunReport:
    preset: str
    variant: str
    config: dict
    nodes: int
    cores_per_node: int
    tile: int
    lanes: int
    repeats: int
    seed: int
    stage_seconds: dict[str, float]
    total_seconds: float
    locality: dict[str, dict] = field(default_factory=dict)
    max_rel_error: float | None = None
    normwise_error: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["max_rel_error"] is None:
            del d["max_rel_error"]
            del d["normwise_error"]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        try:
            return cls(**{"max_rel_error": None, "normwise_error": None, **d})
        except TypeError as exc:
            raise FormatError(f"report does not match schema v{SCHEMA_VERSION}: {exc}") from None


def make_inputs(cfg: ConvConfig, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Input and kernel drawn uniformly from [-1, 1]."""
    rng = np.random.default_rng(seed)
    I = rng.uniform(-1.0, 1.0, cfg.input_shape).astype(cfg.dtype)
    K = rng.uniform(-1.0, 1.0, cfg.kernel_shape).astype(cfg.dtype)
    return I, K


def working_set_bytes(cfg: ConvConfig, variant: str, tile: int, lanes: int, verify: bool) -> int:
    es = cfg.dtype.itemsize
    total = (
        np.prod(cfg.input_shape) + np.prod(cfg.kernel_shape) + np.prod(cfg.output_shape)
    ) * es
    if variant != "direct":
        plan = make_plan(cfg, tile, lanes, 1)
        group = plan.tuple_count * 2 * lanes * es
        c, cp, m = cfg.in_channels, cfg.out_channels, plan.m_count
        total += group * (c * m + c * cp + cp * m)
    if verify or variant == "direct":
        padded = cfg.batch * cfg.in_channels * (cfg.in_height + 2 * cfg.pad) * (cfg.in_width + 2 * cfg.pad)
        total += 8 * (padded + 2 * np.prod(cfg.output_shape))
    return int(total)


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = REL_ERROR_FLOOR) -> float:
    """Largest elementwise ``|a - b| / max(|b|, floor)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), floor)))


def normwise_error(a: np.ndarray, b: np.ndarray) -> float:
    """``max|a - b| / max|b|``; 0 when both are zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = float(np.max(np.abs(b))) if b.size else 0.0
    diff = float(np.max(np.abs(a - b))) if a.size else 0.0
    return diff / scale if scale else diff


def resolve_config(
    layer: str | ConvConfig,
    batch: int,
    element_kind: str,
    cap_channels: int | None,
) -> tuple[str, ConvConfig]:
    """``(name, config)`` for a preset name or a custom configuration.

    Batch and precision apply to presets only; a custom config keeps its own.
    """
    if isinstance(layer, str):
        return layer, get_preset(layer).config(batch, element_kind, cap_channels)
    if not isinstance(layer, ConvConfig):
        raise ConfigError(f"expected a preset name or ConvConfig, got {type(layer).__name__}")
    cfg = layer
    if cap_channels is not None:
        cfg = ConvConfig(
            **{**asdict(cfg), "in_channels": min(cfg.in_channels, cap_channels),
               "out_channels": min(cfg.out_channels, cap_channels)}
        )
    return "custom", cfg


def run(
    layer: str | ConvConfig,
    variant: str = "nfft",
    batch: int = 2,
    nodes: int = 8,
    cores_per_node: int = 2,
    repeats: int = 10,
    seed: int = 0,
    tile: int = 16,
    lanes: int = 4,
    element_kind: str = "fp32",
    cap_channels: int | None = None,
    page_size: int = 4096,
    verify: bool = False,
    max_working_set: int = DEFAULT_MAX_WORKING_SET,
    physical: bool | None = None,
    keep_output: bool = False,
):
    """Run one layer ``repeats`` times and report median stage times and locality.

    Locality comes from the first repetition. With ``keep_output`` the return
    value is ``(report, output, oracle)``.
    """
    if variant not in VARIANTS:
        raise ConfigError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if repeats < 1:
        raise ConfigError(f"repeats must be >= 1, got {repeats}")
    name, cfg = resolve_config(layer, batch, element_kind, cap_channels)
    need = working_set_bytes(cfg, variant, tile, lanes, verify)
    if need > max_working_set:
        raise ConfigError(
            f"working set {need / 2**20:.0f} MiB exceeds cap {max_working_set / 2**20:.0f} MiB; "
            f"reduce --batch, set --cap-channels, or raise --max-working-set-mib"
        )
    topo = NumaTopology(nodes=nodes, cores_per_node=cores_per_node, page_size=page_size)
    pool = WorkerPool(topo, physical=physical)
    I, K = make_inputs(cfg, seed)

    stage_runs: dict[str, list[float]] = {}
    totals = []
    locality = {}
    output = None
    for rep in range(repeats):
        if variant == "direct":
            t0 = time.perf_counter()
            out = direct_conv(I, K, cfg)
            seconds = {"direct": time.perf_counter() - t0}
        else:
            result = fft_convolution(I, K, cfg, variant, pool, tile=tile, lanes=lanes)
            out, seconds = result.output, result.stage_seconds
            if rep == 0:
                locality = locality_report(result.ledger)
        if rep == 0:
            output = out
        for k, v in seconds.items():
            stage_runs.setdefault(k, []).append(v)
        totals.append(sum(seconds.values()))

    report = RunReport(
        preset=name,
        variant=variant,
        config=asdict(cfg),
        nodes=nodes,
        cores_per_node=cores_per_node,
        tile=tile,
        lanes=lanes,
        repeats=repeats,
        seed=seed,
        stage_seconds={k: statistics.median(v) for k, v in stage_runs.items()},
        total_seconds=statistics.median(totals),
        locality=locality,
    )
    oracle = None
    if verify:
        oracle = direct_conv(I, K, cfg)
        report.max_rel_error = relative_error(output, oracle)
        report.normwise_error = normwise_error(output, oracle)
    if keep_output:
        return report, output, oracle
    return report


@dataclass
class Verification:
    passed: bool
    max_rel_error: float
    normwise_error: float
    tolerance: float
    report: RunReport


def verify(
    layer: str | ConvConfig,
    variant: str = "nfft",
    batch: int = 2,
    tolerance: float = 1e-3,
    **kwargs,
) -> Verification:
    """Compare one run's output to ``direct_conv``; passes iff the elementwise error is within tolerance."""
    kwargs.setdefault("repeats", 1)
    rep = run(layer, variant, batch=batch, verify=True, **kwargs)
    return Verification(
        rep.max_rel_error <= tolerance, rep.max_rel_error, rep.normwise_error, tolerance, rep
    )


def _pair_key(r: RunReport):
    return (r.preset, json.dumps(r.config, sort_keys=True), r.nodes, r.cores_per_node, r.tile, r.lanes)


def _pairs(reports: list[RunReport]) -> dict:
    by_key: dict = {}
    for r in reports:
        by_key.setdefault(_pair_key(r), {})[r.variant] = r
    return {k: (v["wfft"], v["nfft"]) for k, v in by_key.items() if "wfft" in v and "nfft" in v}


def _ratio(w: RunReport, n: RunReport) -> float | None:
    return w.total_seconds / n.total_seconds if n.total_seconds else None


def speedups(reports: list[RunReport]) -> list[dict]:
    """``wfft / nfft`` total-time ratios for every configuration run in both variants."""
    return [
        {
            "preset": n.preset,
            "batch": n.config["batch"],
            "wfft_seconds": w.total_seconds,
            "nfft_seconds": n.total_seconds,
            "speedup": _ratio(w, n),
        }
        for w, n in _pairs(reports).values()
    ]


def _coerce(reports) -> list[RunReport]:
    if not reports:
        raise FormatError("need at least one report")
    out = []
    for r in reports:
        if isinstance(r, RunReport):
            out.append(r)
        elif isinstance(r, dict):
            out.append(RunReport.from_dict(r))
        else:
            raise FormatError(f"cannot serialize {type(r).__name__}")
    return out


def _row(r: RunReport, speedup) -> dict:
    row = {k: r.config.get(k) for k in CSV_COLUMNS if k in r.config}
    row.update(
        preset=r.preset, variant=r.variant, nodes=r.nodes, cores_per_node=r.cores_per_node,
        tile=r.tile, lanes=r.lanes, repeats=r.repeats, seed=r.seed, t_total=r.total_seconds,
        max_rel_error=r.max_rel_error, normwise_error=r.normwise_error, speedup=speedup,
    )
    for s in STAGE_COLUMNS:
        row[f"t_{s}"] = r.stage_seconds.get(s)
    for s in Stage:
        loc = r.locality.get(s.label, {})
        row[f"{s.label}_local"] = loc.get("local")
        row[f"{s.label}_remote"] = loc.get("remote")
    return row


def report(reports, fmt: str = "table") -> str:
    """Serialize reports as ``json``, ``csv`` or a plain ``table``."""
    reports = _coerce(reports)
    pairs = _pairs(reports)
    rows = [
        _row(r, _ratio(*pairs[_pair_key(r)]) if r.variant == "nfft" and _pair_key(r) in pairs else None)
        for r in reports
    ]

    if fmt == "json":
        doc = {
            "schema": SCHEMA_NAME,
            "version": SCHEMA_VERSION,
            "reports": [r.to_dict() for r in reports],
            "comparisons": speedups(reports),
        }
        return json.dumps(doc, indent=2, sort_keys=False)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: "" if v is None else v for k, v in row.items()})
        return buf.getvalue()
    if fmt == "table":
        cols = ["preset", "variant", "batch", "in_channels", "out_channels", "t_total",
                "CmmFetch_remote", "max_rel_error", "speedup"]
        lines = ["  ".join(f"{c:>15}" for c in cols)]
        for row in rows:
            cells = []
            for c in cols:
                v = row.get(c)
                if isinstance(v, float):
                    v = f"{v:.4g}"
                cells.append(f"{'-' if v is None else v:>15}")
            lines.append("  ".join(cells))
        return "\n".join(lines) + "\n"
    raise FormatError(f"unknown format {fmt!r}; use json, csv or table")


def load_reports(texts: list[str]) -> list[RunReport]:
    """Parse JSON documents produced by ``report(..., 'json')``; all must share one schema version."""
    reports = []
    seen = set()
    for text in texts:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"not a JSON report: {exc}") from None
        if not isinstance(doc, dict) or doc.get("schema") != SCHEMA_NAME:
            raise FormatError("document is not a numafft run report")
        seen.add(doc.get("version"))
        if len(seen) > 1:
            raise FormatError(f"cannot mix report schema versions {sorted(seen, key=str)}")
        if doc.get("version") != SCHEMA_VERSION:
            raise FormatError(f"unsupported schema version {doc.get('version')}")
        reports.extend(RunReport.from_dict(d) for d in doc.get("reports", []))
    return reports


REPORT_JSON_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "version", "reports", "comparisons"],
    "properties": {
        "schema": {"const": SCHEMA_NAME},
        "version": {"const": SCHEMA_VERSION},
        "reports": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": [
                    "preset", "variant", "config", "nodes", "cores_per_node", "tile", "lanes",
                    "repeats", "seed", "stage_seconds", "total_seconds", "locality",
                ],
                "additionalProperties": False,
                "properties": {
                    "preset": {"type": "string"},
                    "variant": {"enum": list(VARIANTS)},
                    "config": {
                        "type": "object",
                        "required": [
                            "batch", "in_channels", "out_channels", "in_height", "in_width",
                            "kernel_height", "kernel_width", "pad", "element_kind",
                        ],
                    },
                    "nodes": {"type": "integer", "minimum": 1},
                    "cores_per_node": {"type": "integer", "minimum": 1},
                    "tile": {"type": "integer"},
                    "lanes": {"type": "integer"},
                    "repeats": {"type": "integer", "minimum": 1},
                    "seed": {"type": "integer"},
                    "stage_seconds": {
                        "type": "object",
                        "additionalProperties": {"type": "number", "minimum": 0},
                    },
                    "total_seconds": {"type": "number", "minimum": 0},
                    "locality": {
                        "type": "object",
                        "additionalProperties": {
                            "type": "object",
                            "required": ["local", "remote", "remote_fraction"],
                            "properties": {
                                "local": {"type": "integer", "minimum": 0},
                                "remote": {"type": "integer", "minimum": 0},
                                "remote_fraction": {"type": "number", "minimum": 0, "maximum": 1},
                            },
                        },
                    },
                    "max_rel_error": {"type": "number", "minimum": 0},
                    "normwise_error": {"type": "number", "minimum": 0},
                },
            },
        },
        "comparisons": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["preset", "batch", "wfft_seconds", "nfft_seconds", "speedup"],
            },
        },
    },
}
