"""Command-line entry point: ``numafft {run,verify,sweep,report}``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import bench
from .conv import ConvConfig
from .errors import NumaFFTError
from .numa import physical_mode_requested
from .pipeline import VARIANTS
from .presets import PRESETS


def _dims(text: str) -> tuple[int, ...]:
    parts = text.replace("x", ",").split(",")
    if len(parts) not in (7, 8):
        raise argparse.ArgumentTypeError("expected B,C,C',H,W,Hk,Wk[,pad]")
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-integer in {text!r}") from None


def _add_common(p: argparse.ArgumentParser, variants: bool = False) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=list(PRESETS), help="layer from the benchmark table")
    src.add_argument("--dims", type=_dims, help="custom layer B,C,C',H,W,Hk,Wk[,pad]")
    if variants:
        p.add_argument("--variants", default="wfft,nfft", help="comma-separated variants")
    else:
        p.add_argument("--variant", choices=VARIANTS, default="nfft")
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--nodes", type=int, default=8)
    p.add_argument("--cores-per-node", type=int, default=2)
    p.add_argument("--page-size", type=int, default=4096)
    p.add_argument("--tile", type=int, default=16)
    p.add_argument("--lanes", type=int, default=4)
    p.add_argument("--precision", choices=("fp32", "fp64"), default="fp32")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cap-channels", type=int, default=None)
    p.add_argument("--max-working-set-mib", type=int, default=bench.DEFAULT_MAX_WORKING_SET >> 20)
    p.add_argument(
        "--physical-numa",
        action="store_true",
        default=physical_mode_requested(),
        help="also pin worker threads to host NUMA nodes",
    )
    p.add_argument("--format", choices=("table", "json", "csv"), default="table")
    p.add_argument("--out", help="write the report here instead of stdout")


def _run_kwargs(args) -> dict:
    kw = dict(
        batch=args.batch,
        nodes=args.nodes,
        cores_per_node=args.cores_per_node,
        page_size=args.page_size,
        tile=args.tile,
        lanes=args.lanes,
        element_kind=args.precision,
        repeats=args.repeats,
        seed=args.seed,
        cap_channels=args.cap_channels,
        max_working_set=args.max_working_set_mib << 20,
        physical=args.physical_numa,
    )
    if args.dims:
        d = args.dims
        kw["layer"] = ConvConfig(
            batch=d[0], in_channels=d[1], out_channels=d[2], in_height=d[3], in_width=d[4],
            kernel_height=d[5], kernel_width=d[6], pad=d[7] if len(d) == 8 else 0,
            element_kind=args.precision,
        )
    else:
        kw["layer"] = args.preset or "Rconv5.2"
    return kw


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="numafft", description="NUMA-aware FFT convolution benchmark harness"
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="time one layer in one variant")
    _add_common(p)
    p.add_argument("--verify", action="store_true", help="also compare against direct convolution")

    p = sub.add_parser("verify", help="check one variant against direct convolution")
    _add_common(p)
    p.add_argument("--tolerance", type=float, default=None, help="default 1e-3 fp32, 1e-10 fp64")
    p.set_defaults(repeats=1)

    p = sub.add_parser("sweep", help="run every (or selected) preset in several variants")
    _add_common(p, variants=True)
    p.add_argument("--presets", default="all", help="comma-separated preset names or 'all'")
    p.add_argument("--verify", action="store_true")

    p = sub.add_parser("report", help="re-render saved JSON reports")
    p.add_argument("files", nargs="+")
    p.add_argument("--format", choices=("table", "json", "csv"), default="table")
    p.add_argument("--out")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        if args.command == "run":
            rep = bench.run(variant=args.variant, verify=args.verify, **_run_kwargs(args))
            _emit(bench.report([rep], args.format), args.out)
        elif args.command == "verify":
            tol = args.tolerance
            if tol is None:
                tol = 1e-3 if args.precision == "fp32" else 1e-10
            kw = _run_kwargs(args)
            kw.pop("repeats")
            res = bench.verify(variant=args.variant, tolerance=tol, repeats=args.repeats, **kw)
            _emit(bench.report([res.report], args.format), args.out)
            status = "PASS" if res.passed else "FAIL"
            print(
                f"{status} max_rel_error={res.max_rel_error:.3e} (tolerance {tol:g}) "
                f"normwise_error={res.normwise_error:.3e}",
                file=sys.stderr,
            )
            return 0 if res.passed else 1
        elif args.command == "sweep":
            names = list(PRESETS) if args.presets == "all" else args.presets.split(",")
            variants = [v.strip() for v in args.variants.split(",") if v.strip()]
            reports = []
            for name in names:
                for variant in variants:
                    kw = _run_kwargs(args)
                    kw["layer"] = name
                    reports.append(bench.run(variant=variant, verify=args.verify, **kw))
                    logging.info("%s %s done", name, variant)
            _emit(bench.report(reports, args.format), args.out)
        elif args.command == "report":
            texts = []
            for path in args.files:
                with open(path) as fh:
                    texts.append(fh.read())
            _emit(bench.report(bench.load_reports(texts), args.format), args.out)
    except NumaFFTError as exc:
        print(f"numafft: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
