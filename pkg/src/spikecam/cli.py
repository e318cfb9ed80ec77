"""``spikecam`` command line: simulate, reconstruct, mask, forward, bench."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import bench, pipeline
from .config import load_config, serialize_config

log = logging.getLogger("spikecam")


def _window(text: str) -> tuple[int, int]:
    """``"start:len"`` or a bare ``"t"``."""
    try:
        if ":" in text:
            a, b = text.split(":", 1)
            return int(a), int(b)
        return int(text), 1
    except ValueError:
        raise argparse.ArgumentTypeError(f"window must be 'start:len' or 't', got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spikecam", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="key=value config file")
        sp.add_argument("--seed", type=int, help="overrides the config seed")

    sp = sub.add_parser("simulate", help="frames directory -> SPK1 stream + aligned labels")
    sp.add_argument("frames", type=Path)
    sp.add_argument("-o", "--output", type=Path, required=True)
    sp.add_argument("--annotations", type=Path, help="frame-indexed source labels")
    sp.add_argument("--labels-out", type=Path, help="default: output with .txt suffix")
    common(sp)

    sp = sub.add_parser("reconstruct", help="SPK1 stream -> 8-bit PGM")
    sp.add_argument("spikes", type=Path)
    sp.add_argument("-o", "--output", type=Path, required=True)
    sp.add_argument("--mode", choices=["tfp", "tfi", "imap"], default="tfp")
    sp.add_argument("--window", type=_window, help="tfp: start:len; tfi: step")
    common(sp)

    sp = sub.add_parser("mask", help="entropy-block foreground mask (PGM) + per-window CSV + figure")
    sp.add_argument("spikes", type=Path)
    sp.add_argument("-o", "--output", type=Path, required=True)
    sp.add_argument("--csv", type=Path, help="default: output with .csv suffix")
    sp.add_argument("--figure", type=Path, help="default: output with .png suffix")
    sp.add_argument("--no-figure", action="store_true")
    sp.add_argument("--source", choices=["imap", "features"], default="imap")
    sp.add_argument("--window", type=int, help="overrides esa.window")
    common(sp)

    sp = sub.add_parser("forward", help="dual-branch forward pass -> feature blob")
    sp.add_argument("spikes", type=Path)
    sp.add_argument("-o", "--output", type=Path, required=True)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--export-branches", action="store_true")
    sp.add_argument("--window", type=int, help="overrides esa.window")
    common(sp)

    sp = sub.add_parser("bench", help="codec / simulator / ESA throughput")
    sp.add_argument("--sizes", nargs="+", default=["256x256x1024"], help="WxHxT")
    sp.add_argument("--csv", type=Path)
    sp.add_argument("--figure", type=Path)
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("config", help="print the effective configuration")
    common(sp)
    return p


def run(args) -> int:
    if args.command == "bench":
        rows = bench.run_bench(args.sizes, seed=args.seed)
        table = bench.format_table(rows)
        sys.stdout.write(table)
        if args.csv:
            args.csv.write_text(bench.format_table(rows, sep=","))
        if args.figure:
            from .report import bench_figure

            bench_figure(args.figure, rows)
        if not all(r["roundtrip_ok"] for r in rows):
            log.error("bench: codec round trip mismatch")
            return 1
        return 0

    try:
        cfg = load_config(args.config)
    except (OSError, ValueError) as exc:
        log.error("config: %s: %s", args.config, exc)
        return 1
    esa_window = args.window if args.command in ("mask", "forward") else None
    cfg = cfg.with_overrides(seed=args.seed, window=esa_window)

    if args.command == "config":
        sys.stdout.write(serialize_config(cfg))
    elif args.command == "simulate":
        stream, boxes = pipeline.cmd_simulate(args.frames, args.output, cfg, args.annotations, args.labels_out)
        print(f"wrote {args.output}: {stream.width}x{stream.height}x{stream.t_len}, {len(boxes)} labels")
    elif args.command == "reconstruct":
        pipeline.cmd_reconstruct(args.spikes, args.output, args.mode, args.window)
        print(f"wrote {args.output}")
    elif args.command == "mask":
        csv_path = args.csv or args.output.with_suffix(".csv")
        fig = None if args.no_figure else (args.figure or args.output.with_suffix(".png"))
        res = pipeline.cmd_mask(args.spikes, args.output, cfg, csv_path, fig, args.source)
        m = res.masks
        print(f"foreground windows: {m.fore_idx.size}/{m.n_windows}  E_avg={m.e_avg!r}")
    elif args.command == "forward":
        summary = pipeline.cmd_forward(args.spikes, args.output, cfg, None, args.threads, args.export_branches)
        print(f"shape {summary['shape']}")
        print(f"blocks {summary['blocks']}")
        print(f"min {summary['min']!r}\nmax {summary['max']!r}\nmean {summary['mean']!r}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="spikecam %(message)s")
    try:
        return run(args)
    except pipeline.PipelineError as exc:
        log.error("%s", exc)
        return 1
    except (ValueError, OSError) as exc:
        log.error("%s: %s", args.command, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
