"""Command-line entry point: gen-trace, replay, report, fsck."""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import report as reports
from . import trace
from .device import BlockDevice
from .errors import DeltaFSError
from .fs import DeltaFS, FSConfig
from .replay import MetricsReport, config_from_keyvalue, replay

DEFAULT_REPORT = "deltafs-report.jsonl"


def cmd_gen_trace(args):
    overrides = {"seed": trace.env_seed(args.seed)}
    if args.ops is not None:
        overrides["ops"] = args.ops
    if args.files is not None:
        overrides["files"] = args.files
    cfg = trace.TraceConfig.preset(args.preset, **overrides)
    records = trace.gen_trace(cfg)
    if args.output == "-":
        sys.stdout.writelines(r.to_line() + "\n" for r in records)
    else:
        trace.dump(records, args.output)
        print(f"wrote {len(records)} records to {args.output}", file=sys.stderr)
    return 0


def cmd_replay(args):
    cfg = FSConfig()
    if args.config:
        cfg = config_from_keyvalue(Path(args.config).read_text(), cfg)
    if args.no_compress:
        cfg = replace(cfg, compression=False)
    records = trace.load(args.trace)
    rep, rp = replay(records, cfg)
    if args.image:
        rp.fs.device.save(args.image)
    Path(args.report).write_text(rep.to_json_lines())
    sys.stdout.write(reports.render(rep, args.format))
    return 0


def cmd_report(args):
    rep = MetricsReport.from_json_lines(Path(args.input).read_text())
    sys.stdout.write(reports.render(rep, args.format))
    return 0


def cmd_fsck(args):
    dev = BlockDevice.load(args.image)
    fs = DeltaFS.mount(dev)
    result = fs.fsck()
    print(result)
    return 0 if result.clean else 1


def build_parser():
    p = argparse.ArgumentParser(prog="deltafs", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen-trace", help="write a synthetic trace")
    g.add_argument("--preset", default="telegram", choices=sorted(trace.PRESETS))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--ops", type=int)
    g.add_argument("--files", type=int)
    g.add_argument("-o", "--output", default="-")
    g.set_defaults(func=cmd_gen_trace)

    r = sub.add_parser("replay", help="replay a trace on a fresh file system")
    r.add_argument("trace")
    r.add_argument("--image", help="save the resulting device image here")
    r.add_argument("--config", help="key = value file system configuration")
    r.add_argument("--no-compress", action="store_true")
    r.add_argument("--report", default=DEFAULT_REPORT, help="where to keep the metrics")
    r.add_argument("--format", default="human", choices=reports.FORMATS)
    r.set_defaults(func=cmd_replay)

    s = sub.add_parser("report", help="render the metrics of the last replay")
    s.add_argument("--input", default=DEFAULT_REPORT)
    s.add_argument("--format", default="human", choices=reports.FORMATS)
    s.set_defaults(func=cmd_report)

    f = sub.add_parser("fsck", help="check a device image")
    f.add_argument("--image", required=True)
    f.set_defaults(func=cmd_fsck)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DeltaFSError, OSError, ValueError, KeyError) as exc:
        print(f"deltafs: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
