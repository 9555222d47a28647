"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 bad input data, 3 training divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor

from .complexity import count_macs
from .config import CONFIGS
from .decoder import decode_bitstream
from .encoder import TrainConfig, TrainingDiverged, encode_image
from .imageio import read_image, write_image
from .metrics import RdCurve, bd_rate, mse, psnr

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3

REPORT_COLUMNS = ("file", "lambda", "bpp_total", "bpp_latent", "bpp_nn", "psnr", "encode_seconds")
_RATE_COLUMNS = ("rate", "bpp", "bpp_total")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _train_config(args, lam: float) -> TrainConfig:
    return TrainConfig(
        lam=lam,
        config=args.config,
        phase1_iters=args.iters1,
        phase2_iters=args.iters2,
        epsilon=args.epsilon,
        seed=args.seed,
    )


def _dump(obj) -> None:
    print(json.dumps(obj, indent=2))


def cmd_encode(args) -> int:
    image = read_image(args.input)
    result = encode_image(image, _train_config(args, args.lam))
    with open(args.output, "wb") as f:
        f.write(result.bitstream)
    if args.recon:
        write_image(args.recon, result.reconstructed)
    _dump(result.report())
    return EXIT_OK


def cmd_decode(args) -> int:
    with open(args.input, "rb") as f:
        decoded = decode_bitstream(f.read())
    write_image(args.output, decoded.image)
    return EXIT_OK


def cmd_metrics(args) -> int:
    ref, dist = read_image(args.ref), read_image(args.dist)
    if ref.shape != dist.shape:
        raise ValueError(f"image sizes differ: {ref.shape[1:]} vs {dist.shape[1:]}")
    out = {"psnr": psnr(ref, dist), "mse": mse(ref, dist)}
    if args.bitstream:
        _, h, w = ref.shape
        out["bpp"] = os.path.getsize(args.bitstream) * 8.0 / (h * w)
    _dump(out)
    return EXIT_OK


def read_curves(path: str) -> dict[str, RdCurve]:
    """RD curves from a CSV with a psnr column and a rate (or bpp) column.

    Rows are grouped by the ``file`` column when present.
    """
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        fields = reader.fieldnames or []
        rate_col = next((c for c in _RATE_COLUMNS if c in fields), None)
        if rate_col is None or "psnr" not in fields:
            raise ValueError(f"{path}: needs a psnr column and one of {_RATE_COLUMNS}")
        groups = defaultdict(list)
        for row in reader:
            groups[row.get("file", "")].append((float(row[rate_col]), float(row["psnr"])))
    if not groups:
        raise ValueError(f"{path}: no rows")
    return {name: RdCurve(pts) for name, pts in groups.items()}


def cmd_bdrate(args) -> int:
    anchor, test = read_curves(args.anchor), read_curves(args.test)
    if len(anchor) == 1 and len(test) == 1:
        pairs = {"": (next(iter(anchor.values())), next(iter(test.values())))}
    else:
        common = sorted(set(anchor) & set(test))
        if not common:
            raise ValueError("the two CSV files share no image")
        pairs = {name: (anchor[name], test[name]) for name in common}
    per_file = {name: bd_rate(a, t) for name, (a, t) in pairs.items()}
    if list(per_file) == [""]:
        _dump({"bd_rate": per_file[""]})
    else:
        _dump({"bd_rate": sum(per_file.values()) / len(per_file), "per_file": per_file})
    return EXIT_OK


def cmd_complexity(args) -> int:
    if (args.height is None) != (args.width is None):
        raise UsageError("--height and --width go together")
    report = count_macs(args.config, args.height, args.width)
    print(report.as_table(args.config))
    return EXIT_OK


def _encode_job(path: str, cfg: TrainConfig) -> dict:
    result = encode_image(read_image(path), cfg)
    return {
        "file": os.path.basename(path),
        "lambda": cfg.lam,
        "bpp_total": result.bpp,
        "bpp_latent": result.bpp_latent,
        "bpp_nn": result.bpp_nn,
        "psnr": result.psnr,
        "encode_seconds": result.seconds,
    }


def run_report(paths: list[str], lambdas: list[float], base: TrainConfig, jobs: int = 1) -> list[dict]:
    """Encode every (image, lambda) pair; rows ordered by file then lambda."""
    tasks = []
    for path in sorted(paths):
        for lam in lambdas:
            cfg = TrainConfig(**{**base.__dict__, "lam": lam})
            tasks.append((path, cfg))
    if jobs <= 1:
        return [_encode_job(p, c) for p, c in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_encode_job, p, c) for p, c in tasks]
        return [f.result() for f in futures]


def write_report(rows: list[dict], path: str) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _parse_lambdas(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad lambda list {text!r}") from None
    if not values:
        raise UsageError("empty lambda list")
    return values


def cmd_report(args) -> int:
    paths = [os.path.join(args.corpus, n) for n in os.listdir(args.corpus) if n.lower().endswith(".ppm")]
    if not paths:
        raise ValueError(f"no .ppm files in {args.corpus}")
    rows = run_report(paths, _parse_lambdas(args.lambdas), _train_config(args, 0.0), args.jobs)
    write_report(rows, args.out)
    return EXIT_OK


def _count(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {value}")
    return value


def _positive(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {value}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {value}")
    return value


def _add_training_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", choices=sorted(CONFIGS), default="main")
    p.add_argument("--iters1", type=_count, default=TrainConfig.phase1_iters, help="noise phase steps")
    p.add_argument("--iters2", type=_count, default=TrainConfig.phase2_iters, help="rounding phase steps")
    p.add_argument("--epsilon", type=_positive, default=TrainConfig.epsilon)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="overfit-codec", description="Overfitted neural image codec")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("encode", help="train and write a bitstream")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--recon", help="also write the decoded image here")
    _add_training_args(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="bitstream to PPM")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("metrics", help="PSNR between two PPM images")
    p.add_argument("--ref", required=True)
    p.add_argument("--dist", required=True)
    p.add_argument("--bitstream", help="report its rate in bpp as well")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("bdrate", help="BD-rate of test vs anchor RD curves")
    p.add_argument("--anchor", required=True)
    p.add_argument("--test", required=True)
    p.set_defaults(func=cmd_bdrate)

    p = sub.add_parser("complexity", help="MAC per decoded pixel breakdown")
    p.add_argument("--config", choices=sorted(CONFIGS), default="main")
    p.add_argument("--height", type=_positive_int)
    p.add_argument("--width", type=_positive_int)
    p.set_defaults(func=cmd_complexity)

    p = sub.add_parser("report", help="encode a corpus over a lambda grid, write CSV")
    p.add_argument("--corpus", required=True)
    p.add_argument("--lambdas", required=True, help="comma separated, e.g. 1e-4,1e-3")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    _add_training_args(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
