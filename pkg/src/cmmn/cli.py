"""Command line interface: ``cmmn fit | transform | bench | sweep``.

Every command prints its resolved configuration as one JSON document on
stdout so a run can be replayed exactly. The only time-dependent value is
``log.started``, which never reaches output files.

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import datetime
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import SyntheticSpec, Strategy, evaluate, generate, parse_target, sensitivity_sweep
from .errors import CmmnError
from .io import atomic_write_text, load_dataset, save_dataset
from .pipeline import CmmnModel, fit, transform
from .psd import WINDOWS, WelchConfig
from .spectral import EPS_FLOOR_REL, TargetSpec

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2

logger = logging.getLogger("cmmn")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def parse_cli_target(text: str) -> TargetSpec:
    """``barycenter``, ``whitening``, ``powerlaw[:a]`` or ``psd:<file.json>``."""
    if text.startswith("psd:"):
        path = Path(text[4:])
        return TargetSpec.explicit(np.asarray(json.loads(path.read_text()), dtype=np.float64))
    return parse_target(text)


def _int_list(text: str) -> list:
    return [int(v) for v in text.split(",") if v.strip()]


def _str_list(text: str) -> list:
    return [v.strip() for v in text.split(",") if v.strip()]


def _echo(command: str, config: dict) -> None:
    doc = {
        "command": command,
        "cmmn_version": __version__,
        "config": config,
        "log": {"started": datetime.datetime.now(datetime.timezone.utc).isoformat()},
    }
    print(json.dumps(doc, sort_keys=True))


def cmd_fit(args) -> int:
    target = parse_cli_target(args.target)
    config = WelchConfig(args.filter_size, args.window, args.overlap, args.center)
    domains = load_dataset(args.data)
    model, bank = fit(domains, target, config, args.eps_floor)
    atomic_write_text(args.out, model.to_json() + "\n")
    if args.save_filters:
        atomic_write_text(args.save_filters, bank.to_json() + "\n")
    _echo(
        "fit",
        {
            "data": str(args.data),
            "out": str(args.out),
            "save_filters": str(args.save_filters) if args.save_filters else None,
            "domains": sorted(domains),
            "target": target.to_dict(),
            "filter_size": config.filter_size,
            "window": config.window,
            "overlap_fraction": config.overlap_fraction,
            "center": config.center,
            "eps_floor": args.eps_floor,
        },
    )
    return EXIT_OK


def cmd_transform(args) -> int:
    model = CmmnModel.from_json(Path(args.model).read_text())
    domains = load_dataset(args.data)
    out = {k: transform(model, sig, args.mode) for k, sig in domains.items()}
    out_dir = Path(args.out)
    save_dataset(out_dir / "manifest.json", out, dtype="f64le")
    _echo(
        "transform",
        {
            "model": str(args.model),
            "data": str(args.data),
            "out": str(out_dir),
            "mode": args.mode,
            "domains": list(domains),
            "windows_per_domain": {
                k: sig.n_samples * model.welch_config.n_windows(sig.n_times) for k, sig in domains.items()
            },
        },
    )
    return EXIT_OK


def _synthetic_spec(args) -> SyntheticSpec:
    return SyntheticSpec(
        num_domains=args.domains,
        samples_per_domain_per_class=args.samples_per_class,
        n_classes=args.classes,
        n_times=args.length,
        n_channels=args.channels,
        shift_strength=args.shift_strength,
        seed=args.seed,
    )


def cmd_bench(args) -> int:
    spec = _synthetic_spec(args)
    strategies = [Strategy.parse(s) for s in _str_list(args.strategies)]
    data = generate(spec)
    result = evaluate(
        strategies, data, args.trials, args.seed, baseline=args.baseline, classifier=args.classifier
    )
    out_dir = Path(args.out_dir)
    atomic_write_text(out_dir / "bench.csv", result.to_csv())
    atomic_write_text(out_dir / "bench.json", result.summary_json() + "\n")
    _echo(
        "bench",
        {
            "synthetic": spec.to_dict(),
            "strategies": [s.name for s in strategies],
            "trials": args.trials,
            "seed": args.seed,
            "baseline": args.baseline,
            "classifier": args.classifier,
            "out_dir": str(out_dir),
        },
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = _synthetic_spec(args)
    sizes = _int_list(args.filter_sizes)
    targets = _str_list(args.strategies)
    for tg in targets:
        parse_target(tg)
    data = generate(spec)
    result = sensitivity_sweep(
        data, sizes, args.trials, args.seed, targets=targets, baseline=args.baseline, classifier=args.classifier
    )
    out_dir = Path(args.out_dir)
    atomic_write_text(out_dir / "sweep.csv", result.to_csv())
    atomic_write_text(out_dir / "sweep.json", result.summary_json() + "\n")
    _echo(
        "sweep",
        {
            "synthetic": spec.to_dict(),
            "filter_sizes": sizes,
            "targets": targets,
            "trials": args.trials,
            "seed": args.seed,
            "baseline": args.baseline,
            "classifier": args.classifier,
            "out_dir": str(out_dir),
        },
    )
    return EXIT_OK


def _add_synthetic_args(p) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--domains", type=int, default=20)
    p.add_argument("--samples-per-class", type=int, default=20)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--length", type=int, default=1024)
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--shift-strength", type=float, default=0.6)
    p.add_argument("--baseline", default="sample_zscore")
    p.add_argument("--classifier", choices=("logistic", "centroid"), default="logistic")
    p.add_argument("--out-dir", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cmmn", description="Convolutional Monge mapping normalization")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a normalizer on source domains")
    p.add_argument("--data", required=True, help="dataset manifest")
    p.add_argument("--filter-size", type=int, required=True)
    p.add_argument(
        "--target", default="barycenter", help="barycenter | whitening | powerlaw[:a] | psd:<file.json>"
    )
    p.add_argument("--window", choices=WINDOWS, default="rectangular")
    p.add_argument("--overlap", type=float, default=0.5)
    p.add_argument("--center", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--eps-floor", type=float, default=EPS_FLOOR_REL, help="relative PSD floor")
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--save-filters", help="also write the per-domain filter bank")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("transform", help="normalize a dataset with a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--mode", choices=("fft_same", "direct_same"), default="fft_same")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("bench", help="score normalization strategies on synthetic data")
    p.add_argument(
        "--strategies",
        default="none,sample_zscore,session_zscore,cmmn:128",
        help="comma list of none, sample_zscore, session_zscore, cmmn:F[:target]",
    )
    _add_synthetic_args(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="CMMN gain as a function of filter size")
    p.add_argument("--filter-sizes", default="1,8,32,64,128,256")
    p.add_argument("--strategies", default="barycenter", help="comma list of targets")
    _add_synthetic_args(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        return args.func(args)
    except (CmmnError, ValueError, KeyError, IndexError) as exc:
        print(f"cmmn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"cmmn {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
