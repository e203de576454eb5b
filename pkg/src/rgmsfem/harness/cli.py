"""Command-line entry point: offline, online, sweep, timing, reference."""
import argparse
import logging
import sys
from pathlib import Path

from ..errors import ConfigError, RGMsFEMError
from . import outputs, pipeline
from .config import load_config

log = logging.getLogger("rgmsfem")


def parse_mu(text, M=None):
    """``"0.6"`` or ``"0.1,0.1"``; several parameters separated by ``/``."""
    try:
        mus = [[float(v) for v in part.split(",")] for part in text.split("/") if part.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse parameter list {text!r}") from None
    if not mus:
        raise ConfigError("empty parameter list")
    if M is not None and any(len(m) != M for m in mus):
        raise ConfigError(f"every parameter needs {M} components")
    return mus


def _offline(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.workers is not None:
        cfg["workers"] = args.workers
    out = Path(args.out or cfg["output_dir"])
    model = pipeline.run_offline(cfg)
    path = pipeline.save_model(model, out)
    outputs.write_manifest(out, cfg, [path.name])
    print(f"offline artifacts written to {path} (reduced dim {model.layout.dim}, "
          f"Lambda_* = {model.gap():.6g})")


def _online(args):
    model = pipeline.load_model(args.artifacts)
    mus = parse_mu(args.mu, model.coeff.M)
    kinds = None if args.predictor == "both" else [args.predictor]
    report = pipeline.run_online(model, mus, args.compare, args.l, kinds)
    out = Path(args.out or Path(args.artifacts) / "online")
    outputs.emit_outputs(report, out, model.mesh, model.config,
                         args.timings or model.config.get("record_timings", False))
    sys.stdout.write(outputs.error_csv(report.rows, True))


def _sweep(args):
    model = pipeline.load_model(args.artifacts)
    mu = parse_mu(args.mu, model.coeff.M)[0]
    lmax = min(args.lmax, model.l_max)
    rows = pipeline.sweep_basis(model, mu, range(1, lmax + 1))
    out = Path(args.out or Path(args.artifacts) / "sweep")
    out.mkdir(parents=True, exist_ok=True)
    text = outputs.table_csv(outputs.SWEEP_HEADER, rows)
    (out / "sweep.csv").write_text(text)
    own = [r for r in rows if r["method"] == pipeline.METHODS["gpc"]] or rows
    (out / "decay.pgm").write_text(outputs.pgm(
        outputs.decay_plot([r["l"] for r in own], [r["l2_rel"] for r in own])))
    sys.stdout.write(text)


def _timing(args):
    model = pipeline.load_model(args.artifacts)
    mus = parse_mu(args.mu, model.coeff.M) if args.mu else None
    ls = [l for l in (1, 3, 5, 7) if l <= model.l_max] if args.l is None else args.l
    rows = pipeline.compare_timing(model, mus, ls, args.reps)
    text = outputs.table_csv(outputs.TIMING_HEADER, rows)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "timing.csv").write_text(text)
    sys.stdout.write(text)


def _reference(args):
    cfg = load_config(args.config)
    mus = parse_mu(args.mu, cfg["M"]) if args.mu else None
    report, mesh, _, _ = pipeline.reference(cfg, mus, args.l)
    out = Path(args.out or cfg["output_dir"]) / "reference"
    outputs.emit_outputs(report, out, mesh, cfg)
    sys.stdout.write(outputs.error_csv(report.rows, True))


def build_parser():
    ap = argparse.ArgumentParser(prog="rgmsfem", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("offline", help="train predictors and reduced operators")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_offline)

    p = sub.add_parser("online", help="predictor solve at new parameters")
    p.add_argument("--artifacts", required=True)
    p.add_argument("--mu", required=True, help="e.g. 0.6 or 0.1,0.2 ; several separated by /")
    p.add_argument("--compare", action="store_true", help="also fine and GMsFEM solves")
    p.add_argument("--l", type=int)
    p.add_argument("--predictor", choices=["gpc", "gpr", "both"], default="both")
    p.add_argument("--timings", action="store_true", help="write timings into errors.csv")
    p.add_argument("--out")
    p.set_defaults(func=_online)

    p = sub.add_parser("sweep", help="errors against basis functions per coarse node")
    p.add_argument("--artifacts", required=True)
    p.add_argument("--lmax", type=int, required=True)
    p.add_argument("--mu", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_sweep)

    p = sub.add_parser("timing", help="online versus full GMsFEM wall time")
    p.add_argument("--artifacts", required=True)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--mu")
    p.add_argument("--l", type=int, nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=_timing)

    p = sub.add_parser("reference", help="fine and GMsFEM solves without training")
    p.add_argument("--config", required=True)
    p.add_argument("--mu")
    p.add_argument("--l", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_reference)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except RGMsFEMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
