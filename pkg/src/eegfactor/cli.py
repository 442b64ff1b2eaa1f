"""Command-line surface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

import argparse
import json
import sys
from pathlib import Path

from . import experiments, nets, trainer
from .data import DatasetFormatError, SynthConfig, load_dataset, save_dataset, synthesize_sparse_dataset
from .gradcheck import op_gradcheck_suite

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class UsageError(Exception):
    pass


def _add_net_args(p):
    p.add_argument("--feature-maps", type=int, default=40)
    p.add_argument("--temporal-kernel", type=int, default=48)
    p.add_argument("--pool-kernel", type=int, default=68)
    p.add_argument("--pool-stride", type=int, default=14)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--hidden", default="2560,1280,640", help="classifier/discriminator hidden widths")


def _add_train_args(p):
    p.add_argument("--epochs", type=int, default=400)
    p.add_argument("--checkpoint-after", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--crop-window", type=int, default=0, help="0 = full trial")
    p.add_argument("--crop-stride", type=int, default=0, help="0 = 100 ms")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d-steps", type=int, default=1)
    p.add_argument("--average-logits", action="store_true")


def _build_parser():
    p = _Parser(prog="eegfactor", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="write a synthetic sparse-condition dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--classes", type=int, default=6)
    sp.add_argument("--trials-per-class", type=int, default=50)
    sp.add_argument("--n-resting", type=int, default=50)
    sp.add_argument("--channels", type=int, default=24)
    sp.add_argument("--samples", type=int, default=997)
    sp.add_argument("--rate", type=float, default=250.0)
    sp.add_argument("--common-amplitude", type=float, default=1.0)
    sp.add_argument("--alpha", type=float, default=0.3)
    sp.add_argument("--noise-std", type=float, default=0.5)

    tp = sub.add_parser("train", help="one 5-fold cross-validated training run")
    tp.add_argument("--data", required=True)
    tp.add_argument("--out", required=True)
    tp.add_argument("--mode", choices=trainer.MODES, default="both")
    _add_net_args(tp)
    _add_train_args(tp)

    ap = sub.add_parser("ablate", help="run all three ablation arms")
    ap.add_argument("--data", required=True)
    ap.add_argument("--out", required=True)
    _add_net_args(ap)
    _add_train_args(ap)

    wp = sub.add_parser("sweep", help="lambda sweep, one CV run per value")
    wp.add_argument("--data", required=True)
    wp.add_argument("--out", required=True)
    wp.add_argument("--lambdas", default="0,0.5,1")
    _add_net_args(wp)
    _add_train_args(wp)

    gp = sub.add_parser("gradcheck", help="finite-difference verification of all ops")
    gp.add_argument("--seed", type=int, default=0)
    gp.add_argument("--tol", type=float, default=1e-4)

    ep = sub.add_parser("export", help="dump feature matrices to CSV")
    ep.add_argument("--checkpoint", required=True)
    ep.add_argument("--data", required=True)
    ep.add_argument("--out", required=True)
    ep.add_argument("--sources", default="z_c,z_s")
    _add_train_args(ep)

    rp = sub.add_parser("report", help="render a CVReport JSON as a text table")
    rp.add_argument("--report", required=True)
    return p


def _net_config(args, ds, window):
    return nets.NetConfig(
        n_eeg_channels=ds.n_channels,
        n_timesamples=window,
        n_classes=ds.n_classes,
        n_feature_maps=args.feature_maps,
        temporal_kernel=args.temporal_kernel,
        spatial_kernel=ds.n_channels,
        pool_kernel=args.pool_kernel,
        pool_stride=args.pool_stride,
        dropout_p=args.dropout,
        hidden_sizes=tuple(int(w) for w in args.hidden.split(",")),
    )


def _train_config(args, ds):
    return trainer.TrainConfig(
        epochs=args.epochs,
        checkpoint_after_epoch=args.checkpoint_after,
        lr=args.lr,
        weight_decay=args.weight_decay,
        lam=args.lam,
        batch_size=args.batch_size,
        crop_window_samples=args.crop_window,
        crop_stride_samples=args.crop_stride,
        sample_rate_hz=ds.sample_rate_hz,
        seed=args.seed,
        d_steps_per_batch=args.d_steps,
        average_logits=args.average_logits,
    )


def _run(args):
    if args.command == "synth":
        cfg = SynthConfig(
            n_classes=args.classes,
            trials_per_class=args.trials_per_class,
            n_resting=args.n_resting,
            n_channels=args.channels,
            trial_samples=args.samples,
            sample_rate_hz=args.rate,
            common_amplitude=args.common_amplitude,
            specific_amplitude=args.alpha,
            noise_std=args.noise_std,
            seed=args.seed,
        )
        ds = synthesize_sparse_dataset(cfg)
        save_dataset(ds, args.out)
        print(f"wrote {len(ds.trials)} task + {len(ds.resting)} resting trials to {args.out}")
        return EXIT_OK

    if args.command == "gradcheck":
        results = op_gradcheck_suite(seed=args.seed, tol=args.tol)
        ok = True
        for name, err in results.items():
            status = "ok" if err <= args.tol else "FAIL"
            print(f"{name:<18} max_rel_err {err:.3e}  {status}")
            ok &= err <= args.tol
        return EXIT_OK if ok else EXIT_NUMERIC

    if args.command == "report":
        d = json.loads(Path(args.report).read_text())
        sys.stdout.write(experiments.render_report(d))
        return EXIT_OK

    ds = load_dataset(args.data)
    window = args.crop_window if args.crop_window > 0 else ds.trial_samples
    tcfg = _train_config(args, ds)

    if args.command == "export":
        model = nets.load_checkpoint(args.checkpoint)
        sources = [s.strip() for s in args.sources.split(",") if s.strip()]
        n_rows, _ = experiments.export_features(model, ds, sources, args.out, tcfg)
        print(f"wrote {n_rows} feature rows to {args.out}")
        return EXIT_OK

    ncfg = _net_config(args, ds, window)
    if args.command == "train":
        report = trainer.train_cv(ds, ncfg, tcfg, args.out, mode=args.mode)
        sys.stdout.write(experiments.render_report(report.to_dict()))
        return EXIT_OK

    if args.command == "ablate":
        reports = experiments.run_ablation(ds, ncfg, tcfg, args.out)
        for mode, rep in reports.items():
            sys.stdout.write(experiments.render_report(rep.to_dict()))
        return EXIT_OK

    if args.command == "sweep":
        lambdas = [float(v) for v in args.lambdas.split(",")]
        reports = experiments.lambda_sweep(ds, ncfg, tcfg, lambdas, args.out)
        for rep in reports:
            sys.stdout.write(experiments.render_report(rep.to_dict()))
        return EXIT_OK

    raise UsageError(f"unknown command {args.command!r}")


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _run(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError,) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DatasetFormatError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except FloatingPointError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
