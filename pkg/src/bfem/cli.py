"""Command-line front end: ``bfem fit|select|simulate|denoise|eval|repro``.

Exit status is 0 on success, 2 on a usage error (argparse) and 1 on a
runtime failure, in which case a one-line JSON object describing the error
is written to standard error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import io as bio
from .denoise import denoise_image, read_pgm, write_pgm
from .exceptions import BFEMError
from .inference import FitConfig, fit
from .metrics import ari, psnr
from .model import SPEC_CODES
from .selection import icl, select
from .simulate import gen_chang, gen_subspace


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _spec_code(text):
    if text not in SPEC_CODES:
        raise argparse.ArgumentTypeError(f"unknown model {text!r}; choose from {', '.join(SPEC_CODES)}")
    return text


def _spec_list(text):
    codes = [c.strip() for c in text.split(",") if c.strip()]
    if not codes:
        raise argparse.ArgumentTypeError("empty model list")
    for c in codes:
        _spec_code(c)
    return codes


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bfem", description="Bayesian Fisher-EM subspace clustering")
    sub = parser.add_subparsers(dest="command", required=True)

    def fit_options(p):
        p.add_argument("--data", required=True, help="CSV matrix, one observation per row")
        p.add_argument("--header", action="store_true", help="skip the first CSV row")
        p.add_argument("--fstep", choices=["odv", "svd"], default="odv")
        p.add_argument("--restarts", type=_positive_int, default=10)
        p.add_argument("--max-iter", type=_positive_int, default=100)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("fit", help="fit one model")
    fit_options(p)
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--d", type=_positive_int, default=None)
    p.add_argument("--model", type=_spec_code, default="Sk_B")
    p.add_argument("--output", default=None, help="model JSON file")
    p.add_argument("--labels", default=None, help="CSV of 1-based MAP labels")

    p = sub.add_parser("select", help="ICL grid search over K and submodels")
    fit_options(p)
    p.add_argument("--kmin", type=_positive_int, required=True)
    p.add_argument("--kmax", type=_positive_int, required=True)
    p.add_argument("--models", type=_spec_list, default=list(SPEC_CODES))
    p.add_argument("--out", default=None, help="selection table CSV")

    p = sub.add_parser("simulate", help="generate a benchmark dataset")
    p.add_argument("scenario", choices=["chang", "subspace"])
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--p", type=_positive_int, default=150)
    p.add_argument("--snr", type=float, default=None, help="dB; unit noise variance if omitted")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-data", required=True)
    p.add_argument("--out-labels", required=True)

    p = sub.add_parser("denoise", help="patch-based denoising of a PGM image")
    p.add_argument("--image", required=True)
    p.add_argument("--sigma", type=_positive_float, required=True)
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--patch", type=_positive_int, default=8)
    p.add_argument("--d", type=_positive_int, default=None)
    p.add_argument("--subsample", type=_positive_int, default=50000)
    p.add_argument("--restarts", type=_positive_int, default=10)
    p.add_argument("--max-iter", type=_positive_int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ref", default=None, help="clean PGM image for the PSNR report")
    p.add_argument("--output", required=True)

    p = sub.add_parser("eval", help="evaluation measures")
    ev = p.add_subparsers(dest="measure", required=True)
    q = ev.add_parser("ari")
    q.add_argument("--pred", required=True)
    q.add_argument("--truth", required=True)
    q.add_argument("--header", action="store_true")
    q = ev.add_parser("psnr")
    q.add_argument("--ref", required=True)
    q.add_argument("--test", required=True)

    p = sub.add_parser("repro", help="run the desk-scale simulation benchmarks")
    p.add_argument("--which", choices=["chang", "dimension", "snr", "selection", "all"], default="all")
    p.add_argument("--replicates", type=_positive_int, default=None, help="override replicate counts")
    p.add_argument("--restarts", type=_positive_int, default=10)
    return parser


def _cmd_fit(args) -> int:
    Y = bio.read_matrix(args.data, header=args.header)
    config = FitConfig(K=args.k, d=args.d, spec=args.model, fstep=args.fstep, restarts=args.restarts,
                       max_iter=args.max_iter, seed=args.seed)
    res = fit(Y, config)
    if args.output:
        bio.save_model(res, args.output)
    if args.labels:
        bio.write_labels(args.labels, res.partition + 1)
    summary = {
        "spec": res.spec.code,
        "K": res.K,
        "d": res.params.d,
        "elbo": res.elbo,
        "icl": icl(Y, res),
        "converged": res.converged,
        "n_iter": res.n_iter,
        "flags": res.flags,
    }
    print(json.dumps(summary))
    return 0


def _cmd_select(args) -> int:
    if args.kmin > args.kmax:
        raise ValueError("--kmin must not exceed --kmax")
    if args.kmin < 2:
        raise ValueError("--kmin must be at least 2")
    Y = bio.read_matrix(args.data, header=args.header)
    config = FitConfig(fstep=args.fstep, restarts=args.restarts, max_iter=args.max_iter, seed=args.seed)
    sel = select(Y, range(args.kmin, args.kmax + 1), args.models, config, keep_fits=False)
    if args.out:
        sel.to_csv(args.out)
    for row in sel.to_rows():
        print(f"K={row['K']} spec={row['spec']} gamma={row['gamma']} icl={row['icl']:.4f}")
    if sel.best is None:
        raise BFEMError("every grid cell failed")
    print(f"best: K={sel.best[0]} spec={sel.best[1]}")
    return 0


def _cmd_simulate(args) -> int:
    if args.scenario == "chang":
        sim = gen_chang(args.n, seed=args.seed)
    else:
        sim = gen_subspace(args.n, args.p, snr_db=args.snr, seed=args.seed)
    bio.write_matrix(args.out_data, sim.Y)
    bio.write_labels(args.out_labels, sim.Z)
    return 0


def _cmd_denoise(args) -> int:
    noisy = read_pgm(args.image)
    ref = read_pgm(args.ref) if args.ref else None
    config = FitConfig(K=args.k, spec="Sk_B", restarts=args.restarts, max_iter=args.max_iter, seed=args.seed)
    out, report = denoise_image(noisy, args.sigma, args.k, args.patch, config=config, subsample=args.subsample,
                                d=args.d, ref=ref, seed=args.seed)
    write_pgm(out, args.output)
    if ref is not None:
        print(f"psnr_noisy {report['psnr_noisy']:.4f}")
        print(f"psnr_denoised {report['psnr_denoised']:.4f}")
    return 0


def _cmd_eval(args) -> int:
    if args.measure == "ari":
        value = ari(bio.read_labels(args.pred, header=args.header), bio.read_labels(args.truth, header=args.header))
    else:
        value = psnr(read_pgm(args.ref).pixels, read_pgm(args.test).pixels)
    print(f"{value:.4f}")
    return 0


def _cmd_repro(args) -> int:
    from . import experiments as ex

    reps = args.replicates
    which = args.which
    if which in ("chang", "all"):
        r = ex.chang_experiment(replicates=reps or 20, restarts=args.restarts)
        print(f"chang      mean_ari={r['mean_ari']:.4f}  ({r['seconds']:.1f}s)")
    if which in ("dimension", "all"):
        for p, r in ex.dimension_experiment(replicates=reps or 10, restarts=args.restarts).items():
            print(f"dimension  p={p:<4d} mean_ari={r['mean_ari']:.4f}  ({r['seconds']:.1f}s)")
    if which in ("snr", "all"):
        r = ex.snr_experiment(0.0, replicates=reps or 10, restarts=args.restarts)
        print(f"snr        0dB mean_ari={r['mean_ari']:.4f}  ({r['seconds']:.1f}s)")
    if which in ("selection", "all"):
        r = ex.selection_experiment(replicates=reps or 20, restarts=args.restarts)
        print(f"selection  pair={r['rate_pair']:.2f} K={r['rate_K']:.2f}  ({r['seconds']:.1f}s)")
    return 0


_COMMANDS = {
    "fit": _cmd_fit,
    "select": _cmd_select,
    "simulate": _cmd_simulate,
    "denoise": _cmd_denoise,
    "eval": _cmd_eval,
    "repro": _cmd_repro,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (BFEMError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "command": args.command}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
