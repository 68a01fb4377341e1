"""
Command-line entry point::

    clgnet gen-data  --out DIR --count N --size H W --accel R --center-frac F --seed S [--force]
    clgnet train     --data DIR --out DIR --preset {tiny,paper} --steps N --alpha A --k K --seed S
    clgnet eval      --data DIR --ckpt FILE --out DIR [--emit-images]
    clgnet selfcheck

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure,
4 selfcheck failure.  ``CLGNET_THREADS`` caps the BLAS thread pool.
"""

import argparse
import datetime as _dt
import hashlib
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .dataset import generate_dataset, load_split
from .errors import ConfigurationError, ContractError, IntegrityError, NumericError
from .layers import NetConfig
from .selfcheck import run_selfcheck
from .trainer import TrainConfig, evaluate, train, write_eval_csv, write_log_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC, EXIT_SELFCHECK = 0, 1, 2, 3, 4

PRESETS = {
    # lr for the tiny preset: see README, desk-scale budget
    "tiny": dict(config=NetConfig.tiny(), batch_size=10, lr=5e-3),
    "paper": dict(config=NetConfig.paper(), batch_size=10, lr=1e-4),
}

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _hash_inputs(paths) -> str:
    h = hashlib.sha256()
    for p in sorted(Path(p) for p in paths):
        files = sorted(p.rglob("*")) if p.is_dir() else [p]
        for f in files:
            # manifests carry timestamps; only content files feed the hash
            if f.is_file() and f.suffix != ".json":
                h.update(str(f.relative_to(p.parent)).encode())
                h.update(f.read_bytes())
    return h.hexdigest()


def run_record(command: str, args: argparse.Namespace, inputs, outputs, started) -> dict:
    config = {k: v for k, v in vars(args).items() if k != "func"}
    return {
        "command": command,
        "config": config,
        "input_hash": _hash_inputs(inputs),
        "started": started,
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "outputs": [str(o) for o in outputs],
    }


def write_run_manifest(out_dir, command: str, args: argparse.Namespace, inputs, outputs, started) -> Path:
    path = Path(out_dir) / "run_manifest.json"
    record = run_record(command, args, inputs, outputs, started)
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    return path


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def cmd_gen_data(args) -> int:
    started = _now()
    H, W = args.size
    if H % 2 or W % 2:
        raise ConfigurationError(f"--size must be even, got {H} {W}")
    generate_dataset(args.out, args.count, H, W, args.accel, args.center_frac, args.seed, force=args.force)
    out = Path(args.out)
    outputs = sorted(str(p.relative_to(out)) for p in out.rglob("*.clgt")) + ["manifest.json"]
    # the dataset manifest doubles as the run manifest: one manifest per command
    path = out / "manifest.json"
    manifest = json.loads(path.read_text())
    manifest["run"] = run_record("gen-data", args, [], outputs, started)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {args.count} pairs to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    started = _now()
    data = Path(args.data)
    if not (data / "manifest.json").is_file():
        raise ContractError(f"dataset not found: {data}")
    pairs = load_split(data, "train")
    if not pairs:
        raise ContractError(f"no training pairs in {data}")
    preset = PRESETS[args.preset]
    batch = args.batch_size or min(preset["batch_size"], len(pairs))
    tcfg = TrainConfig(
        batch_size=batch, steps=args.steps, alpha=args.alpha, k=args.k,
        lr=args.lr if args.lr is not None else preset["lr"], seed=args.seed,
    )
    model_seed = args.seed if args.model_seed is None else args.model_seed
    res = train(preset["config"], tcfg, pairs, model_seed=model_seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.clgc", res.params, res.state, step=args.steps,
                    extra={"train": vars(tcfg), "preset": args.preset})
    write_log_csv(out / "loss.csv", res.log)
    write_run_manifest(out, "train", args, [data], ["checkpoint.clgc", "loss.csv"], started)
    last = res.log[-1]
    print(f"step {last['step']}: l1 {last['l1']:.6f} contrastive {last['contrastive']:.6f} total {last['total']:.6f}")
    return EXIT_OK


def _triptych(inp, out, gt) -> np.ndarray:
    tiles = [np.clip(np.asarray(a).reshape(gt.shape[-2:]), 0.0, 1.0) for a in (inp, out, gt)]
    return np.round(np.concatenate(tiles, axis=1) * 255.0).astype(np.uint8)


def cmd_eval(args) -> int:
    started = _now()
    data = Path(args.data)
    if not (data / "manifest.json").is_file():
        raise ContractError(f"dataset not found: {data}")
    params, _, _ = load_checkpoint(args.ckpt)
    pairs = load_split(data, args.split)
    if not pairs:
        raise ContractError(f"no {args.split} pairs in {data}")
    report = evaluate(params, pairs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_eval_csv(out / "eval.csv", report)
    outputs = ["eval.csv"]
    if args.emit_images:
        from PIL import Image

        (out / "images").mkdir(exist_ok=True)
        for i, pair in enumerate(pairs):
            img = _triptych(pair.input.data, report["outputs"][i], pair.gt.data)
            name = f"images/{i}.png"
            Image.fromarray(img, mode="L").save(out / name)
            outputs.append(name)
    write_run_manifest(out, "eval", args, [data, Path(args.ckpt)], outputs, started)
    m = report["mean"]
    print(f"model: nmse {m['nmse_model']:.5f} psnr {m['psnr_model']:.3f} ssim {m['ssim_model']:.4f}")
    print(f"zf:    nmse {m['nmse_zf']:.5f} psnr {m['psnr_zf']:.3f} ssim {m['ssim_zf']:.4f}")
    return EXIT_OK


def cmd_selfcheck(args) -> int:
    started = _now()
    results = run_selfcheck(seed=args.seed, corrupt_fft=args.corrupt_fft_norm)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        rows = [{"suite": n, "pass": ok, "detail": d} for n, ok, d in results]
        (out / "selfcheck.json").write_text(json.dumps(rows, indent=2) + "\n")
        write_run_manifest(out, "selfcheck", args, [], ["selfcheck.json"], started)
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_SELFCHECK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="clgnet", description="CLGNet MRI reconstruction at desk scale")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="simulate undersampled phantom pairs")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--size", type=int, nargs=2, metavar=("H", "W"), default=(64, 64))
    g.add_argument("--accel", type=int, default=4)
    g.add_argument("--center-frac", type=float, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--force", action="store_true")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model on a generated dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--preset", choices=sorted(PRESETS), default="tiny")
    t.add_argument("--steps", type=int, default=2000)
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--k", type=int, default=6)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--model-seed", type=int, default=None)
    t.add_argument("--batch-size", type=int, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint against zero-filling")
    e.add_argument("--data", required=True)
    e.add_argument("--ckpt", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--split", default="val", choices=("train", "val"))
    e.add_argument("--emit-images", action="store_true")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("selfcheck", help="run the oracle suites")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=None, help="also write a report and manifest here")
    s.add_argument("--corrupt-fft-norm", action="store_true", help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_selfcheck)
    return p


def _thread_limit():
    n = os.environ.get("CLGNET_THREADS")
    if not n:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(n))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "center_frac", "unset") is None:
        args.center_frac = {4: 0.08, 8: 0.04}.get(args.accel, 0.08)
    try:
        with _thread_limit():
            return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ContractError, IntegrityError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
