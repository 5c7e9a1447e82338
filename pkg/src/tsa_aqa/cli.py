"""Command-line interface.

Subcommands: synth-data, train, evaluate, segment, parse-dive, attn-dump,
gradcheck. Failures exit nonzero after printing one machine-readable JSON
error line to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import lexicon
from .data import (
    SynthConfig,
    generate_synthetic,
    load_features,
    read_dataset,
    split_dataset,
    write_dataset,
)
from .evaluation import WITH_DN, WITHOUT_DN
from .harness import RunConfig, evaluate, train
from .models import cut_safe, load_model


def _fail(kind: str, message: str) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return 2


def _resolve_dataset(doc: dict):
    """Dataset block of a config file: synthetic generator spec or data dir."""
    dataset = doc.get("dataset")
    if dataset is None:
        raise ValueError("config needs a 'dataset' block")
    if "data_dir" in dataset:
        instances = read_dataset(dataset["data_dir"])
    else:
        synth = SynthConfig(
            n_instances=int(dataset.get("n", 800)),
            t=int(dataset.get("t", 48)),
            d=int(dataset.get("d", 32)),
            p=int(dataset.get("p", 1)),
            sigma=float(dataset.get("sigma", 0.1)),
            seed=int(dataset.get("seed", 0)),
        )
        instances = generate_synthetic(synth)
    split_seed = int(dataset.get("split_seed", 0))
    fraction = float(dataset.get("train_fraction", 0.75))
    return split_dataset(instances, fraction, seed=split_seed)


def cmd_synth_data(args) -> int:
    cfg = SynthConfig(
        n_instances=args.n, t=args.t, d=args.d, p=args.p,
        sigma=args.sigma, seed=args.seed,
    )
    instances = generate_synthetic(cfg)
    write_dataset(instances, args.out_dir)
    print(f"wrote {len(instances)} instances to {args.out_dir}")
    return 0


def cmd_train(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        doc = json.load(fh)
    config = RunConfig.from_json(doc)
    train_set, test_set = _resolve_dataset(doc)
    ckpt = Path(args.out or doc.get("checkpoint", "model.tsaw"))
    model, log = train(config, train_set, checkpoint_path=ckpt, verbose=not args.quiet)
    log_path = ckpt.with_suffix(".trainlog.json")
    log.save(log_path)
    print(f"checkpoint: {ckpt}")
    print(f"train log:  {log_path}")
    if args.eval_after and test_set:
        report = evaluate(
            model, test_set, train_set, m=config.m_exemplars,
            dn_mode=config.dn_mode, seed=config.seed,
            use_gt_transitions=config.use_gt_transitions,
        )
        print("AIoU@0.5 AIoU@0.75      rho  R-l2x100")
        print(report.table_row())
    return 0


def cmd_evaluate(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        doc = json.load(fh)
    train_set, test_set = _resolve_dataset(doc)
    if not test_set:
        return _fail("EmptyTestSet", "dataset split produced no test instances")
    model = load_model(args.ckpt)
    report = evaluate(
        model, test_set, train_set, m=args.m,
        dn_mode=args.dn, seed=args.seed,
        use_gt_transitions=args.gt_transitions,
    )
    print("AIoU@0.5 AIoU@0.75      rho  R-l2x100")
    print(report.table_row())
    if args.json_out:
        Path(args.json_out).write_text(report.to_json(), encoding="utf-8")
        print(f"report: {args.json_out}")
    return 0


def cmd_segment(args) -> int:
    from .autodiff import no_grad
    from .segmentation import decode_transitions

    model = load_model(args.ckpt)
    if not hasattr(model, "probs_graph"):
        return _fail("NoSegmentation",
                     f"variant {model.variant} has no segmentation component")
    features = load_features(args.features)
    with no_grad():
        probs = model.probs_graph(features).data
    decoded = decode_transitions(probs)
    print("decoded transitions:", " ".join(map(str, decoded)))
    writer = csv.writer(sys.stdout)
    writer.writerow(["transition"] + [f"t{j + 1}" for j in range(probs.shape[1])])
    for k, row in enumerate(probs, start=1):
        writer.writerow([k] + [f"{p:.6f}" for p in row])
    return 0


def cmd_parse_dive(args) -> int:
    steps = lexicon.parse_dive_code(args.code)
    print(f"{args.code}: {len(steps)} steps")
    for i, s in enumerate(steps, start=1):
        print(f"  {i}. [{s.phase.value}] {s.name} (half turns: {s.half_turns})")
    return 0


def cmd_attn_dump(args) -> int:
    from .attention import prepare_exemplar_steps, prepare_query_steps
    from .autodiff.ops import attention_weights

    query_path, exemplar_path = args.pair.split(",")
    model = load_model(args.ckpt)
    if model.variant != "TSA":
        return _fail("NoAttention",
                     f"variant {model.variant} has no cross-attention decoder")
    query = load_features(query_path.strip())
    exemplar = load_features(exemplar_path.strip())
    q_cut = cut_safe(model.predict_transitions(query), query.t)
    z_cut = cut_safe(model.predict_transitions(exemplar), exemplar.t)
    q_steps = prepare_query_steps(query, q_cut, model.spec.l_step)
    z_steps = prepare_exemplar_steps(exemplar, z_cut, model.spec.l_step)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for idx, (q_tok, z_tok) in enumerate(zip(q_steps, z_steps), start=1):
        weights = attention_weights(q_tok, z_tok)
        path = out_dir / f"step{idx}_attention.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"kv{j + 1}" for j in range(weights.shape[1])])
            for row in weights:
                writer.writerow([f"{w:.6f}" for w in row])
        print(f"wrote {path}")
    return 0


def cmd_gradcheck(args) -> int:
    from .autodiff.gradcheck import KERNEL_CASES, check_kernel

    failures = 0
    for name in sorted(KERNEL_CASES):
        err = check_kernel(name, n_points=args.points)
        status = "ok" if err <= args.tolerance else "FAIL"
        if status == "FAIL":
            failures += 1
        print(f"{name:24s} max rel err {err:.3e}  {status}")
    if failures:
        return _fail("GradientCheckFailed", f"{failures} kernels above tolerance")
    print(f"all {len(KERNEL_CASES)} kernels within {args.tolerance:g}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsa-aqa",
        description="Procedure-aware action quality assessment at desk scale",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a synthetic dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=800)
    p.add_argument("--t", type=int, default=48)
    p.add_argument("--d", type=int, default=32)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_synth_data)

    p = sub.add_parser("train", help="train a model from a JSON run config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="checkpoint path (default from config)")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--eval-after", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--dn", choices=[WITH_DN, WITHOUT_DN], default=WITH_DN)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gt-transitions", action="store_true")
    p.add_argument("--json-out")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("segment", help="decode step transitions for one file")
    p.add_argument("--features", required=True)
    p.add_argument("--ckpt", required=True)
    p.set_defaults(fn=cmd_segment)

    p = sub.add_parser("parse-dive", help="parse a dive number")
    p.add_argument("code")
    p.set_defaults(fn=cmd_parse_dive)

    p = sub.add_parser("attn-dump", help="write per-step attention CSVs")
    p.add_argument("--pair", required=True, metavar="QUERY,EXEMPLAR")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out-dir", default="attention_dump")
    p.set_defaults(fn=cmd_attn_dump)

    p = sub.add_parser("gradcheck", help="finite-difference check of all kernels")
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(fn=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # noqa: BLE001 - single CLI error funnel
        return _fail(type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
