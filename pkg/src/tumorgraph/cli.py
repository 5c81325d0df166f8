"""Command-line surface.

Subcommands: inspect, train, evaluate, predict, augment-preview,
weights export / weights import, gradcheck. Exit codes: 0 success,
1 usage error, 2 data error, 3 numeric failure.
"""

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, augment, backend, data, graph, metrics, report, train
from . import gradcheck as gradcheck_mod
from . import weights_io
from .errors import (
    EXIT_DATA,
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_USAGE,
    DataError,
    GraphError,
    NumericError,
    ShapeError,
    TumorGraphError,
    UsageError,
)

CONFIG_KEYS = {
    "input_size": 150,
    "hidden": 1024,
    "classes": 3,
    "dropout_rate": 0.5,
    "learning_rate": 3e-5,
    "batch_size": 32,
    "max_epochs": 30,
    "patience": 3,
    "min_delta": 0.0,
    "policy": "full_finetune",
    "seed": 0,
    "train_fraction": 0.8,
    "deterministic": True,
    "augment": "default",  # "default" -> AugmentConfig(); null -> disabled
}

AUGMENT_KEYS = (
    "rotation_max", "zoom_range", "width_shift", "height_shift",
    "shear_max", "horizontal_flip", "fill", "fill_value",
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_config(path):
    """Resolve a train-config JSON against the documented defaults."""
    resolved = dict(CONFIG_KEYS)
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise UsageError(f"config {path} must be a JSON object")
        unknown = set(raw) - set(CONFIG_KEYS)
        if unknown:
            raise UsageError(f"config {path} has unknown keys: {', '.join(sorted(unknown))}")
        resolved.update(raw)
    return resolved


def _augment_config(value):
    if value is None:
        return None
    if value == "default":
        return augment.AugmentConfig()
    if not isinstance(value, dict):
        raise UsageError("config key 'augment' must be an object or null")
    unknown = set(value) - set(AUGMENT_KEYS)
    if unknown:
        raise UsageError(f"augment config has unknown keys: {', '.join(sorted(unknown))}")
    try:
        return augment.AugmentConfig(**value)
    except ValueError as exc:
        raise UsageError(f"bad augment config: {exc}") from None


def _graph_meta(input_size, hidden, classes, dropout_rate):
    return {
        "input_size": list(input_size) if not isinstance(input_size, int) else [input_size, input_size],
        "hidden": hidden,
        "classes": classes,
        "dropout_rate": dropout_rate,
    }


def _model_from_meta(meta, fallback_input_size=None):
    if "input_size" in meta:
        h, w = meta["input_size"]
    elif fallback_input_size is not None:
        h = w = int(fallback_input_size)
    else:
        raise UsageError(
            "weight file carries no graph metadata; pass --input-size explicitly"
        )
    return graph.build_model(
        (int(h), int(w)),
        hidden=int(meta.get("hidden", 1024)),
        dropout_rate=float(meta.get("dropout_rate", 0.5)),
        classes=int(meta.get("classes", 3)),
    )


def _cmd_inspect(args):
    g = graph.build_model(args.input_size, hidden=args.hidden,
                          dropout_rate=args.dropout_rate, classes=args.classes)
    rep = graph.param_report(g, args.policy)
    print(f"tumorgraph {__version__} (kernel backend: {backend.name()})")
    print(f"input: {g.input_shape[0]}x{g.input_shape[1]}x{g.input_shape[2]}")
    print()
    print(f"{'layer':<12} {'kind':<10} {'output':<16} {'params':>12}  inputs")
    shapes = g.output_shapes
    counts = {name: t for name, t, _ in rep.per_layer}
    for layer in g.layers:
        shape = "x".join(str(s) for s in shapes[layer.name])
        n = counts.get(layer.name, 0)
        print(f"{layer.name:<12} {layer.kind:<10} {shape:<16} {n:>12,}  {','.join(layer.inputs)}")
    print()
    print("endpoints:")
    for name, layer_name in g.endpoint_items:
        shape = "x".join(str(s) for s in shapes[layer_name])
        print(f"  {name:<14} -> {layer_name:<10} {shape}")
    print()
    census = g.census()
    print("layer census:", ", ".join(f"{k}={v}" for k, v in sorted(census.items())),
          f"(total {sum(census.values())})")
    print()
    print(f"Total params:         {rep.total:,}")
    print(f"Trainable params:     {rep.trainable:,}  (policy: {args.policy})")
    print(f"Non-trainable params: {rep.non_trainable:,}")
    return EXIT_OK


def _resolve_splits(manifest, split_choice, train_fraction, seed):
    ds = data.load_manifest(manifest)
    train_ds, val_ds = data.split(ds, train_fraction=train_fraction, seed=seed)
    if split_choice == "train":
        return ds, train_ds
    if split_choice == "val":
        return ds, val_ds
    return ds, ds


def _cmd_train(args):
    cfg_raw = _load_config(args.config)
    aug_cfg = _augment_config(cfg_raw["augment"])
    if cfg_raw["classes"] != 3:
        raise UsageError("training data has exactly 3 classes; set classes to 3")
    cfg = train.TrainConfig(
        learning_rate=float(cfg_raw["learning_rate"]),
        batch_size=int(cfg_raw["batch_size"]),
        max_epochs=int(cfg_raw["max_epochs"]),
        patience=int(cfg_raw["patience"]),
        min_delta=float(cfg_raw["min_delta"]),
        policy=cfg_raw["policy"],
        seed=int(cfg_raw["seed"]),
        augment=aug_cfg,
        deterministic=bool(cfg_raw["deterministic"]),
    )
    input_size = int(cfg_raw["input_size"])
    g = graph.build_model(input_size, hidden=int(cfg_raw["hidden"]),
                          dropout_rate=float(cfg_raw["dropout_rate"]),
                          classes=3)

    ds = data.load_manifest(args.manifest)
    print(f"loaded manifest: {ds.summary()}")
    train_ds, val_ds = data.split(ds, train_fraction=float(cfg_raw["train_fraction"]),
                                  seed=cfg.seed)
    split_summary = (f"split: train {len(train_ds)} ({train_ds.summary()}), "
                     f"val {len(val_ds)} ({val_ds.summary()})")
    print(split_summary)

    if args.weights:
        store = weights_io.load_weights(g, args.weights)
        init_desc = f"loaded from {args.weights}"
    else:
        store = graph.init_random(g, seed=cfg.seed)
        init_desc = f"random (glorot, seed {cfg.seed})"

    size = (input_size, input_size)
    train_samples = data.to_samples(train_ds, size)
    val_samples = data.to_samples(val_ds, size)

    history, store = train.fit(g, store, train_samples, val_samples, cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    weights_path = out / "weights.tgw"
    weights_io.export_weights(
        store, weights_path,
        meta=_graph_meta(input_size, int(cfg_raw["hidden"]), 3, float(cfg_raw["dropout_rate"])),
    )

    loss, final, cm = train.evaluate_samples(g, store, val_samples, cfg.batch_size)
    bundle = report.ReportBundle(history=tuple(history), final=final, confusion=cm)
    paths = report.emit_report(bundle, out)

    adam_defaults = train.AdamState()
    settings = dict(cfg_raw)
    settings["augment"] = "disabled" if aug_cfg is None else asdict(aug_cfg)
    settings["initial_weights"] = init_desc
    settings["kernel_backend"] = backend.name()
    settings["adam_beta1"] = adam_defaults.beta1
    settings["adam_beta2"] = adam_defaults.beta2
    settings["adam_eps"] = adam_defaults.eps
    settings["loss_probability_clamp"] = train.PROB_CLAMP
    settings["early_stop_monitor"] = "val_loss"
    report.write_run_report(out / "run_report.txt", settings, ds.summary(), split_summary, history)

    print(f"trained {len(history)} epoch(s); final val loss {loss:.4f}, "
          f"accuracy {final.accuracy:.4f}")
    print(f"wrote {weights_path}, {paths['history']}, {paths['final_metrics']}, "
          f"{paths['confusion']}, {out / 'run_report.txt'}")
    return EXIT_OK


def _cmd_evaluate(args):
    tensors, meta = weights_io.read_weight_file(args.weights)
    g = _model_from_meta(meta, args.input_size)
    store = weights_io.store_from_tensors(g, tensors)
    ds, chosen = _resolve_splits(args.manifest, args.split, args.train_fraction, args.seed)
    print(f"loaded manifest: {ds.summary()}")
    print(f"evaluating split: {args.split} ({len(chosen)} samples)")
    h, w, _ = g.input_shape
    samples = data.to_samples(chosen, (h, w))
    loss, record, cm = train.evaluate_samples(g, store, samples, args.batch_size)
    payload = record.to_json_dict()
    payload["loss"] = loss
    text = json.dumps(payload, sort_keys=True, indent=2)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_predict(args):
    tensors, meta = weights_io.read_weight_file(args.weights)
    g = _model_from_meta(meta, args.input_size)
    store = weights_io.store_from_tensors(g, tensors)
    h, w, _ = g.input_shape
    plane = data.normalized_plane(Path(args.image), (h, w))
    probs = train.predict_probabilities(g, store, plane[None, :, :])[0]
    winner = data.CLASSES[int(np.argmax(probs))]
    print(f"prediction: {winner}")
    for name, p in zip(data.CLASSES, probs):
        print(f"  {name:<12} {p:.6f}")
    return EXIT_OK


def _cmd_augment_preview(args):
    from PIL import Image

    cfg_raw = _load_config(args.config)
    aug_cfg = _augment_config(cfg_raw["augment"])
    if aug_cfg is None:
        raise UsageError("augment-preview needs an augment config (got null)")
    ds = data.load_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["filename source theta zoom tx ty shear flip"]
    count = 0
    for i in range(args.n):
        entry = ds.entries[i % len(ds.entries)]
        raw, _ = data.decode_image(entry.path)
        rng = augment.stream_rng(args.seed, 0, i)
        params = augment.sample_params(aug_cfg, raw.shape, rng)
        warped = augment.apply_affine(raw, params, aug_cfg)
        name = f"{i:05d}_{entry.path.stem}.png"
        Image.fromarray(warped).save(out / name)
        lines.append(
            f"{name} {entry.path.name} {params.theta:.4f} {params.zoom:.4f} "
            f"{params.tx:.4f} {params.ty:.4f} {params.shear:.4f} {int(params.flip)}"
        )
        count += 1
    (out / "params.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {count} augmented images and params.txt to {out}")
    return EXIT_OK


def _cmd_weights_export(args):
    g = graph.build_model(args.input_size, hidden=args.hidden,
                          dropout_rate=args.dropout_rate, classes=args.classes)
    store = graph.init_random(g, seed=args.seed)
    weights_io.export_weights(
        store, args.out,
        meta=_graph_meta(args.input_size, args.hidden, args.classes, args.dropout_rate),
    )
    rep = graph.param_report(g)
    print(f"wrote {args.out}: {len(store)} tensors, {rep.total:,} parameters "
          f"(random init, seed {args.seed})")
    return EXIT_OK


def _cmd_weights_import(args):
    tensors, meta = weights_io.read_weight_file(args.weights)
    g = _model_from_meta(meta, args.input_size)
    store = weights_io.store_from_tensors(g, tensors)
    rep = graph.param_report(g)
    print(f"{args.weights}: {len(store)} tensors, {rep.total:,} parameters, "
          f"validated against input {g.input_shape[0]}x{g.input_shape[1]}")
    if args.out:
        weights_io.export_weights(store, args.out, meta=meta)
        print(f"re-exported to {args.out}")
    return EXIT_OK


def _cmd_gradcheck(args):
    print(f"gradient checks: {args.shapes} random shapes per op, seed {args.seed}")
    results = gradcheck_mod.run_suite(shapes_per_op=args.shapes, seed=args.seed,
                                      report=print)
    worst = max(results.values())
    if worst > gradcheck_mod.TOLERANCE:
        raise NumericError(f"gradient check failed: worst relative error {worst:.3e}")
    print(f"all {len(results)} ops within tolerance {gradcheck_mod.TOLERANCE:g}")
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="tumorgraph",
                     description="Differentiable CNN engine for brain-tumor MRI classification")
    parser.add_argument("--version", action="version", version=f"tumorgraph {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inspect", help="print the layer table and parameter report")
    p.add_argument("--input-size", type=int, default=150)
    p.add_argument("--hidden", type=int, default=1024)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--dropout-rate", type=float, default=0.5)
    p.add_argument("--policy", choices=graph.TRAINABLE_POLICIES, default="full_finetune")
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("train", help="fit the model from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", help="JSON config (defaults used when omitted)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--weights", help="initial weights file (default: random init)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="metrics for a trained model on a split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--split", choices=("train", "val", "all"), default="val")
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0, help="split seed used during training")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--input-size", type=int, help="override when weights lack metadata")
    p.add_argument("--out", help="also write the metrics JSON here")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("predict", help="classify one image")
    p.add_argument("--image", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--input-size", type=int, help="override when weights lack metadata")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("augment-preview", help="export augmented samples plus their params")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", help="JSON config; its 'augment' section is used")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_augment_preview)

    p = sub.add_parser("weights", help="weight-file utilities")
    wsub = p.add_subparsers(dest="weights_command", required=True)

    w = wsub.add_parser("export", help="write a randomly initialized weight file")
    w.add_argument("--out", required=True)
    w.add_argument("--input-size", type=int, default=150)
    w.add_argument("--hidden", type=int, default=1024)
    w.add_argument("--classes", type=int, default=3)
    w.add_argument("--dropout-rate", type=float, default=0.5)
    w.add_argument("--seed", type=int, default=0)
    w.set_defaults(func=_cmd_weights_export)

    w = wsub.add_parser("import", help="load, validate, and optionally re-export")
    w.add_argument("--weights", required=True)
    w.add_argument("--input-size", type=int, help="override when weights lack metadata")
    w.add_argument("--out", help="re-export destination (round-trip check)")
    w.set_defaults(func=_cmd_weights_import)

    p = sub.add_parser("gradcheck", help="finite-difference checks for every primitive")
    p.add_argument("--shapes", type=int, default=20, help="random shapes per op")
    p.add_argument("--seed", type=int, default=2024)
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print("run 'tumorgraph --help' for usage", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, GraphError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except TumorGraphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
