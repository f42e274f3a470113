"""Command-line entry point.

Subcommands: validate, gen-data, train, infer, eval, bench, verify.
Outputs are plain text with fixed 6-decimal score formatting so seeded
runs produce byte-identical transcripts.

Exit codes: 0 ok, 1 validation, 2 I/O, 3 numeric, 4 malformed input,
5 property violation.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .baseline import flat_forward, flat_train, flatten_param_count, init_flat_params
from .checkpoint import CheckpointError, load_model, save_model
from .data import (
    DatasetError,
    SyntheticConfig,
    evaluate,
    generate_synthetic,
    load_dataset,
    save_dataset,
)
from .hierarchy import (
    CapExceededError,
    HierarchyError,
    HierarchySpec,
    build_masks,
    count_traces,
    flat_id_to_trace,
    format_trace,
    parse_hierarchy,
)
from .inference import (
    MalformedMaskError,
    PosteriorsError,
    brute_force_map,
    check_theorems,
    downpour,
    posteriors_from_text,
    random_instance,
)
from .network import (
    ModelParams,
    TrainConfig,
    TrainingDivergedError,
    forward,
    hinet_param_count,
    init_params,
    predict_trace,
    train,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_NUMERIC = 3
EXIT_MALFORMED = 4
EXIT_PROPERTY = 5


class ConfigError(ValueError):
    """Malformed key=value config file."""


class PropertyViolation(RuntimeError):
    """A verified property failed; details already printed."""


def _read_config(path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}: line {lineno}: expected key = value")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _resolve(args, key: str, default, cast):
    """Flag value if given, else config-file value, else default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    cfg = getattr(args, "_config_values", {})
    if key in cfg:
        try:
            return cast(cfg[key])
        except ValueError:
            raise ConfigError(f"config key {key!r}: bad value {cfg[key]!r}") from None
    return default


def _load_hierarchy(path) -> HierarchySpec:
    with open(path, "r", encoding="utf-8") as f:
        return parse_hierarchy(f.read())


def _train_config(args) -> TrainConfig:
    try:
        return TrainConfig(
            learning_rate=_resolve(args, "lr", 0.5, float),
            epochs=_resolve(args, "epochs", 50, int),
            batch_size=_resolve(args, "batch_size", 16, int),
            seed=_resolve(args, "seed", 0, int),
            init_scale=_resolve(args, "init_scale", 1.0, float),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_validate(args) -> int:
    spec = _load_hierarchy(args.hierarchy)
    print(f"kind: {spec.kind.value}")
    print(f"height: {spec.height}")
    print("level sizes: " + " ".join(str(s) for s in spec.level_sizes))
    print(f"edges: {len(spec.edges)}")
    print(f"traces: {count_traces(spec)}")
    return EXIT_OK


def cmd_gen_data(args) -> int:
    spec = _load_hierarchy(args.hierarchy)
    config = SyntheticConfig(
        samples_per_trace=_resolve(args, "samples_per_trace", 10, int),
        cluster_spread=_resolve(args, "spread", 0.1, float),
        d_in=_resolve(args, "d_in", 16, int),
        seed=_resolve(args, "seed", 0, int),
    )
    dataset = generate_synthetic(spec, config)
    save_dataset(dataset, args.out)
    print(
        f"wrote {args.out}: {len(dataset)} samples, "
        f"{count_traces(spec)} traces, d_in={config.d_in}"
    )
    return EXIT_OK


def cmd_train(args) -> int:
    spec = _load_hierarchy(args.hierarchy)
    dataset = load_dataset(args.dataset, spec)
    config = _train_config(args)
    k = _resolve(args, "k", 32, int)
    model_kind = _resolve(args, "model", "hinet", str)
    if model_kind not in ("hinet", "flatten"):
        raise ConfigError(f"unknown model kind {model_kind!r}")

    if model_kind == "flatten":
        n = max(spec.level_sizes)
        print(
            f"warning: flatten output layer is order k*n^h = "
            f"{flatten_param_count(k, n, spec.height):,} weights vs "
            f"hinet k*n + h*n^2 = {hinet_param_count(k, n, spec.height):,} "
            f"(n={n}, h={spec.height})",
            file=sys.stderr,
        )
        params = init_flat_params(spec, dataset.d_in, k, config)
        params, history = flat_train(params, dataset, config)
    else:
        params = init_params(spec, dataset.d_in, k, config)
        params, history = train(params, dataset, config)
    for i, loss in enumerate(history, start=1):
        print(f"epoch {i} loss {loss:.6f}")
    if args.out:
        save_model(args.out, spec, params)
        print(f"wrote {args.out}")
    return EXIT_OK


def _parse_features(text: str, d_in: int) -> np.ndarray:
    try:
        values = [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise DatasetError("bad feature value in --features") from None
    if len(values) != d_in:
        raise DatasetError(f"expected {d_in} features, got {len(values)}")
    return np.asarray(values)


def cmd_infer(args) -> int:
    spec = _load_hierarchy(args.hierarchy)
    masks = build_masks(spec)

    if args.posteriors:
        with open(args.posteriors, "r", encoding="utf-8") as f:
            posteriors = posteriors_from_text(f.read(), spec)
    else:
        if not args.ckpt or args.features is None:
            raise ConfigError("infer needs --posteriors, or --ckpt with --features")
        model = load_model(args.ckpt, spec)
        if not isinstance(model, ModelParams):
            if args.oracle:
                raise ConfigError(
                    "--oracle needs per-level posteriors "
                    "(a hinet checkpoint or --posteriors)"
                )
            x = _parse_features(args.features, model.d_in)
            probs = flat_forward(model, x)
            cls = int(np.argmax(probs))
            trace = flat_id_to_trace(cls, spec)
            print(f"{format_trace(trace, spec)}  logp={float(np.log(probs[cls])):.6f}")
            return EXIT_OK
        x = _parse_features(args.features, model.d_in)
        posteriors, _ = forward(model, x)

    result = downpour(posteriors, masks)
    print(f"{format_trace(result.trace, spec)}  logp={result.log_score:.6f}")
    if args.oracle:
        oracle = brute_force_map(posteriors, masks, spec)
        if (
            oracle.trace == result.trace
            and abs(oracle.log_score - result.log_score) <= 1e-12
        ):
            print("agreement: exact")
        else:
            print(
                f"disagreement: oracle {format_trace(oracle.trace, spec)} "
                f"logp={oracle.log_score:.6f}"
            )
            raise PropertyViolation
    return EXIT_OK


def cmd_eval(args) -> int:
    spec = _load_hierarchy(args.hierarchy)
    dataset = load_dataset(args.dataset, spec)
    model = load_model(args.ckpt, spec)
    if isinstance(model, ModelParams):
        predict = lambda x: predict_trace(model, x)  # noqa: E731
    else:
        predict = lambda x: flat_id_to_trace(  # noqa: E731
            int(np.argmax(flat_forward(model, x))), spec
        )
    report = evaluate(predict, dataset)
    print(f"trace accuracy: {report.trace_accuracy:.6f}")
    for l, acc in enumerate(report.per_level_accuracy, start=1):
        print(f"level {l} accuracy: {acc:.6f}")
    if report.confusions:
        print("top confusions:")
        for gold, pred, count in report.confusions:
            print(f"{gold} -> {pred}  {count}")
    return EXIT_OK


def cmd_bench(args) -> int:
    flat = flatten_param_count(args.k, args.n, args.h)
    hier = hinet_param_count(args.k, args.n, args.h)
    print(f"flatten params (k*n^h): {flat:,}")
    print(f"hinet params (k*n + h*n^2): {hier:,}")
    print(f"ratio: {flat / hier:.1f}")
    return EXIT_OK


def cmd_verify(args) -> int:
    instances = _resolve(args, "instances", 1000, int)
    seed = _resolve(args, "seed", 0, int)
    for i in range(instances):
        spec, masks, posteriors = random_instance([seed, i])
        report = check_theorems(posteriors, masks, spec, f"seed={seed} instance={i}")
        if not report.all_ok:
            print(f"counterexample at {report.instance}")
            print(
                f"theorem1_ok={report.theorem1_ok} "
                f"theorem2_ok={report.theorem2_ok} "
                f"theorem3_ok={report.theorem3_ok}"
            )
            ce = report.counterexample
            print(
                f"theorem {ce.theorem}: sequence={list(ce.sequence)} "
                f"lhs={ce.lhs!r} rhs={ce.rhs!r} ({ce.note})"
            )
            raise PropertyViolation
    print(f"verified {instances} instances: theorems 1-3 hold")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hinet",
        description="Hierarchical classifier: masked cascade training and "
        "MAP trace decoding.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a hierarchy file")
    p.add_argument("--hierarchy", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--hierarchy", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--samples-per-trace", dest="samples_per_trace", type=int)
    p.add_argument("--spread", type=float)
    p.add_argument("--d-in", dest="d_in", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--hierarchy", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", choices=("hinet", "flatten"))
    p.add_argument("--out")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--init-scale", dest="init_scale", type=float)
    p.add_argument("--config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="decode the MAP trace for one input")
    p.add_argument("--hierarchy", required=True)
    p.add_argument("--ckpt")
    p.add_argument("--features", help="comma-separated feature values")
    p.add_argument("--posteriors", help="per-level posteriors file")
    p.add_argument("--oracle", action="store_true")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--hierarchy", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--ckpt", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="compare parameter-count formulas")
    p.add_argument("k", type=int)
    p.add_argument("n", type=int)
    p.add_argument("h", type=int)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify", help="check decoder guarantees on random instances")
    p.add_argument("--instances", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    config_path = getattr(args, "config", None)
    try:
        args._config_values = _read_config(config_path) if config_path else {}
        return args.func(args)
    except HierarchyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (
        PosteriorsError,
        DatasetError,
        CheckpointError,
        ConfigError,
        CapExceededError,
        MalformedMaskError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except PropertyViolation:
        return EXIT_PROPERTY
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
