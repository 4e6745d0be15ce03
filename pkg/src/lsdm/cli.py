"""Command-line surface: synth, train, eval, forecast, encode-env."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import load_config
from .dataset import load_dataset, save_dataset
from .forecasting import evaluate_horizon, postprocess, predict_recursive
from .metrics import per_service_metrics
from .text import poi_to_text
from .towers import EmbeddingProvider, encode_image, encode_text
from .training import (TrainingDivergedError, build_dataset, model_from_checkpoint,
                       train)
from .windows import make_windows


def _load_data_arg(path: str):
    """--data accepts either a dataset manifest or a run config with a
    synthetic data section."""
    doc = json.loads(Path(path).read_text())
    if "users" in doc and doc.get("version") == 1:
        return load_dataset(path)
    config = load_config(path)
    return build_dataset(config)


def _cmd_synth(args) -> int:
    config = load_config(args.config)
    if config.data.synthetic is None:
        raise ValueError("synth requires a config with a data.synthetic section")
    dataset = build_dataset(config)
    manifest = save_dataset(dataset, args.out)
    print(f"wrote {manifest}")
    return 0


def _cmd_train(args) -> int:
    config = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = train(config)
    except TrainingDivergedError as exc:
        save_checkpoint(exc.state, out / "diagnostic.json")
        raise
    save_checkpoint(result.state, out / "checkpoint.json")
    (out / "train_log.json").write_text(json.dumps(
        {"diffusion_loss_per_epoch": result.diffusion_log,
         "contrastive_loss_per_epoch": result.contrastive_log},
        indent=2, sort_keys=True))
    print(f"wrote {out / 'checkpoint.json'}")
    return 0


def _one_step_metrics(model, dataset, windows_per_user: int, seed: int):
    windows = make_windows(dataset, model.normalizer, model.history_len, 1)
    by_user: dict[str, list] = {}
    for w in windows:
        by_user.setdefault(w.user_id, []).append(w)
    rng = np.random.default_rng(seed)
    truth, pred = [], []
    for uid in sorted(by_user):
        group = by_user[uid]
        idx = rng.choice(len(group), size=min(windows_per_user, len(group)), replace=False)
        for i in sorted(idx.tolist()):
            w = group[i]
            truth.append(w.target[0])
            pred.append(model.predict_window(w, seed=seed + w.target_time))
    return per_service_metrics(np.asarray(truth), np.asarray(pred))


def _cmd_eval(args) -> int:
    model = model_from_checkpoint(load_checkpoint(args.checkpoint))
    dataset = _load_data_arg(args.data)
    steps = [int(s) for s in args.steps.split(",") if s]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    report = _one_step_metrics(model, dataset, args.windows_per_user, args.seed)
    (out / "metrics.json").write_text(report.to_json())

    horizon = evaluate_horizon(model, dataset, steps,
                               windows_per_user=args.windows_per_user, seed=args.seed)
    (out / "horizon.json").write_text(json.dumps(horizon.to_dict(), indent=2, sort_keys=True))
    (out / "horizon.csv").write_text(horizon.to_csv())
    print(f"wrote {out / 'metrics.json'}, {out / 'horizon.json'}, {out / 'horizon.csv'}")
    return 0


def _cmd_forecast(args) -> int:
    model = model_from_checkpoint(load_checkpoint(args.checkpoint))
    dataset = _load_data_arg(args.data)
    user = dataset.user(args.user)
    h_len = model.history_len
    if user.num_hours < h_len + 1:
        raise ValueError(f"user {args.user} has too few hours for history length {h_len}")
    normalized = model.normalizer.apply(user.traffic.values)
    t = h_len
    from .windows import SampleWindow
    window = SampleWindow(
        user_id=user.user_id, history=normalized[:h_len], target=normalized[t:t + 1],
        poi_at_target=user.poi.counts[t].astype(np.float64),
        tile_at_target=user.tiles.tiles[t], target_time=t)
    contexts = [(user.poi.counts[min(t + i, user.num_hours - 1)].astype(np.float64),
                 user.tiles.tiles[min(t + i, user.num_hours - 1)])
                for i in range(args.steps)]
    result = predict_recursive(model, window, args.steps, contexts, seed=args.seed)
    smoothed = model.normalizer.invert(postprocess(result.normalized))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps({
        "user_id": user.user_id,
        "start_hour": t,
        "seeds": list(result.seeds),
        "trajectory": result.trajectory.tolist(),
        "trajectory_postprocessed": smoothed.tolist(),
    }, indent=2, sort_keys=True))
    print(f"wrote {out}")
    return 0


def _cmd_encode_env(args) -> int:
    model = model_from_checkpoint(load_checkpoint(args.checkpoint))
    if model.towers is None:
        raise ValueError("checkpoint has no trained towers to encode with")
    dataset = _load_data_arg(args.data)
    vectors = {}
    for u in dataset:
        for t in range(u.num_hours):
            z_image = encode_image(u.tiles.tiles[t], model.towers)
            z_text = encode_text(poi_to_text(u.poi.counts[t]), model.towers)
            vectors[(u.user_id, t)] = (z_image, z_text)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    EmbeddingProvider.write(out, vectors, model.towers.embed_dim)
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lsdm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train towers and denoiser")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="one-step metrics and recursive horizon report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--steps", default="10,20,30")
    p.add_argument("--windows-per-user", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("forecast", help="recursive forecast for one user")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--steps", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_forecast)

    p = sub.add_parser("encode-env", help="write precomputed embedding files")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_encode_env)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single-line machine-parsable error
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
