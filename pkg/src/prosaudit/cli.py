"""Command-line entry point wiring the modules into reproducible experiments.

Every subcommand accepts --seed and prints a reproducibility header with
the seed, library versions, and a hash of the resolved configuration.
Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .audio_io import read_wav, write_wav
from .adversary import DEFAULT_EPSILONS, cross_evaluate
from .corpus import CorpusSpec, generate_corpus
from .errors import ProsauditError
from .explain import aggregate_attention_features
from .features import (DEFAULT_WINDOW_MS, extract_features, load_feature_dir,
                       load_protocol, save_feature_dir)
from .metrics import ScoredTrial, evaluate
from .neural import (ModelBundle, TrainConfig, attention_variant, predict_file,
                     preset, train)
from .pitch import PitchParams
from .search import parameter_search, trial_log_csv
from .surrogate import SurrogateBundle, train_surrogate
from .wada import wada_snr

USAGE_ERROR = 1
DATA_ERROR = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _print_header(command: str, args: argparse.Namespace) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    digest = hashlib.sha256(
        json.dumps(resolved, sort_keys=True, default=str).encode()).hexdigest()[:12]
    print(f"# prosaudit {__version__} | command={command} | seed={args.seed} | "
          f"python={sys.version.split()[0]} numpy={np.__version__} | "
          f"config_sha256={digest}")
    print(f"# config: {json.dumps(resolved, sort_keys=True, default=str)}")


def _load_pitch_params(path: str | None) -> PitchParams:
    if path is None:
        return PitchParams()
    with open(path, "r", encoding="utf-8") as fh:
        return PitchParams.from_json(fh.read())


def _load_train_config(path: str | None, seed: int) -> TrainConfig:
    if path is None:
        return TrainConfig(seed=seed)
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.loads(fh.read())
    obj.setdefault("seed", seed)
    return TrainConfig(**obj)


def _resolve_audio(protocol_path: str, audio_root: str | None):
    entries = load_protocol(protocol_path)
    root = audio_root or os.path.dirname(os.path.abspath(protocol_path))
    return [(os.path.join(root, e.path), e) for e in entries]


def _extract_one(task):
    path, uid, label, params_json, window_ms = task
    buffer = read_wav(path)
    params = PitchParams.from_json(params_json)
    seq = extract_features(buffer, params, window_ms, label=label)
    return uid, seq


def _cmd_gen_corpus(args) -> int:
    if args.spec_file:
        with open(args.spec_file, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        if "duration_range" in obj:
            obj["duration_range"] = tuple(obj["duration_range"])
        spec = CorpusSpec(**obj)
    else:
        spec = CorpusSpec(train_per_class=args.train_per_class,
                          val_per_class=args.val_per_class,
                          eval_per_class=args.eval_per_class)
    protocols = generate_corpus(spec, args.seed, args.out)
    for split, path in protocols.items():
        print(f"{split}: {path}")
    return 0


def _cmd_extract(args) -> int:
    params = _load_pitch_params(args.params)
    items = _resolve_audio(args.protocol, args.audio_root)
    tasks = [(path, e.utterance_id, e.label, params.to_json(), args.window_ms)
             for path, e in items]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_extract_one, tasks))
    else:
        results = [_extract_one(t) for t in tasks]
    seqs = [seq for _, seq in results]  # pool.map preserves order
    save_feature_dir(args.out, seqs)
    print(f"wrote {len(seqs)} feature files to {args.out}")
    return 0


def _cmd_search_params(args) -> int:
    with open(args.bounds, "r", encoding="utf-8") as fh:
        bounds = {k: tuple(v) for k, v in json.load(fh).items()}
    corpus = [(read_wav(path), e.label) for path, e in
              _resolve_audio(args.protocol, args.audio_root)]
    tc = _load_train_config(args.train_config, args.seed)
    best, log = parameter_search(corpus, bounds, args.budget, args.seed,
                                 grid_points=args.grid_points, train_config=tc,
                                 window_ms=args.window_ms)
    with open(args.out_log, "w", encoding="utf-8", newline="") as fh:
        fh.write(trial_log_csv(log))
    with open(args.out_params, "w", encoding="utf-8", newline="") as fh:
        fh.write(best.to_json())
    print(f"best params -> {args.out_params}; trial log -> {args.out_log}")
    return 0


def _cmd_train(args) -> int:
    train_seqs = load_feature_dir(args.train_features)
    val_seqs = load_feature_dir(args.val_features)
    config = preset(args.arch)
    if args.attention == "on":
        config = attention_variant(config)
    tc = _load_train_config(args.train_config, args.seed)
    result = train(config, train_seqs, val_seqs, tc)
    bundle = result.best if args.select == "best" else result.final
    bundle.save(args.out)
    last = result.history[-1]
    print(f"trained {config.name}: epochs={len(result.history)} "
          f"val_acc={last['val_accuracy']:.4f} val_eer={last['val_eer']:.4f}")
    print(f"bundle -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    bundle = ModelBundle.load(args.bundle)
    params = _load_pitch_params(args.params)
    trials = []
    for path, entry in _resolve_audio(args.protocol, args.audio_root):
        score, _ = predict_file(bundle, read_wav(path), params)
        trials.append(ScoredTrial(entry.utterance_id, score, entry.label))
    report = evaluate(trials)
    with open(args.out_json, "w", encoding="utf-8", newline="") as fh:
        fh.write(report.to_json())
    with open(args.out_csv, "w", encoding="utf-8", newline="") as fh:
        fh.write(report.to_csv_row())
    print(f"accuracy={report.accuracy:.4f} eer={report.eer:.4f} "
          f"auroc={report.auroc:.4f}")
    return 0


def _cmd_train_surrogate(args) -> int:
    corpus = [(read_wav(path), e.label) for path, e in
              _resolve_audio(args.protocol, args.audio_root)]
    tc = _load_train_config(args.train_config, args.seed)
    bundle = train_surrogate(corpus, tc)
    bundle.save(args.out)
    print(f"surrogate heldout accuracy {bundle.heldout_accuracy:.4f} -> {args.out}")
    return 0


def _cmd_attack(args) -> int:
    surrogate = SurrogateBundle.load(args.surrogate)
    prosody = ModelBundle.load(args.bundle)
    params = _load_pitch_params(args.params)
    items = _resolve_audio(args.protocol, args.audio_root)
    clean = [(read_wav(path), e.label) for path, e in items]
    epsilons = [float(e) for e in args.epsilons.split(",")]
    report = cross_evaluate(prosody, surrogate, clean, epsilons=epsilons,
                            alpha=args.alpha, max_steps=args.max_steps,
                            pitch_params=params)
    with open(args.out_csv, "w", encoding="utf-8", newline="") as fh:
        fh.write(report.to_csv())
    if args.write_adv:
        for eps, buffers in report.adversarial.items():
            for (adv, _), (path, _entry) in zip(buffers, items):
                stem, _ = os.path.splitext(path)
                write_wav(f"{stem}.adv-eps{eps}.wav", adv)
    print(f"clean: surrogate={report.clean_surrogate_acc:.4f} "
          f"prosody={report.clean_prosody_acc:.4f}")
    for row in report.rows:
        print(f"eps={row.epsilon}: surrogate={row.surrogate_acc:.4f} "
              f"prosody={row.prosody_acc:.4f} steps={row.mean_steps:.1f} "
              f"wada={row.mean_wada_snr_db:.1f}")
    return 0


def _cmd_attention(args) -> int:
    bundle = ModelBundle.load(args.bundle)
    params = _load_pitch_params(args.params)
    dataset = [extract_features(read_wav(path), params, bundle.window_ms,
                                label=entry.label)
               for path, entry in _resolve_audio(args.protocol, args.audio_root)]
    aggregate = aggregate_attention_features(bundle, dataset)
    with open(args.out_csv, "w", encoding="utf-8", newline="") as fh:
        fh.write(aggregate.to_csv())
    with open(args.out_json, "w", encoding="utf-8", newline="") as fh:
        fh.write(aggregate.to_json())
    for label, features in sorted(aggregate.summary.items()):
        jit = features["jitter"]["median"]
        print(f"{label}: median jitter at influential slice {jit:.4f}")
    return 0


def _cmd_snr(args) -> int:
    value = wada_snr(read_wav(args.wav))
    print(f"{value!r}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="prosaudit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="synthesize the desk-scale corpus")
    p.add_argument("--spec-file", help="JSON file with CorpusSpec fields")
    p.add_argument("--train-per-class", type=int, default=200)
    p.add_argument("--val-per-class", type=int, default=50)
    p.add_argument("--eval-per-class", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_corpus)

    p = sub.add_parser("extract", help="extract windowed prosody features")
    p.add_argument("--protocol", required=True)
    p.add_argument("--audio-root")
    p.add_argument("--params", help="PitchParams JSON file")
    p.add_argument("--window-ms", type=int, default=DEFAULT_WINDOW_MS,
                   choices=(50, 100, 200, 500))
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("search-params", help="randomized pitch-parameter search")
    p.add_argument("--protocol", required=True)
    p.add_argument("--audio-root")
    p.add_argument("--bounds", required=True, help="JSON {param: [lo, hi]}")
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--grid-points", type=int, default=4)
    p.add_argument("--window-ms", type=int, default=DEFAULT_WINDOW_MS)
    p.add_argument("--train-config")
    p.add_argument("--out-params", required=True)
    p.add_argument("--out-log", required=True)
    p.set_defaults(func=_cmd_search_params)

    p = sub.add_parser("train", help="train a detector on extracted features")
    p.add_argument("--train-features", required=True)
    p.add_argument("--val-features", required=True)
    p.add_argument("--arch", default="B", choices=list("ABCDE") + list("abcde"))
    p.add_argument("--attention", default="off", choices=("on", "off"))
    p.add_argument("--train-config", help="TrainConfig JSON file")
    p.add_argument("--select", default="best", choices=("best", "final"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="score a protocol and report metrics")
    p.add_argument("--bundle", required=True)
    p.add_argument("--protocol", required=True)
    p.add_argument("--audio-root")
    p.add_argument("--params")
    p.add_argument("--out-json", required=True)
    p.add_argument("--out-csv", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("train-surrogate", help="train the differentiable surrogate")
    p.add_argument("--protocol", required=True)
    p.add_argument("--audio-root")
    p.add_argument("--train-config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_surrogate)

    p = sub.add_parser("attack", help="L-inf attack and robustness cross-evaluation")
    p.add_argument("--surrogate", required=True)
    p.add_argument("--bundle", required=True, help="prosody model bundle")
    p.add_argument("--protocol", required=True)
    p.add_argument("--audio-root")
    p.add_argument("--params")
    p.add_argument("--epsilons", default=",".join(str(e) for e in DEFAULT_EPSILONS))
    p.add_argument("--alpha", type=float, default=0.001)
    p.add_argument("--max-steps", type=int, default=100)
    p.add_argument("--write-adv", action="store_true",
                   help="write adversarial WAVs beside the originals")
    p.add_argument("--out-csv", required=True)
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("attention", help="aggregate attention explanations")
    p.add_argument("--bundle", required=True)
    p.add_argument("--protocol", required=True)
    p.add_argument("--audio-root")
    p.add_argument("--params")
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-json", required=True)
    p.set_defaults(func=_cmd_attention)

    p = sub.add_parser("snr", help="blind SNR estimate of one WAV")
    p.add_argument("wav")
    p.set_defaults(func=_cmd_snr)

    for sp in sub.choices.values():
        sp.add_argument("--seed", type=int, default=0)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _print_header(args.command, args)
    try:
        return args.func(args)
    except (ProsauditError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
