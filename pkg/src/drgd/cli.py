"""Command-line entry point: ``drgd <command> [options]``.

Settings resolve as built-in defaults < ``--config`` file < command-line
flags. The config file holds ``key = value`` lines; ``#`` starts a comment.
Commands that write a run directory echo the resolved settings into
``config.resolved`` there, which can be fed back through ``--config``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

from . import __version__
from .beam import decode_corpus
from .checkpoint import CheckpointError, load_checkpoint
from .data import TEMPLATES, ParallelCorpus, Vocab, build_vocab, read_corpus, read_lines, synth_corpus, tokenize, write_corpus
from .model import ModelConfig, ModelParams
from .rouge import score_corpus
from .train import TrainConfig, ablate, train

RUN_DIR_ENV = "DRGD_RUN_DIR"
DEFAULT_RUN_DIR = "run"

log = logging.getLogger("drgd")


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text

    return parse


def _opt_int(text: str) -> int | None:
    return None if text.strip().lower() in ("", "none") else int(text)


# key -> (parser, default). Defaults for the model and optimizer follow ModelConfig/TrainConfig.
SCHEMA: dict[str, tuple[Callable[[str], Any], Any]] = {
    # model
    "mode": (_choice("drgd", "stand"), "drgd"),
    "k_w": (int, 300),
    "k_h": (int, 500),
    "k_z": (int, 500),
    "max_src_len": (int, 100),
    "max_tgt_len": (int, 50),
    # training
    "batch_size": (int, 256),
    "epochs": (int, 10),
    "clip_norm": (float, 5.0),
    "seed": (int, 0),
    "kl_warmup_steps": (int, 0),
    "patience": (int, 5),
    "valid_every": (int, 1),
    "rho": (float, 0.95),
    "eps": (float, 1e-6),
    "record_time": (_bool, True),
    # decoding
    "beam": (int, 10),
    "max_len": (_opt_int, None),
    "sample_z": (_bool, False),
    "workers": (int, 1),
    "length_penalty": (float, 0.0),
    # data
    "tokenizer": (_choice("word", "char"), "word"),
    "src": (str, ""),
    "tgt": (str, ""),
    "valid_src": (str, ""),
    "valid_tgt": (str, ""),
    "src_vocab": (str, ""),
    "tgt_vocab": (str, ""),
    "vocab_size": (int, 30000),
    "n_valid": (int, 0),
}

MODEL_KEYS = ("mode", "k_w", "k_h", "k_z", "max_src_len", "max_tgt_len")
TRAIN_KEYS = ("batch_size", "epochs", "clip_norm", "seed", "kl_warmup_steps", "patience", "valid_every", "rho", "eps", "record_time")


class CliError(Exception):
    """A user-facing failure; the message is printed as a one-line diagnostic."""


def parse_config_text(text: str, origin: str = "<config>") -> dict[str, Any]:
    out: dict[str, Any] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{origin}:{n}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise CliError(f"{origin}:{n}: unknown config key {key!r}")
        try:
            out[key] = SCHEMA[key][0](value)
        except ValueError as e:
            raise CliError(f"{origin}:{n}: bad value for {key}: {e}") from None
    return out


def load_config_file(path: str | os.PathLike) -> dict[str, Any]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise CliError(f"cannot read config file {path}: {e.strerror}") from None
    return parse_config_text(text, str(path))


def format_config(cfg: dict[str, Any]) -> str:
    lines = []
    for key in sorted(cfg):
        v = cfg[key]
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif v is None:
            v = "none"
        lines.append(f"{key} = {v}")
    return "\n".join(lines) + "\n"


def resolve(args: argparse.Namespace) -> dict[str, Any]:
    """Defaults, then the config file, then any flag the user actually gave."""
    cfg = {k: d for k, (_, d) in SCHEMA.items()}
    if getattr(args, "config", None):
        cfg.update(load_config_file(args.config))
    for key in SCHEMA:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    return cfg


def run_dir_for(args: argparse.Namespace) -> Path:
    if getattr(args, "run_dir", None):
        return Path(args.run_dir)
    return Path(os.environ.get(RUN_DIR_ENV) or DEFAULT_RUN_DIR)


def prepare_run_dir(path: Path, cfg: dict[str, Any]) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
        (path / "config.resolved").write_text(format_config(cfg), encoding="utf-8")
    except OSError as e:
        raise CliError(f"cannot write run directory {path}: {e.strerror}") from None


def _require(cfg: dict[str, Any], *keys: str) -> None:
    missing = [k for k in keys if not cfg[k]]
    if missing:
        raise CliError("missing required setting(s): " + ", ".join(f"--{k.replace('_', '-')}" for k in missing))


def _load_vocab(path: str) -> Vocab:
    if not Path(path).is_file():
        raise CliError(f"vocabulary file not found: {path}")
    return Vocab.load(path)


def _model_config(cfg: dict[str, Any], sv: Vocab, tv: Vocab) -> ModelConfig:
    return ModelConfig(len(sv), len(tv), **{k: cfg[k] for k in MODEL_KEYS})


def _train_config(cfg: dict[str, Any]) -> TrainConfig:
    return TrainConfig(**{k: cfg[k] for k in TRAIN_KEYS})


def _read_pair(src: str, tgt: str, tokenizer: str) -> ParallelCorpus:
    for p in (src, tgt):
        if not Path(p).is_file():
            raise CliError(f"corpus file not found: {p}")
    return read_corpus(src, tgt, tokenizer)


def _join(tokens: Sequence[str], tokenizer: str) -> str:
    return ("" if tokenizer == "char" else " ").join(tokens)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> int:
    corpus = synth_corpus(args.n, seed=args.seed, templates=args.templates or TEMPLATES)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_corpus(corpus, out / "source.txt", out / "target.txt")
    (out / "templates.txt").write_text("".join(m + "\n" for m in corpus.meta), encoding="utf-8")
    print(f"wrote {len(corpus)} pairs to {out}")
    return 0


def cmd_vocab(args: argparse.Namespace) -> int:
    tokenizer = "char" if args.char else "word"
    seqs = []
    for path in args.src:
        if not Path(path).is_file():
            raise CliError(f"corpus file not found: {path}")
        seqs.extend(tokenize(line, tokenizer) for line in read_lines(path))
    vocab = build_vocab(seqs, args.max_size, args.min_count)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    vocab.save(args.out)
    print(f"wrote {len(vocab)} entries to {args.out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = resolve(args)
    _require(cfg, "src", "tgt", "src_vocab", "tgt_vocab")
    sv, tv = _load_vocab(cfg["src_vocab"]), _load_vocab(cfg["tgt_vocab"])
    corpus = _read_pair(cfg["src"], cfg["tgt"], cfg["tokenizer"])
    valid = None
    if cfg["valid_src"] or cfg["valid_tgt"]:
        _require(cfg, "valid_src", "valid_tgt")
        valid = _read_pair(cfg["valid_src"], cfg["valid_tgt"], cfg["tokenizer"])
    elif cfg["n_valid"]:
        corpus, valid = corpus.split(cfg["n_valid"])
    run_dir = run_dir_for(args)
    prepare_run_dir(run_dir, cfg)
    params = ModelParams(_model_config(cfg, sv, tv), cfg["seed"])
    report = train(params, corpus, sv, tv, _train_config(cfg), valid, run_dir)
    print(f"best epoch {report.best_epoch} valid_nll {report.best_valid_nll:.6f}; run directory {run_dir}")
    return 0


def _check_dims(params: ModelParams, cfg: dict[str, Any], explicit: set[str], sv: Vocab, tv: Vocab) -> None:
    have = params.config.to_dict()
    want = {"src_vocab_size": len(sv), "tgt_vocab_size": len(tv)}
    want.update({k: cfg[k] for k in MODEL_KEYS if k in explicit})
    diff = {k: (have[k], v) for k, v in want.items() if have[k] != v}
    if diff:
        ck = ", ".join(f"{k}={a}" for k, (a, _) in diff.items())
        us = ", ".join(f"{k}={b}" for k, (_, b) in diff.items())
        raise CliError(f"checkpoint/config mismatch: checkpoint has {ck}; config has {us}")


def cmd_decode(args: argparse.Namespace) -> int:
    cfg = resolve(args)
    _require(cfg, "src_vocab", "tgt_vocab")
    explicit = set(load_config_file(args.config)) if args.config else set()
    explicit |= {k for k in MODEL_KEYS if getattr(args, k, None) is not None}
    sv, tv = _load_vocab(cfg["src_vocab"]), _load_vocab(cfg["tgt_vocab"])
    if not Path(args.checkpoint).is_file():
        raise CliError(f"checkpoint not found: {args.checkpoint}")
    params = load_checkpoint(args.checkpoint)
    _check_dims(params, cfg, explicit, sv, tv)
    if not Path(args.input).is_file():
        raise CliError(f"input file not found: {args.input}")
    lines = read_lines(args.input)
    sources = []
    for n, line in enumerate(lines, 1):
        ids = sv.encode(tokenize(line, cfg["tokenizer"]))
        if not ids:
            raise CliError(f"{args.input}:{n}: empty source line")
        sources.append(ids)
    outputs = decode_corpus(
        params, sources, beam_size=cfg["beam"], max_len=cfg["max_len"], deterministic_z=not cfg["sample_z"],
        seed=cfg["seed"], workers=cfg["workers"], length_penalty=cfg["length_penalty"],
    )
    if args.output:
        out = Path(args.output)
    else:
        out = run_dir_for(args) / "decodes" / (Path(args.input).name + ".out")
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as f:
        for ids in outputs:
            f.write(_join(tv.decode(ids), cfg["tokenizer"]) + "\n")
    print(f"decoded {len(outputs)} lines to {out}")
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    for p in [args.candidate, *args.reference]:
        if not Path(p).is_file():
            raise CliError(f"file not found: {p}")
    report = score_corpus(args.candidate, args.reference, args.mode, args.byte_limit, "char" if args.char else "word")
    print(report.to_json() if args.json else report.table())
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = resolve(args)
    tok = cfg["tokenizer"]
    if args.synth:
        corpus = synth_corpus(args.synth, seed=args.synth_seed)
        n_valid = cfg["n_valid"] or max(1, len(corpus) // 10)
        corpus, valid = corpus.split(n_valid)
    else:
        _require(cfg, "src", "tgt")
        corpus = _read_pair(cfg["src"], cfg["tgt"], tok)
        if cfg["valid_src"] or cfg["valid_tgt"]:
            _require(cfg, "valid_src", "valid_tgt")
            valid = _read_pair(cfg["valid_src"], cfg["valid_tgt"], tok)
        else:
            corpus, valid = corpus.split(cfg["n_valid"] or max(1, len(corpus) // 10))
    if cfg["src_vocab"] and cfg["tgt_vocab"]:
        sv, tv = _load_vocab(cfg["src_vocab"]), _load_vocab(cfg["tgt_vocab"])
    else:
        sv, tv = build_vocab(corpus.sources, cfg["vocab_size"]), build_vocab(corpus.targets, cfg["vocab_size"])
    run_dir = run_dir_for(args)
    prepare_run_dir(run_dir, cfg)
    report = ablate(corpus, valid, sv, tv, _model_config(cfg, sv, tv), _train_config(cfg),
                    beam_size=cfg["beam"], run_dir=run_dir, workers=cfg["workers"])
    decodes = run_dir / "decodes"
    decodes.mkdir(exist_ok=True)
    for system, hyps in report.decodes.items():
        (decodes / f"{system}.txt").write_text("".join(_join(h, tok) + "\n" for h in hyps), encoding="utf-8")
    table = report.table()
    (run_dir / "ablation.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_settings(p: argparse.ArgumentParser, keys: Sequence[str]) -> None:
    """Flags for schema keys; default None so unset flags do not override the config file."""
    p.add_argument("--config", help="key = value settings file")
    for key in keys:
        parse, default = SCHEMA[key]
        flag = "--" + key.replace("_", "-")
        if parse is _bool:
            p.add_argument(flag, dest=key, action=argparse.BooleanOptionalAction, default=None,
                           help=f"(default {str(default).lower()})")
        else:
            p.add_argument(flag, dest=key, type=parse, default=None, help=f"(default {default})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drgd", description="Deep recurrent generative decoder toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic headline corpus")
    p.add_argument("--n", type=int, required=True, help="number of pairs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--templates", nargs="+", choices=TEMPLATES)
    p.add_argument("--out", required=True, help="output directory (source.txt, target.txt, templates.txt)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("vocab", help="build a vocabulary file")
    p.add_argument("--src", nargs="+", required=True, help="one or more text files")
    p.add_argument("--max-size", type=int, default=30000)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--char", action="store_true", help="character tokens")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_vocab)

    p = sub.add_parser("train", help="train one model")
    _add_settings(p, MODEL_KEYS + TRAIN_KEYS + ("tokenizer", "src", "tgt", "valid_src", "valid_tgt", "src_vocab", "tgt_vocab", "n_valid"))
    p.add_argument("--run-dir", help=f"output directory (else ${RUN_DIR_ENV}, else ./{DEFAULT_RUN_DIR})")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decode", help="beam-search decode a source file")
    _add_settings(p, MODEL_KEYS + ("beam", "max_len", "sample_z", "workers", "length_penalty", "seed", "tokenizer", "src_vocab", "tgt_vocab"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="one source per line")
    p.add_argument("--output", help="summary file (else <run dir>/decodes/<input>.out)")
    p.add_argument("--run-dir")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("score", help="ROUGE-score candidates against references")
    p.add_argument("--candidate", required=True)
    p.add_argument("--reference", nargs="+", required=True)
    p.add_argument("--mode", choices=("f", "recall"), default="f")
    p.add_argument("--byte-limit", type=int)
    p.add_argument("--char", action="store_true")
    p.add_argument("--json", action="store_true", help="machine-readable records")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("ablate", help="train StanD and DRGD with the same budget and compare ROUGE")
    _add_settings(p, MODEL_KEYS[1:] + TRAIN_KEYS + ("beam", "workers", "tokenizer", "src", "tgt", "valid_src", "valid_tgt",
                                                   "src_vocab", "tgt_vocab", "vocab_size", "n_valid"))
    p.add_argument("--synth", type=int, help="use N synthetic pairs instead of --src/--tgt")
    p.add_argument("--synth-seed", type=int, default=0)
    p.add_argument("--run-dir")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (CliError, CheckpointError, ValueError, OSError, IndexError) as e:
        print(f"drgd {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
