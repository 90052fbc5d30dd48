"""Command-line entry point: ``advspss <command> ...``.

Exit codes: 0 success, 2 usage error, 1 runtime or numerical failure.
Every command that produces files writes them to a temporary sibling of
``--out`` and renames it into place only on success.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from advspss import __version__
from advspss.data import (
    FseqError,
    corpus_fingerprint,
    gen_corpus,
    load_corpus,
    read_fseq,
    save_corpus,
    write_fseq,
)
from advspss.diagnostics import corpus_gv, export_scatter, sequence_stats, spoofing_rate
from advspss.duration import duration_stats, train_duration
from advspss.errors import ConfigError, NumericalError, UsageError
from advspss.gans import GanVariant
from advspss.mlpg import SystemCache
from advspss.net import load_mlp, save_mlp
from advspss.trainer import HISTORY_FIELDS, TrainConfig, TrainingDiverged, evaluate, generate_all, train

SWEEP_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
GAN_CHOICES = ("gan", "kl", "rkl", "js", "w", "ls")
MANIFEST = "manifest.json"
HISTORY = "history.jsonl"


# -- output plumbing -----------------------------------------------------------

@contextmanager
def staged_output(out: str | Path, force: bool = False):
    """Yield a temp directory that becomes ``out`` if the block succeeds."""
    out = Path(out)
    if out.exists() and not force:
        raise UsageError(f"{out} already exists (use --force to replace it)")
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        yield tmp
    except TrainingDiverged:
        # keep the diagnostic checkpoint where the user asked for output
        _replace(tmp, out)
        raise
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    _replace(tmp, out)


def _replace(tmp: Path, out: Path):
    if out.exists():
        shutil.rmtree(out)
    os.replace(tmp, out)


def history_lines(history: list[dict], fields=HISTORY_FIELDS) -> str:
    return "".join(json.dumps({k: rec.get(k) for k in fields}) + "\n" for rec in history)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=False) + "\n", encoding="utf-8")


def _resolve_seed(flag: int | None, cfg_seed: int | None = None) -> int:
    if flag is not None:
        return flag
    env = os.environ.get("ADVSPSS_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"ADVSPSS_SEED must be an integer, got {env!r}") from None
    return 0 if cfg_seed is None else cfg_seed


def _parse_labels(text: str) -> tuple[float, float, float]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--ls-labels expects three comma-separated numbers, got {text!r}") from None
    if len(vals) != 3:
        raise UsageError(f"--ls-labels expects a,b,c, got {text!r}")
    return vals


def build_config(args) -> TrainConfig:
    raw: dict = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file {path} not found")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise UsageError(f"{path}: invalid JSON ({e})") from None
    cfg = TrainConfig.from_dict(raw)
    gan = cfg.gan
    kind = args.gan if getattr(args, "gan", None) else gan.kind
    clip = args.clip if getattr(args, "clip", None) is not None else gan.clip_bound
    labels = _parse_labels(args.ls_labels) if getattr(args, "ls_labels", None) else gan.labels
    cfg.gan = GanVariant(kind, clip, labels)
    if getattr(args, "omega_d", None) is not None:
        if args.omega_d < 0:
            raise UsageError("--omega-d must be >= 0")
        cfg.omega_d = args.omega_d
    cfg.seed = _resolve_seed(getattr(args, "seed", None), raw.get("seed"))
    return cfg


def _load_corpus(path) -> tuple:
    root = Path(path)
    if not (root / "index.json").is_file():
        raise UsageError(f"no corpus at {root}")
    return load_corpus(root), corpus_fingerprint(root)


# -- commands --------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    seed = _resolve_seed(args.seed)
    corpus = gen_corpus(seed, n_utts=args.n_utts, input_dim=args.input_dim, output_dim=args.output_dim)
    with staged_output(args.out, args.force) as tmp:
        save_corpus(corpus, tmp)
    print(f"wrote {len(corpus.train)} train / {len(corpus.eval)} eval utterances to {args.out}")
    return 0


def run_training(corpus_dir: str | Path, cfg: TrainConfig, out: str | Path, force: bool = False) -> dict:
    """Train on a corpus directory and write a complete run directory."""
    corpus, fp = _load_corpus(corpus_dir)
    manifest = {
        "command": "train",
        "version": __version__,
        "corpus": str(Path(corpus_dir).resolve()),
        "corpus_fingerprint": fp,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "artifacts": {
            "history": HISTORY,
            "generator": "generator.mlp",
            "discriminator": "discriminator.mlp",
            "reference": "reference.mlp",
            "variance": "variance.fseq",
        },
    }
    with staged_output(out, force) as tmp:
        try:
            result = train(corpus.pairs("train"), cfg)
        except TrainingDiverged as e:
            save_mlp(e.generator, tmp / "generator.diverged.mlp")
            if e.discriminator is not None:
                save_mlp(e.discriminator, tmp / "discriminator.diverged.mlp")
            (tmp / HISTORY).write_text(history_lines(e.history), encoding="utf-8")
            _write_json(tmp / MANIFEST, {**manifest, "status": "diverged", "error": str(e)})
            raise
        (tmp / HISTORY).write_text(history_lines(result.history), encoding="utf-8")
        save_mlp(result.generator, tmp / "generator.mlp")
        save_mlp(result.discriminator, tmp / "discriminator.mlp")
        save_mlp(result.reference, tmp / "reference.mlp")
        write_fseq(tmp / "variance.fseq", result.variance[None, :])
        _write_json(tmp / MANIFEST, {**manifest, "status": "ok"})
    return manifest


def cmd_train(args) -> int:
    cfg = build_config(args)
    run_training(args.corpus, cfg, args.out, args.force)
    final = _read_history(Path(args.out))[-1]
    print(",".join(HISTORY_FIELDS))
    print(",".join("" if final[k] is None else str(final[k]) for k in HISTORY_FIELDS))
    return 0


def cmd_train_duration(args) -> int:
    cfg = build_config(args)
    corpus, fp = _load_corpus(args.corpus)
    if not corpus.dur_train:
        raise UsageError(f"corpus {args.corpus} has no duration data")
    fields = ("phase", "iteration", "l_mse", "l_adv", "l_d")
    with staged_output(args.out, args.force) as tmp:
        result = train_duration(corpus.dur_train, cfg, args.level)
        (tmp / HISTORY).write_text(history_lines(result.history, fields), encoding="utf-8")
        save_mlp(result.model, tmp / "duration.mlp")
        save_mlp(result.discriminator, tmp / "discriminator.mlp")
        stats = duration_stats(result.model, corpus.dur_eval or corpus.dur_train, result.scaler)
        _write_json(tmp / "stats.json", stats)
        _write_json(
            tmp / MANIFEST,
            {
                "command": "train-duration",
                "version": __version__,
                "corpus": str(Path(args.corpus).resolve()),
                "corpus_fingerprint": fp,
                "seed": cfg.seed,
                "level": args.level,
                "config": cfg.to_dict(),
                "scaler": vars(result.scaler),
                "artifacts": {"history": HISTORY, "model": "duration.mlp", "stats": "stats.json"},
                "status": "ok",
            },
        )
    print("level,stream,natural_mean,natural_var,generated_mean,generated_var")
    for lv in ("phoneme", "isochrony"):
        n, g = stats[lv]["natural"], stats[lv]["generated"]
        print(f"{args.level},{lv},{n[0]:.6g},{n[1]:.6g},{g[0]:.6g},{g[1]:.6g}")
    return 0


def _read_manifest(run: Path) -> dict:
    path = run / MANIFEST
    if not path.is_file():
        raise UsageError(f"no run manifest at {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def _read_history(run: Path) -> list[dict]:
    return [json.loads(line) for line in (run / HISTORY).read_text(encoding="utf-8").splitlines() if line]


class LoadedRun:
    """A finished acoustic-model run with its models reloaded from disk."""

    def __init__(self, run: str | Path):
        self.path = Path(run)
        self.manifest = _read_manifest(self.path)
        if self.manifest.get("command") != "train" or self.manifest.get("status") != "ok":
            raise UsageError(f"{self.path} is not a completed acoustic-model run")
        art = self.manifest["artifacts"]
        self.cfg = TrainConfig.from_dict(self.manifest["config"])
        self.generator = load_mlp(self.path / art["generator"])
        self.discriminator = load_mlp(self.path / art["discriminator"])
        self.reference = load_mlp(self.path / art["reference"])
        self.systems = SystemCache(read_fseq(self.path / art["variance"])[0])

    @property
    def name(self) -> str:
        return self.path.name

    def generate(self, pairs) -> list[np.ndarray]:
        return generate_all(self.generator, pairs, self.systems)


def load_reference(path: str | None):
    """A reference discriminator from a checkpoint file or a finished run directory."""
    if not path:
        return None
    return LoadedRun(path).reference if Path(path).is_dir() else load_mlp(path)


def _runs(paths) -> list[LoadedRun]:
    if not paths:
        raise UsageError("at least one --runs directory is required")
    return [LoadedRun(p) for p in paths]


def cmd_eval(args) -> int:
    corpus, _ = _load_corpus(args.corpus)
    pairs = corpus.pairs(args.split)
    reference = load_reference(args.reference)
    print("run,omega_d,l_mge,l_adv,l_d,spoofing_rate")
    for r in _runs(args.runs):
        m = evaluate(pairs, r.generator, r.discriminator, reference or r.reference, r.cfg, r.systems)
        print(f"{r.name},{r.cfg.omega_d:g},{m['l_mge']:.6g},{m['l_adv']:.6g},{m['l_d']:.6g},{m['spoofing_rate']:.6g}")
    return 0


def cmd_diagnose(args) -> int:
    corpus, _ = _load_corpus(args.corpus)
    pairs = corpus.pairs(args.split)
    runs = _runs(args.runs)
    nat = [corpus.normalizer.denormalize(y) for _, y in pairs]
    gens = {r.name: [corpus.normalizer.denormalize(g) for g in r.generate(pairs)] for r in runs}
    if args.metric == "gv":
        profiles = {"natural": corpus_gv(nat), **{k: corpus_gv(v) for k, v in gens.items()}}
        print("dim," + ",".join(profiles))
        for d in range(corpus.output_dim):
            print(f"{d}," + ",".join(f"{p[d]:.6g}" for p in profiles.values()))
    elif args.metric == "spoof":
        reference = load_reference(args.reference)
        print("run,total_frames,spoofed_frames,rate")
        for r in runs:
            normed = r.generate(pairs)
            rep = spoofing_rate(reference or r.reference, normed, r.cfg.phi)
            print(f"{r.name},{rep.total_frames},{rep.spoofed_frames},{rep.rate:.6g}")
    elif args.metric == "stats":
        print("source,dim,mean,variance")
        for name, seqs in {"natural": nat, **gens}.items():
            mean, var = sequence_stats(seqs)
            for d in range(mean.size):
                print(f"{name},{d},{mean[d]:.6g},{var[d]:.6g}")
    elif args.metric == "scatter":
        if not args.out:
            raise UsageError("--metric scatter needs --out")
        try:
            dims = tuple(int(v) for v in args.dims.split(","))
        except ValueError:
            raise UsageError(f"--dims expects i,j, got {args.dims!r}") from None
        if len(dims) != 2:
            raise UsageError(f"--dims expects i,j, got {args.dims!r}")
        with staged_output(args.out, args.force) as tmp:
            for name, seqs in {"natural": nat, **gens}.items():
                export_scatter(seqs, dims, tmp / f"{name}.fseq")
        print(f"wrote scatter pairs for dims {dims} to {args.out}")
    return 0


def _sweep_one(job):
    corpus_dir, cfg_dict, out = job
    run_training(corpus_dir, TrainConfig.from_dict(cfg_dict), out)
    return out


def cmd_sweep(args) -> int:
    base = build_config(args)
    omegas = [float(v) for v in args.omegas.split(",")] if args.omegas else list(SWEEP_GRID)
    if any(w < 0 for w in omegas):
        raise UsageError("omega values must be >= 0")
    _load_corpus(args.corpus)
    with staged_output(args.out, args.force) as tmp:
        jobs = []
        for w in omegas:
            d = base.to_dict()
            d["omega_d"] = w
            jobs.append((args.corpus, d, tmp / f"omega_{w:.1f}"))
        if args.jobs > 1:
            with ProcessPoolExecutor(args.jobs) as pool:
                list(pool.map(_sweep_one, jobs))
        else:
            for job in jobs:
                _sweep_one(job)
    eval_args = argparse.Namespace(
        corpus=args.corpus, split="eval", reference=None, runs=[Path(args.out) / f"omega_{w:.1f}" for w in omegas]
    )
    return cmd_eval(eval_args)


def cmd_replay(args) -> int:
    run = Path(args.run)
    manifest = _read_manifest(run)
    if manifest.get("command") != "train":
        raise UsageError("only acoustic-model runs can be replayed")
    corpus_dir = Path(args.corpus or manifest["corpus"])
    _, fp = _load_corpus(corpus_dir)
    if fp != manifest["corpus_fingerprint"]:
        print(f"corpus fingerprint mismatch: {fp} != {manifest['corpus_fingerprint']}", file=sys.stderr)
        return 1
    cfg = TrainConfig.from_dict(manifest["config"])
    with tempfile.TemporaryDirectory() as td:
        out = Path(args.out) if args.out else Path(td) / "replay"
        run_training(corpus_dir, cfg, out, args.force)
        same = (out / HISTORY).read_bytes() == (run / HISTORY).read_bytes()
    print("identical" if same else "mismatch")
    return 0 if same else 1


# -- parser ------------------------------------------------------------------------

def _add_train_flags(p: argparse.ArgumentParser):
    p.add_argument("--corpus", required=True, help="corpus directory from gen-data")
    p.add_argument("--config", help="JSON file with TrainConfig fields")
    p.add_argument("--gan", choices=GAN_CHOICES, help="adversarial loss variant")
    p.add_argument("--clip", type=float, help="W-GAN weight clip bound")
    p.add_argument("--ls-labels", help="least-squares GAN labels a,b,c")
    p.add_argument("--omega-d", type=float, help="adversarial weight")
    p.add_argument("--seed", type=int, help="random seed (fallback: $ADVSPSS_SEED)")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true", help="replace an existing --out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="advspss", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a seeded synthetic corpus")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-utts", type=int, default=60)
    p.add_argument("--input-dim", type=int, default=24)
    p.add_argument("--output-dim", type=int, default=4)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train acoustic model and discriminator")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("train-duration", help="train a duration model")
    _add_train_flags(p)
    p.add_argument("--level", choices=("phoneme", "isochrony", "mora"), default="isochrony")
    p.set_defaults(func=cmd_train_duration)

    p = sub.add_parser("eval", help="loss and spoofing-rate table for finished runs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--split", choices=("train", "eval"), default="eval")
    p.add_argument("--reference", help="run directory or discriminator checkpoint for the spoofing rate (default: each run's own)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("diagnose", help="GV, spoofing, statistics or scatter export")
    p.add_argument("--metric", choices=("gv", "spoof", "stats", "scatter"), required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--split", choices=("train", "eval"), default="eval")
    p.add_argument("--reference", help="run directory or discriminator checkpoint")
    p.add_argument("--dims", default="0,1", help="dimension pair for scatter")
    p.add_argument("--out", help="output directory for scatter files")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("sweep", help="train over an omega_d grid and print the eval table")
    _add_train_flags(p)
    p.add_argument("--omegas", help=f"comma-separated grid (default {','.join(map(str, SWEEP_GRID))})")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("replay", help="rerun a training run from its manifest and compare logs")
    p.add_argument("run")
    p.add_argument("--corpus", help="override the corpus path stored in the manifest")
    p.add_argument("--out", help="keep the replayed run here")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as e:
        print(f"advspss: error: {e}", file=sys.stderr)
        return 2
    except (NumericalError, FseqError, OSError, ValueError) as e:
        print(f"advspss: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
