"""Command-line pipeline: synth -> train -> score -> classify -> evaluate.

Stages communicate only through files in the working directory, every output
gets a ``.meta`` sidecar (config hash + seed), and a later stage never
retrains or rescores an earlier one: missing artifacts are an error telling
you which stage to run, existing ones are reused.

Exit codes: 0 success, 2 configuration/validation problems, 1 runtime errors.
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import compass as compass_mod
from . import detector, embedder, evaluator, mapper, plots, procrustes, synthgen
from .corpus import (
    SentenceCorpus,
    build_vocabulary,
    common_words,
    load_stopwords,
    load_testset,
    resolve_testset,
    write_wordset_report,
)
from .detector import RULES, parse_method_id

log = logging.getLogger("lexdrift")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


class ConfigError(Exception):
    """Bad configuration or missing declared inputs; exits with code 2."""


@dataclass(frozen=True)
class RunConfig:
    corpus_t0: str = ""
    corpus_t1: str = ""
    stopwords: str = ""
    testset: str = ""
    gold: str = ""
    workdir: str = ""
    methods: tuple = ("TWEC_CBOW",)
    rules: tuple = ("MEAN", "MEAN_MINUS_2SIGMA")
    dim: int = 100
    window: int = 5
    negative: int = 5
    epochs: int = 5
    initial_lr: float = 0.025
    min_lr: float = 0.0001
    subsample_t: float = 1e-3
    min_count: int = 5
    seed: int = 1
    threads: int = 1
    compass_frozen: str = "context"
    ffnn_epochs: int = 200
    ffnn_lr: float = 0.01
    ffnn_batch: int = 32
    ffnn_hidden: int = 0  # 0: same width as dim
    threshold_population: str = "full"
    bins: int = 40
    k: int = 0  # 0: use the number of shifted gold words
    p: float = 0.5
    select_top: int = 4
    figures: bool = True


_FIELD_TYPES = {f.name: f.default.__class__ if f.default is not None else str
                for f in fields(RunConfig)}
_BOOL_WORDS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def parse_config_file(path: Path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; unknown keys are errors."""
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    raw: dict[str, str] = {}
    for i, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{i}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in raw:
            raise ConfigError(f"{path}:{i}: duplicate key {key!r}")
        raw[key] = value
    return raw


def _coerce(key: str, value) -> object:
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    if not isinstance(value, str):
        return value
    target = _FIELD_TYPES[key]
    try:
        if target is bool:
            return _BOOL_WORDS[value.lower()]
        if target is int:
            return int(value)
        if target is float:
            return float(value)
        if target is tuple:
            items = tuple(x.strip() for x in value.split(",") if x.strip())
            if not items:
                raise ValueError("empty list")
            return items
        return value
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"config key {key!r}: cannot parse {value!r} ({exc})") from exc


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, overlaid by the config file, overlaid by explicit flags."""
    data: dict[str, object] = {}
    if args.config:
        for key, value in parse_config_file(Path(args.config)).items():
            data[key] = _coerce(key, value)
    flag_map = {
        "workdir": "workdir", "seed": "seed", "threads": "threads",
        "methods": "methods", "k": "k", "p": "p", "bins": "bins",
        "threshold_population": "threshold_population",
    }
    for flag, key in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            data[key] = _coerce(key, value) if isinstance(value, str) else value
    if getattr(args, "rule", None) is not None:
        data["rules"] = (args.rule,)
    if getattr(args, "no_figures", False):
        data["figures"] = False
    cfg = RunConfig(**data)
    for m in cfg.methods:
        try:
            parse_method_id(m)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    for rule in cfg.rules:
        if rule not in RULES:
            raise ConfigError(f"unknown rule {rule!r}, expected one of {RULES}")
    if cfg.threshold_population not in ("full", "test"):
        raise ConfigError("threshold_population must be 'full' or 'test'")
    if cfg.compass_frozen not in compass_mod.FROZEN_MODES:
        raise ConfigError(f"compass_frozen must be one of {compass_mod.FROZEN_MODES}")
    return cfg


def _require(cfg: RunConfig, stage: str, *keys: str) -> None:
    missing = [k for k in keys if not getattr(cfg, k)]
    if missing:
        raise ConfigError(f"{stage} requires config keys: {', '.join(missing)}")


def _open_corpus(slice_id: str, path: str) -> SentenceCorpus:
    try:
        return SentenceCorpus.open(slice_id, path)
    except FileNotFoundError as exc:
        raise ConfigError(str(exc)) from exc


def _training_config(cfg: RunConfig, algorithm: str) -> embedder.TrainingConfig:
    try:
        return embedder.TrainingConfig(
            algorithm=algorithm, dim=cfg.dim, window=cfg.window, negative=cfg.negative,
            epochs=cfg.epochs, initial_lr=cfg.initial_lr, min_lr=cfg.min_lr,
            subsample_t=cfg.subsample_t, min_count=cfg.min_count, seed=cfg.seed,
            threads=cfg.threads,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Provenance sidecars
# ---------------------------------------------------------------------------

_HASH_KEYS = ("corpus_t0", "corpus_t1", "dim", "window", "negative", "epochs",
              "initial_lr", "min_lr", "subsample_t", "min_count", "seed", "compass_frozen")


def config_hash(cfg: RunConfig) -> str:
    blob = "\n".join(f"{k}={getattr(cfg, k)}" for k in _HASH_KEYS)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def write_meta(path: Path, cfg: RunConfig, stage: str) -> None:
    Path(f"{path}.meta").write_text(
        f"config_hash={config_hash(cfg)} seed={cfg.seed} stage={stage}\n", encoding="utf-8"
    )


def check_meta(path: Path, cfg: RunConfig) -> None:
    meta = Path(f"{path}.meta")
    if meta.is_file():
        content = meta.read_text(encoding="utf-8").strip()
        if f"config_hash={config_hash(cfg)}" not in content:
            log.warning("%s was produced under a different configuration (%s)", path, content)


# ---------------------------------------------------------------------------
# Artifact layout inside the working directory
# ---------------------------------------------------------------------------

def _ind_path(workdir: Path, algo: str, slice_id: str) -> Path:
    return workdir / f"ind_{algo.lower()}_{slice_id.lower()}.vec"


def _cmps_dir(workdir: Path, algo: str) -> Path:
    return workdir / f"cmps_{algo.lower()}"


def _scores_path(workdir: Path, method_id: str) -> Path:
    return workdir / f"scores_{method_id}.tsv"


def _labels_path(workdir: Path, method_id: str, rule: str) -> Path:
    return workdir / f"labels_{method_id}_{rule}.tsv"


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def cmd_train(cfg: RunConfig) -> None:
    _require(cfg, "train", "corpus_t0", "corpus_t1", "workdir", "methods")
    workdir = Path(cfg.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    methods = [parse_method_id(m) for m in cfg.methods]
    c0 = _open_corpus("T0", cfg.corpus_t0)
    c1 = _open_corpus("T1", cfg.corpus_t1)

    for algo in sorted({m.algorithm for m in methods if m.method != "TWEC"}):
        tc = _training_config(cfg, algo)
        for corp in (c0, c1):
            path = _ind_path(workdir, algo, corp.slice_id)
            if path.is_file():
                log.info("%s exists, skipping (delete it to retrain)", path.name)
                continue
            log.info("training independent %s space for %s", algo, corp.slice_id)
            vocab = build_vocabulary(corp, cfg.min_count)
            space = embedder.train(corp, embedder.init_space(vocab, tc), tc)
            embedder.save_space(space, path)
            write_meta(path, cfg, "train")

    for algo in sorted({m.algorithm for m in methods if m.method == "TWEC"}):
        d = _cmps_dir(workdir, algo)
        if all((d / n).is_file() for n in ("base.vec", "base.ctx", "t0.vec", "t1.vec")):
            log.info("%s exists, skipping (delete it to retrain)", d.name)
            continue
        log.info("training %s compass (base + both slices, frozen %s)", algo, cfg.compass_frozen)
        model = compass_mod.compass_pipeline(
            c0, c1, _training_config(cfg, algo), workdir=d, frozen=cfg.compass_frozen
        )
        compass_mod.save_compass(model, d)
        write_meta(d / "base.vec", cfg, "train")


def _anchor_rows(s0, s1, anchor_words):
    """Stack anchor vectors in a fixed (sorted) word order."""
    usable = [w for w in anchor_words if w in s0.vocab and w in s1.vocab]
    if len(usable) < 2:
        raise ValueError(f"only {len(usable)} anchor words exist in both spaces")
    x1 = np.stack([s1.vector(w) for w in usable])
    y0 = np.stack([s0.vector(w) for w in usable])
    return x1, y0


def cmd_score(cfg: RunConfig) -> None:
    _require(cfg, "score", "corpus_t0", "corpus_t1", "workdir", "stopwords", "methods")
    workdir = Path(cfg.workdir)
    if not workdir.is_dir():
        raise ConfigError(f"workdir {workdir} does not exist; run `lexdrift train` first")
    c0 = _open_corpus("T0", cfg.corpus_t0)
    c1 = _open_corpus("T1", cfg.corpus_t1)
    v0 = build_vocabulary(c0, cfg.min_count)
    v1 = build_vocabulary(c1, cfg.min_count)
    shared = set(v0.index) & set(v1.index)
    test_words = load_testset(cfg.testset) if cfg.testset else []
    universe = sorted(shared | set(test_words))

    sw = load_stopwords(cfg.stopwords, v0, v1)
    write_wordset_report(sw, workdir / "wordset_SW.tsv")
    cw = common_words(v0, v1, exclude=sw.words)
    if test_words:
        write_wordset_report(resolve_testset(test_words, v0, v1), workdir / "wordset_TEST.tsv")

    for mid_str in cfg.methods:
        mid = parse_method_id(mid_str)
        out = _scores_path(workdir, mid_str)
        if out.is_file():
            log.info("%s exists, skipping (delete it to rescore)", out.name)
            continue
        if mid.method == "TWEC":
            d = _cmps_dir(workdir, mid.algorithm)
            if not (d / "base.vec").is_file():
                raise ConfigError(f"missing compass artifacts in {d}; run `lexdrift train` first")
            check_meta(d / "base.vec", cfg)
            model = compass_mod.load_compass(d, cfg.compass_frozen)
            table = detector.score_direct(
                model.slices["T0"], model.slices["T1"], universe, mid_str
            )
        else:
            p0 = _ind_path(workdir, mid.algorithm, "T0")
            p1 = _ind_path(workdir, mid.algorithm, "T1")
            for p in (p0, p1):
                if not p.is_file():
                    raise ConfigError(f"missing embedding file {p}; run `lexdrift train` first")
                check_meta(p, cfg)
            s0 = embedder.load_space(p0, slice_id="T0")
            s1 = embedder.load_space(p1, slice_id="T1")
            anchor_words = sorted(sw.words if mid.trainset == "SW" else cw.words)
            x1, y0 = _anchor_rows(s0, s1, anchor_words)
            if mid.method == "OP":
                m = procrustes.solve_orthogonal(x1, y0, anchor_set=mid.trainset)
                procrustes.save_map(m, workdir / f"map_{mid_str}.txt")
                table = detector.score_direct(
                    s0, procrustes.apply_map(s1, m), universe, mid_str
                )
            elif mid.method == "LR":
                m = mapper.fit_linear(x1, y0, anchor_set=mid.trainset)
                mapper.save_linear_map(m, workdir / f"map_{mid_str}.txt")
                table = detector.score_predictive(s0, s1, m, universe, mid_str)
            else:  # FFNN
                fc = mapper.FfnnConfig(
                    hidden_dim=cfg.ffnn_hidden or None, epochs=cfg.ffnn_epochs,
                    learning_rate=cfg.ffnn_lr, batch_size=cfg.ffnn_batch, seed=cfg.seed,
                )
                m = mapper.fit_ffnn(x1, y0, fc, anchor_set=mid.trainset)
                mapper.save_neural_map(m, workdir / f"map_{mid_str}.txt")
                table = detector.score_predictive(s0, s1, m, universe, mid_str)
        detector.write_scores(table, out)
        write_meta(out, cfg, "score")
        log.info("%s: scored %d words (%d unscorable)", mid_str, len(table.scores),
                 len(table.unscorable))


def cmd_classify(cfg: RunConfig) -> None:
    _require(cfg, "classify", "workdir", "testset", "methods")
    workdir = Path(cfg.workdir)
    test_words = load_testset(cfg.testset)
    restrict = set(test_words) if cfg.threshold_population == "test" else None
    for mid_str in cfg.methods:
        spath = _scores_path(workdir, mid_str)
        if not spath.is_file():
            raise ConfigError(f"missing {spath}; run `lexdrift score` first")
        check_meta(spath, cfg)
        table = detector.read_scores(spath, mid_str)
        missing = [w for w in test_words if w not in table.scores]
        if missing:
            table = detector.ChangeScoreTable(
                method_id=mid_str, scores=table.scores, unscorable=frozenset(missing)
            )
        for rule in cfg.rules:
            stats = detector.threshold_stats(table, rule, restrict_to=restrict)
            labels = detector.classify(table, stats, test_words)
            lpath = _labels_path(workdir, mid_str, rule)
            detector.write_labels(labels, lpath)
            write_meta(lpath, cfg, "classify")
            log.info("%s %s: cutoff %.6f over %d words, flagged %d/%d",
                     mid_str, rule, stats.cutoff, stats.population_size,
                     sum(labels.labels.values()), len(labels.labels))


def cmd_evaluate(cfg: RunConfig) -> None:
    _require(cfg, "evaluate", "workdir", "gold", "stopwords", "methods")
    workdir = Path(cfg.workdir)
    try:
        gold = evaluator.load_gold(cfg.gold)
    except FileNotFoundError as exc:
        raise ConfigError(str(exc)) from exc
    sw_path = Path(cfg.stopwords)
    if not sw_path.is_file():
        raise ConfigError(f"stopword file not found: {sw_path}")
    sw_list = sorted({w.strip() for w in sw_path.read_text(encoding="utf-8").splitlines()
                      if w.strip()})
    shifted = gold.shifted
    k = cfg.k or max(1, len(shifted))
    reports = []
    for mid_str in cfg.methods:
        spath = _scores_path(workdir, mid_str)
        if not spath.is_file():
            raise ConfigError(f"missing {spath}; run `lexdrift score` first")
        table = detector.read_scores(spath, mid_str)
        accs = {}
        for rule in RULES:
            lpath = _labels_path(workdir, mid_str, rule)
            if not lpath.is_file():
                raise ConfigError(f"missing {lpath}; run `lexdrift classify` for rule {rule}")
            accs[rule] = evaluator.accuracy(detector.read_labels(lpath, mid_str, rule), gold)
        reports.append(evaluator.EvalReport(
            method_id=mid_str,
            cs_avg_sw=evaluator.avg_anchor_cosine(table, sw_list),
            acc_mean=accs["MEAN"],
            acc_2sigma=accs["MEAN_MINUS_2SIGMA"],
            mu_rank=evaluator.mean_normalized_rank(table, shifted),
            recall_p=evaluator.recall_at_fraction(table, shifted, cfg.p),
            recall_k=evaluator.recall_at_k(table, shifted, k),
        ))
    evaluator.write_report(reports, workdir / "report.tsv")
    write_meta(workdir / "report.tsv", cfg, "evaluate")
    chosen = evaluator.select_models(reports, top_n=min(cfg.select_top, len(reports)))
    evaluator.write_report(chosen, workdir / "selection.tsv")
    print("\t".join(evaluator.REPORT_COLUMNS))
    for r in reports:
        print(f"{r.method_id}\t{r.cs_avg_sw:.6f}\t{r.acc_mean:.6f}\t{r.acc_2sigma:.6f}"
              f"\t{r.mu_rank:.6f}\t{r.recall_p:.6f}\t{r.recall_k:.6f}")
    print("selected (by anchor stability): " + ", ".join(r.method_id for r in chosen))
    if cfg.figures:
        plots.render_report(reports, workdir / "report.png")
        log.info("wrote %s", workdir / "report.png")


def cmd_report_hist(cfg: RunConfig) -> None:
    _require(cfg, "report-hist", "workdir", "methods")
    workdir = Path(cfg.workdir)
    test_words = load_testset(cfg.testset) if cfg.testset else []
    restrict = set(test_words) if (cfg.threshold_population == "test" and test_words) else None
    hists: dict[str, list] = {}
    cutoffs: dict[str, dict[str, float]] = {}
    for mid_str in cfg.methods:
        spath = _scores_path(workdir, mid_str)
        if not spath.is_file():
            raise ConfigError(f"missing {spath}; run `lexdrift score` first")
        table = detector.read_scores(spath, mid_str)
        rows = detector.histogram(table, cfg.bins)
        out = workdir / f"hist_{mid_str}.tsv"
        detector.write_histogram(rows, out)
        write_meta(out, cfg, "report-hist")
        hists[mid_str] = rows
        cutoffs[mid_str] = {
            rule: detector.threshold_stats(table, rule, restrict_to=restrict).cutoff
            for rule in cfg.rules
        }
    if cfg.figures:
        plots.render_histograms(hists, workdir / "hist.png", cutoffs)
        log.info("wrote %s", workdir / "hist.png")


def cmd_synth(args: argparse.Namespace) -> None:
    out_dir = Path(args.out)
    try:
        base = synthgen.DriftSpec(
            vocab_size=args.vocab_size,
            topics=args.topics,
            sentences_per_slice=args.sentences,
            sentence_length=args.sentence_length,
            replace_prob=args.replace_prob,
            seed=args.seed if args.seed is not None else 1,
        )
        spec = replace(base, shift_pairs=synthgen.default_shift_pairs(base, args.shifts))
        bundle = synthgen.generate(spec, out_dir)
        words, gold = synthgen.emit_testset(bundle, stable_n=args.stable, shifted_n=args.shifts)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    testset_path = out_dir / "testset.txt"
    testset_path.write_text("".join(w + "\n" for w in words), encoding="utf-8")
    gold_path = out_dir / "gold.tsv"
    evaluator.write_gold(gold, gold_path)
    cfg_path = out_dir / "run.cfg"
    cfg_path.write_text(
        "# generated by `lexdrift synth`\n"
        f"corpus_t0 = {bundle.corpus_t0.source}\n"
        f"corpus_t1 = {bundle.corpus_t1.source}\n"
        f"stopwords = {bundle.stopword_file}\n"
        f"testset = {testset_path}\n"
        f"gold = {gold_path}\n"
        f"workdir = {out_dir / 'work'}\n"
        f"seed = {spec.seed}\n"
        "methods = TWEC_CBOW, OP_SW_CBOW, OP_CW_CBOW\n",
        encoding="utf-8",
    )
    print(f"synthetic bundle in {out_dir}")
    print(f"  corpora:   {bundle.corpus_t0.source.name}, {bundle.corpus_t1.source.name}")
    print(f"  stopwords: {bundle.stopword_file.name}")
    print(f"  test set:  {testset_path.name} ({len(words)} words, "
          f"{len(gold.shifted)} shifted)")
    print(f"  gold:      {gold_path.name}")
    print(f"  config:    {cfg_path.name}")


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lexdrift",
        description="Detect lexical semantic change between two time-sliced corpora.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--workdir", help="artifact directory (overrides config)")
        sp.add_argument("--seed", type=int, help="training seed (overrides config)")
        sp.add_argument("--threads", type=int, help="training threads (overrides config)")
        sp.add_argument("--methods", help="comma-separated method ids, e.g. TWEC_CBOW,OP_SW_SG")
        sp.add_argument("--rule", choices=RULES, help="restrict to one threshold rule")
        sp.add_argument("--k", type=int, help="k for recall-at-k")
        sp.add_argument("--p", type=float, help="fraction for recall-at-fraction")
        sp.add_argument("--bins", type=int, help="histogram bin count")
        sp.add_argument("--threshold-population", dest="threshold_population",
                        choices=("full", "test"),
                        help="estimate cutoffs on all scored words or on the test set only")
        sp.add_argument("--no-figures", dest="no_figures", action="store_true",
                        help="skip PNG rendering")

    for name, help_text in (
        ("train", "train the embedding spaces the chosen methods need"),
        ("score", "compute change scores per method over the shared vocabulary"),
        ("classify", "derive binary labels from score statistics"),
        ("evaluate", "compare labels and rankings against gold data"),
        ("report-hist", "emit score histograms (TSV + figure)"),
    ):
        add_common(sub.add_parser(name, help=help_text))

    sp = sub.add_parser("synth", help="generate a synthetic corpus pair with known shifts")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--vocab-size", dest="vocab_size", type=int, default=2000)
    sp.add_argument("--topics", type=int, default=10)
    sp.add_argument("--sentences", type=int, default=60_000)
    sp.add_argument("--sentence-length", dest="sentence_length", type=int, default=12)
    sp.add_argument("--shifts", type=int, default=6)
    sp.add_argument("--stable", type=int, default=12)
    sp.add_argument("--replace-prob", dest="replace_prob", type=float, default=1.0)
    return parser


_STAGES = {
    "train": cmd_train,
    "score": cmd_score,
    "classify": cmd_classify,
    "evaluate": cmd_evaluate,
    "report-hist": cmd_report_hist,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            cmd_synth(args)
        else:
            _STAGES[args.command](build_run_config(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - boundary: report and set the exit code
        log.debug("runtime failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
