"""Config handling, exit codes, the full pipeline, resumability, determinism."""

import logging

import pytest

from lexdrift import cli

METHODS = "TWEC_CBOW,OP_SW_CBOW,LR_SW_CBOW,FFNN_SW_CBOW"


def run(argv):
    return cli.main(argv)


# ---------------------------------------------------------------------------
# Config file parsing and precedence
# ---------------------------------------------------------------------------

def write_cfg(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_parse_config_file_comments_and_blanks(tmp_path):
    p = write_cfg(tmp_path / "c.cfg",
                  "# a comment\n\nseed = 5  # trailing comment\nworkdir = /tmp/x\n")
    assert cli.parse_config_file(p) == {"seed": "5", "workdir": "/tmp/x"}


def test_parse_config_file_errors(tmp_path):
    with pytest.raises(cli.ConfigError, match="not found"):
        cli.parse_config_file(tmp_path / "missing.cfg")
    p = write_cfg(tmp_path / "c.cfg", "seed 5\n")
    with pytest.raises(cli.ConfigError, match="expected 'key = value'"):
        cli.parse_config_file(p)
    p = write_cfg(tmp_path / "d.cfg", "seed = 5\nseed = 6\n")
    with pytest.raises(cli.ConfigError, match="duplicate key"):
        cli.parse_config_file(p)


def build(argv):
    return cli.build_run_config(cli.build_parser().parse_args(argv))


def test_flags_override_config_file(tmp_path):
    p = write_cfg(tmp_path / "c.cfg", "seed = 5\nthreads = 2\nbins = 10\n")
    cfg = build(["train", "--config", str(p), "--seed", "9"])
    assert cfg.seed == 9  # flag wins
    assert cfg.threads == 2  # file survives where no flag was given
    assert cfg.bins == 10
    assert cfg.dim == 100  # untouched default


def test_methods_and_rule_flags(tmp_path):
    cfg = build(["score", "--methods", "TWEC_SG, OP_CW_CBOW"])
    assert cfg.methods == ("TWEC_SG", "OP_CW_CBOW")
    cfg = build(["classify", "--rule", "MEAN"])
    assert cfg.rules == ("MEAN",)
    cfg = build(["classify"])
    assert cfg.rules == ("MEAN", "MEAN_MINUS_2SIGMA")
    cfg = build(["report-hist", "--no-figures"])
    assert cfg.figures is False
    cfg = build(["classify", "--threshold-population", "test"])
    assert cfg.threshold_population == "test"


def test_bad_values_raise_config_errors(tmp_path):
    with pytest.raises(cli.ConfigError, match="unknown config key"):
        build(["train", "--config", str(write_cfg(tmp_path / "a.cfg", "sed = 1\n"))])
    with pytest.raises(cli.ConfigError, match="cannot parse"):
        build(["train", "--config", str(write_cfg(tmp_path / "b.cfg", "seed = ten\n"))])
    with pytest.raises(cli.ConfigError, match="unknown method"):
        build(["train", "--methods", "NOPE_SW_CBOW"])
    with pytest.raises(cli.ConfigError, match="unknown rule"):
        build(["train", "--config", str(write_cfg(tmp_path / "c.cfg", "rules = MEDIAN\n"))])
    with pytest.raises(cli.ConfigError, match="threshold_population"):
        build(["train", "--config", str(write_cfg(tmp_path / "d.cfg",
                                                  "threshold_population = all\n"))])
    with pytest.raises(cli.ConfigError, match="compass_frozen"):
        build(["train", "--config", str(write_cfg(tmp_path / "e.cfg",
                                                  "compass_frozen = everything\n"))])


def test_config_hash_tracks_training_keys():
    a = cli.RunConfig(seed=1)
    b = cli.RunConfig(seed=2)
    c = cli.RunConfig(seed=1, bins=99)  # bins is not training-relevant
    assert cli.config_hash(a) != cli.config_hash(b)
    assert cli.config_hash(a) == cli.config_hash(c)
    assert len(cli.config_hash(a)) == 16


def test_check_meta_warns_on_mismatch(tmp_path, caplog):
    target = tmp_path / "scores.tsv"
    target.write_text("a\t0.5\n", encoding="utf-8")
    cli.write_meta(target, cli.RunConfig(seed=1), "score")
    with caplog.at_level(logging.WARNING, logger="lexdrift"):
        cli.check_meta(target, cli.RunConfig(seed=2))
    assert any("different configuration" in r.message for r in caplog.records)
    caplog.clear()
    with caplog.at_level(logging.WARNING, logger="lexdrift"):
        cli.check_meta(target, cli.RunConfig(seed=1))
    assert not caplog.records


# ---------------------------------------------------------------------------
# Exit codes
# ---------------------------------------------------------------------------

def test_exit_code_two_for_config_problems(tmp_path, capsys):
    assert run(["score", "--workdir", str(tmp_path / "nope")]) == 2
    assert "config error" in capsys.readouterr().err
    assert run(["train", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert run(["synth", "--out", str(tmp_path / "s"), "--vocab-size", "10",
                "--topics", "10"]) == 2


def test_exit_code_two_for_missing_artifacts(tmp_path):
    cfg = write_cfg(tmp_path / "c.cfg",
                    f"workdir = {tmp_path / 'work'}\ntestset = {tmp_path / 't.txt'}\n")
    (tmp_path / "work").mkdir()
    (tmp_path / "t.txt").write_text("a\n", encoding="utf-8")
    assert run(["classify", "--config", str(cfg)]) == 2  # no scores yet


def test_exit_code_one_for_runtime_failures(tmp_path, capsys):
    work = tmp_path / "work"
    work.mkdir()
    (tmp_path / "t.txt").write_text("a\n", encoding="utf-8")
    (work / "scores_TWEC_CBOW.tsv").write_text("a 0.5\n", encoding="utf-8")  # no tab
    cfg = write_cfg(tmp_path / "c.cfg",
                    f"workdir = {work}\ntestset = {tmp_path / 't.txt'}\n")
    assert run(["classify", "--config", str(cfg)]) == 1
    assert "error" in capsys.readouterr().err


def test_argparse_rejects_unknown_subcommand():
    with pytest.raises(SystemExit) as exc:
        run(["frobnicate"])
    assert exc.value.code == 2


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    assert run(["synth", "--out", str(root), "--vocab-size", "500", "--topics", "4",
                "--sentences", "4000", "--shifts", "2", "--stable", "5",
                "--seed", "3"]) == 0
    cfg = root / "run.cfg"
    with cfg.open("a", encoding="utf-8") as fh:
        fh.write("dim = 32\nepochs = 2\nwindow = 3\n")
    args = ["--config", str(cfg), "--methods", METHODS]
    for stage in ("train", "score", "classify", "evaluate", "report-hist"):
        assert run([stage, *args]) == 0, f"stage {stage} failed"
    return root


def test_pipeline_writes_every_artifact(pipeline):
    work = pipeline / "work"
    expected = [
        "ind_cbow_t0.vec", "ind_cbow_t0.ctx", "ind_cbow_t1.vec", "ind_cbow_t1.ctx",
        "cmps_cbow/merged.txt", "cmps_cbow/base.vec", "cmps_cbow/base.ctx",
        "cmps_cbow/t0.vec", "cmps_cbow/t1.vec",
        "wordset_SW.tsv", "wordset_TEST.tsv",
        "map_OP_SW_CBOW.txt", "map_LR_SW_CBOW.txt", "map_FFNN_SW_CBOW.txt",
        "report.tsv", "selection.tsv", "hist.png", "report.png",
    ]
    for mid in METHODS.split(","):
        expected.append(f"scores_{mid}.tsv")
        expected.append(f"hist_{mid}.tsv")
        for rule in ("MEAN", "MEAN_MINUS_2SIGMA"):
            expected.append(f"labels_{mid}_{rule}.tsv")
    for rel in expected:
        assert (work / rel).is_file(), f"missing {rel}"
    assert (work / "report.png").stat().st_size > 1000
    assert (work / "hist.png").stat().st_size > 1000


def test_pipeline_report_contents(pipeline):
    lines = (pipeline / "work" / "report.tsv").read_text(encoding="utf-8").splitlines()
    assert lines[0].split("\t")[0] == "method_id"
    assert len(lines) == 1 + len(METHODS.split(","))
    sel = (pipeline / "work" / "selection.tsv").read_text(encoding="utf-8").splitlines()
    assert {r.split("\t")[0] for r in sel[1:]} <= set(METHODS.split(","))


def test_pipeline_meta_sidecars(pipeline):
    meta = (pipeline / "work" / "scores_TWEC_CBOW.tsv.meta").read_text(encoding="utf-8")
    assert "config_hash=" in meta and "stage=score" in meta and "seed=3" in meta
    assert "20" not in meta.split("config_hash=")[0]  # no timestamps anywhere
    train_meta = (pipeline / "work" / "ind_cbow_t0.vec.meta").read_text(encoding="utf-8")
    assert "stage=train" in train_meta


def test_pipeline_labels_are_test_words_only(pipeline):
    testset = (pipeline / "testset.txt").read_text(encoding="utf-8").split()
    labels = (pipeline / "work" / "labels_TWEC_CBOW_MEAN.tsv").read_text(
        encoding="utf-8").splitlines()
    assert sorted(l.split("\t")[0] for l in labels) == sorted(testset)
    assert all(l.split("\t")[1] in ("0", "1") for l in labels)


def test_train_is_resumable(pipeline):
    work = pipeline / "work"
    tracked = [work / "ind_cbow_t0.vec", work / "cmps_cbow" / "base.vec"]
    before = [p.stat().st_mtime_ns for p in tracked]
    assert run(["train", "--config", str(pipeline / "run.cfg"),
                "--methods", METHODS]) == 0
    after = [p.stat().st_mtime_ns for p in tracked]
    assert before == after  # nothing was retrained


def test_score_skips_existing_tables(pipeline):
    work = pipeline / "work"
    target = work / "scores_TWEC_CBOW.tsv"
    before = target.stat().st_mtime_ns
    assert run(["score", "--config", str(pipeline / "run.cfg"),
                "--methods", "TWEC_CBOW"]) == 0
    assert target.stat().st_mtime_ns == before


def test_two_runs_are_byte_identical(tmp_path):
    outputs = []
    for name in ("one", "two"):
        root = tmp_path / name
        assert run(["synth", "--out", str(root), "--vocab-size", "400", "--topics", "4",
                    "--sentences", "2500", "--shifts", "2", "--stable", "4",
                    "--seed", "8"]) == 0
        cfg = root / "run.cfg"
        with cfg.open("a", encoding="utf-8") as fh:
            fh.write("dim = 24\nepochs = 2\nwindow = 3\n")
        args = ["--config", str(cfg), "--methods", "TWEC_CBOW,OP_SW_CBOW"]
        for stage in ("train", "score", "classify"):
            assert run([stage, *args]) == 0
        outputs.append(root / "work")
    rels = ["ind_cbow_t0.vec", "ind_cbow_t1.vec", "cmps_cbow/base.vec",
            "cmps_cbow/t0.vec", "cmps_cbow/t1.vec",
            "scores_TWEC_CBOW.tsv", "scores_OP_SW_CBOW.tsv",
            "labels_TWEC_CBOW_MEAN.tsv", "labels_OP_SW_CBOW_MEAN_MINUS_2SIGMA.tsv"]
    for rel in rels:
        a = (outputs[0] / rel).read_bytes()
        b = (outputs[1] / rel).read_bytes()
        assert a == b, f"{rel} differs between identical runs"
