import json

import numpy as np

from ctxattr import pipeline
from ctxattr.attribution import all_layer_contributions, rollout
from ctxattr.cli import main
from ctxattr.errors import InvariantError
from ctxattr.model import forward_trace
from ctxattr.modelio import load_model
from ctxattr.segmentation import load_dataset

from conftest import DATA, GOLDEN, GOLDEN_ARGS, assert_reports_match


def test_golden_run_is_reproducible(tmp_path):
    assert main(["run", *GOLDEN_ARGS, "--out", str(tmp_path / "a")]) == 0
    assert main(["run", *GOLDEN_ARGS, "--out", str(tmp_path / "b")]) == 0
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes(), f.name
    assert_reports_match(tmp_path / "a", GOLDEN)


def test_summary_accounting(tmp_path):
    assert main(["run", *GOLDEN_ARGS, "--out", str(tmp_path), "--max-total-tokens", "245"]) == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["admitted"] + s["rejected_length"] + s["rejected_short"] == s["dataset_size"] == 20
    assert s["rejected_length"] > 0
    assert len(s["rejected"]) == s["rejected_length"] + s["rejected_short"]
    n_records = len((tmp_path / "samples.jsonl").read_text().splitlines())
    assert n_records == s["admitted"]


def test_short_generations_are_counted(tmp_path):
    code = main(["run", *GOLDEN_ARGS[:-4], "--max-new", "8", "--out", str(tmp_path)])
    assert code == 1  # everything generated <= 10 tokens


def test_empty_dataset(tmp_path, capsys):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    code = main(["run", "--model", str(DATA / "toy_model.ctxw"), "--dataset", str(empty), "--out", str(tmp_path / "o")])
    assert code == 1
    assert "no admitted samples" in capsys.readouterr().err


def test_bad_inputs(tmp_path, capsys):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"CTXW\x01\x00")
    assert main(["run", "--model", str(bad), "--dataset", str(DATA / "toy_dataset.jsonl"),
                 "--out", str(tmp_path / "o")]) == 1
    assert main(["run", "--model", str(DATA / "toy_model.ctxw"), "--dataset", str(tmp_path / "missing.jsonl"),
                 "--out", str(tmp_path / "o")]) == 1
    assert "error:" in capsys.readouterr().err


def test_invariant_violation_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise InvariantError("row sums deviate")
    monkeypatch.setattr(pipeline.attribution, "rollout", boom)
    assert main(["run", *GOLDEN_ARGS, "--out", str(tmp_path)]) == 2


def test_variants_run(tmp_path):
    args = [*GOLDEN_ARGS, "--intervention", "replace-last-ex", "--task-description", "--shuffle-seed", "3",
            "--dominance-mode", "src-only", "--score-mode", "combined", "--per-token", "--num-bins", "5"]
    assert main(["run", *args, "--out", str(tmp_path / "a")]) == 0
    assert main(["run", *args, "--out", str(tmp_path / "b")]) == 0
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
    rec = json.loads((tmp_path / "a" / "samples.jsonl").read_text().splitlines()[0])
    assert rec["parts"][0] == "TASK"
    assert len(rec["per_token"]) == rec["generated_len"]
    assert len(rec["stage_profile"]["bins"]) == 5
    assert np.allclose(np.sum(rec["per_token"], axis=1), 1, atol=1e-6)
    parts = (tmp_path / "a" / "parts.csv").read_text().splitlines()
    assert parts[0] == "run,part,mean_contribution,samples"
    assert any(line.startswith("toy,TASK,") for line in parts)


def test_shuffle_seed_changes_example_order(tmp_path):
    main(["run", *GOLDEN_ARGS, "--out", str(tmp_path / "a")])
    main(["run", *GOLDEN_ARGS, "--shuffle-seed", "1", "--out", str(tmp_path / "b")])
    a = (tmp_path / "a" / "samples.jsonl").read_text()
    b = (tmp_path / "b" / "samples.jsonl").read_text()
    assert a != b


def test_synth_reproducible(tmp_path):
    for tag, seed in (("a", 7), ("b", 7), ("c", 8)):
        assert main(["synth", "--seed", str(seed), "--size", "4", "--model-out", str(tmp_path / f"{tag}.bin"),
                     "--dataset-out", str(tmp_path / f"{tag}.jsonl")]) == 0
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    a, c = load_model(tmp_path / "a.bin"), load_model(tmp_path / "c.bin")
    assert not np.array_equal(a.layers[0].wq, c.layers[0].wq)
    samples = load_dataset(tmp_path / "a.jsonl")
    assert len(samples) == 4 and all(s.num_examples == 5 for s in samples)


def test_synth_model_passes_invariants(tmp_path):
    main(["synth", "--seed", "11", "--size", "2", "--layers", "3", "--heads", "4", "--d-head", "2",
          "--text", "--model-out", str(tmp_path / "m.txt"), "--dataset-out", str(tmp_path / "d.jsonl")])
    w = load_model(tmp_path / "m.txt")
    assert w.config.num_layers == 3 and w.config.d_model == 8
    tokens = np.random.default_rng(0).integers(0, 256, size=48)
    _, trace = forward_trace(w, tokens)
    for lt in trace.layers:
        assert np.abs(lt.attn.sum(axis=-1) - 1).max() < 1e-6
        recon = lt.transformed().sum(axis=1) + lt.bias
        assert (np.linalg.norm(recon - lt.outputs, axis=1) / np.linalg.norm(lt.outputs, axis=1)).max() < 1e-4
    layers = all_layer_contributions(trace)
    for c in layers + [rollout(layers)]:
        c.check()


def test_inspect_prints_table(capsys):
    assert main(["inspect", *GOLDEN_ARGS[:-2], "--index", "2"]) == 0
    out = capsys.readouterr().out
    assert "ratio to E1|SRC" in out
    assert out.count("\n") >= 15
    line = next(l for l in out.splitlines() if l.startswith("E1|SRC"))
    assert line.split()[-1] == "1.0000"


def test_inspect_out_of_range():
    assert main(["inspect", *GOLDEN_ARGS[:-2], "--index", "99"]) == 1
