import json
import os
import subprocess

import pytest

import cursive


def test_word_bank_is_seeded():
    assert cursive.word_bank(7, 20) == cursive.word_bank(7, 20)
    assert cursive.word_bank(7, 20) != cursive.word_bank(8, 20)


def test_encode_decode_round_trip():
    points = [(0.0, 0.0, 1), (0.1, 0.05, 1), (0.25, -0.1, 0), (0.3, 0.0, 1)]
    tokens = cursive.encode(points, word_breaks=[4])
    cursive.validate_grammar(tokens)
    decoded, breaks = cursive.decode(tokens)
    assert breaks == [4]
    for (x, y, p), (dx, dy, dp) in zip(points, decoded):
        assert abs(x - dx) < 0.01 and abs(y - dy) < 0.01 and p == dp


def test_grammar_violation_raises():
    with pytest.raises(cursive.GrammarError):
        cursive.validate_grammar([0, 0, 521])


def test_ingest_flips_screen_coordinates():
    records = [{"word": "ab", "points": [[0, 0, 1], [1, 2, 1]], "metadata": {"coords": "screen"}}]
    out = cursive.ingest(records)
    assert out[0]["points"][1][1] == -2
    assert out[0]["metadata"]["coords"] == "canonical"
    assert cursive.ingest(out) == out


def test_ingest_reports_schema_path():
    with pytest.raises(cursive.SchemaError, match=r"\$\[0\]\.points"):
        cursive.ingest([{"word": "a"}])


def test_project_config_overrides():
    cfg = cursive.project_config(overrides=["model.n_blocks=2"])
    assert cfg["model"]["n_blocks"] == 2
    assert cfg["model"]["stroke_vocab"] == 523
    with pytest.raises(cursive.ConfigError):
        cursive.project_config(overrides=["model.stroke_vocab=5"])


def test_synth_words_are_reproducible():
    a = cursive.synth_words(["hello", "x1"], seed=3)
    assert a == cursive.synth_words(["hello", "x1"], seed=3)
    assert [r["word"] for r in a] == ["hello", "x1"]


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    cli = os.environ.get("CURSIVE_CLI")
    if not cli:
        pytest.skip("CURSIVE_CLI is not set")
    work = tmp_path_factory.mktemp("project")
    config = {
        "model": {"n_blocks": 1, "d_model": 16, "n_heads_self": 2, "n_heads_cross": 2},
        "dataset": {"train_sequences": 100, "test_sequences": 10},
        "train": {"batch_size": 2, "eval_every": 2},
    }
    (work / "project.json").write_text(json.dumps(config))
    for args in (["synth", "--n", "20"], ["build-corpus"], ["train", "--steps", "2"]):
        subprocess.run([cli, "--config", "project.json", *args], cwd=work, check=True, capture_output=True)
    return work / "checkpoints" / "last.ckpt"


def test_model_generates_and_regenerates(checkpoint):
    model = cursive.Model(checkpoint)
    page = model.generate("one two", seed=5, max_tokens=120)
    assert page == model.generate("one two", seed=5, max_tokens=120)
    assert [w["text"] for w in page["words"]] == ["one", "two"]
    cursive.validate_grammar(page["tokens"])
    end0 = page["words"][0]["span"][1]
    again = model.regenerate(page, [1], seed=6, max_tokens=120)
    assert again["tokens"][:end0] == page["tokens"][:end0]
    assert "<svg" in cursive.render_svg(again)


def test_missing_checkpoint_raises():
    with pytest.raises(cursive.ArtifactError):
        cursive.Model("/nonexistent/ckpt")


def test_shipped_default_config_matches_builtin_defaults():
    path = os.path.join(os.path.dirname(__file__), "..", "..", "configs", "default.json")
    assert cursive.project_config(path)["hash"] == cursive.project_config()["hash"]
