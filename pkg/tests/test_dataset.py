import json
import os

import numpy as np
import pytest

from emoctc import dataset
from emoctc.dataset import ExpertAnnotation
from emoctc.errors import (BadConfig, BadSampleRate, EmptyCorpus,
                           LayoutNotRecognized, MissingAudio, ParseError,
                           PartialImport)


def ann(*answers):
    return [ExpertAnnotation("u", f"a{i}", a) for i, a in enumerate(answers)]


def test_resolve_final_label_majority():
    assert dataset.resolve_final_label(ann("anger", "anger", "sadness")) == "anger"
    assert dataset.resolve_final_label(ann("neutral",) * 1) == "neutral"
    # exactly half is enough when unique
    assert dataset.resolve_final_label(
        ann("anger", "anger", "sadness", "fear")) == "anger"


def test_resolve_final_label_ties_and_no_winner():
    # two categories at exactly half -> inconsistent
    assert dataset.resolve_final_label(
        ann("anger", "anger", "sadness", "sadness")) is None
    assert dataset.resolve_final_label(
        ann("anger", "sadness", "fear")) is None


def test_resolve_final_label_matches_brute_force_counting():
    rng = np.random.default_rng(1)
    cats = dataset.RAW_CATEGORIES
    for _ in range(300):
        n = int(rng.integers(1, 5))
        answers = [cats[int(rng.integers(len(cats)))] for _ in range(n)]
        got = dataset.resolve_final_label(ann(*answers))
        winners = {c for c in set(answers)
                   if 2 * answers.count(c) >= n}
        expected = winners.pop() if len(winners) == 1 else None
        assert got == expected


def test_synthetic_corpus_structure(small_corpus):
    assert len(small_corpus) == 12
    speakers = {u.speaker_id for u in small_corpus}
    groups = {u.group_id for u in small_corpus}
    assert len(speakers) == 10 and len(groups) == 5
    for u in small_corpus:
        assert 2.0 <= u.duration_s <= 5.0
        assert 3 <= len(u.expert_annotations) <= 4
        assert u.final_label in dataset.EMOTIONS
        # at most one dissenter
        raw = {"anger": "anger", "excitement": "excited",
               "neutral": "neutral", "sadness": "sadness"}[u.final_label]
        dissent = [a for a in u.expert_annotations if a.answer != raw]
        assert len(dissent) <= 1


def test_synthetic_corpus_deterministic():
    a = dataset.generate_synthetic_corpus(seed=5, n_per_class=2)
    b = dataset.generate_synthetic_corpus(seed=5, n_per_class=2)
    for ua, ub in zip(a, b):
        assert ua.id == ub.id and ua.final_label == ub.final_label
        np.testing.assert_array_equal(ua.samples, ub.samples)
    c = dataset.generate_synthetic_corpus(seed=6, n_per_class=2)
    assert any(not np.array_equal(ua.samples, uc.samples)
               for ua, uc in zip(a, c))


def test_synthetic_corpus_config_validation():
    with pytest.raises(BadConfig):
        dataset.generate_synthetic_corpus(0, n_per_class=0)
    with pytest.raises(BadConfig):
        dataset.generate_synthetic_corpus(0, duration_range_s=(0.1, 1.0))
    with pytest.raises(BadConfig):
        dataset.generate_synthetic_corpus(0, disagreement_rate=1.5)


def test_manifest_roundtrip(small_corpus, small_corpus_dir):
    loaded = dataset.load_manifest(str(small_corpus_dir / "manifest.jsonl"))
    assert len(loaded) == len(small_corpus)
    for orig, back in zip(small_corpus, loaded):
        assert back.id == orig.id
        assert back.speaker_id == orig.speaker_id
        assert back.group_id == orig.group_id
        assert back.final_label == orig.final_label
        assert [(a.assessor_id, a.answer) for a in back.expert_annotations] \
            == [(a.assessor_id, a.answer) for a in orig.expert_annotations]
        # PCM16 quantization only
        assert np.max(np.abs(back.samples - orig.samples)) < 1e-4


def test_manifest_byte_identical_per_seed(tmp_path):
    for d in ("a", "b"):
        corpus = dataset.generate_synthetic_corpus(seed=9, n_per_class=2)
        dataset.save_manifest(corpus, str(tmp_path / d))
    ma = (tmp_path / "a" / "manifest.jsonl").read_bytes()
    mb = (tmp_path / "b" / "manifest.jsonl").read_bytes()
    assert ma == mb


def test_load_manifest_parse_errors(tmp_path, small_corpus_dir):
    path = tmp_path / "bad.jsonl"
    path.write_text("{not json\n")
    with pytest.raises(ParseError) as exc:
        dataset.load_manifest(str(path))
    assert exc.value.line_no == 1

    path.write_text(json.dumps({"id": "x"}) + "\n")
    with pytest.raises(ParseError):
        dataset.load_manifest(str(path))

    # duplicate ids
    rows = (small_corpus_dir / "manifest.jsonl").read_text().splitlines()
    dup = tmp_path / "dup.jsonl"
    dup.write_text(rows[0] + "\n" + rows[0] + "\n")
    os.symlink(small_corpus_dir / "audio", tmp_path / "audio")
    with pytest.raises(ParseError) as exc:
        dataset.load_manifest(str(dup))
    assert "duplicate" in str(exc.value)

    # label inconsistent with expert answers
    row = json.loads(rows[0])
    row["label"] = "sadness" if row["label"] != "sadness" else "anger"
    bad = tmp_path / "inconsistent.jsonl"
    bad.write_text(json.dumps(row) + "\n")
    with pytest.raises(ParseError):
        dataset.load_manifest(str(bad))


def test_load_manifest_missing_audio(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text(json.dumps({
        "id": "u1", "audio": "audio/u1.wav", "speaker": "s", "group": "g",
        "experts": [], "label": None}) + "\n")
    with pytest.raises(MissingAudio):
        dataset.load_manifest(str(path))


def test_load_manifest_empty(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text("\n")
    with pytest.raises(EmptyCorpus):
        dataset.load_manifest(str(path))


def test_read_wav_rejects_wrong_rate(tmp_path):
    import wave
    path = tmp_path / "bad.wav"
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(8000)
        wf.writeframes(b"\x00\x00" * 100)
    with pytest.raises(BadSampleRate):
        dataset.read_wav(str(path))


def test_filter_four_emotions_rewrites_raw_names():
    u = dataset.LabeledUtterance(
        id="u", samples=np.zeros(16000), speaker_id="s", group_id="g",
        expert_annotations=ann("excited", "excited", "excited"),
        final_label="excited")
    out = dataset.filter_four_emotions(dataset.Corpus([u]))
    assert out.utterances[0].final_label == "excitement"


def test_filter_four_emotions_drops_unresolved():
    keep = dataset.LabeledUtterance(
        id="a", samples=np.zeros(16000), speaker_id="s", group_id="g",
        expert_annotations=ann("anger", "anger"), final_label="anger")
    drop1 = dataset.LabeledUtterance(
        id="b", samples=np.zeros(16000), speaker_id="s", group_id="g",
        expert_annotations=ann("fear", "fear"), final_label="fear")
    drop2 = dataset.LabeledUtterance(
        id="c", samples=np.zeros(16000), speaker_id="s", group_id="g",
        expert_annotations=ann("anger", "fear"), final_label=None)
    out = dataset.filter_four_emotions(dataset.Corpus([keep, drop1, drop2]))
    assert [u.id for u in out] == ["a"]
    with pytest.raises(EmptyCorpus):
        dataset.filter_four_emotions(dataset.Corpus([drop1]))


# --- IEMOCAP-layout import on a hand-built fixture tree -------------------

EVAL_FIXTURE = """\
% header noise

[6.2901 - 8.2357]\tSes01F_impro01_F000\tneu\t[2.5, 2.5, 2.5]
C-E1:\tNeutral;\t()
C-E2:\tNeutral;\t()
C-F1:\tNeutral;\t()

[10.0100 - 11.3925]\tSes01F_impro01_F001\tang\t[1.5, 3.5, 2.0]
C-E1:\tAnger;\t()
C-E2:\tAnger; Frustration;\t()
C-F1:\tFrustration;\t()

[14.0000 - 15.0000]\tSes01F_impro01_M000\tsad\t[2.0, 2.0, 2.0]
C-E1:\tSadness;\t()
C-E2:\tSadness;\t()
C-M1:\tNeutral;\t()

[16.0000 - 17.0000]\tSes01F_impro01_M001\txxx\t[2.0, 2.0, 2.0]
C-E1:\tFear;\t()
C-E2:\tSurprise;\t()
"""


def build_iemocap_tree(root):
    eval_dir = root / "Session1" / "dialog" / "EmoEvaluation"
    wav_dir = root / "Session1" / "sentences" / "wav" / "Ses01F_impro01"
    eval_dir.mkdir(parents=True)
    wav_dir.mkdir(parents=True)
    (eval_dir / "Ses01F_impro01.txt").write_text(EVAL_FIXTURE)
    for uid in ("Ses01F_impro01_F000", "Ses01F_impro01_F001",
                "Ses01F_impro01_M000", "Ses01F_impro01_M001"):
        dataset.write_wav(str(wav_dir / f"{uid}.wav"), np.zeros(16000))


def test_import_iemocap_fixture(tmp_path):
    build_iemocap_tree(tmp_path)
    with pytest.raises(PartialImport) as exc:
        dataset.import_iemocap(str(tmp_path))
    manifest = exc.value.manifest
    # the xxx utterance has no majority answer -> skipped
    assert len(manifest.rows) == 3
    by_id = {r["id"]: r for r in manifest.rows}
    assert by_id["Ses01F_impro01_F000"]["label"] == "neutral"
    assert by_id["Ses01F_impro01_F001"]["label"] == "anger"
    assert by_id["Ses01F_impro01_M000"]["label"] == "sadness"
    assert by_id["Ses01F_impro01_F000"]["group"] == "Session1"
    assert by_id["Ses01F_impro01_F000"]["speaker"] == "Session1_F"
    assert by_id["Ses01F_impro01_M000"]["speaker"] == "Session1_M"
    assert len(by_id["Ses01F_impro01_F001"]["experts"]) == 3
    assert exc.value.skipped == [("Ses01F_impro01_M001",
                                  "unresolved or out-of-scope emotion")]
    # the emitted manifest loads back through the normal path
    out = tmp_path / "manifest.jsonl"
    dataset.write_manifest_rows(manifest.rows, str(out))
    corpus = dataset.load_manifest(str(out))
    assert len(corpus) == 3


def test_import_iemocap_unrecognized_layout(tmp_path):
    with pytest.raises(LayoutNotRecognized):
        dataset.import_iemocap(str(tmp_path))
