"""Corpus handling: expert-label resolution, the 4-emotion subset,
JSONL manifests, a deterministic synthetic corpus, and IEMOCAP import.
"""
import json
import math
import os
import re
import wave
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadConfig,
    BadSampleRate,
    EmptyCorpus,
    LayoutNotRecognized,
    MissingAudio,
    ParseError,
    PartialImport,
)

# Final label space (class index order used everywhere downstream).
EMOTIONS = ("anger", "excitement", "neutral", "sadness")

# Raw categories experts may answer with.
RAW_CATEGORIES = (
    "neutral", "happiness", "sadness", "anger", "surprise",
    "fear", "disgust", "frustration", "excited", "other",
)

# Raw category -> final 4-class label, where one exists.
RAW_TO_FINAL = {
    "anger": "anger",
    "excited": "excitement",
    "excitement": "excitement",
    "neutral": "neutral",
    "sadness": "sadness",
}

SAMPLE_RATE = 16000


@dataclass(frozen=True)
class ExpertAnnotation:
    utterance_id: str
    assessor_id: str
    answer: str


@dataclass
class LabeledUtterance:
    id: str
    samples: np.ndarray  # float64 in [-1, 1], mono, 16 kHz
    speaker_id: str
    group_id: str
    expert_annotations: list
    final_label: str  # resolved category (raw space) or None
    agreement_count: int = 0

    @property
    def duration_s(self):
        return self.samples.shape[0] / SAMPLE_RATE


@dataclass
class Corpus:
    utterances: list = field(default_factory=list)

    def __len__(self):
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    def by_id(self, utt_id):
        for u in self.utterances:
            if u.id == utt_id:
                return u
        raise KeyError(utt_id)


def resolve_final_label(annotations):
    """Category chosen by at least half of the assessors; None when no
    category reaches the threshold or two candidates sit at exactly half."""
    if not annotations:
        raise ValueError("annotations must be non-empty")
    counts = Counter(a.answer for a in annotations)
    n = len(annotations)
    winners = [c for c, v in counts.items() if 2 * v >= n]
    if len(winners) == 1:
        return winners[0]
    return None


def filter_four_emotions(corpus):
    """Keep only utterances whose resolved label maps into the 4-emotion
    set; unresolved utterances are dropped.  Final labels are rewritten
    into the canonical 4-class names."""
    kept = []
    for u in corpus:
        if u.final_label is None:
            continue
        final = RAW_TO_FINAL.get(u.final_label)
        if final is None:
            continue
        if u.final_label != final:
            u = LabeledUtterance(u.id, u.samples, u.speaker_id, u.group_id,
                                 u.expert_annotations, final,
                                 u.agreement_count)
        kept.append(u)
    if not kept:
        raise EmptyCorpus("no utterances with a considered emotion remain")
    return Corpus(kept)


# --- synthetic corpus ----------------------------------------------------

# Class signatures: arbitrary but linearly separable in the spectral
# features (distinct carrier + AM rate per class, ~10 dB SNR).
CARRIERS_HZ = (220.0, 330.0, 440.0, 550.0)
AM_RATES_HZ = (2.0, 4.0, 6.0, 8.0)
SNR_DB = 10.0

_TRUE_TO_RAW = {"anger": "anger", "excitement": "excited",
                "neutral": "neutral", "sadness": "sadness"}


def generate_synthetic_corpus(seed, n_per_class=25,
                              duration_range_s=(2.0, 5.0),
                              disagreement_rate=0.2):
    """Deterministic stand-in corpus: 4 separable classes, 10 speakers in
    5 recording pairs, simulated expert annotations."""
    lo, hi = duration_range_s
    if n_per_class < 1:
        raise BadConfig("n_per_class must be >= 1")
    if not (0.5 <= lo <= hi <= 12.0):
        raise BadConfig("durations must lie within [0.5 s, 12 s]")
    if not 0.0 <= disagreement_rate <= 1.0:
        raise BadConfig("disagreement_rate must be in [0, 1]")

    rng = np.random.default_rng(seed)
    speakers = [f"spk{i:02d}" for i in range(1, 11)]
    groups = {spk: f"pair{i // 2 + 1:02d}" for i, spk in enumerate(speakers)}
    assessors = [f"assessor{i}" for i in range(1, 5)]

    utterances = []
    idx = 0
    for ci, emotion in enumerate(EMOTIONS):
        for j in range(n_per_class):
            utt_id = f"synth-{emotion}-{j:03d}"
            speaker = speakers[idx % len(speakers)]
            idx += 1
            dur = float(rng.uniform(lo, hi))
            n = int(round(dur * SAMPLE_RATE))
            t = np.arange(n) / SAMPLE_RATE
            am = 0.5 * (1.0 + np.sin(2 * math.pi * AM_RATES_HZ[ci] * t))
            signal = am * np.sin(2 * math.pi * CARRIERS_HZ[ci] * t)
            noise_std = math.sqrt(np.mean(signal ** 2)
                                  / (10.0 ** (SNR_DB / 10.0)))
            samples = signal + rng.normal(0.0, noise_std, size=n)
            samples *= 0.7 / max(np.abs(samples).max(), 1e-9)

            n_experts = int(rng.integers(3, 5))
            raw_true = _TRUE_TO_RAW[emotion]
            answers = [raw_true] * n_experts
            dissent = rng.random() < disagreement_rate
            if dissent:
                others = [c for c in RAW_CATEGORIES if c != raw_true]
                answers[int(rng.integers(n_experts))] = \
                    others[int(rng.integers(len(others)))]
            annotations = [
                ExpertAnnotation(utt_id, assessors[e], answers[e])
                for e in range(n_experts)
            ]
            utterances.append(LabeledUtterance(
                id=utt_id,
                samples=samples,
                speaker_id=speaker,
                group_id=groups[speaker],
                expert_annotations=annotations,
                final_label=emotion,
                agreement_count=sum(1 for a in answers if a == raw_true),
            ))
    return Corpus(utterances)


# --- WAV + JSONL manifest ------------------------------------------------

def write_wav(path, samples):
    pcm = np.clip(np.asarray(samples) * 32767.0, -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(SAMPLE_RATE)
        wf.writeframes(pcm.tobytes())


def read_wav(path):
    with wave.open(str(path), "rb") as wf:
        if wf.getframerate() != SAMPLE_RATE:
            raise BadSampleRate(
                f"{path}: sample rate {wf.getframerate()}, need {SAMPLE_RATE}")
        if wf.getnchannels() != 1:
            raise BadSampleRate(f"{path}: expected mono audio")
        if wf.getsampwidth() != 2:
            raise BadSampleRate(f"{path}: expected 16-bit PCM")
        raw = wf.readframes(wf.getnframes())
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32767.0


def save_manifest(corpus, out_dir):
    """Write audio/<id>.wav files and manifest.jsonl; returns the
    manifest path."""
    audio_dir = os.path.join(out_dir, "audio")
    os.makedirs(audio_dir, exist_ok=True)
    manifest_path = os.path.join(out_dir, "manifest.jsonl")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        for u in corpus:
            rel = os.path.join("audio", f"{u.id}.wav")
            write_wav(os.path.join(out_dir, rel), u.samples)
            row = {
                "id": u.id,
                "audio": rel,
                "speaker": u.speaker_id,
                "group": u.group_id,
                "experts": [
                    {"assessor": a.assessor_id, "answer": a.answer}
                    for a in u.expert_annotations
                ],
                "label": u.final_label,
            }
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return manifest_path


REQUIRED_FIELDS = ("id", "audio", "speaker", "group", "experts", "label")


def load_manifest(path):
    base = os.path.dirname(os.path.abspath(path))
    utterances = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad JSON: {exc}", line_no) from exc
            for f in REQUIRED_FIELDS:
                if f not in row:
                    raise ParseError(f"missing field '{f}'", line_no)
            if row["id"] in seen:
                raise ParseError(f"duplicate id '{row['id']}'", line_no)
            seen.add(row["id"])
            if not row["group"]:
                raise ParseError("empty group id", line_no)
            audio_path = os.path.join(base, row["audio"])
            if not os.path.exists(audio_path):
                raise MissingAudio(f"{audio_path} (manifest line {line_no})")
            samples = read_wav(audio_path)
            annotations = [
                ExpertAnnotation(row["id"], e["assessor"], e["answer"])
                for e in row["experts"]
            ]
            if annotations:
                resolved = resolve_final_label(annotations)
                expected = RAW_TO_FINAL.get(resolved) if resolved else None
                if row["label"] is not None and expected != row["label"]:
                    raise ParseError(
                        f"label '{row['label']}' inconsistent with expert "
                        f"answers (resolve to {expected!r})", line_no)
            utterances.append(LabeledUtterance(
                id=row["id"],
                samples=samples,
                speaker_id=row["speaker"],
                group_id=row["group"],
                expert_annotations=annotations,
                final_label=row["label"],
                agreement_count=sum(
                    1 for a in annotations
                    if RAW_TO_FINAL.get(a.answer) == row["label"]),
            ))
    if not utterances:
        raise EmptyCorpus(f"{path}: manifest is empty")
    return Corpus(utterances)


# --- IEMOCAP import ------------------------------------------------------

@dataclass
class CorpusManifest:
    rows: list
    provenance: str
    skipped: list = field(default_factory=list)


_EVAL_HEADER = re.compile(
    r"^\[(\d+\.\d+) - (\d+\.\d+)\]\t(\S+)\t(\S+)\t")
_EVAL_CAT = re.compile(r"^C-(\S+):\t(.*?);")

_IEMOCAP_NAME_MAP = {
    "neutral": "neutral", "neutral state": "neutral",
    "happiness": "happiness", "sadness": "sadness", "anger": "anger",
    "surprise": "surprise", "fear": "fear", "disgust": "disgust",
    "frustration": "frustration", "excited": "excited", "other": "other",
}


def import_iemocap(root_dir):
    """Walk a licensed IEMOCAP tree and build manifest rows with
    per-expert answers and resolved 4-class labels.  Group id is the
    session (recorded speaker pair)."""
    sessions = sorted(
        d for d in (os.listdir(root_dir) if os.path.isdir(root_dir) else [])
        if d.lower().startswith("session"))
    if not sessions:
        raise LayoutNotRecognized(
            f"{root_dir}: no Session* directories found")

    rows, skipped = [], []
    for session in sessions:
        eval_dir = os.path.join(root_dir, session, "dialog", "EmoEvaluation")
        if not os.path.isdir(eval_dir):
            skipped.append((session, "no dialog/EmoEvaluation directory"))
            continue
        for fname in sorted(os.listdir(eval_dir)):
            if not fname.endswith(".txt") or fname.startswith("."):
                continue
            dialog = fname[:-4]
            path = os.path.join(eval_dir, fname)
            with open(path, "r", encoding="utf-8", errors="replace") as fh:
                current = None
                answers = []

                def flush():
                    if current is None:
                        return
                    utt_id = current
                    annotations = [
                        ExpertAnnotation(utt_id, aid, ans)
                        for aid, ans in answers
                    ]
                    if not annotations:
                        skipped.append((utt_id, "no categorical answers"))
                        return
                    resolved = resolve_final_label(annotations)
                    final = RAW_TO_FINAL.get(resolved) if resolved else None
                    if final is None:
                        skipped.append((utt_id,
                                        "unresolved or out-of-scope emotion"))
                        return
                    wav = os.path.join(root_dir, session, "sentences", "wav",
                                       dialog, utt_id + ".wav")
                    if not os.path.exists(wav):
                        skipped.append((utt_id, "missing wav"))
                        return
                    gender = utt_id.split("_")[-1][0]
                    rows.append({
                        "id": utt_id,
                        "audio": os.path.relpath(wav, root_dir),
                        "speaker": f"{session}_{gender}",
                        "group": session,
                        "experts": [{"assessor": aid, "answer": ans}
                                    for aid, ans in answers],
                        "label": final,
                    })

                for line in fh:
                    m = _EVAL_HEADER.match(line)
                    if m:
                        flush()
                        current = m.group(3)
                        answers = []
                        continue
                    m = _EVAL_CAT.match(line)
                    if m and current is not None:
                        first = m.group(2).split(";")[0].strip().lower()
                        answers.append(
                            (m.group(1),
                             _IEMOCAP_NAME_MAP.get(first, "other")))
                flush()
    if not rows:
        raise LayoutNotRecognized(
            f"{root_dir}: recognized layout but found no utterances")
    manifest = CorpusManifest(rows, f"imported from {root_dir}", skipped)
    if skipped:
        exc = PartialImport(
            f"imported {len(rows)} utterances, skipped {len(skipped)}",
            skipped)
        exc.manifest = manifest
        raise exc
    return manifest


def write_manifest_rows(rows, path):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
