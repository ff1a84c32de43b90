"""Frame-level acoustic features: 34 values per 200 ms frame.

Feature order (fixed):
  0 zero-crossing rate
  1 short-time energy (mean squared amplitude)
  2 entropy of energy (10 sub-frames, bits)
  3 spectral centroid   (normalized, fraction of fs/2)
  4 spectral spread     (normalized)
  5 spectral entropy    (10 blocks, bits)
  6 spectral flux
  7 spectral rolloff    (90% cumulative energy, normalized bin position)
  8..20  13 MFCCs (26-band mel filterbank, Hamming-windowed FFT)
  21..32 12 chroma values (power share per pitch class)
  33 chroma standard deviation

Silence convention: zero-energy frames get 0 for centroid/spread/
entropy/rolloff/chroma; MFCCs use a 1e-10 power floor.  This keeps every
vector finite so NaNs never reach training.
"""
import io
import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.fft import dct, rfft

from .errors import EmptySignal, NonFiniteFeature

FEATURE_DIM = 34
UNIFIED_LEN = 78
N_MEL_FILTERS = 26
N_MFCC = 13
POWER_FLOOR = 1e-10
_EPS = 1e-12


@dataclass(frozen=True)
class FrameConfig:
    frame_len_s: float = 0.2
    hop_s: float = 0.1
    sample_rate: int = 16000

    def __post_init__(self):
        if self.hop_s > self.frame_len_s:
            raise ValueError("hop must not exceed frame length")
        if abs(self.frame_len_s * self.sample_rate
               - round(self.frame_len_s * self.sample_rate)) > 1e-9:
            raise ValueError("frame_len * sample_rate must be integral")

    @property
    def frame_samples(self):
        return int(round(self.frame_len_s * self.sample_rate))

    @property
    def hop_samples(self):
        return int(round(self.hop_s * self.sample_rate))


DEFAULT_FRAME_CONFIG = FrameConfig()


@dataclass
class FeatureSequence:
    utterance_id: str
    matrix: np.ndarray  # (T, 34)
    true_len: int

    def __post_init__(self):
        if self.true_len < 1:
            raise ValueError("true_len must be >= 1")


def frame_signal(samples, config=DEFAULT_FRAME_CONFIG):
    """Slice a mono signal into overlapping frames.

    Frame i covers samples [i*hop, i*hop + frame_len); signals shorter
    than one frame yield a single zero-padded frame.
    """
    samples = np.asarray(samples, dtype=np.float64)
    n = samples.shape[0]
    if n == 0:
        raise EmptySignal("cannot frame an empty signal")
    L = config.frame_samples
    H = config.hop_samples
    if n < L:
        frame = np.zeros(L)
        frame[:n] = samples
        return [frame]
    count = (n - L) // H + 1
    return [samples[i * H:i * H + L].copy() for i in range(count)]


@lru_cache(maxsize=8)
def _mel_filterbank(n_bins, sample_rate):
    def to_mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def from_mel(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    nyquist = sample_rate / 2.0
    mel_pts = np.linspace(0.0, to_mel(nyquist), N_MEL_FILTERS + 2)
    hz_pts = from_mel(mel_pts)
    bin_freqs = np.linspace(0.0, nyquist, n_bins)
    fb = np.zeros((N_MEL_FILTERS, n_bins))
    for m in range(N_MEL_FILTERS):
        lo, mid, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        rise = (bin_freqs - lo) / max(mid - lo, _EPS)
        fall = (hi - bin_freqs) / max(hi - mid, _EPS)
        fb[m] = np.clip(np.minimum(rise, fall), 0.0, None)
    return fb


@lru_cache(maxsize=8)
def _chroma_bins(n_bins, sample_rate):
    """Pitch class (0..11, relative to A440) for every non-DC bin."""
    freqs = np.linspace(0.0, sample_rate / 2.0, n_bins)
    classes = np.full(n_bins, -1, dtype=np.int64)
    nz = freqs > 0
    classes[nz] = np.round(12.0 * np.log2(freqs[nz] / 440.0)).astype(np.int64) % 12
    return classes


def frame_spectrum(frame):
    """Hamming-windowed magnitude spectrum, normalized to unit sum
    (zeros for silent frames)."""
    frame = np.asarray(frame, dtype=np.float64)
    mag = np.abs(rfft(frame * np.hamming(frame.shape[0])))
    s = mag.sum()
    if s <= _EPS:
        return np.zeros_like(mag)
    return mag / s


def _block_entropy(values, n_blocks=10):
    total = values.sum()
    if total <= _EPS:
        return 0.0
    n = values.shape[0]
    edge = n - n % n_blocks
    blocks = values[:edge].reshape(n_blocks, -1).sum(axis=1)
    if edge < n:
        blocks[-1] += values[edge:].sum()
    p = blocks / total
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def extract_frame_features(frame, previous_spectrum=None, config=DEFAULT_FRAME_CONFIG):
    """34 features for one frame.  Spectral flux compares against the
    previous frame's normalized spectrum (zeros for the first frame)."""
    frame = np.asarray(frame, dtype=np.float64)
    L = frame.shape[0]
    if L != config.frame_samples:
        raise ValueError(
            f"expected a frame of {config.frame_samples} samples, got {L}")
    out = np.zeros(FEATURE_DIM)

    signs = np.sign(frame)
    out[0] = np.count_nonzero(np.diff(signs)) / (L - 1)
    energy = float(np.mean(frame ** 2))
    out[1] = energy
    out[2] = _block_entropy(frame ** 2)

    mag = np.abs(rfft(frame * np.hamming(L)))
    power = mag ** 2
    mag_sum = mag.sum()
    norm_spec = mag / mag_sum if mag_sum > _EPS else np.zeros_like(mag)
    n_bins = mag.shape[0]
    positions = np.arange(n_bins) / max(n_bins - 1, 1)  # 0..1 over [0, fs/2]

    if mag_sum > _EPS:
        centroid = float((positions * norm_spec).sum())
        out[3] = centroid
        out[4] = float(np.sqrt(((positions - centroid) ** 2 * norm_spec).sum()))
        out[5] = _block_entropy(power)
        cum = np.cumsum(power)
        idx = int(np.searchsorted(cum, 0.9 * cum[-1]))
        out[7] = idx / max(n_bins - 1, 1)

    prev = previous_spectrum if previous_spectrum is not None \
        else np.zeros_like(norm_spec)
    out[6] = float(((norm_spec - prev) ** 2).sum())

    fb = _mel_filterbank(n_bins, config.sample_rate)
    mel_energies = np.maximum(fb @ power, POWER_FLOOR)
    out[8:8 + N_MFCC] = dct(np.log(mel_energies), type=2, norm="ortho")[:N_MFCC]

    power_total = power.sum()
    if power_total > _EPS:
        classes = _chroma_bins(n_bins, config.sample_rate)
        chroma = np.zeros(12)
        np.add.at(chroma, classes[classes >= 0], power[classes >= 0])
        chroma /= power_total
        out[21:33] = chroma
        out[33] = float(chroma.std())

    if not np.all(np.isfinite(out)):
        raise NonFiniteFeature(
            f"non-finite feature at indices {np.where(~np.isfinite(out))[0]}")
    return out


def extract_sequence(utterance_id, samples, config=DEFAULT_FRAME_CONFIG):
    frames = frame_signal(samples, config)
    rows = np.zeros((len(frames), FEATURE_DIM))
    prev = None
    for t, frame in enumerate(frames):
        rows[t] = extract_frame_features(frame, prev, config)
        prev = frame_spectrum(frame)
    return FeatureSequence(utterance_id, rows, len(frames))


def pad_or_truncate(seq, unified_len=UNIFIED_LEN):
    """Force exactly unified_len rows: zero-pad short sequences, keep the
    head of long ones.  Idempotent."""
    T = seq.matrix.shape[0]
    if T == unified_len:
        matrix = seq.matrix
    elif T > unified_len:
        matrix = seq.matrix[:unified_len].copy()
    else:
        matrix = np.zeros((unified_len, seq.matrix.shape[1]))
        matrix[:T] = seq.matrix
    return FeatureSequence(seq.utterance_id, matrix,
                           min(seq.true_len, unified_len))


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray  # floored at 1e-8


def fit_normalizer(sequences):
    """Per-dimension mean/std over the real (pre-padding) rows of the
    training sequences only."""
    rows = np.concatenate([s.matrix[:s.true_len] for s in sequences], axis=0)
    std = rows.std(axis=0)
    return Normalizer(rows.mean(axis=0), np.maximum(std, 1e-8))


def apply_normalizer(seq, normalizer):
    """Z-score the real rows; padded rows stay all-zero."""
    matrix = np.zeros_like(seq.matrix)
    matrix[:seq.true_len] = (
        (seq.matrix[:seq.true_len] - normalizer.mean) / normalizer.std)
    return FeatureSequence(seq.utterance_id, matrix, seq.true_len)


# --- feature dump format ------------------------------------------------
# magic "EMOF", u32 version, u32 n_utterances, u32 dim, u32 unified_len,
# then per utterance: u32 id byte-length, id utf-8, u32 true_len, u32 rows,
# row-major float64 matrix.

_MAGIC = b"EMOF"
_VERSION = 1


def save_feature_dump(path, sequences, unified_len):
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<III", _VERSION, len(sequences), FEATURE_DIM))
        fh.write(struct.pack("<I", unified_len))
        for seq in sequences:
            ident = seq.utterance_id.encode("utf-8")
            fh.write(struct.pack("<I", len(ident)))
            fh.write(ident)
            fh.write(struct.pack("<II", seq.true_len, seq.matrix.shape[0]))
            fh.write(np.ascontiguousarray(seq.matrix, dtype="<f8").tobytes())


def load_feature_dump(path):
    with open(path, "rb") as fh:
        data = fh.read()
    buf = io.BytesIO(data)
    if buf.read(4) != _MAGIC:
        raise ValueError(f"{path}: not a feature dump")
    version, n, dim = struct.unpack("<III", buf.read(12))
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported dump version {version}")
    (unified_len,) = struct.unpack("<I", buf.read(4))
    sequences = []
    for _ in range(n):
        (id_len,) = struct.unpack("<I", buf.read(4))
        ident = buf.read(id_len).decode("utf-8")
        true_len, rows = struct.unpack("<II", buf.read(8))
        matrix = np.frombuffer(
            buf.read(rows * dim * 8), dtype="<f8").reshape(rows, dim).copy()
        sequences.append(FeatureSequence(ident, matrix, true_len))
    return sequences, unified_len
