"""CTC probabilities and decoding.

Labelings are tuples of class indices over the emotion set E = {0..k-1};
paths additionally use the blank index k.  All sums over alignments run in
log space; probabilities are materialized only at the API boundary.
"""
import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    BadWidth,
    InfeasibleLabeling,
    LengthMismatch,
    TooLargeToEnumerate,
)
from .kernels import ctc_forward_backward

NEG_INF = -np.inf

# Cap for full path enumeration in the brute-force oracle.
ENUM_LIMIT = 10_000_000


@dataclass(frozen=True)
class Alphabet:
    """Emotion label set E plus the implicit blank at index k."""

    emotions: tuple

    def __post_init__(self):
        if len(self.emotions) < 1:
            raise ValueError("alphabet needs at least one emotion")
        if len(set(self.emotions)) != len(self.emotions):
            raise ValueError("duplicate emotion names")

    @property
    def k(self):
        return len(self.emotions)

    @property
    def blank(self):
        return len(self.emotions)

    @property
    def size(self):
        return len(self.emotions) + 1

    def index(self, name):
        return self.emotions.index(name)


DEFAULT_ALPHABET = Alphabet(("anger", "excitement", "neutral", "sadness"))


def collapse(path, blank):
    """Map a frame-aligned path to its labeling: drop consecutive
    duplicates first, then drop blanks."""
    out = []
    prev = None
    for sym in path:
        if sym != prev:
            if sym != blank:
                out.append(int(sym))
            prev = sym
    return tuple(out)


def min_path_length(labeling):
    """Shortest T that admits the labeling: one frame per symbol plus a
    separating blank between each adjacent equal pair."""
    repeats = sum(1 for a, b in zip(labeling, labeling[1:]) if a == b)
    return len(labeling) + repeats


def _check_matrix(Y):
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[0] < 1:
        raise LengthMismatch(f"expected a T x C matrix, got shape {Y.shape}")
    return Y


def _effective_len(Y, true_len):
    T = Y.shape[0]
    if true_len is None:
        return T
    if not 1 <= true_len <= T:
        raise LengthMismatch(f"true_len {true_len} outside [1, {T}]")
    return int(true_len)


def path_log_prob(Y, path):
    Y = _check_matrix(Y)
    if len(path) != Y.shape[0]:
        raise LengthMismatch(
            f"path length {len(path)} != matrix rows {Y.shape[0]}")
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log(Y[np.arange(Y.shape[0]), list(path)])))


def path_prob(Y, path):
    return float(np.exp(path_log_prob(Y, path)))


@lru_cache(maxsize=64)
def _collapse_table(T, C):
    """All C^T paths with their collapsed-labeling group ids.

    Returns (paths, group_ids, labelings): paths is (P, T) int8,
    group_ids[p] indexes into labelings.  Cached per shape so repeated
    oracle calls over random matrices stay cheap.
    """
    if C ** T > ENUM_LIMIT:
        raise TooLargeToEnumerate(f"{C}^{T} paths exceed enumeration limit")
    blank = C - 1
    paths = np.array(
        list(itertools.product(range(C), repeat=T)), dtype=np.int8
    ).reshape(-1, T)
    groups = {}
    group_ids = np.empty(paths.shape[0], dtype=np.int64)
    labelings = []
    for p in range(paths.shape[0]):
        lab = collapse(paths[p], blank)
        gid = groups.get(lab)
        if gid is None:
            gid = len(labelings)
            groups[lab] = gid
            labelings.append(lab)
        group_ids[p] = gid
    return paths, group_ids, labelings


def bruteforce_labeling_table(Y, true_len=None):
    """Oracle: probability of every labeling by full path enumeration.

    Independent of the forward-backward recursion; used to arbitrate it.
    """
    Y = _check_matrix(Y)
    T = _effective_len(Y, true_len)
    C = Y.shape[1]
    paths, group_ids, labelings = _collapse_table(T, C)
    probs = Y[:T][np.arange(T)[None, :], paths].prod(axis=1)
    sums = np.bincount(group_ids, weights=probs, minlength=len(labelings))
    return {lab: float(sums[i]) for i, lab in enumerate(labelings)}


def labeling_prob_bruteforce(Y, labeling, true_len=None):
    table = bruteforce_labeling_table(Y, true_len)
    return table.get(tuple(labeling), 0.0)


def labeling_log_prob(Y, labeling, true_len=None):
    """log p(labeling | Y) via the forward recursion (no gradient)."""
    Y = _check_matrix(Y)
    T = _effective_len(Y, true_len)
    labeling = tuple(labeling)
    if min_path_length(labeling) > T:
        return NEG_INF
    lab = np.asarray(labeling, dtype=np.int64)
    with np.errstate(divide="ignore"):
        logy = np.log(Y[:T])
    logp, _ = ctc_forward_backward(logy, lab, Y.shape[1] - 1)
    return float(logp)


def ctc_loss_and_grad(Y, labeling, true_len=None):
    """Negative log-likelihood of the labeling and its gradient w.r.t. Y.

    Only the first true_len rows participate; gradient rows beyond that
    are exactly zero.
    """
    Y = _check_matrix(Y)
    T = _effective_len(Y, true_len)
    labeling = tuple(labeling)
    blank = Y.shape[1] - 1
    if any(not 0 <= s < blank for s in labeling):
        raise InfeasibleLabeling(f"labeling {labeling} outside emotion set")
    if min_path_length(labeling) > T:
        raise InfeasibleLabeling(
            f"labeling {labeling} needs >= {min_path_length(labeling)} "
            f"frames, only {T} available")
    lab = np.asarray(labeling, dtype=np.int64)
    with np.errstate(divide="ignore"):
        logy = np.log(Y[:T])
    logp, grad_head = ctc_forward_backward(logy, lab, blank)
    grad = np.zeros_like(Y)
    grad[:T] = grad_head
    return float(-logp), grad


def best_path_decode(Y, true_len=None):
    """Collapse of the per-timestep argmax path (ties to lowest index)."""
    Y = _check_matrix(Y)
    T = _effective_len(Y, true_len)
    path = np.argmax(Y[:T], axis=1)
    return collapse(path, Y.shape[1] - 1)


def beam_search_decode(Y, true_len=None, width=4):
    """Prefix beam over (labeling prefix, last frame symbol) states.

    Each state's mass is the summed probability of all paths whose
    collapse-so-far equals the prefix and whose frame-t symbol is `last`.
    With unlimited width this is the exact labeling DP; with width=1 the
    single surviving state follows the greedy argmax path, so the result
    equals best_path_decode, ties included.
    """
    if width < 1:
        raise BadWidth(f"beam width must be >= 1, got {width}")
    Y = _check_matrix(Y)
    T = _effective_len(Y, true_len)
    C = Y.shape[1]
    blank = C - 1
    with np.errstate(divide="ignore"):
        logy = np.log(Y[:T])

    # state -> (logmass, min generating symbol at the current step)
    beams = {((), blank): (0.0, blank)}
    for t in range(T):
        cand = {}
        for (prefix, last), (mass, _) in beams.items():
            for c in range(C):
                if c == blank:
                    target = (prefix, blank)
                elif c == last:
                    target = (prefix, c)
                else:
                    target = (prefix + (c,), c)
                score = mass + logy[t, c]
                old = cand.get(target)
                if old is None:
                    cand[target] = (score, c)
                else:
                    cand[target] = (np.logaddexp(old[0], score),
                                    min(old[1], c))
        ordered = sorted(
            cand.items(),
            key=lambda kv: (-kv[1][0], kv[1][1],
                            len(kv[0][0]), kv[0][0], kv[0][1]),
        )
        beams = dict(ordered[:width])

    totals = {}
    for (prefix, _), (mass, _) in beams.items():
        if prefix in totals:
            totals[prefix] = np.logaddexp(totals[prefix], mass)
        else:
            totals[prefix] = mass
    return max(totals, key=lambda p: (totals[p], -len(p),
                                      tuple(-s for s in p)))


def exact_decode(Y, true_len=None, max_labelings=2_000_000):
    """Argmax over all labelings of p(l | Y), each scored by the forward
    recursion.  Enumeration-bounded; ties prefer shorter, then
    lexicographically smaller labelings."""
    Y = _check_matrix(Y)
    T = _effective_len(Y, true_len)
    k = Y.shape[1] - 1
    count = sum(k ** u for u in range(T + 1))
    if count > max_labelings:
        raise TooLargeToEnumerate(
            f"{count} candidate labelings exceed limit {max_labelings}")
    best = None
    best_lp = NEG_INF
    for u in range(T + 1):
        for lab in itertools.product(range(k), repeat=u):
            if min_path_length(lab) > T:
                continue
            lp = labeling_log_prob(Y, lab, T)
            if lp > best_lp or best is None:
                best, best_lp = lab, lp
    return best
