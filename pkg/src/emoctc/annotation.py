"""Human annotation experiment backend.

Assessors label utterances one at a time and get the correct answer back
as feedback.  Every session starts with an 8-item warmup (2 per emotion)
whose answers never enter the statistics; the main phase serves
lowest-coverage utterances first so every item gets at least two
assessors as quickly as possible.

Labels are persisted to an append-only JSONL log (flush + fsync per
line) so a crashed or restarted service resumes without double-counting;
session state is cheap and rebuilt from the log.
"""
import json
import os
import threading
import time
import uuid

from .dataset import EMOTIONS
from .errors import (DuplicateAnswer, EmptyCorpus, NoData, NotServed,
                     UnknownSession)
from . import evaluation

WARMUP_PER_CLASS = 2
WARMUP_SIZE = WARMUP_PER_CLASS * len(EMOTIONS)


class AnnotationSession:
    def __init__(self, session_id, assessor_id, warmup, main_order):
        self.session_id = session_id
        self.assessor_id = assessor_id
        self.warmup_remaining = list(warmup)
        self.main_order = list(main_order)
        self.served = set()
        self.answered = set()
        self.pending = None  # id served but not yet answered
        self.created_at = time.time()


class AnnotationService:
    """In-memory sessions + durable label log over a labeled corpus."""

    def __init__(self, corpus, log_path, seed=0,
                 fault_hook=None):
        import numpy as np

        if len(corpus) == 0:
            raise EmptyCorpus("no utterances to annotate")
        self._lock = threading.Lock()
        self._utterances = {u.id: u for u in corpus.utterances}
        self._log_path = log_path
        # test seam: called between the in-memory update and the log
        # append to simulate crashes
        self._fault_hook = fault_hook
        self._sessions = {}

        rng = np.random.default_rng(seed)
        by_class = {e: [] for e in EMOTIONS}
        for u in sorted(corpus.utterances, key=lambda u: u.id):
            by_class[u.final_label].append(u.id)
        self.warmup_ids = []
        for emotion in EMOTIONS:
            pool = by_class[emotion]
            if len(pool) < WARMUP_PER_CLASS:
                raise EmptyCorpus(
                    f"need at least {WARMUP_PER_CLASS} '{emotion}' "
                    "utterances for the warmup set")
            picks = rng.choice(len(pool), size=WARMUP_PER_CLASS,
                               replace=False)
            self.warmup_ids.extend(pool[i] for i in sorted(picks))
        self.main_ids = sorted(set(self._utterances) - set(self.warmup_ids))

        # coverage: number of distinct assessors who answered each main item
        self._coverage = {uid: set() for uid in self.main_ids}
        self._labels = []  # non-warmup LabelRecords, in log order
        self._answered_pairs = set()  # (assessor_id, utterance_id)
        self._replay_log()
        self._log_fh = open(log_path, "a", encoding="utf-8")

    # -- persistence ---------------------------------------------------

    def _replay_log(self):
        if not os.path.exists(self._log_path):
            return
        with open(self._log_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                self._absorb(rec)

    def _absorb(self, rec):
        self._answered_pairs.add((rec["assessor_id"], rec["utterance_id"]))
        if not rec["is_warmup"] and rec["utterance_id"] in self._coverage:
            self._coverage[rec["utterance_id"]].add(rec["assessor_id"])
            self._labels.append(rec)

    def _append(self, rec):
        if self._fault_hook is not None:
            self._fault_hook(rec)
        self._log_fh.write(json.dumps(rec, sort_keys=True) + "\n")
        self._log_fh.flush()
        os.fsync(self._log_fh.fileno())

    def answered_ids(self, assessor_id):
        """Utterance ids this assessor has already answered (replayed
        from the durable log at startup), used to resume a session."""
        return {uid for a, uid in self._answered_pairs if a == assessor_id}

    # -- session lifecycle ----------------------------------------------

    def start_session(self, assessor_id):
        import numpy as np

        with self._lock:
            already = self.answered_ids(assessor_id)
            warmup = [uid for uid in self.warmup_ids if uid not in already]
            main = [uid for uid in self.main_ids if uid not in already]
            # personal random order; coverage reshuffles it at serve time
            rng = np.random.default_rng(
                abs(hash((assessor_id, len(self._sessions)))) % (2 ** 32))
            rng.shuffle(main)
            session = AnnotationSession(
                uuid.uuid4().hex, assessor_id, warmup, main)
            session.answered = already
            self._sessions[session.session_id] = session
            return session

    def _get(self, session_id):
        session = self._sessions.get(session_id)
        if session is None:
            raise UnknownSession(f"unknown session {session_id!r}")
        return session

    def next_utterance(self, session_id):
        """Next id to label, or None when the assessor has seen
        everything.  Warmup strictly precedes main-phase items; within
        the main phase, utterances answered by the fewest assessors so
        far are served first."""
        with self._lock:
            session = self._get(session_id)
            if session.pending is not None:
                return session.pending
            if session.warmup_remaining:
                uid = session.warmup_remaining[0]
            else:
                candidates = [uid for uid in session.main_order
                              if uid not in session.answered]
                if not candidates:
                    return None
                uid = min(candidates,
                          key=lambda u: (len(self._coverage[u]),
                                         session.main_order.index(u)))
            session.served.add(uid)
            session.pending = uid
            return uid

    def submit_label(self, session_id, utterance_id, answer):
        """Record one answer; returns the correct label as feedback."""
        if answer not in EMOTIONS:
            raise NoData(f"unknown answer {answer!r}")
        with self._lock:
            session = self._get(session_id)
            if (utterance_id in session.answered or
                    (session.assessor_id, utterance_id)
                    in self._answered_pairs):
                raise DuplicateAnswer(
                    f"{utterance_id} already answered by "
                    f"{session.assessor_id}")
            if utterance_id not in session.served:
                raise NotServed(f"{utterance_id} was not served")
            is_warmup = utterance_id in self.warmup_ids
            rec = {
                "utterance_id": utterance_id,
                "assessor_id": session.assessor_id,
                "answer": answer,
                "is_warmup": is_warmup,
                "timestamp": time.time(),
            }
            self._append(rec)
            # in-memory state only advances after the durable append
            session.answered.add(utterance_id)
            if session.pending == utterance_id:
                session.pending = None
            if is_warmup and utterance_id in session.warmup_remaining:
                session.warmup_remaining.remove(utterance_id)
            self._absorb(rec)
            return {"correct_label":
                    self._utterances[utterance_id].final_label}

    # -- statistics ------------------------------------------------------

    def stats(self):
        """Human accuracy/confusion over non-warmup answers only."""
        with self._lock:
            if not self._labels:
                raise NoData("no main-phase labels yet")
            true = [EMOTIONS.index(self._utterances[r["utterance_id"]]
                                   .final_label) for r in self._labels]
            pred = [EMOTIONS.index(r["answer"]) for r in self._labels]
            per_assessor = {}
            for r, t, p in zip(self._labels, true, pred):
                per_assessor.setdefault(r["assessor_id"], []).append(t == p)
            return {
                "n_labels": len(self._labels),
                "overall_accuracy": evaluation.overall_accuracy(true, pred),
                "mean_class_accuracy":
                    evaluation.mean_class_accuracy(true, pred),
                "confusion": evaluation.confusion_matrix(
                    true, pred, len(EMOTIONS)).tolist(),
                "emotions": list(EMOTIONS),
                "coverage": {uid: len(who)
                             for uid, who in self._coverage.items()},
                "per_assessor_accuracy": {
                    a: sum(hits) / len(hits)
                    for a, hits in sorted(per_assessor.items())},
            }

    def close(self):
        self._log_fh.close()
