import json
import threading

import numpy as np
import pytest

from emoctc import dataset
from emoctc.annotation import AnnotationService, WARMUP_SIZE
from emoctc.dataset import EMOTIONS
from emoctc.errors import (DuplicateAnswer, EmptyCorpus, NoData, NotServed,
                           UnknownSession)


@pytest.fixture
def corpus():
    return dataset.generate_synthetic_corpus(seed=3, n_per_class=4)


@pytest.fixture
def service(corpus, tmp_path):
    return AnnotationService(corpus, str(tmp_path / "labels.jsonl"), seed=1)


def answer_everything(service, session, answer="anger"):
    served = []
    while True:
        uid = service.next_utterance(session.session_id)
        if uid is None:
            return served
        service.submit_label(session.session_id, uid, answer)
        served.append(uid)


def test_warmup_set_composition(service, corpus):
    assert len(service.warmup_ids) == WARMUP_SIZE == 8
    by_label = {}
    for uid in service.warmup_ids:
        by_label.setdefault(corpus.by_id(uid).final_label, []).append(uid)
    assert set(by_label) == set(EMOTIONS)
    assert all(len(v) == 2 for v in by_label.values())
    # warmup pool is excluded from the main pool
    assert not set(service.warmup_ids) & set(service.main_ids)


def test_warmup_pool_shared_between_sessions(service):
    a = service.start_session("alice")
    b = service.start_session("bob")
    assert a.session_id != b.session_id
    assert a.warmup_remaining == b.warmup_remaining == service.warmup_ids


def test_warmup_served_before_main(service):
    session = service.start_session("alice")
    served = answer_everything(service, session)
    assert served[:8] == service.warmup_ids
    assert set(served[8:]) == set(service.main_ids)


def test_next_is_stable_until_answered(service):
    session = service.start_session("alice")
    uid = service.next_utterance(session.session_id)
    assert service.next_utterance(session.session_id) == uid


def test_submit_errors(service):
    session = service.start_session("alice")
    uid = service.next_utterance(session.session_id)
    with pytest.raises(UnknownSession):
        service.next_utterance("nope")
    with pytest.raises(NotServed):
        service.submit_label(session.session_id, service.main_ids[0], "anger")
    with pytest.raises(NoData):
        service.submit_label(session.session_id, uid, "joy")
    out = service.submit_label(session.session_id, uid, "anger")
    assert out["correct_label"] in EMOTIONS
    with pytest.raises(DuplicateAnswer):
        service.submit_label(session.session_id, uid, "anger")


def test_feedback_is_true_label(service, corpus):
    session = service.start_session("alice")
    uid = service.next_utterance(session.session_id)
    out = service.submit_label(session.session_id, uid, "sadness")
    assert out["correct_label"] == corpus.by_id(uid).final_label


def test_lowest_coverage_first(service):
    # alice answers everything; bob then gets the same coverage-1 pool,
    # but a third assessor arriving mid-way is steered to untouched items
    alice = service.start_session("alice")
    answer_everything(service, alice)
    bob = service.start_session("bob")
    for _ in range(8):  # clear bob's warmup
        uid = service.next_utterance(bob.session_id)
        service.submit_label(bob.session_id, uid, "anger")
    first_main = service.next_utterance(bob.session_id)
    service.submit_label(bob.session_id, first_main, "anger")
    carol = service.start_session("carol")
    for _ in range(8):
        uid = service.next_utterance(carol.session_id)
        service.submit_label(carol.session_id, uid, "anger")
    # carol is served an item with coverage 1, not bob's coverage-2 item
    got = service.next_utterance(carol.session_id)
    assert got != first_main


def test_stats_exclude_warmup(service, corpus):
    session = service.start_session("alice")
    # answer only the warmup: no stats available
    for _ in range(8):
        uid = service.next_utterance(session.session_id)
        service.submit_label(session.session_id, uid, "anger")
    with pytest.raises(NoData):
        service.stats()
    uid = service.next_utterance(session.session_id)
    service.submit_label(session.session_id, uid,
                         corpus.by_id(uid).final_label)
    st = service.stats()
    assert st["n_labels"] == 1
    assert st["overall_accuracy"] == 1.0


def test_stats_confusion_matches_hand_computation(service, corpus):
    session = service.start_session("alice")
    expected = np.zeros((4, 4), dtype=int)
    n = 0
    while True:
        uid = service.next_utterance(session.session_id)
        if uid is None:
            break
        answer = EMOTIONS[n % 4]
        service.submit_label(session.session_id, uid, answer)
        if uid not in service.warmup_ids:
            t = EMOTIONS.index(corpus.by_id(uid).final_label)
            expected[t, EMOTIONS.index(answer)] += 1
        n += 1
    st = service.stats()
    np.testing.assert_array_equal(np.asarray(st["confusion"]), expected)
    assert st["n_labels"] == expected.sum()


def test_warmup_excluded_under_random_interleavings(corpus, tmp_path):
    rng = np.random.default_rng(42)
    for trial in range(5):
        svc = AnnotationService(
            corpus, str(tmp_path / f"log{trial}.jsonl"), seed=trial)
        sessions = [svc.start_session(f"assessor{i}") for i in range(3)]
        active = list(sessions)
        while active:
            s = active[int(rng.integers(len(active)))]
            uid = svc.next_utterance(s.session_id)
            if uid is None:
                active.remove(s)
                continue
            svc.submit_label(s.session_id, uid,
                             EMOTIONS[int(rng.integers(4))])
        st = svc.stats()
        main_ids = set(svc.main_ids)
        logged = [json.loads(line)
                  for line in open(tmp_path / f"log{trial}.jsonl")]
        main_records = [r for r in logged if not r["is_warmup"]]
        assert all(r["utterance_id"] in main_ids for r in main_records)
        assert st["n_labels"] == len(main_records) \
            == 3 * len(svc.main_ids)
        # every warmup answer was logged but never counted
        warm_records = [r for r in logged if r["is_warmup"]]
        assert len(warm_records) == 3 * WARMUP_SIZE
        assert all(r["utterance_id"] in set(svc.warmup_ids)
                   for r in warm_records)


def test_restart_resumes_without_double_serving(corpus, tmp_path):
    log = str(tmp_path / "labels.jsonl")
    svc = AnnotationService(corpus, log, seed=1)
    session = svc.start_session("alice")
    for _ in range(10):  # 8 warmup + 2 main
        uid = svc.next_utterance(session.session_id)
        svc.submit_label(session.session_id, uid, "anger")
    before = svc.stats()["n_labels"]

    svc2 = AnnotationService(corpus, log, seed=1)
    assert svc2.stats()["n_labels"] == before
    resumed = svc2.start_session("alice")
    assert resumed.warmup_remaining == []
    remaining = answer_everything(svc2, resumed)
    assert len(remaining) == len(svc2.main_ids) - 2
    lines = [json.loads(line) for line in open(log)]
    ids = [(r["assessor_id"], r["utterance_id"]) for r in lines]
    assert len(ids) == len(set(ids))  # never double-logged


def test_fault_injection_exactly_once(corpus, tmp_path):
    log = str(tmp_path / "labels.jsonl")
    boom = {"armed": True}

    def hook(rec):
        if boom["armed"]:
            boom["armed"] = False
            raise OSError("injected write failure")

    svc = AnnotationService(corpus, log, seed=1, fault_hook=hook)
    session = svc.start_session("alice")
    uid = svc.next_utterance(session.session_id)
    with pytest.raises(OSError):
        svc.submit_label(session.session_id, uid, "anger")
    # nothing durable, nothing in memory: the retry succeeds exactly once
    svc.submit_label(session.session_id, uid, "anger")
    lines = [json.loads(line) for line in open(log)]
    assert len(lines) == 1 and lines[0]["utterance_id"] == uid


def test_fault_between_append_and_ack_is_safe_on_restart(corpus, tmp_path):
    # simulate a crash after the durable append: the log has the record
    # but the client never saw the ack; after restart the retry is
    # refused as a duplicate and the log still has one entry
    log = tmp_path / "labels.jsonl"
    svc = AnnotationService(corpus, str(log), seed=1)
    session = svc.start_session("alice")
    uid = svc.next_utterance(session.session_id)
    svc.submit_label(session.session_id, uid, "anger")

    svc2 = AnnotationService(corpus, str(log), seed=1)
    s2 = svc2.start_session("alice")
    with pytest.raises(DuplicateAnswer):
        svc2.submit_label(s2.session_id, uid, "anger")
    assert len(open(log).readlines()) == 1


def test_concurrent_submissions_are_serialized(corpus, tmp_path):
    svc = AnnotationService(corpus, str(tmp_path / "labels.jsonl"), seed=1)
    sessions = [svc.start_session(f"a{i}") for i in range(4)]
    errors = []

    def worker(s):
        try:
            answer_everything(svc, s)
        except Exception as exc:  # noqa: BLE001 - surfaced via the list
            errors.append(exc)

    threads = [threading.Thread(target=worker, args=(s,)) for s in sessions]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    st = svc.stats()
    assert st["n_labels"] == 4 * len(svc.main_ids)


def test_empty_corpus_rejected(tmp_path):
    with pytest.raises(EmptyCorpus):
        AnnotationService(dataset.Corpus([]), str(tmp_path / "l.jsonl"))
