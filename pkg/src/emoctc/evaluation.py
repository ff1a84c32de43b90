"""Metrics, grouped cross-validation, and error-structure analyses."""
import csv
import os
from dataclasses import dataclass, field

import numpy as np

from . import baselines, features, nn
from .ctc import DEFAULT_ALPHABET
from .dataset import EMOTIONS, RAW_TO_FINAL
from .errors import Empty, LengthMismatch, MissingExpertData, TooFewGroups


def overall_accuracy(truth, predictions):
    """Fraction of correct answers over all examples."""
    if len(truth) != len(predictions):
        raise LengthMismatch(f"{len(truth)} truths vs "
                             f"{len(predictions)} predictions")
    if len(truth) == 0:
        raise Empty("no examples")
    truth = np.asarray(truth)
    predictions = np.asarray(predictions)
    return float((truth == predictions).mean())


def mean_class_accuracy(truth, predictions):
    """Per-class accuracies averaged; classes absent from the truth are
    excluded (equals the plain per-class average whenever all classes
    are present)."""
    if len(truth) != len(predictions):
        raise LengthMismatch(f"{len(truth)} truths vs "
                             f"{len(predictions)} predictions")
    if len(truth) == 0:
        raise Empty("no examples")
    truth = np.asarray(truth)
    predictions = np.asarray(predictions)
    accs = []
    for c in np.unique(truth):
        m = truth == c
        accs.append(float((predictions[m] == c).mean()))
    return float(np.mean(accs))


def confusion_matrix(truth, predictions, num_classes):
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    for z, h in zip(truth, predictions):
        cm[int(z), int(h)] += 1
    return cm


@dataclass
class FoldSplit:
    folds: list  # each: {"test_groups", "train_ids", "test_ids"}


def grouped_kfold(corpus, k=5, seed=0):
    """Assign whole groups to folds (seeded shuffle, round-robin) so no
    group straddles train and test within a fold."""
    groups = sorted({u.group_id for u in corpus})
    if len(groups) < k:
        raise TooFewGroups(f"{len(groups)} groups < {k} folds")
    rng = np.random.default_rng(seed)
    order = [groups[i] for i in rng.permutation(len(groups))]
    assignment = {g: i % k for i, g in enumerate(order)}
    folds = []
    for fold in range(k):
        test_groups = {g for g, f in assignment.items() if f == fold}
        train_ids = [u.id for u in corpus if u.group_id not in test_groups]
        test_ids = [u.id for u in corpus if u.group_id in test_groups]
        folds.append({"test_groups": sorted(test_groups),
                      "train_ids": train_ids, "test_ids": test_ids})
    return FoldSplit(folds)


def _dissent_answers(utterance):
    """Expert answers that disagree with the final 4-class label."""
    return [a.answer for a in utterance.expert_annotations
            if RAW_TO_FINAL.get(a.answer) != utterance.final_label]


def misclassification_by_confidence(predictions, corpus):
    """Error rates per (final class, number of dissenting experts), plus
    the aggregate accuracy on the fully consistent subset.

    predictions: dict utterance id -> predicted class index.
    """
    cells = {}
    consistent_total = 0
    consistent_correct = 0
    for u in corpus:
        if u.id not in predictions:
            continue
        if not u.expert_annotations:
            raise MissingExpertData(f"{u.id} has no expert annotations")
        d = len(_dissent_answers(u))
        c = EMOTIONS.index(u.final_label)
        wrong = predictions[u.id] != c
        errors, total = cells.get((c, d), (0, 0))
        cells[(c, d)] = (errors + int(wrong), total + 1)
        if d == 0:
            consistent_total += 1
            consistent_correct += int(not wrong)
    table = {key: errors / total for key, (errors, total) in cells.items()}
    consistent_acc = (consistent_correct / consistent_total
                      if consistent_total else None)
    return {"error_rates": table, "cell_counts": cells,
            "consistent_accuracy": consistent_acc}


def residual_accuracy(predictions, corpus):
    """Per final class, over utterances with exactly one dissenting
    expert answer: the share of dissents inside the 4-emotion set, and
    among model errors on those utterances, the rate of coinciding with
    the dissenting answer.  A random-error baseline would sit near 1/3.
    """
    per_class = {}
    for ci, emotion in enumerate(EMOTIONS):
        dissents_total = 0
        dissents_considered = 0
        errors = 0
        coincide = 0
        for u in corpus:
            if u.final_label != emotion or u.id not in predictions:
                continue
            if not u.expert_annotations:
                raise MissingExpertData(f"{u.id} has no expert annotations")
            dis = _dissent_answers(u)
            if len(dis) != 1:
                continue
            dissents_total += 1
            mapped = RAW_TO_FINAL.get(dis[0])
            if mapped is None:
                continue
            dissents_considered += 1
            pred = predictions[u.id]
            if pred != ci:
                errors += 1
                if pred == EMOTIONS.index(mapped):
                    coincide += 1
        per_class[emotion] = {
            "considered_ratio": (dissents_considered / dissents_total
                                 if dissents_total else None),
            "coincidence_rate": coincide / errors if errors else None,
            "n_single_dissent": dissents_total,
            "n_errors": errors,
        }
    return {"per_class": per_class, "random_reference": 1.0 / 3.0}


@dataclass
class MethodResult:
    method: str
    fold_overall: list
    fold_mean_class: list
    confusion: np.ndarray
    predictions: dict  # utterance id -> class index (pooled over folds)

    @property
    def overall(self):
        return float(np.mean(self.fold_overall))

    @property
    def mean_class(self):
        return float(np.mean(self.fold_mean_class))


@dataclass
class EvaluationReport:
    methods: dict  # name -> MethodResult
    folds: FoldSplit
    confidence_errors: dict = None
    residual: dict = None
    frame_probs: dict = field(default_factory=dict)
    posterior_traces: dict = field(default_factory=dict)
    pooled: bool = False


DEFAULT_METHODS = ("dummy", "framewise", "onelabel", "ctc")


def run_comparison(corpus, methods=DEFAULT_METHODS, seed=0, k=5,
                   hidden_size=48, epochs=40, batch_size=16,
                   unified_len=features.UNIFIED_LEN, beam_width=4,
                   pooled=False, trace_utterances=4, restarts=2):
    """Grouped k-fold comparison of the requested methods.

    Features are extracted once, normalization is fit per fold on the
    training side only, and every method sees identical splits.
    """
    raw_seqs = {u.id: features.pad_or_truncate(
        features.extract_sequence(u.id, u.samples), unified_len)
        for u in corpus}
    labels = {u.id: EMOTIONS.index(u.final_label) for u in corpus}
    split = grouped_kfold(corpus, k=k, seed=seed)

    results = {m: MethodResult(m, [], [], np.zeros((4, 4), dtype=np.int64), {})
               for m in methods}
    frame_probs = {}
    posterior_traces = {}

    for fold_idx, fold in enumerate(split.folds):
        train_ids, test_ids = fold["train_ids"], fold["test_ids"]
        norm = features.fit_normalizer([raw_seqs[i] for i in train_ids])
        seqs = {i: features.apply_normalizer(raw_seqs[i], norm)
                for i in train_ids + test_ids}
        truth = [labels[i] for i in test_ids]

        for method in methods:
            if method == "dummy":
                model = baselines.dummy_fit([labels[i] for i in train_ids])
                pred = [baselines.dummy_predict(model) for _ in test_ids]
            elif method == "framewise":
                clf = baselines.train_framewise(
                    [seqs[i] for i in train_ids],
                    [labels[i] for i in train_ids],
                    baselines.ForestConfig(seed=seed + fold_idx))
                pred = [baselines.predict_framewise(clf, seqs[i])
                        for i in test_ids]
                if fold_idx == 0:
                    for utt_id in test_ids[:trace_utterances]:
                        frame_probs[utt_id] = baselines.frame_probabilities(
                            clf, seqs[utt_id])
            elif method in ("onelabel", "ctc"):
                net_cfg = nn.NetworkConfig(
                    hidden_size=hidden_size, head=method,
                    unified_len=unified_len)
                # early stopping watches a held-out training group so the
                # signal stays speaker-independent
                train_groups = sorted({corpus.by_id(i).group_id
                                       for i in train_ids})
                val_group = train_groups[-1]
                fit_ids = [i for i in train_ids
                           if corpus.by_id(i).group_id != val_group]
                val_ids = [i for i in train_ids
                           if corpus.by_id(i).group_id == val_group]
                data = [(seqs[i].matrix, seqs[i].true_len, labels[i])
                        for i in fit_ids]
                val = [(seqs[i].matrix, seqs[i].true_len, labels[i])
                       for i in val_ids]
                # random restarts guard against bad initializations
                # (an all-blank local minimum is easy to fall into);
                # keep the run with the best validation mean-class score
                params, best_val = None, -1.0
                for r in range(max(1, restarts)):
                    train_cfg = nn.TrainingConfig(
                        epochs=epochs, batch_size=batch_size,
                        seed=seed + fold_idx + 1000 * r, patience=12)
                    cand, history = nn.train(data, val, net_cfg, train_cfg)
                    score = max(h["val_mean_class"] for h in history)
                    if score > best_val:
                        params, best_val = cand, score
                pred = [nn.predict(params, net_cfg, seqs[i].matrix,
                                   seqs[i].true_len, beam_width)
                        for i in test_ids]
                if method == "ctc" and fold_idx == 0:
                    for utt_id in test_ids[:trace_utterances]:
                        Y = nn.forward_sequence(
                            params, net_cfg, seqs[utt_id].matrix,
                            seqs[utt_id].true_len)
                        posterior_traces[utt_id] = Y[:seqs[utt_id].true_len]
            else:
                raise ValueError(f"unknown method '{method}'")

            res = results[method]
            res.fold_overall.append(overall_accuracy(truth, pred))
            res.fold_mean_class.append(mean_class_accuracy(truth, pred))
            res.confusion += confusion_matrix(truth, pred, 4)
            res.predictions.update(dict(zip(test_ids, pred)))

    if pooled:
        ids = [u.id for u in corpus]
        for res in results.values():
            truth = [labels[i] for i in ids]
            pred = [res.predictions[i] for i in ids]
            res.fold_overall = [overall_accuracy(truth, pred)]
            res.fold_mean_class = [mean_class_accuracy(truth, pred)]

    report = EvaluationReport(results, split, pooled=pooled,
                              frame_probs=frame_probs,
                              posterior_traces=posterior_traces)
    ref = methods[-1]
    report.confidence_errors = misclassification_by_confidence(
        results[ref].predictions, corpus)
    report.residual = residual_accuracy(results[ref].predictions, corpus)
    return report


def write_report(report, out_dir):
    """Emit the CSV bundle: table1.csv, confusion_<m>.csv,
    confidence_errors.csv, residual.csv, frame_probs_<m>.csv."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "table1.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "overall_accuracy", "mean_class_accuracy"]
                   + [f"fold{i}_overall" for i in
                      range(len(report.folds.folds))])
        for name, res in report.methods.items():
            w.writerow([name, f"{res.overall:.4f}", f"{res.mean_class:.4f}"]
                       + [f"{v:.4f}" for v in res.fold_overall])

    for name, res in report.methods.items():
        path = os.path.join(out_dir, f"confusion_{name}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["true\\pred"] + list(EMOTIONS))
            for i, emotion in enumerate(EMOTIONS):
                w.writerow([emotion] + res.confusion[i].tolist())

    with open(os.path.join(out_dir, "confidence_errors.csv"), "w",
              newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class", "n_dissenting", "error_rate", "count"])
        for (c, d), rate in sorted(
                report.confidence_errors["error_rates"].items()):
            count = report.confidence_errors["cell_counts"][(c, d)][1]
            w.writerow([EMOTIONS[c], d, f"{rate:.4f}", count])
        acc = report.confidence_errors["consistent_accuracy"]
        if acc is not None:
            w.writerow(["consistent_subset_accuracy", "", f"{acc:.4f}", ""])

    with open(os.path.join(out_dir, "residual.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class", "considered_ratio", "coincidence_rate",
                    "n_single_dissent", "n_errors"])
        for emotion, row in report.residual["per_class"].items():
            w.writerow([
                emotion,
                "" if row["considered_ratio"] is None
                else f"{row['considered_ratio']:.4f}",
                "" if row["coincidence_rate"] is None
                else f"{row['coincidence_rate']:.4f}",
                row["n_single_dissent"], row["n_errors"],
            ])

    def dump_traces(traces, name):
        path = os.path.join(out_dir, f"frame_probs_{name}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            header_classes = list(EMOTIONS)
            if name == "ctc":
                header_classes.append("blank")
            w.writerow(["utterance", "frame"] + header_classes)
            for utt_id, probs in traces.items():
                for t in range(probs.shape[0]):
                    w.writerow([utt_id, t]
                               + [f"{v:.6f}" for v in probs[t]])

    if report.frame_probs:
        dump_traces(report.frame_probs, "framewise")
    if report.posterior_traces:
        dump_traces(report.posterior_traces, "ctc")
