"""Filtered ranking metrics and triplet classification.

Ranks are computed against candidate sets with every other known true
triple removed. Two tie rules exist: "optimistic" counts only strictly
higher scores (rank = 1 + #greater), "mean" spreads ties over their span
(rank = 1 + #greater + #ties / 2). Reports default to "mean" because a
constant scorer would otherwise look perfect.
"""

import collections
import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datasets import REPLACE_HEAD, REPLACE_TAIL, classify_relation_patterns
from .errors import DataError
from .scoring import query_matrix

TIE_RULES = ("mean", "optimistic")


def score_triples(arch, groups, table, triples):
    """Scores of an (n, 3) array of triples under their groups' functions."""
    triples = np.asarray(triples, dtype=np.int64)
    scores = np.empty(len(triples), dtype=table.entities.dtype)
    group_vec = np.asarray(groups.groups)
    batch_groups = group_vec[triples[:, 1]]
    for g in range(groups.n_groups):
        rows = np.flatnonzero(batch_groups == g)
        if not len(rows):
            continue
        sub = triples[rows]
        q = query_matrix(
            arch,
            g,
            REPLACE_TAIL,
            table.entities[sub[:, 0]],
            table.relations[sub[:, 1]],
        )
        scores[rows] = np.einsum("nd,nd->n", q, table.entities[sub[:, 2]])
    return scores


def _exclusions(store, triple, direction):
    h, r, t = (int(x) for x in triple)
    if direction == REPLACE_TAIL:
        known, true_id = store.known_tails(h, r), t
    else:
        known, true_id = store.known_heads(r, t), h
    return known[known != true_id], true_id


def ranks_for_queries(
    arch,
    groups,
    table,
    store,
    triples,
    direction,
    tie_rule="mean",
    n_candidates=0,
    rng=None,
    chunk_size=1024,
):
    """Filtered ranks of the true answer for every triple, one direction.

    With ``n_candidates`` 0 the full entity vocabulary is ranked; otherwise
    each query ranks the truth against at most that many sampled filtered
    negatives (used for fast reward estimates during search).
    """
    if tie_rule not in TIE_RULES:
        raise ValueError(f"unknown tie rule {tie_rule!r}")
    triples = np.asarray(triples, dtype=np.int64)
    ranks = np.empty(len(triples), dtype=np.float64)
    group_vec = np.asarray(groups.groups)
    batch_groups = group_vec[triples[:, 1]]
    sampled = bool(n_candidates) and n_candidates < store.n_entities - 1
    if sampled and rng is None:
        raise ValueError("sampled-candidate ranking needs an rng")
    fixed_col, true_col = (0, 2) if direction == REPLACE_TAIL else (2, 0)
    for g in range(groups.n_groups):
        rows = np.flatnonzero(batch_groups == g)
        for lo in range(0, len(rows), chunk_size):
            idx = rows[lo : lo + chunk_size]
            sub = triples[idx]
            q = query_matrix(
                arch,
                g,
                direction,
                table.entities[sub[:, fixed_col]],
                table.relations[sub[:, 1]],
            )
            if sampled:
                ranks[idx] = _sampled_ranks(
                    store, table, sub, q, direction, true_col, n_candidates, rng
                )
            else:
                ranks[idx] = _full_ranks(
                    store, table, sub, q, direction, true_col, tie_rule
                )
    return ranks


def _full_ranks(store, table, sub, q, direction, true_col, tie_rule):
    scores = q @ table.entities.T
    true_ids = sub[:, true_col]
    true_scores = scores[np.arange(len(sub)), true_ids]
    greater = (scores > true_scores[:, None]).sum(axis=1)
    ties = (scores == true_scores[:, None]).sum(axis=1) - 1
    out = np.empty(len(sub), dtype=np.float64)
    for k, triple in enumerate(sub):
        exclude, _ = _exclusions(store, triple, direction)
        if len(exclude):
            row = scores[k, exclude]
            greater[k] -= np.count_nonzero(row > true_scores[k])
            ties[k] -= np.count_nonzero(row == true_scores[k])
        if tie_rule == "optimistic":
            out[k] = 1.0 + greater[k]
        else:
            out[k] = 1.0 + greater[k] + 0.5 * ties[k]
    return out


def _sampled_ranks(store, table, sub, q, direction, true_col, n_candidates, rng):
    out = np.empty(len(sub), dtype=np.float64)
    mask = np.empty(store.n_entities, dtype=bool)
    for k, triple in enumerate(sub):
        exclude, true_id = _exclusions(store, triple, direction)
        mask[:] = True
        mask[exclude] = False
        mask[true_id] = False
        pool = np.flatnonzero(mask)
        if len(pool) > n_candidates:
            pool = rng.choice(pool, size=n_candidates, replace=False)
        cand_scores = table.entities[pool] @ q[k]
        true_score = float(table.entities[true_id] @ q[k])
        greater = int(np.count_nonzero(cand_scores > true_score))
        out[k] = 1.0 + greater
    return out


@dataclass
class RelationMetrics:
    relation_id: int
    name: str
    pattern: str
    count: int
    mrr: float
    hit1: float
    hit10: float


@dataclass
class EvalReport:
    split: str
    tie_rule: str
    mrr: float
    hit1: float
    hit10: float
    n_triples: int
    per_relation: list = field(default_factory=list)
    per_pattern: dict = field(default_factory=dict)
    wall_seconds: float = 0.0


def _metrics(ranks):
    rr = 1.0 / ranks
    return float(rr.mean()), float((ranks <= 1.0).mean()), float((ranks <= 10.0).mean())


def link_prediction_eval(
    arch, groups, table, store, split="test", tie_rule="mean", patterns=None
):
    """Filtered MRR / Hit@1 / Hit@10 with per-relation and per-pattern rows."""
    start = time.perf_counter()
    triples = store.split(split)
    if not len(triples):
        raise DataError(f"split {split!r} is empty")
    tail_ranks = ranks_for_queries(
        arch, groups, table, store, triples, REPLACE_TAIL, tie_rule
    )
    head_ranks = ranks_for_queries(
        arch, groups, table, store, triples, REPLACE_HEAD, tie_rule
    )
    all_ranks = np.concatenate([tail_ranks, head_ranks])
    mrr, hit1, hit10 = _metrics(all_ranks)
    if patterns is None:
        patterns = classify_relation_patterns(store)
    per_relation = []
    for r in range(store.n_relations):
        rows = np.flatnonzero(triples[:, 1] == r)
        label = patterns[r].label if r in patterns else "general"
        if not len(rows):
            per_relation.append(
                RelationMetrics(r, store.relation_names[r], label, 0, np.nan, np.nan, np.nan)
            )
            continue
        ranks_r = np.concatenate([tail_ranks[rows], head_ranks[rows]])
        m, h1, h10 = _metrics(ranks_r)
        per_relation.append(
            RelationMetrics(r, store.relation_names[r], label, len(rows), m, h1, h10)
        )
    per_pattern = {}
    by_label = collections.defaultdict(list)
    for row in per_relation:
        if row.count:
            by_label[row.pattern].append(row)
    for label, rows in sorted(by_label.items()):
        weights = np.array([row.count for row in rows], dtype=np.float64)
        weights /= weights.sum()
        per_pattern[label] = {
            "count": int(sum(row.count for row in rows)),
            "mrr": float(np.dot(weights, [row.mrr for row in rows])),
            "hit1": float(np.dot(weights, [row.hit1 for row in rows])),
            "hit10": float(np.dot(weights, [row.hit10 for row in rows])),
        }
    return EvalReport(
        split=split,
        tie_rule=tie_rule,
        mrr=mrr,
        hit1=hit1,
        hit10=hit10,
        n_triples=len(triples),
        per_relation=per_relation,
        per_pattern=per_pattern,
        wall_seconds=time.perf_counter() - start,
    )


@dataclass
class ClassifierThresholds:
    per_relation: dict
    default: float


def _best_threshold(scores, labels):
    """Lowest threshold maximizing accuracy of (score > threshold)."""
    uniq = np.unique(scores)
    candidates = [uniq[0] - 1.0]
    candidates.extend((uniq[:-1] + uniq[1:]) / 2.0)
    candidates.append(uniq[-1])
    best_theta, best_acc = None, -1.0
    for theta in candidates:
        acc = float(((scores > theta) == labels).mean())
        if acc > best_acc:
            best_theta, best_acc = float(theta), acc
    return best_theta, best_acc


def fit_thresholds(relations, scores, labels):
    """Per-relation decision thresholds maximizing labeled accuracy.

    ``labels`` are booleans (True = positive). Relations absent from the
    data fall back to the global threshold at prediction time.
    """
    relations = np.asarray(relations, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if not len(scores):
        raise ValueError("no labeled examples")
    default, _ = _best_threshold(scores, labels)
    per_relation = {}
    for r in np.unique(relations):
        sel = relations == r
        theta, _ = _best_threshold(scores[sel], labels[sel])
        per_relation[int(r)] = theta
    return ClassifierThresholds(per_relation, default)


def classification_accuracy(relations, scores, labels, thresholds):
    """Fraction of (score > theta_r) predictions matching the labels."""
    relations = np.asarray(relations, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    theta = np.array(
        [thresholds.per_relation.get(int(r), thresholds.default) for r in relations]
    )
    return float(((scores > theta) == labels).mean())


def corruption_negatives(store, split, rng, max_tries=1000):
    """One uniformly corrupted negative per positive, avoiding known truths."""
    positives = store.split(split)
    negatives = np.empty_like(positives)
    for k, (h, r, t) in enumerate(positives):
        h, r, t = int(h), int(r), int(t)
        for _ in range(max_tries):
            replace_head = rng.random() < 0.5
            e = int(rng.integers(store.n_entities))
            cand = (e, r, t) if replace_head else (h, r, e)
            if cand not in store.known_index:
                negatives[k] = cand
                break
        else:
            raise DataError(
                f"could not corrupt triple ({h}, {r}, {t}); relation saturated"
            )
    return negatives


def format_report(report, classification=None):
    """Human-readable summary of an EvalReport."""
    lines = [
        f"split={report.split} tie_rule={report.tie_rule} "
        f"triples={report.n_triples}",
        f"MRR {report.mrr:.4f}  Hit@1 {report.hit1:.4f}  Hit@10 {report.hit10:.4f}",
        "",
        f"{'relation':<24} {'pattern':<15} {'count':>6} {'MRR':>7} "
        f"{'Hit@1':>7} {'Hit@10':>7}",
    ]
    for row in report.per_relation:
        if row.count:
            lines.append(
                f"{row.name:<24} {row.pattern:<15} {row.count:>6} "
                f"{row.mrr:>7.4f} {row.hit1:>7.4f} {row.hit10:>7.4f}"
            )
        else:
            lines.append(
                f"{row.name:<24} {row.pattern:<15} {row.count:>6} "
                f"{'-':>7} {'-':>7} {'-':>7}"
            )
    if report.per_pattern:
        lines.append("")
        lines.append(
            f"{'pattern':<24} {'count':>6} {'MRR':>7} {'Hit@1':>7} {'Hit@10':>7}"
        )
        for label, agg in report.per_pattern.items():
            lines.append(
                f"{label:<24} {agg['count']:>6} {agg['mrr']:>7.4f} "
                f"{agg['hit1']:>7.4f} {agg['hit10']:>7.4f}"
            )
    if classification is not None:
        lines.append("")
        lines.append(f"triplet classification accuracy {classification:.4f}")
    return "\n".join(lines)


def write_report_files(out_dir, report, classification=None):
    """Write metrics.json, per_pattern.csv, and report.txt under out_dir.

    Wall-clock time is deliberately left out of the files so reruns with
    the same seed produce byte-identical artifacts.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "split": report.split,
        "tie_rule": report.tie_rule,
        "mrr": report.mrr,
        "hit1": report.hit1,
        "hit10": report.hit10,
        "n_triples": report.n_triples,
        "per_pattern": report.per_pattern,
    }
    if classification is not None:
        payload["classification_accuracy"] = classification
    with open(out_dir / "metrics.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out_dir / "per_pattern.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["relation_id", "relation", "pattern", "count", "mrr", "hit1", "hit10"]
        )
        for row in report.per_relation:
            writer.writerow(
                [
                    row.relation_id,
                    row.name,
                    row.pattern,
                    row.count,
                    "" if np.isnan(row.mrr) else repr(row.mrr),
                    "" if np.isnan(row.hit1) else repr(row.hit1),
                    "" if np.isnan(row.hit10) else repr(row.hit10),
                ]
            )
    with open(out_dir / "report.txt", "w") as fh:
        fh.write(format_report(report, classification) + "\n")


def triplet_classification(arch, groups, table, store, seed=0):
    """Threshold-based triple classification accuracy on the test split.

    Thresholds are fitted on validation positives plus generated negatives;
    accuracy is reported on test positives plus generated negatives.
    """
    rng = np.random.default_rng([seed, 101])
    va_pos = store.split("valid")
    va_neg = corruption_negatives(store, "valid", rng)
    va_triples = np.concatenate([va_pos, va_neg])
    va_labels = np.concatenate(
        [np.ones(len(va_pos), dtype=bool), np.zeros(len(va_neg), dtype=bool)]
    )
    thresholds = fit_thresholds(
        va_triples[:, 1], score_triples(arch, groups, table, va_triples), va_labels
    )
    te_pos = store.split("test")
    te_neg = corruption_negatives(store, "test", rng)
    te_triples = np.concatenate([te_pos, te_neg])
    te_labels = np.concatenate(
        [np.ones(len(te_pos), dtype=bool), np.zeros(len(te_neg), dtype=bool)]
    )
    accuracy = classification_accuracy(
        te_triples[:, 1],
        score_triples(arch, groups, table, te_triples),
        te_labels,
        thresholds,
    )
    return {"accuracy": accuracy, "thresholds": thresholds}
