"""Evaluation protocol: exact match, n-gram captioning metrics, box accuracy.

Captioning scores are corpus-level. BLEU uses clipped n-gram precisions with
uniform weights and the closest-reference-length brevity penalty; ROUGE-L is
the per-sample best LCS F-measure (beta = 1.2) averaged over the corpus;
CIDEr-D uses TF-IDF n-gram cosines for n = 1..4 with a Gaussian length
penalty (sigma = 6) scaled to [0, 10], with IDF built from the references of
the evaluated split. Answer strings are tokenized with the question
tokenizer and normalized identically on both sides.
"""

from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from .geometry import Box3D, iou_aabb
from .textproc import normalize_answer, tokenize

CAPTION_NGRAM_MAX = 4
CIDER_SIGMA = 6.0
ROUGE_BETA = 1.2


# ---------------------------------------------------------------------------
# exact match
# ---------------------------------------------------------------------------

def em_hit(ranked_answers: list[str], refs: list[str], k: int) -> int:
    """1 iff any of the top-k normalized predictions matches any reference."""
    if not ranked_answers or not refs:
        raise ValueError("ranked answers and references must be non-empty")
    top = [normalize_answer(a) for a in ranked_answers[: min(k, len(ranked_answers))]]
    gold = {normalize_answer(r) for r in refs}
    return int(any(a in gold for a in top))


def em_at_k(ranked: list[list[str]], refs: list[list[str]], k: int) -> float:
    hits = [em_hit(r, g, k) for r, g in zip(ranked, refs)]
    return float(np.mean(hits)) if hits else 0.0


# ---------------------------------------------------------------------------
# BLEU
# ---------------------------------------------------------------------------

def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _closest_ref_len(cand_len: int, refs: list[list[str]]) -> int:
    # ties between equally close reference lengths go to the shorter one
    return len(min(refs, key=lambda r: (abs(len(r) - cand_len), len(r))))


def bleu(candidates: list[list[str]], references: list[list[list[str]]], n: int) -> float:
    """Corpus BLEU-n over tokenized candidates with one or more references each."""
    if n < 1:
        raise ValueError("n-gram order must be >= 1")
    matched = np.zeros(n, dtype=np.int64)
    possible = np.zeros(n, dtype=np.int64)
    cand_total, ref_total = 0, 0
    for cand, refs in zip(candidates, references):
        if not refs:
            raise ValueError("every sample needs at least one reference")
        cand_total += len(cand)
        ref_total += _closest_ref_len(len(cand), refs)
        for order in range(1, n + 1):
            counts = _ngram_counts(cand, order)
            clip = Counter()
            for ref in refs:
                for gram, cnt in _ngram_counts(ref, order).items():
                    if cnt > clip[gram]:
                        clip[gram] = cnt
            matched[order - 1] += sum(min(cnt, clip[g]) for g, cnt in counts.items())
            possible[order - 1] += max(0, len(cand) - order + 1)
    if cand_total == 0 or np.any(possible == 0) or np.any(matched == 0):
        return 0.0
    log_precision = float(np.mean(np.log(matched / possible)))
    brevity = 1.0 if cand_total > ref_total else math.exp(1.0 - ref_total / cand_total)
    return brevity * math.exp(log_precision)


# ---------------------------------------------------------------------------
# ROUGE-L
# ---------------------------------------------------------------------------

def _lcs(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l(candidates: list[list[str]], references: list[list[list[str]]]) -> float:
    """Corpus mean of the per-sample max-over-references LCS F-measure."""
    scores = []
    for cand, refs in zip(candidates, references):
        best = 0.0
        for ref in refs:
            lcs = _lcs(cand, ref)
            if lcs == 0:
                continue
            prec, rec = lcs / len(cand), lcs / len(ref)
            best = max(best, (1 + ROUGE_BETA**2) * prec * rec / (rec + ROUGE_BETA**2 * prec))
        scores.append(best)
    return float(np.mean(scores)) if scores else 0.0


# ---------------------------------------------------------------------------
# CIDEr-D
# ---------------------------------------------------------------------------

def _tfidf_vector(counts: Counter, doc_freq: Counter, log_n_docs: float):
    vec = defaultdict(float)
    norm_sq = 0.0
    for gram, tf in counts.items():
        weight = tf * (log_n_docs - math.log(max(1.0, doc_freq[gram])))
        vec[gram] = weight
        norm_sq += weight * weight
    return vec, math.sqrt(norm_sq)


def cider(candidates: list[list[str]], references: list[list[list[str]]]) -> float:
    """Corpus CIDEr-D in [0, 10]; a single-sample corpus degenerates to 0."""
    if not candidates:
        raise ValueError("cider needs at least one sample")
    n_docs = len(references)
    log_n_docs = math.log(max(1.0, float(n_docs)))
    sample_scores = np.zeros(len(candidates))
    for order in range(1, CAPTION_NGRAM_MAX + 1):
        doc_freq = Counter()
        for refs in references:
            grams = set()
            for ref in refs:
                grams.update(_ngram_counts(ref, order))
            doc_freq.update(grams)
        for s, (cand, refs) in enumerate(zip(candidates, references)):
            vec_c, norm_c = _tfidf_vector(_ngram_counts(cand, order), doc_freq, log_n_docs)
            total = 0.0
            for ref in refs:
                vec_r, norm_r = _tfidf_vector(_ngram_counts(ref, order), doc_freq, log_n_docs)
                if norm_c == 0.0 or norm_r == 0.0:
                    continue
                overlap = sum(min(w, vec_r[g]) * vec_r[g] for g, w in vec_c.items())
                penalty = math.exp(-((len(cand) - len(ref)) ** 2) / (2 * CIDER_SIGMA**2))
                total += overlap / (norm_c * norm_r) * penalty
            sample_scores[s] += 10.0 * total / len(refs) / CAPTION_NGRAM_MAX
    return float(np.mean(sample_scores))


# ---------------------------------------------------------------------------
# box accuracy
# ---------------------------------------------------------------------------

def acc_at_iou(
    pred_boxes: list[Box3D | None],
    gt_boxes: list[list[Box3D]],
    threshold: float,
) -> float:
    """Fraction of samples whose predicted box beats the IoU threshold.

    Comparison is strict (>) against the best ground-truth box; a missing
    prediction counts as a miss.
    """
    hits = []
    for pred, gts in zip(pred_boxes, gt_boxes):
        if not gts:
            raise ValueError("every sample needs at least one ground-truth box")
        if pred is None:
            hits.append(0)
            continue
        hits.append(int(max(iou_aabb(pred, g) for g in gts) > threshold))
    return float(np.mean(hits)) if hits else 0.0


def top10_acc_at_iou(
    pred_boxes_top10: list[list[Box3D]],
    gt_boxes: list[list[Box3D]],
    threshold: float,
) -> float:
    """Like acc_at_iou but scoring the best of up to ten ranked boxes."""
    hits = []
    for preds, gts in zip(pred_boxes_top10, gt_boxes):
        if not gts:
            raise ValueError("every sample needs at least one ground-truth box")
        if not preds:
            hits.append(0)
            continue
        best = max(iou_aabb(p, g) for p in preds[:10] for g in gts)
        hits.append(int(best > threshold))
    return float(np.mean(hits)) if hits else 0.0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

METRIC_COLUMNS = [
    "em1",
    "em10",
    "bleu1",
    "bleu2",
    "bleu3",
    "bleu4",
    "rouge_l",
    "cider",
    "acc_025",
    "acc_05",
    "top10_acc_025",
]


@dataclass
class MetricReport:
    """All metrics for one corpus, with per-question-type sub-reports."""

    em1: float = 0.0
    em10: float = 0.0
    bleu1: float = 0.0
    bleu2: float = 0.0
    bleu3: float = 0.0
    bleu4: float = 0.0
    rouge_l: float = 0.0
    cider: float = 0.0
    acc_025: float = 0.0
    acc_05: float = 0.0
    top10_acc_025: float = 0.0
    n_samples: int = 0
    n_box_samples: int = 0
    per_type: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in METRIC_COLUMNS}
        out["n_samples"] = self.n_samples
        out["n_box_samples"] = self.n_box_samples
        out["per_type"] = self.per_type
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


def mean_report(reports: list[MetricReport]) -> MetricReport:
    """Field-wise arithmetic mean of several reports (per-type included)."""
    if not reports:
        raise ValueError("no reports to average")
    out = MetricReport(
        n_samples=reports[0].n_samples, n_box_samples=reports[0].n_box_samples
    )
    for col in METRIC_COLUMNS:
        setattr(out, col, float(np.mean([getattr(r, col) for r in reports])))
    types = sorted({t for r in reports for t in r.per_type})
    for t in types:
        subs = [r.per_type[t] for r in reports if t in r.per_type]
        out.per_type[t] = {
            k: float(np.mean([s[k] for s in subs])) for k in subs[0] if k != "count"
        }
        out.per_type[t]["count"] = subs[0]["count"]
    return out


def _score_subset(preds: list[dict], golds: list[dict]) -> dict:
    ranked = [p["answer_ranked"] for p in preds]
    refs = [g["answers"] for g in golds]
    cand_tokens = [tokenize(normalize_answer(r[0])) for r in ranked]
    ref_tokens = [[tokenize(normalize_answer(a)) for a in rs] for rs in refs]
    out = {
        "em1": em_at_k(ranked, refs, 1),
        "em10": em_at_k(ranked, refs, 10),
        "rouge_l": rouge_l(cand_tokens, ref_tokens),
        "cider": cider(cand_tokens, ref_tokens),
    }
    for n in range(1, 5):
        out[f"bleu{n}"] = bleu(cand_tokens, ref_tokens, n)

    boxed = [
        (p, g) for p, g in zip(preds, golds) if g.get("object_boxes")
    ]
    if boxed:
        gt_boxes = [[Box3D.from_dict(b) for b in g["object_boxes"]] for _, g in boxed]
        top1 = [Box3D.from_dict(p["box"]) if p.get("box") else None for p, _ in boxed]
        top10 = [
            [Box3D.from_dict(b) for b in p["boxes_top10"]]
            if p.get("boxes_top10")
            else ([Box3D.from_dict(p["box"])] if p.get("box") else [])
            for p, _ in boxed
        ]
        out["acc_025"] = acc_at_iou(top1, gt_boxes, 0.25)
        out["acc_05"] = acc_at_iou(top1, gt_boxes, 0.5)
        out["top10_acc_025"] = top10_acc_at_iou(top10, gt_boxes, 0.25)
    else:
        out["acc_025"] = out["acc_05"] = out["top10_acc_025"] = 0.0
    out["n_box_samples"] = len(boxed)
    return out


def score_predictions(predictions: list[dict], gold: list[dict]) -> MetricReport:
    """Score a prediction corpus against gold QA samples.

    Both sides are dicts in the JSON Lines schemas (predictions carry
    question_id / answer_ranked / box / boxes_top10; gold carries the QA
    sample fields). Unknown or duplicate question ids raise ValueError.
    Box metrics are computed over the samples that have annotated boxes.
    """
    from .qa import classify_question_type  # local import avoids a cycle

    gold_by_id: dict[str, dict] = {}
    for g in gold:
        if g["question_id"] in gold_by_id:
            raise ValueError(f"duplicate gold question_id {g['question_id']!r}")
        gold_by_id[g["question_id"]] = g
    seen = set()
    unknown = []
    for p in predictions:
        qid = p["question_id"]
        if qid in seen:
            raise ValueError(f"duplicate prediction question_id {qid!r}")
        seen.add(qid)
        if qid not in gold_by_id:
            unknown.append(qid)
    if unknown:
        raise ValueError(f"predictions reference unknown question ids: {unknown}")

    pairs = [(p, gold_by_id[p["question_id"]]) for p in predictions]
    preds = [p for p, _ in pairs]
    golds = [g for _, g in pairs]
    overall = _score_subset(preds, golds)

    report = MetricReport(n_samples=len(pairs))
    for k, v in overall.items():
        setattr(report, k, v)

    by_type: dict[str, list[int]] = defaultdict(list)
    for i, g in enumerate(golds):
        by_type[classify_question_type(g["question"]).value].append(i)
    for qtype, idxs in sorted(by_type.items()):
        sub = _score_subset([preds[i] for i in idxs], [golds[i] for i in idxs])
        sub["count"] = len(idxs)
        report.per_type[qtype] = sub
    return report


def render_report(report: MetricReport) -> str:
    """Fixed-width table: one row overall plus one per question type."""
    headers = [
        "Split", "EM@1", "EM@10", "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4",
        "ROUGE", "CIDEr", "Acc@0.25", "Acc@0.5", "Top10-Acc@0.25", "N",
    ]
    def fmt(values, count):
        return [f"{100 * v:.2f}" for v in values] + [str(count)]

    rows = [
        ["overall"]
        + fmt([getattr(report, c) for c in METRIC_COLUMNS], report.n_samples)
    ]
    for qtype, sub in sorted(report.per_type.items()):
        rows.append([qtype] + fmt([sub[c] for c in METRIC_COLUMNS], sub["count"]))
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(headers, widths)),
        "  ".join("-" * w for w in widths),
    ]
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in rows]
    return "\n".join(lines)
