"""Independent reference implementations used as test oracles."""

import math
from fractions import Fraction


def weighted_precision_oracle(predictions, context, valid_sets):
    """Exact rational w(TP) / (w(TP) + |FP|) over projects containing the whole context."""
    sharing = [s for s in valid_sets if all(c in s for c in context)]
    if not sharing:
        return None
    seen = []
    for p in predictions:
        if p not in seen:
            seen.append(p)
    w = Fraction(0)
    fp = 0
    for p in seen:
        n = len([s for s in sharing if p in s])
        if n == 0:
            fp += 1
        else:
            w += Fraction(n, len(sharing))
    if w + fp == 0:
        return 0.0
    return float(w / (w + fp))


def predict_oracle(context, projects, vectors, k, n):
    """projects: [(id, library set)]; vectors: name -> list of floats."""
    dim = len(next(iter(vectors.values())))
    cv = [sum(vectors[c][d] for c in context) / len(context) for d in range(dim)]
    scored = []
    for pid, libs in projects:
        known = sorted(l for l in libs if l in vectors)
        if not known:
            continue
        pv = [sum(vectors[l][d] for l in known) / len(known) for d in range(dim)]
        cos = sum(a * b for a, b in zip(cv, pv)) / (math.sqrt(sum(a * a for a in cv)) * math.sqrt(sum(b * b for b in pv)))
        scored.append((-cos, pid, libs))
    scored.sort(key=lambda t: (t[0], t[1]))
    counts = {}
    for _, _, libs in scored[:k]:
        for l in libs:
            counts[l] = counts.get(l, 0) + 1
    ranked = sorted((l for l in counts if l not in context), key=lambda l: (-counts[l], l))
    return [pid for _, pid, _ in scored[:k]], ranked[:n]
