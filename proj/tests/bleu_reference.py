#!/usr/bin/env python3
"""Independent reference implementation of the BLEU variant used here.

Corpus-level BLEU-4: geometric mean of modified n-gram precisions with
add-one smoothing applied to orders 2-4, multiplied by the brevity penalty.
Run once to freeze the oracle value for the fixed two-sentence case used in
the metric sanity test.
"""
import math
from collections import Counter


def ngram_counts(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(predictions, references):
    matches = [0] * 4
    totals = [0] * 4
    pred_len = ref_len = 0
    for pred, ref in zip(predictions, references, strict=True):
        pred_len += len(pred)
        ref_len += len(ref)
        for n in range(1, 5):
            pc = ngram_counts(pred, n)
            rc = ngram_counts(ref, n)
            totals[n - 1] += sum(pc.values())
            matches[n - 1] += sum(min(c, rc[g]) for g, c in pc.items())
    log_prec = 0.0
    for n in range(1, 5):
        num, den = matches[n - 1], totals[n - 1]
        if n >= 2:
            num, den = num + 1, den + 1
        if num <= 0 or den <= 0:
            return 0.0
        log_prec += 0.25 * math.log(num / den)
    bp = 1.0 if pred_len >= ref_len else math.exp(1.0 - ref_len / pred_len)
    return 100.0 * bp * math.exp(log_prec)


if __name__ == "__main__":
    predictions = [
        "the cat sat on the mat".split(),
        "print ( hello world )".split(),
    ]
    references = [
        "the cat is on the mat".split(),
        "print ( hello , world )".split(),
    ]
    print(f"{bleu(predictions, references):.10f}")
