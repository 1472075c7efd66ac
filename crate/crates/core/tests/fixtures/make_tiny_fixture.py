"""Regenerates tiny_eval.jsonl and tiny_population.jsonl.

Vocabulary of 16 words, 20 evaluation sequences, 2 synthetic reference
models. Members get a logit bump on their ground-truth tokens under the
target model. Every stored derived field (mu, sigma, KL) is computed here
in float64 from the full distributions that are shipped alongside it.

    python3 make_tiny_fixture.py
"""
import json
import math
import zlib

import numpy as np

VOCAB = ["the", "a", "Alice", "Bob", "Paris", "bank", "sent", "to", "on",
         "Monday", "card", "4421", "email", "news", "of", "."]
TAGS = {"Alice": "PERSON", "Bob": "PERSON", "Paris": "GPE", "Monday": "DATE",
        "bank": "ORG"}
PRIVATE = {"Alice", "Bob", "4421", "card"}
HEADER = {"schema": "leakscope/1", "seq_signal": "geo_mean", "log": "nat"}

rng = np.random.default_rng(20240611)


def softmax(x):
    e = np.exp(x - x.max())
    return e / e.sum()


def position(is_member):
    base = rng.normal(0.0, 1.5, len(VOCAB))
    gt = int(rng.choice(len(VOCAB), p=softmax(base)))
    target_logits = base + rng.normal(0.0, 0.3, len(VOCAB))
    if is_member:
        target_logits[gt] += 1.5
    refs = [softmax(base + rng.normal(0.0, 0.3, len(VOCAB))) for _ in range(2)]
    target = softmax(target_logits)
    avg = (refs[0] + refs[1]) / 2.0
    mu = float(np.sum(target * np.log(target)))
    sigma = float(math.sqrt(np.sum(target * (np.log(target) - mu) ** 2)))
    kl = float(np.sum(avg * np.log(avg / target)))
    return gt, {
        "gt_logprob_target": float(np.log(target[gt])),
        "gt_logprob_refs": [float(np.log(r[gt])) for r in refs],
        "mu_target": mu,
        "sigma_target": sigma,
        "kl_refavg_target": kl,
        "gt_token": gt,
        "full_dist_target": [float(v) for v in target],
        "full_dist_refs": [[float(v) for v in r] for r in refs],
    }


def sequence(i, is_member):
    k = int(rng.integers(3, 11))
    first = int(rng.integers(len(VOCAB)))
    words = [VOCAB[first]]
    tokens = []
    for _ in range(k - 1):
        gt, tok = position(is_member)
        words.append(VOCAB[gt])
        tokens.append(tok)
    texts = [words[0]] + [" " + w for w in words[1:]]
    lp_t = [t["gt_logprob_target"] for t in tokens]
    lp_r = [[t["gt_logprob_refs"][j] for t in tokens] for j in range(2)]
    return {
        "id": f"seq{i:02d}",
        "label": "member" if is_member else "nonmember",
        "p_target": math.exp(sum(lp_t) / len(lp_t)),
        "p_refs": [math.exp(sum(r) / len(r)) for r in lp_r],
        "tokens": tokens,
        "token_texts": texts,
        "tags": [TAGS.get(w, "") for w in words],
        "priv_mask": [w in PRIVATE for w in words],
        "zlib_bytes": len(zlib.compress("".join(texts).encode("utf-8"))),
    }


def population(i):
    seq = sequence(i, False)
    return {"id": f"pop{i:02d}", "p_target": seq["p_target"], "p_refs": seq["p_refs"]}


def write(path, rows):
    with open(path, "w") as f:
        f.write(json.dumps(HEADER, separators=(",", ":")) + "\n")
        for r in rows:
            f.write(json.dumps(r, separators=(",", ":")) + "\n")


if __name__ == "__main__":
    write("tiny_eval.jsonl", [sequence(i, i % 2 == 0) for i in range(20)])
    write("tiny_population.jsonl", [population(i) for i in range(30)])
