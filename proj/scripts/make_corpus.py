#!/usr/bin/env python3
"""Generate the bundled synthetic two-class bag-of-words corpus.

Each document mixes a shared Zipfian background vocabulary with a
class-specific block of topical words, then stores term-frequency counts in
svmlight format (1-based indices, `#dim` pragma).

    python3 scripts/make_corpus.py --out data --seed 20240521
"""
import argparse
import pathlib

import numpy as np

VOCAB = 2000
TOPIC_WORDS = 200
TOPIC_SHARE = 0.3


def zipf_weights(size, exponent):
    w = 1.0 / np.arange(1, size + 1) ** exponent
    return w / w.sum()


def make_docs(rng, n_docs, label, background, topic):
    topic_offset = 1 + label * TOPIC_WORDS  # background uses the remaining ids
    docs = []
    for _ in range(n_docs):
        length = 20 + rng.poisson(60)
        n_topic = rng.binomial(length, TOPIC_SHARE)
        counts = np.zeros(VOCAB, dtype=np.int64)
        bg = rng.choice(VOCAB - 2 * TOPIC_WORDS, size=length - n_topic, p=background)
        np.add.at(counts, bg + 2 * TOPIC_WORDS, 1)
        tp = rng.choice(TOPIC_WORDS, size=n_topic, p=topic)
        np.add.at(counts, tp + topic_offset - 1, 1)
        docs.append((label, counts))
    return docs


def write(path, docs):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#dim {VOCAB}\n")
        for label, counts in docs:
            nz = np.nonzero(counts)[0]
            feats = " ".join(f"{i + 1}:{counts[i]}" for i in nz)
            fh.write(f"{label} {feats}\n")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data")
    ap.add_argument("--seed", type=int, default=20240521)
    ap.add_argument("--train", type=int, default=600)
    ap.add_argument("--test", type=int, default=200)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    background = zipf_weights(VOCAB - 2 * TOPIC_WORDS, 1.1)
    topic = zipf_weights(TOPIC_WORDS, 0.8)

    def split(n):
        docs = make_docs(rng, n // 2, 0, background, topic) + make_docs(rng, n - n // 2, 1, background, topic)
        order = rng.permutation(len(docs))
        return [docs[i] for i in order]

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write(out / "train.svm", split(args.train))
    write(out / "test.svm", split(args.test))


if __name__ == "__main__":
    main()
