"""Compare the numba and numpy scoring kernels on synthetic workloads.

Runs the dense cosine scan and the BM25 accumulation at a few corpus sizes,
checks the backends agree, and prints per-query timings with the speedup.
The numba kernels get one untimed warmup call so JIT compilation does not
pollute the numbers.

Usage: python benchmarks/bench_kernels.py [--repeats 200] [--dim 64]
"""

import argparse
import time

import numpy as np

from finsage.kernels import get_backends

CORPUS_SIZES = [1_000, 10_000, 50_000]
VOCAB = 5_000
QUERY_TERMS = 8


def make_dense_workload(rng, n_docs, dim):
    matrix = rng.standard_normal((n_docs, dim))
    matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
    query = rng.standard_normal(dim)
    query /= np.linalg.norm(query)
    return matrix, query


def make_bm25_workload(rng, n_docs):
    """CSR postings with ~5% document frequency per term."""
    offsets = [0]
    docs, tfs = [], []
    for _ in range(VOCAB):
        df = max(1, int(rng.binomial(n_docs, 0.05)))
        members = np.sort(rng.choice(n_docs, size=df, replace=False))
        docs.append(members)
        tfs.append(rng.integers(1, 6, size=df).astype(np.float64))
        offsets.append(offsets[-1] + df)
    doc_lens = rng.integers(20, 400, size=n_docs).astype(np.float64)
    # positional argument order of the bm25 kernels, minus the query terms
    return (
        np.asarray(offsets, dtype=np.int64),
        np.concatenate(docs).astype(np.int64),
        np.concatenate(tfs),
        rng.uniform(0.1, 4.0, size=VOCAB),
        doc_lens,
        float(doc_lens.mean()),
        1.5,
        0.75,
    )


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200, help="timed calls per kernel")
    parser.add_argument("--dim", type=int, default=64, help="embedding width")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    backends = get_backends()
    if "numba" not in backends:
        print("numba is not importable; benchmarking the numpy kernels alone")
    rng = np.random.default_rng(args.seed)

    for n_docs in CORPUS_SIZES:
        matrix, query = make_dense_workload(rng, n_docs, args.dim)
        bm25 = make_bm25_workload(rng, n_docs)
        query_terms = rng.choice(VOCAB, size=QUERY_TERMS, replace=False).astype(np.int64)

        print(f"\ncorpus of {n_docs:,} chunks, dim {args.dim}, vocab {VOCAB:,}")
        print("-" * 64)

        reference = {}
        timings = {}
        for name, (dense_fn, bm25_fn) in sorted(backends.items()):
            # warm the JIT cache; harmless for numpy
            dense_fn(matrix[:64], query)
            bm25_fn(query_terms, *bm25)

            dense_out = dense_fn(matrix, query)
            bm25_out = bm25_fn(query_terms, *bm25)
            if reference:
                assert np.allclose(dense_out, reference["dense"], rtol=0.0, atol=1e-12)
                assert np.array_equal(bm25_out, reference["bm25"])
            else:
                reference = {"dense": dense_out, "bm25": bm25_out}

            t_dense = best_of(lambda: dense_fn(matrix, query), args.repeats)
            t_bm25 = best_of(lambda: bm25_fn(query_terms, *bm25), args.repeats)
            timings[name] = (t_dense, t_bm25)
            print(
                f"  {name:>6}  dense {t_dense * 1e6:9.1f} us/query"
                f"   bm25 {t_bm25 * 1e6:9.1f} us/query"
            )

        if len(timings) == 2:
            d = timings["numpy"][0] / timings["numba"][0]
            s = timings["numpy"][1] / timings["numba"][1]
            print(f"  numba speedup over numpy: dense {d:.2f}x, bm25 {s:.2f}x")


if __name__ == "__main__":
    main()
