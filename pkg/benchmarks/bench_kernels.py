"""Compare the compiled and numpy kernels on representative workloads.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Workloads: the output-mixture table of a binary channel (every count vector
against a 2-D quadrature prior) and first-match decoding of a small code.
"""
import argparse
import time

import numpy as np

from univcode import _pykernels
from univcode.channels import dmc_theta, make_dmc_family
from univcode.combinatorics import build_codebook, round_to_type
from univcode.infomeasures import RateParameters
from univcode.mixtures import PriorSpec, build_mixture, count_vectors
from univcode.simulator import assemble_code

try:
    from univcode import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def mixture_workload(n):
    fam = make_dmc_family(2, 1)
    model = build_mixture(fam, PriorSpec("continuous"), "output", n, [0.5, 0.5])
    A = count_vectors(n, 2).astype(float)
    return f"output mixture n={n}: {A.shape[0]} counts x {model.size} nodes", (A, model._B, model.logw)


def decode_workload(n, M, trials):
    fam = make_dmc_family(2, 1)
    pt = fam.point(dmc_theta([[0.9, 0.1], [0.1, 0.9]]))
    rng = np.random.default_rng(0)
    code = assemble_code(fam, round_to_type([0.5, 0.5], n), RateParameters(R=0.1, R1=0.05), rng=rng, M=M)
    words = code.codebook.words[rng.integers(M, size=trials)]
    flip = rng.random(words.shape) < 0.1
    ys = np.where(flip, 1 - words, words).astype(np.int64)
    tab, off, st, qp, qst = code.decoder_tables()
    return (f"first-match decode n={n} M={M}: {trials} outputs",
            (code.codebook.words, ys, tab, off, st, qp, qst, code.threshold))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = [("numpy", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    cases = [(mixture_workload(n), "logsumexp_affine") for n in (200, 1000)]
    cases.append((decode_workload(64, 512, 2000), "first_match_decode"))
    print(f"{'workload':55s} " + " ".join(f"{b:>10s}" for b, _ in backends) + "   speedup  max|diff|")
    for (label, fargs), name in cases:
        times, outs = [], []
        for _, mod in backends:
            t, out = best_of(lambda: getattr(mod, name)(*fargs), args.repeat)
            times.append(t)
            outs.append(out)
        diff = float(np.max(np.abs(outs[0] - outs[-1]))) if len(outs) > 1 else 0.0
        speed = times[0] / times[-1] if len(times) > 1 else 1.0
        print(f"{label:55s} " + " ".join(f"{t:9.3f}s" for t in times) + f"   {speed:6.1f}x  {diff:.2e}")


if __name__ == "__main__":
    main()
