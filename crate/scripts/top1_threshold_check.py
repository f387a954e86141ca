"""Independent Monte Carlo check of posterior top-1 weights and oracle/CFM target gaps.

Plain numpy, written separately from the Rust implementation. Used to choose the
thresholds asserted in the acceptance suite.
"""
import sys
import numpy as np
from scipy.special import logsumexp


def top1_and_gap(data, t, n_mc, rng):
    n, d = data.shape
    top1, gap = [], []
    for _ in range(n_mc):
        x0 = rng.standard_normal(d)
        i = rng.integers(n)
        xt = t * data[i] + (1 - t) * x0
        sig = 1 - t
        logits = -((xt[None, :] - t * data) ** 2).sum(1) / (2 * sig**2)
        w = np.exp(logits - logsumexp(logits))
        top1.append(w.max())
        u = (w @ data - xt) / sig  # A_t * mean + B_t * xt for rectified flow
        gap.append(((u - (data[i] - x0)) ** 2).mean())
    return np.mean(top1), np.mean(gap)


def main():
    rng = np.random.default_rng(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
    data = rng.standard_normal((1400, 4096))
    for t in [0.0, 0.02, 0.05, 0.10, 0.15, 0.5]:
        m, g = top1_and_gap(data, t, 256, rng)
        print(f"D=4096 N=1400 t={t:.2f} top1={m:.5f} gap={g:.5f}")
    for d in [16, 256, 4096]:
        vals = []
        for s in range(3):
            r = np.random.default_rng(100 + s)
            vals.append(top1_and_gap(r.standard_normal((1000, d)), 0.05, 64, r)[0])
        print(f"N=1000 D={d} t=0.05 top1={np.mean(vals):.5f}")
    for n in [100, 1000, 10000]:
        vals = []
        for s in range(3):
            r = np.random.default_rng(200 + s)
            vals.append(top1_and_gap(r.standard_normal((n, 4096)), 0.05, 64, r)[0])
        print(f"D=4096 N={n} t=0.05 top1={np.mean(vals):.5f}")


if __name__ == "__main__":
    main()
