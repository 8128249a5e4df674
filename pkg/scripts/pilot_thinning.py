"""Pilot runs behind ``covprior.checks.PUSHFORWARD_THIN``.

For each prior and dimension, run two NUTS chains on the prior-only target
and report the effective sample size per draw of log sigma1 and rho12.
The thinning factor is ceil(1 / the smaller of the two), capped at 10 for
d=10 to bound runtime.

    python3 scripts/pilot_thinning.py --seed 1 --samples 2000
"""

import argparse
import math
import time

import numpy as np

from covprior.distributions import RngStream
from covprior.priors import KINDS, PRIOR_STUDY, default_spec
from covprior.samplers.diagnostics import effective_sample_size
from covprior.samplers.fit import constrained_batch
from covprior.samplers.nuts import NutsSettings, run_chain
from covprior.samplers.posterior import Posterior


def pilot(kind, d, seed, samples, chains=2, warmup=1000):
    spec = default_spec(kind, d, PRIOR_STUDY)
    post = Posterior(spec, np.zeros((d, d)), 0)
    mats = []
    for c in range(chains):
        res = run_chain(post, post.dim, warmup, samples, RngStream(seed).split(c).generator(), NutsSettings())
        mats.append(constrained_batch(spec, res.positions))
    S = np.stack(mats)
    sd = np.sqrt(S[..., 0, 0])
    rho = S[..., 0, 1] / np.sqrt(S[..., 0, 0] * S[..., 1, 1])
    return effective_sample_size(np.log(sd)) / sd.size, effective_sample_size(rho) / rho.size


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--samples", type=int, default=2000)
    ap.add_argument("--cap", type=int, default=10)
    args = ap.parse_args()
    print("prior,d,ess_per_draw_sigma1,ess_per_draw_rho12,thin,seconds")
    for d in (2, 10):
        for kind in KINDS:
            t0 = time.perf_counter()
            e_s, e_r = pilot(kind, d, args.seed, args.samples)
            thin = math.ceil(1.0 / min(e_s, e_r))
            if d == 10:
                thin = min(thin, args.cap)
            print(f"{kind},{d},{e_s:.3f},{e_r:.3f},{thin},{time.perf_counter() - t0:.0f}", flush=True)


if __name__ == "__main__":
    main()
