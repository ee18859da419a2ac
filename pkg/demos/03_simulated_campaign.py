"""Convergence of the adaptive procedure against a known listener.

Runs 200 single-block sessions against a binomial-word listener whose true
50% point sits 2 dB below the competing level (63 dB SPL absolute) and
compares the distribution of block SRT estimates with the ground truth.
"""

import numpy as np

from srtlab import SimulatedListener, StaircaseConfig, run_simulated_session
from srtlab.engine import SentenceRef
from srtlab.simulate import summarize_sessions

TRUE_SNR = -2.0
COMPETING = 65.0
pool = [SentenceRef(f"s{i:03d}", 3 + i % 5) for i in range(60)]
config = StaircaseConfig(blocks=1)

logs = []
for i in range(200):
    listener = SimulatedListener(true_srt=TRUE_SNR, slope_b=0.5, rng_seed=i)
    logs.append(run_simulated_session(config, listener, pool, seed=i,
                                      session_id=f"sim-{i:03d}"))

summary = summarize_sessions(logs)
true_srt = COMPETING + TRUE_SNR
print(f"true SRT          : {true_srt:.2f} dB SPL")
print(f"estimated mean    : {summary.srt_mean:.2f} dB SPL (bias "
      f"{summary.srt_mean - true_srt:+.2f} dB)")
print(f"estimated sd      : {summary.srt_sd:.2f} dB")
print(f"valid blocks      : {summary.valid_blocks}/{summary.blocks}")
print(f"training restarts : {summary.restarts}")

srts = [row["srt"] for log in logs for row in log.block_results() if row["valid"]]
lo, hi = np.floor(min(srts)), np.ceil(max(srts))
print("\ndistribution of block SRTs:")
for edge in np.arange(lo, hi, 0.5):
    n = sum(1 for s in srts if edge <= s < edge + 0.5)
    print(f"  {edge:5.1f} dB | {'#' * n}")
