"""Walk one adaptive block by hand and watch the track unfold.

The scripted listener repeats everything above 63 dB SPL and fails below,
with some sentences right at the edge, so the track descends in big steps,
turns at the first failure, and then oscillates in small steps around the
threshold until 31 scored sentences are done.
"""

import numpy as np

from srtlab import StaircaseConfig, compute_srt, init_block, propose_level, record_response

config = StaircaseConfig()
state = init_block(config, block_index=1)
rng = np.random.default_rng(7)

print(f"block 1 opens in {state.phase.value} at {propose_level(state):.0f} dB SPL\n")
print(f"{'trial':>5} {'level':>6} {'heard':>7} {'events'}")

trial = 0
while state.active:
    trial += 1
    level = propose_level(state)
    words = int(rng.integers(3, 8))
    # a listener whose 50% point sits at 63 dB SPL
    p = 1.0 / (1.0 + np.exp(-0.9 * (level - 63.0)))
    correct = int(rng.binomial(words, p))
    events = record_response(state, f"s{trial:03d}", words, correct)
    tags = ",".join(e.value for e in events) or "-"
    print(f"{trial:>5} {level:>6.0f} {correct:>3}/{words:<3} {tags}")

estimate = compute_srt(state)
print(f"\nreversal pairs gave midpoints {list(estimate.midpoints)}")
print(f"block SRT = {estimate.value:.2f} dB SPL "
      f"({estimate.n_midpoints} midpoints, valid={estimate.valid})")
