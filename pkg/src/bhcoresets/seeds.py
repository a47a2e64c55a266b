"""Counter-based seed derivation.

Every pipeline stage (and every Monte Carlo trial inside a stage) gets its
own child seed derived from the master seed and an integer counter through
``numpy.random.SeedSequence([master, counter])``. The scheme is pure
integer hashing, so child seeds are reproducible across platforms and
independent of call order.
"""

import numpy as np

# Stage counters used by the CLI. Trial/iteration loops use their own
# counters on top of the stage seed.
STAGE_DATA = 0
STAGE_BASE_SAMPLES = 1
STAGE_SOLVER = 2
STAGE_MCMC_FULL = 3
STAGE_MCMC_CORESET = 4
STAGE_CONCENTRATION = 5


def derive_seed(master: int, counter: int) -> int:
    """Child seed for stage/trial `counter` under `master`."""
    ss = np.random.SeedSequence([int(master), int(counter)])
    return int(ss.generate_state(1)[0])
