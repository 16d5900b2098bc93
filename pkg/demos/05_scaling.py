"""
How run time grows with DEM size
================================

Fixed 64x64 tiles and one worker.  The stage-1 and stage-2 work is linear
in the number of cells, so doubling the side should roughly quadruple the
time once the numba kernels are compiled.
"""

import statistics
import tempfile
import time
from pathlib import Path

import numpy as np

from flowaccum.orchestrator import JobConfig, run
from flowaccum.verify import generate_synthetic

work = Path(tempfile.mkdtemp(prefix="flowaccum-scaling-"))
sizes = [128, 256, 512, 1024]
manifests = {n: generate_synthetic(n, n, 64, 64, seed=n).write(work / f"in{n}") for n in sizes}
run(JobConfig(manifests[128], work / "warmup"))  # compile kernels

times = []
for n in sizes:
    samples = []
    for k in range(3):
        t0 = time.perf_counter()
        run(JobConfig(manifests[n], work / f"out{n}_{k}"))
        samples.append(time.perf_counter() - t0)
    times.append(statistics.median(samples))
    print(f"{n:5d}^2  {times[-1] * 1e3:8.1f} ms  {n * n / times[-1] / 1e6:6.1f} Mcells/s")

slope = np.polyfit(np.log([n * n for n in sizes]), np.log(times), 1)[0]
print(f"log-log slope of time against cells: {slope:.2f}")
