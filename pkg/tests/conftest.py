import os
import sys
import time

import pytest

sys.path.insert(0, os.path.dirname(__file__))


@pytest.fixture(scope="session")
def demo_runs(tmp_path_factory):
    """Two `all` runs of the bundled demo config with the same seed: [(out dir, seconds, exit code), ...]."""
    from aerialsynth.cli import main

    runs = []
    for k in range(2):
        out = tmp_path_factory.mktemp(f"demo{k}")
        t0 = time.perf_counter()
        code = main(["all", "--out", str(out)])
        runs.append((out, time.perf_counter() - t0, code))
    return runs
