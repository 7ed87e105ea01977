import subprocess
import sys
from pathlib import Path

import pytest

DEMOS = Path(__file__).parents[1] / "demos"


@pytest.mark.parametrize("name", ["01_specimen_and_mesh.py", "02_spectral_split.py", "03_shape_gradient.py"])
def test_demo_runs(name):
    proc = subprocess.run([sys.executable, str(DEMOS / name)], capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip()
