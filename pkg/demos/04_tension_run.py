"""
A quasi-static tension run
==========================

The top edge is pulled up in small increments.  At every load level the
crack shape is optimized until the fracture energy stops growing, then
the next load is applied.  Below the critical load nothing happens; past
it the crack runs through the specimen within a few steps.

By default this uses a coarse mesh and a shortened schedule so it
finishes in a few minutes.  ``--benchmark`` runs the full medium-mesh
benchmark instead (tens of minutes).
"""

import argparse
import logging
import time

import numpy as np

from fracshape.driver import LoadSchedule, OptimizerConfig, run_simulation
from fracshape.elasticity import Material
from fracshape.specimen import SpecimenSpec
from fracshape.verify import check_tension, first_force_drop, run_benchmark

p = argparse.ArgumentParser()
p.add_argument("--benchmark", action="store_true")
p.add_argument("--out", default=None, help="directory for records.csv and mesh snapshots")
args = p.parse_args()
logging.basicConfig(level=logging.INFO, format="%(message)s")
logging.getLogger("fracshape.specimen").setLevel(logging.ERROR)

t0 = time.perf_counter()
if args.benchmark:
    result = run_benchmark("tension", out_dir=args.out)
else:
    schedule = LoadSchedule("tension", coarse_increment=1.0, switch_at=4.0, fine_increment=0.2, max_loadsteps=15)
    result = run_simulation(
        SpecimenSpec("round", 1e-2, "coarse"), Material(), schedule, OptimizerConfig(max_opt_iters=400),
        out_dir=args.out,
    )
seconds = time.perf_counter() - t0

# %%
# Force, fracture energy and tip position per load level.

print(f"\n{'load [um]':>9} {'force':>9} {'E_frac':>8} {'tip x1':>7} {'tip x2':>7}  iters  stop")
for r in result.records:
    print(f"{r.w_D[1] * 1e3:9.2f} {r.force[1]:9.2f} {r.E_frac:8.4f} {r.tip[0]:7.4f} {r.tip[1]:7.4f}  "
          f"{r.opt_iters:5d}  {r.reason}")

# %%
# Every accepted step lengthened the crack or left it alone, and never
# grew the domain.

area = np.array([s.area_after - s.area_before for s in result.steps])
frac = np.array([s.E_frac_after - s.E_frac_before for s in result.steps])
print(f"\n{len(result.steps)} accepted steps; max area change {area.max(initial=0):.1e}, "
      f"min fracture energy change {frac.min(initial=0):.1e}")
print(f"first force drop at {first_force_drop(result.records)} um; stop reason: {result.stop_reason}; "
      f"{seconds:.0f} s")
if args.benchmark:
    print(check_tension(result, seconds).format())
