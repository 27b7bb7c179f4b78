"""Measure the regression floors frozen in ``knlab/calibration.py``.

Run once; paste the printed values into the calibration module.  The tube
mass uses a doubled-resolution quadrature as the dense oracle.
"""
import math

from knlab.experiments import _field, equator_band_mass
from knlab.oscillatory import cs_grid, linearization_constant, sphere_probe


def main():
    f = _field("highest_weight", 64, None, (0.0, 0.0))
    mass, region = equator_band_mass(f, scale=2.0)
    print(f"TUBE_MASS_AT_CALIBRATION = {mass:.6f}  ({region.resolution} nodes)")
    print(f"TUBE_MASS_FLOOR = {math.floor(0.95 * mass * 100) / 100:.2f}")
    probe = sphere_probe()
    d = float(abs(cs_grid(probe, 20)).min())
    print(f"CS_MIN_MEASURED = {d:.3f}")
    print(f"CS_FLOOR = {math.floor(0.9 * d):.1f}")
    lin = linearization_constant(probe)
    print(f"LINEARIZATION_MEASURED = {lin:.3f}")
    print(f"LINEARIZATION_BOUND = {math.ceil(1.1 * lin * 10) / 10:.1f}")


if __name__ == "__main__":
    main()
