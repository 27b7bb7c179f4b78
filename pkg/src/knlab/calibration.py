"""Frozen regression floors measured once by ``scripts/calibrate.py``.

Each constant records the measured value it was derived from; the floor is
a fixed fraction of that measurement.
"""

# Highest-weight mass in the lambda^{-1/2} equatorial band, measured at k = 64
# on a doubled-resolution tube quadrature: 0.844048.  Floor = 0.95 x measured,
# rounded down.
TUBE_MASS_AT_CALIBRATION = 0.844048
TUBE_MASS_FLOOR = 0.80

# Minimum |Carleson-Sjolin determinant| on the 20 x 20 sphere probe grid at
# t = 0: 21.893.  Floor = 0.9 x measured, rounded down.
CS_MIN_MEASURED = 21.893
CS_FLOOR = 19.0

# max |r(x,t)| / t^2 for the linearization remainder on the probe window:
# 1.879.  Bound = measured x 1.1, rounded up.
LINEARIZATION_MEASURED = 1.879
LINEARIZATION_BOUND = 2.1
