"""Physical and calendar constants used across the package.

One authoritative constant set; every module imports from here so that
results are reproducible against the documented values.
"""

import math

# Earth gravitational parameter, km^3/s^2 (WGS-84 derived value).
MU_EARTH_KM3_S2 = 398600.4418

# Earth equatorial radius, km.
R_EARTH_KM = 6378.137

# Second zonal harmonic of the geopotential (dimensionless).
J2_EARTH = 1.08262668e-3

TWO_PI = 2.0 * math.pi

DAY_S = 86400.0
# Julian year; the schedule step "yearly" means exactly this.
YEAR_S = 365.25 * DAY_S
MONTH_S = YEAR_S / 12.0

# Flux-accumulation defaults: 10/3-km cells sampled daily across a
# 50-year horizon (18,262 whole days).
CELL_SIZE_KM_DEFAULT = 10.0 / 3.0
HORIZON_DAYS_DEFAULT = 18262
HORIZON_S_DEFAULT = HORIZON_DAYS_DEFAULT * DAY_S
STEP_S_DEFAULT = DAY_S

# Pricing defaults: 3.2 trillion USD virtual budget, 50-year token
# lifetime, 30-day quote validity. Currency is integer cents.
BUDGET_CENTS_DEFAULT = 320_000_000_000_000
TOKEN_LIFETIME_S_DEFAULT = 50.0 * YEAR_S
QUOTE_VALIDITY_S = 30.0 * DAY_S
