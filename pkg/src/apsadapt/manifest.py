"""Reference values and tolerances checked by the acceptance suite."""

UNIFORM_H = (0.1, 0.05, 0.025, 0.0125, 0.00625)

# relative H1 errors on the uniform ladder
SMOOTH_EPS1_ERR = (1.5e-1, 7.7e-2, 3.9e-2, 1.9e-2, 9.8e-3)
SMOOTH_EPS1_RTOL = 0.30
ORDER = 1.0
ORDER_TOL = 0.15
SMOOTH_SMALL_EPS_ERR = (1.1e-1, 5.4e-2, 2.7e-2, 1.4e-2, 7.5e-3)
SMOOTH_SMALL_EPS_RTOL = 0.40
EPS_RATIO_RANGE = (0.4, 2.5)
SMALL_EPS = 1e-10
UNIFORM_RUNTIME = 120.0

ZZ_UNIFORM_RANGE = (0.95, 1.10)
ZZ_UNIFORM_MAX_H = 0.05
ZZ_WRONG_MAX = 0.1
WRONG_MESH = (0.0125, 0.1)

RIGHT_MESH = (0.1, 0.005)
RIGHT_ERR_MAX = 8e-3
RIGHT_SA_MAX = 10.0

P_CONDITION_MIN = 1e9
APS_RESIDUAL_RTOL = 1e-8
CONDITIONING_RUNTIME = 60.0

ADAPT_TOLS = (0.25, 0.125, 0.0625)
ADAPT_EPS1_ERR = (0.096, 0.048, 0.024)
ADAPT_EPS1_RTOL = 0.30
ADAPT_NV_RATIO = (2.5, 6.0)
ADAPT_EPS1_ITER = 15
ADAPT_EPS1_RUNTIME = 600.0

SIMPL_TOL = 0.0625
SIMPL_ITER = 30
SIMPL_AR_MIN = 100.0
SIMPL_NV_MAX = 2000
SIMPL_ERR_MAX = 0.032

SVD_TOL = 1e-12
PATCH_TOL = 1e-10
ASSEMBLY_TOL = 1e-10
NODAL_TOL = 1e-12
FORCING_TOL = 1e-5
FORCING_POINTS = 20
