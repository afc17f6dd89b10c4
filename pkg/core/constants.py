"""项目全局常量定义。"""

import math

# 分岔点: γ = tan Θ = 2
THETA_BIFURCATION = math.atan(2.0)

# 态矢量归一化容差
NORM_TOLERANCE = 1e-10

# 传播器
EIGEN_BACKEND_MAX_N = 10_000
CHEBYSHEV_DEFAULT_TOLERANCE = 1e-12
CHEBYSHEV_MAX_TERMS = 4096
CHEBYSHEV_SLICE_PHASE = 200.0  # 单个切片内 Δ·t 的上限
GERSHGORIN_PADDING = 0.01

# 时间网格
DEFAULT_TIME_POINTS = 400
DEFAULT_TIME_SPAN_FACTOR = 1.5  # 单位 τE

# OTOC 取对数前的下限 (相对最大值)
OTOC_FLOOR_RELATIVE = 1e-12

# 平均场积分
Z_SINGULARITY_MARGIN = 1e-10
FINITE_DIFFERENCE_STEP = 1e-6
FIXED_POINT_SEED_GRID = 64
FIXED_POINT_MERGE_DISTANCE = 1e-6
NEWTON_MAX_ITERATIONS = 50

# 分界线解析
QUADRATURE_NODES = 201

# 相空间
HUSIMI_DEFAULT_GRID = 201
TWA_CHUNK_SIZE = 1000
TWA_MAX_FAILURE_FRACTION = 0.01

# 拟合
MIN_FIT_POINTS = 5
FIT_WINDOW_SHRINK = 0.5  # 单位 1/λs
KINK_BOOTSTRAP_SAMPLES = 100

# 线程
DEFAULT_MAX_WORKERS = 8
THREADS_ENV_VAR = "OTOC_DIMER_THREADS"
