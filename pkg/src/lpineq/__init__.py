"""One-sided L_p kernel tests of functional inequalities m_j(x) <= 0."""

__version__ = "0.1.0"

from .estimators import Dataset, EvalGrid, bandwidth_rule, make_grid  # noqa: E402
from .kernels import ProductKernel, get_kernel  # noqa: E402
from .normal import LambdaSpec, McSettings, mean_lambda  # noqa: E402
from .statistic import DegenerateVarianceError, TestConfig, TestReport, run_test  # noqa: E402

__all__ = [
    "Dataset", "EvalGrid", "bandwidth_rule", "make_grid", "ProductKernel", "get_kernel",
    "LambdaSpec", "McSettings", "mean_lambda", "DegenerateVarianceError", "TestConfig",
    "TestReport", "run_test", "__version__",
]
