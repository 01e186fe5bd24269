"""Balanced model reduction of nonlinear control systems with kernel methods."""
from .backend import BACKEND
from .balancing import BalancedReduction, auto_gap, balance_dataset, kernel_balance, truncate
from .errors import KernelMORError
from .gramians import collect, empirical_gramians, linear_balance
from .kernels import EmpiricalFeatureMap, KernelSpec
from .numerics import ToleranceConfig
from .reduced import JacobianMode, ReducedSystem, compare, simulate_reduced
from .rkhs import RegressionDataset, fit_loocv, rls_fit
from .systems import TimeGrid, benchmark_7d, integrate

__version__ = "0.1.0"
