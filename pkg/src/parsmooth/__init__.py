"""Temporal parallelisation of Bayesian filtering and smoothing via associative scans."""
from .numkernel import FlopLedger, SingularMatrixError
from .scan import Monoid, ScanReport, par_scan, reverse_scan, seq_scan
from .sequential import GaussianMoment, FilterRun, kalman_filter, rts_smoother
from .pkf import parallel_filter, parallel_loglik
from .prts import parallel_smoother
from .ssm import LGSSM, HmmModel, make_tracking_model, make_random_lgssm, simulate

__version__ = "0.1.0"
