"""Stopping rules for MCMC: batch means standard errors and Gelman-Rubin diagnostics."""
from .batch_means import (BatchMeans, CbmEstimate, CbmOptions, batch_layout, cbm_variance,
                          half_width, significant_figures)
from .gelman_rubin import DegenerateVarianceError, GelmanRubin, PsrfReport, psrf, psrf_upper
from .stopping import (FixedWidthMonitor, FixedWidthRule, GrdRule, StopDecision,
                       fixed_width_check, grd_check, next_check_size)
from .traces import EstimateWithError, MultiChainTrace, ScalarTrace, ergodic_average

__version__ = "0.1.0"

__all__ = ["BatchMeans", "CbmEstimate", "CbmOptions", "DegenerateVarianceError",
           "EstimateWithError", "FixedWidthMonitor", "FixedWidthRule", "GelmanRubin",
           "GrdRule", "MultiChainTrace", "PsrfReport", "ScalarTrace", "StopDecision",
           "batch_layout", "cbm_variance", "ergodic_average", "fixed_width_check",
           "grd_check", "half_width", "next_check_size", "psrf", "psrf_upper",
           "significant_figures"]
