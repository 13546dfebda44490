"""Classical scoring methods emitting :class:`~falsibench.core.ScoreMatrix` objects."""

from .design import LaggedDesign, lagged_design
from .granger import granger_bivariate, granger_pvalues
from .linear import BaselineFit, TuningReport, fit_lasso, fit_ols, fit_ridge, fit_rrr
from .pcmci import pc1_select, pcmci_lite

__all__ = [
    "BaselineFit", "LaggedDesign", "TuningReport", "fit_lasso", "fit_ols", "fit_ridge",
    "fit_rrr", "granger_bivariate", "granger_pvalues", "lagged_design", "pc1_select",
    "pcmci_lite",
]
