"""Black-Litterman portfolio models with feature-driven views.

Closed-form Gaussian posteriors (classical, mixed-effect and shared-latent),
feature-influenced views with inverse-Wishart view noise, hyperparameter
estimation from returns and technical indicators, a long-only max-Sharpe
optimizer and a monthly-rebalancing backtester.
"""
from .backtest import (BacktestConfig, BacktestReport, compute_metrics, drift_weights, estimate_window,
                       run_backtest, write_report)
from .core import (FeatureSpec, MarketModel, PosteriorGaussian, RegressionParams, StudentTPredictive, ViewSpec,
                   build_block_feature, validate_market_model)
from .errors import *  # noqa: F401,F403
from .fiv import (ConjugateConfig, OmegaPrior, fiv_component, fiv_conjugate_t, fiv_mixture_mc, niw_marginal_t,
                  sample_inverse_wishart, sample_niw, solve_omega0)
from .hyper import (ErrorMatrixEstimate, ObservationPanel, error_matrix, estimate_hyperparameters, gls_fit,
                    kde_bandwidth, niw_defaults, reverse_optimize, sample_moments)
from .indicators import IndicatorVector, OhlcvSeries, compute_indicators, indicator_frame
from .market_data import (MembershipCalendar, ReturnPanel, active_universe, build_return_panel, load_membership,
                          load_ohlcv, packaged_membership, write_ohlcv)
from .optimizer import WeightVector, max_sharpe_longonly, project_simplex, sharpe, unconstrained_mv
from .posterior import (PredictiveGaussian, blb_posterior, blb_predictive, gaussian_product_marginal,
                        mbl_posterior, mbl_predictive, slp_posterior, slp_predictive)

__version__ = "0.1.0"
