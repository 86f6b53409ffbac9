"""Random-forest house-price forecasting: CART/forest engine, linear benchmarks,
evaluation grids, Shapley importances and partial effects for annual country panels."""

from .baselines import OlsFit, fit_ar1, fit_ols, predict_linear
from .cart import GrowConfig, RegressionTree, SplitCandidate, best_split, grow_tree, predict_tree, render_tree
from .effects import EffectGrid, partial_curve, partial_surface
from .errors import ConfigError, DataError, HpForestError
from .evalgrid import GridReport, Metrics, final_year_scatter, holdout_grid, insample_grid, metrics
from .explain import (
    ImportanceReport,
    ShapleyVector,
    importance,
    importance_by_period,
    shapley_brute,
    shapley_exact,
    shapley_values,
)
from .forest import ForestConfig, ForestModel, fit_forest, load_forest, mse_curve, predict_forest, save_forest
from .panel_data import (
    DesignMatrix,
    PanelDataset,
    SummaryStats,
    build_design,
    kernel_density,
    load_panel,
    summary_stats,
)

__version__ = "0.1.0"
