"""scikit-learn style wrappers around the skeletonizer and the optimizer."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import config as cfgmod
from . import maskfield, sls
from .hexgrid import build_grid
from .skeleton import skeletonize


class HexSkeletonizer(TransformerMixin, BaseEstimator):
    """Skeletons of density fields on a fixed honeycomb grid.

    Each sample is one field given as ``n_cols * n_rows`` densities in cell
    id order (row-major). ``transform`` returns the skeleton indicator of
    every sample with the same layout.

    Parameters
    ----------
    n_cols, n_rows : int
    cs : float
        Cell size; does not affect the skeleton.
    threshold : float
        Cells with density above this are solid.
    """

    def __init__(self, n_cols=10, n_rows=10, cs=1.0, threshold=0.5):
        self.n_cols = n_cols
        self.n_rows = n_rows
        self.cs = cs
        self.threshold = threshold

    def fit(self, X=None, y=None):
        if int(self.n_cols) < 1 or int(self.n_rows) < 1:
            raise ValueError("n_cols and n_rows must be positive")
        self.grid_ = build_grid(int(self.n_cols), int(self.n_rows), float(self.cs))
        self.n_features_in_ = self.grid_.n_cells
        if X is not None:
            self._check(X)
        return self

    def _check(self, X):
        X = check_array(X, dtype=float, ensure_2d=True)
        if X.shape[1] != self.grid_.n_cells:
            raise ValueError(f"expected {self.grid_.n_cells} densities per sample, got {X.shape[1]}")
        return X

    def transform(self, X):
        check_is_fitted(self, "grid_")
        X = self._check(X)
        out = np.zeros(X.shape, dtype=float)
        for i, row in enumerate(X):
            res = skeletonize(self.grid_, row > self.threshold)
            out[i] = res.mask(self.grid_.n_cells)
        return out


class MaskTopologyOptimizer(BaseEstimator):
    """Two-stage length-scale controlled optimization as an estimator.

    ``fit`` runs the driver on a configuration; ``predict`` evaluates the
    optimized mask density at arbitrary points.

    Parameters
    ----------
    config : RunConfig or str, optional
        A configuration object or the path of a config file.
    benchmark : str, optional
        Name of a shipped benchmark, used when ``config`` is None.
    scale : float
        Mesh and mask count factor applied to the configuration.
    total_budget : int, optional
        Overrides the configured evaluation budget.
    """

    def __init__(self, config=None, benchmark=None, scale=1.0, total_budget=None):
        self.config = config
        self.benchmark = benchmark
        self.scale = scale
        self.total_budget = total_budget

    def _resolve_config(self):
        if self.config is None and self.benchmark is None:
            raise ValueError("give either config or benchmark")
        if self.config is None:
            cfg = cfgmod.benchmark_config(self.benchmark)
        elif isinstance(self.config, cfgmod.RunConfig):
            cfg = self.config
        else:
            cfg = cfgmod.load_config(self.config)
        if self.scale != 1.0:
            cfg = cfg.scaled(self.scale)
        return cfg

    def fit(self, X=None, y=None):
        """Run the optimization; ``X`` and ``y`` are ignored."""
        cfg = self._resolve_config()
        problem, sls_cfg = sls.problem_from_config(cfg)
        if self.total_budget is not None:
            from dataclasses import replace

            sls_cfg = replace(sls_cfg, total_budget=int(self.total_budget))
        state = sls.run(problem, sls_cfg)
        self.config_ = cfg
        self.grid_ = problem.grid
        self.problem_ = problem
        self.state_ = state
        self.masks_ = state.masks
        self.density_ = state.final.field.rho.copy()
        self.history_ = [row.as_tuple() for row in state.history]
        self.status_ = state.status
        self.n_features_in_ = 2
        return self

    def predict(self, X):
        """Mask density at the points ``X`` of shape ``(n, 2)``."""
        check_is_fitted(self, "masks_")
        X = check_array(X, dtype=float)
        if X.shape[1] != 2:
            raise ValueError("points must have two coordinates")
        return maskfield.density(self.masks_, X)

    def score(self, X=None, y=None):
        """Negative final objective (larger is better)."""
        check_is_fitted(self, "state_")
        return -float(self.state_.final.phi)
