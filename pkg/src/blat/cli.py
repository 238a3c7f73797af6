"""Command-line entry point: ``blat posterior | backtest | estimate``.

Configs are flat ``key = value`` files. Matrices use ``;`` between rows and
``,`` within a row; ``#`` starts a comment. Unknown keys are errors. Every
number written out uses 12 significant digits. Library errors exit with
status 2 and the message on stderr.
"""
import argparse
import csv
import dataclasses
import os
import sys

import numpy as np

from . import backtest as bt
from .core import FeatureSpec, MarketModel, RegressionParams, ViewSpec
from .errors import BlatError, ConfigError
from .fiv import ConjugateConfig, OmegaPrior, fiv_component, fiv_conjugate_t, fiv_mixture_mc
from .hyper import with_ridge
from .market_data import load_membership, load_ohlcv
from .posterior import blb_predictive, mbl_predictive, slp_predictive

SEED_ENV = "BLAT_SEED"

_BACKTEST_KEYS = {
    "model": str, "window_len": int, "rebalance": str, "tau": float, "delta": float,
    "seed": int, "regress_on": str, "covariance_mode": str,
}
_POSTERIOR_KEYS = {
    "sigma": "matrix", "prior_mean": "vector", "prior_cov": "matrix", "tau": float, "delta": float,
    "pick": "matrix", "views": "vector", "omega": "vector",
    "features": "matrix", "omega_f": "matrix",
    "alpha_f": "vector", "beta_f": "vector", "alpha": "vector", "beta": "vector", "gamma": float,
    "iw_scale": "matrix", "iw_dof": float, "n_samples": int, "seed": int,
    "psi_prime": "matrix", "nu_prime": float,
}
_REQUIRED = {
    "blb": ("sigma", "prior_mean", "pick", "views", "omega"),
    "mbl": ("sigma", "prior_mean", "pick", "views", "omega", "features", "omega_f", "alpha_f", "beta_f"),
    "slp": ("sigma", "prior_mean", "features", "omega_f", "alpha_f", "beta_f"),
    "fiv": ("sigma", "prior_mean", "pick", "features", "omega_f", "alpha", "beta"),
}


def _numbers(text, key):
    try:
        return [[float(x) for x in row.split(",")] for row in text.split(";")]
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as numbers") from None


def _convert(key, text, kind):
    if kind == "matrix":
        rows = _numbers(text, key)
        if len({len(r) for r in rows}) != 1:
            raise ConfigError(f"{key}: ragged matrix")
        return np.array(rows)
    if kind == "vector":
        rows = _numbers(text, key)
        if len(rows) != 1:
            # a one-column matrix also reads as a vector
            if any(len(r) != 1 for r in rows):
                raise ConfigError(f"{key}: expected a vector")
            return np.array([r[0] for r in rows])
        return np.array(rows[0])
    try:
        return kind(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind.__name__}") from None


def read_config(path, schema):
    """Parse a key=value file against ``schema`` (key -> type)."""
    out = {}
    with open(path) as fh:
        for num, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{num}: expected key = value")
            key, value = (p.strip() for p in line.split("=", 1))
            if key not in schema:
                raise ConfigError(f"{path}:{num}: unknown key {key!r}")
            if key in out:
                raise ConfigError(f"{path}:{num}: duplicate key {key!r}")
            out[key] = _convert(key, value, schema[key])
    return out


def _seed(cfg):
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            cfg["seed"] = int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return cfg


def _fmt(x):
    return bt.fmt(x)


def _long_rows(name, value):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return [(name, "", "", _fmt(arr))]
    if arr.ndim == 1:
        return [(name, i, "", _fmt(v)) for i, v in enumerate(arr)]
    return [(name, i, j, _fmt(arr[i, j])) for i in range(arr.shape[0]) for j in range(arr.shape[1])]


def _write_long(path, rows):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("quantity", "row", "col", "value"))
        w.writerows(rows)


def _posterior_rows(model_name, cfg):
    missing = [k for k in _REQUIRED[model_name] if k not in cfg]
    if "prior_cov" not in cfg and "tau" not in cfg:
        missing.append("prior_cov")
    if missing:
        raise ConfigError(f"model {model_name} needs missing key(s): {', '.join(missing)}")
    sigma = cfg["sigma"]
    prior_cov = cfg["prior_cov"] if "prior_cov" in cfg else cfg["tau"] * sigma
    model = MarketModel(sigma=sigma, prior_mean=cfg["prior_mean"], prior_cov=prior_cov,
                        tau=cfg.get("tau", 1.0), delta=cfg.get("delta", 1.0))
    m = model.m
    features = None
    if "features" in cfg:
        per_asset = cfg["features"]
        if per_asset.shape[0] != m and per_asset.shape[1] == m:
            per_asset = per_asset.T
        features = FeatureSpec(per_asset, cfg["omega_f"])
    d = features.d if features is not None else 1

    def reg():
        zf = np.zeros(m)
        return RegressionParams(cfg.get("alpha_f", zf), cfg.get("beta_f", np.zeros(m * d)),
                                cfg.get("alpha", zf), cfg.get("beta", np.zeros(m * d)), cfg.get("gamma", 1.0))

    rows = [("model", "", "", model_name)]
    if model_name in ("blb", "mbl"):
        views = ViewSpec(cfg["pick"], cfg["views"], cfg["omega"])
        pred = blb_predictive(model, views) if model_name == "blb" else \
            mbl_predictive(model, views, features, reg())
        rows += _long_rows("mean", pred.mean) + _long_rows("cov", pred.posterior.cov)
        rows += _long_rows("predictive_cov", pred.cov) + _long_rows("precision", pred.posterior.precision)
        return rows
    if model_name == "slp":
        pred = slp_predictive(model, features, reg())
        rows += _long_rows("mean", pred.mean) + _long_rows("cov", pred.posterior.cov)
        rows += _long_rows("predictive_cov", pred.cov) + _long_rows("precision", pred.posterior.precision)
        return rows
    pick = cfg["pick"]
    if "psi_prime" in cfg:
        t = fiv_conjugate_t(model, pick, reg(), features,
                            ConjugateConfig(cfg["psi_prime"], cfg.get("nu_prime", m + 2.0),
                                            None if "omega" not in cfg else np.diag(cfg["omega"])))
        rows += _long_rows("location", t.location) + _long_rows("scale", t.scale)
        rows += _long_rows("dof", t.dof) + _long_rows("effective_dof", t.effective_dof)
        if t.effective_dof > 2:
            rows += _long_rows("covariance", t.covariance())
        return rows
    if "iw_scale" in cfg:
        if "iw_dof" not in cfg:
            raise ConfigError("model fiv with iw_scale needs iw_dof")
        prior = OmegaPrior.inverse_wishart(cfg["iw_scale"], cfg["iw_dof"])
        mean, cov = fiv_mixture_mc(model, pick, reg(), features, prior, cfg.get("n_samples", 100_000),
                                   cfg.get("seed", 0))
        return rows + _long_rows("mean", mean) + _long_rows("cov", cov)
    if "omega" not in cfg:
        raise ConfigError("model fiv needs omega (point mass), iw_scale/iw_dof, or psi_prime")
    post = fiv_component(model, pick, reg(), features, cfg["omega"])
    rows += _long_rows("mean", post.mean) + _long_rows("cov", post.cov)
    return rows + _long_rows("precision", post.precision)


def cmd_posterior(args):
    cfg = _seed(read_config(args.config, _POSTERIOR_KEYS))
    path = os.path.join(args.out, "posterior.csv")
    _write_long(path, _posterior_rows(args.model, cfg))
    print(path)


def _backtest_config(path, window=None):
    cfg = _seed(read_config(path, _BACKTEST_KEYS))
    if window is not None:
        cfg["window_len"] = window
    return bt.BacktestConfig(**cfg)


def cmd_backtest(args):
    config = _backtest_config(args.config)
    report = bt.run_backtest(config, load_ohlcv(args.prices), load_membership(args.members))
    bt.write_report(report, args.out)
    with open(os.path.join(args.out, "metrics.csv")) as fh:
        sys.stdout.write(fh.read())


def cmd_estimate(args):
    config = _backtest_config(args.config, args.window)
    est = bt.estimate_window(config, load_ohlcv(args.prices))
    q = est.quantities
    rows = [("window_start", "", "", str(est.window_start)), ("window_end", "", "", str(est.window_end)),
            ("n", "", "", str(q["n"]))]
    rows += [("ticker", i, "", t) for i, t in enumerate(est.tickers)]
    for name in ("theta0", "sigma", "sigma0", "alpha_f", "beta_f", "alpha", "beta", "omega_f"):
        rows += _long_rows(name, q[name])
    rows += _long_rows("h", q["bandwidth"])
    for name, mat in (("sigma", q["sigma"]), ("omega_f", q["omega_f"]),
                      ("omega_f_plus_sigma", q["omega_f"] + q["sigma"])):
        rows.append(("ridge", name, "", _fmt(with_ridge(mat, name)[1])))
    rows += [("flag", date, "", note) for date, note in est.flags]
    path = os.path.join(args.out, "estimate.csv")
    _write_long(path, rows)
    print(path)


def build_parser():
    p = argparse.ArgumentParser(prog="blat", description="Feature-augmented Black-Litterman toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    post = sub.add_parser("posterior", help="evaluate one posterior / predictive")
    post.add_argument("--model", required=True, choices=("blb", "mbl", "slp", "fiv"))
    post.add_argument("--config", required=True)
    post.add_argument("--out", required=True)
    post.set_defaults(func=cmd_posterior)
    back = sub.add_parser("backtest", help="run a rolling-window backtest")
    back.add_argument("--config", required=True)
    back.add_argument("--prices", required=True)
    back.add_argument("--members", required=True)
    back.add_argument("--out", required=True)
    back.set_defaults(func=cmd_backtest)
    est = sub.add_parser("estimate", help="estimate hyperparameters on the latest window")
    est.add_argument("--config", required=True)
    est.add_argument("--prices", required=True)
    est.add_argument("--window", required=True, type=int)
    est.add_argument("--out", required=True)
    est.set_defaults(func=cmd_estimate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (BlatError, OSError) as exc:
        print(f"blat {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0
