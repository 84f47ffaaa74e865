"""Virtual-experiment pipelines: truth -> noisy data -> sequential updates -> CSV/JSON.

A configuration is a JSON object; see ``configs/`` for complete examples.
Random numbers come from one seed split into independent streams per phase
(truth, noise, ensemble, kde, design), so runs are reproducible bit for bit.
"""
from __future__ import annotations

import copy
import csv
import io
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .basis import HermiteBasis, build_index_set, gauss_hermite_rule
from .errors import ConfigError
from .filters import assemble_z, enkf_update, pce_gain, spkf_update
from .models import (
    LORENZ84_DEFAULTS,
    TestModel,
    bayes_oracle_1d,
    gaussian,
    cubic_model,
    diffusion1d_model,
    gaussian_prior,
    identity_model,
    lorenz84_integrate,
)
from .nonlinear import (
    ce_filter_update,
    corrected_covariance,
    covariance_match,
    default_rule,
    fit_optimal_map,
)
from .rv import Ensemble, PceVector, covariance, gaussian_regerm, kde_pdf
from .surrogate import (
    evaluate_model,
    fit_interpolation,
    fit_projection,
    fit_regression,
    make_design,
    project_values,
    quadrature_design,
    solve_galerkin,
)

log = logging.getLogger(__name__)

MODEL_NAMES = ("identity", "cubic", "diffusion1d", "lorenz84")
ROUTES = ("collocation", "regression", "projection", "galerkin")
FILTER_NAMES = ("spkf", "enkf", "ce")
STREAMS = ("truth", "noise", "ensemble", "kde", "design")


# --- configuration -----------------------------------------------------------------

@dataclass
class FilterSpec:
    name: str = "spkf"
    degree: int = 1
    ensemble_size: int = 1000
    correct_covariance: bool = False

    @property
    def label(self) -> str:
        if self.name == "ce":
            return f"ce{self.degree}" + ("cc" if self.correct_covariance else "")
        if self.name == "enkf":
            return f"enkf{self.ensemble_size}"
        return self.name


@dataclass
class SurrogateSpec:
    route: str = "projection"
    degree: int = 3
    rule_points: Optional[int] = None
    design: str = "quadrature"
    samples: Optional[int] = None


@dataclass
class ExperimentConfig:
    model: dict
    seed: int
    surrogate: SurrogateSpec = field(default_factory=SurrogateSpec)
    filters: list = field(default_factory=lambda: [FilterSpec()])
    updates: int = 1
    regerm: str = "auto"
    kde_points: int = 201
    kde_samples: int = 20000
    output_dir: str = "out"
    oracle: bool = True
    raw: dict = field(default_factory=dict)

    @property
    def filter(self) -> FilterSpec:
        return self.filters[0]

    def resolved(self) -> dict:
        """Plain-dict form that reproduces this run when fed back in."""
        out = copy.deepcopy(self.raw)
        out.update({
            "model": self.model,
            "seed": self.seed,
            "surrogate": vars(self.surrogate).copy(),
            "filters": [vars(f).copy() for f in self.filters],
            "updates": self.updates,
            "regerm": self.regerm,
            "kde": {"points": self.kde_points, "samples": self.kde_samples},
            "output_dir": self.output_dir,
            "oracle": self.oracle,
        })
        out.pop("filter", None)
        return out


def _req(cond: bool, msg: str, fieldpath: str) -> None:
    if not cond:
        raise ConfigError(msg, fieldpath)


def _int(data: dict, key: str, path: str, default=None, minimum: int = 0) -> Optional[int]:
    val = data.get(key, default)
    if val is None:
        return None
    _req(isinstance(val, int) and not isinstance(val, bool), "must be an integer", f"{path}.{key}".lstrip("."))
    _req(val >= minimum, f"must be >= {minimum}", f"{path}.{key}".lstrip("."))
    return val


def _filter_spec(data, path: str) -> FilterSpec:
    if isinstance(data, str):
        data = {"name": data}
    _req(isinstance(data, dict), "must be an object or a filter name", path)
    name = data.get("name")
    _req(name in FILTER_NAMES, f"unknown filter {name!r} (expected one of {', '.join(FILTER_NAMES)})", f"{path}.name")
    spec = FilterSpec(name=name)
    spec.degree = _int(data, "degree", path, 1, minimum=1)
    _req(spec.degree <= 3 or name != "ce", "map degree is capped at 3", f"{path}.degree")
    spec.ensemble_size = _int(data, "ensemble_size", path, 1000, minimum=2)
    spec.correct_covariance = bool(data.get("correct_covariance", False))
    return spec


def parse_config(data: dict, seed: Optional[int] = None, out_dir: Optional[str] = None) -> ExperimentConfig:
    """Validate a raw config dict; errors name the offending field path."""
    _req(isinstance(data, dict), "config must be a JSON object", "<root>")
    model = data.get("model")
    _req(isinstance(model, dict), "missing model section", "model")
    _req(model.get("name") in MODEL_NAMES,
         f"unknown model {model.get('name')!r} (expected one of {', '.join(MODEL_NAMES)})", "model.name")
    if seed is None:
        _req("seed" in data, "seed is mandatory", "seed")
        seed = data["seed"]
    _req(isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0, "must be a non-negative integer", "seed")

    sur = data.get("surrogate", {})
    _req(isinstance(sur, dict), "must be an object", "surrogate")
    route = sur.get("route", "projection")
    _req(route in ROUTES, f"unknown route {route!r}", "surrogate.route")
    sspec = SurrogateSpec(route=route, degree=_int(sur, "degree", "surrogate", 3),
                          rule_points=_int(sur, "rule_points", "surrogate", None, minimum=1),
                          design=sur.get("design", "quadrature"),
                          samples=_int(sur, "samples", "surrogate", None, minimum=1))
    _req(sspec.design in ("quadrature", "montecarlo"), "must be 'quadrature' or 'montecarlo'", "surrogate.design")

    if "filters" in data:
        _req(isinstance(data["filters"], list) and data["filters"], "must be a non-empty list", "filters")
        filters = [_filter_spec(f, f"filters[{i}]") for i, f in enumerate(data["filters"])]
    else:
        filters = [_filter_spec(data.get("filter", "spkf"), "filter")]
    if model["name"] == "lorenz84":
        for i, f in enumerate(filters):
            _req(f.name in ("spkf", "enkf"), "lorenz84 supports spkf and enkf", f"filters[{i}].name")
    kde = data.get("kde", {})
    regerm = data.get("regerm", "auto")
    _req(regerm in ("auto", "gaussian", "none"), "must be auto, gaussian or none", "regerm")
    cfg = ExperimentConfig(
        model=copy.deepcopy(model), seed=seed, surrogate=sspec, filters=filters,
        updates=_int(data, "updates", "", 1, minimum=1), regerm=regerm,
        kde_points=_int(kde, "points", "kde", 201, minimum=2),
        kde_samples=_int(kde, "samples", "kde", 20000, minimum=2),
        output_dir=str(out_dir or data.get("output_dir", "out")),
        oracle=bool(data.get("oracle", True)),
        raw=copy.deepcopy(data),
    )
    return cfg


def load_config(path, seed=None, out_dir=None) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return parse_config(data, seed, out_dir)


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(s) for name, s in zip(STREAMS, children)}


# --- models from config --------------------------------------------------------------

def rhs_family(k: int):
    """Load number ``k`` of the diffusion experiments: ``f_k(s) = 1 + cos(k pi s)``."""
    return lambda s: 1.0 + np.cos(k * np.pi * s)


def draw_truth(spec, prior: PceVector, rng: np.random.Generator) -> np.ndarray:
    if spec is None or spec == "prior":
        return prior.evaluate(rng.standard_normal((prior.germ_stop, 1)))[:, 0]
    if isinstance(spec, dict):
        _req(spec.get("kind") == "mixture", "only 'mixture' truth distributions are supported", "model.truth.kind")
        w = np.asarray(spec.get("weights", [0.5, 0.5]), dtype=float)
        means = np.asarray(spec["means"], dtype=float)
        stds = np.asarray(spec["stds"], dtype=float)
        comp = rng.choice(w.size, size=prior.dim, p=w / w.sum())
        return means[comp] + stds[comp] * rng.standard_normal(prior.dim)
    truth = np.atleast_1d(np.asarray(spec, dtype=float))
    _req(truth.size == prior.dim, f"needs {prior.dim} values", "model.truth")
    return truth


def build_models(cfg: ExperimentConfig, rng: np.random.Generator) -> list[TestModel]:
    """One TestModel per update (they differ only in the load for diffusion1d)."""
    m = cfg.model
    name = m["name"]
    if name == "identity":
        dim = int(m.get("dim", 1))
        prior = gaussian_prior(np.broadcast_to(m.get("prior_mean", 0.0), (dim,)), m.get("prior_std", 1.0))
        base = identity_model(prior, m.get("noise_std", 1.0))
    elif name == "cubic":
        prior = gaussian_prior(m.get("prior_mean", 0.0), m.get("prior_std", 1.0))
        base = cubic_model(m.get("noise_std", 1.0), prior)
    elif name == "diffusion1d":
        dim = int(m.get("param_dim", 3))
        prior = gaussian_prior(np.zeros(dim), m.get("prior_std", 0.5))
        modes = int(m.get("truth_modes", dim))
        _req(modes >= dim, "must be >= param_dim", "model.truth_modes")
        args = (int(m.get("n", 64)), int(m.get("patches", 5)))
        noise = m.get("noise_std", 1e-3)
        # the data may come from a richer field than the identified one
        decay = float(m.get("truth_decay", 0.5))
        sd = float(m.get("prior_std", 0.5)) * decay ** np.maximum(np.arange(modes) - dim + 1, 0)
        truth = draw_truth(m.get("truth"), gaussian_prior(np.zeros(modes), sd), rng)
        models = []
        for k in range(cfg.updates):
            mod = diffusion1d_model(args[0], dim, args[1], rhs_family(k), noise, prior).with_truth(truth[:dim])
            if modes > dim:
                data = diffusion1d_model(args[0], modes, args[1], rhs_family(k), noise).with_truth(truth)
                mod.info["data_model"] = data
            models.append(mod)
        return models
    else:
        raise ConfigError("lorenz84 is not a parameter-identification model", "model.name")
    truth = draw_truth(m.get("truth"), base.prior, rng)
    return [base.with_truth(truth)] * cfg.updates


# --- surrogate + single updates ----------------------------------------------------

def build_surrogate(model: TestModel, x: PceVector, spec: SurrogateSpec,
                    rng: Optional[np.random.Generator] = None) -> PceVector:
    """Measurement prediction ``y(xi)`` over the germ of ``x`` by the configured route."""
    dim, p = x.germ_stop, spec.degree
    if x.germ_offset != 0:
        raise ValueError("surrogates assume the parameter germ starts at variable 0")
    n = spec.rule_points or p + 1
    if spec.route == "collocation":
        basis = HermiteBasis(build_index_set(dim, p, "tensor"), True)
        rule = gauss_hermite_rule(dim, p + 1)
        values = evaluate_model(model.forward, x, rule.nodes)
        return fit_interpolation(values, make_design(basis, rule.nodes), basis)
    basis = HermiteBasis(build_index_set(dim, p), True)
    if spec.route == "projection":
        return fit_projection(model.forward, x, gauss_hermite_rule(dim, n), basis)
    if spec.route == "regression":
        if spec.design == "montecarlo":
            pts = (rng or np.random.default_rng(0)).standard_normal((dim, spec.samples or 4 * basis.cardinality))
            design = make_design(basis, pts)
        else:
            design = quadrature_design(basis, gauss_hermite_rule(dim, n))
        return fit_regression(evaluate_model(model.forward, x, design.points), design, basis)
    rule = gauss_hermite_rule(dim, n)
    u = solve_galerkin(model.forward, x, basis, rule)
    p_nodes, u_nodes = x.evaluate(rule.nodes), u.evaluate(rule.nodes)
    values = np.column_stack([np.atleast_1d(model.forward.observe(p_nodes[:, s], u_nodes[:, s]))
                              for s in range(rule.size)])
    return project_values(values, basis, rule)


def pce_update(x: PceVector, model: TestModel, y_obs, fspec: FilterSpec, sspec: SurrogateSpec,
               rng: Optional[np.random.Generator] = None) -> tuple[PceVector, dict]:
    """One spectral update of ``x`` with measurement ``y_obs``; returns the posterior and diagnostics."""
    y = build_surrogate(model, x, sspec, rng)
    z = assemble_z(y, model.noise_pce(x.germ_stop))
    diag: dict[str, Any] = {}
    if fspec.name == "spkf":
        gain = pce_gain(x, z)
        diag.update(gain=gain.to_dict())
        return spkf_update(x, z, y_obs, gain), diag
    rule = default_rule(x, z, fspec.degree)
    phi = fit_optimal_map(x, z, fspec.degree, rule)
    post = ce_filter_update(x, z, phi, y_obs)
    diag.update(map=phi.to_dict(), mmse=phi.mse.tolist())
    if fspec.correct_covariance:
        target = corrected_covariance(x, z, y_obs, default_rule(x, z, max(2, fspec.degree), extra=1),
                                      max(2, fspec.degree))
        post = covariance_match(post, target)
        diag.update(corrected_covariance=target.tolist())
    return post.to_pce(), diag


def ensemble_update(x: Ensemble, model: TestModel, y_obs, rng: np.random.Generator) -> Ensemble:
    pred = np.column_stack([model.forward.predict(x.samples[:, s]) for s in range(x.size)])
    z = Ensemble(pred + model.noise_std[:, None] * rng.standard_normal(pred.shape))
    return enkf_update(x, z, y_obs)


# --- identification runs -------------------------------------------------------------

def _moments(x) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(x, Ensemble):
        return x.mean, x.covariance
    return x.mean, covariance(x)


def _draw(x, n: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(x, Ensemble):
        return x.samples
    return x.evaluate(rng.standard_normal((x.germ_stop, n)))


def _use_regerm(cfg: ExperimentConfig) -> bool:
    # moment-matched re-germing keeps the germ at M variables; lossless for linear updates
    return cfg.regerm in ("auto", "gaussian")


def observations(models: list[TestModel], rng: np.random.Generator) -> list[np.ndarray]:
    return [m.info.get("data_model", m).measure(rng) for m in models]


def run_identification(cfg: ExperimentConfig, fspec: Optional[FilterSpec] = None,
                       models: Optional[list[TestModel]] = None, data: Optional[list] = None) -> dict:
    """Sequential updates of the prior with one measurement per step.

    Returns a dict with per-step records (step 0 is the prior).
    """
    fspec = fspec or cfg.filter
    rngs = rng_streams(cfg.seed)
    if models is None:
        models = build_models(cfg, rngs["truth"])
    if data is None:
        data = observations(models, rngs["noise"])
    prior = models[0].prior
    truth = models[0].true_parameters
    if fspec.name == "enkf":
        x: Any = Ensemble(prior.evaluate(rngs["ensemble"].standard_normal((prior.germ_stop, fspec.ensemble_size))))
    else:
        x = prior
    oracle_ok = cfg.oracle and prior.dim == 1 and cfg.model["name"] in ("identity", "cubic")
    records, diags, states = [], [], [x]
    t0 = time.perf_counter()
    for k in range(cfg.updates + 1):
        if k > 0:
            model, y_obs = models[k - 1], data[k - 1]
            if fspec.name == "enkf":
                x = ensemble_update(x, model, y_obs, rngs["ensemble"])
                diags.append({})
            else:
                if k > 1 and _use_regerm(cfg):
                    m_, c_ = _moments(x)
                    x = gaussian_regerm(m_, c_)
                x, d = pce_update(x, model, y_obs, fspec, cfg.surrogate, rngs["design"])
                diags.append(d)
            states.append(x)
        mean, cov = _moments(x)
        rec = {"update": k, "mean": mean, "cov": cov, "truth": truth,
               "rmse": float(np.sqrt(np.mean((mean - truth) ** 2))),
               "y_obs": data[k - 1] if k > 0 else np.full(models[0].obs_dim, np.nan)}
        if oracle_ok:
            rec["oracle"] = oracle_for(cfg, models[0], data[:k])
        records.append(rec)
    return {"records": records, "diagnostics": diags, "states": states, "truth": truth, "data": data,
            "filter": fspec, "seconds": time.perf_counter() - t0}


def oracle_for(cfg: ExperimentConfig, model: TestModel, data) -> dict:
    """Exact 1D posterior moments given all measurements so far (Gaussian prior)."""
    mu = float(model.prior.mean[0])
    sd = float(np.sqrt(covariance(model.prior)[0, 0]))
    if not data:
        return {"mean": mu, "var": sd * sd}
    pred = (lambda p: p) if model.name == "identity" else (lambda p: np.asarray(p) ** 3)
    grid = np.linspace(mu - 10 * sd, mu + 10 * sd, 2001)
    res = bayes_oracle_1d(gaussian(mu, sd), pred, float(model.noise_std[0]), [float(d[0]) for d in data], grid)
    return {"mean": res.mean, "var": res.variance}


# --- Lorenz-84 -----------------------------------------------------------------------

def run_lorenz(cfg: ExperimentConfig, fspec: Optional[FilterSpec] = None) -> dict:
    """Assimilation cycles: propagate ``window`` days, then update with a full-state measurement.

    Spectral runs propagate by integrating at Gauss-Hermite nodes and projecting
    back onto the chaos basis; after each update the state is re-expressed as a
    linear expansion on a fresh 3-variable germ with identical mean/covariance.
    """
    fspec = fspec or cfg.filter
    m = cfg.model
    rngs = rng_streams(cfg.seed)
    params = tuple(float(m.get("params", {}).get(k, v)) for k, v in LORENZ84_DEFAULTS.items())
    h = float(m.get("h", 0.01))
    window = float(m.get("window", 10.0))
    days = float(m.get("days", 100.0))
    noise = float(m.get("noise_std", 0.1))
    prior_std = float(m.get("prior_std", 0.5))
    degree = int(m.get("degree", 2))
    npts = int(m.get("rule_points", degree + 1))
    cycles = int(round(days / window))
    truth = lorenz84_integrate(np.asarray(m.get("initial", [1.0, 0.0, 0.0]), dtype=float),
                               float(m.get("spinup", 100.0)), h, params)
    mean0 = truth + prior_std * rngs["truth"].standard_normal(3)
    prior = gaussian_regerm(mean0, prior_std**2 * np.eye(3))
    basis = HermiteBasis(build_index_set(3, degree), True)
    rule = gauss_hermite_rule(3, npts)
    eps = lambda off: gaussian_regerm(np.zeros(3), noise**2 * np.eye(3), germ_offset=off)  # noqa: E731
    if fspec.name == "enkf":
        x: Any = Ensemble(prior.evaluate(rngs["ensemble"].standard_normal((3, fspec.ensemble_size))))
    else:
        x = prior
    records = [{"time": 0.0, "phase": "prior", "mean": _moments(x)[0], "trace": float(np.trace(_moments(x)[1])),
                "truth": truth.copy()}]
    t0 = time.perf_counter()
    for c in range(cycles):
        truth = lorenz84_integrate(truth, window, h, params)
        if isinstance(x, Ensemble):
            x = Ensemble(lorenz84_integrate(x.samples, window, h, params))
        else:
            x = project_values(lorenz84_integrate(x.evaluate(rule.nodes), window, h, params), basis, rule)
        t = (c + 1) * window
        mean, cov = _moments(x)
        records.append({"time": t, "phase": "forecast", "mean": mean, "trace": float(np.trace(cov)),
                        "truth": truth.copy()})
        y_obs = truth + noise * rngs["noise"].standard_normal(3)
        if isinstance(x, Ensemble):
            z = Ensemble(x.samples + noise * rngs["ensemble"].standard_normal(x.samples.shape))
            x = enkf_update(x, z, y_obs)
        else:
            x = spkf_update(x, assemble_z(x, eps(x.germ_stop)), y_obs)
        mean, cov = _moments(x)
        records.append({"time": t, "phase": "analysis", "mean": mean, "trace": float(np.trace(cov)),
                        "truth": truth.copy(), "y_obs": y_obs})
        if not isinstance(x, Ensemble):
            x = gaussian_regerm(mean, cov)
    return {"records": records, "filter": fspec, "seconds": time.perf_counter() - t0}


# --- output ---------------------------------------------------------------------------

def _fmt(v) -> str:
    return repr(float(v))


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _identification_csv(result: dict) -> str:
    recs = result["records"]
    d = recs[0]["mean"].size
    header = ["update"] + [f"mean_{i}" for i in range(d)] + [f"cov_{i}{j}" for i in range(d) for j in range(d)]
    header += [f"truth_{i}" for i in range(d)] + ["rmse"]
    has_oracle = "oracle" in recs[0]
    if has_oracle:
        header += ["oracle_mean", "oracle_var"]
    rows = []
    for r in recs:
        row = [r["update"]] + [_fmt(v) for v in r["mean"]] + [_fmt(v) for v in r["cov"].ravel()]
        row += [_fmt(v) for v in r["truth"]] + [_fmt(r["rmse"])]
        if has_oracle:
            row += [_fmt(r["oracle"]["mean"]), _fmt(r["oracle"]["var"])]
        rows.append(row)
    return _csv_text(header, rows)


def _pdf_csv(cfg: ExperimentConfig, result: dict) -> str:
    rng = rng_streams(cfg.seed)["kde"]
    rows = []
    for k, x in enumerate(result["states"]):
        draws = _draw(x, cfg.kde_samples, rng)
        for i in range(draws.shape[0]):
            comp = draws[i]
            sd = comp.std()
            if not sd > 0:
                continue
            grid = np.linspace(comp.mean() - 5 * sd, comp.mean() + 5 * sd, cfg.kde_points)
            dens = kde_pdf(Ensemble(comp[None, :]), grid)
            rows.extend([k, i, _fmt(g), _fmt(p)] for g, p in zip(grid, dens))
    return _csv_text(["update", "component", "x", "density"], rows)


def _lorenz_csv(result: dict) -> str:
    header = ["time", "phase", "trace", "mean_x", "mean_y", "mean_z", "truth_x", "truth_y", "truth_z"]
    rows = [[_fmt(r["time"]), r["phase"], _fmt(r["trace"])] + [_fmt(v) for v in r["mean"]]
            + [_fmt(v) for v in r["truth"]] for r in result["records"]]
    return _csv_text(header, rows)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, FilterSpec):
        return vars(obj).copy()
    return obj


def lorenz_shape(records: list[dict]) -> dict:
    """Per-cycle trace changes across propagation windows and updates."""
    grow, shrink = [], []
    last = records[0]["trace"]
    for r in records[1:]:
        if r["phase"] == "forecast":
            grow.append(r["trace"] - last)
        else:
            shrink.append(last - r["trace"])
        last = r["trace"]
    return {"window_growth": grow, "update_reduction": shrink,
            "windows_increasing": int(sum(g > 0 for g in grow)),
            "updates_decreasing": int(sum(s > 0 for s in shrink))}


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run the first configured filter and write ``config.json``, CSVs and ``summary.json``."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.resolved(), indent=2, sort_keys=True))
    if cfg.model["name"] == "lorenz84":
        result = run_lorenz(cfg)
        (out / "updates.csv").write_text(_lorenz_csv(result))
        summary = {"model": "lorenz84", "filter": cfg.filter.label, "seconds": result["seconds"],
                   **lorenz_shape(result["records"]),
                   "final_trace": result["records"][-1]["trace"]}
    else:
        result = run_identification(cfg)
        (out / "updates.csv").write_text(_identification_csv(result))
        (out / "pdf.csv").write_text(_pdf_csv(cfg, result))
        final = result["records"][-1]
        summary = {
            "model": cfg.model["name"], "filter": cfg.filter.label, "seconds": result["seconds"],
            "posterior_mean": final["mean"], "posterior_cov": final["cov"], "truth": result["truth"],
            "observations": result["data"], "rmse": [r["rmse"] for r in result["records"]],
            "diagnostics": result["diagnostics"],
        }
        if "oracle" in final:
            summary["oracle_mean"] = final["oracle"]["mean"]
            summary["oracle_var"] = final["oracle"]["var"]
    summary["config"] = cfg.resolved()
    (out / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True))
    return summary


def compare_updates(cfg: ExperimentConfig) -> list[dict]:
    """Run every configured filter on identical truth and data; write ``comparison.csv``."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.resolved(), indent=2, sort_keys=True))
    rows = []
    if cfg.model["name"] == "lorenz84":
        for f in cfg.filters:
            res = run_lorenz(cfg, f)
            shape = lorenz_shape(res["records"])
            last = res["records"][-1]
            rows.append({"filter": f.label, "final_trace": last["trace"],
                         "rmse": float(np.sqrt(np.mean((last["mean"] - last["truth"]) ** 2))),
                         "windows_increasing": shape["windows_increasing"],
                         "updates_decreasing": shape["updates_decreasing"]})
    else:
        rngs = rng_streams(cfg.seed)
        models = build_models(cfg, rngs["truth"])
        data = observations(models, rngs["noise"])
        for f in cfg.filters:
            res = run_identification(cfg, f, models, data)
            last = res["records"][-1]
            row = {"filter": f.label, "mean": last["mean"].tolist(), "var": np.diag(last["cov"]).tolist(),
                   "rmse": last["rmse"]}
            if "oracle" in last:
                row["oracle_mean"] = last["oracle"]["mean"]
                row["oracle_var"] = last["oracle"]["var"]
                row["oracle_distance"] = float(abs(last["mean"][0] - last["oracle"]["mean"]))
            rows.append(row)
    keys = list(dict.fromkeys(k for r in rows for k in r))
    text = _csv_text(keys, [[_cell(r.get(k, "")) for k in keys] for r in rows])
    (out / "comparison.csv").write_text(text)
    return rows


def _cell(v):
    if isinstance(v, list):
        return ";".join(_fmt(e) for e in v)
    if isinstance(v, float):
        return _fmt(v)
    return v
