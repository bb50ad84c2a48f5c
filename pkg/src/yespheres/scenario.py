"""Scenario configuration, pipeline orchestration and reports.

A scenario is a strict JSON document with a ``schema_version`` field. Named
presets supply complete scenarios; a file may start from a preset and
override individual keys.
"""
from __future__ import annotations

import copy
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import curvature_functions as cf
from . import families as fm
from .errors import ConfigurationError, PipelineError, YeSpheresError
from .expansions import FIFTH_ORDER, ExpansionKind, OrderFit, expansion_fit, write_fits_csv
from .geometry import curvature_jet
from .spectral import SphereField, standard_basis

SCHEMA_VERSION = 1
PIPELINES = ("axioms", "expansions", "ye", "spectrum", "census")

_SPHERE_X1 = "4*y1/(4+y1**2+y2**2)"
_SPHERE_X2 = "4*y2/(4+y1**2+y2**2)"

DEFAULTS: dict = {
    "schema_version": SCHEMA_VERSION,
    "name": "unnamed",
    "preset": None,
    "family": {"kind": "euclidean", "dim": 2},
    "f": "0",
    "curvature": {"kind": "mean"},
    "n": None,
    "basis_degree": None,
    "t_grid": [float(t) for t in np.logspace(-1.5, -0.5, 8)],
    "t_target": 0.1,
    "t_probe_min": 0.005,
    "tolerances": {"newton": 1e-9, "degeneracy_floor": 1e-4, "gap_factor": 10.0,
                   "slope_fifth": 4.7, "slope_fourth": 3.7, "slope_drift": [1.8, 2.3],
                   "slope_near_kernel": 3.6},
    "seed": 0,
    "pipelines": list(PIPELINES),
    "search": {"bounds": None, "starts_per_axis": 6, "random_starts": 16},
    "expansion_point": None,
    "expansion_directions": 6,
}

_FAMILY_KEYS = {
    "euclidean": {"kind", "dim"},
    "flat_torus": {"kind", "dim", "periods"},
    "round_sphere": {"kind", "dim", "radius"},
    "hyperbolic": {"kind", "dim", "radius"},
    "conformal_perturbation": {"kind", "dim", "seed", "modes", "amplitude", "kappa"},
}
_CURVATURE_KEYS = {"kind", "k", "l", "expression", "cone"}
# keys that do not change any computed number
_COSMETIC = {"name", "preset"}

PRESETS: dict[str, dict] = {
    "t2_flat_coscos": {
        "name": "t2_flat_coscos",
        "family": {"kind": "flat_torus", "dim": 2, "periods": [1.0, 1.0]},
        "f": "cos(2*pi*y1)*cos(2*pi*y2)",
        "t_target": 0.1,
        "expansion_point": [0.1, 0.2],
    },
    "t2_flat_coscos_tilted": {
        "name": "t2_flat_coscos_tilted",
        "family": {"kind": "flat_torus", "dim": 2, "periods": [1.0, 1.0]},
        "f": "cos(2*pi*y1)*cos(2*pi*y2) + 0.3*sin(2*pi*y1) + 0.2*sin(4*pi*y2)",
        "t_target": 0.1,
        "expansion_point": [0.1, 0.2],
    },
    "s2_round": {
        "name": "s2_round",
        "family": {"kind": "round_sphere", "dim": 2, "radius": 1.0},
        "f": f"{_SPHERE_X1} + 2*({_SPHERE_X2})**2",
        "t_target": 0.05,
        "search": {"bounds": [[-5.0, 5.0], [-5.0, 5.0]], "starts_per_axis": 8, "random_starts": 32},
        "expansion_point": [0.3, -0.2],
    },
    "h2_disk": {
        "name": "h2_disk",
        "family": {"kind": "hyperbolic", "dim": 2, "radius": 1.0},
        "f": "0.5*y1**2 - 0.25*y2**2 + 0.1*y1*y2",
        "t_target": 0.05,
        "search": {"bounds": [[-0.8, 0.8], [-0.8, 0.8]], "starts_per_axis": 4, "random_starts": 8},
        "expansion_point": [0.2, 0.1],
        "pipelines": ["axioms", "expansions"],
    },
    "conformal_2d": {
        "name": "conformal_2d",
        "family": {"kind": "conformal_perturbation", "dim": 2, "seed": 0},
        "f": "0",
        "expansion_point": [0.1, 0.1],
        "pipelines": ["axioms", "expansions"],
    },
    "conformal_3d": {
        "name": "conformal_3d",
        "family": {"kind": "conformal_perturbation", "dim": 3, "seed": 0},
        "f": "0",
        "curvature": {"kind": "extrinsic"},
        "expansion_point": [0.1, 0.1, 0.1],
        "pipelines": ["axioms", "expansions"],
    },
}


# ---------------------------------------------------------------------------
# loading and validation
# ---------------------------------------------------------------------------

def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k in ("tolerances", "search"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _no_duplicates(pairs):
    seen = {}
    for k, v in pairs:
        if k in seen:
            raise ConfigurationError(f"duplicate key {k!r}")
        seen[k] = v
    return seen


@dataclass
class Scenario:
    """Validated scenario: the raw config plus constructed objects."""

    config: dict
    warnings: list[str] = field(default_factory=list)

    @property
    def name(self) -> str:
        return self.config["name"]

    @property
    def n(self) -> int:
        return self.config["n"]

    @property
    def seed(self) -> int:
        return int(self.config["seed"])

    def family(self) -> fm.MetricFamily:
        fam = dict(self.config["family"])
        kind = fam.pop("kind")
        f = self.config["f"]
        dim = fam.pop("dim")
        if kind == "euclidean":
            return fm.euclidean(dim, f)
        if kind == "flat_torus":
            return fm.flat_torus(dim, tuple(fam.get("periods", [1.0] * dim)), f)
        if kind == "round_sphere":
            return fm.round_sphere(dim, fam.get("radius", 1.0), f)
        if kind == "hyperbolic":
            return fm.hyperbolic(dim, fam.get("radius", 1.0), f)
        return fm.conformal_perturbation(dim, seed=fam.get("seed", 0), modes=fam.get("modes", 3),
                                         amplitude=fam.get("amplitude", 0.05),
                                         kappa=fam.get("kappa", 0.0), f_expr=f)

    def curvature(self) -> cf.CurvatureSpec:
        c = dict(self.config["curvature"])
        c.setdefault("n", self.n)
        return cf.from_dict(c)

    def basis(self):
        return standard_basis(self.n, self.config["basis_degree"])

    def config_hash(self) -> str:
        return config_hash(self.config)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.config)


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON of all semantically relevant fields."""
    relevant = {k: v for k, v in config.items() if k not in _COSMETIC}
    blob = json.dumps(relevant, sort_keys=True, separators=(",", ":"), default=float)
    return hashlib.sha256(blob.encode()).hexdigest()


def _check_keys(where: str, got: dict, allowed: set, strict: bool, warnings: list) -> None:
    unknown = sorted(set(got) - allowed)
    if unknown:
        msg = f"unknown key{'s' if len(unknown) > 1 else ''} {', '.join(map(repr, unknown))} in {where}"
        if strict:
            raise ConfigurationError(msg)
        warnings.append(msg)


def validate(raw: dict, strict: bool = True) -> Scenario:
    """Apply defaults and presets and check every field."""
    if not isinstance(raw, dict):
        raise ConfigurationError("scenario must be a JSON object")
    warnings: list[str] = []
    _check_keys("scenario", raw, set(DEFAULTS), strict, warnings)
    raw = {k: v for k, v in raw.items() if k in DEFAULTS}
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigurationError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    cfg = copy.deepcopy(DEFAULTS)
    preset = raw.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigurationError(f"unknown preset {preset!r}; known: {', '.join(sorted(PRESETS))}")
        cfg = _merge(cfg, PRESETS[preset])
    cfg = _merge(cfg, raw)
    cfg["preset"] = preset

    fam = cfg["family"]
    if not isinstance(fam, dict) or fam.get("kind") not in _FAMILY_KEYS:
        raise ConfigurationError(f"family.kind must be one of {sorted(_FAMILY_KEYS)}")
    _check_keys("family", fam, _FAMILY_KEYS[fam["kind"]], strict, warnings)
    cfg["family"] = {k: v for k, v in fam.items() if k in _FAMILY_KEYS[fam["kind"]]}
    dim = fam.get("dim")
    if not isinstance(dim, int) or not 2 <= dim <= 4:
        raise ConfigurationError("family.dim must be an integer between 2 and 4")
    if cfg["n"] is None:
        cfg["n"] = dim - 1
    if cfg["n"] != dim - 1:
        raise ConfigurationError(f"n = {cfg['n']} does not match family.dim = {dim}")
    curv = cfg["curvature"]
    if not isinstance(curv, dict) or "kind" not in curv:
        raise ConfigurationError("curvature must be an object with a 'kind'")
    _check_keys("curvature", curv, _CURVATURE_KEYS, strict, warnings)
    cfg["curvature"] = {k: v for k, v in curv.items() if k in _CURVATURE_KEYS}
    tol = cfg["tolerances"]
    _check_keys("tolerances", tol, set(DEFAULTS["tolerances"]), strict, warnings)
    for k, v in tol.items():
        vals = v if isinstance(v, list) else [v]
        if not all(isinstance(x, (int, float)) and x > 0 for x in vals):
            raise ConfigurationError(f"tolerances.{k} must be positive")
    cfg["tolerances"] = {k: v for k, v in tol.items() if k in DEFAULTS["tolerances"]}
    _check_keys("search", cfg["search"], set(DEFAULTS["search"]), strict, warnings)
    tg = cfg["t_grid"]
    if (not isinstance(tg, list) or len(tg) < 4 or any(not isinstance(t, (int, float)) or t <= 0 for t in tg)
            or any(b <= a for a, b in zip(tg, tg[1:]))):
        raise ConfigurationError("t_grid must be a sorted list of at least four positive scales")
    for key in ("t_target", "t_probe_min"):
        if not isinstance(cfg[key], (int, float)) or cfg[key] <= 0:
            raise ConfigurationError(f"{key} must be positive")
    bad = [p for p in cfg["pipelines"] if p not in PIPELINES]
    if bad:
        raise ConfigurationError(f"unknown pipeline {bad[0]!r}; known: {', '.join(PIPELINES)}")
    if not isinstance(cfg["seed"], int):
        raise ConfigurationError("seed must be an integer")
    sc = Scenario(cfg, warnings)
    try:
        sc.family()
        sc.curvature()
    except (ValueError, YeSpheresError) as exc:
        raise ConfigurationError(f"invalid scenario: {exc}") from exc
    return sc


def load_scenario(path, strict: bool = True) -> Scenario:
    """Read and validate a scenario file.

    Raises
    ------
    ConfigurationError
        On missing files, JSON syntax errors (with line and column), unknown
        keys in strict mode, or invalid values.
    """
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"scenario file {str(p)!r} does not exist")
    try:
        raw = json.loads(p.read_text(), object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{p}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return validate(raw, strict=strict)


def preset(name: str, **overrides) -> Scenario:
    return validate({"preset": name, **overrides})


# ---------------------------------------------------------------------------
# pipelines
# ---------------------------------------------------------------------------

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


@dataclass
class PipelineResult:
    status: str
    summary: dict
    artifacts: list[str] = field(default_factory=list)
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return {"status": self.status, "summary": self.summary, "artifacts": self.artifacts,
                "seconds": self.seconds}


@dataclass
class RunReport:
    scenario: str
    config_hash: str
    pipelines: dict[str, PipelineResult]
    wall_clock: float
    out_dir: str | None

    @property
    def status(self) -> str:
        st = [p.status for p in self.pipelines.values()]
        if FAIL in st:
            return FAIL
        if INCONCLUSIVE in st:
            return INCONCLUSIVE
        return PASS

    def exit_code(self) -> int:
        return {PASS: 0, FAIL: 1, INCONCLUSIVE: 2}[self.status]

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "scenario": self.scenario,
                "config_hash": self.config_hash, "status": self.status,
                "wall_clock": self.wall_clock,
                "pipelines": {k: v.to_dict() for k, v in self.pipelines.items()}}


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _write_json(path: Path, data) -> str:
    path.write_text(json.dumps(data, indent=1, default=_json_default, allow_nan=True))
    return str(path)


def _slope(t, v, noise=None):
    t, v = np.asarray(t, float), np.asarray(v, float)
    m = v > 0 if noise is None else v > 10 * np.asarray(noise)
    if m.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(t[m]), np.log(v[m]), 1)[0])


def run_axioms(sc: Scenario, out: Path | None) -> PipelineResult:
    spec = sc.curvature()
    rep = cf.verify_axioms(spec, seed=sc.seed)
    required = ["i", "ii", "iii", "iv", "v", "vi"]
    if spec.kind in ("mean", "extrinsic"):
        required.append("vii")
    # the power mean is linear for n = 1, so the counterexample lives in n >= 2
    counter = cf.verify_axioms(cf.power_mean(max(2, sc.n)), seed=sc.seed)
    ok = rep.passed(*required) and not counter.passed("vi")
    summary = {"spec": spec.to_dict(), "report": rep.to_dict(), "required": required,
               "counterexample": counter.to_dict()}
    arts = [] if out is None else [_write_json(out / "axioms.json", summary)]
    return PipelineResult(PASS if ok else FAIL, summary, arts)


def _expansion_inputs(sc: Scenario):
    fam = sc.family()
    rng = np.random.default_rng(sc.seed)
    d = sc.n + 1
    x = sc.config["expansion_point"]
    x = rng.uniform(-0.2, 0.2, d) if x is None else np.asarray(x, float)
    Y = rng.normal(size=(sc.config["expansion_directions"], d))
    Y /= np.linalg.norm(Y, axis=1)[:, None]
    basis = standard_basis(sc.n, 8 if sc.n == 1 else min(8, sc.config["basis_degree"] or 8))
    c = np.zeros(basis.size)
    free = basis.mask(exclude=(1,))
    c[free] = 0.3 * rng.normal(size=free.sum()) / (1.0 + basis.degrees[free]) ** 2
    return fam, x, Y, SphereField(basis, c)


def run_expansions(sc: Scenario, out: Path | None) -> PipelineResult:
    fam, x, Y, phi = _expansion_inputs(sc)
    spec = sc.curvature()
    jet = curvature_jet(fam, x)
    tol = sc.config["tolerances"]
    fits: list[OrderFit] = []
    verdicts = {}
    for kind in ExpansionKind:
        fit = expansion_fit(kind, fam, jet, Y, t_samples=sc.config["t_grid"], phi=phi, spec=spec)
        need = tol["slope_fifth"] if kind in FIFTH_ORDER else tol["slope_fourth"]
        fit.meta["threshold"] = need
        fits.append(fit)
        verdicts[kind.value] = (INCONCLUSIVE if fit.inconclusive
                                else PASS if fit.slope >= need else FAIL)
    summary = {"point": x.tolist(), "fits": {f.label: f.to_dict() for f in fits}, "verdicts": verdicts}
    arts = []
    if out is not None:
        write_fits_csv(out / "expansions.csv", fits)
        arts = [str(out / "expansions.csv"), _write_json(out / "expansions.json", summary)]
    st = set(verdicts.values())
    return PipelineResult(FAIL if FAIL in st else INCONCLUSIVE if INCONCLUSIVE in st else PASS,
                          summary, arts)


def _search_config(sc: Scenario):
    from .ye import SearchConfig
    s = sc.config["search"]
    bounds = None if s.get("bounds") is None else tuple(tuple(b) for b in s["bounds"])
    return SearchConfig(bounds=bounds, starts_per_axis=s["starts_per_axis"],
                        random_starts=s["random_starts"], seed=sc.seed,
                        degeneracy_floor=sc.config["tolerances"]["degeneracy_floor"])


def _branch_job(args):
    """Solve one branch and, optionally, its signature check (process-pool friendly)."""
    from .jacobi import signature_check
    from .ye import ContinuationConfig, CriticalPoint, solve_ye
    config, cp_dict, with_signature = args
    sc = validate(config)
    fam, spec, basis = sc.family(), sc.curvature(), sc.basis()
    cp = CriticalPoint.from_dict(cp_dict)
    cont = ContinuationConfig(tol_factor=sc.config["tolerances"]["newton"])
    br = solve_ye(spec, fam, cp, sc.config["t_target"], basis, cont)
    verdict = None
    if with_signature:
        verdict = signature_check(spec, fam, br, cp, t_min=sc.config["t_probe_min"]).to_dict()
    return br.to_dict(), _branch_summary(sc, br), verdict


def _branch_summary(sc: Scenario, br) -> dict:
    t = br.t
    fit = t >= 0.01
    drift = br.drift()
    noise = br.drift_noise()
    return {"t_final": float(t[-1]), "residual_final": float(br.residuals()[-1]),
            "residual_max": float(br.residuals().max()),
            "drift_final": float(drift[-1]),
            "drift_slope": _slope(t[fit], drift[fit], noise[fit]),
            "phi_defect_slope": _slope(t, br.phi_defect())}


def _branches(sc: Scenario, cps, workers: int, with_signature: bool):
    jobs = [(sc.config, c.to_dict(), with_signature) for c in cps if not c.degenerate]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_branch_job, jobs))
    return [_branch_job(j) for j in jobs]


def run_ye(sc: Scenario, out: Path | None, workers: int = 1, with_signature: bool = False,
           cache: dict | None = None):
    from .ye import critical_points
    fam = sc.family()
    cps = critical_points(fam, _search_config(sc))
    results = _branches(sc, cps, workers, with_signature)
    tol = sc.config["tolerances"]
    lo, hi = tol["slope_drift"]
    points = []
    status = PASS
    arts = []
    for i, (c, (branch, summ, verdict)) in enumerate(zip([c for c in cps if not c.degenerate], results)):
        ok_res = summ["residual_max"] <= 10 * tol["newton"] * (1 + summ["t_final"])
        ok_def = summ["phi_defect_slope"] >= tol["slope_fourth"]
        ds = summ["drift_slope"]
        drift_state = INCONCLUSIVE if not np.isfinite(ds) else PASS if lo <= ds <= hi else FAIL
        points.append({"critical_point": c.to_dict(), **summ, "drift_verdict": drift_state,
                       "signature": verdict})
        if not (ok_res and ok_def) or drift_state == FAIL:
            status = FAIL
        elif drift_state == INCONCLUSIVE and status == PASS:
            status = INCONCLUSIVE
        if out is not None:
            arts.append(_write_json(out / f"branch_{i}.json", branch))
    degenerate = [c.to_dict() for c in cps if c.degenerate]
    summary = {"critical_points": len(cps), "degenerate": degenerate, "points": points}
    if cache is not None:
        cache["ye"] = (cps, results)
    if out is not None:
        arts.append(_write_json(out / "ye.json", summary))
    return PipelineResult(status, summary, arts)


def run_spectrum(sc: Scenario, out: Path | None, workers: int = 1, cache: dict | None = None):
    from .jacobi import predicted_signature
    if cache is None or "ye" not in cache or any(r[2] is None for r in cache["ye"][1]):
        cache = {} if cache is None else cache
        run_ye(sc, None, workers, with_signature=True, cache=cache)
    cps, results = cache["ye"]
    cps = [c for c in cps if not c.degenerate]
    tol = sc.config["tolerances"]
    rows, status = [], PASS
    for c, (_, _, v) in zip(cps, results):
        slope = v["decay_slope"]
        decay_ok = slope is not None and np.isfinite(slope) and slope >= tol["slope_near_kernel"]
        row = {**v, "decay_ok": bool(decay_ok), "predicted": predicted_signature(sc.n, c)}
        rows.append(row)
        if v["inconclusive"]:
            status = INCONCLUSIVE if status == PASS else status
        elif not (v["agree"] and decay_ok):
            status = FAIL
    summary = {"points": rows}
    arts = [] if out is None else [_write_json(out / "spectrum.json", summary)]
    return PipelineResult(status, summary, arts)


def run_census(sc: Scenario, out: Path | None, workers: int = 1, cache: dict | None = None):
    from .jacobi import predicted_signature
    cache = {} if cache is None else cache
    if "ye" not in cache or any(r[2] is None for r in cache["ye"][1]):
        run_ye(sc, None, workers, with_signature=True, cache=cache)
    cps, results = cache["ye"]
    degenerate = [c for c in cps if c.degenerate]
    if degenerate:
        summary = {"aborted": True, "offender": degenerate[0].to_dict()}
        return PipelineResult(FAIL, summary, [])
    n = sc.n
    chi = int(sum(c.hess_sign for c in cps))
    expected = -((-1) ** (n + 1)) * chi
    comp = [v["computed"] for _, _, v in results]
    total = None if any(x is None for x in comp) else int(sum(comp))
    rows = [{"location": c.location.tolist(), "morse_index": c.morse_index,
             "predicted": predicted_signature(n, c), "computed": v["computed"],
             "verdict": INCONCLUSIVE if v["inconclusive"] else PASS if v["agree"] else FAIL}
            for c, (_, _, v) in zip(cps, results)]
    status = (INCONCLUSIVE if total is None else
              PASS if total == expected and all(r["verdict"] == PASS for r in rows) else FAIL)
    summary = {"euler_characteristic": chi, "expected_sum": expected, "computed_sum": total,
               "points": rows}
    arts = []
    if out is not None:
        import csv
        with open(out / "census.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["point", "location", "morse_index", "predicted", "computed", "verdict"])
            for i, r in enumerate(rows):
                w.writerow([i, " ".join(f"{x:.12g}" for x in r["location"]), r["morse_index"],
                            r["predicted"], r["computed"], r["verdict"]])
        arts = [str(out / "census.csv"), _write_json(out / "census.json", summary)]
    return PipelineResult(status, summary, arts)


def run(sc: Scenario, out_dir=None, workers: int = 1, pipelines=None) -> RunReport:
    """Execute the selected pipelines in dependency order and write reports."""
    selected = list(pipelines or sc.config["pipelines"])
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "scenario.json", sc.to_dict())
    start = time.perf_counter()
    cache: dict = {}
    results: dict[str, PipelineResult] = {}
    needs_sig = "spectrum" in selected or "census" in selected
    for name in PIPELINES:
        if name not in selected:
            continue
        t0 = time.perf_counter()
        try:
            if name == "axioms":
                res = run_axioms(sc, out)
            elif name == "expansions":
                res = run_expansions(sc, out)
            elif name == "ye":
                res = run_ye(sc, out, workers, with_signature=needs_sig, cache=cache)
            elif name == "spectrum":
                res = run_spectrum(sc, out, workers, cache)
            else:
                res = run_census(sc, out, workers, cache)
        except (YeSpheresError, ValueError, np.linalg.LinAlgError) as exc:
            raise PipelineError(name, exc) from exc
        res.seconds = time.perf_counter() - t0
        results[name] = res
    report = RunReport(sc.name, sc.config_hash(), results, time.perf_counter() - start,
                       None if out is None else str(out))
    if out is not None:
        _write_json(out / "report.json", report.to_dict())
    return report
