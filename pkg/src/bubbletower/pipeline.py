"""Configuration, orchestration and the machine-readable report.

``run_pipeline`` goes normalize -> geometry -> tighten -> super-solution ->
Picard -> assemble -> S -> C1 -> conclusions -> pullback and collects every
labeled inequality into one ledger.  Margins are signed slacks (mostly in
log form): positive passes.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .assembly import (SolutionBundle, blow_up, decay, eval_K, eval_u, gradient_dichotomy, grad_K,
                       locate_S, s_floor, sandwich, signs, sphere_pullback, standard_probes,
                       tail_envelope, vbar_checks, verify_C1)
from .background import BackgroundK, GaugePhi, normalize_background
from .correction import ConstructionError, Context, PointGeometry, check_supersolution
from .kelvin import Dimensions
from .logmath import CancellationError
from .param_select import (choose_geometry, family_to_dict, tighten_sequences, verify_sim_ratios)
from .picard import PicardConfig, solve_u0_picard
from .points import Points

SCHEMA_VERSION = "bubbletower.report/1"

# every labeled inequality appears exactly once, in this order
LEDGER_LABELS = (
    "(2.2)", "(2.3)", "(2.4)", "(2.5)", "(2.6)", "(2.7)", "(2.8)", "(2.9)", "(2.10)",
    "(2.19)", "(2.20)", "(2.21)", "(2.25)+", "(2.30)", "(2.31)", "(2.32)", "(2.33)", "(2.34)",
    "(2.35)", "(2.40)", "(2.43)", "(2.49)", "(2.51)-sandwich", "(2.56)", "(2.58)/(2.59)/(2.62)",
    "(2.64)-envelope", "(1.14)blow-up", "(1.15)decay", "(1.16)signs",
)

# family margin prefixes folded into a ledger label other than their own
_FOLD = {"(2.24)+": "(2.25)+", "(2.25)": "(2.25)+", "(2.38)": "(2.64)-envelope"}

DEVIATIONS = (
    "u0 is the limit of a monotone iteration from 0 posed directly on R^n, "
    "not the limit of Navier problems on annuli.",
    "u0 is represented as a radial background plus one radial profile per bubble, "
    "so the iteration runs on fixed node sets.",
    "The tower is truncated at N bubbles; sums over i > N use the certified tail envelope.",
    "S is identified as the probes on the capped branch of F, which is exactly where kappa < K.",
    "Probes stop at the deepest placed bubble; the C1 trend is read on the shells that carry bubbles.",
    "The envelope constant C in the (2.64)-envelope entry is frozen at 1.",
)


class ConfigError(ValueError):
    """Rejected configuration (CLI exit code 3)."""


def parse_k(text: str) -> BackgroundK:
    """``const``, ``bump[:amp=..,r0=..,r1=..]`` or ``quadratic[:amp=..,R=..]``."""
    name, _, rest = text.partition(":")
    preset = {"const": "const", "bump": "flat_bump", "flat_bump": "flat_bump",
              "quadratic": "quadratic"}.get(name)
    if preset is None:
        raise ConfigError(f"unknown k preset {name!r}; expected const, bump:... or quadratic:...")
    params = {}
    for item in filter(None, rest.split(",")):
        key, eq, val = item.partition("=")
        if not eq:
            raise ConfigError(f"k parameter {item!r} is not of the form key=value")
        try:
            params[key.strip()] = float(val)
        except ValueError as exc:
            raise ConfigError(f"k parameter {key!r}: {exc}") from None
    return BackgroundK(preset, params)


@dataclass(frozen=True)
class PipelineConfig:
    n: int = 8
    m: int = 2
    N: int = 18
    eps: float = 0.5
    phi: str = "power:4"
    k: str = "const"
    probes: int = 10_000
    mc_samples: int = 512
    tol: float = 1e-4
    seed: int = 0
    report: str | None = None
    fields: str | None = None

    @property
    def dim(self) -> Dimensions:
        return Dimensions(self.n, self.m)

    @property
    def gauge(self) -> GaugePhi:
        return GaugePhi.parse(self.phi)

    @property
    def background(self) -> BackgroundK:
        return parse_k(self.k)

    def echo(self) -> dict:
        """The configuration as reported; output paths are left out so reports compare byte-for-byte."""
        d = asdict(self)
        d.pop("report")
        d.pop("fields")
        return d


def parse_config(values: dict | None = None, path: str | None = None) -> PipelineConfig:
    """Validate a config from keyword values, optionally layered over a JSON file."""
    merged: dict = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            merged.update(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    merged.update({k: v for k, v in (values or {}).items() if v is not None})
    known = set(PipelineConfig.__dataclass_fields__)
    unknown = sorted(set(merged) - known)
    if unknown:
        raise ConfigError(f"unknown config keys {unknown}")
    cfg = PipelineConfig(**merged)
    if cfg.n < 2 * cfg.m + 4:
        raise ConfigError(f"n={cfg.n}, m={cfg.m} violates the hypothesis n >= 2m + 4 "
                          "required for the construction")
    try:
        cfg.dim, cfg.background
        gauge = cfg.gauge
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if gauge.preset == "power" and gauge.q <= 0:
        raise ConfigError("power gauge needs q > 0")
    if not 0 < cfg.eps < 1:
        raise ConfigError(f"epsilon must lie in (0, 1), got {cfg.eps}")
    if cfg.N < 1:
        raise ConfigError("need at least one bubble")
    if cfg.probes < 1 or cfg.mc_samples < 16:
        raise ConfigError("probes must be >= 1 and mc-samples >= 16")
    if not 0 < cfg.tol < 1:
        raise ConfigError("tol must lie in (0, 1)")
    return cfg


def stage_seeds(seed: int) -> dict:
    """Independent integer seeds per stage from one master seed."""
    names = ("ring", "probes", "picard")
    kids = np.random.SeedSequence(seed).spawn(len(names))
    return {n: int(k.generate_state(1)[0]) for n, k in zip(names, kids)}


# ----------------------------------------------------------------- ledger

@dataclass
class Check:
    name: str
    margin: float
    ok: bool | None = None
    witness: object = None

    def passed(self) -> bool:
        return bool(self.margin > 0) if self.ok is None else bool(self.ok)


def _log_ratio(a: float, b: float) -> float:
    """log(a/b) for positive a; b = 0 gives +inf."""
    if b <= 0:
        return math.inf
    return math.log(a) - math.log(b)


class Ledger:
    def __init__(self):
        self.checks: dict[str, list[Check]] = {label: [] for label in LEDGER_LABELS}

    def add(self, label: str, check: Check) -> None:
        if label not in self.checks:
            raise KeyError(f"{label!r} is not a ledger label")
        self.checks[label].append(check)

    def add_family(self, margins: dict) -> None:
        for key, val in sorted(margins.items()):
            head = key.split(" ")[0]
            label = _FOLD.get(head, head)
            self.add(label, Check(key, float(val)))

    def entries(self) -> list:
        out = []
        for label, checks in self.checks.items():
            if not checks:
                out.append({"label": label, "status": "missing", "margin": None,
                            "checks": [], "witnesses": []})
                continue
            ok = all(c.passed() for c in checks)
            out.append({
                "label": label,
                "status": "pass" if ok else "fail",
                "margin": min(c.margin for c in checks),
                "checks": [{"name": c.name, "margin": c.margin,
                            "status": "pass" if c.passed() else "fail"} for c in checks],
                "witnesses": [{"check": c.name, "at": c.witness} for c in checks
                              if c.witness is not None and not c.passed()],
            })
        return out


# ----------------------------------------------------------------- run

@dataclass
class RunResult:
    report: dict
    bundle: SolutionBundle | None = None
    probes: Points | None = None
    groups: dict = field(default_factory=dict)
    kvals: object = None

    @property
    def passed(self) -> bool:
        return self.report["status"] == "pass"


def _shell_of(log_norm: np.ndarray) -> np.ndarray:
    return np.floor(-log_norm / math.log(2)).astype(int)


def run_pipeline(cfg: PipelineConfig) -> RunResult:
    timings: dict = {}
    t0 = time.perf_counter()
    seeds = stage_seeds(cfg.seed)
    ledger = Ledger()
    report: dict = {"schema_version": SCHEMA_VERSION, "config": cfg.echo(), "seed": cfg.seed,
                    "seeds": seeds, "deviations": list(DEVIATIONS)}
    result = RunResult(report)

    def lap(name):
        nonlocal t0
        now = time.perf_counter()
        timings[name] = now - t0
        t0 = now

    stage = "normalize"
    try:
        dim, gauge = cfg.dim, cfg.gauge
        k_orig = cfg.background
        k, delta = normalize_background(k_orig, cfg.eps)
        lap(stage)

        stage = "geometry"
        g = choose_geometry(k, delta, dim, cfg.eps)
        report["geometry"] = g.to_dict()
        if cfg.N < g.i0 + 1:
            report["truncation_note"] = f"N={cfg.N} stops inside the first ring (i0={g.i0})"
        lap(stage)

        stage = "tighten"
        fam = tighten_sequences(g, cfg.N, gauge, seed=seeds["ring"])
        ledger.add_family(fam.margins)
        if cfg.N <= g.i0:
            for label in ("(2.33)", "(2.34)", "(2.35)"):
                ledger.add(label, Check("no dyadic bubbles: vacuous", math.inf))
        famd = family_to_dict(fam)
        report["family"] = famd["records"]
        report["comparability"] = verify_sim_ratios(fam)
        diagnostics = dict(famd["diagnostics"])
        lap(stage)

        stage = "supersolution"
        ctx = Context(fam, k)
        pts, groups = standard_probes(fam, cfg.probes, seeds["probes"])
        result.probes, result.groups = pts, groups
        pg = PointGeometry.of(ctx, pts, units=False)
        vb = vbar_checks(SolutionBundle(ctx, None, k_orig), pg)
        ledger.add("(2.40)", Check("I_2m Mbar < w/2", vb["IMbar_below_half_w"]))
        ledger.add("(2.43)", Check("vbar < w", vb["vbar_below_w"]))
        # vbar - w/(2b) = I_2m Mbar is ~1e-123 of w for the flagship: report it relative, not in log
        excess = math.exp(vb["vbar_above_w_over_2b_log_excess"])
        ledger.add("(2.43)", Check("vbar > w/(2b), relative excess", excess,
                                   ok=math.isfinite(vb["vbar_above_w_over_2b_log_excess"])))
        sc = check_supersolution(ctx, pts)
        ledger.add("(2.49)", Check(f"L vbar >= H(x, v) on {sc['count']} (probe, level) pairs",
                                   sc["min_margin"], witness=sc.get("witness_point")))
        lap(stage)

        stage = "picard"
        pcfg = PicardConfig(tol=cfg.tol, groups=8, group_size=max(cfg.mc_samples // 8, 2),
                            seed=seeds["picard"])
        pr = solve_u0_picard(ctx, pts, pcfg)
        ledger.add("(2.51)-sandwich", Check(f"converged to tol {cfg.tol:g} within {pcfg.max_iter} iterates",
                                            _log_ratio(cfg.tol, pr.history[-1]["rel_change"]),
                                            ok=pr.converged))
        ledger.add("(2.51)-sandwich", Check("v_k <= v_(k+1) within 3 MC error bars", -pr.worst_monotone,
                                            ok=pr.monotone))
        ledger.add("(2.51)-sandwich", Check("v_k <= vbar", -pr.worst_vbar, ok=pr.below_vbar))
        diagnostics["picard iterations"] = pr.iterations
        diagnostics["picard history"] = pr.history
        lap(stage)

        stage = "assemble"
        bundle = SolutionBundle(ctx, pr.field, k_orig, pr)
        result.bundle = bundle
        ledger.add("(2.30)", Check("u_i <= eps_i a^e w off B_rho_i", tail_envelope(bundle, pg)))
        ke = eval_K(bundle, pts)
        result.kvals = ke
        sw = sandwich(ke, 2 * cfg.tol)
        ledger.add("(2.56)", Check("K - kappa >= -2 tol", sw["min_K_minus_kappa"] + sw["tol"]))
        ledger.add("(2.56)", Check("k - K >= -2 tol", sw["min_k_minus_K"] + sw["tol"]))
        ledger.add("(2.56)", Check("exact order kappa <= K <= k (violations)",
                                   0.0 - sw["exact_order_violations"],
                                   ok=sw["exact_order_violations"] == 0))
        far = pg.log_norm >= math.log(2 * g.delta1)
        mism = int(np.sum(far & ((ke.K.log_k != ke.k.log_k) | ke.capped)))
        ledger.add("(2.56)", Check(f"K = k exactly for |x| >= 2 delta1 ({int(far.sum())} probes, mismatches)",
                                   0.0 - mism, ok=mism == 0))
        lap(stage)

        stage = "S"
        S = locate_S(bundle, ke)
        fl = s_floor(bundle, ke, S)
        tmax = float(np.max(S.log_t)) if len(S.index) else -math.inf
        lab = "(2.58)/(2.59)/(2.62)"
        ledger.add(lab, Check("S inside the union of B_2rho", math.log(2) - tmax, ok=S.inside_2rho))
        ledger.add(lab, Check("S inside the union of B_rho", -tmax, ok=S.inside_rho))
        ledger.add(lab, Check("u_j > w(0) on S", fl["min_log_uj_minus_log_w0"]))
        ledger.add(lab, Check("power-sum ratio < k_j^((n+2m)/(4m)) on S", -fl["max_power_ratio_log"]))
        off = np.flatnonzero(~ke.capped)
        dich = gradient_dichotomy(bundle, pts.subset(off), eval_K(bundle, pts.subset(off)))
        ledger.add(lab, Check(f"finite-difference grad K = grad kappa off S ({dich['count']} probes)",
                              _log_ratio(1e-6, dich["max_rel_error"]), ok=dich["ok"]))
        diagnostics["S probes"] = int(len(S.index))
        diagnostics["S extents log"] = {str(j): v for j, v in sorted(S.extents_log.items())}
        diagnostics["S floor log C"] = fl["log_C_floor"]
        lap(stage)

        stage = "C1"
        c1 = verify_C1(bundle, pts, ke, S, cfg.eps)
        tr = c1["trend"]
        deepest_probe = int(np.max(_shell_of(pg.log_norm[np.isfinite(pg.log_norm)])))
        reaches = tr["deepest"] is not None and tr["deepest"] >= min(deepest_probe, max(tr["shells"]))
        ledger.add("(2.64)-envelope", Check("|grad K| <= C (M_j^-(m+2)/(4m(m+1)) + lambda_j^(1/8)) on S",
                                            c1["envelope"]["min_margin"]))
        ledger.add("(2.64)-envelope", Check("strictly decreasing shell sup|grad K| run (>= 6, to deepest)",
                                            float(tr["final_run"] - 5), ok=tr["final_run"] >= 6 and reaches))
        ledger.add("(2.64)-envelope", Check(f"||K - k||_C1 < eps = {cfg.eps:g}",
                                            _log_ratio(cfg.eps, c1["C1_distance"]), ok=c1["C1_ok"]))
        diagnostics["shell trend"] = {"shells": tr["shells"], "log_sup_grad_K": tr["log_sup"],
                                      "final_run": tr["final_run"], "deepest": tr["deepest"]}
        diagnostics["C1 distance"] = c1["C1_distance"]
        lap(stage)

        stage = "conclusions"
        bu = blow_up(bundle, gauge)
        ledger.add("(1.14)blow-up", Check(f"u(x_i) > i phi(|x_i|), phi = {cfg.phi}", bu["min_margin"],
                                          witness=int(np.argmin(bu["margins"])) + 1))
        dc = decay(bundle, pts.subset(groups["far_field"]))
        ledger.add("(1.15)decay", Check("|x|^(n-2m) u within a factor 4 of the coefficient sum",
                                        math.log(4) - abs(math.log(dc["max_ratio"])), ok=dc["ok"]))
        sg = signs(bundle)
        ledger.add("(1.16)signs", Check("(-Delta)^s w has positive coefficients, 1 <= s <= m",
                                        1.0 if sg["coefficients_positive"] else -1.0))
        ledger.add("(1.16)signs", Check("H(x, u0) >= 0 at every node", 1.0 if sg["ok"] else -1.0))
        report["conclusions"] = {"blow_up": bu, "decay": dc, "signs": sg}
        diagnostics["blow-up margins increasing"] = bu["increasing"]
        lap(stage)

        stage = "pullback"
        sel = np.concatenate([groups["centers"], groups["origin_approach"]])
        sp = sphere_pullback(bundle, pts.subset(sel))
        report["sphere"] = {
            "count": int(len(sp.xi)),
            "max_unit_error": float(np.max(np.abs(np.linalg.norm(sp.xi, axis=1) - 1))),
            "log10_v_at_centers": (sp.log_v[:fam.N] / math.log(10)).tolist(),
        }
        lap(stage)
        report["status"] = "pass"
    except (ConstructionError, CancellationError) as exc:
        report["status"] = "incomplete"
        report["error"] = {"stage": stage, "message": str(exc)}
        diagnostics = locals().get("diagnostics", {})
    report["ledger"] = ledger.entries()
    report["diagnostics"] = diagnostics
    failed = [e["label"] for e in report["ledger"] if e["status"] != "pass"]
    report["failures"] = failed
    if report["status"] == "pass" and failed:
        report["status"] = "fail"
    report["timings"] = timings
    return result


# ----------------------------------------------------------------- output

def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def report_text(report: dict, timings: bool = True) -> str:
    body = dict(report)
    if not timings:
        body.pop("timings", None)
    return json.dumps(_clean(body), indent=2, sort_keys=False, allow_nan=False) + "\n"


def emit_report(report: dict, path, timings: bool = True) -> None:
    Path(path).write_text(report_text(report, timings))


def write_csv(path, header: list, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in rows:
            wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _l10(x):
    return np.asarray(x, dtype=float) / math.log(10)


def field_rows(bundle: SolutionBundle, pts: Points):
    """log10 u, log10 K, log10(1 - K) and log10 |grad K| at the points."""
    if len(pts) == 0:
        return np.zeros((0, 4))
    ke = eval_K(bundle, pts)
    lu, _ = eval_u(bundle, pts)
    lg = grad_K(bundle, pts, ke)
    return np.stack([_l10(lu), _l10(ke.K.log_k), _l10(ke.K.log_1mk), _l10(lg)], axis=1)


def emit_fields(result: RunResult, directory) -> list:
    """Write u0 probes, rays through the centers, dyadic shells and sphere samples as CSV."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    bundle = result.bundle
    cols = ["log10_u", "log10_K", "log10_1mK", "log10_grad_K"]
    written = []
    if bundle is None:
        return written
    fam = bundle.fam
    n = fam.dim.n
    bundle.picard.probes.to_csv(out / "u0_probes.csv", fam.log_rho)
    written.append(out / "u0_probes.csv")

    s = np.linspace(-3.0, 3.0, 61)
    rays, meta = [], []
    for j in range(fam.N):
        e = fam.centers.x[j] / np.linalg.norm(fam.centers.x[j])
        rays.append(Points.around(fam.centers, j, s[:, None] * e[None, :]))
        meta += [(j + 1, float(v)) for v in s]
    ray_pts = Points.concat(rays) if rays else Points.free(np.zeros((0, n)))
    vals = field_rows(bundle, ray_pts)
    write_csv(out / "rays.csv", ["bubble", "offset_over_rho"] + cols,
              ([a, b] + list(v) for (a, b), v in zip(meta, vals)))
    written.append(out / "rays.csv")

    sh = result.groups.get("dyadic_shells", np.zeros(0, dtype=int))
    sp = result.probes.subset(sh)
    vals = field_rows(bundle, sp)
    ln = sp.log_norm(fam.log_rho) if len(sp) else np.zeros(0)
    write_csv(out / "shells.csv", ["shell", "log10_norm"] + cols,
              ([int(t), float(a)] + list(v) for t, a, v in zip(_shell_of(ln), _l10(ln), vals)))
    written.append(out / "shells.csv")

    sel = np.concatenate([result.groups["centers"], result.groups["origin_approach"]])
    sample = sphere_pullback(bundle, result.probes.subset(sel))
    write_csv(out / "sphere.csv", [f"xi{i}" for i in range(n + 1)] + ["log10_v"],
              (list(map(float, xi)) + [float(lv)] for xi, lv in zip(sample.xi, _l10(sample.log_v))))
    written.append(out / "sphere.csv")
    return written
