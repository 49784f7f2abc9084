"""Pipeline stages: each reads its inputs (raw files or upstream artifacts),
writes CSV artifacts plus a ``manifest.json`` into its own directory under
the work directory.

Artifacts carry no wall-clock information and floats are written with
``repr``, so reruns with the same inputs and seed are byte-identical.
"""
from __future__ import annotations

import csv
import hashlib
import json
import zlib
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bayes.diagnostics import split_cells
from .bayes.sampler import MCMCConfig, ModelData, PosteriorDraws, fit as fit_model, posterior_dic
from .config import PipelineConfig
from .ingest import (Grid, SpaceTimeField, StrikeSet, aggregate_gauges, align_satellite,
                     bin_lightning, filter_gauges, format_instant, load_gauges, load_lightning,
                     load_satellite)
from .meanfield import MeanContext, MeanModel
from .predict import covered, predictive_draws, summarize
from .rlr import (C_STAR, RlrEstimate, correction_factors, evaluate_reconstruction, rlr_by_class,
                  tapia_reconstruct)
from .scan import ConvectiveEvent, detect_events, smoothed_peak, summarize_event
from .synth import LARGE_CLASS_Z
from .verify import baseline_compare, hourly_totals, report

STAGES = ("ingest", "scan", "rlr", "meanfield", "fit", "predict", "verify")
UNDEFINED = "undefined"


class MissingArtifact(ValueError):
    def __init__(self, path, stage: str):
        super().__init__(f"missing artifact {path}; run the '{stage}' stage first")
        self.stage = stage


# ---------------------------------------------------------------------------
# small I/O helpers


def _cell(v) -> str:
    if v is None:
        return UNDEFINED
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])


def read_csv(path: Path, stage: str) -> list[dict]:
    if not path.exists():
        raise MissingArtifact(path, stage)
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def stage_seed(root: int, name: str) -> int:
    """Deterministic child seed for a named stage (or stage/variant)."""
    ss = np.random.SeedSequence([int(root), zlib.crc32(name.encode())])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _float(text: str) -> float:
    return float("nan") if text in ("", UNDEFINED) else float(text)


class Stage:
    """Book-keeping for one stage's inputs and outputs."""

    def __init__(self, name: str, cfg: PipelineConfig, workdir):
        self.name = name
        self.cfg = cfg
        self.workdir = Path(workdir)
        self.dir = self.workdir / name
        self.dir.mkdir(parents=True, exist_ok=True)
        self.inputs: dict[str, str] = {}
        self.outputs: list[Path] = []
        self.extra: dict = {}

    def raw_input(self, key: str) -> Path:
        p = self.cfg.path(key)
        if not p.exists():
            raise FileNotFoundError(f"input file not found: {p}")
        self.inputs[getattr(self.cfg, key)] = sha256(p)
        return p

    def artifact(self, stage: str, rel: str) -> Path:
        p = self.workdir / stage / rel
        if not p.exists():
            raise MissingArtifact(p, stage)
        self.inputs[f"{stage}/{rel}"] = sha256(p)
        return p

    def write(self, rel: str, header, rows) -> Path:
        p = self.dir / rel
        write_csv(p, header, rows)
        self.outputs.append(p)
        return p

    def finish(self) -> Path:
        manifest = {
            "stage": self.name,
            "seed": self.cfg.seed,
            "config": self.cfg.echo(),
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": {str(p.relative_to(self.workdir)): sha256(p) for p in sorted(self.outputs)},
        }
        manifest.update(self.extra)
        p = self.dir / "manifest.json"
        p.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return p


# ---------------------------------------------------------------------------
# field (de)serialization


def _field_rows(values: np.ndarray, grid: Grid):
    T, n = values.shape
    rows, cols = grid.rowcol(np.arange(n))
    for t in range(T):
        for p in range(n):
            yield (t, int(rows[p]), int(cols[p]), float(values[t, p]))


def _read_field(path: Path, column: str, T: int, grid: Grid, stage: str) -> np.ndarray:
    rows = read_csv(path, stage)
    out = np.full((T, grid.n_cells), np.nan)
    for r in rows:
        t = r["t"] if "t" in r else r["hour"]
        out[int(t), int(grid.flat(int(r["row"]), int(r["col"])))] = _float(r[column])
    return out


def _hours(cfg: PipelineConfig) -> int:
    return max(1, cfg.T * cfg.dt_min // 60)


def _load_fields(st: Stage):
    cfg, grid = st.cfg, st.cfg.grid()
    L = _read_field(st.artifact("ingest", "lightning_counts.csv"), "count", cfg.T, grid, "ingest")
    G = _read_field(st.artifact("ingest", "gauge_field.csv"), "rain_mm", cfg.T, grid, "ingest")
    S = _read_field(st.artifact("ingest", "satellite_field.csv"), "rain_mm", _hours(cfg), grid, "ingest")
    return L, G, S


# ---------------------------------------------------------------------------
# stages


def run_ingest(cfg: PipelineConfig, workdir) -> Path:
    st = Stage("ingest", cfg, workdir)
    grid, t0, dt, T = cfg.grid(), cfg.t0_seconds, cfg.dt_min, cfg.T
    strikes = load_lightning(st.raw_input("lightning"))
    readings = load_gauges(st.raw_input("gauges"))
    sat = load_satellite(st.raw_input("satellite"))

    L = bin_lightning(strikes, grid, t0, dt, T)
    kept = filter_gauges(readings, cfg.max_missing_frac, t0, T, dt)
    G = aggregate_gauges(kept, grid, t0, dt, T)
    S = align_satellite(sat, grid, t0, _hours(cfg))

    st.write("lightning_counts.csv", ("t", "row", "col", "count"),
             ((t, r, c, int(v)) for t, r, c, v in _field_rows(L.values, grid)))
    st.write("gauge_field.csv", ("t", "row", "col", "rain_mm"), _field_rows(G.values, grid))
    st.write("satellite_field.csv", ("hour", "row", "col", "rain_mm"),
             ((h, r, c, v) for h, r, c, v in _field_rows(S.values, grid)))
    stations_in = sorted({r.station_id for r in readings})
    stations_kept = sorted({r.station_id for r in kept})
    st.write("summary.csv", ("key", "value"), [
        ("strikes", len(strikes)),
        ("strikes_dropped", L.dropped),
        ("stations", len(stations_in)),
        ("stations_kept", len(stations_kept)),
        ("stations_dropped", ";".join(sorted(set(stations_in) - set(stations_kept)))),
        ("gauged_cells", int(np.count_nonzero(~np.all(np.isnan(G.values), axis=0)))),
        ("satellite_missing", int(np.count_nonzero(np.isnan(S.values)))),
    ])
    return st.finish()


def run_scan(cfg: PipelineConfig, workdir) -> Path:
    st = Stage("scan", cfg, workdir)
    strikes = load_lightning(st.raw_input("lightning"))
    events, labels = detect_events(strikes, cfg.grid(), cfg.scan_config(), cfg.dt_min)
    st.write("events.csv",
             ("event_id", "t_start", "t_end", "count", "class", "T_ch", "v1", "v2", "v",
              "area_km2", "centroid_x", "centroid_y"),
             ((e.id, format_instant(e.t_start), format_instant(e.t_end), e.count, e.event_class.value,
               None if e.T_ch is None else format_instant(e.T_ch), e.v1, e.v2, e.v, e.area_km2,
               e.centroid[0], e.centroid[1]) for e in events))
    st.write("event_members.csv", ("event_id", "strike_index"),
             ((e.id, int(i)) for e in events for i in e.strike_index))
    st.write("strike_labels.csv", ("strike_index", "timestamp", "x_m", "y_m", "event_id"),
             ((i, format_instant(s.timestamp), s.x, s.y, int(labels[i])) for i, s in enumerate(strikes)))
    return st.finish()


def _load_events(st: Stage, strikes: StrikeSet) -> list[ConvectiveEvent]:
    members: dict[int, list[int]] = {}
    for r in read_csv(st.artifact("scan", "event_members.csv"), "scan"):
        members.setdefault(int(r["event_id"]), []).append(int(r["strike_index"]))
    grid = st.cfg.grid()
    out = []
    for eid in sorted(members):
        idx = np.array(members[eid], dtype=np.int64)
        out.append(summarize_event(eid, strikes.subset(idx), idx, grid, st.cfg.dt_min))
    return out


def _dominant(events: list[ConvectiveEvent]) -> ConvectiveEvent | None:
    if not events:
        return None
    return max(events, key=lambda e: (e.count, -e.id))


def run_rlr(cfg: PipelineConfig, workdir) -> Path:
    st = Stage("rlr", cfg, workdir)
    grid = cfg.grid()
    strikes = load_lightning(st.raw_input("lightning"))
    st.artifact("scan", "events.csv")
    events = _load_events(st, strikes)
    _, G, S = _load_fields(st)
    t0 = cfg.t0_seconds
    hours = _hours(cfg)
    gauge_h = SpaceTimeField(t0, 60, hourly_totals(G, cfg.dt_min)[:hours])
    sat = SpaceTimeField(t0, 60, S)
    f1, f2 = correction_factors(gauge_h, sat)
    est = rlr_by_class(events, sat, grid, f1, f2, include_entire=True)
    st.write("rlr_by_class.csv", ("class", "median", "mean", "sd", "n_events"),
             ((e.event_class, e.median, e.mean, e.sd, e.n_events) for e in est.values()))
    st.write("correction.csv", ("f1", "f2", "product"), [(f1, f2, f1 * f2)])

    dom = _dominant(events)
    Z, source = choose_Z(cfg, est, dom)
    recon = tapia_reconstruct(strikes, Z, grid, t0, cfg.dt_min, cfg.T, mode="cell")
    st.write("reconstruction.csv", ("t", "row", "col", "rain_mm"), _field_rows(recon.values, grid))
    ev = evaluate_reconstruction(recon, SpaceTimeField(t0, cfg.dt_min, G))
    st.write("reconstruction_scores.csv", ("Z", "Z_source", "rmse_mm", "pod", "pofd", "n_occurrences"),
             [(Z, source, ev["rmse_mm"], ev["pod"], ev["pofd"], ev["n_occurrences"])])
    return st.finish()


def choose_Z(cfg: PipelineConfig, estimates: dict, dominant: ConvectiveEvent | None) -> tuple[float, str]:
    """Ratio used for C: explicit config, else the dominant event's class mean,
    else the pooled mean, else a typical Large-class value."""
    if cfg.Z is not None:
        return float(cfg.Z), "config"
    if dominant is not None:
        key = dominant.event_class.merged().value
        if key in estimates and estimates[key].mean > 0:
            return float(estimates[key].mean), f"class:{key}"
    if "Entire" in estimates and estimates["Entire"].mean > 0:
        return float(estimates["Entire"].mean), "class:Entire"
    return LARGE_CLASS_Z, "default"


def _context_rows(st: Stage) -> dict:
    rows = read_csv(st.artifact("meanfield", "context.csv"), "meanfield")
    return {r["key"]: r["value"] for r in rows}


def build_context(cfg: PipelineConfig, L: np.ndarray, info: dict) -> MeanContext:
    return MeanContext(L=L, grid=cfg.grid(), C=float(info["C"]), T_ch_index=int(info["T_ch_index"]),
                       dt_min=cfg.dt_min, v1=_float(info["v1"]), v2=_float(info["v2"]),
                       v=_float(info["v"]))


UNIT_PARAMS = {"a": 1.0, "b": 1.0, "b1": 1.0, "b2": 1.0}


def run_meanfield(cfg: PipelineConfig, workdir) -> Path:
    st = Stage("meanfield", cfg, workdir)
    grid = cfg.grid()
    strikes = load_lightning(st.raw_input("lightning"))
    st.artifact("scan", "events.csv")
    events = _load_events(st, strikes)
    rows = read_csv(st.artifact("rlr", "rlr_by_class.csv"), "rlr")
    est = {r["class"]: RlrEstimate(r["class"], _float(r["median"]), _float(r["mean"]), _float(r["sd"]),
                                   int(r["n_events"]), float("nan"), float("nan")) for r in rows}
    L, _, _ = _load_fields(st)
    dom = _dominant(events)
    Z, source = choose_Z(cfg, est, dom)
    dt = cfg.dt_min * 60
    if dom is not None and dom.T_ch is not None:
        T_ch_index = int(min(max((dom.T_ch - cfg.t0_seconds) // dt, 0), cfg.T - 1))
    else:
        total = L.sum(axis=1)
        T_ch_index = smoothed_peak(total) if total.size >= 3 else 0
    info = {
        "Z": Z,
        "Z_source": source,
        "C": C_STAR / grid.cell_area_m2 * Z,
        "T_ch_index": T_ch_index,
        "dominant_event": None if dom is None else dom.id,
        "v1": float("nan") if dom is None else dom.v1,
        "v2": float("nan") if dom is None else dom.v2,
        "v": float("nan") if dom is None else dom.v,
    }
    st.write("context.csv", ("key", "value"), list(info.items()))
    ctx = build_context(cfg, L, {k: _cell(v) for k, v in info.items()})
    for mv in cfg.mean_variants():
        mu = MeanModel(mv, ctx)({k: UNIT_PARAMS[k] for k in mv.param_names})
        st.write(f"mu_{mv.name}.csv", ("t", "row", "col", "mu"), _field_rows(mu, grid))
    return st.finish()


def _split(st: Stage, G: np.ndarray):
    gauged = np.flatnonzero(~np.all(np.isnan(G), axis=0))
    return split_cells(gauged, st.cfg.val_fraction, stage_seed(st.cfg.seed, "split"))


PARAM_ORDER = ("alpha", "prec_eta", "prec_s", "rho_s", "prec_y", "a", "b", "b1", "b2")


def run_fit(cfg: PipelineConfig, workdir) -> Path:
    st = Stage("fit", cfg, workdir)
    grid = cfg.grid()
    L, G, _ = _load_fields(st)
    ctx = build_context(cfg, L, _context_rows(st))
    train, val = _split(st, G)
    rr, cc = grid.rowcol(np.arange(grid.n_cells))
    role = np.full(grid.n_cells, "ungauged", dtype=object)
    role[train], role[val] = "train", "validation"
    st.write("split.csv", ("cell", "row", "col", "role"),
             ((p, int(rr[p]), int(cc[p]), role[p]) for p in range(grid.n_cells)))
    obs = np.full_like(G, np.nan)
    obs[:, train] = G[:, train]
    B = grid.adjacency(2)
    seeds = {}
    for mv in cfg.mean_variants():
        model = MeanModel(mv, ctx)
        data = ModelData(obs, B, model, cfg.discretization())
        mcfg = replace(cfg.mcmc(), seed=stage_seed(cfg.seed, f"fit:{mv.name}"))
        draws = fit_model(data, cfg.priors(), mcfg, variant=mv.name)
        seeds[mv.name] = {"mcmc_seed": mcfg.seed, "chain_seeds": draws.chain_seeds}
        _write_draws(st, mv.name, draws)
        d = posterior_dic(draws, data)
        st.write(f"{mv.name}/dic.csv", ("dic", "pD", "Dbar", "Dhat"), [(d["dic"], d["pD"], d["Dbar"], d["Dhat"])])
        summ = draws.summary()
        cols = ("mean", "sd", "2.5%", "25%", "50%", "75%", "97.5%", "Rhat", "n_eff")
        st.write(f"{mv.name}/summary.csv", ("param",) + cols,
                 ((k,) + tuple(summ[k][c] for c in cols) for k in list(draws.params) + ["deviance"]))
        st.write(f"{mv.name}/acceptance.csv", ("param", "chain", "rate"),
                 ((k, c, r) for k, v in sorted(draws.acceptance.items()) for c, r in enumerate(v)))
    st.extra["seeds"] = seeds
    return st.finish()


def _write_draws(st: Stage, name: str, draws: PosteriorDraws) -> None:
    names = [k for k in PARAM_ORDER if k in draws.params]
    st.write(f"{name}/draws.csv", ("chain", "iter", "param", "value"), _draw_rows(draws, names))
    T, n = draws.Tt.shape[-1], draws.Sp.shape[-1]
    header = ("chain", "iter") + tuple(f"Tt[{t}]" for t in range(T)) + tuple(f"Sp[{p}]" for p in range(n))
    st.write(f"{name}/effects.csv", header,
             ((c, j) + tuple(draws.Tt[c, j]) + tuple(draws.Sp[c, j])
              for c in range(draws.n_chains) for j in range(draws.n_kept)))


def _draw_rows(draws: PosteriorDraws, names):
    for c in range(draws.n_chains):
        for j in range(draws.n_kept):
            for k in names:
                yield (c, j, k, draws.params[k][c, j])
            yield (c, j, "deviance", draws.deviance[c, j])


def load_draws(st: Stage, name: str, T: int, n: int) -> PosteriorDraws:
    rows = read_csv(st.artifact("fit", f"{name}/draws.csv"), "fit")
    chains = 1 + max(int(r["chain"]) for r in rows)
    kept = 1 + max(int(r["iter"]) for r in rows)
    vals: dict[str, np.ndarray] = {}
    for r in rows:
        arr = vals.setdefault(r["param"], np.full((chains, kept), np.nan))
        arr[int(r["chain"]), int(r["iter"])] = float(r["value"])
    dev = vals.pop("deviance")
    eff = st.artifact("fit", f"{name}/effects.csv")
    E = np.loadtxt(eff, delimiter=",", skiprows=1, ndmin=2)
    Tt = E[:, 2:2 + T].reshape(chains, kept, T)
    Sp = E[:, 2 + T:2 + T + n].reshape(chains, kept, n)
    return PosteriorDraws(params=vals, Tt=Tt, Sp=Sp, deviance=dev,
                          config=MCMCConfig(chains=chains, iterations=kept, burnin=0, thin=1),
                          chain_seeds=[], variant=name)


def _pct(level: float) -> str:
    return f"{100 * level:g}"


def run_predict(cfg: PipelineConfig, workdir) -> Path:
    st = Stage("predict", cfg, workdir)
    grid = cfg.grid()
    L, _, _ = _load_fields(st)
    ctx = build_context(cfg, L, _context_rows(st))
    T, n = cfg.T, grid.n_cells
    tt, pp = np.meshgrid(np.arange(T), np.arange(n), indexing="ij")
    targets = np.column_stack([tt.ravel(), pp.ravel()])
    rr, cc = grid.rowcol(targets[:, 1])
    q = _pct(cfg.level)
    for mv in cfg.mean_variants():
        draws = load_draws(st, mv.name, T, n)
        samples = predictive_draws(draws, targets, MeanModel(mv, ctx), seed=stage_seed(cfg.seed, f"predict:{mv.name}"))
        s = summarize(samples, cfg.level, targets)
        st.write(f"{mv.name}/predictions.csv",
                 ("t", "row", "col", "mean_mm", "sd_mm", f"lo{q}_mm", f"hi{q}_mm", "median_mm"),
                 zip(targets[:, 0], rr, cc, s.mm_mean, s.mm_sd, s.mm_lower, s.mm_upper, s.mm_median))
        st.write(f"{mv.name}/predictions_log.csv",
                 ("t", "row", "col", "mean", "sd", f"lo{q}", f"hi{q}"),
                 zip(targets[:, 0], rr, cc, s.log_mean, s.log_sd, s.log_lower, s.log_upper))
    return st.finish()


def run_verify(cfg: PipelineConfig, workdir) -> Path:
    st = Stage("verify", cfg, workdir)
    grid = cfg.grid()
    _, G, S = _load_fields(st)
    split_rows = read_csv(st.artifact("fit", "split.csv"), "fit")
    val = np.array([int(r["cell"]) for r in split_rows if r["role"] == "validation"], dtype=np.int64)
    gauged = np.array([int(r["cell"]) for r in split_rows if r["role"] != "ungauged"], dtype=np.int64)
    q = _pct(cfg.level)
    disc = cfg.discretization()
    reports, resid, vol, base = [], [], [], []
    hours = _hours(cfg)
    for mv in cfg.mean_variants():
        pred = {}
        for col in ("mean_mm", "median_mm"):
            pred[col] = _read_field(st.artifact("predict", f"{mv.name}/predictions.csv"), col, cfg.T, grid, "predict")
        lo = _read_field(st.artifact("predict", f"{mv.name}/predictions_log.csv"), f"lo{q}", cfg.T, grid, "predict")
        hi = _read_field(st.artifact("predict", f"{mv.name}/predictions_log.csv"), f"hi{q}", cfg.T, grid, "predict")
        dic_row = read_csv(st.artifact("fit", f"{mv.name}/dic.csv"), "fit")[0]
        obs = G[:, val]
        ok = ~np.isnan(obs)
        point = pred[f"{cfg.point}_mm"][:, val]
        ec = 100.0 * float(covered(lo[:, val][ok], hi[:, val][ok], obs[ok], disc).mean())
        rep = report(mv.name, point, obs, dic=float(dic_row["dic"]), ec_pct=ec, label="validation")
        reports.append(rep)

        # hourly comparison against the satellite product at gauged cells
        ph = hourly_totals(pred[f"{cfg.point}_mm"], cfg.dt_min)[:hours][:, gauged]
        gh = hourly_totals(G, cfg.dt_min)[:hours][:, gauged]
        sh = S[:hours][:, gauged]
        bc = baseline_compare(ph, sh, gh)
        okh = ~(np.isnan(ph) | np.isnan(sh) | np.isnan(gh))
        hh, pc = np.nonzero(okh)
        rows_, cols_ = grid.rowcol(gauged[pc])
        for src, res in (("model", bc["model_residuals"]), ("satellite", bc["satellite_residuals"])):
            resid.extend((mv.name, src, int(h), int(r), int(c), float(x))
                         for h, r, c, x in zip(hh, rows_, cols_, res))
        vr, vc = grid.rowcol(gauged[bc["cells"]])
        vol.extend((mv.name, int(r), int(c), float(a), float(b))
                   for r, c, a, b in zip(vr, vc, bc["model_volume_diff"], bc["satellite_volume_diff"]))
        base.append((mv.name, bc["model_median"], bc["model_variance"], bc["satellite_median"],
                     bc["satellite_variance"], int(okh.sum())))

    st.write("report.csv", ("variant", "dic", "ec", "poht", "pod", "pofd", "rmse", "hss"),
             ((r.variant, r.dic, r.ec_pct, r.poht_pct, r.pod_pct, r.pofd_pct, r.rmse_mm, r.hss) for r in reports))
    st.write("residuals.csv", ("variant", "source", "hour", "row", "col", "residual_mm"), resid)
    st.write("volume_diff.csv", ("variant", "row", "col", "model_mm", "satellite_mm"), vol)
    st.write("baseline_summary.csv",
             ("variant", "model_median", "model_variance", "satellite_median", "satellite_variance", "n_pairs"),
             base)
    st.extra["validation_cells"] = int(val.size)
    return st.finish()


RUNNERS = {
    "ingest": run_ingest,
    "scan": run_scan,
    "rlr": run_rlr,
    "meanfield": run_meanfield,
    "fit": run_fit,
    "predict": run_predict,
    "verify": run_verify,
}


def run_all(cfg: PipelineConfig, workdir) -> list[Path]:
    return [RUNNERS[s](cfg, workdir) for s in STAGES]
