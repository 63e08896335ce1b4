"""Experiment pipeline: simulate -> window -> train -> calibrate -> evaluate.

Every stage writes its artifact plus a cache key derived from the relevant
configuration slice; re-running with the same spec and seed reuses artifacts
byte-for-byte (stage idempotency), and variants that share a trained model
(iqpt / evt-iqpt / cevt-iqpt) reuse the same checkpoint.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import ra, tailcal, windowing
from .config import ConfigError, spec_to_dict
from .model import baselines as bl
from .model import network
from .model.train import train
from .scenario import simulate
from .split import (InProcessChannel, merge, partition, split_train)
from .split.partition import SplitPartition


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


def _hash(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def _file_hash(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _key_path(out, stage):
    return Path(out) / f".{stage}.key"


def _cached(out, stage, key):
    p = _key_path(out, stage)
    return p.exists() and p.read_text() == key


def _mark(out, stage, key):
    _key_path(out, stage).write_text(key)


# ------------------------------------------------------------------- stages

def stage_simulate(spec, out):
    out = Path(out)
    key = _hash({"dep": spec_to_dict(spec.deployment),
                 "traffic": spec_to_dict(spec.traffic),
                 "channel": spec_to_dict(spec.channel),
                 "mobility": spec.mobility, "n_cycles": spec.n_cycles})
    trace_csv = out / "trace.csv"
    if _cached(out, "simulate", key) and trace_csv.exists():
        return _load_trace(out)
    trace = simulate.simulate_trace(spec.deployment, spec.traffic, spec.channel,
                                    spec.n_cycles, mobility=spec.mobility)
    simulate.write_trace_csv(trace, trace_csv)
    np.savez(out / "trace_arrays.npz", true_power=trace.true_power,
             est_power=trace.est_power, signal_power=trace.signal_power,
             noise_power=trace.noise_power, est_noise_std=trace.est_noise_std,
             seed=trace.seed)
    _mark(out, "simulate", key)
    return trace


def _load_trace(out):
    arrays = np.load(Path(out) / "trace_arrays.npz")
    meta = json.loads((Path(out) / "trace.json").read_text())
    return simulate.InterferenceTrace(
        true_power=arrays["true_power"], est_power=arrays["est_power"],
        signal_power=arrays["signal_power"],
        noise_power=float(arrays["noise_power"]),
        est_noise_std=float(arrays["est_noise_std"]),
        seed=int(arrays["seed"]), meta=meta)


def stage_prepare(spec, out, trace):
    out = Path(out)
    key = _hash({"sim": _key_path(out, "simulate").read_text(),
                 "threshold": spec.corr_threshold, "max_lag": spec.max_lag,
                 "n_cal": spec.n_cal, "n_test": spec.n_test})
    if _cached(out, "prepare", key) and (out / "dataset.json").exists():
        return windowing.load_dataset(out / "dataset")
    # learning-domain dB floor: interference a decade below the receiver
    # noise floor is operationally irrelevant, and letting the raw 1e-20 W
    # trace clamp through would stretch the min-max range by ~80 dB
    floor_w = max(spec.channel.power_floor_w, trace.noise_power * 0.1)
    series = trace.est_dbm(floor=floor_w)
    window = windowing.stationary_interval(series, spec.corr_threshold,
                                           spec.max_lag)
    ds = windowing.restructure(series, window, spec.n_cal, spec.n_test)
    ds.threshold = spec.corr_threshold
    ds = windowing.normalize(ds)
    windowing.save_dataset(ds, out / "dataset")
    _mark(out, "prepare", key)
    return ds


def _model_cfg(spec, window):
    return replace(spec.model, n_series=spec.deployment.sa_pairs_per_sn,
                   window=window, alpha=spec.alpha)


def stage_train(spec, out, ds, split_mode=False):
    out = Path(out)
    cfg = _model_cfg(spec, ds.window)
    stem = out / ("model_split" if split_mode else "model")
    key = _hash({"prep": _key_path(out, "prepare").read_text(),
                 "model": spec_to_dict(cfg), "train": spec_to_dict(spec.train),
                 "split": split_mode})
    stage = "train_split" if split_mode else "train"
    if _cached(out, stage, key) and stem.with_suffix(".json").exists():
        params, cfg_loaded, _ = network.load_checkpoint(stem)
        return params, cfg_loaded
    tx, ty = ds.train()
    init = network.init_params(cfg, spec.train.seed)
    # warm-start each quantile head at its marginal target quantile; the
    # asymmetric pinball gradients otherwise overshoot and anneal slowly
    init["head.b"][:] = np.quantile(ty, 1.0 - cfg.alpha, axis=0)
    if split_mode:
        part = partition(init, cfg)
        clients, server, curve = split_train(part, tx, ty, spec.train,
                                             cfg.alpha, cfg.dropout,
                                             InProcessChannel())
        merged = SplitPartition(
            heads=[{"w": c.params["embed.w"], "b": c.params["embed.b"]}
                   for c in clients],
            body=server.params,
            tails=[{"w": c.params["head.w"], "b": c.params["head.b"]}
                   for c in clients], cfg=cfg)
        params = merge(merged)
    else:
        result = train(cfg, tx, ty, spec.train, params=init)
        params, curve = result.params, result.loss_curve
    network.save_checkpoint(stem, params, cfg, spec.train.seed, cfg.alpha,
                            extra={"normalization": {
                                "offset": ds.norm.offset.tolist(),
                                "scale": ds.norm.scale.tolist()}})
    with open(stem.parent / (stem.name + "_loss.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "pinball_loss"])
        w.writerows(enumerate(curve))
    _mark(out, stage, key)
    return params, cfg


def stage_calibrate(spec, out, ds, params, cfg):
    """EVT tail fits on training exceedances plus conformal scores."""
    out = Path(out)
    key = _hash({"train": _key_path(out, "train").read_text()
                 if _key_path(out, "train").exists() else "",
                 "beta": spec.beta, "varsigma": spec.varsigma})
    path = out / "calibration.json"
    tx, ty = ds.train()
    cx, cy = ds.calibration()
    thresholds_train = network.predict(params, cfg, tx)
    exceed = tailcal.collect_exceedances(ty, thresholds_train)
    tails = tuple(tailcal.gpd_fit(e) for e in exceed)
    record = tailcal.conformity_scores(network.predict(params, cfg, cx), cy,
                                       spec.beta)
    calibrated = tailcal.CalibratedTail(tails=tails, record=record,
                                        varsigma=spec.varsigma)
    fractions = [e.size / ty.shape[0] for e in exceed]
    tailcal.write_calibration_report(path, calibrated, fractions)
    _mark(out, "calibrate", key)
    return calibrated


# ----------------------------------------------------------- evaluate stage

def _dbm_to_w(dbm):
    return 10.0 ** (np.asarray(dbm) / 10.0) * 1e-3


def predictions_dbm(spec, out, trace, ds, variant):
    """Test-partition interference predictions in dBm for one variant.

    Baselines run on the interference-to-noise ratio in dB (power over the
    receiver noise floor, the link-adaptation convention); the two-tap
    average is invariant to that reference, the raw-correlation Wiener is
    not, which is its documented failure mode.
    """
    cycles = ds.test_label_cycles()
    noise_dbm = 10.0 * np.log10(trace.noise_power) + 30.0
    floor_w = max(spec.channel.power_floor_w, trace.noise_power * 0.1)
    inr = trace.est_dbm(floor=floor_w) - noise_dbm
    if variant == "genie":
        return trace.true_dbm()[:, cycles].T
    if variant == "moving-average":
        return noise_dbm + np.stack(
            [bl.moving_average_predict(inr[m], cycles)
             for m in range(inr.shape[0])], axis=1)
    if variant == "wiener":
        return noise_dbm + np.stack(
            [bl.wiener_predict(inr[m], cycles, order=ds.window)
             for m in range(inr.shape[0])], axis=1)

    split_mode = variant.endswith("-split")
    params, cfg = stage_train(spec, out, ds, split_mode=split_mode)
    sx, _ = ds.test()
    thresholds = network.predict(params, cfg, sx)
    if variant in ("iqpt", "iqpt-split"):
        return ds.norm.invert(thresholds)
    calibrated = stage_calibrate(spec, out, ds, params, cfg)
    if variant in ("evt-iqpt",):
        margins = np.array([tailcal.gpd_quantile(t, 1.0 - spec.varsigma)
                            for t in calibrated.tails])
        return ds.norm.invert(thresholds + margins)
    if variant in ("cevt-iqpt", "cevt-iqpt-split"):
        return ds.norm.invert(tailcal.calibrated_quantile(thresholds, calibrated))
    raise ConfigError(f"unknown predictor variant {variant!r}")


def stage_evaluate(spec, out, trace, ds, variant=None):
    """Coverage, width, and target-vs-achieved BLER rows for one variant."""
    out = Path(out)
    variant = variant or spec.variant
    cycles = ds.test_label_cycles()
    _, test_labels = ds.test()
    labels_dbm = ds.norm.invert(test_labels)

    pred_dbm = predictions_dbm(spec, out, trace, ds, variant)
    cov = ra.coverage_probability(pred_dbm, labels_dbm)
    width_db = ra.coverage_width(pred_dbm, labels_dbm)
    width_norm = ra.coverage_width(pred_dbm, labels_dbm, normalize=True)

    true_w = trace.true_power[:, cycles].T
    rows = ra.evaluate_ra(_dbm_to_w(pred_dbm), true_w, trace.signal_power,
                          trace.noise_power, spec.payload_bits,
                          spec.eps_targets)
    out_rows = []
    for row in rows:
        out_rows.append({
            "predictor": variant,
            "eps_target": row["eps_target"],
            "percentile_met": row["frac_met"],
            "mean_overhead": row["mean_overhead"],
            "cov_prob": float(cov.mean()),
            "cov_width": float(width_norm.mean()),
        })
    detail = {
        "variant": variant,
        "coverage_per_sa": cov.tolist(),
        "width_db_per_sa": width_db.tolist(),
        "width_norm_per_sa": width_norm.tolist(),
        "ra": rows,
    }
    return out_rows, detail


RESULT_FIELDS = ["predictor", "eps_target", "percentile_met", "mean_overhead",
                 "cov_prob", "cov_width"]


def _write_results(out, new_rows):
    """Merge rows into results.csv, replacing rows of the same predictor."""
    path = Path(out) / "results.csv"
    rows = []
    if path.exists():
        with open(path, newline="") as fh:
            rows = [r for r in csv.DictReader(fh)
                    if r["predictor"] not in {n["predictor"] for n in new_rows}]
    rows += [{k: str(v) for k, v in r.items()} for r in new_rows]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_FIELDS)
        writer.writeheader()
        writer.writerows(rows)
    return path


def run_pipeline(spec, out):
    """Execute the full pipeline for spec.variant; returns the summary dict.

    Artifacts land in `out`; stages already cached for this (spec, seed) are
    reused, so evaluating several variants against one scenario shares the
    simulation, dataset, and checkpoints.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    stages = {}
    try:
        stage = "simulate"
        trace = stage_simulate(spec, out)
        stages["simulate"] = time.time() - t0
        stage = "prepare"
        ds = stage_prepare(spec, out, trace)
        stages["prepare"] = time.time() - t0
        stage = "evaluate"
        rows, detail = stage_evaluate(spec, out, trace, ds)
        stages["evaluate"] = time.time() - t0
    except (ConfigError,) as err:
        raise
    except Exception as err:                       # noqa: BLE001
        raise StageError(stage, err) from err

    _write_results(out, rows)
    summary_path = out / "summary.json"
    summary = {}
    if summary_path.exists():
        summary = json.loads(summary_path.read_text())
    summary.setdefault("runs", {})[spec.variant] = detail
    summary["window"] = ds.window
    summary["seed"] = spec.seed
    summary["stage_seconds"] = stages
    summary_path.write_text(json.dumps(summary, indent=2))
    _write_manifest(spec, out)
    return detail


def _write_manifest(spec, out):
    out = Path(out)
    artifacts = {}
    for name in ("trace.csv", "dataset.bin", "model.bin", "model_split.bin",
                 "calibration.json", "results.csv"):
        p = out / name
        if p.exists():
            artifacts[name] = _file_hash(p)
    manifest = {
        "config": spec_to_dict(spec),
        "config_hash": _hash(spec_to_dict(spec)),
        "seed": spec.seed,
        "artifacts": artifacts,
    }
    (out / "run_manifest.json").write_text(json.dumps(manifest, indent=2))


# -------------------------------------------------------------------- sweep

SWEEP_AXES = ("m", "eps_target", "traffic", "mobility")


def sweep(spec, axis, values, out):
    """Run the pipeline per axis value; emit an aggregated report.

    Axes: m (SA pairs per sub-network), eps_target, traffic variant,
    mobility model.  Each point runs in its own subdirectory.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; pick from {SWEEP_AXES}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report_rows = []
    for value in values:
        point = spec
        if axis == "m":
            m = int(value)
            point = replace(spec, deployment=replace(spec.deployment,
                                                     sa_pairs_per_sn=m))
        elif axis == "eps_target":
            point = replace(spec, eps_targets=(float(value),))
        elif axis == "traffic":
            point = replace(spec, traffic=replace(spec.traffic, variant=str(value)))
        elif axis == "mobility":
            point = replace(spec, mobility=str(value))
        sub = out / f"{axis}_{value}"
        detail = run_pipeline(point, sub)
        cov = detail["coverage_per_sa"]
        width = detail["width_norm_per_sa"]
        report_rows.append({
            "axis": axis, "value": value, "predictor": point.variant,
            "worst_coverage": min(cov), "avg_coverage": float(np.mean(cov)),
            "max_width": max(width), "avg_width": float(np.mean(width)),
        })
    path = out / "sweep_report.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(report_rows[0].keys()))
        writer.writeheader()
        writer.writerows(report_rows)
    return report_rows


# ------------------------------------------------------------------- report

def report(results_dir, out_path=None):
    """Merge run results under a directory into one long-format table.

    Returns (rows, markdown).  Multi-run points aggregate to mean and a
    normal-approximation 95% CI over runs.
    """
    results_dir = Path(results_dir)
    found = sorted(results_dir.glob("**/results.csv"))
    if not found:
        raise FileNotFoundError(f"no results.csv under {results_dir}")
    rows = []
    for path in found:
        run = str(path.parent.relative_to(results_dir)) or "."
        manifest = path.parent / "run_manifest.json"
        seed = None
        if manifest.exists():
            seed = json.loads(manifest.read_text()).get("seed")
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                r["run"] = run
                r["seed"] = seed
                rows.append(r)

    grouped = {}
    for r in rows:
        key = (r["predictor"], r["eps_target"])
        grouped.setdefault(key, []).append(r)
    lines = ["| predictor | eps_target | met (mean+-ci) | overhead | coverage | width |",
             "|---|---|---|---|---|---|"]
    merged = []
    for (pred, eps), group in sorted(grouped.items()):
        def stats(field):
            vals = np.array([float(g[field]) for g in group])
            ci = 1.96 * vals.std(ddof=1) / np.sqrt(vals.size) if vals.size > 1 else 0.0
            return float(vals.mean()), float(ci)
        met, met_ci = stats("percentile_met")
        ovh, ovh_ci = stats("mean_overhead")
        cov, cov_ci = stats("cov_prob")
        wid, wid_ci = stats("cov_width")
        merged.append({"predictor": pred, "eps_target": eps, "n_runs": len(group),
                       "met_mean": met, "met_ci": met_ci,
                       "overhead_mean": ovh, "overhead_ci": ovh_ci,
                       "cov_mean": cov, "cov_ci": cov_ci,
                       "width_mean": wid, "width_ci": wid_ci})
        lines.append(f"| {pred} | {eps} | {met:.3f}+-{met_ci:.3f} "
                     f"| {ovh:.2f}+-{ovh_ci:.2f} | {cov:.3f}+-{cov_ci:.3f} "
                     f"| {wid:.3f}+-{wid_ci:.3f} |")
    markdown = "\n".join(lines)
    if out_path is not None:
        out_path = Path(out_path)
        with open(out_path.with_suffix(".csv"), "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=RESULT_FIELDS + ["run", "seed"])
            writer.writeheader()
            writer.writerows(rows)
        out_path.with_suffix(".md").write_text(markdown + "\n")
    return merged, markdown
