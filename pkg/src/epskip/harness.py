"""JSON-configured experiment matrix with CSV, JSON, and markdown reporting.

A matrix run executes the baseline (skip mode "none", no stabilizer) first,
then each variant with the same seed, model, and schedule, and compares every
variant to the baseline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, EpskipError, NumericDivergenceError
from .metrics import RunComparison, mae, nfe_reduction, rmse, ssim, time_saved
from .models import (
    DEFAULT_LATENT_SHAPE,
    Denoiser,
    GaussianMixtureDenoiser,
    ScriptedDenoiser,
)
from .samplers import SAMPLER_KINDS
from .schedules import (
    DEFAULT_SIGMA_MAX,
    DEFAULT_SIGMA_MIN,
    Schedule,
    compose_two_stage,
    make_karras_schedule,
    make_simple_schedule,
)
from .skip import SkipConfig, parse_explicit_skips
from .stabilize import StabilizerConfig
from .trajectory import RunConfig, RunReport, run_trajectory

STEP_CSV_HEADER = (
    "step_index,sigma_current,sigma_next,decision,reason,predictor_order,"
    "epsilon_norm,learning_ratio,validation_reason,cumulative_nfe,step_wall_time_s"
)

AGGREGATE_CSV_HEADER = (
    "variant,ssim,rmse,mae,nfe,nfe_reduction_pct,time_s,time_saved_pct,status"
)


def _fmt(value) -> str:
    # repr of a Python float is the shortest round-trip decimal form
    return repr(float(value))


def build_stage_schedule(spec: dict) -> Schedule:
    """One stage of a two-stage spec; must carry its own step count."""
    kind = spec.get("kind", "simple")
    if "steps" not in spec:
        raise ConfigError("two-stage schedule stages need an explicit 'steps'")
    steps = int(spec["steps"])
    sigma_max = float(spec.get("sigma_max", DEFAULT_SIGMA_MAX))
    sigma_min = float(spec.get("sigma_min", DEFAULT_SIGMA_MIN))
    if kind == "simple":
        return make_simple_schedule(steps, sigma_max, sigma_min)
    if kind == "karras":
        return make_karras_schedule(steps, sigma_max, sigma_min, rho=float(spec.get("rho", 7.0)))
    raise ConfigError(f"two-stage stages must be 'simple' or 'karras', got {kind!r}")


def build_schedule(spec: dict, steps: int) -> Schedule:
    """Materialize a schedule spec; `steps` is the run-level transition count."""
    kind = spec.get("kind", "simple")
    append_zero = bool(spec.get("append_zero", False))
    sigma_max = float(spec.get("sigma_max", DEFAULT_SIGMA_MAX))
    sigma_min = float(spec.get("sigma_min", DEFAULT_SIGMA_MIN))
    if kind == "simple":
        return make_simple_schedule(steps, sigma_max, sigma_min, append_zero=append_zero)
    if kind == "karras":
        return make_karras_schedule(
            steps, sigma_max, sigma_min, rho=float(spec.get("rho", 7.0)), append_zero=append_zero
        )
    if kind == "two_stage":
        if "first" not in spec or "second" not in spec:
            raise ConfigError("two_stage schedule needs 'first' and 'second' stages")
        composed = compose_two_stage(
            build_stage_schedule(spec["first"]), build_stage_schedule(spec["second"])
        )
        if append_zero:
            composed = Schedule(composed.sigmas + (0.0,))
        return composed
    raise ConfigError(f"unknown schedule kind {kind!r}")


def build_model(spec: dict, shape: tuple[int, ...]) -> Denoiser:
    """Materialize a model spec. Mixture means may be constants or a seeded draw."""
    kind = spec.get("kind", "gaussian")
    if kind == "gaussian":
        mean = np.asarray(spec.get("mean", 0.0), dtype=np.float64)
        return GaussianMixtureDenoiser([1.0], [mean], [float(spec.get("variance", 1.0))])
    if kind == "gaussian_mixture":
        if "weights" not in spec or "variances" not in spec:
            raise ConfigError("gaussian_mixture needs 'weights' and 'variances'")
        weights = spec["weights"]
        variances = spec["variances"]
        if "means" in spec:
            means = [np.asarray(m, dtype=np.float64) for m in spec["means"]]
        elif "means_seed" in spec:
            rng = np.random.default_rng(int(spec["means_seed"]))
            scale = float(spec.get("means_scale", 1.0))
            means = [scale * rng.standard_normal(shape) for _ in weights]
        else:
            raise ConfigError("gaussian_mixture needs 'means' or 'means_seed'")
        return GaussianMixtureDenoiser(weights, means, variances)
    if kind == "scripted":
        if "epsilons" not in spec:
            raise ConfigError("scripted model needs 'epsilons'")
        return ScriptedDenoiser([np.asarray(e, dtype=np.float64) for e in spec["epsilons"]])
    raise ConfigError(f"unknown model kind {kind!r}")


def skip_config_from_dict(d: dict, total_steps: int) -> SkipConfig:
    mode = d.get("mode", "none")
    kwargs = dict(
        mode=mode,
        order=d.get("order", "h2"),
        skip_calls=int(d.get("skip_calls", 3)),
        tolerance=float(d.get("tolerance", 0.1)),
        anchor_interval=int(d.get("anchor_interval", 4)),
        max_consecutive_skips=int(d.get("max_consecutive_skips", 2)),
        gate=d.get("gate", "epsilon"),
        protect_first=int(d.get("protect_first", 1)),
        protect_last=int(d.get("protect_last", 1)),
    )
    if mode == "explicit":
        raw = d.get("indices", "")
        if isinstance(raw, str):
            order, indices = parse_explicit_skips(raw, total_steps)
            if "order" not in d:
                kwargs["order"] = order
            kwargs["indices"] = indices
        else:
            kwargs["indices"] = frozenset(
                int(i) for i in raw if 2 <= int(i) < total_steps
            )
    return SkipConfig(**kwargs)


def stabilizer_config_from_dict(d: dict) -> StabilizerConfig:
    return StabilizerConfig(
        mode=d.get("mode", "none"),
        beta=float(d.get("beta", 0.995)),
        curvature_scale=float(d.get("curvature_scale", 2.0)),
    )


def default_variant_name(skip: SkipConfig, stab: StabilizerConfig) -> str:
    if skip.mode == "none":
        core = "none"
    elif skip.mode == "fixed":
        core = f"{skip.order}s{skip.skip_calls}"
    elif skip.mode == "adaptive":
        core = f"adaptive_t{skip.tolerance:g}"
        if skip.gate == "latent":
            core += "_latent"
    else:
        core = f"explicit_{skip.order}_" + "-".join(str(i) for i in sorted(skip.indices))
    if stab.mode != "none":
        core += f"+{stab.mode}"
    return core


@dataclass(frozen=True)
class MatrixConfig:
    base: RunConfig
    variants: tuple[RunConfig, ...]


def matrix_from_dict(raw: dict) -> MatrixConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    sampler = raw.get("sampler", "euler")
    if sampler not in SAMPLER_KINDS:
        raise ConfigError(f"unknown sampler {sampler!r}")
    seed = int(raw.get("seed", 0))
    shape = tuple(int(v) for v in raw.get("shape", DEFAULT_LATENT_SHAPE))
    if not shape or any(v < 1 for v in shape):
        raise ConfigError("shape must be positive dimensions")
    schedule_spec = raw.get("schedule", {"kind": "simple"})
    model_spec = raw.get("model", {"kind": "gaussian"})

    if schedule_spec.get("kind") == "two_stage":
        derived = build_schedule(schedule_spec, 0).steps
        steps = int(raw.get("steps", derived))
        if steps != derived:
            raise ConfigError(
                f"steps={steps} does not match the two-stage schedule ({derived} transitions)"
            )
    else:
        if "steps" not in raw:
            raise ConfigError("config needs 'steps'")
        steps = int(raw["steps"])

    try:
        base = RunConfig(
            sampler=sampler,
            steps=steps,
            seed=seed,
            schedule=schedule_spec,
            model=model_spec,
            skip=SkipConfig(mode="none"),
            stabilizer=StabilizerConfig(),
            shape=shape,
            name="baseline",
        )
        # materialize once to catch bad specs before any run starts
        build_schedule(schedule_spec, steps)
        build_model(model_spec, shape)
    except (EpskipError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc

    variants = []
    names = {"baseline"}
    for i, v in enumerate(raw.get("variants", [])):
        if not isinstance(v, dict):
            raise ConfigError(f"variant #{i} must be an object")
        try:
            skip_cfg = skip_config_from_dict(v.get("skip", {}), steps)
            stab_cfg = stabilizer_config_from_dict(v.get("stabilizer", {}))
        except (EpskipError, ValueError, TypeError) as exc:
            raise ConfigError(f"variant #{i}: {exc}") from exc
        name = str(v.get("name") or default_variant_name(skip_cfg, stab_cfg))
        if name in names:
            raise ConfigError(f"duplicate variant name {name!r}")
        names.add(name)
        variants.append(replace(base, skip=skip_cfg, stabilizer=stab_cfg, name=name))
    return MatrixConfig(base, tuple(variants))


def load_matrix_config(path) -> MatrixConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(str(exc)) from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return matrix_from_dict(raw)


def write_step_csv(report: RunReport, path) -> None:
    """One row per schedule transition, with the exact promised column set."""
    lines = [STEP_CSV_HEADER]
    for s in report.steps:
        lines.append(
            ",".join(
                [
                    str(s.step_index),
                    _fmt(s.sigma_current),
                    _fmt(s.sigma_next),
                    s.decision,
                    s.reason,
                    s.predictor_order,
                    _fmt(s.epsilon_norm),
                    _fmt(s.learning_ratio),
                    s.validation_reason,
                    str(s.cumulative_nfe),
                    _fmt(s.step_wall_time_s),
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def comparison_to_dict(cmp: RunComparison | None) -> dict | None:
    if cmp is None:
        return None
    return {
        "ssim": cmp.ssim,
        "rmse": cmp.rmse,
        "mae": cmp.mae,
        "nfe_baseline": cmp.nfe_baseline,
        "nfe_run": cmp.nfe_run,
        "nfe_reduction_pct": cmp.nfe_reduction_pct,
        "time_baseline_s": cmp.time_baseline_s,
        "time_run_s": cmp.time_run_s,
        "time_saved_pct": cmp.time_saved_pct,
    }


def write_run_json(report: RunReport, path) -> None:
    payload = {
        "config": report.config,
        "totals": {
            "nfe": report.nfe,
            "steps": len(report.steps),
            "wall_time_s": report.wall_time_s,
        },
        "final_latent": {
            "digest_sha256": report.final_latent_digest,
            "shape": list(report.final_shape),
        },
        "comparison": comparison_to_dict(report.comparison),
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def dump_latent(latent: np.ndarray, base_path) -> None:
    """Flat little-endian float32 dump plus a JSON sidecar describing the shape."""
    arr = np.ascontiguousarray(latent, dtype="<f4")
    base = Path(base_path)
    base.with_suffix(".f32").write_bytes(arr.tobytes())
    sidecar = {"shape": list(latent.shape), "dtype": "<f4", "order": "C"}
    base.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def compare_runs(
    latent: np.ndarray,
    base_latent: np.ndarray,
    report: RunReport,
    base_report: RunReport,
) -> RunComparison:
    return RunComparison(
        ssim=ssim(latent, base_latent),
        rmse=rmse(latent, base_latent),
        mae=mae(latent, base_latent),
        nfe_baseline=base_report.nfe,
        nfe_run=report.nfe,
        nfe_reduction_pct=nfe_reduction(base_report.nfe, report.nfe),
        time_baseline_s=base_report.wall_time_s,
        time_run_s=report.wall_time_s,
        time_saved_pct=time_saved(base_report.wall_time_s, report.wall_time_s),
    )


def _aggregate_rows(results: list[tuple[str, RunReport | NumericDivergenceError]]):
    ok_rows = []
    failed_rows = []
    for name, res in results:
        if isinstance(res, NumericDivergenceError):
            failed_rows.append((name, str(res)))
        else:
            ok_rows.append((name, res))
    ok_rows.sort(key=lambda item: item[1].comparison.ssim if item[1].comparison else -2.0, reverse=True)
    return ok_rows, failed_rows


def write_aggregate(
    out_dir: Path, results: list[tuple[str, RunReport | NumericDivergenceError]]
) -> None:
    ok_rows, failed_rows = _aggregate_rows(results)

    csv_lines = [AGGREGATE_CSV_HEADER]
    for name, report in ok_rows:
        cmp = report.comparison
        csv_lines.append(
            ",".join(
                [
                    name,
                    _fmt(cmp.ssim),
                    _fmt(cmp.rmse),
                    _fmt(cmp.mae),
                    str(report.nfe),
                    _fmt(cmp.nfe_reduction_pct),
                    _fmt(report.wall_time_s),
                    _fmt(cmp.time_saved_pct),
                    "ok",
                ]
            )
        )
    for name, message in failed_rows:
        csv_lines.append(",".join([name, "", "", "", "", "", "", "", f"failed: {message}"]))
    (out_dir / "aggregate.csv").write_text("\n".join(csv_lines) + "\n")

    md = ["# Skip benchmark report", ""]
    md.append("| variant | SSIM | RMSE | MAE | NFE | NFE reduction % | time (s) | time saved % |")
    md.append("|---|---|---|---|---|---|---|---|")
    for name, report in ok_rows:
        cmp = report.comparison
        md.append(
            f"| {name} | {cmp.ssim:.6f} | {cmp.rmse:.6g} | {cmp.mae:.6g} | {report.nfe} "
            f"| {cmp.nfe_reduction_pct:.1f} | {report.wall_time_s:.6f} | {cmp.time_saved_pct:.1f} |"
        )
    for name, _ in failed_rows:
        md.append(f"| {name} | failed | failed | failed | | | | |")
    if failed_rows:
        md.append("")
        md.append("## Failed runs")
        md.append("")
        for name, message in failed_rows:
            md.append(f"- {name}: {message}")
    (out_dir / "aggregate.md").write_text("\n".join(md) + "\n")


def run_experiment_matrix(
    config_path, out_dir, *, only=None, dump_latents: bool = False
) -> int:
    """Run the baseline plus every (selected) variant and write all reports.

    Returns 0 on success and 1 when at least one run diverged; configuration
    problems raise ConfigError before any file is written.
    """
    matrix = load_matrix_config(config_path)
    selected = matrix.variants
    if only:
        known = {v.name for v in matrix.variants}
        missing = [n for n in only if n not in known]
        if missing:
            raise ConfigError(f"unknown variant name(s): {', '.join(missing)}")
        wanted = set(only)
        selected = tuple(v for v in matrix.variants if v.name in wanted)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    schedule = build_schedule(matrix.base.schedule, matrix.base.steps)

    results: list[tuple[str, RunReport | NumericDivergenceError]] = []
    failures = 0

    def execute(cfg: RunConfig):
        model = build_model(cfg.model, cfg.shape)  # fresh instance per run
        return run_trajectory(cfg, model, schedule)

    base_latent = None
    base_report = None
    try:
        base_latent, base_report = execute(matrix.base)
    except NumericDivergenceError as exc:
        results.append((matrix.base.name, exc))
        failures += 1
    if base_report is not None:
        base_report.comparison = compare_runs(base_latent, base_latent, base_report, base_report)
        write_step_csv(base_report, out / f"{matrix.base.name}_steps.csv")
        write_run_json(base_report, out / f"{matrix.base.name}_report.json")
        if dump_latents:
            dump_latent(base_latent, out / f"{matrix.base.name}_latent")
        results.append((matrix.base.name, base_report))

    for cfg in selected:
        try:
            latent, report = execute(cfg)
        except NumericDivergenceError as exc:
            results.append((cfg.name, exc))
            failures += 1
            continue
        if base_report is not None:
            report.comparison = compare_runs(latent, base_latent, report, base_report)
        write_step_csv(report, out / f"{cfg.name}_steps.csv")
        write_run_json(report, out / f"{cfg.name}_report.json")
        if dump_latents:
            dump_latent(latent, out / f"{cfg.name}_latent")
        results.append((cfg.name, report))

    write_aggregate(out, results)
    return 1 if failures else 0
