"""Batch pipeline commands.

Stages communicate only through files in the configured runs/output
directories, so each can be rerun in isolation and external models can be
substituted for the synthetic one by writing the same artifacts.  Every
artifact gets a manifest with the config digest and the seeds it consumed;
rerunning a stage with unchanged inputs reproduces its outputs byte for
byte.

Exit codes: 0 success, 2 config error, 3 missing upstream artifact,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .calibrate import (
    CalibrationPriors,
    McmcConfig,
    Observation,
    PosteriorChain,
    calibrated_projection,
    load_chain_samples,
    reduce_observation,
    run_mh,
    save_chain,
    thin,
)
from .design import (
    CHEAP,
    EXPENSIVE,
    Design,
    ParameterSpace,
    augment_cheap,
    edge_mask,
    maximin_lhs,
    read_design_csv,
    write_design_csv,
)
from .diagnostics import extent_metrics, format_d_table, rmse, summarize_d, uspe
from .emulator import (
    fit_multires,
    fit_singleres,
    load_emulator,
    predict_joint,
    predict_many,
    save_emulator,
)
from .errors import (
    ConfigError,
    FloodcalError,
    MissingArtifact,
    ModelRunFailed,
    NonPositiveDf,
)
from .grid import flatten, read_ascii_grid, write_ascii_grid, Grid
from .manifest import config_digest, read_manifest, write_manifest
from .reduce import (
    RunEnsemble,
    build_ensemble,
    fit_basis,
    load_basis,
    project,
    reconstruct,
    reduce_runs,
    save_basis,
)
from .synthmodel import (
    SynthConfig,
    expensive_model_adapter,
    run_cheap,
    run_expensive,
    shared_locations,
    simulate_observation,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_NUMERICAL = 4


@dataclass
class ExperimentConfig:
    """Parsed experiment configuration with resolved paths."""

    path: Path
    digest: str
    space: ParameterSpace
    n_expensive: int
    extra_cheap: int
    n_candidates: int
    edge_bands: np.ndarray
    synth: SynthConfig
    theta_star: np.ndarray
    target_fraction: float
    n_starts: int
    apply_edge_bands: bool
    iterations: int
    burn_in_fraction: float
    adapt: bool
    approach: str
    noise_guess: float
    n_thinned: int
    flood_threshold: float
    holdout_fraction: float
    folds: int
    seeds: dict
    runs_dir: Path
    out_dir: Path


def _floats(raw: str) -> list[float]:
    return [float(v) for v in raw.replace(",", " ").split()]


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as err:
        raise ConfigError(f"cannot parse config: {err}") from err

    try:
        names = [n.strip() for n in parser.get("space", "names").split(",")]
        lower = _floats(parser.get("space", "lower"))
        upper = _floats(parser.get("space", "upper"))
        if not len(names) == len(lower) == len(upper):
            raise ConfigError("space names/lower/upper lengths differ")
        space = ParameterSpace(tuple(zip(names, lower, upper)))
        k = space.k

        zeros = ", ".join(["0"] * k)
        low_fr = _floats(parser.get("design", "edge_low_fractions", fallback=zeros))
        high_fr = _floats(parser.get("design", "edge_high_fractions", fallback=zeros))
        if len(low_fr) != k or len(high_fr) != k:
            raise ConfigError("edge band fractions must match dimension count")

        theta_star = _floats(parser.get("synth", "theta_star", fallback=""))
        if len(theta_star) != k:
            raise ConfigError("synth.theta_star must give one value per dimension")
        synth = SynthConfig(
            fine_shape=(
                parser.getint("synth", "fine_rows", fallback=32),
                parser.getint("synth", "fine_cols", fallback=32),
            ),
            fine_cell=parser.getfloat("synth", "fine_cell", fallback=1.0),
            coarse_shape=(
                parser.getint("synth", "coarse_rows", fallback=8),
                parser.getint("synth", "coarse_cols", fallback=8),
            ),
            coarse_cell=parser.getfloat("synth", "coarse_cell", fallback=4.0),
            space=space,
            noise_sd=parser.getfloat("synth", "noise_sd", fallback=0.03),
            rho_true=parser.getfloat("synth", "rho_true", fallback=0.9),
            cheap_bias=parser.getfloat("synth", "cheap_bias", fallback=0.1),
        )
        if theta_star and not space.contains(np.array(theta_star)):
            raise ConfigError(f"theta_star {theta_star} outside the parameter space")

        seeds = {
            name: parser.getint("seeds", name, fallback=default)
            for name, default in (
                ("design", 1),
                ("observation", 2),
                ("emulator", 3),
                ("mcmc", 4),
                ("thin", 5),
                ("crossval", 6),
                ("diagnose", 7),
            )
        }

        base = path.parent
        cfg = ExperimentConfig(
            path=path,
            digest=config_digest(path),
            space=space,
            n_expensive=parser.getint("design", "n_expensive", fallback=20),
            extra_cheap=parser.getint("design", "extra_cheap", fallback=80),
            n_candidates=parser.getint("design", "n_candidates", fallback=1000),
            edge_bands=np.column_stack([low_fr, high_fr]),
            synth=synth,
            theta_star=np.array(theta_star),
            target_fraction=parser.getfloat("pca", "target_fraction", fallback=0.95),
            n_starts=parser.getint("emulator", "n_starts", fallback=8),
            apply_edge_bands=parser.getboolean("emulator", "apply_edge_bands", fallback=False),
            iterations=parser.getint("mcmc", "iterations", fallback=50_000),
            burn_in_fraction=parser.getfloat("mcmc", "burn_in_fraction", fallback=0.2),
            adapt=parser.getboolean("mcmc", "adapt", fallback=True),
            approach=parser.get("mcmc", "approach", fallback="mr"),
            noise_guess=parser.getfloat("mcmc", "noise_guess", fallback=0.03),
            n_thinned=parser.getint("project", "n_thinned", fallback=100),
            flood_threshold=parser.getfloat("diagnose", "flood_threshold", fallback=0.0),
            holdout_fraction=parser.getfloat("diagnose", "holdout_fraction", fallback=0.5),
            folds=parser.getint("crossval", "folds", fallback=10),
            seeds=seeds,
            runs_dir=base / parser.get("paths", "runs_dir", fallback="runs"),
            out_dir=base / parser.get("paths", "out_dir", fallback="out"),
        )
    except ConfigError:
        raise
    except (configparser.Error, ValueError) as err:
        raise ConfigError(f"invalid configuration: {err}") from err
    if cfg.approach not in ("mr", "hr"):
        raise ConfigError(f"unknown approach {cfg.approach!r}, expected mr or hr")
    return cfg


def _require(path: Path, what: str) -> Path:
    if not Path(path).exists():
        raise MissingArtifact(f"{what} not found: {path}")
    return Path(path)


def _child_seeds(seed: int, n: int) -> list[int]:
    return [int(c.generate_state(1)[0]) for c in np.random.SeedSequence(seed).spawn(n)]


def _stage_manifest(cfg: ExperimentConfig, stage: str, **extra) -> dict:
    data = {"stage": stage, "config_digest": cfg.digest}
    data.update(extra)
    return data


# --- stages -----------------------------------------------------------------


def cmd_design(cfg: ExperimentConfig, seed: int | None = None) -> None:
    seed = cfg.seeds["design"] if seed is None else seed
    exp_seed, cheap_seed = _child_seeds(seed, 2)
    expensive = maximin_lhs(cfg.space, cfg.n_expensive, exp_seed, cfg.n_candidates)
    full = augment_cheap(expensive, cfg.space, cfg.extra_cheap, cheap_seed)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_design_csv(full, cfg.out_dir / "design.csv")
    write_manifest(
        cfg.out_dir / "design.manifest.json",
        _stage_manifest(
            cfg,
            "design",
            seed=seed,
            n_expensive=full.n_expensive,
            n_cheap=full.n_cheap,
            n_candidates=cfg.n_candidates,
        ),
    )
    print(f"design: {full.n_expensive} expensive + {full.n_cheap} cheap points")


def _load_design(cfg: ExperimentConfig) -> Design:
    path = _require(cfg.out_dir / "design.csv", "design")
    return read_design_csv(path, cfg.space)


def cmd_run_synth(cfg: ExperimentConfig, seed: int | None = None, threads: int = 1) -> None:
    seed = cfg.seeds["observation"] if seed is None else seed
    design = _load_design(cfg)
    cfg.runs_dir.mkdir(parents=True, exist_ok=True)

    def run_row(i):
        theta = design.points[i]
        try:
            if design.fidelity[i] == EXPENSIVE:
                return run_expensive(theta, cfg.synth)
            return run_cheap(theta, cfg.synth)
        except Exception as err:
            raise ModelRunFailed(tuple(theta), f"design row {i}: {err}") from err

    indices = range(len(design.points))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            grids = list(pool.map(run_row, indices))
    else:
        grids = [run_row(i) for i in indices]

    files = []
    for i, grid in enumerate(grids):
        name = f"run_{i:04d}_{design.fidelity[i]}.asc"
        write_ascii_grid(grid, cfg.runs_dir / name)
        files.append(name)

    obs = simulate_observation(cfg.theta_star, cfg.synth, seed)
    template = cfg.synth.fine_grid_template()
    obs_grid = Grid(
        template.origin_x,
        template.origin_y,
        template.cell_size,
        obs.values.reshape(template.values.shape),
    )
    write_ascii_grid(obs_grid, cfg.runs_dir / "observation.asc")

    write_manifest(
        cfg.runs_dir / "runs.manifest.json",
        _stage_manifest(
            cfg,
            "run-synth",
            observation_seed=seed,
            theta_star=list(cfg.theta_star),
            noise_sd=cfg.synth.noise_sd,
            runs=[
                {"row": i, "file": files[i], "fidelity": design.fidelity[i],
                 "theta": list(design.points[i])}
                for i in range(len(files))
            ],
        ),
    )
    print(f"run-synth: {len(files)} runs + observation written to {cfg.runs_dir}")


def _load_runs(cfg: ExperimentConfig, design: Design) -> tuple[list, list]:
    manifest = read_manifest(_require(cfg.runs_dir / "runs.manifest.json", "runs manifest"))
    grids = {}
    for entry in manifest["runs"]:
        grids[entry["row"]] = read_ascii_grid(_require(cfg.runs_dir / entry["file"], "model run"))
    exp_grids = [grids[i] for i in range(len(design.points)) if design.fidelity[i] == EXPENSIVE]
    cheap_grids = [grids[i] for i in range(len(design.points)) if design.fidelity[i] == CHEAP]
    return exp_grids, cheap_grids


def cmd_emulate(cfg: ExperimentConfig, seed: int | None = None, threads: int = 1) -> None:
    seed = cfg.seeds["emulator"] if seed is None else seed
    design = _load_design(cfg)
    exp_grids, cheap_grids = _load_runs(cfg, design)

    if cfg.apply_edge_bands:
        held = edge_mask(design, cfg.edge_bands)
        exp_idx = np.flatnonzero(design.fidelity == EXPENSIVE)
        keep_exp = ~held[exp_idx]
        exp_grids = [g for g, keep in zip(exp_grids, keep_exp) if keep]
        design = Design(design.points[~held], design.fidelity[~held], design.space)

    locations = shared_locations(cfg.synth)
    ensemble = build_ensemble(exp_grids, cheap_grids, design, locations)
    basis = fit_basis(ensemble, cfg.target_fraction)
    scores = reduce_runs(basis, ensemble)

    mr_seed, hr_seed = _child_seeds(seed, 2)
    emu_mr = fit_multires(design, scores.scores, n_starts=cfg.n_starts,
                          seed=mr_seed, threads=threads)
    emu_hr = fit_singleres(design, scores.expensive, n_starts=cfg.n_starts,
                           seed=hr_seed, threads=threads)

    save_basis(basis, cfg.out_dir / "basis")
    save_emulator(emu_mr, cfg.out_dir / "emulator_mr")
    save_emulator(emu_hr, cfg.out_dir / "emulator_hr")
    write_manifest(
        cfg.out_dir / "emulate.manifest.json",
        _stage_manifest(
            cfg,
            "emulate",
            seed=seed,
            n_locations=len(locations),
            n_components=basis.n_components,
            variance_fraction=basis.variance_fraction,
            edge_bands_applied=cfg.apply_edge_bands,
            n_expensive=design.n_expensive,
            n_cheap=design.n_cheap,
        ),
    )
    print(
        f"emulate: {basis.n_components} components capture "
        f"{100 * basis.variance_fraction:.2f}% variance at {len(locations)} locations"
    )


def _load_observation(cfg: ExperimentConfig) -> Observation:
    obs_grid = read_ascii_grid(_require(cfg.runs_dir / "observation.asc", "observation"))
    locations = shared_locations(cfg.synth)
    return Observation(flatten(obs_grid, locations), locations)


def cmd_calibrate(cfg: ExperimentConfig, seed: int | None = None) -> None:
    seed = cfg.seeds["mcmc"] if seed is None else seed
    basis = load_basis(_require(cfg.out_dir / "basis", "basis archive"))
    emulator = load_emulator(
        _require(cfg.out_dir / f"emulator_{cfg.approach}", f"{cfg.approach} emulator")
    )
    obs = _load_observation(cfg)
    z_r = reduce_observation(obs, basis)

    mcmc = McmcConfig(
        iterations=cfg.iterations,
        seed=seed,
        burn_in=int(cfg.burn_in_fraction * cfg.iterations),
        adapt=cfg.adapt,
    )
    chain = run_mh(z_r, emulator, basis, CalibrationPriors(cfg.noise_guess), mcmc)
    name = f"chain_{cfg.approach}"
    save_chain(chain, cfg.out_dir / f"{name}.csv")
    from .calibrate import ESS_TARGET

    ess_min = min(chain.ess.values())
    write_manifest(
        cfg.out_dir / f"{name}.manifest.json",
        _stage_manifest(
            cfg,
            "calibrate",
            seed=seed,
            approach=cfg.approach,
            iterations=cfg.iterations,
            burn_in=chain.burn_in,
            adapt=cfg.adapt,
            noise_guess=cfg.noise_guess,
            acceptance_rates=dict(zip(chain.names, chain.acceptance_rates)),
            ess=chain.ess,
            ess_target=ESS_TARGET,
            ess_target_met=bool(ess_min >= ESS_TARGET),
        ),
    )
    flag = "" if ess_min >= ESS_TARGET else f" (target {ESS_TARGET} not met)"
    print(f"calibrate[{cfg.approach}]: {chain.n_kept} retained samples, min ESS {ess_min:.0f}{flag}")


def cmd_project(cfg: ExperimentConfig, seed: int | None = None, threads: int = 1) -> None:
    seed = cfg.seeds["thin"] if seed is None else seed
    chain_path = _require(cfg.out_dir / f"chain_{cfg.approach}.csv", "posterior chain")
    samples, names = load_chain_samples(chain_path)
    chain = PosteriorChain(
        samples=samples,
        log_posterior=np.zeros(len(samples)),
        accepted_mask=np.zeros(len(samples), dtype=np.int64),
        acceptance_rates=np.zeros(samples.shape[1]),
        names=names,
        seed=seed,
        burn_in=0,
        iterations=len(samples),
    )
    thetas = thin(chain, min(cfg.n_thinned, chain.n_kept), seed)
    model = expensive_model_adapter(cfg.synth)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            grids = iter(list(pool.map(model, thetas)))
        projection = calibrated_projection(thetas, lambda _theta: next(grids))
    else:
        projection = calibrated_projection(thetas, model)
    write_ascii_grid(projection, cfg.out_dir / f"projection_{cfg.approach}.asc")
    write_manifest(
        cfg.out_dir / f"projection_{cfg.approach}.manifest.json",
        _stage_manifest(
            cfg,
            "project",
            seed=seed,
            approach=cfg.approach,
            n_thinned=len(thetas),
            thetas=[list(t) for t in thetas],
        ),
    )
    print(f"project[{cfg.approach}]: mean of {len(thetas)} thinned projections written")


def cmd_diagnose(
    cfg: ExperimentConfig, seed: int | None = None, flood_threshold: float | None = None
) -> None:
    seed = cfg.seeds["diagnose"] if seed is None else seed
    threshold = cfg.flood_threshold if flood_threshold is None else flood_threshold

    projection = read_ascii_grid(
        _require(cfg.out_dir / f"projection_{cfg.approach}.asc", "calibrated projection")
    )
    obs_grid = read_ascii_grid(_require(cfg.runs_dir / "observation.asc", "observation"))
    report = extent_metrics(projection, obs_grid, threshold)

    metrics = {"approach": cfg.approach, "flood_threshold": threshold}
    metrics.update(report.to_dict())
    write_manifest(cfg.out_dir / "metrics.json", metrics)
    with open(cfg.out_dir / "metrics.txt", "w") as fh:
        fh.write(f"projection vs observation ({cfg.approach})\n")
        fh.write(f"{'RMSE (m)':<16}{report.rmse:.4f}\n")
        fh.write(f"{'Percent bias':<16}{report.percent_bias:.2f}\n")
        fh.write(f"{'Fit':<16}{report.fit:.3f}\n")
        fh.write(f"{'Correctness':<16}{report.correctness:.3f}\n")

    # emulator validation: hold out expensive runs, whiten errors per leading PC
    design = _load_design(cfg)
    exp_grids, cheap_grids = _load_runs(cfg, design)
    locations = shared_locations(cfg.synth)
    ensemble = build_ensemble(exp_grids, cheap_grids, design, locations)

    rng = np.random.default_rng(seed)
    p_e = design.n_expensive
    # T reference needs test size > mean-parameter count (2*(k+1) for MR)
    n_min = 2 * (cfg.space.k + 1) + 1
    n_hold = max(n_min, round(cfg.holdout_fraction * p_e))
    if p_e - n_hold < 2:
        raise NonPositiveDf(
            f"{p_e} expensive runs are too few for USPE validation "
            f"(need {n_min} test + 2 training points)"
        )
    held_idx = np.sort(rng.choice(p_e, size=n_hold, replace=False))
    uspe_written = _uspe_validation(cfg, design, ensemble, held_idx, seed)

    write_manifest(
        cfg.out_dir / "diagnose.manifest.json",
        _stage_manifest(
            cfg,
            "diagnose",
            seed=seed,
            flood_threshold=threshold,
            held_out_rows=[int(i) for i in held_idx],
            uspe_files=uspe_written,
        ),
    )
    print(
        f"diagnose[{cfg.approach}]: rmse {report.rmse:.4f} m, bias "
        f"{report.percent_bias:.2f}%, fit {report.fit:.3f}, "
        f"correctness {report.correctness:.3f}"
    )


def _train_test_split(design: Design, ensemble, held_exp_idx: np.ndarray):
    """Drop the given expensive rows from the design and depth matrix."""
    p = len(design.points)
    held_rows = np.zeros(p, dtype=bool)
    held_rows[held_exp_idx] = True  # expensive rows come first
    train_design = Design(
        design.points[~held_rows], design.fidelity[~held_rows], design.space
    )
    train_depths = ensemble.depths[~held_rows]
    test_depths = ensemble.depths[held_rows]
    test_thetas = design.points[held_rows]
    return train_design, train_depths, test_depths, test_thetas


def _leading_components(basis, fraction: float = 0.75) -> int:
    cum = np.cumsum(basis.eigenvalues) / basis.total_variance
    return int(min(np.searchsorted(cum, fraction) + 1, basis.n_components))


def _uspe_validation(cfg, design, ensemble, held_idx, seed) -> list:
    train_design, train_depths, test_depths, test_thetas = _train_test_split(
        design, ensemble, held_idx
    )
    train_ens = RunEnsemble(train_depths, train_design, ensemble.locations)
    basis = fit_basis(train_ens, cfg.target_fraction)
    scores = reduce_runs(basis, train_ens)
    test_scores = project(basis, test_depths)
    n_lead = _leading_components(basis)

    mr_seed, hr_seed = _child_seeds(seed, 2)
    emu_mr = fit_multires(train_design, scores.scores, n_starts=cfg.n_starts, seed=mr_seed)
    emu_hr = fit_singleres(train_design, scores.expensive, n_starts=cfg.n_starts, seed=hr_seed)

    written = []
    for label, emu in (("mr", emu_mr), ("hr", emu_hr)):
        joint = predict_joint(emu, test_thetas)
        path = cfg.out_dir / f"uspe_{label}.csv"
        with open(path, "w") as fh:
            fh.write("component,empirical,theoretical\n")
            for j in range(n_lead):
                mean, cov = joint[j]
                report = uspe(test_scores[:, j], mean, cov, emu.n_trend_params)
                for emp, theo in report.qq:
                    fh.write(f"{j},{emp:.17g},{theo:.17g}\n")
        written.append(path.name)
    return written


def cmd_crossval(cfg: ExperimentConfig, seed: int | None = None, threads: int = 1) -> None:
    seed = cfg.seeds["crossval"] if seed is None else seed
    design = _load_design(cfg)
    exp_grids, cheap_grids = _load_runs(cfg, design)
    locations = shared_locations(cfg.synth)
    ensemble = build_ensemble(exp_grids, cheap_grids, design, locations)
    label = f"{design.n_expensive}e{design.n_cheap}c"

    rng = np.random.default_rng(seed)
    p_e = design.n_expensive
    perm = rng.permutation(p_e)
    folds = np.array_split(perm, cfg.folds)
    fold_seeds = _child_seeds(seed, len(folds) + 1)

    cv_d = []
    for fold, fold_seed in zip(folds, fold_seeds[:-1]):
        if len(fold) == 0:
            continue
        cv_d.extend(
            _holdout_d_values(cfg, design, ensemble, np.sort(fold), fold_seed, threads)
        )

    held_edge = np.flatnonzero(edge_mask(design, cfg.edge_bands)[:p_e])
    edge_d = None
    if held_edge.size:
        edge_d = _holdout_d_values(cfg, design, ensemble, held_edge, fold_seeds[-1], threads)

    result = {
        "label": label,
        "cross_validation": {
            "quartiles": list(summarize_d(cv_d)),
            "n_points": len(cv_d),
        },
    }
    tables = {label: summarize_d(cv_d)}
    if edge_d is not None:
        result["edge_case"] = {
            "quartiles": list(summarize_d(edge_d)),
            "n_points": len(edge_d),
        }
    with open(cfg.out_dir / "crossval.txt", "w") as fh:
        fh.write("Cross validation: difference in RMSE between MR and HR (m)\n")
        fh.write(format_d_table(tables))
        if edge_d is not None:
            fh.write("\nEdge cases: difference in RMSE between MR and HR (m)\n")
            fh.write(format_d_table({label: summarize_d(edge_d)}))
    write_manifest(cfg.out_dir / "crossval.json", _stage_manifest(cfg, "crossval", seed=seed, **result))
    q = summarize_d(cv_d)
    print(f"crossval[{label}]: D(MR-HR) Q1 {q[0]:.3f} median {q[1]:.3f} mean {q[2]:.3f} Q3 {q[3]:.3f}")


def _holdout_d_values(cfg, design, ensemble, held_idx, seed, threads=1) -> list:
    """Per-held-out-point RMSE difference between the MR and HR emulators."""
    train_design, train_depths, test_depths, test_thetas = _train_test_split(
        design, ensemble, held_idx
    )
    train_ens = RunEnsemble(train_depths, train_design, ensemble.locations)
    basis = fit_basis(train_ens, cfg.target_fraction)
    scores = reduce_runs(basis, train_ens)
    mr_seed, hr_seed = _child_seeds(seed, 2)
    emu_mr = fit_multires(train_design, scores.scores, n_starts=cfg.n_starts,
                          seed=mr_seed, threads=threads)
    emu_hr = fit_singleres(train_design, scores.expensive, n_starts=cfg.n_starts,
                           seed=hr_seed, threads=threads)
    mean_mr, _ = predict_many(emu_mr, test_thetas)
    mean_hr, _ = predict_many(emu_hr, test_thetas)
    pred_mr = reconstruct(basis, mean_mr)
    pred_hr = reconstruct(basis, mean_hr)
    out = []
    for i in range(len(test_thetas)):
        out.append(
            rmse(pred_mr[i], test_depths[i]) - rmse(pred_hr[i], test_depths[i])
        )
    return out


# --- entry point ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="floodcal",
        description="Multiresolution GP emulation-calibration pipeline",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("design", "generate the nested maximin LHS design"),
        ("run-synth", "run the synthetic two-fidelity model over the design"),
        ("emulate", "reduce dimensions and fit the MR and HR emulators"),
        ("calibrate", "sample the posterior over (theta, sigma2_eps)"),
        ("project", "average model runs at thinned posterior samples"),
        ("diagnose", "projection metrics and emulator validation"),
        ("crossval", "cross-validation and edge-case D(MR-HR) tables"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="experiment config file (INI)")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override this stage's seed from [seeds]")
        cmd.add_argument("--out", default=None, help="override the output directory")
        cmd.add_argument("--threads", type=int, default=1,
                         help="worker threads for model runs and per-component fits")
        if name == "diagnose":
            cmd.add_argument("--flood-threshold", type=float, default=None,
                             help="depth (m) above which a cell counts as flooded")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.out is not None:
            cfg.out_dir = Path(args.out)
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "design":
            cmd_design(cfg, args.seed)
        elif args.command == "run-synth":
            cmd_run_synth(cfg, args.seed, args.threads)
        elif args.command == "emulate":
            cmd_emulate(cfg, args.seed, args.threads)
        elif args.command == "calibrate":
            cmd_calibrate(cfg, args.seed)
        elif args.command == "project":
            cmd_project(cfg, args.seed, args.threads)
        elif args.command == "diagnose":
            cmd_diagnose(cfg, args.seed, args.flood_threshold)
        elif args.command == "crossval":
            cmd_crossval(cfg, args.seed, args.threads)
    except ConfigError as err:
        print(f"floodcal: config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingArtifact, FileNotFoundError) as err:
        print(f"floodcal: missing artifact: {err}", file=sys.stderr)
        return EXIT_MISSING
    except FloodcalError as err:
        print(f"floodcal: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
