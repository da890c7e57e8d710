"""Dataset generation, surrogate training wiring, and experiment runs.

Datasets are NDJSON (one sample per line, sorted keys, shortest round-trip
float formatting) split 80/20 into train.ndjson / test.ndjson by a
seed-derived permutation, with SHA-256 checksums in manifest.json.
Re-running with the same seed reproduces the files byte for byte; each
sample draws its genes from an independent child stream of (seed, index),
so generation parallelizes without changing results.
"""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import json
import logging
import pathlib
from dataclasses import replace

import numpy as np

from . import __version__, neural, problems
from .errors import MissingModel, SingularSystem, SolveFailure
from .fem import ThermoelasticSolver, write_result_files
from .ga import ConstraintSpec, FitnessEvaluator, GAConfig, evolve
from .profiles import generate_genes, genes_to_profiles, tensor_product
from .rng import derived_rng

log = logging.getLogger(__name__)

SPLIT_STREAM = 0x5B17
REPLACEMENT_STREAM = 0x9E9
TRAIN_FRACTION = 0.8

_solver_cache: dict[str, ThermoelasticSolver] = {}


def _solver_for(problem_id: str) -> ThermoelasticSolver:
    if problem_id not in _solver_cache:
        _solver_cache[problem_id] = ThermoelasticSolver(problems.get_problem(problem_id))
    return _solver_cache[problem_id]


def _sample_record(problem_id: str, seed: int, index: int, attempt: int = 0) -> dict:
    solver = _solver_for(problem_id)
    cfg = solver.config
    gx, gy = problems.generation_configs(cfg)
    stream = derived_rng(seed, index) if attempt == 0 else derived_rng(seed, REPLACEMENT_STREAM, index, attempt)
    genes = generate_genes(stream, gx, gy)
    px, py = genes_to_profiles(genes)
    profile = tensor_product(px, py, L=cfg.L, H=cfg.H)
    result = solver.run(profile)
    record = {
        "index": index,
        "problem": problem_id,
        "genes": genes.to_dict(),
        "profile_x": px.values.tolist(),
        "profile_y": py.values.tolist(),
        "sigma_e_max": result.sigma_e_max,
        "v_ca": result.v_ca,
        "max_metal_temperature": result.max_metal_temperature,
    }
    if cfg.uniform_delta_theta is None:
        grid = solver.temperature_on_profile_grid(result.nodal_temperature, profile)
        record["temperature_grid"] = grid.ravel(order="C").tolist()
    return record


def _sample_with_replacement(problem_id: str, seed: int, index: int) -> dict:
    for attempt in range(100):
        try:
            return _sample_record(problem_id, seed, index, attempt)
        except (SingularSystem, SolveFailure) as exc:
            log.warning("sample %d attempt %d failed (%s); redrawing", index, attempt, exc)
    raise SolveFailure(f"sample {index}: 100 consecutive solve failures")


def split_indices(count: int, seed: int):
    """Deterministic 80/20 split of range(count), both sides sorted."""
    perm = derived_rng(seed, SPLIT_STREAM).permutation(count)
    n_train = round(TRAIN_FRACTION * count)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def _sha256(path: pathlib.Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def generate_dataset(problem_id: str, count: int, seed: int, out_dir, threads: int = 1) -> dict:
    """Sample profiles, solve each, write train/test NDJSON plus manifest."""
    if problem_id not in problems.PROBLEM_IDS:
        raise ValueError(f"unknown problem id {problem_id!r}")
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if threads > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(_sample_with_replacement,
                                    [problem_id] * count, [seed] * count, range(count),
                                    chunksize=max(1, count // (8 * threads))))
    else:
        records = [_sample_with_replacement(problem_id, seed, i) for i in range(count)]

    train_idx, test_idx = split_indices(count, seed)
    for name, idx in (("train.ndjson", train_idx), ("test.ndjson", test_idx)):
        with open(out / name, "w") as fh:
            for i in idx:
                fh.write(json.dumps(records[i], sort_keys=True) + "\n")
    cfg = problems.get_problem(problem_id)
    manifest = {
        "problem": problem_id,
        "count": count,
        "seed": seed,
        "split_ratio": TRAIN_FRACTION,
        "n_train": int(train_idx.size),
        "n_test": int(test_idx.size),
        "profile_nodes": {"x": cfg.nx + 1, "y": cfg.ny + 1},
        "files": {"train": "train.ndjson", "test": "test.ndjson"},
        "checksums": {name: _sha256(out / name) for name in ("train.ndjson", "test.ndjson")},
        "fingerprint": {"package": "fgmopt", "version": __version__},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def load_dataset(dataset_dir):
    """Manifest plus stacked arrays; order is [train rows..., test rows...]."""
    d = pathlib.Path(dataset_dir)
    manifest = json.loads((d / "manifest.json").read_text())
    rows = []
    counts = []
    for part in ("train", "test"):
        lines = (d / manifest["files"][part]).read_text().splitlines()
        counts.append(len(lines))
        rows.extend(json.loads(line) for line in lines)
    data = {
        "manifest": manifest,
        "profiles_x": np.array([r["profile_x"] for r in rows]),
        "profiles_y": np.array([r["profile_y"] for r in rows]),
        "sigma_e_max": np.array([r["sigma_e_max"] for r in rows]),
        "v_ca": np.array([r["v_ca"] for r in rows]),
        "genes": [r["genes"] for r in rows],
        "indices": np.array([r["index"] for r in rows]),
        "train_rows": np.arange(counts[0]),
        "test_rows": np.arange(counts[0], counts[0] + counts[1]),
    }
    if rows and "temperature_grid" in rows[0]:
        data["temperature_grid"] = np.array([r["temperature_grid"] for r in rows])
    return data


def profile_grid_points(config) -> np.ndarray:
    """(x, y) of the profile grid nodes, row-major in x."""
    X, Y = np.meshgrid(np.linspace(0.0, config.L, config.nx + 1),
                       np.linspace(0.0, config.H, config.ny + 1), indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])


def train_stress_model(dataset: dict, seed: int, stages=None, hidden=(256, 128, 64),
                       max_samples: int | None = None):
    """Fit the stress surrogate on a loaded dataset; returns (model, history)."""
    problem_id = dataset["manifest"]["problem"]
    cfg = problems.get_problem(problem_id)
    stages = stages or (neural.STRESS_STAGES_PROBLEM1 if problem_id == "problem1"
                        else neural.STRESS_STAGES_PROBLEM2)
    tr, te = dataset["train_rows"], dataset["test_rows"]
    if max_samples is not None:
        n_tr = round(TRAIN_FRACTION * max_samples)
        tr, te = tr[:n_tr], te[: max_samples - n_tr]
    model = neural.StressSurrogate.build(
        derived_rng(seed, 1), cfg.nx + 1, cfg.ny + 1, problems.stress_scale(cfg), hidden=hidden)
    history = model.fit(dataset["profiles_x"], dataset["profiles_y"], dataset["sigma_e_max"],
                        (tr, te), stages, derived_rng(seed, 2))
    return model, history


def train_temperature_model(dataset: dict, seed: int, stages=None, latent: int = 250,
                            max_samples: int | None = None):
    """Fit the branch/trunk operator on the stored temperature grids."""
    problem_id = dataset["manifest"]["problem"]
    if "temperature_grid" not in dataset:
        raise ValueError("dataset has no temperature grids (uniform-change problem)")
    cfg = problems.get_problem(problem_id)
    stages = stages or neural.OPERATOR_STAGES
    tr, te = dataset["train_rows"], dataset["test_rows"]
    if max_samples is not None:
        n_tr = round(TRAIN_FRACTION * max_samples)
        tr, te = tr[:n_tr], te[: max_samples - n_tr]
    model = neural.OperatorNet.build(
        derived_rng(seed, 3), cfg.nx + 1, cfg.ny + 1, L=cfg.L, H=cfg.H,
        temperature_scale=problems.temperature_scale(cfg), latent=latent)
    history = model.fit(dataset["profiles_x"], dataset["profiles_y"],
                        dataset["temperature_grid"], profile_grid_points(cfg),
                        (tr, te), stages, derived_rng(seed, 4))
    return model, history


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def _constraints_from(case_spec: dict, overrides: dict) -> ConstraintSpec:
    merged = dict(case_spec)
    for key in ("v_star", "theta_max", "sigma_allow", "penalty_weight"):
        if key in overrides and overrides[key] is not None:
            merged[key] = overrides[key]
    objective = merged["objective"]
    default_weight = 1.0e8 if objective == "sigma_e_max" else 100.0
    return ConstraintSpec(
        v_star=merged.get("v_star"),
        theta_max=merged.get("theta_max"),
        sigma_allow=merged.get("sigma_allow"),
        weight=merged.get("penalty_weight", default_weight),
    )


def run_experiment(exp: dict, out_dir, seed: int | None = None) -> dict:
    """Wire evaluator + GA for one experiment config, verify and export.

    ``exp`` keys: problem (problem1|problem2), case (unconstrained|case1..4),
    optional ga {...GAConfig overrides}, sigma_star (null = FEM only),
    models {stress, temperature}, constraint overrides, seed.
    """
    problem_id = exp["problem"]
    case = exp.get("case", "unconstrained")
    if case not in problems.CASE_DEFAULTS:
        raise ValueError(f"unknown case {case!r}")
    if problem_id == "problem1" and case != "unconstrained" and case != "case1":
        raise ValueError("problem1 ships as unconstrained optimization only")
    config = problems.get_problem(problem_id)
    solver = ThermoelasticSolver(config)
    case_spec = problems.CASE_DEFAULTS[case]
    constraints = _constraints_from(case_spec, exp)
    objective = case_spec["objective"]

    sigma_star = exp.get("sigma_star")
    stress_model = temp_model = None
    if sigma_star is not None:
        paths = exp.get("models", {})
        if "stress" not in paths or not pathlib.Path(paths["stress"]).exists():
            raise MissingModel("surrogate run needs models.stress")
        stress_model = neural.load_model(paths["stress"])
        if constraints.theta_max is not None and config.uniform_delta_theta is None:
            if "temperature" not in paths or not pathlib.Path(paths["temperature"]).exists():
                raise MissingModel("thermal constraint needs models.temperature")
            temp_model = neural.load_model(paths["temperature"])

    ga_overrides = dict(exp.get("ga", {}))
    run_seed = seed if seed is not None else exp.get("seed", 0)
    defaults = dict(
        population_size=200,
        tournament_size=4,
        mutation_probability=problems.mutation_probability(config),
        min_generations=50,
        stall_generations=10,
        stall_tolerance=1.0e3 if objective == "sigma_e_max" else 0.01,
        sigma_star=sigma_star,
        seed=run_seed,
    )
    defaults.update(ga_overrides)
    ga_config = GAConfig(**defaults)

    evaluator = FitnessEvaluator(solver, objective, constraints,
                                 sigma_star=sigma_star, stress_model=stress_model,
                                 temp_model=temp_model)
    gx, gy = problems.generation_configs(config)
    record = evolve(ga_config, evaluator, gx, gy)

    # the reported optimum is always re-verified with one FEM solve
    best = record.best
    px, py = genes_to_profiles(best.genes)
    profile = tensor_product(px, py, L=config.L, H=config.H)
    verified = solver.run(profile)
    rel_err = abs(best.sigma_e_max - verified.sigma_e_max) / max(verified.sigma_e_max, 1e-30)

    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle = {
        "fingerprint": {"package": "fgmopt", "version": __version__},
        "experiment": {k: v for k, v in exp.items() if k != "models"},
        "seed": run_seed,
        "generations": [g.to_dict() for g in record.generations],
        "eval_source_totals": record.eval_source_totals,
        "best": {"genes": best.genes.to_dict(), **best.summary()},
        "fem_verified": verified.summary(),
        "surrogate_sigma_rel_error": rel_err,
        "profile_x": px.values.tolist(),
        "profile_y": py.values.tolist(),
    }
    (out / "run_record.json").write_text(json.dumps(bundle, indent=2, sort_keys=True))
    with open(out / "convergence.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["generation", "best_objective", "best_fitness", "best_penalty",
                    "feasible_fraction", "n_surrogate", "n_fem"])
        for g in record.generations:
            w.writerow([g.generation, repr(g.best_objective), repr(g.best_fitness),
                        repr(g.best_penalty), repr(g.feasible_fraction),
                        g.eval_sources.get("surrogate", 0), g.eval_sources.get("fem", 0)])
    write_result_files(verified, out)
    return bundle


def load_experiment_config(path) -> dict:
    return json.loads(pathlib.Path(path).read_text())
