"""
Command-line entry point for the superspin freezing pipeline: class enumeration, spin-type census, freeze times,
synthetic sampling, and the defect and disagreement analyses
"""
import argparse
import json
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Callable, Iterable, Iterator, Optional

import numpy as np
import pandas as pd

from analysis_tools import (DISAGREEMENT_MODES, count_defects, defect_report_table, disagreement_grid,
                            equilibrium_defect_curve, final_equilibrium_signs, merge_defect_reports,
                            render_disagreement_svg)
from cache_tools import ResultCache, get_cache_dir
from dynamics_tools import (DEFAULT_ANNEAL_TIMES, DEFAULT_BATH_TEMPERATURE_K, KELVIN_TO_GHZ, BathParameters,
                            EigensolverConvergenceError, FreezeEstimate, K4Model, K4Params, RelaxationError,
                            Schedule, ScheduleFormatError, ScheduleRangeError, anneal_to_effective,
                            freeze_diagnostics, freeze_from_diagnostics, load_schedule)
from ed_tools import DimensionOverflowError, EigensolverError, default_grid, magnetization_frame
from lattice_tools import (CellMode, EmbeddingScaleError, SquareLatticeInstance, enumerate_classes, read_class_list,
                           write_class_list)
from sampler_tools import (SampleSet, SamplerConfigError, kz_frozen_sample, metropolis_anneal, sample_instance,
                           svmc_anneal)
from transition_tools import (SpinTypeRecord, TransitionSet, census_summary, census_table, classify_instance,
                              transition_density)
from utils import (DEFAULT_GRID_POINTS, DEFAULT_WINDOW, TOOL_NAME, TOOL_VERSION, atomic_write_text, content_hash,
                   load_user_config, lookup_dotted_key, parse_override, provenance_line)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3

GENERATORS = ("kz_frozen", "metropolis", "svmc")

# Dotted configuration keys and the RunConfig field each one sets
CONFIG_KEYS = {
    "grid.points": "grid_points",
    "grid.window": "window",
    "embedding.alpha": "alpha",
    "embedding.alpha_s": "alpha_s",
    "embedding.cell_mode": "cell_mode",
    "k4.internal_coupling": "internal_coupling",
    "k4.include_fields": "include_fields",
    "schedule.path": "schedule_path",
    "schedule.anneal_times": "anneal_times",
    "bath.eta": "bath_eta",
    "bath.omega_c": "bath_omega_c",
    "bath.temperature": "bath_temperature",
    "freeze.points": "freeze_points",
    "freeze.sector": "freeze_sector",
    "census.refine": "refine",
    "classes": "classes",
    "sampler.generator": "generator",
    "sampler.seed": "seed",
    "sampler.reads": "reads",
    "sampler.flip_noise": "flip_noise",
    "sampler.frame_randomization": "frame_randomization",
    "sampler.T_star": "T_star",
    "sampler.delta_star": "delta_star",
    "sampler.anneal_time": "anneal_time",
    "sampler.sweeps": "sweeps",
    "sampler.frames": "frames",
    "sampler.temperatures": "temperatures",
    "analysis.mode": "mode",
    "analysis.slack": "slack",
    "analysis.normalization": "normalization",
    "analysis.curve_points": "curve_points",
    "export.grids": "export_grids",
    "cache.dir": "cache_dir",
    "output.dir": "output_dir",
    "jobs": "jobs",
}

# Fields that change where results go or how fast they come, not what they are
NON_SEMANTIC_FIELDS = ("cache_dir", "output_dir", "jobs")


class ConfigError(ValueError):
    """
    The run configuration is invalid
    """
    pass


@dataclass(frozen=True)
class RunConfig:
    """
    Every parameter of a pipeline run. bath_temperature is in kelvin, anneal times in μs.
    """
    grid_points: int = DEFAULT_GRID_POINTS
    window: float = DEFAULT_WINDOW
    alpha: float = 0.25
    alpha_s: float = 1.0
    cell_mode: str = "TRUNCATED4"
    internal_coupling: str = "total"
    include_fields: bool = True
    schedule_path: Optional[str] = None
    anneal_times: tuple[float, ...] = DEFAULT_ANNEAL_TIMES
    bath_eta: float = 0.08
    bath_omega_c: float = 80.0
    bath_temperature: float = DEFAULT_BATH_TEMPERATURE_K
    freeze_points: int = 200
    freeze_sector: str = "full"
    refine: bool = False
    classes: Optional[tuple[int, ...]] = None
    generator: str = "kz_frozen"
    seed: int = 0
    reads: int = 1000
    flip_noise: float = 0.0
    frame_randomization: bool = True
    T_star: Optional[float] = None
    delta_star: Optional[float] = None
    anneal_time: Optional[float] = None
    sweeps: int = 1000
    frames: int = 8
    temperatures: tuple[float, float] = (5.0, 0.05)
    mode: str = "majority"
    slack: float = 3
    normalization: Optional[float] = None
    curve_points: int = 51
    export_grids: bool = False
    cache_dir: Optional[str] = None
    output_dir: str = "results"
    jobs: int = 1

    def __post_init__(self):
        if self.grid_points < 2 or self.window <= 0:
            raise ConfigError("The grid needs at least 2 points and a positive window")
        if self.cell_mode not in CellMode.__members__:
            raise ConfigError(f"Unknown cell mode '{self.cell_mode}', expected one of {list(CellMode.__members__)}")
        if self.internal_coupling not in ("total", "edge"):
            raise ConfigError(f"Unknown K(4) internal coupling '{self.internal_coupling}'")
        if self.freeze_sector not in ("full", "symmetric"):
            raise ConfigError(f"Unknown freeze sector '{self.freeze_sector}'")
        if self.generator not in GENERATORS:
            raise ConfigError(f"Unknown generator '{self.generator}', expected one of {list(GENERATORS)}")
        if self.mode not in DISAGREEMENT_MODES:
            raise ConfigError(f"Unknown analysis mode '{self.mode}'")
        if not self.anneal_times or any(t_f <= 0 for t_f in self.anneal_times):
            raise ConfigError("Anneal times must be positive")
        if self.reads <= 0 or self.sweeps <= 0 or self.frames <= 0 or self.jobs <= 0:
            raise ConfigError("Reads, sweeps, frames and jobs must be positive")

    @classmethod
    def from_dict(cls, values: dict):
        known = {config_field.name for config_field in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"Unknown configuration fields {sorted(unknown)}")
        values = dict(values)
        for name in ("anneal_times", "classes", "temperatures"):
            if values.get(name) is not None:
                raw = values[name]
                values[name] = tuple(raw) if isinstance(raw, (list, tuple)) else (raw,)
        try:
            return cls(**values)
        except TypeError as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def from_sources(cls, config_path: Optional[str] = None, overrides: Iterable[str] = (), **explicit):
        """
        Builds the configuration from defaults, then the configuration file, then --set overrides,
        then explicit command line flags.

        :param config_path: Configuration file path
        :param overrides: "key=value" overrides with dotted keys
        :param explicit: Field values given by dedicated flags (None means not given)
        :return: Run configuration
        """
        try:
            file_config = load_user_config(config_path)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Configuration file is not valid JSON: {e}") from e

        values = {}
        for key, name in CONFIG_KEYS.items():
            value = lookup_dotted_key(file_config, key)
            if value is not None:
                values[name] = value
        for raw_override in overrides:
            try:
                key, value = parse_override(raw_override)
            except ValueError as e:
                raise ConfigError(str(e)) from e
            if key not in CONFIG_KEYS:
                raise ConfigError(f"Unknown configuration key '{key}'")
            values[CONFIG_KEYS[key]] = value
        values.update({name: value for name, value in explicit.items() if value is not None})
        return cls.from_dict(values)

    def to_dict(self) -> dict:
        return asdict(self)

    def content_hash(self) -> str:
        return content_hash({name: value for name, value in self.to_dict().items()
                             if name not in NON_SEMANTIC_FIELDS})

    @property
    def cell_mode_value(self) -> CellMode:
        return CellMode[self.cell_mode]

    @property
    def grid(self) -> np.ndarray:
        return default_grid(self.grid_points, self.window)

    @property
    def bath(self) -> BathParameters:
        return BathParameters(eta=self.bath_eta, omega_c=self.bath_omega_c,
                              temperature=self.bath_temperature * KELVIN_TO_GHZ)

    @property
    def k4_params(self) -> K4Params:
        return K4Params(alpha=self.alpha, alpha_s=self.alpha_s, internal_coupling=self.internal_coupling,
                        include_fields=self.include_fields)

    @property
    def sampled_anneal_time(self) -> float:
        return self.anneal_times[0] if self.anneal_time is None else self.anneal_time

    def schedule(self, t_f: float) -> Schedule:
        return load_schedule(self.schedule_path, t_f)


def _parallel_map(function: Callable, tasks: list, jobs: int) -> Iterator:
    """
    Maps a picklable function over tasks, in task order
    """
    if jobs <= 1 or len(tasks) <= 1:
        yield from map(function, tasks)
        return
    with ProcessPoolExecutor(max_workers=jobs) as executor:
        yield from executor.map(function, tasks)


def _classify_task(task: tuple) -> tuple[int, dict, bool]:
    class_id, instance, T_grid, delta_grid, refine, cache_root = task
    cache = ResultCache(cache_root)
    entry = cache.entry("classification", {"instance": instance.content_hash(), "T_grid": list(T_grid),
                                           "delta_grid": list(delta_grid), "refine": refine})
    payload = cache.read_json(entry)
    if payload is not None:
        return class_id, payload, True

    grid = cache.magnetization_grid(instance, T_grid, delta_grid)
    records, transitions = classify_instance(instance, class_id, T_grid, delta_grid, grid=grid, refine=refine)
    spin_types = [record.spin_type for record in records]
    payload = {"records": [record.to_json_dict() for record in records],
               "transitions": transitions.to_json_records(class_id, spin_types)}
    cache.write_json(entry, payload)
    return class_id, payload, False


def _sample_task(task: tuple) -> SampleSet:
    class_id, instance, config, T_star, delta_star, config_hash = task
    seed = int(np.random.SeedSequence([config.seed, class_id]).generate_state(1)[0])
    if config.generator == "kz_frozen":
        samples = kz_frozen_sample(instance, T_star, delta_star, n_reads=config.reads, flip_noise=config.flip_noise,
                                   seed=seed, frame_randomization=config.frame_randomization, class_id=class_id)
    elif config.generator == "metropolis":
        samples = sample_instance(instance, metropolis_anneal, n_reads=config.reads, seed=seed, frames=config.frames,
                                  cell_mode=config.cell_mode_value, alpha=config.alpha, alpha_s=config.alpha_s,
                                  class_id=class_id, temp_schedule=config.temperatures, sweeps=config.sweeps)
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            schedule = config.schedule(config.sampled_anneal_time)
        samples = sample_instance(instance, svmc_anneal, n_reads=config.reads, seed=seed, frames=config.frames,
                                  cell_mode=config.cell_mode_value, alpha=config.alpha, alpha_s=config.alpha_s,
                                  class_id=class_id, schedule=schedule, sweeps=config.sweeps,
                                  temperature=config.bath.temperature)
    samples.metadata.update({"config_hash": config_hash, "class_seed": seed})
    return samples


class Pipeline:
    """
    Runs the pipeline stages for one configuration, sharing the cache and the output folder
    """

    def __init__(self, config: RunConfig):
        self.config = config
        self.config_hash = config.content_hash()
        self.cache = ResultCache(get_cache_dir(config.cache_dir))

    def output_path(self, *parts: str) -> str:
        return os.path.join(self.config.output_dir, *parts)

    def write_csv(self, frame: pd.DataFrame, *parts: str) -> str:
        filepath = self.output_path(*parts)
        atomic_write_text(filepath, provenance_line(self.config_hash) + "\n" + frame.to_csv(index=False))
        print(f"💾 Saved {filepath}")
        return filepath

    def write_json(self, document: dict, *parts: str) -> str:
        filepath = self.output_path(*parts)
        document = {"tool": TOOL_NAME, "tool_version": TOOL_VERSION, "config_hash": self.config_hash, **document}
        atomic_write_text(filepath, json.dumps(document, indent=2, ensure_ascii=False) + "\n")
        print(f"💾 Saved {filepath}")
        return filepath

    def write_text(self, text: str, *parts: str) -> str:
        filepath = self.output_path(*parts)
        atomic_write_text(filepath, text)
        print(f"💾 Saved {filepath}")
        return filepath

    def class_list(self) -> list[SquareLatticeInstance]:
        records = self.cache.cached_json("class_list", {"rows": 3, "cols": 3},
                                         lambda: write_class_list(enumerate_classes()))
        return read_class_list(records)

    def selected_classes(self) -> list[tuple[int, SquareLatticeInstance]]:
        classes = self.class_list()
        if self.config.classes is None:
            return list(enumerate(classes))
        invalid = [class_id for class_id in self.config.classes if not 0 <= class_id < len(classes)]
        if invalid:
            raise ConfigError(f"Class ids {invalid} are outside 0..{len(classes) - 1}")
        return [(class_id, classes[class_id]) for class_id in self.config.classes]

    def classifications(self) -> dict[int, tuple[list[SpinTypeRecord], TransitionSet]]:
        """
        Classifies the selected classes, reusing cached classifications
        """
        selected = self.selected_classes()
        grid = self.config.grid.tolist()
        tasks = [(class_id, instance, grid, grid, self.config.refine, self.cache.root)
                 for class_id, instance in selected]

        results, cached = {}, 0
        for class_id, payload, from_cache in _parallel_map(_classify_task, tasks, self.config.jobs):
            cached += from_cache
            records = [SpinTypeRecord.from_json_dict(record) for record in payload["records"]]
            transitions = TransitionSet.from_json_records(payload["transitions"], grid, grid)
            results[class_id] = records, transitions
            if not from_cache:
                print(f"🕑 Classified class {class_id} ({len(results)}/{len(tasks)})")
        if cached:
            print(f"ℹ {cached} of {len(tasks)} classes were already classified")
        return results

    def freeze_estimates(self) -> tuple[pd.DataFrame, list[FreezeEstimate]]:
        """
        Freeze point of every configured anneal time, from one diagnostic sweep of the all-ferromagnetic
        instance (the sweep does not depend on t_f)
        """
        config = self.config
        schedule = config.schedule(config.anneal_times[0])
        params, bath = config.k4_params, config.bath
        key = {"schedule": content_hash({"s": schedule.s, "A": schedule.A, "B": schedule.B}),
               "params": asdict(params), "bath": asdict(bath), "points": config.freeze_points,
               "sector": config.freeze_sector}

        def compute():
            print(f"🕑 Sweeping the K(4) spectrum over {config.freeze_points} points")
            model = K4Model(SquareLatticeInstance.ferromagnetic(), params)
            diagnostics = freeze_diagnostics(model, schedule, bath, points=config.freeze_points,
                                             sector=config.freeze_sector)
            return diagnostics.to_dict(orient="list")

        diagnostics = pd.DataFrame(self.cache.cached_json("freeze_diagnostics", key, compute))
        diagnostics.attrs["ds"] = 1e-3

        estimates = []
        for t_f in config.anneal_times:
            estimates.append(freeze_from_diagnostics(diagnostics, schedule.with_anneal_time(t_f), bath, params,
                                                     cell_mode=CellMode.TRUNCATED4))
        return diagnostics, estimates

    def final_temperature(self) -> float:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            schedule = self.config.schedule(self.config.sampled_anneal_time)
        return anneal_to_effective(schedule, 1.0, self.config.alpha, self.config.alpha_s,
                                   self.config.cell_mode_value, self.config.bath.temperature)[0]


def cmd_enumerate(pipeline: Pipeline):
    print("🕑 Enumerating 3×3 instance classes")
    classes = pipeline.class_list()
    print(f"ℹ Found {len(classes)} classes")
    pipeline.write_json({"n_classes": len(classes), "classes": write_class_list(classes)}, "classes.json")


def cmd_census(pipeline: Pipeline):
    print(f"🕑 Classifying spins on a {pipeline.config.grid_points}² grid over [0, {pipeline.config.window:g})²")
    classifications = pipeline.classifications()
    records = [record for class_id in sorted(classifications) for record in classifications[class_id][0]]

    pipeline.write_csv(census_table(records), "census.csv")
    transitions = []
    for class_id in sorted(classifications):
        class_records, class_transitions = classifications[class_id]
        transitions += class_transitions.to_json_records(class_id, [record.spin_type for record in class_records])
    pipeline.write_json({"transitions": transitions}, "transitions.json")
    summary = census_summary(records)
    pipeline.write_text(summary + "\n", "census.md")
    print(summary)


def cmd_freeze(pipeline: Pipeline):
    diagnostics, estimates = pipeline.freeze_estimates()
    table = diagnostics.copy()
    for estimate in estimates:
        table[f"inv_quench_rate_{estimate.t_f:g}"] = estimate.diagnostics["inv_quench_rate"].to_numpy()
        if estimate.freeze_fraction is None:
            print(f"ℹ t_f = {estimate.t_f:g} μs: {estimate.regime}")
        else:
            print(f"ℹ t_f = {estimate.t_f:g} μs: freezes at t/t_f = {estimate.freeze_fraction:.3f} "
                  f"({estimate.regime})")
    pipeline.write_csv(table, "freeze_diagnostics.csv")
    points = pd.DataFrame([{"t_f": estimate.t_f, "freeze_fraction": estimate.freeze_fraction,
                            "regime": estimate.regime, "T_star": estimate.T_star, "delta_star": estimate.delta_star}
                           for estimate in estimates])
    pipeline.write_csv(points, "freeze_points.csv")


def _freeze_point(pipeline: Pipeline) -> tuple[Optional[float], Optional[float]]:
    config = pipeline.config
    if config.T_star is not None and config.delta_star is not None:
        return config.T_star, config.delta_star
    if config.generator != "kz_frozen":
        return None, None
    _, estimates = pipeline.freeze_estimates()
    estimate = next((estimate for estimate in estimates if estimate.t_f == config.sampled_anneal_time), None)
    if estimate is None:
        raise ConfigError(f"Anneal time {config.sampled_anneal_time} is not among {list(config.anneal_times)}")
    if estimate.T_star is None:
        raise ScheduleRangeError(f"The anneal at t_f = {estimate.t_f:g} μs has no freeze point on the (T, Δ) plane "
                                 f"({estimate.regime})")
    return estimate.T_star, estimate.delta_star


def cmd_sample(pipeline: Pipeline):
    config = pipeline.config
    T_star, delta_star = _freeze_point(pipeline)
    if T_star is not None:
        print(f"ℹ Freezing at T* = {T_star:.4g}, Δ* = {delta_star:.4g}")

    selected = pipeline.selected_classes()
    tasks = [(class_id, instance, config, T_star, delta_star, pipeline.config_hash) for class_id, instance in selected]
    print(f"🕑 Sampling {len(tasks)} classes with the {config.generator} generator")
    for samples in _parallel_map(_sample_task, tasks, config.jobs):
        filepath = pipeline.output_path("samples", f"class_{samples.class_id:03d}.csv")
        samples.to_file(filepath)
    print(f"💾 Saved {len(tasks)} sample sets to {pipeline.output_path('samples')}")


def _load_samples(pipeline: Pipeline, class_ids: Iterable[int]) -> dict[int, SampleSet]:
    samples = {}
    for class_id in class_ids:
        filepath = pipeline.output_path("samples", f"class_{class_id:03d}.csv")
        if os.path.isfile(filepath):
            samples[class_id] = SampleSet.from_file(filepath)
    return samples


def cmd_analyze(pipeline: Pipeline):
    config = pipeline.config
    classifications = pipeline.classifications()
    selected = dict(pipeline.selected_classes())
    samples = _load_samples(pipeline, selected)
    if not samples:
        raise FileNotFoundError(f"No sample sets found in {pipeline.output_path('samples')}; run the sample "
                                f"command first")

    grid_axis = config.grid
    grids = {class_id: pipeline.cache.magnetization_grid(selected[class_id], grid_axis, grid_axis)
             for class_id in samples}
    spin_types = {class_id: [record.spin_type for record in classifications[class_id][0]]
                  for class_id in classifications}

    disagreements = disagreement_grid(samples, grids, spin_types, grid_axis, grid_axis, mode=config.mode)
    T_best, delta_best = disagreements.argmin_point
    print(f"ℹ Best agreement at T = {T_best:.3g}, Δ = {delta_best:.3g}: {disagreements.min_count:g} of "
          f"{disagreements.denominator} transitioning spins disagree")
    pipeline.write_csv(disagreements.to_frame(), "disagreement.csv")

    first = next(iter(samples.values()))
    freeze_point = None
    if first.metadata.get("T_star") is not None:
        freeze_point = (first.metadata["T_star"], first.metadata["delta_star"])
    render_disagreement_svg(disagreements, pipeline.output_path("disagreement.svg"), slack_count=config.slack,
                            freeze_point=freeze_point, title=f"{config.generator}, slack {config.slack:g}")
    print(f"💾 Saved {pipeline.output_path('disagreement.svg')}")

    T_final = pipeline.final_temperature()
    reports = []
    for class_id, class_samples in samples.items():
        reference = final_equilibrium_signs(selected[class_id], T_final)
        reports.append(count_defects(class_samples, reference, spin_types[class_id], label=config.generator))
    report = merge_defect_reports(reports, normalization=config.normalization)
    print(f"ℹ Type I defect rate {report.rate:.4f} ({report.defects} of {report.spin_reads} spin reads)")
    pipeline.write_csv(defect_report_table([report]), "defects.csv")


def cmd_export(pipeline: Pipeline):
    config = pipeline.config
    classifications = pipeline.classifications()
    selected = dict(pipeline.selected_classes())
    entries = [(transitions, [record.spin_type for record in records])
               for records, transitions in classifications.values()]

    density = transition_density(entries, window=(config.window, config.window))
    pipeline.write_csv(density.to_frame(), "transition_density.csv")

    print(f"🕑 Computing the equilibrium defect curve over {len(selected)} classes")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        schedule = config.schedule(config.sampled_anneal_time)
        curve = equilibrium_defect_curve([(selected[class_id], [record.spin_type for record in records])
                                          for class_id, (records, _) in classifications.items()],
                                         schedule, config.alpha, config.alpha_s, config.cell_mode_value,
                                         config.bath.temperature, points=config.curve_points)
    pipeline.write_csv(curve, "equilibrium_curve.csv")

    if config.export_grids:
        grid_axis = config.grid
        for class_id, instance in sorted(selected.items()):
            grid = pipeline.cache.magnetization_grid(instance, grid_axis, grid_axis)
            pipeline.write_csv(magnetization_frame(grid, grid_axis, grid_axis), "grids",
                               f"class_{class_id:03d}.csv")


COMMANDS = {
    "enumerate": cmd_enumerate,
    "census": cmd_census,
    "freeze": cmd_freeze,
    "sample": cmd_sample,
    "analyze": cmd_analyze,
    "export": cmd_export,
}


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"🗙 {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file (default $KZFREEZE_CONFIG or user_config.json)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="Override a configuration key, e.g. --set bath.eta=0.1")
    common.add_argument("--cache-dir", help="Cache folder (default $KZFREEZE_CACHE, cache.dir or .kzcache)")
    common.add_argument("--output-dir", help="Output folder")
    common.add_argument("--jobs", type=int, help="Worker processes")
    common.add_argument("--window", type=float, help="Upper limit of the T and Δ axes")
    common.add_argument("--grid-points", type=int, help="Grid points along each axis")
    common.add_argument("--seed", type=int, help="Sampler seed")
    common.add_argument("--reads", type=int, help="Reads per class")
    common.add_argument("--generator", choices=GENERATORS, help="Sample generator")

    parser = _ArgumentParser(prog=TOOL_NAME, description="Superspin Kibble-Zurek freezing simulator")
    parser.add_argument("--version", action="version", version=f"{TOOL_NAME} {TOOL_VERSION}")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)
    subparsers.add_parser("enumerate", parents=[common], help="Enumerate the symmetry classes of 3×3 instances")
    subparsers.add_parser("census", parents=[common], help="Classify every spin and trace its transitions")
    subparsers.add_parser("freeze", parents=[common], help="Estimate freeze points of the configured anneal times")
    subparsers.add_parser("sample", parents=[common], help="Generate synthetic sample sets")
    subparsers.add_parser("analyze", parents=[common], help="Disagreement grid and defect rates of sample sets")
    subparsers.add_parser("export", parents=[common], help="Transition density and equilibrium defect curves")
    return parser


def _format_warning(message, category, filename, lineno, line=None):
    return f"⚠ {category.__name__}: {message}\n"


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    warnings.formatwarning = _format_warning

    try:
        config = RunConfig.from_sources(args.config, args.set, cache_dir=args.cache_dir, output_dir=args.output_dir,
                                        jobs=args.jobs, window=args.window, grid_points=args.grid_points,
                                        seed=args.seed, reads=args.reads, generator=args.generator)
        COMMANDS[args.command](Pipeline(config))
    except (ConfigError, SamplerConfigError, EmbeddingScaleError, ScheduleFormatError) as e:
        print(f"🗙 {e}", file=sys.stderr)
        return EXIT_USAGE
    except (EigensolverError, EigensolverConvergenceError, RelaxationError, DimensionOverflowError,
            ScheduleRangeError) as e:
        print(f"🗙 Numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as e:
        print(f"🗙 {e}", file=sys.stderr)
        return EXIT_IO

    print(f"✅ {args.command} finished")
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
