"""End-to-end experiment runner and table export."""

from __future__ import annotations

import json
import re
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import OBSERVABLE_RE, ConfigError, ExperimentConfig, parse_config
from .distribution import (
    ComparisonReport,
    EmpiricalDistribution,
    GaussianReference,
    SamplingPlan,
    TwoModeModel,
    compare,
    sample_signal,
    two_mode_fit,
)
from .eigensolver import LanczosConfig
from .hamiltonian import sigma_z_site
from .quench import (
    ObservableSeries,
    QuenchSpec,
    QuenchSpectrum,
    exact_moments,
    loschmidt_series,
    observable_series,
    quench_spectrum,
)
from .scaling import (
    ProbeResult,
    fidelity_scaling_probe,
    matrix_element_scaling_probe,
    weight_scaling_probe,
)

log = logging.getLogger(__name__)

DENSITY_GRID = 401
DATA_SUFFIX = ".tsv"
RUN_INFO = "run_info.json"


@dataclass
class ObservableResult:
    name: str
    series: ObservableSeries
    mean: float
    variance: float
    empirical: EmpiricalDistribution
    references: dict = field(default_factory=dict)
    comparisons: dict[str, ComparisonReport] = field(default_factory=dict)


@dataclass
class ResultBundle:
    config: ExperimentConfig
    spectrum: QuenchSpectrum | None = None
    observables: dict[str, ObservableResult] = field(default_factory=dict)
    scaling: dict[str, ProbeResult] = field(default_factory=dict)
    wall_time: float = 0.0

    def summary(self) -> dict:
        out: dict = {"version": __version__, "seed": self.config.seed}
        if self.spectrum is not None:
            qs = self.spectrum
            top = np.sort(qs.weights)[::-1]
            out["spectrum"] = {
                "retained_states": len(qs),
                "deficit": qs.deficit,
                "purity": qs.purity,
                "ground_energy_pre": qs.ground_energy_pre,
                "ground_energy_post": float(qs.energies[0]),
                "p0": float(qs.weights[0]),
                "largest_weights": top[:3].tolist(),
                "sum_largest_three": float(top[:3].sum()),
            }
        for name, res in self.observables.items():
            emp = res.empirical
            entry = {
                "exact_mean": res.mean,
                "exact_variance": res.variance,
                "terms": int(res.series.frequencies.size),
                "sample_mean": emp.sample_mean,
                "sample_variance": emp.sample_variance,
                "sample_skewness": emp.sample_skewness,
                "sample_excess_kurtosis": emp.sample_excess_kurtosis,
                "mean_standard_error": emp.standard_error,
                "variance_standard_error": emp.variance_standard_error,
                "degenerate": emp.degenerate,
            }
            for ref, report in res.comparisons.items():
                entry[ref] = {"ks_distance": report.ks_distance, "sup_norm_binned": report.sup_norm_binned}
                model = res.references[ref]
                if isinstance(model, TwoModeModel):
                    entry[ref].update(mean=model.mean, A=model.A, B=model.B, omega_A=model.omega_A, omega_B=model.omega_B)
            out[name] = entry
        for name, probe in self.scaling.items():
            out.setdefault("scaling", {})[name] = {
                "exponent": probe.fit.exponent,
                "amplitude": probe.fit.amplitude,
                "r_squared": probe.fit.r_squared,
                "points": [list(p) for p in probe.fit.points],
            }
        return out


def lanczos_config(config: ExperimentConfig) -> LanczosConfig:
    return LanczosConfig(max_krylov=config.max_krylov, residual_tol=config.residual_tol)


def observable_file_stem(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", name).strip("_")


def _series_for(name: str, qs: QuenchSpectrum, L: int) -> ObservableSeries:
    match = OBSERVABLE_RE.match(name)
    if match.group(2) is None:
        return loschmidt_series(qs)
    return observable_series(qs, qs.eigensystem, sigma_z_site(L, int(match.group(2))), name=name)


def run(config: ExperimentConfig, threads: int = 1) -> ResultBundle:
    """Ground state, quench spectrum, series, sampling and reference comparisons."""
    if config.L is None:
        raise ConfigError("run needs a chain length", field="model.L")
    start = time.perf_counter()
    bundle = ResultBundle(config)
    q = QuenchSpec.field_quench(config.L, config.kappa, config.h, config.dh)
    qs = quench_spectrum(q, config.sum_rule_accuracy, config.method, lanczos_config(config))
    bundle.spectrum = qs
    log.info("quench spectrum: %d states, deficit %.3e", len(qs), qs.deficit)
    plan = SamplingPlan(config.horizon, config.samples, config.seed, config.bins, config.hist_range)
    for name in config.observables:
        series = _series_for(name, qs, config.L)
        mean, variance = exact_moments(series)
        emp = sample_signal(series, plan, threads)
        res = ObservableResult(name, series, mean, variance, emp)
        if not emp.degenerate:
            if "two_mode" in config.analysis and series.frequencies.size:
                res.references["two_mode"] = two_mode_fit(series)
            if "gaussian" in config.analysis and emp.sample_variance > 0:
                res.references["gaussian"] = GaussianReference(emp.sample_mean, emp.sample_std)
            for ref, model in res.references.items():
                res.comparisons[ref] = compare(emp, model)
        bundle.observables[name] = res
    if config.scaling_probes:
        run_scaling(config, bundle)
    bundle.wall_time = time.perf_counter() - start
    return bundle


def run_scaling(config: ExperimentConfig, bundle: ResultBundle | None = None) -> ResultBundle:
    bundle = bundle or ResultBundle(config)
    start = time.perf_counter()
    lz = lanczos_config(config)
    sizes = config.scaling_sizes
    for probe in config.scaling_probes:
        if probe == "weight":
            result = weight_scaling_probe(config.kappa, config.h, config.dh, sizes, config.sum_rule_accuracy, lz)
        elif probe == "fidelity":
            result = fidelity_scaling_probe(config.kappa, config.h, config.dh, sizes, config.scaling_regime, lz)
        else:
            extensive = probe == "matrix_element_extensive"
            result = matrix_element_scaling_probe(config.kappa, config.h, sizes, extensive, lanczos=lz)
        bundle.scaling[probe] = result
    bundle.wall_time += time.perf_counter() - start
    return bundle


# --- export ------------------------------------------------------------------


def _num(x) -> str:
    return repr(float(x))


def provenance_lines(config: ExperimentConfig) -> list[str]:
    lines = [f"# quenchstat {__version__}", f"# seed = {config.seed}", "# config:"]
    lines += [f"#   {line}" if line else "#" for line in config.to_ini().splitlines()]
    return lines


def read_provenance(path) -> ExperimentConfig:
    """Recover the configuration echoed in a table's comment header."""
    body, inside = [], False
    for line in Path(path).read_text().splitlines():
        if not line.startswith("#"):
            break
        if line == "# config:":
            inside = True
        elif inside:
            body.append(line[4:] if line.startswith("#   ") else "")
    return parse_config("\n".join(body))


def _write_table(path: Path, config, header, rows) -> None:
    lines = provenance_lines(config)
    lines.append("\t".join(header))
    for row in rows:
        lines.append("\t".join(v if isinstance(v, str) else _num(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def read_table(path) -> tuple[list[str], np.ndarray]:
    rows = [line for line in Path(path).read_text().splitlines() if not line.startswith("#")]
    header = rows[0].split("\t")
    data = np.array([[float(x) for x in row.split("\t")] for row in rows[1:]]) if len(rows) > 1 else np.empty((0, len(header)))
    return header, data


def _density_table(model, emp: EmpiricalDistribution):
    lo, hi = emp.bin_edges[0], emp.bin_edges[-1]
    singular = np.asarray(getattr(model, "singular_points", ()), dtype=float)
    grid = np.unique(np.concatenate([np.linspace(lo, hi, DENSITY_GRID), singular[(singular >= lo) & (singular <= hi)]]))
    dens = np.asarray(model.pdf(grid), dtype=float)
    flags = np.isin(grid, singular).astype(float)
    return [(f, d, s) for f, d, s in zip(grid, dens, flags)]


def export_tables(bundle: ResultBundle, directory) -> list[Path]:
    """Write plot-ready tab-separated tables, ``summary.json`` and ``run_info.json``.

    Everything except ``run_info.json`` (wall time) is a deterministic
    function of the configuration and seed.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"output directory {directory} does not exist")
    config = bundle.config
    written = []

    def table(name, header, rows):
        path = directory / f"{name}{DATA_SUFFIX}"
        _write_table(path, config, header, rows)
        written.append(path)

    qs = bundle.spectrum
    if qs is not None:
        if abs(float(np.sum(qs.weights)) + qs.deficit - 1.0) > 1e-12:
            raise ValueError("sum rule bookkeeping broken at export")
        table(
            "spectrum",
            ["n", "energy", "overlap", "weight"],
            [(str(n), e, c, p) for n, (e, c, p) in enumerate(zip(qs.energies, qs.overlaps, qs.weights))],
        )
    for name, res in bundle.observables.items():
        stem = observable_file_stem(name)
        emp = res.empirical
        norm = float(np.sum(emp.densities * np.diff(emp.bin_edges)))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"histogram of {name} not normalized ({norm!r})")
        table(f"{stem}_series", ["omega", "coefficient"], zip(res.series.frequencies, res.series.coefficients))
        table(f"{stem}_samples", ["t", "value"], zip(emp.times, emp.samples))
        table(
            f"{stem}_histogram",
            ["bin_lo", "bin_hi", "density"],
            zip(emp.bin_edges[:-1], emp.bin_edges[1:], emp.densities),
        )
        for ref, model in res.references.items():
            table(f"{stem}_{ref}_density", ["f", "density", "singular_flag"], _density_table(model, emp))
    if bundle.scaling:
        rows = []
        for probe, result in bundle.scaling.items():
            for L, y in result.fit.points:
                rows.append((probe, str(int(L)), y, float(result.fit.predict(L)), result.fit.exponent, result.fit.r_squared))
        table("scaling_fits", ["probe", "L", "value", "fitted", "exponent", "r_squared"], rows)
    summary = {"config": config.to_ini(), **bundle.summary()}
    path = directory / "summary.json"
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    written.append(path)
    info = directory / RUN_INFO
    info.write_text(json.dumps({"wall_time_seconds": bundle.wall_time, "version": __version__}, indent=2) + "\n")
    written.append(info)
    return written
