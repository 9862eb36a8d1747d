"""Sweep orchestration: configs, seeding, result trees, and manifests.

A run is fully described by a RunConfig; the same config always
produces a bit-identical result tree, which is enforced by hashing the
canonical config JSON into the output directory name, deriving every
random seed from the (master seed, state, strength, realisation)
coordinates, and writing a manifest of artifact content hashes last.

Turbulence strengths are converted to Fried parameters with the
fundamental-mode convention throughout the sweeps.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from skysim.channel import CountModel, effective_channel
from skysim.modes import Grid2D, make_grid
from skysim.states import (
    BipartitePureState,
    DensityMatrix4,
    catalog,
    density_to_json,
    ensemble_average,
    reconstruct_density,
    record_to_json,
    simulate_tomography,
)
from skysim.turbulence import TurbulenceSpec, generate_screen, omega_to_fried
from skysim.witnesses import WitnessReport, discord, evaluate_witnesses
from skysim.topology import DegenerateFieldError, fibonacci_sphere, skyrmion_number

__all__ = [
    "DEFAULT_WAIST",
    "RunConfig",
    "config_to_json",
    "config_from_json",
    "config_hash",
    "derive_seed",
    "run",
    "run_static",
    "run_ensemble",
    "run_calibration",
    "fluctuation_bounds",
    "write_manifest",
]

DEFAULT_WAIST = 0.9375e-3

_WITNESS_COLUMNS = (
    "concurrence",
    "fidelity",
    "purity",
    "mutual_information",
    "classical_correlation",
    "discord",
    "skyrmion",
)


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce a sweep."""

    states: tuple[str, ...] = ("0_1",)
    omegas: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0)
    realisations: int = 10
    grid_n: int = 256
    extent_factor: float = 16.0
    w0: float = DEFAULT_WAIST
    master_seed: int = 0
    mode: str = "static"
    n_subharmonics: int = 5
    count_model: CountModel | None = None
    use_tomography: bool = True
    window: int = 10

    def __post_init__(self):
        known = catalog()
        for s in self.states:
            if s not in known:
                raise ValueError(f"unknown state id {s!r}")
        if self.realisations < 1:
            raise ValueError("need at least one realisation")
        if self.mode not in ("static", "ensemble"):
            raise ValueError(f"mode must be 'static' or 'ensemble', got {self.mode}")
        if self.master_seed < 0:
            raise ValueError("master seed must be non-negative")
        for omega in self.omegas:
            if omega < 0:
                raise ValueError(f"turbulence strength must be >= 0, got {omega}")

    def grid(self) -> Grid2D:
        return make_grid(self.grid_n, self.extent_factor * self.w0)


def config_to_json(config: RunConfig) -> dict:
    doc = asdict(config)
    doc["states"] = list(config.states)
    doc["omegas"] = [float(o) for o in config.omegas]
    if config.count_model is not None:
        doc["count_model"] = asdict(config.count_model)
    return doc


def config_from_json(doc: dict) -> RunConfig:
    doc = dict(doc)
    doc["states"] = tuple(doc["states"])
    doc["omegas"] = tuple(float(o) for o in doc["omegas"])
    if doc.get("count_model") is not None:
        doc["count_model"] = CountModel(**doc["count_model"])
    return RunConfig(**doc)


def config_hash(config: RunConfig) -> str:
    text = json.dumps(config_to_json(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def derive_seed(
    master_seed: int, state_idx: int, omega_idx: int, realisation: int, stream: int = 0
) -> int:
    """Collision-free seed for one task, stable across runs and platforms."""
    seq = np.random.SeedSequence(
        (master_seed, state_idx, omega_idx, realisation, stream)
    )
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n")


def _fmt(value) -> str:
    if value is None:
        return ""
    return f"{value:.12g}"


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def write_manifest(run_dir: Path, cfg_hash: str, incomplete: list[str]) -> Path:
    """Hash every artifact in the tree; written last by design."""
    artifacts = {}
    for p in sorted(run_dir.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            artifacts[str(p.relative_to(run_dir))] = hashlib.sha256(
                p.read_bytes()
            ).hexdigest()
    doc = {
        "config_hash": cfg_hash,
        "artifacts": artifacts,
        "incomplete": sorted(incomplete),
    }
    path = run_dir / "manifest.json"
    _write_json(path, doc)
    return path


@dataclass
class _TaskResult:
    state_id: str
    omega: float
    realisation: int
    rho: DensityMatrix4 | None = None
    report: WitnessReport | None = None
    skyrmion: float | None = None
    sky_details: dict | None = None
    record_doc: dict | None = None
    renormalization: float | None = None
    error: str | None = None


def _run_single(
    config: RunConfig,
    state_id: str,
    state: BipartitePureState,
    state_idx: int,
    omega: float,
    omega_idx: int,
    k: int,
    grid: Grid2D,
    target: DensityMatrix4,
    discord_ref: float,
) -> _TaskResult:
    out = _TaskResult(state_id=state_id, omega=omega, realisation=k)
    try:
        screen_seed = derive_seed(config.master_seed, state_idx, omega_idx, k)
        r0 = omega_to_fried(omega, 0, config.w0)
        screen = generate_screen(
            TurbulenceSpec(
                r0=r0,
                grid=grid,
                seed=screen_seed,
                n_subharmonics=config.n_subharmonics,
            )
        )
        counts_seed = derive_seed(config.master_seed, state_idx, omega_idx, k, stream=1)
        record = simulate_tomography(
            state,
            screen=screen,
            w0=config.w0,
            count_model=config.count_model,
            seed=counts_seed,
            state_id=state_id,
            omega=omega,
        )
        out.record_doc = record_to_json(record)
        if config.use_tomography:
            rho, diag = reconstruct_density(record, return_diagnostics=True)
            out.renormalization = diag["renormalization"]
        else:
            channel = effective_channel(state, screen, config.w0)
            amps = state.branch_amplitudes
            psi = np.kron(np.eye(2), channel) @ np.array([amps[0], 0, 0, amps[1]])
            psi = psi / np.linalg.norm(psi)
            rho = DensityMatrix4(np.outer(psi, psi.conj()))
        out.rho = rho
        out.report = evaluate_witnesses(rho, target, discord_reference=discord_ref)
        number, details = skyrmion_number(
            rho, state, grid, config.w0, return_details=True
        )
        out.skyrmion = number
        out.sky_details = details
    except Exception as exc:  # noqa: BLE001 - failures become artifacts
        out.error = f"{type(exc).__name__}: {exc}"
    return out


def _result_doc(res: _TaskResult) -> dict:
    if res.error is not None:
        return {
            "state": res.state_id,
            "omega": res.omega,
            "realisation": res.realisation,
            "error": res.error,
            "incomplete": True,
        }
    rep = res.report
    details = dict(res.sky_details)
    details.pop("coverage_profile", None)
    details["center"] = list(details["center"])
    return {
        "state": res.state_id,
        "omega": res.omega,
        "realisation": res.realisation,
        "record": res.record_doc,
        "renormalization": res.renormalization,
        "density": density_to_json(res.rho),
        "witnesses": {
            "concurrence": rep.concurrence,
            "fidelity": rep.fidelity,
            "purity": rep.purity,
            "mutual_information": rep.mutual_information,
            "classical_correlation": rep.classical_correlation,
            "discord": rep.discord,
            "discord_normalized": rep.discord_normalized,
            "diagnostics": rep.diagnostics,
        },
        "skyrmion": {"number": res.skyrmion, **details},
    }


def _witness_row(res: _TaskResult) -> list:
    rep = res.report
    return [
        res.state_id,
        res.omega,
        res.realisation,
        rep.concurrence,
        rep.fidelity,
        rep.purity,
        rep.mutual_information,
        rep.classical_correlation,
        rep.discord,
        res.skyrmion,
    ]


def _summary_row(state_id: str, omega: float, done: list[_TaskResult]) -> list:
    row: list = [state_id, omega, len(done)]
    for col in _WITNESS_COLUMNS:
        vals = np.array(
            [
                r.skyrmion if col == "skyrmion" else getattr(r.report, col)
                for r in done
                if not (col == "skyrmion" and r.skyrmion is None)
            ]
        )
        if vals.size == 0:
            row += [None, None]
            continue
        row.append(float(vals.mean()))
        row.append(float(vals.std(ddof=1)) if vals.size > 1 else None)
    return row


def _omega_dirname(omega: float) -> str:
    return f"omega-{omega:.2f}"


def _prepare_run_dir(config: RunConfig, results_root) -> tuple[Path, str]:
    cfg_hash = config_hash(config)
    run_dir = Path(results_root) / cfg_hash[:12]
    run_dir.mkdir(parents=True, exist_ok=True)
    _write_json(run_dir / "config.json", config_to_json(config))
    return run_dir, cfg_hash


def run(config: RunConfig, results_root) -> Path:
    if config.mode == "ensemble":
        return run_ensemble(config, results_root)
    return run_static(config, results_root)


def run_static(config: RunConfig, results_root) -> Path:
    """Per-realisation pipeline: screen, tomography, witnesses, topology.

    Every realisation lands in its own JSON file; aggregate tables and
    the coverage profiles are written alongside, the manifest last.
    Failed realisations are captured as error artifacts instead of
    aborting the sweep.
    """
    run_dir, cfg_hash = _prepare_run_dir(config, results_root)
    grid = config.grid()
    cat = catalog()
    incomplete: list[str] = []
    witness_rows: list[list] = []
    summary_rows: list[list] = []
    coverage_dir = run_dir / "coverage"
    coverage_dir.mkdir(exist_ok=True)

    for state_idx, state_id in enumerate(config.states):
        state = cat[state_id]
        target = DensityMatrix4.from_pure(state)
        discord_ref = discord(target)
        for omega_idx, omega in enumerate(config.omegas):
            omega_dir = run_dir / state_id / _omega_dirname(omega)
            omega_dir.mkdir(parents=True, exist_ok=True)
            done: list[_TaskResult] = []
            coverage_rows: list[list] = []
            for k in range(config.realisations):
                res = _run_single(
                    config, state_id, state, state_idx, omega, omega_idx,
                    k, grid, target, discord_ref,
                )
                _write_json(omega_dir / f"realisation-{k}.json", _result_doc(res))
                if res.error is not None:
                    incomplete.append(f"{state_id}/{_omega_dirname(omega)}/{k}")
                    continue
                done.append(res)
                witness_rows.append(_witness_row(res))
                profile = res.sky_details["coverage_profile"]
                for d_idx, (direction, dot) in enumerate(zip(_DIRECTIONS, profile)):
                    coverage_rows.append([k, d_idx, *direction, float(dot)])
            summary_rows.append(_summary_row(state_id, omega, done))
            _write_csv(
                coverage_dir / f"{state_id}-{_omega_dirname(omega)}.csv",
                ["realisation", "direction", "x", "y", "z", "max_dot"],
                coverage_rows,
            )
    _write_witness_tables(run_dir, witness_rows, summary_rows)
    write_manifest(run_dir, cfg_hash, incomplete)
    return run_dir


_DIRECTIONS = fibonacci_sphere()


def _write_witness_tables(run_dir, witness_rows, summary_rows):
    _write_csv(
        run_dir / "witnesses.csv",
        [
            "state",
            "omega",
            "realisation",
            "concurrence",
            "fidelity",
            "purity",
            "mutual_information",
            "classical_correlation",
            "discord",
            "skyrmion",
        ],
        witness_rows,
    )
    header = ["state", "omega", "n_ok"]
    for col in _WITNESS_COLUMNS:
        header += [f"{col}_mean", f"{col}_std"]
    _write_csv(run_dir / "summary.csv", header, summary_rows)


def run_ensemble(config: RunConfig, results_root) -> Path:
    """Average the reconstructed realisations before evaluating.

    Models detection slower than the channel fluctuations: witnesses
    and the wrapping number are computed once per strength, on the
    ensemble-averaged state. With one realisation this reduces exactly
    to the static pipeline.
    """
    run_dir, cfg_hash = _prepare_run_dir(config, results_root)
    grid = config.grid()
    cat = catalog()
    incomplete: list[str] = []
    witness_rows: list[list] = []
    summary_rows: list[list] = []

    for state_idx, state_id in enumerate(config.states):
        state = cat[state_id]
        target = DensityMatrix4.from_pure(state)
        discord_ref = discord(target)
        for omega_idx, omega in enumerate(config.omegas):
            omega_dir = run_dir / state_id / _omega_dirname(omega)
            omega_dir.mkdir(parents=True, exist_ok=True)
            rhos, seeds = [], []
            for k in range(config.realisations):
                res = _run_single(
                    config, state_id, state, state_idx, omega, omega_idx,
                    k, grid, target, discord_ref,
                )
                doc = (
                    {"error": res.error, "incomplete": True}
                    if res.error is not None
                    else {"density": density_to_json(res.rho), "record": res.record_doc}
                )
                doc.update({"state": state_id, "omega": omega, "realisation": k})
                _write_json(omega_dir / f"realisation-{k}.json", doc)
                if res.error is not None:
                    incomplete.append(f"{state_id}/{_omega_dirname(omega)}/{k}")
                    continue
                rhos.append(res.rho)
                seeds.append(res.record_doc["provenance"]["seed"])
            if not rhos:
                summary_rows.append(_summary_row(state_id, omega, []))
                continue
            avg = ensemble_average(rhos)
            report = evaluate_witnesses(avg, target, discord_reference=discord_ref)
            try:
                number, details = skyrmion_number(
                    avg, state, grid, config.w0, return_details=True
                )
                details = dict(details)
                details.pop("coverage_profile", None)
                details["center"] = list(details["center"])
                sky_doc = {"number": number, **details}
            except DegenerateFieldError as exc:
                number = None
                sky_doc = {"number": None, "error": str(exc)}
            mean = _TaskResult(
                state_id=state_id,
                omega=omega,
                realisation=-1,
                rho=avg,
                report=report,
                skyrmion=number,
            )
            _write_json(
                omega_dir / "ensemble.json",
                {
                    "state": state_id,
                    "omega": omega,
                    "n": len(rhos),
                    "seeds": seeds,
                    "density": density_to_json(avg),
                    "purity": report.purity,
                    "witnesses": _result_doc_witnesses(report),
                    "skyrmion": sky_doc,
                },
            )
            witness_rows.append(_witness_row(mean))
            summary_rows.append(_summary_row(state_id, omega, [mean]))
    _write_witness_tables(run_dir, witness_rows, summary_rows)
    write_manifest(run_dir, cfg_hash, incomplete)
    return run_dir


def _result_doc_witnesses(rep: WitnessReport) -> dict:
    return {
        "concurrence": rep.concurrence,
        "fidelity": rep.fidelity,
        "purity": rep.purity,
        "mutual_information": rep.mutual_information,
        "classical_correlation": rep.classical_correlation,
        "discord": rep.discord,
        "discord_normalized": rep.discord_normalized,
        "diagnostics": rep.diagnostics,
    }


def run_calibration(
    omegas,
    n_screens: int = 100,
    seed: int = 0,
    grid_n: int = 256,
    extent_factor: float = 16.0,
    w0: float = DEFAULT_WAIST,
    window: int = 10,
    n_subharmonics: int = 5,
) -> dict:
    """Fundamental-mode crosstalk spectra against the analytic survival.

    For each strength, propagates the zero-index mode through fresh
    screens and accumulates the output spectrum over indices within
    +-window. Returns spectra and survival tables ready for CSV export.
    """
    from skysim.channel import crosstalk_amplitude, survival_probability_analytic

    grid = make_grid(grid_n, extent_factor * w0)
    ells = list(range(-window, window + 1))
    spectra_rows, survival_rows = [], []
    for omega_idx, omega in enumerate(omegas):
        r0 = omega_to_fried(omega, 0, w0)
        powers = np.empty((n_screens, len(ells)))
        for k in range(n_screens):
            screen_seed = derive_seed(seed, 0, omega_idx, k)
            screen = generate_screen(
                TurbulenceSpec(
                    r0=r0, grid=grid, seed=screen_seed,
                    n_subharmonics=n_subharmonics,
                )
            )
            for j, ell_out in enumerate(ells):
                amp = crosstalk_amplitude(0, ell_out, screen, w0)
                powers[k, j] = abs(amp) ** 2
        mean = powers.mean(axis=0)
        std = powers.std(axis=0, ddof=1) if n_screens > 1 else np.zeros(len(ells))
        for j, ell_out in enumerate(ells):
            spectra_rows.append([omega, ell_out, float(mean[j]), float(std[j])])
        j0 = ells.index(0)
        survival_rows.append(
            [
                omega,
                float(mean[j0]),
                float(std[j0]),
                survival_probability_analytic(omega),
            ]
        )
    return {"spectra": spectra_rows, "survival": survival_rows, "window": window}


def fluctuation_bounds(rhos: list[DensityMatrix4], quantity) -> tuple[float, float]:
    """Bounds on a scalar from element-wise envelopes of an ensemble.

    Builds the entry-wise min and max matrices over the realisations,
    projects each back to a valid state (Hermitize, clamp eigenvalues,
    renormalize), and evaluates the quantity on both. The return pair
    is ordered low to high.
    """
    if len(rhos) < 2:
        raise ValueError("need at least two realisations for an envelope")
    stack = np.array([r.matrix for r in rhos])
    lo = stack.real.min(axis=0) + 1j * stack.imag.min(axis=0)
    hi = stack.real.max(axis=0) + 1j * stack.imag.max(axis=0)

    def project(m):
        m = (m + m.conj().T) / 2
        w, v = np.linalg.eigh(m)
        w = np.clip(w, 0.0, None)
        if w.sum() <= 0:
            raise ValueError("envelope collapsed to the zero matrix")
        m = (v * w) @ v.conj().T
        return DensityMatrix4(m / np.trace(m).real)

    values = sorted([quantity(project(lo)), quantity(project(hi))])
    return float(values[0]), float(values[1])
