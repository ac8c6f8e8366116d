"""Named experiments and the parallel sweep runner."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import __version__, dynamics, hilbert, observables as ob, operators, prethermal, scars
from .config import ExperimentConfig, Quantity
from .operators import DeformationParams, RydbergParams

log = logging.getLogger(__name__)


@lru_cache(maxsize=32)
def revival_period(hamiltonian: str, L: int, boundary: str, deformation: DeformationParams,
                   rydberg: RydbergParams) -> float:
    """Calibrated tau_r of |Z2>; the NNN-perturbed model uses the unperturbed PXP value."""
    base = "pxp" if hamiltonian == "pxp+nnn" else hamiltonian
    kw = {"boundary": boundary, "deformation": deformation, "rydberg": rydberg}
    return dynamics.neel_revival_period(base, L, **kw)


def _value(p, key):
    v = p[key]
    return v.value if isinstance(v, Quantity) else v


def _opt(p, key):
    return None if p[key] is None else _value(p, key)


def model_params(p):
    deformation = DeformationParams(_value(p, "h0"), int(_value(p, "n_max")))
    rydberg = RydbergParams(_value(p, "Omega"), _opt(p, "V1"), _opt(p, "V2"), _opt(p, "delta"))
    return deformation, rydberg


def tau_r_for(p) -> float:
    deformation, rydberg = model_params(p)
    return revival_period(p["hamiltonian"], int(p["L"]), p["boundary"], deformation, rydberg)


def resolve_tau(p) -> float:
    q = p["tau"]
    return q.resolve(tau_r=tau_r_for(p) if q.unit == "tau_r" else None)


def drive_spec(p, **overrides) -> dynamics.DriveSpec:
    deformation, rydberg = model_params(p)
    tau = overrides.pop("tau", None) or resolve_tau(p)
    pulse_width = p["pulse_width"].resolve(tau=tau) if p["pulse"] == "finite" else 0.0
    kw = dict(
        L=int(p["L"]), theta=_value(p, "theta"), tau=tau, hamiltonian=p["hamiltonian"],
        n_periods=int(p["n_periods"]), pulse=p["pulse"], pulse_width=pulse_width,
        amplitude_mode=p["amplitude_mode"], nnn=_value(p, "nnn"), boundary=p["boundary"],
        deformation=deformation, rydberg=rydberg, mode=p["mode"],
    )
    kw.update(overrides)
    return dynamics.DriveSpec(**kw)


def initial_state(name: str, basis, seed: int = 0) -> np.ndarray:
    if name == "z2":
        return hilbert.neel_states(basis)[0]
    if name == "z2p":
        return hilbert.neel_states(basis)[1]
    if name == "z4":
        return hilbert.density_wave_state(basis, 4)
    if name == "zero":
        return basis.basis_vector(0)
    if name == "random":
        rng = np.random.default_rng(seed)
        v = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
        return v / np.linalg.norm(v)
    raise ValueError(f"unknown initial state {name!r}")


def _f2_and_entropy(spec, psi0, with_entropy: bool):
    names = ["imbalance", "entropy"] if with_entropy else ["imbalance"]
    rec = dynamics.run_drive(spec, psi0, names)
    f2 = ob.subharmonic_weight(rec["imbalance"], t1=spec.tau) if spec.n_periods >= 3 else float("nan")
    sent = ob.time_averaged_entropy(rec) if with_entropy else float("nan")
    return f2, sent


def exp_echo_scan(p):
    spec = drive_spec(p)
    basis = dynamics.model_basis(spec.hamiltonian, spec.L, spec.boundary)
    row = {}
    for name in p["initial"]:
        f2, sent = _f2_and_entropy(spec, initial_state(name, basis, p["seed"]), p["entropy"])
        row[f"f2_{name}"] = f2
        row[f"sent_{name}"] = sent
    return [row]


def exp_pairing(p):
    tau = resolve_tau(p)
    eps = np.pi - _value(p, "theta")
    spec = drive_spec(p, tau=tau)
    basis = dynamics.model_basis(spec.hamiltonian, spec.L, spec.boundary)
    H = dynamics.build_hamiltonian(spec, basis)
    rep = prethermal.pairing_scan(basis, H, [tau], eps, base=spec.hamiltonian)[0]
    top = np.sort(rep.overlaps)[::-1]
    row = {"tau_over_tau_r": tau / tau_r_for(p), "top_pair_gap": rep.top_pair_gap,
           "overlap_1": top[0], "overlap_2": top[1]}
    if p["spectra"]:
        row["_spectrum"] = [(float(e), float(o)) for e, o in zip(rep.quasi_energies, rep.overlaps)]
    return [row]


def exp_splitting(p):
    tau = resolve_tau(p)
    spec = drive_spec(p, tau=tau)
    basis = dynamics.model_basis(spec.hamiltonian, spec.L, spec.boundary)
    H = dynamics.build_hamiltonian(spec, basis)
    eps = np.pi - spec.theta
    gm = prethermal.ground_manifold(prethermal.sector_models(basis, H, tau, eps, spec.hamiltonian),
                                    basis=basis)
    return [{"delta_E": gm.delta_E, "gap": gm.gap, "cat_overlap_min": float(np.min(gm.cat_overlaps))}]


def exp_bloch(p):
    spec = drive_spec(p, hamiltonian="pxp" if p["hamiltonian"] == "deformed-pxp" else p["hamiltonian"])
    basis = dynamics.model_basis(spec.hamiltonian, spec.L, spec.boundary)
    deformation, _ = model_params(p)
    sub = scars.build_scar_subspace(basis, deformation, normalization=p["normalization"])
    psi0 = initial_state(p["initial"][0], basis, p["seed"])
    pts = scars.bloch_trajectory(spec, psi0, sub, sampling=p["sampling"], substeps=p["substeps"])
    return [{"t": q.t, "x": q.x, "y": q.y, "z": q.z, "parity_of_period": q.parity} for q in pts]


def exp_timescales(p):
    spec = drive_spec(p)
    basis = dynamics.model_basis(spec.hamiltonian, spec.L, spec.boundary)
    z2, _ = hilbert.neel_states(basis)
    rec = dynamics.run_drive(spec, z2, ["fidelity"])
    eps = np.pi - spec.theta
    H = dynamics.build_hamiltonian(spec, basis)
    models = prethermal.sector_models(basis, H, spec.tau, eps, spec.hamiltonian)
    rep = prethermal.pairing_report(models, z2)
    dE = prethermal.quasienergy_splitting(rep, eps)
    ts = prethermal.extract_timescales(rec["fidelity"], spec.tau, eps, delta_E=dE)
    per = ts.as_periods()
    nan = float("nan")
    return [{"tau": spec.tau, "T_s": per["T_s"], "T_b": per["T_b"] or nan, "T_g": per["T_g"] or nan,
             "T_g_dyn": per["T_g_dyn"] or nan, "delta_E": dE, "beat_peak_ratio": ts.beat_peak_ratio}]


def exp_ghz(p):
    spec = drive_spec(p)
    basis = dynamics.model_basis(spec.hamiltonian, spec.L, spec.boundary)
    z2, _ = hilbert.neel_states(basis)
    rec = dynamics.run_drive(spec, z2, ["ghz"], keep_states=True)
    i = int(np.argmax(rec["ghz"]))
    qfi = ob.quantum_fisher_information(rec.states[i], basis=basis)
    qfi_norm = ob.quantum_fisher_information(rec.states[i], operators.build_imbalance(basis))
    return [{"n_best": i, "ghz_fidelity": rec["ghz"][i], "qfi": qfi, "qfi_normalized": qfi_norm}]


def exp_correlator(p):
    spec = drive_spec(p)
    basis = dynamics.model_basis(spec.hamiltonian, spec.L, spec.boundary)
    H = dynamics.build_hamiltonian(spec, basis)
    eps = np.pi - spec.theta
    gm = prethermal.ground_manifold(prethermal.sector_models(basis, H, spec.tau, eps, spec.hamiltonian))
    U = dynamics.floquet_unitary(spec)
    grid = ob.spatiotemporal_correlator(gm.states[0], U, basis, int(p["n_T"]))
    rows = []
    for i, q in enumerate(grid.q):
        for j, w in enumerate(grid.omega):
            z = grid.values[i, j]
            rows.append({"q": q, "omega": w, "re": z.real, "im": z.imag, "abs": abs(z)})
    return rows


def subharmonic_line(imbalance) -> tuple[float, float]:
    """Frequency (cycles per period) of the strongest line near the subharmonic and its offset from 1/2."""
    f = prethermal.spectral_line(imbalance, 0.25, 0.5)
    return f, 0.5 - f


def line_zero_crossing(thetas, offsets) -> float:
    """Kick angle where a straight-line fit of the beat offset vs theta reaches zero."""
    slope, intercept = np.polyfit(np.asarray(thetas, float), np.asarray(offsets, float), 1)
    return float(-intercept / slope)


def exp_pulse_scan(p):
    spec = drive_spec(p)
    basis = dynamics.model_basis(spec.hamiltonian, spec.L, spec.boundary)
    z2, _ = hilbert.neel_states(basis)
    rec = dynamics.run_drive(spec, z2, ["imbalance"])
    f2 = ob.subharmonic_weight(rec["imbalance"], t1=spec.tau)
    line, offset = subharmonic_line(rec["imbalance"])
    return [{"f2": f2, "line_frequency": line, "beat_offset": offset}]


def exp_custom(p):
    spec = drive_spec(p)
    basis = dynamics.model_basis(spec.hamiltonian, spec.L, spec.boundary)
    psi0 = initial_state(p["initial"][0], basis, p["seed"])
    rec = dynamics.run_drive(spec, psi0, list(p["observables"]), sampling=p["sampling"],
                             substeps=p["substeps"])
    return [{"t": t, **{k: float(v[i]) for k, v in rec.series.items()}} for i, t in enumerate(rec.times)]


EXPERIMENT_FUNCS = {
    "echo-scan": exp_echo_scan,
    "tau-scan": exp_echo_scan,
    "nnn-scan": exp_echo_scan,
    "pairing": exp_pairing,
    "splitting": exp_splitting,
    "bloch": exp_bloch,
    "timescales": exp_timescales,
    "ghz": exp_ghz,
    "correlator": exp_correlator,
    "pulse-scan": exp_pulse_scan,
    "custom": exp_custom,
}


def _run_point(args):
    index, point = args
    try:
        return index, EXPERIMENT_FUNCS[point["experiment"]](point), None
    except Exception as exc:  # recorded as an error row, the sweep continues
        log.warning("sweep point %d failed: %s", index, exc)
        return index, [], f"{type(exc).__name__}: {exc}"


@dataclass
class SweepResult:
    config: ExperimentConfig
    axes: list[str]
    rows: list[dict]
    wall_time: float = 0.0
    errors: list[tuple[int, str]] = field(default_factory=list)
    extras: list[dict] = field(default_factory=list)

    @property
    def columns(self) -> list[str]:
        cols = list(self.axes)
        for r in self.rows:
            for k in r:
                if k not in cols:
                    cols.append(k)
        return cols

    def metadata(self, timestamp: bool = True) -> list[str]:
        lines = [f"kickscar {__version__}", *self.config.echo()]
        if timestamp:
            lines.append(f"wall_time = {self.wall_time:.3f} s")
        return lines

    def to_csv(self, fh, timestamp: bool = True) -> None:
        for line in self.metadata(timestamp):
            fh.write(f"# {line}\n")
        cols = self.columns
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows:
            w.writerow([_fmt(r.get(c, "")) for c in cols])

    def to_jsonl(self, fh, timestamp: bool = True) -> None:
        fh.write(json.dumps({"metadata": self.metadata(timestamp)}) + "\n")
        for r in self.rows:
            fh.write(json.dumps({k: _json_value(v) for k, v in r.items()}, sort_keys=False) + "\n")

    def text(self, fmt: str = "csv", timestamp: bool = True) -> str:
        buf = io.StringIO()
        (self.to_csv if fmt == "csv" else self.to_jsonl)(buf, timestamp)
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, Quantity):
        v = v.value
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _json_value(v):
    if isinstance(v, Quantity):
        v = v.value
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> SweepResult:
    """Evaluate every sweep point (in parallel when ``workers > 1``), ordered by sweep index."""
    workers = cfg.get("workers", 1) if workers is None else workers
    points = list(enumerate(cfg.points()))
    start = time.perf_counter()
    if workers > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_point, points))
    else:
        results = [_run_point(pt) for pt in points]
    results.sort(key=lambda r: r[0])
    axes = [name for name, _ in cfg.sweeps]
    rows, errors, extras = [], [], []
    for (index, point), (_, point_rows, err) in zip(points, results):
        swept = {name: point[name] for name in axes}
        if err is not None:
            errors.append((index, err))
            rows.append({**swept, "error": err})
            continue
        for r in point_rows:
            spectrum = r.pop("_spectrum", None)
            if spectrum is not None:
                extras.append({**swept, "spectrum": spectrum})
            rows.append({**swept, **r})
    return SweepResult(cfg, axes, rows, time.perf_counter() - start, errors, extras)


def write_spectra_csv(result: SweepResult, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow([*result.axes, "quasi_energy", "overlap"])
    for extra in result.extras:
        swept = [_fmt(extra[a]) for a in result.axes]
        for e, o in extra["spectrum"]:
            w.writerow([*swept, repr(e), repr(o)])
