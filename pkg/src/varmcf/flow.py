"""Time-discrete regularized mean curvature flow.

One step pushes the varifold forward by ``id + tau * h`` where h is the
regularized curvature field of the current state.  A trajectory records
the snapshots at the subdivision times together with per-step
diagnostics (mass, dissipation, the diffeomorphism certificate, Jacobian
range).  Between subdivision times the flow extends either by a linear
interpolation push or piecewise constantly; the two coincide at the
subdivision times.

Stepping is inherently sequential; everything inside a step is pure, and
a trajectory is an immutable append-only record.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .curvature import CurvatureField, QuadratureSpec, curvature_field, dissipation
from .errors import CertificateViolation, EngineError
from .kernel import Kernel
from .metric import bounded_lipschitz_distance
from .varifold import SampledMap, Varifold, first_variation, push_forward

__all__ = [
    "Subdivision",
    "FlowConfig",
    "StepDiagnostics",
    "FailureRecord",
    "Trajectory",
    "step",
    "evolve",
    "brakke_residual",
    "refinement_study",
    "RefinementRow",
    "interpolation_gap",
    "ConstantTest",
    "GaussianBump",
    "PolynomialBump",
    "write_trajectory_json",
    "read_trajectory_json",
    "write_diagnostics_csv",
    "write_atoms_csv",
]


@dataclass(frozen=True)
class Subdivision:
    """Strictly increasing times 0 = t_0 < ... < t_m = horizon."""

    times: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("a subdivision needs at least two times")
        if times[0] != 0.0:
            raise ValueError("subdivisions start at 0")
        if np.any(np.diff(times) <= 0.0):
            raise ValueError("subdivision times must be strictly increasing")
        if times[-1] > 1.0:
            warnings.warn(
                "horizon exceeds 1; the construction iterates identically but its "
                "guarantees are stated on [0, 1]",
                stacklevel=3,
            )
        times.setflags(write=False)
        object.__setattr__(self, "times", times)

    @classmethod
    def uniform(cls, steps: int, horizon: float = 1.0) -> "Subdivision":
        if steps < 1:
            raise ValueError("need at least one step")
        return cls(horizon * np.arange(steps + 1) / steps)

    @classmethod
    def dyadic(cls, level: int, horizon: float = 1.0) -> "Subdivision":
        """Uniform subdivision with 2**level steps."""
        if level < 0:
            raise ValueError("dyadic level must be >= 0")
        return cls.uniform(2**level, horizon)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    @property
    def delta(self) -> float:
        """Largest step size."""
        return float(np.max(np.diff(self.times)))


STEP_MODES = ("practical", "strict")


@dataclass(frozen=True)
class FlowConfig:
    """Everything needed to run a flow, minus the initial varifold.

    step_mode selects the admissibility gate: "practical" (default) checks
    the runtime certificate ``tau * |Dh|_inf <= diffeo_safety`` at every
    step, which is the mechanism that actually guarantees the pushes are
    diffeomorphic; "strict" additionally enforces the a-priori step
    bound ``strict_constant * delta <= (M + 1)^-3 eps^8`` up front, with a
    user-supplied constant (the theory leaves it implicit).
    """

    eps: float
    subdivision: Subdivision
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)
    diffeo_safety: float = 0.5
    step_mode: str = "practical"
    strict_constant: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if not 0.0 < self.diffeo_safety < 1.0:
            raise ValueError("diffeo_safety must lie in (0, 1)")
        if self.step_mode not in STEP_MODES:
            raise ValueError(f"step_mode must be one of {STEP_MODES}")


@dataclass(frozen=True)
class StepDiagnostics:
    index: int
    t_start: float
    t_end: float
    mass_before: float
    mass_after: float
    dissipation: float
    velocity_first_variation: float
    certificate: float
    safety: float
    jacobian_min: float
    jacobian_max: float
    mass_bound_ok: bool
    gate: str


@dataclass(frozen=True)
class FailureRecord:
    step: int
    time: float
    reason: str


@dataclass
class Trajectory:
    """Snapshots at subdivision times plus per-step diagnostics.

    ``fields[i]`` caches the curvature field of ``snapshots[i]`` (the one
    the step out of snapshot i used); missing entries are recomputed on
    demand.  ``failure`` is set when a run aborted at a certificate
    violation, in which case the snapshots up to the failing step are kept.
    """

    config: FlowConfig
    times: list[float]
    snapshots: list[Varifold]
    diagnostics: list[StepDiagnostics]
    fields: list[CurvatureField | None]
    failure: FailureRecord | None = None

    def __len__(self) -> int:
        return len(self.snapshots)

    @property
    def kernel(self) -> Kernel:
        return Kernel.create(self.snapshots[0].n, self.config.eps)

    def field_at(self, i: int) -> CurvatureField:
        while len(self.fields) <= i:
            self.fields.append(None)
        if self.fields[i] is None:
            self.fields[i] = curvature_field(self.snapshots[i], self.kernel, self.config.quadrature)
        return self.fields[i]

    def _locate(self, t: float) -> int:
        times = np.asarray(self.times)
        if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
            raise ValueError(f"time {t} outside the recorded range [{times[0]}, {times[-1]}]")
        return int(np.searchsorted(times, t + 1e-15, side="right") - 1)

    def index_of(self, t: float) -> int:
        """Index of a subdivision time; errors when t is not one."""
        i = self._locate(t)
        for j in (i, min(i + 1, len(self.times) - 1)):
            if math.isclose(self.times[j], t, rel_tol=0.0, abs_tol=1e-12):
                return j
        raise ValueError(f"time {t} is not a subdivision time of this trajectory")

    def sample_at(self, t: float, mode: str = "interpolate") -> Varifold:
        """Flow state at an arbitrary time in the recorded range.

        "interpolate" pushes the last snapshot by ``id + (t - t_i) h_i``
        (the default extension); "piecewise-constant" freezes the last
        snapshot.  Both agree exactly at subdivision times.
        """
        i = self._locate(t)
        tau = t - self.times[i]
        if tau == 0.0 or i == len(self.snapshots) - 1:
            return self.snapshots[i]
        if mode == "piecewise-constant":
            return self.snapshots[i]
        if mode != "interpolate":
            raise ValueError(f"unknown extension mode {mode!r}")
        f = self.field_at(i)
        return push_forward(
            self.snapshots[i],
            SampledMap(f.velocities, f.differentials),
            tau,
            safety=self.config.diffeo_safety,
        )

    def mass_history(self) -> np.ndarray:
        return np.array([v.mass() for v in self.snapshots])


def _velocity_divergence(v: Varifold, f: CurvatureField) -> float:
    return first_variation(v, f.velocities, f.differentials)


def _apply_field(
    v: Varifold,
    kernel: Kernel,
    f: CurvatureField,
    tau: float,
    spec: QuadratureSpec,
    safety: float,
    index: int,
    t_start: float,
    gate: str,
) -> tuple[Varifold, StepDiagnostics]:
    certificate = tau * f.sup_differential
    if certificate > safety:
        raise CertificateViolation(certificate, safety)
    pushed = push_forward(v, SampledMap(f.velocities, f.differentials), tau, safety=safety)
    mass_before, mass_after = v.mass(), pushed.mass()
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(v.masses > 0.0, pushed.masses / np.where(v.masses > 0.0, v.masses, 1.0), 1.0)
    diag = StepDiagnostics(
        index=index,
        t_start=t_start,
        t_end=t_start + tau,
        mass_before=mass_before,
        mass_after=mass_after,
        dissipation=dissipation(v, kernel, spec),
        velocity_first_variation=_velocity_divergence(v, f),
        certificate=certificate,
        safety=safety,
        jacobian_min=float(ratios.min()) if len(v) else 1.0,
        jacobian_max=float(ratios.max()) if len(v) else 1.0,
        mass_bound_ok=bool(mass_after <= mass_before + tau + 1e-12),
        gate=gate,
    )
    return pushed, diag


def step(
    v: Varifold,
    kernel: Kernel,
    tau: float,
    spec: QuadratureSpec | None = None,
    safety: float = 0.5,
) -> tuple[Varifold, StepDiagnostics]:
    """One explicit step of the regularized flow.

    Computes the curvature field of v, checks the certificate
    ``tau * |Dh|_inf <= safety`` (raising CertificateViolation with no
    state change otherwise) and pushes the varifold by ``id + tau h``.
    The diagnostics flag, rather than hide, any violation of the per-step
    mass bound ``mass_after <= mass_before + tau``.
    """
    if tau <= 0.0:
        raise ValueError(f"tau must be positive, got {tau}")
    spec = spec or QuadratureSpec()
    f = curvature_field(v, kernel, spec)
    return _apply_field(v, kernel, f, tau, spec, safety, index=0, t_start=0.0, gate="practical")


def evolve(v0: Varifold, config: FlowConfig) -> Trajectory:
    """Run the time-discrete flow over the configured subdivision.

    On a certificate violation the run aborts and the partial trajectory
    is returned with a failure record; no automatic step halving happens
    (reproducibility over convenience).
    """
    if len(v0) == 0:
        raise ValueError("cannot evolve an empty varifold")
    kernel = Kernel.create(v0.n, config.eps)
    times = config.subdivision.times
    gate = config.step_mode
    if gate == "strict":
        mass_cap = max(1.0, v0.mass())
        limit = (mass_cap + 1.0) ** -3 * config.eps**8
        value = config.strict_constant * config.subdivision.delta
        if value > limit:
            raise CertificateViolation(
                value,
                limit,
                f"strict step gate failed: {config.strict_constant} * delta = {value:.3e} "
                f"> (M+1)^-3 eps^8 = {limit:.3e}",
            )

    traj = Trajectory(
        config=config,
        times=[float(times[0])],
        snapshots=[v0],
        diagnostics=[],
        fields=[],
    )
    current = v0
    for i in range(len(times) - 1):
        tau = float(times[i + 1] - times[i])
        f = curvature_field(current, kernel, config.quadrature)
        traj.fields.append(f)
        try:
            current, diag = _apply_field(
                current,
                kernel,
                f,
                tau,
                config.quadrature,
                config.diffeo_safety,
                index=i,
                t_start=float(times[i]),
                gate=gate,
            )
        except CertificateViolation as exc:
            traj.failure = FailureRecord(step=i, time=float(times[i]), reason=str(exc))
            break
        traj.times.append(float(times[i + 1]))
        traj.snapshots.append(current)
        traj.diagnostics.append(diag)
    return traj


# Space-time test functions ---------------------------------------------------


class ConstantTest:
    """phi(x, t) = c."""

    def __init__(self, c: float = 1.0):
        self.c = float(c)

    def value(self, x: np.ndarray, t: float) -> np.ndarray:
        return np.full(x.shape[0], self.c)

    def gradient(self, x: np.ndarray, t: float) -> np.ndarray:
        return np.zeros_like(x)

    def time_derivative(self, x: np.ndarray, t: float) -> np.ndarray:
        return np.zeros(x.shape[0])


class GaussianBump:
    """phi(x, t) = amplitude * exp(-|x - center - t * velocity|^2 / 2 width^2)."""

    def __init__(self, center, width: float, amplitude: float = 1.0, velocity=None):
        self.center = np.asarray(center, dtype=float)
        self.width = float(width)
        self.amplitude = float(amplitude)
        self.velocity = None if velocity is None else np.asarray(velocity, dtype=float)

    def _offset(self, x: np.ndarray, t: float) -> np.ndarray:
        c = self.center if self.velocity is None else self.center + t * self.velocity
        return x - c

    def value(self, x: np.ndarray, t: float) -> np.ndarray:
        d = self._offset(x, t)
        return self.amplitude * np.exp(-np.einsum("ji,ji->j", d, d) / (2.0 * self.width**2))

    def gradient(self, x: np.ndarray, t: float) -> np.ndarray:
        d = self._offset(x, t)
        return -(self.value(x, t) / self.width**2)[:, None] * d

    def time_derivative(self, x: np.ndarray, t: float) -> np.ndarray:
        if self.velocity is None:
            return np.zeros(x.shape[0])
        return -np.einsum("ji,i->j", self.gradient(x, t), self.velocity)


class PolynomialBump:
    """Nonnegative affine profile times a smooth radial cutoff.

    ``phi(x) = max_part(1 + slope . (x - center)) * cutoff(|x - center| / scale)``
    with the same cubic smoothstep used by the kernel; ``slope`` must be
    small enough that the affine part stays positive on the support.
    """

    def __init__(self, center, scale: float, slope=None):
        from .kernel import CubicCutoff

        self.center = np.asarray(center, dtype=float)
        self.scale = float(scale)
        self.slope = (
            np.zeros_like(self.center) if slope is None else np.asarray(slope, dtype=float)
        )
        if np.linalg.norm(self.slope) * self.scale >= 1.0:
            raise ValueError("slope too steep: the profile would go negative on its support")
        self._cutoff = CubicCutoff()

    def value(self, x: np.ndarray, t: float) -> np.ndarray:
        d = x - self.center
        r = np.linalg.norm(d, axis=1) / self.scale
        p, _, _ = self._cutoff(r)
        return (1.0 + d @ self.slope) * p

    def gradient(self, x: np.ndarray, t: float) -> np.ndarray:
        d = x - self.center
        r = np.linalg.norm(d, axis=1) / self.scale
        p, dp, _ = self._cutoff(r)
        with np.errstate(invalid="ignore", divide="ignore"):
            radial = np.where(r > 0.0, dp / (self.scale**2 * np.where(r > 0.0, r, 1.0)), 0.0)
        return p[:, None] * self.slope[None, :] + ((1.0 + d @ self.slope) * radial)[:, None] * d

    def time_derivative(self, x: np.ndarray, t: float) -> np.ndarray:
        return np.zeros(x.shape[0])


def _weighted_variation_of_field(
    v: Varifold, f: CurvatureField, phi, t: float
) -> float:
    from .varifold import weighted_first_variation

    return weighted_first_variation(
        v,
        phi.value(v.positions, t),
        phi.gradient(v.positions, t),
        f.velocities,
        f.differentials,
    )


def brakke_residual(traj: Trajectory, phi, a: float, b: float) -> float:
    """Defect of the integral mass-evolution identity over [a, b].

    Compares the change of ``integral of phi`` against the time integral of
    the weighted first variation along the flow's own velocity plus the
    time-derivative term.  Time integrals treat the flow as piecewise
    constant on the subdivision intervals (the extension the identity is
    exact for in the limit); phi's own time dependence is integrated by
    midpoint.  The result is expected to shrink like the step size.
    """
    ia, ib = traj.index_of(a), traj.index_of(b)
    if ia > ib:
        raise ValueError("need a <= b")
    va, vb = traj.snapshots[ia], traj.snapshots[ib]
    lhs = float(np.dot(vb.masses, phi.value(vb.positions, b))) - float(
        np.dot(va.masses, phi.value(va.positions, a))
    )
    rhs = 0.0
    for i in range(ia, ib):
        v = traj.snapshots[i]
        f = traj.field_at(i)
        t0, t1 = traj.times[i], traj.times[i + 1]
        mid = 0.5 * (t0 + t1)
        rhs += (t1 - t0) * _weighted_variation_of_field(v, f, phi, mid)
        # The time-derivative term integrates exactly for a piecewise
        # constant flow: its time integral telescopes through phi values.
        rhs += float(np.dot(v.masses, phi.value(v.positions, t1) - phi.value(v.positions, t0)))
    return abs(lhs - rhs)


@dataclass(frozen=True)
class RefinementRow:
    level: int
    distance: float
    ratio: float | None


def refinement_study(
    v0: Varifold,
    eps: float,
    levels: Sequence[int],
    spec: QuadratureSpec | None = None,
    horizon: float = 1.0,
    diffeo_safety: float = 0.5,
) -> list[RefinementRow]:
    """Distances between flows at consecutive dyadic refinements.

    Runs the flow for dyadic subdivisions at every level from the smallest
    to the largest in ``levels`` and one level beyond, and returns, per
    level j, the bounded-Lipschitz distance between the final states at
    levels j and j + 1, together with the ratio to the previous row (first
    row has none).  The distances are expected to scale like the step
    size, i.e. halve per level.
    """
    levels = list(range(min(int(j) for j in levels), max(int(j) for j in levels) + 1))
    spec = spec or QuadratureSpec()
    finals: dict[int, Varifold] = {}
    for j in levels + [levels[-1] + 1]:
        config = FlowConfig(
            eps=eps,
            subdivision=Subdivision.dyadic(j, horizon),
            quadrature=spec,
            diffeo_safety=diffeo_safety,
        )
        traj = evolve(v0, config)
        if traj.failure is not None:
            raise EngineError(
                f"refinement run at level {j} aborted: {traj.failure.reason}"
            )
        finals[j] = traj.snapshots[-1]
    rows: list[RefinementRow] = []
    prev = None
    for j in levels:
        dist = bounded_lipschitz_distance(finals[j], finals[j + 1])
        ratio = None if prev is None or prev == 0.0 else dist / prev
        rows.append(RefinementRow(j, dist, ratio))
        prev = dist
    return rows


def interpolation_gap(
    v0: Varifold,
    eps: float,
    subdivision: Subdivision,
    t: float,
    spec: QuadratureSpec | None = None,
) -> float:
    """Distance between the interpolated and piecewise-constant extensions at t.

    Zero at subdivision times; in between it scales like the step size.
    """
    config = FlowConfig(eps=eps, subdivision=subdivision, quadrature=spec or QuadratureSpec())
    traj = evolve(v0, config)
    if traj.failure is not None:
        raise EngineError(f"flow aborted: {traj.failure.reason}")
    return bounded_lipschitz_distance(
        traj.sample_at(t, "interpolate"), traj.sample_at(t, "piecewise-constant")
    )


# Serialization ----------------------------------------------------------------


def _fmt(x: float) -> str:
    """Floats are printed with 17 significant digits so parsing round-trips.

    Negative zero is canonicalized: "-0" would read back as the integer 0.
    """
    x = float(x)
    if x == 0.0:
        x = 0.0
    return format(x, ".17g")


def _to_json(obj, indent: int = 0) -> str:
    pad = " " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = ",\n".join(
            f'{pad}  {json.dumps(k)}: {_to_json(v, indent + 2)}' for k, v in obj.items()
        )
        return "{\n" + items + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        flat = all(isinstance(v, (int, float, bool)) or v is None for v in obj)
        if flat:
            return "[" + ", ".join(_to_json(v) for v in obj) + "]"
        items = ",\n".join(f"{pad}  {_to_json(v, indent + 2)}" for v in obj)
        return "[\n" + items + "\n" + pad + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(obj)
    if obj is None:
        return "null"
    return json.dumps(obj)


def quadrature_to_dict(spec: QuadratureSpec) -> dict:
    return {
        "rule": spec.rule,
        "points_per_axis": spec.points_per_axis,
        "domain_radius_factor": spec.domain_radius_factor,
        "max_nodes": spec.max_nodes,
    }


def config_to_dict(config: FlowConfig) -> dict:
    return {
        "eps": config.eps,
        "times": [float(t) for t in config.subdivision.times],
        "quadrature": quadrature_to_dict(config.quadrature),
        "diffeo_safety": config.diffeo_safety,
        "step_mode": config.step_mode,
        "strict_constant": config.strict_constant,
    }


def config_from_dict(data: dict) -> FlowConfig:
    return FlowConfig(
        eps=float(data["eps"]),
        subdivision=Subdivision(np.asarray(data["times"], dtype=float)),
        quadrature=QuadratureSpec(**data["quadrature"]),
        diffeo_safety=float(data["diffeo_safety"]),
        step_mode=str(data["step_mode"]),
        strict_constant=float(data["strict_constant"]),
    )


def varifold_to_dict(v: Varifold) -> dict:
    return {
        "d": v.d,
        "n": v.n,
        "atoms": [
            {
                "x": [float(c) for c in v.positions[j]],
                "frame": [[float(c) for c in row] for row in v.frames[j]],
                "m": float(v.masses[j]),
            }
            for j in range(len(v))
        ],
    }


def varifold_from_dict(data: dict) -> Varifold:
    atoms = data["atoms"]
    d, n = int(data["d"]), int(data["n"])
    if not atoms:
        return Varifold.empty(d, n)
    return Varifold(
        d,
        n,
        np.array([a["x"] for a in atoms], dtype=float),
        np.array([a["frame"] for a in atoms], dtype=float),
        np.array([a["m"] for a in atoms], dtype=float),
    )


def trajectory_to_dict(traj: Trajectory) -> dict:
    doc = {
        "config": config_to_dict(traj.config),
        "snapshots": [
            {"t": float(t), **varifold_to_dict(v)} for t, v in zip(traj.times, traj.snapshots)
        ],
        "diagnostics": [
            {
                "step": d.index,
                "t_start": d.t_start,
                "t_end": d.t_end,
                "mass_before": d.mass_before,
                "mass_after": d.mass_after,
                "dissipation": d.dissipation,
                "velocity_first_variation": d.velocity_first_variation,
                "certificate": d.certificate,
                "safety": d.safety,
                "jacobian_min": d.jacobian_min,
                "jacobian_max": d.jacobian_max,
                "mass_bound_ok": d.mass_bound_ok,
                "gate": d.gate,
            }
            for d in traj.diagnostics
        ],
    }
    if traj.failure is not None:
        doc["failure"] = {
            "step": traj.failure.step,
            "time": traj.failure.time,
            "reason": traj.failure.reason,
        }
    return doc


def write_trajectory_json(traj: Trajectory, path) -> None:
    with open(path, "w") as fh:
        fh.write(_to_json(trajectory_to_dict(traj)))
        fh.write("\n")


def read_trajectory_json(path) -> Trajectory:
    with open(path) as fh:
        doc = json.load(fh)
    snapshots = [varifold_from_dict(s) for s in doc["snapshots"]]
    times = [float(s["t"]) for s in doc["snapshots"]]
    diagnostics = [
        StepDiagnostics(
            index=int(d["step"]),
            t_start=float(d["t_start"]),
            t_end=float(d["t_end"]),
            mass_before=float(d["mass_before"]),
            mass_after=float(d["mass_after"]),
            dissipation=float(d["dissipation"]),
            velocity_first_variation=float(d["velocity_first_variation"]),
            certificate=float(d["certificate"]),
            safety=float(d["safety"]),
            jacobian_min=float(d["jacobian_min"]),
            jacobian_max=float(d["jacobian_max"]),
            mass_bound_ok=bool(d["mass_bound_ok"]),
            gate=str(d["gate"]),
        )
        for d in doc["diagnostics"]
    ]
    failure = None
    if "failure" in doc:
        failure = FailureRecord(
            step=int(doc["failure"]["step"]),
            time=float(doc["failure"]["time"]),
            reason=str(doc["failure"]["reason"]),
        )
    return Trajectory(
        config=config_from_dict(doc["config"]),
        times=times,
        snapshots=snapshots,
        diagnostics=diagnostics,
        fields=[None] * len(snapshots),
        failure=failure,
    )


DIAGNOSTICS_HEADER = [
    "step",
    "t_start",
    "t_end",
    "mass_before",
    "mass_after",
    "dissipation",
    "velocity_first_variation",
    "certificate",
    "jacobian_min",
    "jacobian_max",
    "mass_bound_ok",
    "gate",
]


def write_diagnostics_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DIAGNOSTICS_HEADER)
        for d in traj.diagnostics:
            writer.writerow(
                [
                    d.index,
                    _fmt(d.t_start),
                    _fmt(d.t_end),
                    _fmt(d.mass_before),
                    _fmt(d.mass_after),
                    _fmt(d.dissipation),
                    _fmt(d.velocity_first_variation),
                    _fmt(d.certificate),
                    _fmt(d.jacobian_min),
                    _fmt(d.jacobian_max),
                    int(d.mass_bound_ok),
                    d.gate,
                ]
            )


def write_atoms_csv(traj: Trajectory, path) -> None:
    """Flat per-atom table (t, atom_id, coordinates, mass, speed) for plotting."""
    n = traj.snapshots[0].n
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "atom_id"] + [f"x{i + 1}" for i in range(n)] + ["m", "h_norm"])
        for i, (t, v) in enumerate(zip(traj.times, traj.snapshots)):
            speeds = np.linalg.norm(traj.field_at(i).velocities, axis=1)
            for j in range(len(v)):
                writer.writerow(
                    [_fmt(t), j]
                    + [_fmt(c) for c in v.positions[j]]
                    + [_fmt(v.masses[j]), _fmt(speeds[j])]
                )
