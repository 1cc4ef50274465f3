"""Instance-level multi-view reconstruction.

Optimization variables are grid occupancy logits plus, per view with unknown
rotation, a bank of (azimuth, elevation) hypotheses (and a translation offset
when the translation is unknown too). During warmup the per-view objective is
a temperature-annealed soft minimum over the hypothesis losses (a lower bound
on the min that sharpens toward it); afterwards each view keeps only its
argmin hypothesis. Everything runs under Adam with bias correction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import Pose
from .consistency import image_loss, image_loss_grad
from .grid import OccupancyGrid


class ReconstructionError(RuntimeError):
    pass


@dataclass(frozen=True)
class FullyKnown:
    pose: Pose


@dataclass(frozen=True)
class KnownTranslation:
    translation: tuple


@dataclass(frozen=True)
class Unknown:
    pass


@dataclass
class View:
    image: object  # VerificationImage
    intrinsics: object
    pose_knowledge: object  # FullyKnown | KnownTranslation | Unknown


@dataclass
class InitSettings:
    n_hypotheses: int = 8
    elevation_init: float = 10.0  # midpoint of the [-20, 40) elevation prior
    learning_rate: float = 0.01
    angle_rate_scale: float = 100.0  # angles step in degrees; scale keeps them mobile
    translation_rate_scale: float = 1.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    warmup_steps: int = 300
    total_steps: int = 2000
    temp_start: float = 1.0
    temp_end: float = 0.01
    pixel_stride: int = 1

    def __post_init__(self):
        if self.n_hypotheses < 1:
            raise ValueError(f"n_hypotheses must be >= 1, got {self.n_hypotheses}")
        if self.total_steps <= 0:
            raise ValueError(f"total_steps must be positive, got {self.total_steps}")
        if self.temp_start <= 0 or self.temp_end <= 0:
            raise ValueError("softmin temperatures must be positive")


@dataclass
class ReconstructionProblem:
    views: list
    grid_dims: tuple
    sampling: object
    init: InitSettings = field(default_factory=InitSettings)

    def __post_init__(self):
        if not self.views:
            raise ValueError("a reconstruction problem needs at least one view")


@dataclass
class ReconstructionResult:
    grid: OccupancyGrid
    poses: list
    hypothesis_losses: list  # per view: (K,) array or None
    selected_hypothesis: list  # per view: int or None
    loss_trace: np.ndarray  # (steps,) total loss per step
    per_view_trace: np.ndarray  # (steps, n_views)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls(np.zeros_like(params, dtype=np.float64), np.zeros_like(params, dtype=np.float64))


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update with bias correction. Returns (new_params, state)."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != np.shape(params):
        raise ValueError(f"gradient shape {grads.shape} != parameter shape {np.shape(params)}")
    if not np.all(np.isfinite(grads)):
        raise ReconstructionError("non-finite gradient in adam_step")
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grads
    state.v = beta2 * state.v + (1.0 - beta2) * grads**2
    m_hat = state.m / (1.0 - beta1**state.t)
    v_hat = state.v / (1.0 - beta2**state.t)
    return params - lr * m_hat / (np.sqrt(v_hat) + eps), state


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmin_weights(losses, temp):
    z = -np.asarray(losses) / temp
    z = z - z.max()
    w = np.exp(z)
    return w / w.sum()


def softmin(losses, temp):
    """Temperature-weighted lower bound on min(losses): -T log sum exp(-l/T)."""
    losses = np.asarray(losses, dtype=np.float64)
    lo = losses.min()
    return float(lo - temp * np.log(np.sum(np.exp(-(losses - lo) / temp))))


def _temperature(step, settings):
    if settings.warmup_steps <= 1:
        return settings.temp_end
    frac = min(1.0, step / (settings.warmup_steps - 1))
    return settings.temp_start * (settings.temp_end / settings.temp_start) ** frac


def _default_translation(sampling):
    # look-at default: camera on the axis at the center of the sampled range
    return np.array([0.0, 0.0, -0.5 * (sampling.d_min + sampling.d_max)])


class _ViewState:
    """Per-view optimization variables and bookkeeping."""

    def __init__(self, view, settings, sampling):
        self.view = view
        pk = view.pose_knowledge
        self.fixed_pose = None
        self.angles = None
        self.angle_state = None
        self.toffset = None
        self.toffset_state = None
        self.selected = None
        if isinstance(pk, FullyKnown):
            self.fixed_pose = pk.pose
            self.base_t = None
        else:
            k = settings.n_hypotheses
            az = np.arange(k) * (360.0 / k)
            el = np.full(k, settings.elevation_init)
            self.angles = np.stack([az, el], axis=1)
            self.angle_state = AdamState.zeros_like(self.angles)
            if isinstance(pk, KnownTranslation):
                self.base_t = np.asarray(pk.translation, dtype=np.float64)
            elif isinstance(pk, Unknown):
                self.base_t = _default_translation(sampling)
                self.toffset = np.zeros(3)
                self.toffset_state = AdamState.zeros_like(self.toffset)
            else:
                raise ValueError(f"unknown pose knowledge {pk!r}")

    @property
    def optimizes_pose(self):
        return self.fixed_pose is None

    def translation(self):
        t = self.base_t
        if self.toffset is not None:
            t = t + self.toffset
        return t

    def pose_for(self, hyp):
        if self.fixed_pose is not None:
            return self.fixed_pose
        az, el = self.angles[hyp]
        return Pose.from_euler(az, el, self.translation())

    def active_hypotheses(self, in_warmup):
        if self.fixed_pose is not None:
            return [0]
        if in_warmup or self.selected is None:
            return list(range(len(self.angles)))
        return [self.selected]

    def final_pose(self):
        if self.fixed_pose is not None:
            return self.fixed_pose
        return self.pose_for(self.selected if self.selected is not None else 0)


def optimize_instance(problem):
    """Minimize the summed view consistency loss over grid logits and poses."""
    settings = problem.init
    sampling = problem.sampling
    logits = np.zeros(problem.grid_dims)  # occupancy 0.5 everywhere
    logit_state = AdamState.zeros_like(logits)
    views = [_ViewState(v, settings, sampling) for v in problem.views]
    any_hypotheses = any(v.optimizes_pose for v in views)

    trace = np.empty(settings.total_steps)
    view_trace = np.empty((settings.total_steps, len(views)))
    last_losses = [None] * len(views)
    warmup_end = max(1, min(settings.warmup_steps, settings.total_steps))

    for step in range(settings.total_steps):
        in_warmup = any_hypotheses and step < warmup_end
        temp = _temperature(step, settings)
        occ = _sigmoid(logits)
        docc = occ * (1.0 - occ)
        grid = OccupancyGrid(occ)

        logit_grad = np.zeros_like(logits)
        total = 0.0
        for vi, vs in enumerate(views):
            hyps = vs.active_hypotheses(in_warmup)
            losses = np.empty(len(hyps))
            grads = []
            for j, h in enumerate(hyps):
                loss, g = image_loss_grad(
                    grid, vs.pose_for(h), vs.view.intrinsics, sampling, vs.view.image,
                    pixel_stride=settings.pixel_stride,
                    pose_gradients=vs.optimizes_pose,
                )
                losses[j] = loss
                grads.append(g)
            if not np.all(np.isfinite(losses)):
                raise ReconstructionError(f"non-finite loss at step {step} (view {vi})")

            if vs.optimizes_pose:
                weights = _softmin_weights(losses, temp) if in_warmup and len(hyps) > 1 else None
                angle_grad = np.zeros_like(vs.angles)
                t_grad = np.zeros(3) if vs.toffset is not None else None
                for j, h in enumerate(hyps):
                    w = weights[j] if weights is not None else 1.0
                    logit_grad += w * grads[j].d_grid * docc
                    angle_grad[h, 0] = w * grads[j].d_azimuth
                    angle_grad[h, 1] = w * grads[j].d_elevation
                    if t_grad is not None:
                        t_grad += w * grads[j].d_translation
                vs.angles, vs.angle_state = adam_step(
                    vs.angles, angle_grad, vs.angle_state,
                    settings.learning_rate * settings.angle_rate_scale,
                    settings.adam_beta1, settings.adam_beta2, settings.adam_eps,
                )
                # elevations beyond +-90 leave the canonical Euler family
                np.clip(vs.angles[:, 1], -89.9, 89.9, out=vs.angles[:, 1])
                if t_grad is not None:
                    vs.toffset, vs.toffset_state = adam_step(
                        vs.toffset, t_grad, vs.toffset_state,
                        settings.learning_rate * settings.translation_rate_scale,
                        settings.adam_beta1, settings.adam_beta2, settings.adam_eps,
                    )
            else:
                logit_grad += grads[0].d_grid * docc

            view_loss = float(losses.min())
            total += view_loss
            view_trace[step, vi] = view_loss
            if vs.optimizes_pose and vs.selected is None:
                last_losses[vi] = (hyps, losses)

        logits, logit_state = adam_step(
            logits, logit_grad, logit_state, settings.learning_rate,
            settings.adam_beta1, settings.adam_beta2, settings.adam_eps,
        )
        trace[step] = total

        if any_hypotheses and step == warmup_end - 1:
            for vi, vs in enumerate(views):
                if vs.optimizes_pose:
                    hyps, losses = last_losses[vi]
                    vs.selected = hyps[int(np.argmin(losses))]  # argmin; ties -> lowest index

    # final per-hypothesis loss table at the final parameters
    occ = _sigmoid(logits)
    grid = OccupancyGrid(occ)
    hyp_losses = []
    for vs in views:
        if vs.optimizes_pose:
            hyp_losses.append(np.array([
                image_loss(grid, vs.pose_for(h), vs.view.intrinsics, sampling, vs.view.image,
                           pixel_stride=settings.pixel_stride)
                for h in range(len(vs.angles))
            ]))
        else:
            hyp_losses.append(None)

    return ReconstructionResult(
        grid=grid,
        poses=[vs.final_pose() for vs in views],
        hypothesis_losses=hyp_losses,
        selected_hypothesis=[vs.selected for vs in views],
        loss_trace=trace,
        per_view_trace=view_trace,
    )
