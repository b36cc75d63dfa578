"""Fitting block CANNs to loading-mode stress data.

The measured stress of every sample is linear in the per-term first
derivatives ``s_t = d psi_t / d x_t``: the pressure solve is a linear map of
dpsi/dF, and dpsi/dF is a sum of ``s_t`` times a fixed tensor per feature.
``_Design`` tabulates those fixed per-sample coefficients once, after which
loss and exact weight gradients are cheap array expressions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .datasets import EmptyDataset, StressStrainDataset
from .mechanics import LoadingMode, invariants_array, mode_tensors
from .model import (
    ConstitutiveModel,
    WeightSet,
    activation_derivs,
    init_weights,
    parse_feature,
    trainable_mask,
)

logger = logging.getLogger(__name__)


class NonFiniteLoss(ArithmeticError):
    """Training produced a NaN or infinite loss."""


class DegenerateTarget(ValueError):
    """R^2 is undefined for a constant target."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5000
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def updated(self, **overrides) -> "TrainConfig":
        fields = {k: v for k, v in overrides.items() if v is not None}
        return TrainConfig(**{**self.__dict__, **fields})


@dataclass(frozen=True)
class ModeFit:
    r2: float
    mse: float


@dataclass
class FitReport:
    modes: dict[str, ModeFit]
    loss_history: list[float] = field(default_factory=list)
    final_loss: float = float("nan")

    @property
    def mean_r2(self) -> float:
        vals = [m.r2 for m in self.modes.values()]
        return float(np.mean(vals)) if vals else float("nan")

    def to_dict(self) -> dict:
        return {
            "modes": {k: {"r2": v.r2, "mse": v.mse} for k, v in self.modes.items()},
            "mean_r2": self.mean_r2,
            "final_loss": self.final_loss,
            "loss_history": list(self.loss_history),
        }

    def table(self, unit: str = "") -> str:
        unit = f" [{unit}^2]" if unit else ""
        rows = [f"{'mode':<22}{'R2':>10}{'MSE' + unit:>18}"]
        for k, v in self.modes.items():
            rows.append(f"{k:<22}{v.r2:>10.5f}{v.mse:>18.6g}")
        return "\n".join(rows)


def stress_component(model: ConstitutiveModel, mode: LoadingMode, F: np.ndarray) -> np.ndarray:
    i, j = LoadingMode(mode).measured_component
    return model.piola_stress(F)[..., i, j]


def predict_curve(model: ConstitutiveModel, mode, params) -> np.ndarray:
    """Measured stress component (P11, or P12 for simple shear) per parameter."""
    mode = LoadingMode(mode)
    params = np.atleast_1d(np.asarray(params, dtype=float))
    if params.size == 0:
        return np.zeros(0)
    return stress_component(model, mode, mode_tensors(mode, params))


def fit_metrics(pred, target) -> tuple[float, float]:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape or target.size < 2:
        raise ValueError("pred and target need equal length >= 2")
    resid = np.sum((target - pred) ** 2)
    spread = np.sum((target - target.mean()) ** 2)
    if spread == 0.0:
        raise DegenerateTarget("target is constant")
    return float(1.0 - resid / spread), float(resid / target.size)


class _Design:
    """Per-sample feature values and stress coefficients for one model layout."""

    def __init__(self, model: ConstitutiveModel, dataset: StressStrainDataset):
        groups = [s for s in dataset.samples if len(s)]
        if not groups:
            raise EmptyDataset(f"dataset {dataset.name!r} has no samples")
        self.descriptor = model.descriptor
        F = np.concatenate([mode_tensors(s.mode, s.params) for s in groups])
        self.target = np.concatenate([s.stress for s in groups])
        comp = np.concatenate([np.tile(s.mode.measured_component, (len(s), 1)) for s in groups])
        group = np.concatenate([np.full(len(s), k) for k, s in enumerate(groups)])
        counts = np.array([len(s) for s in groups], dtype=float)
        # loss = sum_i w_i r_i^2 with equal weight per mode
        self.sample_weight = 1.0 / (len(groups) * counts[group])
        self.n_modes = len(groups)

        C = np.swapaxes(F, -1, -2) @ F
        I1, I2 = invariants_array(F)
        FinvT = np.swapaxes(np.linalg.inv(F), -1, -2)
        rows = np.arange(F.shape[0])

        def measured(G):
            p = G[:, 2, 2] / FinvT[:, 2, 2]
            P = G - p[:, None, None] * FinvT
            return P[rows, comp[:, 0], comp[:, 1]]

        self.x, self.coef = [], []
        for term in self.descriptor.terms:
            kind, idx = parse_feature(term.feature)
            if kind == "I1":
                x, D = np.maximum(I1 - 3.0, 0.0), 2.0 * F
            elif kind == "I2":
                x, D = np.maximum(I2 - 3.0, 0.0), 2.0 * (I1[:, None, None] * F - F @ C)
            else:
                x = F[:, idx[0], idx[1]] - (1.0 if idx[0] == idx[1] else 0.0)
                D = np.zeros_like(F)
                D[:, idx[0], idx[1]] = 1.0
            self.x.append(x)
            self.coef.append(measured(D))

        self.offset = np.zeros_like(self.target)
        aug = self.descriptor.augmentation
        if aug.kind == "skew":
            sign = np.where((comp[:, 0] == 0) & (comp[:, 1] == 1), 1.0,
                            np.where((comp[:, 0] == 1) & (comp[:, 1] == 0), -1.0, 0.0))
            self.offset = aug.value * sign * F[rows, comp[:, 1], comp[:, 0]]
        elif aug.kind == "offset":
            self.offset = np.where((comp[:, 0] == 0) & (comp[:, 1] == 0), aug.value, 0.0)

    def predict(self, weights: WeightSet, with_grad: bool = False):
        pred = self.offset.copy()
        grads = []
        for term, x, coef, a, b in zip(self.descriptor.terms, self.x, self.coef, weights.w_in, weights.w_out):
            y = x[:, None] * a
            bound = term.activation.clip
            if bound is None:
                chi = np.ones_like(y)
            else:
                chi = ((y >= 0.0) & (y < bound)).astype(float)
                y = np.clip(y, 0.0, bound)
            _, f1, f2 = activation_derivs(term.activation, y)
            s = np.sum(b * a * f1 * chi, axis=1)
            pred = pred + s * coef
            if with_grad:
                ds_da = b * chi * (f1 + a * x[:, None] * f2)
                ds_db = a * f1 * chi
                grads.append((ds_da * coef[:, None], ds_db * coef[:, None]))
        return (pred, grads) if with_grad else pred

    def loss(self, weights: WeightSet) -> float:
        r = self.predict(weights) - self.target
        return float(np.sum(self.sample_weight * r * r))

    def loss_and_grad(self, weights: WeightSet) -> tuple[float, np.ndarray]:
        pred, grads = self.predict(weights, with_grad=True)
        r = pred - self.target
        wr = 2.0 * self.sample_weight * r
        flat = []
        for dA, dB in grads:
            flat.append(wr @ dA)
            flat.append(wr @ dB)
        return float(np.sum(self.sample_weight * r * r)), np.concatenate(flat)


def loss(model: ConstitutiveModel, dataset: StressStrainDataset) -> float:
    """Mean over modes of the per-mode mean squared stress error."""
    return _Design(model, dataset).loss(model.weights)


def loss_gradient(model: ConstitutiveModel, dataset: StressStrainDataset) -> WeightSet:
    """Exact gradient of ``loss`` with respect to every weight."""
    _, g = _Design(model, dataset).loss_and_grad(model.weights)
    return WeightSet.from_flat(model.descriptor, g)


def fit_report(model: ConstitutiveModel, dataset: StressStrainDataset,
               history: list[float] | None = None) -> FitReport:
    modes = {}
    for s in dataset.samples:
        if len(s) < 2:
            continue
        pred = predict_curve(model, s.mode, s.params)
        try:
            r2, mse = fit_metrics(pred, s.stress)
        except DegenerateTarget:
            r2, mse = float("nan"), float(np.mean((pred - s.stress) ** 2))
        modes[s.mode.value] = ModeFit(r2, mse)
    final = loss(model, dataset)
    return FitReport(modes, list(history or []), final)


def train(model: ConstitutiveModel, dataset: StressStrainDataset,
          config: TrainConfig = TrainConfig()) -> tuple[ConstitutiveModel, FitReport]:
    """First-order training with non-negativity projection after every step.

    Starts from ``model.weights`` and returns the best-loss weights seen.
    ``loss_history`` holds the best-so-far loss after each epoch.
    """
    design = _Design(model, dataset)
    descriptor = model.descriptor
    mask = trainable_mask(descriptor)
    w = model.weights.project(descriptor).flat()
    m = np.zeros_like(w)
    v = np.zeros_like(w)
    best_w, best = w.copy(), np.inf
    history = []
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, config.epochs + 1):
            weights = WeightSet.from_flat(descriptor, w)
            value, g = design.loss_and_grad(weights)
            if not np.isfinite(value) or not np.all(np.isfinite(g)):
                raise NonFiniteLoss(f"loss became non-finite at epoch {epoch}")
            if value < best:
                best, best_w = value, w.copy()
            history.append(best)
            g = g * mask
            if config.optimizer == "adam":
                m = config.beta1 * m + (1.0 - config.beta1) * g
                v = config.beta2 * v + (1.0 - config.beta2) * g * g
                m_hat = m / (1.0 - config.beta1 ** epoch)
                v_hat = v / (1.0 - config.beta2 ** epoch)
                w = w - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
            else:
                w = w - config.learning_rate * g
            w = WeightSet.from_flat(descriptor, w).project(descriptor).flat()
        final_weights = WeightSet.from_flat(descriptor, w)
        value = design.loss(final_weights)
        if not np.isfinite(value):
            raise NonFiniteLoss("loss became non-finite after the last step")
        if value < best:
            best, best_w = value, w.copy()
    trained = model.with_weights(WeightSet.from_flat(descriptor, best_w))
    logger.debug("trained %s: best loss %.3e", descriptor.name, best)
    return trained, fit_report(trained, dataset, history)


def fit(descriptor, dataset: StressStrainDataset, config: TrainConfig = TrainConfig()):
    """Initialize ``descriptor`` from ``config.seed`` and train it."""
    weights = init_weights(descriptor, np.random.default_rng(config.seed))
    return train(ConstitutiveModel(descriptor, weights), dataset, config)
