"""Stress-strain benchmark data: manifests, CSV curves, synthetic ground truth.

A dataset lives on disk as a JSON manifest next to one CSV per loading
mode::

    {"name": "synthetic_rubber", "unit": "MPa",
     "modes": [{"mode": "uniaxial_tension", "csv": "uniaxial_tension.csv"}, ...]}

Each CSV has the header ``param,stress`` and an optional third column
``split`` holding ``train`` or ``test``. Lines starting with ``#`` are
comments.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .mechanics import LoadingMode, invariants_array
from .model import ConstitutiveModel

EPS_FLOOR = 1e-6
SPLITS = ("train", "test")


class MissingFile(FileNotFoundError):
    pass


class MalformedRow(ValueError):
    def __init__(self, path, line: int, text: str):
        super().__init__(f"{path}:{line}: cannot parse row {text!r}")
        self.path = str(path)
        self.line = line


class NonMonotoneParams(ValueError):
    def __init__(self, mode):
        super().__init__(f"parameters of mode {LoadingMode(mode).value} are not strictly increasing")
        self.mode = LoadingMode(mode)


class NoTestSamples(ValueError):
    pass


class EmptyDataset(ValueError):
    pass


@dataclass(frozen=True)
class ModeSamples:
    mode: LoadingMode
    params: np.ndarray
    stress: np.ndarray
    split: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "mode", LoadingMode(self.mode))
        params = np.array(self.params, dtype=float).reshape(-1)
        stress = np.array(self.stress, dtype=float).reshape(-1)
        if params.shape != stress.shape:
            raise ValueError("params and stress must have equal length")
        if params.size > 1 and np.any(np.diff(params) <= 0):
            raise NonMonotoneParams(self.mode)
        split = tuple(self.split) or ("train",) * params.size
        if len(split) != params.size or any(s not in SPLITS for s in split):
            raise ValueError("split tags must be 'train' or 'test', one per sample")
        params.setflags(write=False)
        stress.setflags(write=False)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "stress", stress)
        object.__setattr__(self, "split", split)

    def __len__(self):
        return self.params.size

    def subset(self, tag: str) -> "ModeSamples":
        keep = np.array([s == tag for s in self.split], dtype=bool)
        return ModeSamples(self.mode, self.params[keep], self.stress[keep], tuple(np.array(self.split)[keep]))


@dataclass(frozen=True)
class StressStrainDataset:
    name: str
    unit: str
    samples: tuple[ModeSamples, ...]
    reference: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        modes = [s.mode for s in self.samples]
        if len(set(modes)) != len(modes):
            raise ValueError("each loading mode may appear only once")

    @property
    def modes(self) -> tuple[LoadingMode, ...]:
        return tuple(s.mode for s in self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __len__(self):
        return sum(len(s) for s in self.samples)

    def __getitem__(self, mode) -> ModeSamples:
        mode = LoadingMode(mode)
        for s in self.samples:
            if s.mode is mode:
                return s
        raise KeyError(mode.value)

    def summary(self) -> str:
        lines = [f"dataset {self.name!r}, stresses in {self.unit}"]
        for s in self.samples:
            lines.append(f"  {s.mode.value}: {len(s)} points, parameter range "
                         f"[{s.params.min():g}, {s.params.max():g}], stress range "
                         f"[{s.stress.min():.4g}, {s.stress.max():.4g}]")
        return "\n".join(lines)


def _read_curve(path: Path, mode: LoadingMode) -> ModeSamples:
    if not path.is_file():
        raise MissingFile(f"missing curve file {path}")
    params, stress, split = [], [], []
    header_seen = False
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            row = next(csv.reader([text]))
            if not header_seen:
                header_seen = True
                if [c.strip() for c in row[:2]] != ["param", "stress"]:
                    raise MalformedRow(path, lineno, text)
                has_split = len(row) > 2 and row[2].strip() == "split"
                continue
            try:
                p, s = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                raise MalformedRow(path, lineno, text) from None
            tag = row[2].strip() if has_split and len(row) > 2 else "train"
            if tag not in SPLITS or not (np.isfinite(p) and np.isfinite(s)):
                raise MalformedRow(path, lineno, text)
            params.append(p)
            stress.append(s)
            split.append(tag)
    if not header_seen:
        raise MalformedRow(path, 1, "<missing header>")
    params_arr = np.array(params)
    if params_arr.size > 1 and np.any(np.diff(params_arr) <= 0):
        raise NonMonotoneParams(mode)
    return ModeSamples(mode, params_arr, np.array(stress), tuple(split))


def load_dataset(manifest_path) -> StressStrainDataset:
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise MissingFile(f"missing manifest {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        entries = manifest["modes"]
        name, unit = manifest["name"], manifest["unit"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise MalformedRow(manifest_path, 1, f"invalid manifest: {exc}") from None
    samples = []
    for entry in entries:
        mode = LoadingMode(entry["mode"])
        samples.append(_read_curve(manifest_path.parent / entry["csv"], mode))
    return StressStrainDataset(name, unit, tuple(samples), reference=manifest.get("reference"))


def _fmt(v: float) -> str:
    return repr(float(v))


def write_dataset(dataset: StressStrainDataset, directory) -> Path:
    """Write manifest plus one CSV per mode; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for s in dataset.samples:
        fname = f"{s.mode.value}.csv"
        with_split = any(tag != "train" for tag in s.split)
        lines = ["param,stress,split" if with_split else "param,stress"]
        for p, t, tag in zip(s.params, s.stress, s.split):
            lines.append(f"{_fmt(p)},{_fmt(t)}" + (f",{tag}" if with_split else ""))
        (directory / fname).write_text("\n".join(lines) + "\n", encoding="utf-8")
        entries.append({"mode": s.mode.value, "csv": fname})
    manifest = {"name": dataset.name, "unit": dataset.unit, "modes": entries}
    if dataset.reference is not None:
        manifest["reference"] = dataset.reference
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


RUBBER_MODES = (LoadingMode.UNIAXIAL_TENSION, LoadingMode.EQUIBIAXIAL, LoadingMode.PURE_SHEAR)
BRAIN_MODES = (LoadingMode.UNIAXIAL_TENSION, LoadingMode.UNIAXIAL_COMPRESSION, LoadingMode.SIMPLE_SHEAR)


def default_params(mode: LoadingMode, n: int) -> np.ndarray:
    """Evenly spaced control parameters spanning a typical test range."""
    mode = LoadingMode(mode)
    ranges = {
        LoadingMode.UNIAXIAL_TENSION: (1.1, 3.0),
        LoadingMode.EQUIBIAXIAL: (1.1, 3.0),
        LoadingMode.PURE_SHEAR: (1.1, 3.0),
        LoadingMode.UNIAXIAL_COMPRESSION: (0.9, 0.98),
        LoadingMode.SIMPLE_SHEAR: (0.0125, 0.2),
    }
    lo, hi = ranges[mode]
    return np.linspace(lo, hi, n)


def generate_synthetic(reference: ConstitutiveModel, modes: Sequence = RUBBER_MODES,
                       params: dict | Sequence | None = None, n: int = 15,
                       name: str = "synthetic", unit: str = "MPa",
                       split: dict | None = None) -> StressStrainDataset:
    """Tabulate the measured stress component of ``reference`` along each mode.

    ``params`` is either a per-mode mapping, a single sequence reused for
    every mode, or None for ``default_params``. ``split`` optionally maps a
    mode to its per-sample tags.
    """
    from .training import predict_curve

    samples = []
    for mode in modes:
        mode = LoadingMode(mode)
        if params is None:
            p = default_params(mode, n)
        elif isinstance(params, dict):
            p = params.get(mode, params.get(mode.value))
        else:
            p = params
        p = np.asarray(p, dtype=float)
        tags = tuple((split or {}).get(mode, (split or {}).get(mode.value, ())))
        samples.append(ModeSamples(mode, p, predict_curve(reference, mode, p), tags))
    ref = {"name": reference.descriptor.name, "fingerprint": reference.fingerprint,
           "model": reference.to_document()}
    return StressStrainDataset(name, unit, tuple(samples), reference=ref)


def reference_model(dataset: StressStrainDataset) -> ConstitutiveModel | None:
    if not dataset.reference or "model" not in dataset.reference:
        return None
    return ConstitutiveModel.from_document(dataset.reference["model"])


def train_test_split(dataset: StressStrainDataset, require_test: bool = False):
    """Return (train, test) views filtered by the per-sample split tags."""
    train = [s.subset("train") for s in dataset.samples]
    test = [s.subset("test") for s in dataset.samples]
    if require_test and not any(len(s) for s in test):
        raise NoTestSamples(f"dataset {dataset.name!r} carries no test samples")
    return (
        StressStrainDataset(dataset.name, dataset.unit, tuple(train), dataset.reference),
        StressStrainDataset(dataset.name, dataset.unit, tuple(test), dataset.reference),
    )


@dataclass(frozen=True)
class InvariantPlaneMap:
    """Grid over stretch lambda1 and transverse exponent a.

    F = diag(l1, l1**a, l1**(-1 - a)); a = -1/2 is uniaxial tension,
    a = 0 pure shear and a = 1 equibiaxial tension.
    """

    lam1: np.ndarray        # (n,)
    exponent: np.ndarray    # (n,)
    I1: np.ndarray          # (n_lam, n_a)
    I2: np.ndarray
    pred: np.ndarray
    truth: np.ndarray
    rel_err: np.ndarray

    def records(self) -> Iterable[dict]:
        for i, l1 in enumerate(self.lam1):
            for j, a in enumerate(self.exponent):
                yield {"lambda1": l1, "a": a, "I1": self.I1[i, j], "I2": self.I2[i, j],
                       "pred": self.pred[i, j], "truth": self.truth[i, j], "rel_err": self.rel_err[i, j]}

    @property
    def max_rel_err(self) -> float:
        return float(np.max(self.rel_err))

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lambda1", "a", "I1", "I2", "pred", "truth", "rel_err"])
            for r in self.records():
                w.writerow([_fmt(r[k]) for k in ("lambda1", "a", "I1", "I2", "pred", "truth", "rel_err")])
        return path


def plane_tensors(lam1: np.ndarray, exponent: np.ndarray) -> np.ndarray:
    L, A = np.meshgrid(lam1, exponent, indexing="ij")
    F = np.zeros(L.shape + (3, 3))
    F[..., 0, 0] = L
    F[..., 1, 1] = L ** A
    F[..., 2, 2] = L ** (-1.0 - A)
    return F


def invariant_plane_eval(model: ConstitutiveModel, truth: ConstitutiveModel,
                         lam1_max: float = 3.0, n: int = 40, eps_floor: float = EPS_FLOOR) -> InvariantPlaneMap:
    if lam1_max <= 1.0 or n < 2:
        raise ValueError("need lam1_max > 1 and n >= 2")
    lam1 = np.linspace(1.0, lam1_max, n)
    exponent = np.linspace(-0.5, 1.0, n)
    F = plane_tensors(lam1, exponent)
    I1, I2 = invariants_array(F)
    pred = model.piola_stress(F)[..., 0, 0]
    tru = truth.piola_stress(F)[..., 0, 0]
    diff = np.abs(pred - tru)
    rel = diff / np.maximum(np.abs(tru), eps_floor)
    rel = np.where((np.abs(tru) <= eps_floor) & (np.abs(pred) <= eps_floor), 0.0, rel)
    return InvariantPlaneMap(lam1, exponent, I1, I2, pred, tru, rel)
