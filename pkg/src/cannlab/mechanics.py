"""Finite-deformation kinematics for incompressible isotropic solids.

Deformation gradients are stored as 3x3 float arrays. Everything that
consumes them also accepts stacks of shape ``(..., 3, 3)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

SINGULAR_BLOCK_TOL = 1e-9
GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


class SingularPlaneBlock(ValueError):
    """The in-plane 2x2 block of a plane-strain state is (nearly) singular."""


class NonPositiveStretch(ValueError):
    """A stretch-controlled loading mode received lambda <= 0."""


class LoadingMode(str, enum.Enum):
    UNIAXIAL_TENSION = "uniaxial_tension"
    UNIAXIAL_COMPRESSION = "uniaxial_compression"
    EQUIBIAXIAL = "equibiaxial"
    PURE_SHEAR = "pure_shear"
    SIMPLE_SHEAR = "simple_shear"

    @property
    def is_shear(self) -> bool:
        return self is LoadingMode.SIMPLE_SHEAR

    @property
    def measured_component(self) -> tuple[int, int]:
        """Index of the stress component recorded in experiments."""
        return (0, 1) if self.is_shear else (0, 0)

    @property
    def reference_param(self) -> float:
        return 0.0 if self.is_shear else 1.0


def as_tensor(F) -> np.ndarray:
    """Return ``F`` as a float array with trailing shape (3, 3)."""
    arr = np.asarray(F, dtype=float)
    if arr.shape[-2:] != (3, 3):
        raise ValueError(f"expected trailing shape (3, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor has non-finite entries")
    return arr


@dataclass(frozen=True)
class DeformationGradient:
    """A single deformation state.

    ``label`` is free text describing how the state was built, which ends
    up in validator witnesses.
    """

    F: np.ndarray
    label: str = field(default="", compare=False)

    def __post_init__(self):
        arr = as_tensor(self.F).copy()
        if arr.shape != (3, 3):
            raise ValueError("DeformationGradient holds exactly one 3x3 tensor")
        arr.setflags(write=False)
        object.__setattr__(self, "F", arr)

    def __array__(self, dtype=None, copy=None):
        return self.F if dtype is None else self.F.astype(dtype)

    @property
    def J(self) -> float:
        return float(np.linalg.det(self.F))

    @property
    def stretch(self) -> float:
        return float(self.F[0, 0])

    @property
    def shear(self) -> float:
        return float(self.F[0, 1])

    @property
    def plane(self) -> tuple[float, float, float, float]:
        F = self.F
        return (F[0, 0], F[0, 1], F[1, 0], F[1, 1])


@dataclass(frozen=True)
class InvariantPair:
    I1: float
    I2: float


@dataclass(frozen=True)
class RotationSet:
    angles: tuple[tuple[float, float, float], ...]
    proper: np.ndarray      # (n, 3, 3), det +1
    improper: np.ndarray    # (n, 3, 3), det -1


def plane_strain_tensor(F11, F12, F21, F22) -> np.ndarray:
    """Vectorised plane-strain construction; F33 closes det F = 1."""
    F11, F12, F21, F22 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (F11, F12, F21, F22)))
    det2 = F11 * F22 - F12 * F21
    if np.any(np.abs(det2) <= SINGULAR_BLOCK_TOL):
        raise SingularPlaneBlock(f"2x2 block determinant too small: min |det| = {np.min(np.abs(det2)):.3e}")
    F = np.zeros(F11.shape + (3, 3))
    F[..., 0, 0] = F11
    F[..., 0, 1] = F12
    F[..., 1, 0] = F21
    F[..., 1, 1] = F22
    F[..., 2, 2] = 1.0 / det2
    return F


def plane_strain_F(F11: float, F12: float, F21: float, F22: float, label: str = "") -> DeformationGradient:
    return DeformationGradient(plane_strain_tensor(F11, F12, F21, F22), label=label)


def _mode_block(mode: LoadingMode, param: float) -> tuple[float, float, float, float]:
    mode = LoadingMode(mode)
    if mode is LoadingMode.SIMPLE_SHEAR:
        return (1.0, float(param), 0.0, 1.0)
    if param <= 0:
        raise NonPositiveStretch(f"{mode.value} requires a positive stretch, got {param}")
    lam = float(param)
    if mode in (LoadingMode.UNIAXIAL_TENSION, LoadingMode.UNIAXIAL_COMPRESSION):
        return (lam, 0.0, 0.0, lam ** -0.5)
    if mode is LoadingMode.EQUIBIAXIAL:
        return (lam, 0.0, 0.0, lam)
    return (lam, 0.0, 0.0, 1.0)


def mode_F(mode: LoadingMode, param: float) -> DeformationGradient:
    """Homogeneous state for a loading mode and its control parameter."""
    mode = LoadingMode(mode)
    return plane_strain_F(*_mode_block(mode, param), label=f"{mode.value}({param:g})")


def mode_tensors(mode: LoadingMode, params) -> np.ndarray:
    """Stack of ``mode_F`` tensors, shape (n, 3, 3)."""
    return np.stack([mode_F(mode, p).F for p in np.atleast_1d(params)])


def invariants_array(F) -> tuple[np.ndarray, np.ndarray]:
    F = as_tensor(F)
    C = np.swapaxes(F, -1, -2) @ F
    I1 = np.trace(C, axis1=-2, axis2=-1)
    trC2 = np.einsum("...ij,...ji->...", C, C)
    return I1, 0.5 * (I1 ** 2 - trC2)


def invariants(F) -> InvariantPair:
    I1, I2 = invariants_array(F)
    return InvariantPair(float(I1), float(I2))


_UNIAXIAL = (0.5, 0.7, 0.9, 1.1, 1.3, 1.5, 2.0, 3.0)
_EQUIBIAXIAL = (0.7, 0.9, 1.1, 1.3, 1.5, 2.0)
_PURE_SHEAR = (0.5, 0.7, 0.9, 1.1, 1.5, 2.0, 3.0)
_SIMPLE_SHEAR = (-1.0, -0.5, -0.1, 0.1, 0.5, 1.0)
_OFF_BIAXIAL = ((1.3, 1.1), (1.5, 0.9), (2.0, 1.2), (0.8, 1.4))
_STRETCH_SHEAR = ((1.3, 0.3, 0.0, 1.0), (1.1, 0.2, 0.1, 0.9), (1.5, 0.5, 0.0, 0.8))


def base_sample_set() -> list[DeformationGradient]:
    """The 35 representative plane-strain states used by most validators."""
    states = [plane_strain_F(1.0, 0.0, 0.0, 1.0, label="identity")]
    for lam in _UNIAXIAL:
        states.append(mode_F(LoadingMode.UNIAXIAL_TENSION, lam))
    for lam in _EQUIBIAXIAL:
        states.append(mode_F(LoadingMode.EQUIBIAXIAL, lam))
    for lam in _PURE_SHEAR:
        states.append(mode_F(LoadingMode.PURE_SHEAR, lam))
    for gamma in _SIMPLE_SHEAR:
        states.append(mode_F(LoadingMode.SIMPLE_SHEAR, gamma))
    for l1, l2 in _OFF_BIAXIAL:
        states.append(plane_strain_F(l1, 0.0, 0.0, l2, label=f"biaxial({l1:g},{l2:g})"))
    for block in _STRETCH_SHEAR:
        states.append(plane_strain_F(*block, label="stretch_shear(" + ",".join(f"{v:g}" for v in block) + ")"))
    return states


def rot_x(phi: float) -> np.ndarray:
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(phi: float) -> np.ndarray:
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(phi: float) -> np.ndarray:
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


ANGLE_TRIPLES = (
    (np.pi / 2, 0.0, 0.0),
    (0.0, np.pi / 3, 0.0),
    (0.0, 0.0, np.pi / 4),
    (np.pi / 6, np.pi / 4, np.pi / 3),
    (np.pi / 2, np.pi / 2, np.pi / 2),
    (np.pi / 4, np.pi / 6, 0.0),
    (1.0, 0.5, 0.25),
    (0.7, 1.3, 2.1),
    (2.0, 0.0, 1.0),
)

REFLECTION = np.diag([1.0, 1.0, -1.0])


def rotation_sets() -> RotationSet:
    proper = np.stack([rot_x(a) @ rot_y(b) @ rot_z(c) for a, b, c in ANGLE_TRIPLES])
    improper = proper @ REFLECTION
    proper.setflags(write=False)
    improper.setflags(write=False)
    return RotationSet(ANGLE_TRIPLES, proper, improper)


def in_plane_rotation(theta: float) -> np.ndarray:
    return rot_z(theta)


def fibonacci_hemisphere(n: int, offset: float = 0.0) -> np.ndarray:
    """Near-uniform unit vectors on the upper hemisphere (z >= 0).

    Golden-angle spiral in azimuth with heights evenly spaced in (0, 1].
    ``offset`` in [0, 1) shifts both the height lattice and the azimuth
    phase, giving a second point set that shares no points with the first.

    Returns
    -------
    ndarray of shape (n, 3)
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    k = np.arange(n, dtype=float)
    z = 1.0 - (k + offset) / n
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    theta = GOLDEN_ANGLE * k + 2.0 * np.pi * offset
    pts = np.column_stack([r * np.cos(theta), r * np.sin(theta), z])
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return pts


def ellipticity_grid(L: float = 2.0, n_per_axis: int = 50) -> list[DeformationGradient]:
    """Ordered principal-stretch states on a log-stretch grid.

    Each state is diag(l1, l2, l3) with l1 >= l2 >= l3 and l1*l2*l3 = 1.
    """
    if L <= 0 or n_per_axis < 2:
        raise ValueError("need L > 0 and n_per_axis >= 2")
    logs = np.linspace(-L, L, n_per_axis)
    seen = set()
    states = []
    floor = np.exp(-3.0 * L)
    for e1 in logs:
        for e2 in logs:
            # lambda3 = exp(-(e1 + e2)); sorting in log space keeps the product exact
            triple = sorted((e1, e2, -(e1 + e2)), reverse=True)
            key = tuple(np.round(triple, 12))
            if key in seen:
                continue
            seen.add(key)
            lams = np.exp(triple)
            lams[2] = 1.0 / (lams[0] * lams[1])
            if lams[2] > lams[1]:
                # tie in log space; recomputing lambda3 can overshoot by an ulp
                lams[1] = lams[2] = 1.0 / np.sqrt(lams[0])
            if lams[2] <= floor:
                continue
            states.append(DeformationGradient(np.diag(lams), label="principal(" + ",".join(f"{v:.6g}" for v in lams) + ")"))
    return states
