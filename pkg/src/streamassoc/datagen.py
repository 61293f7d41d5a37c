"""Synthetic shifted domains, drifting streams, and IDX file I/O."""

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .estimate import _as_probs
from .numgrad import ContractError
from .sampling import LabeledDataset, largest_remainder_counts, make_divergent_distribution

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Shift:
    """``x -> scale * R(angle) x + translation`` with ``R`` a rotation in the domain's plane."""

    angle: float = 0.0
    translation: np.ndarray = None
    scale: float = 1.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ContractError("shift scale must be > 0")


@dataclass(frozen=True)
class DomainSpec:
    num_classes: int
    input_dim: int
    means: np.ndarray  # C x input_dim
    sigma: float
    plane: np.ndarray  # 2 x input_dim, orthonormal rows
    shift: Shift = field(default_factory=Shift)

    def __post_init__(self):
        if self.sigma <= 0:
            raise ContractError("sigma must be > 0")
        if self.means.shape != (self.num_classes, self.input_dim):
            raise ContractError("means must be C x input_dim")

    def shifted(self, shift):
        return replace(self, shift=shift)


@dataclass(frozen=True)
class StreamSpec:
    n: int
    shifts: tuple
    dists: tuple

    def __post_init__(self):
        if len(self.shifts) < 1 or len(self.shifts) != len(self.dists):
            raise ContractError("stream schedule must have K >= 1 matching shifts and dists")

    @property
    def K(self):
        return len(self.shifts)


class IdxError(ValueError):
    pass


class IdxMagicError(IdxError):
    pass


class IdxTruncatedError(IdxError):
    pass


class IdxCountMismatchError(IdxError):
    pass


def make_domain_spec(num_classes, input_dim, sigma=1.0, radius=None, seed=0):
    """Class means spread on a sphere of ``radius`` (default ``4 * sigma``)."""
    if input_dim < 2:
        raise ContractError("input_dim must be >= 2 to hold a rotation plane")
    rng = np.random.default_rng(seed)
    radius = 4.0 * sigma if radius is None else radius
    means = rng.standard_normal((num_classes, input_dim))
    means *= radius / np.linalg.norm(means, axis=1, keepdims=True)
    plane, _ = np.linalg.qr(rng.standard_normal((input_dim, 2)))
    return DomainSpec(num_classes, input_dim, means, float(sigma), plane.T.copy())


def rotation_matrix(plane, angle, dim):
    u, v = plane
    c, s = np.cos(angle), np.sin(angle)
    return (np.eye(dim)
            + (c - 1.0) * (np.outer(u, u) + np.outer(v, v))
            + s * (np.outer(v, u) - np.outer(u, v)))


def apply_shift(spec, x, shift=None):
    shift = spec.shift if shift is None else shift
    out = x @ rotation_matrix(spec.plane, shift.angle, spec.input_dim).T
    out = shift.scale * out
    if shift.translation is not None:
        out = out + np.asarray(shift.translation, dtype=np.float64)
    return out


def gen_domain(spec, n, dist=None, seed=0):
    """Sample ``n`` points with class counts set by ``dist``, then shift them."""
    probs = np.full(spec.num_classes, 1.0 / spec.num_classes) if dist is None else _as_probs(dist)
    if probs.size != spec.num_classes:
        raise ContractError("distribution length differs from class count")
    if not np.isclose(probs.sum(), 1.0) or np.any(probs < 0):
        raise ContractError("degenerate class distribution")
    if n < np.count_nonzero(probs) and n > 0:
        raise ContractError(f"n={n} too small for {np.count_nonzero(probs)} classes")
    rng = np.random.default_rng(seed)
    counts = largest_remainder_counts(probs, n)
    labels = np.repeat(np.arange(spec.num_classes), counts)
    rng.shuffle(labels)
    x = spec.means[labels] + spec.sigma * rng.standard_normal((n, spec.input_dim))
    return LabeledDataset(apply_shift(spec, x), labels, spec.num_classes)


def linear_drift(K, n, num_classes, input_dim, angle_step=0.0, translation_step=None,
                 scale_step=0.0, kl_max=0.0, base=None, seed=0):
    """Schedule whose shift grows linearly in the batch index and whose class
    distribution tilts away from uniform, ``KL(u || q_tau)`` rising linearly
    from 0 to ``kl_max``.

    Batch ``tau`` (1-based) gets ``base`` composed with ``tau`` drift steps.
    """
    base = base or Shift()
    step = np.zeros(input_dim) if translation_step is None else np.asarray(translation_step, float)
    base_t = np.zeros(input_dim) if base.translation is None else np.asarray(base.translation, float)
    shifts, dists = [], []
    for tau in range(1, K + 1):
        shifts.append(Shift(base.angle + tau * angle_step, base_t + tau * step,
                            base.scale * (1.0 + tau * scale_step)))
        kl = kl_max * (tau - 1) / (K - 1) if K > 1 else kl_max
        dists.append(make_divergent_distribution(num_classes, kl, seed).distribution)
    return StreamSpec(n, tuple(shifts), tuple(dists))


def gen_stream(spec, stream, seed=0):
    """Yield the ``K`` target batches; batch ``tau`` depends only on (seed, tau)."""
    seeds = np.random.SeedSequence(seed).spawn(stream.K)
    for shift, dist, ss in zip(stream.shifts, stream.dists, seeds):
        yield gen_domain(spec.shifted(shift), stream.n, dist, np.random.default_rng(ss))


# -- IDX container -----------------------------------------------------------


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


def _parse_idx(raw, magic, what):
    if len(raw) < 4:
        raise IdxTruncatedError(f"{what}: file too short for a header")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise IdxMagicError(f"{what}: bad magic 0x{found:08x}, expected 0x{magic:08x}")
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise IdxTruncatedError(f"{what}: truncated dimension header")
    dims = struct.unpack(f">{ndim}I", raw[4:head])
    size = int(np.prod(dims))
    if len(raw) < head + size:
        raise IdxTruncatedError(f"{what}: expected {size} data bytes, found {len(raw) - head}")
    return dims, np.frombuffer(raw, dtype=np.uint8, count=size, offset=head)


def load_idx(images_path, labels_path, num_classes=None):
    """Read an unsigned-byte IDX image/label pair into a dataset scaled to ``[0, 1]``."""
    dims, pixels = _parse_idx(_read(images_path), IMAGES_MAGIC, "images")
    (n_labels,), labels = _parse_idx(_read(labels_path), LABELS_MAGIC, "labels")
    n = dims[0]
    if n != n_labels:
        raise IdxCountMismatchError(f"{n} images but {n_labels} labels")
    features = pixels.reshape(n, dims[1] * dims[2]).astype(np.float64) / 255.0
    labels = labels.astype(int)
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if n else 0
    return LabeledDataset(features, labels, num_classes)


def idx_bytes(array, magic):
    array = np.asarray(array, dtype=np.uint8)
    ndim = magic & 0xFF
    if array.ndim != ndim:
        raise IdxError(f"magic 0x{magic:08x} needs a {ndim}-D array")
    return struct.pack(f">I{ndim}I", magic, *array.shape) + array.tobytes()


def write_idx(images_path, labels_path, images, labels):
    with open(images_path, "wb") as fh:
        fh.write(idx_bytes(images, IMAGES_MAGIC))
    with open(labels_path, "wb") as fh:
        fh.write(idx_bytes(labels, LABELS_MAGIC))
