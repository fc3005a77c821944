"""Desk-scale dataset generation and the ODN1 dataset file format.

Built-in generators: a 1D antiderivative operator (analytic, for sanity
runs) and a 2D reaction-diffusion problem with a spatially discontinuous
reaction term, solved by an explicit finite-difference scheme on a
cell-centered grid with homogeneous Neumann boundaries via ghost-cell
reflection. Externally produced datasets (e.g. Darcy, cavity flow) are
loaded through the same file format; they are never synthesized here.

ODN1 layout, all little-endian:
    8 bytes   magic "ODNSET01"
    7 x u32   version=1, d_u, d_v, N_x, N_y, N, c
    f64[]     X (N_x x d_u), Y (N_y x d_v), U (N x N_x), V (N x N_y x c)
    u32 + bytes   metadata length, UTF-8 "key=value" lines
    u32       CRC32 of all prior bytes
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, NumericError, ShapeError

MAGIC = b"ODNSET01"
FORMAT_VERSION = 1


@dataclass
class OperatorDataset:
    """Paired input/output function samples with their sample locations."""

    name: str
    X: np.ndarray  # (N_x, d_u) input sample locations
    Y: np.ndarray  # (N_y, d_v) output sample locations
    U: np.ndarray  # (N, N_x) input-function samples
    V: np.ndarray  # (N, N_y) or (N, N_y, c) output-function samples
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.Y = np.ascontiguousarray(self.Y, dtype=np.float64)
        self.U = np.ascontiguousarray(self.U, dtype=np.float64)
        self.V = np.ascontiguousarray(self.V, dtype=np.float64)
        self.validate()

    def validate(self):
        if self.X.ndim != 2 or self.Y.ndim != 2:
            raise ShapeError("X and Y must be 2-d location arrays")
        if self.U.ndim != 2:
            raise ShapeError("U must be (N, N_x)")
        if self.V.ndim not in (2, 3):
            raise ShapeError("V must be (N, N_y) or (N, N_y, c)")
        if self.U.shape[0] != self.V.shape[0]:
            raise ShapeError(
                f"U has {self.U.shape[0]} samples but V has {self.V.shape[0]}"
            )
        if self.U.shape[1] != self.X.shape[0]:
            raise ShapeError(
                f"U columns ({self.U.shape[1]}) must match |X| ({self.X.shape[0]})"
            )
        if self.V.shape[1] != self.Y.shape[0]:
            raise ShapeError(
                f"V columns ({self.V.shape[1]}) must match |Y| ({self.Y.shape[0]})"
            )
        for arr, label in ((self.X, "X"), (self.Y, "Y"), (self.U, "U"), (self.V, "V")):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"dataset array {label} contains non-finite values")

    @property
    def n_samples(self):
        return self.U.shape[0]

    @property
    def n_x(self):
        return self.X.shape[0]

    @property
    def n_y(self):
        return self.Y.shape[0]

    @property
    def d_u(self):
        return self.X.shape[1]

    @property
    def d_v(self):
        return self.Y.shape[1]

    @property
    def n_components(self):
        return 1 if self.V.ndim == 2 else self.V.shape[2]

    def scalar_targets(self) -> np.ndarray:
        """(N, N_y) training targets; vector fields reduce to pointwise
        Euclidean magnitudes, matching the error protocol."""
        if self.V.ndim == 2:
            return self.V
        return np.sqrt((self.V * self.V).sum(axis=2))


def _sample_seed(seed: int, i: int) -> np.random.Generator:
    # Per-sample child streams: independent of generation order.
    return np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), int(i))))


def gen_antiderivative(n_samples: int, n_modes: int = 5, grid: int = 64,
                       seed: int = 0) -> OperatorDataset:
    """Random sine-series inputs on [0, 1] paired with exact antiderivatives.

    u(x) = sum_k a_k sin(k pi x) with a_k ~ U(-1, 1);
    v(x) = sum_k a_k (1 - cos(k pi x)) / (k pi).
    """
    grid = int(grid)
    if grid < 8:
        raise ConfigError("antiderivative grid needs at least 8 points")
    x = np.linspace(0.0, 1.0, grid)
    k = np.arange(1, int(n_modes) + 1)
    sin_basis = np.sin(np.pi * np.outer(k, x))          # (modes, grid)
    int_basis = (1.0 - np.cos(np.pi * np.outer(k, x))) / (np.pi * k)[:, None]
    u = np.empty((n_samples, grid))
    v = np.empty((n_samples, grid))
    for i in range(n_samples):
        a = _sample_seed(seed, i).uniform(-1.0, 1.0, size=k.shape[0])
        u[i] = a @ sin_basis
        v[i] = a @ int_basis
    locs = x[:, None]
    meta = {
        "generator": "antiderivative",
        "seed": str(int(seed)),
        "n_modes": str(int(n_modes)),
        "grid": str(grid),
    }
    return OperatorDataset("antiderivative", locs, locs.copy(), u, v, meta)


@dataclass(frozen=True)
class RDParams:
    """Parameters of the 2D reaction-diffusion problem on [lo, hi]^2.

    The reaction k_on (R - c) c_amb - k_off c is switched off for
    y1 > switch (discontinuous coefficients); diffusion is uniform.
    dt=None picks the largest stable step that divides t_final.
    """

    nu: float = 0.1
    reaction_cap: float = 2.0  # throttle R
    k_on: float = 2.0
    k_off: float = 0.2
    switch: float = 1.0
    lo: float = 0.0
    hi: float = 2.0
    t_final: float = 0.5
    n: int = 32
    dt: float | None = None
    branch_grid: int = 8

    def __post_init__(self):
        if self.n < 4:
            raise ConfigError("rd2d grid n must be at least 4")
        if self.hi <= self.lo:
            raise ConfigError("rd2d domain must have hi > lo")
        if self.t_final <= 0.0:
            raise ConfigError("rd2d t_final must be positive")
        if self.dt is not None:
            if self.dt <= 0.0:
                raise ConfigError("rd2d dt must be positive")
            if self.dt > self.stability_bound():
                raise ConfigError(
                    f"rd2d dt={self.dt} violates the stability bound "
                    f"{self.stability_bound():.6g} = 0.9 h^2 / (4 nu)"
                )

    @property
    def h(self):
        return (self.hi - self.lo) / self.n

    def stability_bound(self) -> float:
        if self.nu <= 0.0:
            return np.inf
        return 0.9 * self.h * self.h / (4.0 * self.nu)

    def step_size(self) -> float:
        if self.dt is not None:
            return self.dt
        bound = self.stability_bound()
        if not np.isfinite(bound):
            return self.t_final / 100.0
        steps = int(np.ceil(self.t_final / bound))
        return self.t_final / steps

    def cell_centers_1d(self) -> np.ndarray:
        return self.lo + (np.arange(self.n) + 0.5) * self.h

    def grid_points(self) -> np.ndarray:
        c = self.cell_centers_1d()
        y1, y2 = np.meshgrid(c, c, indexing="ij")
        return np.stack([y1.reshape(-1), y2.reshape(-1)], axis=1)

    def branch_points(self) -> np.ndarray:
        m = int(self.branch_grid)
        hb = (self.hi - self.lo) / m
        c = self.lo + (np.arange(m) + 0.5) * hb
        x1, x2 = np.meshgrid(c, c, indexing="ij")
        return np.stack([x1.reshape(-1), x2.reshape(-1)], axis=1)


def _ambient(y1, y2, t):
    return (1.0 + np.cos(2.0 * np.pi * y1) * np.cos(2.0 * np.pi * y2)) * np.exp(-np.pi * t)


def simulate_rd(params: RDParams, c0: float) -> np.ndarray:
    """Advance the reaction-diffusion field from the constant IC ``c0`` to
    t_final; returns the (n, n) concentration grid."""
    n = params.n
    c = np.full((n, n), float(c0))
    centers = params.cell_centers_1d()
    y1, y2 = np.meshgrid(centers, centers, indexing="ij")
    on_field = np.where(y1 <= params.switch, params.k_on, 0.0)
    off_field = np.where(y1 <= params.switch, params.k_off, 0.0)
    dt = params.step_size()
    steps = int(np.ceil(params.t_final / dt - 1e-12))
    inv_h2 = 1.0 / (params.h * params.h)
    cap = params.reaction_cap
    blow = 10.0 * cap
    t = 0.0
    for step in range(steps):
        dt_k = min(dt, params.t_final - t)  # truncate the last step onto t_final
        amb = _ambient(y1, y2, t)
        padded = np.pad(c, 1, mode="edge")  # ghost cells: zero-flux reflection
        lap = (
            padded[:-2, 1:-1] + padded[2:, 1:-1]
            + padded[1:-1, :-2] + padded[1:-1, 2:]
            - 4.0 * c
        ) * inv_h2
        c = c + dt_k * (on_field * (cap - c) * amb - off_field * c + params.nu * lap)
        t += dt_k
        if np.max(np.abs(c)) > blow:
            raise NumericError(
                f"rd2d solver blew up at step {step + 1} (|c| > {blow})"
            )
    return c


def gen_reaction_diffusion_2d(params: RDParams, n_samples: int, seed: int = 0) -> OperatorDataset:
    """Constant random initial concentrations mapped to the t_final field."""
    big_y = params.grid_points()
    big_x = params.branch_points()
    u = np.empty((n_samples, big_x.shape[0]))
    v = np.empty((n_samples, big_y.shape[0]))
    for i in range(n_samples):
        c0 = float(_sample_seed(seed, i).uniform(0.0, 1.0))
        u[i] = c0
        v[i] = simulate_rd(params, c0).reshape(-1)
    meta = {
        "generator": "rd2d",
        "seed": str(int(seed)),
        "n": str(params.n),
        "branch_grid": str(params.branch_grid),
        "nu": repr(params.nu),
        "t_final": repr(params.t_final),
        "dt": repr(params.step_size()),
    }
    return OperatorDataset("rd2d", big_x, big_y, u, v, meta)


def eval_K_profile(y1):
    """Sharp-gradient diffusion-coefficient profile used by the 3D problem
    (exposed as a pure function; the 3D solver itself is out of scope)."""
    a, b, c = 9.0, 0.0215, 0.005
    y1 = np.asarray(y1, dtype=np.float64)
    val = b + (c / np.tanh(a)) * (
        (a - 3.0) * np.tanh(8.0 * y1 - 5.0)
        - (a - 15.0) * np.tanh(8.0 * y1 + 5.0)
        + a * np.tanh(a)
    )
    if val.ndim == 0:
        return float(val)
    return val


def _metadata_text(metadata: dict) -> str:
    lines = []
    for key in sorted(metadata):
        k, v = str(key), str(metadata[key])
        if "=" in k or "\n" in k or "\n" in v:
            raise DataError(f"metadata key/value not encodable: {k!r}")
        lines.append(f"{k}={v}\n")
    return "".join(lines)


def write_dataset(ds: OperatorDataset, path):
    """Write ODN1; bit-exact float64 round-trip, CRC-protected."""
    ds.validate()
    c = ds.n_components
    parts = [MAGIC]
    parts.append(struct.pack(
        "<7I", FORMAT_VERSION, ds.d_u, ds.d_v, ds.n_x, ds.n_y, ds.n_samples, c
    ))
    for arr in (ds.X, ds.Y, ds.U, ds.V):
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    meta = dict(ds.metadata)
    meta.setdefault("name", ds.name)
    mbytes = _metadata_text(meta).encode("utf-8")
    parts.append(struct.pack("<I", len(mbytes)))
    parts.append(mbytes)
    blob = b"".join(parts)
    crc = zlib.crc32(blob) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(blob)
        fh.write(struct.pack("<I", crc))


def read_dataset(path) -> OperatorDataset:
    """Read ODN1, verifying magic, version, lengths, and checksum."""
    with open(path, "rb") as fh:
        blob = fh.read()
    header = len(MAGIC) + 7 * 4
    if len(blob) < header + 4 + 4:
        raise DataError(f"{path}: truncated ODN1 file ({len(blob)} bytes)")
    if blob[: len(MAGIC)] != MAGIC:
        raise DataError(f"{path}: bad magic, not an ODN1 dataset")
    version, d_u, d_v, n_x, n_y, n, c = struct.unpack_from("<7I", blob, len(MAGIC))
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported ODN1 version {version}")
    counts = (n_x * d_u, n_y * d_v, n * n_x, n * n_y * c)
    arrays_bytes = 8 * sum(counts)
    meta_len_at = header + arrays_bytes
    if len(blob) < meta_len_at + 4:
        raise DataError(f"{path}: truncated ODN1 file (array block incomplete)")
    (meta_len,) = struct.unpack_from("<I", blob, meta_len_at)
    total = meta_len_at + 4 + meta_len + 4
    if len(blob) != total:
        raise DataError(
            f"{path}: length mismatch ({len(blob)} bytes, header implies {total})"
        )
    (stored_crc,) = struct.unpack_from("<I", blob, total - 4)
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != stored_crc:
        raise DataError(f"{path}: CRC32 mismatch, file is corrupted")
    offset = header
    arrays = []
    shapes = ((n_x, d_u), (n_y, d_v), (n, n_x), (n, n_y, c))
    for count, shape in zip(counts, shapes):
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        arrays.append(arr.astype(np.float64).reshape(shape))
        offset += 8 * count
    x, y, u, v = arrays
    if c == 1:
        v = v.reshape(n, n_y)
    meta_text = blob[meta_len_at + 4: meta_len_at + 4 + meta_len].decode("utf-8")
    metadata = {}
    for line in meta_text.splitlines():
        if line:
            k, _, val = line.partition("=")
            metadata[k] = val
    name = metadata.get("name", "dataset")
    return OperatorDataset(name, x, y, u, v, metadata)
