"""Per-head causal bias matrices materialized from fusion presets.

A bias matrix is Toeplitz: entry (i, j) depends only on the distance i - j.
Packs therefore store one length-L vector of log-bias values per head and
expand to dense L x L matrices only on demand (export, attention, views).
Dense expansion is guarded by an entry cap so a typo cannot allocate
hundreds of gigabytes.

File formats:
  CSV    one header comment line "# preset=..., head=..., L=...", then L rows
         of L comma-separated cells; cells above the diagonal (masked) are
         empty; values printed with 9 significant digits.
  cache  binary: magic "MEPB", version u16 LE, H u32 LE, L u32 LE, then H*L
         float64 LE distance values, head-major.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import fusion as F
from . import slopes as S
from .errors import ConfigError, ResourceLimitError

DEFAULT_ENTRY_CAP = 16 * 8192 * 8192

_CACHE_MAGIC = b"MEPB"
_CACHE_VERSION = 1


@dataclass
class BiasPack:
    """H per-head causal additive-bias matrices, stored as distance vectors.

    distance_bias[h, d] = log-kernel value at distance d; the additive matrix
    is additive(h)[i, j] = distance_bias[h, i - j] for j <= i.
    """

    heads: int
    length: int
    distance_bias: np.ndarray
    preset: str = ""
    schedule: str = ""
    specs: tuple[F.FusionSpec, ...] | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.distance_bias = np.asarray(self.distance_bias, dtype=np.float64)
        if self.distance_bias.shape != (self.heads, self.length):
            raise ConfigError(
                f"distance_bias shape {self.distance_bias.shape} != "
                f"({self.heads}, {self.length})"
            )

    def additive(self, head: int, length: int | None = None) -> np.ndarray:
        """Dense (L, L) additive matrix for one head; cells above the diagonal are 0."""
        L = self.length if length is None else length
        self._check_head(head)
        self._check_length(L)
        mat = self.distance_bias[head][_distance_index(L)]
        return np.where(_causal_mask(L), mat, 0.0)

    def additive_stack(self, length: int | None = None) -> np.ndarray:
        """Dense (H, L, L) additive matrices (masked region zeroed)."""
        L = self.length if length is None else length
        self._check_length(L)
        _guard_entries(self.heads, L, DEFAULT_ENTRY_CAP)
        mats = self.distance_bias[:, _distance_index(L)]
        return np.where(_causal_mask(L), mats, 0.0)

    def _check_head(self, head: int) -> None:
        if head < 0 or head >= self.heads:
            raise ConfigError(f"head {head} out of range for {self.heads} heads")

    def _check_length(self, length: int) -> None:
        if length < 1 or length > self.length:
            raise ConfigError(f"length {length} outside 1..{self.length}")


def _distance_index(length: int) -> np.ndarray:
    idx = np.arange(length)
    return np.abs(idx[:, None] - idx[None, :])


def _causal_mask(length: int) -> np.ndarray:
    idx = np.arange(length)
    return idx[None, :] <= idx[:, None]


def _guard_entries(heads: int, length: int, cap: int) -> None:
    if heads * length * length > cap:
        raise ResourceLimitError(
            f"H*L^2 = {heads}*{length}^2 exceeds the entry cap {cap}; "
            f"raise the cap explicitly if this is intentional"
        )


def build_bias(
    preset: F.FusionPreset | str,
    heads: int,
    length: int,
    *,
    schedule: S.SlopeSchedule | None = None,
    cap: int = DEFAULT_ENTRY_CAP,
) -> BiasPack:
    """Build the per-head bias pack for a preset in O(H*L).

    One value per distance is computed and broadcast along diagonals on
    expansion, so every diagonal of the dense view is constant by
    construction.
    """
    if heads < 1 or length < 1:
        raise ConfigError(f"need heads >= 1 and length >= 1, got {heads}, {length}")
    _guard_entries(heads, length, cap)
    if isinstance(preset, str):
        preset = F.resolve_preset(preset, heads, schedule)
    if preset.num_heads != heads:
        raise ConfigError(f"preset is for {preset.num_heads} heads, asked for {heads}")
    schedule = schedule if schedule is not None else S.Geometric(heads)
    d = np.arange(length)
    specs = tuple(F.make_preset(preset, h) for h in range(heads))
    vecs = np.stack([F.fused_log_bias(specs[h], d) for h in range(heads)])
    return BiasPack(
        heads=heads,
        length=length,
        distance_bias=vecs,
        preset=F.preset_label(preset),
        schedule=S.describe(schedule),
        specs=specs,
    )


def multiplicative_view(pack: BiasPack, cap: int = DEFAULT_ENTRY_CAP) -> np.ndarray:
    """(H, L, L) matrices of exp(bias); masked cells are 0, diagonal is 1.

    Underflow to 0.0 is permitted here; use the additive form when the
    distinction between "tiny" and "zero" matters.
    """
    _guard_entries(pack.heads, pack.length, cap)
    mats = np.exp(pack.distance_bias[:, _distance_index(pack.length)])
    return np.where(_causal_mask(pack.length), mats, 0.0)


def _atomic_write(path: str | os.PathLike, data: bytes) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-kernelbias-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _format_cell(value: float) -> str:
    return f"{value:.9g}"


def render_csv(pack: BiasPack, head: int, form: str = "additive", scale: float = 1.0) -> str:
    """CSV text for one head: row i = query position, column j = key position."""
    pack._check_head(head)
    if form not in ("additive", "multiplicative"):
        raise ConfigError(f"form must be additive|multiplicative, got {form!r}")
    vec = pack.distance_bias[head]
    if form == "multiplicative":
        vec = np.exp(vec) * scale
    L = pack.length
    # 1-based head number in the header, matching report conventions.
    lines = [f"# preset={pack.preset}, head={head + 1}, L={L}, form={form}"]
    for i in range(L):
        row = [_format_cell(vec[i - j]) if j <= i else "" for j in range(L)]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def dump_csv(pack: BiasPack, head: int, form: str, path: str | os.PathLike) -> None:
    """Write one head's matrix as CSV (atomically)."""
    try:
        _atomic_write(path, render_csv(pack, head, form).encode())
    except OSError as exc:
        raise OSError(f"writing bias CSV to {os.fspath(path)!r} failed: {exc}") from exc


def load_csv(path: str | os.PathLike) -> tuple[dict[str, str], np.ndarray]:
    """Re-parse a dumped CSV; masked cells come back as NaN."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# "):
            raise ConfigError(f"{os.fspath(path)!r} is missing the header comment line")
        meta = dict(part.split("=", 1) for part in header[2:].split(", "))
        rows = [
            [float(cell) if cell else np.nan for cell in line.rstrip("\n").split(",")]
            for line in fh
            if line.strip() != ""
        ]
    return meta, np.array(rows)


def save_cache(pack: BiasPack, path: str | os.PathLike) -> None:
    """Write the binary distance-vector cache."""
    header = _CACHE_MAGIC + struct.pack("<HII", _CACHE_VERSION, pack.heads, pack.length)
    body = pack.distance_bias.astype("<f8").tobytes()
    try:
        _atomic_write(path, header + body)
    except OSError as exc:
        raise OSError(f"writing bias cache to {os.fspath(path)!r} failed: {exc}") from exc


def load_cache(path: str | os.PathLike) -> BiasPack:
    """Read a cache written by save_cache.  Preset metadata is not stored."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _CACHE_MAGIC:
        raise ConfigError(f"{os.fspath(path)!r} is not a bias cache (bad magic)")
    version, heads, length = struct.unpack_from("<HII", blob, 4)
    if version != _CACHE_VERSION:
        raise ConfigError(f"unsupported cache version {version}")
    expected = 4 + struct.calcsize("<HII") + heads * length * 8
    if len(blob) != expected:
        raise ConfigError(f"cache {os.fspath(path)!r} is truncated")
    vecs = np.frombuffer(blob, dtype="<f8", offset=4 + struct.calcsize("<HII"))
    return BiasPack(
        heads=heads,
        length=length,
        distance_bias=vecs.reshape(heads, length).astype(np.float64),
        preset="(cache)",
        schedule="(cache)",
    )
