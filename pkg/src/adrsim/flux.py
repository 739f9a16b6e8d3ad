"""Spatial-hash encounter detection and collision-flux accumulation.

Space is divided into cubic cells; two objects encounter each other at a
time step when their cells differ by at most one index in every axis
(the 3x3x3 neighborhood around each cell). Each encounter adds

    w * relative_speed * step / V_ref,    V_ref = (3 * cell_size)^3

to BOTH objects' accumulators, where w = 1, or the mean cross-section of
the pair (converted m^2 -> km^2) when cross-section weighting is on.

Determinism contract: the accumulated table is bitwise identical for
any worker count. Steps are folded in fixed chunks of _CHUNK_STEPS
(ascending time inside a chunk, ascending chunk index across chunks),
and within a step the pair contributions are applied in ascending
(id_a, id_b) order, so the float operation sequence never depends on
how the chunks were scheduled.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np

from .catalogue import Catalogue, catalogue_digest
from .constants import CELL_SIZE_KM_DEFAULT, HORIZON_S_DEFAULT, STEP_S_DEFAULT
from .propagation import (
    ElementArrays,
    NonConvergence,
    PerturbationMode,
    StateVector,
    states_at,
)


class EmptyTable(Exception):
    """Raised when an operation needs at least one flux entry."""


class FluxPropagationError(Exception):
    """Propagation failed mid-accumulation; names the object and time."""

    def __init__(self, object_id: str, time_s: float):
        self.object_id = object_id
        self.time_s = time_s
        super().__init__(f"propagation failed for object {object_id!r} at t={time_s} s")


class CellKey(NamedTuple):
    ix: int
    iy: int
    iz: int


@dataclass(frozen=True)
class FluxConfig:
    """Accumulation parameters (defaults: 10/3-km cells, daily steps
    over a 50-year horizon, secular-J2 propagation)."""

    cell_size_km: float = CELL_SIZE_KM_DEFAULT
    horizon_s: float = HORIZON_S_DEFAULT
    step_s: float = STEP_S_DEFAULT
    mode: PerturbationMode = PerturbationMode.J2_SECULAR
    weight_by_cross_section: bool = False

    def __post_init__(self):
        if not (self.cell_size_km > 0.0):
            raise ValueError("cell_size_km must be positive")
        if not (self.step_s > 0.0):
            raise ValueError("step_s must be positive")
        if not (self.horizon_s >= self.step_s):
            raise ValueError("horizon_s must be at least one step")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.horizon_s / self.step_s - 1e-9))

    @property
    def reference_volume_km3(self) -> float:
        return (3.0 * self.cell_size_km) ** 3


@dataclass(frozen=True)
class Encounter:
    id_a: str
    id_b: str
    time: float
    relative_speed_km_s: float


@dataclass
class FluxTable:
    """Accumulated collision flux per object id."""

    values: dict[str, float]
    config: FluxConfig
    catalogue_hash: str

    def __len__(self) -> int:
        return len(self.values)

    def total(self) -> float:
        # Exact summation: keeps totals order-independent and makes
        # the non-increase under object removal hold without tolerance.
        return math.fsum(self.values.values())


def cell_of(position_km, cell_size_km: float) -> CellKey:
    """Cell indices by componentwise floor division."""
    x, y, z = position_km
    return CellKey(
        int(math.floor(x / cell_size_km)),
        int(math.floor(y / cell_size_km)),
        int(math.floor(z / cell_size_km)),
    )


# ---------------------------------------------------------------------------
# Packed-key grid kernel.
#
# Cell indices are offset into unsigned 21-bit fields and packed
# (ix | iy | iz) into one int64, so cells that differ only by iz = +-1
# are adjacent integers. Sorting the keys once then lets every
# neighborhood query become a binary-search range [q-1, q+1].

_FIELD_OFFSET = 1 << 20
_SHIFT_Y = 1 << 21
_SHIFT_X = 1 << 42
_MAX_INDEX = _FIELD_OFFSET - 2

# Half of the 8 column neighbors: (di,dj) in {(0,1),(1,-1),(1,0),(1,1)}.
# Scanning only these (plus the in-column forward run) yields every
# unordered cell pair exactly once.
_HALF_COLUMN_OFFSETS = (
    _SHIFT_Y,
    _SHIFT_X - _SHIFT_Y,
    _SHIFT_X,
    _SHIFT_X + _SHIFT_Y,
)

_CHUNK_STEPS = 2048


def _pack_keys(pos: np.ndarray, cell_size_km: float) -> np.ndarray:
    cells = np.floor(pos / cell_size_km).astype(np.int64)
    if np.abs(cells).max(initial=0) > _MAX_INDEX:
        raise ValueError("position outside the supported grid range")
    return (
        (cells[:, 0] + _FIELD_OFFSET) * _SHIFT_X
        + (cells[:, 1] + _FIELD_OFFSET) * _SHIFT_Y
        + (cells[:, 2] + _FIELD_OFFSET)
    )


def _pair_indices(keys: np.ndarray):
    """All unordered index pairs whose cells are within the 3x3x3
    neighborhood, as (a, b) arrays with a < b, or None."""
    n = len(keys)
    order = np.argsort(keys)
    sorted_keys = keys[order]
    pos_idx = np.arange(n)
    out_a: list[np.ndarray] = []
    out_b: list[np.ndarray] = []

    def emit(query_pos, lo, hi):
        count = hi - lo
        total = int(count.sum())
        if total == 0:
            return
        nonzero = count > 0
        count_nz = count[nonzero]
        starts = np.cumsum(count_nz) - count_nz
        flat = np.arange(total) - np.repeat(starts, count_nz) + np.repeat(lo[nonzero], count_nz)
        out_a.append(order[np.repeat(query_pos[nonzero], count_nz)])
        out_b.append(order[flat])

    # Same column (equal ix, iy): for the element at sorted position p,
    # every later position with key <= key + 1 shares the cell or sits
    # one cell up in z.
    hi = np.searchsorted(sorted_keys, sorted_keys + 1, side="right")
    emit(pos_idx, pos_idx + 1, hi)

    for delta in _HALF_COLUMN_OFFSETS:
        query = sorted_keys + delta
        lo = np.searchsorted(sorted_keys, query - 1, side="left")
        hi = np.searchsorted(sorted_keys, query + 1, side="right")
        emit(pos_idx, lo, hi)

    if not out_a:
        return None
    a = np.concatenate(out_a)
    b = np.concatenate(out_b)
    return np.minimum(a, b), np.maximum(a, b)


def find_encounters(
    states: Mapping[str, StateVector],
    cell_size_km: float,
    time: float = 0.0,
) -> list[Encounter]:
    """Every unordered pair of ids whose cells differ by at most one
    index per axis, with the pair's relative speed."""
    ids = sorted(states)
    if len(ids) < 2:
        return []
    pos = np.array([states[i].position_km for i in ids], dtype=float)
    vel = np.array([states[i].velocity_km_s for i in ids], dtype=float)
    pairs = _pair_indices(_pack_keys(pos, cell_size_km))
    if pairs is None:
        return []
    a, b = pairs
    rel = np.linalg.norm(vel[a] - vel[b], axis=1)
    order = np.lexsort((b, a))
    return [
        Encounter(
            id_a=ids[a[k]],
            id_b=ids[b[k]],
            time=time,
            relative_speed_km_s=float(rel[k]),
        )
        for k in order
    ]


def _chunk_flux(
    arrays: ElementArrays,
    offsets: np.ndarray,
    cross_sections: np.ndarray,
    config: FluxConfig,
    step_lo: int,
    step_hi: int,
    ids: tuple[str, ...],
) -> np.ndarray:
    """Partial flux for steps [step_lo, step_hi), folded in time order."""
    partial = np.zeros(len(arrays))
    scale = config.step_s / config.reference_volume_km3
    for k in range(step_lo, step_hi):
        t = k * config.step_s
        try:
            pos, vel = states_at(arrays, offsets + t)
        except NonConvergence as exc:
            idx = getattr(exc, "index", None)
            object_id = ids[idx] if idx is not None else "<unknown>"
            raise FluxPropagationError(object_id, t) from exc
        pairs = _pair_indices(_pack_keys(pos, config.cell_size_km))
        if pairs is None:
            continue
        a, b = pairs
        rel = np.sqrt(((vel[a] - vel[b]) ** 2).sum(axis=1))
        increment = rel * scale
        if config.weight_by_cross_section:
            increment = increment * (
                0.5 * (cross_sections[a] + cross_sections[b]) * 1e-6
            )
        # Apply in ascending (id_a, id_b) order, both partners per pair.
        order = np.lexsort((b, a))
        targets = np.column_stack((a[order], b[order])).ravel()
        np.add.at(partial, targets, np.repeat(increment[order], 2))
    return partial


def _chunk_flux_task(args):
    return _chunk_flux(*args)


def accumulate_flux(
    catalogue: Catalogue,
    config: FluxConfig | None = None,
    workers: int = 1,
) -> FluxTable:
    """Accumulate collision flux for every object over the horizon.

    Objects are propagated to common absolute times (the latest element
    epoch in the catalogue plus k*step for k = 0, 1, ...). The result
    is independent of `workers`, bit for bit.
    """
    if config is None:
        config = FluxConfig()
    if len(catalogue) == 0:
        raise ValueError("catalogue must be non-empty")

    ids = catalogue.ids()
    arrays = ElementArrays.build([obj.elements for obj in catalogue], config.mode)
    offsets = float(arrays.epoch.max()) - arrays.epoch
    cross_sections = np.array([obj.cross_section_m2 for obj in catalogue])

    n_steps = config.n_steps
    bounds = list(range(0, n_steps, _CHUNK_STEPS)) + [n_steps]
    chunks = [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]

    partials: dict[int, np.ndarray] = {}
    if workers <= 1 or len(chunks) == 1:
        for i, (lo, hi) in enumerate(chunks):
            partials[i] = _chunk_flux(arrays, offsets, cross_sections, config, lo, hi, ids)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                i: pool.submit(
                    _chunk_flux_task,
                    (arrays, offsets, cross_sections, config, lo, hi, ids),
                )
                for i, (lo, hi) in enumerate(chunks)
            }
            for i in futures:
                partials[i] = futures[i].result()

    total = np.zeros(len(ids))
    for i in range(len(chunks)):
        total += partials[i]

    values = {object_id: float(total[k]) for k, object_id in enumerate(ids)}
    return FluxTable(values=values, config=config, catalogue_hash=catalogue_digest(catalogue))


def flux_histogram(table: FluxTable, bin_count: int) -> list[tuple[float, int]]:
    """Equal-width bins over [0, max flux]; counts partition the table."""
    if len(table) == 0:
        raise EmptyTable("flux table has no entries")
    if bin_count < 1:
        raise ValueError("bin_count must be at least 1")
    values = np.array(list(table.values.values()))
    top = float(values.max())
    width = top / bin_count
    if width > 0.0:
        bins = np.minimum(np.floor(values / width).astype(int), bin_count - 1)
    else:
        bins = np.zeros(len(values), dtype=int)
    counts = np.bincount(bins, minlength=bin_count)
    return [(k * width, int(counts[k])) for k in range(bin_count)]


def flux_table_csv(table: FluxTable) -> str:
    """CSV export `id,flux`, descending flux (ties by ascending id)."""
    rows = sorted(table.values.items(), key=lambda kv: (-kv[1], kv[0]))
    lines = ["id,flux"] + [f"{object_id},{repr(value)}" for object_id, value in rows]
    return "\n".join(lines) + "\n"


def histogram_csv(histogram: list[tuple[float, int]]) -> str:
    """CSV export `bin_lower,count`."""
    lines = ["bin_lower,count"] + [f"{repr(lower)},{count}" for lower, count in histogram]
    return "\n".join(lines) + "\n"
