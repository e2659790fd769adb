"""Pencil-decomposed SHT over in-process worker threads.

Layouts (F = flattened leading axes, H rings, W longitudes, L1 = lmax+1, M1 = mmax+1);
"/h" means split over the n_h ranks of a column, "/w" over the n_w ranks of a row:

  spatial        F      × H/h × W/w       user-facing field shard
  lon pencil     F/w    × H/h × W         after the row exchange; FFT runs here
  order pencil   F/w    × H   × M1/h      after the column exchange; Legendre runs here
  spectral       F      × L1/h × M1/w     after the world exchange; user-facing coefficients

The inverse walks the same layouts backwards. Every floating-point contraction
runs on a single worker with the serial operand order, so gathered results are
byte-identical to `sht_forward` / `sht_inverse`.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from src.config.topology_config import topology_config
from src.exceptions import CollectiveAbortError, ShapeError
from src.interfaces.communicator import Communicator
from src.models.grid import SphericalGrid
from src.models.legendre import (
    LegendreTable,
    build_tables,
    degree_major,
    legendre_analysis,
    legendre_synthesis,
    ring_major,
)
from src.models.spectral import SpectralCoeffs
from src.models.topology import AxisSplit, WorkerTopology
from src.services.sht_service import irfft_lon, rfft_lon
from src.utils.logging import get_logger
from src.utils.prometheus import prometheus_metrics

logger = get_logger(__name__)

Bounds = Tuple[Tuple[int, int], ...]


@dataclass(frozen=True)
class Block:
    """A piece of a global 3-axis array starting at `start`."""

    start: Tuple[int, int, int]
    data: np.ndarray

    @property
    def nbytes(self) -> int:
        return self.data.nbytes


@dataclass(frozen=True)
class Layout:
    axes: Tuple[Tuple[AxisSplit, Optional[str]], ...]

    def bounds(self, topology: WorkerTopology, rank: int) -> Bounds:
        ih, iw = topology.coords(rank)
        index = {"h": ih, "w": iw, None: 0}
        return tuple(split.bounds(index[along]) for split, along in self.axes)

    def shape(self) -> Tuple[int, ...]:
        return tuple(split.chunk for split, _ in self.axes)

    def padding(self, topology: WorkerTopology, rank: int) -> Tuple[int, ...]:
        ih, iw = topology.coords(rank)
        index = {"h": ih, "w": iw, None: 0}
        return tuple(split.padding(index[along]) for split, along in self.axes)


class PencilPlan:
    """Shard geometry and per-rank Legendre blocks for one table, batch width and topology."""

    def __init__(self, table: LegendreTable, n_features: int, topology: WorkerTopology):
        self.table = table
        self.topology = topology
        self.n_features = n_features
        n_h, n_w = topology.n_h, topology.n_w
        nlat, nlon = table.grid_nlat, table.grid_nlon
        n_degrees, n_orders = table.lmax + 1, table.mmax + 1

        full = lambda size: (AxisSplit(size, 1), None)
        self.spatial = Layout((full(n_features), (AxisSplit(nlat, n_h), "h"), (AxisSplit(nlon, n_w), "w")))
        self.lon_pencil = Layout(((AxisSplit(n_features, n_w), "w"), (AxisSplit(nlat, n_h), "h"), full(nlon)))
        self.lon_spectrum = Layout(((AxisSplit(n_features, n_w), "w"), (AxisSplit(nlat, n_h), "h"), full(n_orders)))
        self.order_pencil = Layout(((AxisSplit(n_features, n_w), "w"), full(nlat), (AxisSplit(n_orders, n_h), "h")))
        self.order_degrees = Layout(((AxisSplit(n_features, n_w), "w"), full(n_degrees), (AxisSplit(n_orders, n_h), "h")))
        self.spectral = Layout((full(n_features), (AxisSplit(n_degrees, n_h), "h"), (AxisSplit(n_orders, n_w), "w")))

        order_split = AxisSplit(n_orders, n_h)
        self.analysis_kernels = []
        self.synthesis_kernels = []
        for ih in range(n_h):
            start = min(ih * order_split.chunk, n_orders)
            forward, inverse = table.m_block(start, start + order_split.chunk)
            self.analysis_kernels.append(ring_major(forward))
            self.synthesis_kernels.append(degree_major(inverse))

    def shard_info(self) -> List[dict]:
        info = []
        for rank in range(self.topology.size):
            info.append({
                "rank": rank,
                "coords": self.topology.coords(rank),
                "field_shape": self.spatial.shape(),
                "field_bounds": self.spatial.bounds(self.topology, rank),
                "field_padding": self.spatial.padding(self.topology, rank),
                "coeffs_shape": self.spectral.shape(),
                "coeffs_bounds": self.spectral.bounds(self.topology, rank),
                "coeffs_padding": self.spectral.padding(self.topology, rank),
            })
        return info


def _redistribute(comm: Communicator, group: Sequence[int], local: np.ndarray, source: Bounds,
                  target: Layout, topology: WorkerTopology, tag: str) -> np.ndarray:
    """All-to-all within `group`: each peer receives the part of `local` that its target block covers."""
    payloads = {}
    for peer in group:
        slices, start = [], []
        for (own_start, own_stop), (peer_start, peer_stop) in zip(source, target.bounds(topology, peer)):
            lo = max(own_start, peer_start)
            hi = max(lo, min(own_stop, peer_stop))
            slices.append(slice(lo - own_start, hi - own_start))
            start.append(lo)
        payloads[peer] = Block(tuple(start), np.ascontiguousarray(local[tuple(slices)]))

    received = comm.all_to_all(payloads, group, tag)

    own = target.bounds(topology, comm.rank)
    out = np.zeros(target.shape(), dtype=local.dtype)
    for block in received.values():
        if block.data.size == 0:
            continue
        region = tuple(
            slice(s - o_start, s - o_start + n)
            for s, (o_start, _), n in zip(block.start, own, block.data.shape)
        )
        out[region] = block.data
    return out


def _handshake(comm: Communicator, plan: PencilPlan, shape: Tuple[int, ...], expected: Tuple[int, ...], op: str):
    report = (tuple(shape), tuple(expected))
    everyone = plan.topology.world_group()
    received = comm.all_to_all({peer: report for peer in everyone}, everyone, f"{op}/handshake")
    bad = [f"rank {peer} holds {got}, expected {want}" for peer, (got, want) in sorted(received.items()) if got != want]
    if bad:
        raise CollectiveAbortError(comm.rank, f"inconsistent shards for {op}: " + "; ".join(bad))


def dist_sht_forward(local_shard: np.ndarray, comm: Communicator, plan: PencilPlan) -> np.ndarray:
    """Collective forward SHT: spatial shard in, spectral shard (F × L1/h × M1/w) out."""
    topology, rank = plan.topology, comm.rank
    ih, _ = topology.coords(rank)
    _handshake(comm, plan, local_shard.shape, plan.spatial.shape(), "forward")

    field = _redistribute(comm, topology.row_group(rank), np.asarray(local_shard, dtype=np.float64),
                          plan.spatial.bounds(topology, rank), plan.lon_pencil, topology, "forward/lon")
    spectrum = rfft_lon(field, plan.table.mmax)

    spectrum = _redistribute(comm, topology.column_group(rank), spectrum,
                             plan.lon_spectrum.bounds(topology, rank), plan.order_pencil, topology, "forward/lat")
    coeffs = legendre_analysis(plan.analysis_kernels[ih], spectrum)

    return _redistribute(comm, topology.world_group(), coeffs,
                         plan.order_degrees.bounds(topology, rank), plan.spectral, topology, "forward/spectral")


def dist_sht_inverse(local_coeffs: np.ndarray, comm: Communicator, plan: PencilPlan) -> np.ndarray:
    """Collective inverse SHT: spectral shard in, spatial shard (F × H/h × W/w) out."""
    topology, rank = plan.topology, comm.rank
    ih, _ = topology.coords(rank)
    _handshake(comm, plan, local_coeffs.shape, plan.spectral.shape(), "inverse")

    coeffs = _redistribute(comm, topology.world_group(), np.asarray(local_coeffs, dtype=np.complex128),
                           plan.spectral.bounds(topology, rank), plan.order_degrees, topology, "inverse/spectral")
    spectrum = legendre_synthesis(plan.synthesis_kernels[ih], coeffs)

    spectrum = _redistribute(comm, topology.column_group(rank), spectrum,
                             plan.order_pencil.bounds(topology, rank), plan.lon_spectrum, topology, "inverse/lat")
    field = irfft_lon(spectrum, plan.table.grid_nlon)

    return _redistribute(comm, topology.row_group(rank), field,
                         plan.lon_pencil.bounds(topology, rank), plan.spatial, topology, "inverse/lon")


def scatter(array: np.ndarray, layout: Layout, topology: WorkerTopology) -> List[np.ndarray]:
    """Splits a global (F, A, B) array into zero-padded per-rank shards."""
    shards = []
    for rank in range(topology.size):
        shard = np.zeros(layout.shape(), dtype=array.dtype)
        bounds = layout.bounds(topology, rank)
        valid = tuple(slice(0, stop - start) for start, stop in bounds)
        shard[valid] = array[tuple(slice(start, stop) for start, stop in bounds)]
        shards.append(shard)
    return shards


def gather(shards: Sequence[np.ndarray], layout: Layout, topology: WorkerTopology,
           global_shape: Tuple[int, int, int], dtype) -> np.ndarray:
    out = np.zeros(global_shape, dtype=dtype)
    for rank, shard in enumerate(shards):
        bounds = layout.bounds(topology, rank)
        out[tuple(slice(start, stop) for start, stop in bounds)] = \
            shard[tuple(slice(0, stop - start) for start, stop in bounds)]
    return out


class DistributedSHT:
    """Runs the collective transforms on `topology.size` threads and reassembles the results."""

    def __init__(self, grid: SphericalGrid, lmax: Optional[int] = None, mmax: Optional[int] = None,
                 topology: Optional[WorkerTopology] = None, timeout: Optional[float] = None):
        self.grid = grid
        self.table = build_tables(grid, lmax, mmax)
        self.topology = topology or WorkerTopology()
        self.timeout = timeout

    def plan(self, n_features: int) -> PencilPlan:
        return PencilPlan(self.table, n_features, self.topology)

    def shard_info(self, n_features: int = 1) -> List[dict]:
        return self.plan(n_features).shard_info()

    def _run(self, worker: Callable, shards: List[np.ndarray], plan: PencilPlan) -> List[np.ndarray]:
        fabric = topology_config.get_fabric(self.topology, timeout=self.timeout)
        communicators = fabric.communicators()

        def guarded(shard, comm, plan_):
            try:
                return worker(shard, comm, plan_)
            except Exception as e:
                comm.abort(str(e))
                raise

        with ThreadPoolExecutor(max_workers=self.topology.size, thread_name_prefix="sht-worker") as pool:
            futures = [pool.submit(guarded, shards[rank], communicators[rank], plan)
                       for rank in range(self.topology.size)]
            results, errors = [], []
            for future in futures:
                try:
                    results.append(future.result())
                except Exception as e:
                    errors.append(e)
        if errors:
            root = next((e for e in errors if not isinstance(e, CollectiveAbortError)), errors[0])
            raise root
        logger.debug("Collective transform finished", topology=self.topology.label(),
                     bytes_sent=sum(fabric.bytes_sent), bytes_received=sum(fabric.bytes_received))
        return results

    def forward(self, field: np.ndarray) -> SpectralCoeffs:
        field = np.asarray(field, dtype=np.float64)
        if field.ndim < 2 or field.shape[-2:] != (self.table.grid_nlat, self.table.grid_nlon):
            raise ShapeError((self.table.grid_nlat, self.table.grid_nlon), field.shape[-2:], "grid field")
        leading = field.shape[:-2]
        flat = field.reshape((-1,) + field.shape[-2:])
        plan = self.plan(flat.shape[0])

        start = time.perf_counter()
        shards = scatter(flat, plan.spatial, self.topology)
        results = self._run(dist_sht_forward, shards, plan)
        n_degrees, n_orders = self.table.lmax + 1, self.table.mmax + 1
        data = gather(results, plan.spectral, self.topology, (flat.shape[0], n_degrees, n_orders), np.complex128)
        prometheus_metrics.record_transform("forward", self.topology.label(), time.perf_counter() - start)
        return SpectralCoeffs(self.table.lmax, self.table.mmax, data.reshape(leading + (n_degrees, n_orders)))

    def inverse(self, coeffs: SpectralCoeffs) -> np.ndarray:
        expected = (self.table.lmax + 1, self.table.mmax + 1)
        if coeffs.data.shape[-2:] != expected:
            raise ShapeError(expected, coeffs.data.shape[-2:], "spectral coefficients")
        leading = coeffs.leading_shape
        flat = coeffs.data.reshape((-1,) + expected)
        plan = self.plan(flat.shape[0])

        start = time.perf_counter()
        shards = scatter(flat, plan.spectral, self.topology)
        results = self._run(dist_sht_inverse, shards, plan)
        shape = (flat.shape[0], self.table.grid_nlat, self.table.grid_nlon)
        data = gather(results, plan.spatial, self.topology, shape, np.float64)
        prometheus_metrics.record_transform("inverse", self.topology.label(), time.perf_counter() - start)
        return data.reshape(leading + shape[1:])

    def run_shards(self, worker: Callable, shards: List[np.ndarray], n_features: int) -> List[np.ndarray]:
        """Runs `dist_sht_forward`/`dist_sht_inverse` on caller-built shards."""
        return self._run(worker, shards, self.plan(n_features))
