"""Locality harness: a source, three stations and a coordinator.

Stations only ever see two kinds of inbound frame: their own setting (once,
from the operator) and emission batches carrying ``(index, omega, eta)`` in
the fiducial chart (the chart of setting 0).  Outcomes go back to the
coordinator, which restores trial order by index.

Station rules, each using nothing but the station's own setting ``d``:

* A: ``response(L(omega; d), eta)``
* B: ``response(omega_B_of(omega, eta, d), eta)``
* C: ``sign(eta)``; its setting is received and ignored.

With ``d_A = 0`` and ``d_B`` equal to the effective relative setting this is
exactly the two-chart construction used by :mod:`ghz_lhv.experiment`.
"""

from __future__ import annotations

import math
import multiprocessing as mp
import socket
import threading
from dataclasses import dataclass, field

import numpy as np

from . import lhv_core as lhv
from .wire import (
    STATIONS,
    ChannelEndpoint,
    FrameType,
    SocketEndpoint,
    TransportError,
    WireError,
    decode,
    encode_emissions,
    encode_end,
    encode_error,
    encode_outcomes,
    encode_setting,
)

DEFAULT_CHUNK = 1 << 16
TRANSPORTS = ("channels", "sockets")


@dataclass(frozen=True)
class EmissionMessage:
    index: int
    omega: float
    eta: float


@dataclass(frozen=True)
class StationOutcome:
    index: int
    station: str
    outcome: int


@dataclass(frozen=True)
class LocalityContract:
    """Permitted ``(sender, receiver, frame type)`` flows."""

    flows: frozenset

    def allows(self, sender: str, receiver: str, kind: FrameType) -> bool:
        return (sender, receiver, kind) in self.flows


LOCALITY = LocalityContract(
    frozenset(
        [(("source", s, FrameType.EMISSIONS)) for s in STATIONS]
        + [("source", s, FrameType.END) for s in STATIONS]
        + [("operator", s, FrameType.SETTING) for s in STATIONS]
        + [(s, "coordinator", k) for s in STATIONS for k in (FrameType.OUTCOMES, FrameType.END, FrameType.ERROR)]
    )
)


def _station_id(station) -> int:
    if isinstance(station, str):
        return STATIONS.index(station)
    if station not in (0, 1, 2):
        raise ValueError(f"unknown station {station!r}")
    return int(station)


def station_outcomes(station, setting: float, omega, eta) -> np.ndarray:
    """Vectorised station response from fiducial-chart coordinates."""
    sid = _station_id(station)
    omega = np.asarray(omega, float)
    eta = np.asarray(eta, float)
    if omega.shape != eta.shape:
        raise ValueError("omega and eta must have the same shape")
    if np.any(~np.isfinite(omega) | (omega < -lhv.PI) | (omega >= lhv.PI)) or np.any(
        ~np.isfinite(eta) | (eta < -lhv.PI) | (eta >= lhv.PI)
    ):
        raise ValueError("emission coordinates are not canonical")
    if sid == 0:
        return np.asarray(lhv.response(lhv.transform_L(omega, setting), eta), np.int8)
    if sid == 1:
        return np.asarray(lhv.response(lhv.omega_B_of(omega, eta, setting), eta), np.int8)
    return np.asarray(lhv.outcome_C(eta), np.int8)


def station_respond(station, setting: float, emission: EmissionMessage) -> StationOutcome:
    out = station_outcomes(station, setting, np.array([emission.omega]), np.array([emission.eta]))
    return StationOutcome(emission.index, STATIONS[_station_id(station)], int(out[0]))


def station_loop(station: int, endpoint) -> None:
    """Serve one station until END; replies go back on the same link."""
    setting = None
    while True:
        try:
            frame = decode(endpoint.recv())
        except (WireError, TransportError) as exc:
            endpoint.send(encode_error(0, f"station {STATIONS[station]}: {exc}"))
            return
        if frame.kind is FrameType.SETTING:
            if frame.station != station:
                endpoint.send(encode_error(0, "received another station's setting"))
                return
            setting = frame.setting
        elif frame.kind is FrameType.EMISSIONS:
            rec = frame.records
            if setting is None:
                endpoint.send(encode_error(int(rec["index"][0]) if len(rec) else 0, "emission before setting"))
                return
            try:
                out = station_outcomes(station, setting, rec["omega"], rec["eta"])
            except ValueError as exc:
                endpoint.send(encode_error(int(rec["index"][0]), str(exc)))
                return
            endpoint.send(encode_outcomes(station, rec["index"], out))
        elif frame.kind is FrameType.END:
            endpoint.send(encode_end())
            return
        else:
            endpoint.send(encode_error(0, f"unexpected {frame.kind.name} frame"))
            return


def _socket_station(station: int, port: int, timeout: float) -> None:
    sock = socket.create_connection(("127.0.0.1", port), timeout=timeout)
    ep = SocketEndpoint(sock, timeout)
    try:
        station_loop(station, ep)
    finally:
        ep.close()


# --------------------------------------------------------------------------
# hub side


@dataclass(frozen=True)
class TrafficEntry:
    link: int  # station index
    inbound: bool  # True when travelling towards the station
    sender: str
    frame: bytes


class TrafficLog:
    def __init__(self):
        self._lock = threading.Lock()
        self.entries: list = []

    def add(self, link: int, inbound: bool, sender: str, frame: bytes) -> None:
        with self._lock:
            self.entries.append(TrafficEntry(link, inbound, sender, frame))

    def dump(self, path) -> None:
        """Raw frames, each prefixed by ``u8 link, u8 direction (0 = to station)``."""
        with open(path, "wb") as fh:
            for e in self.entries:
                fh.write(bytes([e.link, 0 if e.inbound else 1]))
                fh.write(e.frame)


def load_traffic(path) -> list:
    """Read a dump written by :meth:`TrafficLog.dump`."""
    data = open(path, "rb").read()
    out, pos = [], 0
    while pos < len(data):
        link, direction = data[pos], data[pos + 1]
        (length,) = np.frombuffer(data, "<u4", 1, pos + 2)
        frame = data[pos + 2 : pos + 6 + int(length)]
        out.append((link, direction == 0, frame))
        pos += 6 + int(length)
    return out


@dataclass(frozen=True)
class StationSettings:
    a: float
    b: float
    c: float = 0.0

    def as_tuple(self):
        return (float(self.a), float(self.b), float(self.c))


def two_chart_settings(delta_eff: float) -> StationSettings:
    """A at the fiducial chart, B at the full relative setting."""
    return StationSettings(0.0, float(delta_eff), 0.0)


@dataclass
class AuditReport:
    passed: bool
    problems: list
    frames_in: list
    frames_out: list


def audit_traffic(entries, settings: StationSettings) -> AuditReport:
    """Check recorded traffic against the locality contract.

    ``entries`` is a :class:`TrafficLog` or the list from :func:`load_traffic`.
    """
    if isinstance(entries, TrafficLog):
        entries = [(e.link, e.inbound, e.frame) for e in entries.entries]
    own = settings.as_tuple()
    problems = []
    frames_in = [0, 0, 0]
    frames_out = [0, 0, 0]
    setting_frames = [0, 0, 0]
    for link, inbound, raw in entries:
        try:
            fr = decode(raw)
        except WireError as exc:
            problems.append(f"link {STATIONS[link]}: undecodable frame ({exc})")
            continue
        if inbound:
            frames_in[link] += 1
            if fr.kind is FrameType.SETTING:
                setting_frames[link] += 1
                if fr.station != link:
                    problems.append(f"station {STATIONS[link]} received setting addressed to {fr.station}")
                elif fr.setting != own[link]:
                    problems.append(f"station {STATIONS[link]} received a setting that is not its own")
            elif not LOCALITY.allows("source", STATIONS[link], fr.kind):
                problems.append(f"station {STATIONS[link]} received a {fr.kind.name} frame")
        else:
            frames_out[link] += 1
            if not LOCALITY.allows(STATIONS[link], "coordinator", fr.kind):
                problems.append(f"station {STATIONS[link]} sent a {fr.kind.name} frame")
            elif fr.kind is FrameType.OUTCOMES and fr.station != link:
                problems.append(f"station {STATIONS[link]} reported as {fr.station}")
    for k, n in enumerate(setting_frames):
        if n != 1:
            problems.append(f"station {STATIONS[k]} received {n} setting frames")
    return AuditReport(not problems, problems, frames_in, frames_out)


@dataclass
class DistributedRun:
    settings: StationSettings
    seed: int
    transport: str
    s_a: np.ndarray
    s_b: np.ndarray
    s_c: np.ndarray
    traffic: TrafficLog = field(repr=False)

    def __len__(self) -> int:
        return len(self.s_a)

    @property
    def products(self) -> np.ndarray:
        return self.s_a * self.s_b * self.s_c

    def report(self):
        from .experiment import estimate_correlators

        return estimate_correlators(self)

    def audit(self) -> AuditReport:
        return audit_traffic(self.traffic, self.settings)


def _open_channels(timeout):
    hub, threads = [], []
    for k in range(3):
        mine, theirs = ChannelEndpoint.pair(timeout)
        t = threading.Thread(target=station_loop, args=(k, theirs), daemon=True)
        t.start()
        hub.append(mine)
        threads.append(t)
    return hub, threads


def _open_sockets(timeout):
    ctx = mp.get_context("spawn")
    server = socket.create_server(("127.0.0.1", 0))
    server.settimeout(timeout)
    port = server.getsockname()[1]
    hub, procs = [], []
    try:
        for k in range(3):
            p = ctx.Process(target=_socket_station, args=(k, port, timeout), daemon=True)
            p.start()
            procs.append(p)
            try:
                conn, _ = server.accept()
            except OSError as exc:
                raise TransportError(f"station {STATIONS[k]} failed to connect: {exc}") from exc
            hub.append(SocketEndpoint(conn, timeout))
    finally:
        server.close()
    return hub, procs


def run_distributed(
    settings: StationSettings,
    n_trials: int,
    seed: int = 0,
    transport: str = "channels",
    chunk_size: int = DEFAULT_CHUNK,
    dump_path=None,
    timeout: float = 60.0,
) -> DistributedRun:
    """Run the source/stations/coordinator pipeline over ``transport``.

    Raises :class:`TransportError` naming the first incomplete trial if any
    link fails; no partial results are returned.
    """
    from .experiment import hidden_stream

    if transport not in TRANSPORTS:
        raise ValueError(f"transport must be one of {TRANSPORTS}")
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    log = TrafficLog()
    hub, workers = (_open_channels if transport == "channels" else _open_sockets)(timeout)
    outcomes = np.zeros((3, n_trials), np.int8)
    seen = np.zeros((3, n_trials), bool)
    failures = []

    def collect(k):
        try:
            while True:
                raw = hub[k].recv()
                log.add(k, False, STATIONS[k], raw)
                fr = decode(raw)
                if fr.kind is FrameType.OUTCOMES:
                    idx = fr.records["index"].astype(np.int64)
                    if fr.station != k or np.any(idx >= n_trials):
                        failures.append((int(idx[0]) if len(idx) else 0, f"bad outcome frame from {STATIONS[k]}"))
                        return
                    outcomes[k, idx] = fr.records["outcome"]
                    seen[k, idx] = True
                elif fr.kind is FrameType.END:
                    return
                else:
                    failures.append((fr.trial, fr.message or f"unexpected {fr.kind.name}"))
                    return
        except (TransportError, WireError) as exc:
            failures.append((-1, str(exc)))

    readers = [threading.Thread(target=collect, args=(k,), daemon=True) for k in range(3)]
    for r in readers:
        r.start()
    try:
        for k, value in enumerate(settings.as_tuple()):
            frame = encode_setting(k, value)
            log.add(k, True, "operator", frame)
            hub[k].send(frame)
        for start in range(0, n_trials, chunk_size):
            count = min(chunk_size, n_trials - start)
            omega, eta = hidden_stream(seed, start, count)
            frame = encode_emissions(np.arange(start, start + count, dtype=np.uint64), omega, eta)
            for k in range(3):
                log.add(k, True, "source", frame)
                hub[k].send(frame)
        for k in range(3):
            end = encode_end()
            log.add(k, True, "source", end)
            hub[k].send(end)
    except TransportError as exc:
        failures.append((-1, str(exc)))
    finally:
        for r in readers:
            r.join(timeout)
        for ep in hub:
            ep.close()
        for w in workers:
            w.join(timeout)

    complete = seen.all(axis=0)
    if failures or not complete.all():
        first = int(np.argmin(complete)) if not complete.all() else 0
        msg = "; ".join(m for _, m in failures) or "missing outcomes"
        raise TransportError(msg, first)
    run = DistributedRun(settings, seed, transport, outcomes[0], outcomes[1], outcomes[2], log)
    if dump_path is not None:
        log.dump(dump_path)
    return run


# --------------------------------------------------------------------------
# chart composition


@dataclass
class CompositionReport:
    delta1: float
    delta2: float
    n_samples: int
    agree_fraction: float
    max_deviation: float
    station_triple: float
    station_stderr: float
    reference_triple: float
    target: float

    @property
    def correlator_gap(self) -> float:
        return self.station_triple - self.reference_triple


def composition_check(delta1: float, delta2: float, n_samples: int = 10**5, seed: int = 0) -> CompositionReport:
    """Measure whether ``L(.; d1 + d2) == L(L(.; d1); d2)`` and what it costs.

    ``station_triple`` is the Monte Carlo triple correlator when A uses only
    ``d1`` and B only ``d2`` (both relative to the fiducial chart);
    ``reference_triple`` is the two-chart quadrature value at ``d1 + d2``.
    Nothing here is asserted; it is a measurement.
    """
    from .experiment import hidden_stream, quadrature_triple_correlation

    omega, eta = hidden_stream(seed, 0, n_samples)
    total = lhv.canonicalize_angle(delta1 + delta2)
    direct = np.asarray(lhv.transform_L(omega, total))
    chained = np.asarray(lhv.transform_L(lhv.transform_L(omega, delta1), delta2))
    dev = np.abs(np.asarray(lhv.canonicalize_angle(direct - chained)))
    dev = np.minimum(dev, 2 * lhv.PI - dev)
    prod = (
        station_outcomes(0, delta1, omega, eta).astype(np.int64)
        * station_outcomes(1, delta2, omega, eta)
        * station_outcomes(2, 0.0, omega, eta)
    )
    m = float(prod.mean())
    return CompositionReport(
        delta1=float(delta1),
        delta2=float(delta2),
        n_samples=n_samples,
        agree_fraction=float(np.mean(dev <= 1e-9)),
        max_deviation=float(dev.max()),
        station_triple=m,
        station_stderr=math.sqrt(max(0.0, 1 - m * m) / n_samples),
        reference_triple=quadrature_triple_correlation(total),
        target=math.cos(total),
    )
