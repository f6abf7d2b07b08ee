"""Trial generation, exact quadrature and the derived reports.

Hidden configurations come from a counter-based stream keyed by
``(seed, trial index)``; settings come from a second, independent stream.
The settings never reach the hidden-state sampler.

Correlators are accumulated as integer sums of +-1 products, so any split
of the trials into chunks gives identical reports.
"""

from __future__ import annotations

import enum
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import lhv_core as lhv
from . import qm_oracle as qm
from . import rng
from .lhv_core import PI, Region
from .quadrature import composite_nodes

DEFAULT_CHUNK = 1 << 18
QUAD_NODES = 32
ETA_NODES = 4


# --------------------------------------------------------------------------
# settings and schedules


@dataclass(frozen=True)
class SettingTriple:
    alpha: float
    beta: float
    gamma: float
    phi: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "phi"):
            object.__setattr__(self, name, float(lhv.canonicalize_angle(getattr(self, name))))

    @property
    def effective_delta(self) -> float:
        return effective_delta(self.alpha, self.beta, self.gamma, self.phi)


def effective_delta(alpha, beta, gamma, phi=0.0):
    """Single relative degree of freedom fed to the chart transform."""
    return lhv.canonicalize_angle(
        np.asarray(alpha, float) + np.asarray(beta, float) + np.asarray(gamma, float) + phi
    )


class ScheduleMode(str, enum.Enum):
    FIXED = "fixed"
    RANDOM = "per-trial-random"
    ALTERNATING = "alternating"


@dataclass(frozen=True)
class ScheduleSpec:
    """How per-trial settings ``(alpha, beta, gamma)`` are chosen."""

    mode: ScheduleMode
    settings: tuple
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", ScheduleMode(self.mode))
        settings = tuple(
            tuple(float(lhv.canonicalize_angle(a)) for a in s) for s in self.settings
        )
        if not settings:
            raise ValueError("schedule needs at least one setting triple")
        if any(len(s) != 3 for s in settings):
            raise ValueError("each setting must be an (alpha, beta, gamma) triple")
        object.__setattr__(self, "settings", settings)
        rng._check_seed(self.seed)

    @classmethod
    def fixed(cls, alpha=0.0, beta=0.0, gamma=0.0):
        return cls(ScheduleMode.FIXED, ((alpha, beta, gamma),))

    def choices(self, start: int, count: int) -> np.ndarray:
        """Index into ``settings`` for each trial in the range."""
        k = len(self.settings)
        if self.mode is ScheduleMode.FIXED or k == 1:
            return np.zeros(count, dtype=np.int64)
        if self.mode is ScheduleMode.ALTERNATING:
            return np.arange(start, start + count, dtype=np.int64) % k
        u = rng.to_unit(rng.block_words(self.seed, start, count, rng.SETTING_STREAM)[:, 0])
        return np.minimum((u * k).astype(np.int64), k - 1)

    def expand(self, start: int, count: int) -> np.ndarray:
        """``(count, 3)`` array of per-trial angles."""
        return np.asarray(self.settings)[self.choices(start, count)]

    def to_dict(self) -> dict:
        return {"mode": self.mode.value, "settings": [list(s) for s in self.settings], "seed": self.seed}


# --------------------------------------------------------------------------
# trials


@dataclass(frozen=True)
class TrialRecord:
    index: int
    omega: float
    eta: float
    settings: SettingTriple
    outcomes: tuple
    region: Region


_RECORD_DTYPE = np.dtype(
    [
        ("index", "<u8"),
        ("omega", "<f8"),
        ("eta", "<f8"),
        ("alpha", "<f8"),
        ("beta", "<f8"),
        ("gamma", "<f8"),
        ("delta", "<f8"),
        ("s_a", "i1"),
        ("s_b", "i1"),
        ("s_c", "i1"),
        ("region", "i1"),
    ]
)


@dataclass
class TrialBatch:
    """Columnar store of consecutive trials."""

    index: np.ndarray
    omega: np.ndarray
    eta: np.ndarray
    angles: np.ndarray
    phi: float
    delta: np.ndarray
    s_a: np.ndarray
    s_b: np.ndarray
    s_c: np.ndarray
    region: np.ndarray

    def __len__(self) -> int:
        return len(self.index)

    @property
    def products(self) -> np.ndarray:
        return self.s_a * self.s_b * self.s_c

    def records(self) -> Iterator[TrialRecord]:
        for k in range(len(self)):
            a, b, c = self.angles[k]
            yield TrialRecord(
                index=int(self.index[k]),
                omega=float(self.omega[k]),
                eta=float(self.eta[k]),
                settings=SettingTriple(a, b, c, self.phi),
                outcomes=(int(self.s_a[k]), int(self.s_b[k]), int(self.s_c[k])),
                region=Region(int(self.region[k])),
            )

    def to_structured(self) -> np.ndarray:
        out = np.empty(len(self), dtype=_RECORD_DTYPE)
        out["index"] = self.index
        out["omega"] = self.omega
        out["eta"] = self.eta
        out["alpha"] = self.angles[:, 0]
        out["beta"] = self.angles[:, 1]
        out["gamma"] = self.angles[:, 2]
        out["delta"] = self.delta
        out["s_a"] = self.s_a
        out["s_b"] = self.s_b
        out["s_c"] = self.s_c
        out["region"] = self.region
        return out

    def to_bytes(self) -> bytes:
        """Canonical little-endian serialisation, used for identity checks."""
        return self.to_structured().tobytes()

    @classmethod
    def concat(cls, parts: Sequence["TrialBatch"]) -> "TrialBatch":
        if len(parts) == 1:
            return parts[0]
        cat = lambda name: np.concatenate([getattr(p, name) for p in parts])  # noqa: E731
        return cls(
            index=cat("index"),
            omega=cat("omega"),
            eta=cat("eta"),
            angles=cat("angles"),
            phi=parts[0].phi,
            delta=cat("delta"),
            s_a=cat("s_a"),
            s_b=cat("s_b"),
            s_c=cat("s_c"),
            region=cat("region"),
        )


def hidden_stream(seed: int, start: int, count: int):
    """``(omega, eta)`` for trials ``start .. start+count-1``; settings-free."""
    u, v = rng.uniform_pairs(seed, start, count)
    return lhv.sample_hidden(u, v)


def simulate_chunk(schedule: ScheduleSpec, start: int, count: int, phi: float, seed: int) -> TrialBatch:
    omega, eta = hidden_stream(seed, start, count)
    angles = schedule.expand(start, count)
    delta = np.asarray(effective_delta(angles[:, 0], angles[:, 1], angles[:, 2], phi), float)
    s_a = lhv.response(omega, eta)
    s_b = lhv.response(lhv.omega_B_of(omega, eta, delta), eta)
    s_c = lhv.outcome_C(eta)
    return TrialBatch(
        index=np.arange(start, start + count, dtype=np.uint64),
        omega=omega,
        eta=eta,
        angles=angles,
        phi=float(phi),
        delta=delta,
        s_a=s_a,
        s_b=s_b,
        s_c=s_c,
        region=lhv.region_of(omega, delta),
    )


def run_trials(
    schedule: ScheduleSpec,
    n_trials: int,
    phi: float = 0.0,
    seed: int = 0,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> TrialBatch:
    """Simulate ``n_trials`` events; output is independent of ``workers``."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if not isinstance(schedule, ScheduleSpec):
        raise TypeError("schedule must be a ScheduleSpec")
    phi = float(lhv.canonicalize_angle(phi))
    starts = range(0, n_trials, chunk_size)
    job = lambda s: simulate_chunk(schedule, s, min(chunk_size, n_trials - s), phi, seed)  # noqa: E731
    if workers <= 1 or len(starts) == 1:
        parts = [job(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, starts))
    return TrialBatch.concat(parts)


# --------------------------------------------------------------------------
# estimation


@dataclass
class CorrelatorReport:
    singles: tuple
    pairs: tuple  # (AB, BC, CA)
    triple: float
    stderr: dict
    n_trials: int
    method: str

    def to_dict(self) -> dict:
        return asdict(self)


def _mean_and_err(total: int, n: int):
    m = total / n
    return m, math.sqrt(max(0.0, 1.0 - m * m) / n)


def estimate_correlators(batch: TrialBatch) -> CorrelatorReport:
    """Sample means of singles, pair and triple products.

    ``stderr`` is the population standard deviation over ``sqrt(N)``; for
    +-1 variables that is ``sqrt((1 - m**2) / N)``.
    """
    n = len(batch)
    if n == 0:
        raise ValueError("no trials to estimate from")
    a = batch.s_a.astype(np.int64)
    b = batch.s_b.astype(np.int64)
    c = batch.s_c.astype(np.int64)
    sums = {
        "A": int(a.sum()),
        "B": int(b.sum()),
        "C": int(c.sum()),
        "AB": int((a * b).sum()),
        "BC": int((b * c).sum()),
        "CA": int((c * a).sum()),
        "ABC": int((a * b * c).sum()),
    }
    est = {k: _mean_and_err(v, n) for k, v in sums.items()}
    return CorrelatorReport(
        singles=(est["A"][0], est["B"][0], est["C"][0]),
        pairs=(est["AB"][0], est["BC"][0], est["CA"][0]),
        triple=est["ABC"][0],
        stderr={k: v[1] for k, v in est.items()},
        n_trials=n,
        method="monte_carlo",
    )


# --------------------------------------------------------------------------
# exact quadrature over the torus


def omega_breakpoints(delta: float) -> list:
    """Where the integrand may jump in ``omega`` for a given ``delta``."""
    d = float(lhv.canonicalize_angle(delta))
    if d >= 0.0:
        return [-PI, d - PI, 0.0, d, PI]
    return [-PI, d, 0.0, d + PI, PI]


def _torus_grid(delta: float):
    w, ww, _ = composite_nodes(omega_breakpoints(delta), QUAD_NODES)
    e, we, _ = composite_nodes([-PI, 0.0, PI], ETA_NODES)
    W, E = np.meshgrid(w, e, indexing="ij")
    weight = np.outer(ww, we) * np.asarray(lhv.density(W, E))
    return W, E, weight


def _model_outcomes(W, E, delta):
    s_a = np.asarray(lhv.response(W, E), np.int64)
    s_b = np.asarray(lhv.response(lhv.omega_B_of(W, E, delta), E), np.int64)
    s_c = np.asarray(lhv.outcome_C(E), np.int64)
    return s_a, s_b, s_c


def quadrature_triple_correlation(delta: float) -> float:
    """Exact ``E[s_A s_B s_C]`` under the model density."""
    W, E, weight = _torus_grid(delta)
    s_a, s_b, s_c = _model_outcomes(W, E, delta)
    return float(np.sum(weight * (s_a * s_b * s_c)))


def quadrature_correlators(delta: float) -> CorrelatorReport:
    W, E, weight = _torus_grid(delta)
    a, b, c = _model_outcomes(W, E, delta)
    ev = lambda x: float(np.sum(weight * x))  # noqa: E731
    return CorrelatorReport(
        singles=(ev(a), ev(b), ev(c)),
        pairs=(ev(a * b), ev(b * c), ev(c * a)),
        triple=ev(a * b * c),
        stderr={k: 0.0 for k in ("A", "B", "C", "AB", "BC", "CA", "ABC")},
        n_trials=0,
        method="quadrature",
    )


@dataclass(frozen=True)
class PairCorrelations:
    positive: float  # eta > 0
    nonpositive: float  # eta <= 0
    whole: float


def conditional_pair_correlations(delta: float) -> PairCorrelations:
    """A-B correlator on the ``eta > 0`` and ``eta <= 0`` halves and overall."""
    W, E, weight = _torus_grid(delta)
    s_a, s_b, _ = _model_outcomes(W, E, delta)
    ab = s_a * s_b
    up = E > 0.0
    pos = float(np.sum(weight * ab * up) / np.sum(weight * up))
    neg = float(np.sum(weight * ab * ~up) / np.sum(weight * ~up))
    return PairCorrelations(pos, neg, float(np.sum(weight * ab)))


def partition_measures(delta: float) -> dict:
    """Normalised measure of each partition cell."""
    W, E, weight = _torus_grid(delta)
    reg = np.asarray(lhv.region_of(W, delta))
    return {r: float(np.sum(weight * (reg == r))) for r in Region}


def jacobian_deviation(delta: float, margin: float = 1e-2, h: float = 1e-5, per_segment: int = 400) -> float:
    """Max ``|g(L(w)) |dL/dw| - g(w)|`` over Gauss nodes off the breakpoints.

    ``dL/dw`` is a five-point central difference; nodes closer than
    ``margin`` to a breakpoint are skipped since L has square-root
    singularities there.
    """
    b = omega_breakpoints(delta)
    nodes = []
    for lo, hi in zip(b[:-1], b[1:]):
        if hi - lo > 2 * margin:
            nodes.append(composite_nodes(np.linspace(lo + margin, hi - margin, per_segment), QUAD_NODES)[0])
    w = np.concatenate(nodes)
    L0 = np.asarray(lhv.transform_L(w, delta))
    # offsets taken modulo 2 pi so a stencil across the +-pi seam stays small
    D = lambda k: np.asarray(lhv.canonicalize_angle(np.asarray(lhv.transform_L(w + k * h, delta)) - L0))  # noqa: E731
    jac = (-D(2) + 8 * D(1) - 8 * D(-1) + D(-2)) / (12 * h)
    return float(np.max(np.abs(np.asarray(lhv.g(L0)) * np.abs(jac) - np.asarray(lhv.g(w)))))


def ks_distance_to_g(samples) -> float:
    """One-sample Kolmogorov-Smirnov distance to the ``omega`` marginal."""
    x = np.sort(np.asarray(samples, float))
    n = len(x)
    F = np.asarray(lhv.omega_cdf(x))
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


# --------------------------------------------------------------------------
# star re-coordinatisation


def star_products(delta: float, n_trials: int, seed: int = 0) -> np.ndarray:
    """Per-trial ``s_A * s_B * s_C*`` with ``s_C* = +1`` iff ``eta* > 0``."""
    batch = run_trials(ScheduleSpec.fixed(delta, 0.0, 0.0), n_trials, 0.0, seed)
    omega_b = lhv.omega_B_of(batch.omega, batch.eta, batch.delta)
    _, _, eta_star = lhv.star_remap(batch.omega, omega_b, batch.eta, batch.region)
    s_c_star = np.where(np.asarray(eta_star) > 0.0, 1, -1).astype(np.int8)
    return batch.s_a * batch.s_b * s_c_star


def star_correlation_check(delta: float, n_trials: int, seed: int = 0) -> float:
    return float(star_products(delta, n_trials, seed).astype(np.int64).mean())


# --------------------------------------------------------------------------
# GHZ paradox


GHZ_SETTINGS = {
    "XXX": (0.0, 0.0, 0.0),
    "XYY": (0.0, PI / 2, PI / 2),
    "YXY": (PI / 2, 0.0, PI / 2),
    "YYX": (PI / 2, PI / 2, 0.0),
}
MERMIN_SIGNS = {"XXX": 1, "XYY": -1, "YXY": -1, "YYX": -1}

PARADOX_NOTE = (
    "If every X and Y component were a fixed +-1 value per configuration, "
    "multiplying the XYY, YXY and YYX products gives (-1)^3 = -1 for the XXX "
    "product, since each Y appears twice. The XXX runs give +1. In this model "
    "Y components relative to a parallel X frame are +-i, so the same product "
    "is i^2 * i^2 * i^2 * (+1) = -1 for each identity and no contradiction arises."
)


@dataclass
class ParadoxRow:
    name: str
    settings: tuple
    delta: float
    mean_product: float
    constant: bool
    oracle: float


@dataclass
class ParadoxReport:
    phi: float
    n_trials_per_setting: int
    rows: list
    mermin_model: float
    mermin_oracle: float
    weak_products: tuple
    note: str = PARADOX_NOTE

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weak_products"] = [str(complex(p)) for p in self.weak_products]
        return d


def ghz_paradox_report(phi: float = 0.0, n_trials_per_setting: int = 10**5, seed: int = 0, workers: int = 1) -> ParadoxReport:
    rows = []
    for name, (a, b, c) in GHZ_SETTINGS.items():
        batch = run_trials(ScheduleSpec.fixed(a, b, c), n_trials_per_setting, phi, seed, workers)
        prods = batch.products
        rows.append(
            ParadoxRow(
                name=name,
                settings=(a, b, c),
                delta=float(batch.delta[0]),
                mean_product=float(prods.astype(np.int64).mean()),
                constant=bool(np.all(prods == prods[0])),
                oracle=qm.triple_correlator(a, b, c, phi),
            )
        )
    mermin = sum(MERMIN_SIGNS[r.name] * r.mean_product for r in rows)
    mermin_qm = sum(MERMIN_SIGNS[r.name] * r.oracle for r in rows)
    return ParadoxReport(
        phi=float(phi),
        n_trials_per_setting=n_trials_per_setting,
        rows=rows,
        mermin_model=mermin,
        mermin_oracle=mermin_qm,
        weak_products=lhv.weak_identity_products(1, 1, 1),
    )


# --------------------------------------------------------------------------
# model vs quantum oracle


def empirical_joint(batch: TrialBatch) -> dict:
    codes = ((1 - batch.s_a) // 2) * 4 + ((1 - batch.s_b) // 2) * 2 + (1 - batch.s_c) // 2
    counts = np.bincount(codes.astype(np.int64), minlength=8)
    n = len(batch)
    table = {}
    for k, outcome in enumerate(itertools.product((1, -1), repeat=3)):
        table[outcome] = counts[k] / n
    return table


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


@dataclass
class ComparisonRow:
    alpha: float
    beta: float
    gamma: float
    delta: float
    model: float
    oracle: float

    @property
    def discrepancy(self) -> float:
        return abs(self.model - self.oracle)


@dataclass
class JointComparison:
    settings: tuple
    n_trials: int
    tv_distance: float
    model: dict
    born: dict


@dataclass
class ComparisonTable:
    phi: float
    rows: list
    joint: list = field(default_factory=list)

    @property
    def max_discrepancy(self) -> float:
        return max(r.discrepancy for r in self.rows)


def compare_with_oracle(
    angle_grid,
    phi: float = 0.0,
    joint_points=((0.0, PI / 2, PI / 2),),
    n_joint: int = 10**5,
    seed: int = 0,
) -> ComparisonTable:
    """Model triple correlator (quadrature) against the Born-rule value.

    The joint outcome tables at ``joint_points`` are reported only.
    """
    state = qm.ghz_state(3, phi)
    rows = []
    for a, b, c in angle_grid:
        d = float(effective_delta(a, b, c, phi))
        rows.append(
            ComparisonRow(
                a, b, c, d,
                quadrature_triple_correlation(d),
                qm.expectation(state, [qm.XY(a), qm.XY(b), qm.XY(c)]),
            )
        )
    joint = []
    for a, b, c in joint_points:
        batch = run_trials(ScheduleSpec.fixed(a, b, c), n_joint, phi, seed)
        model = empirical_joint(batch)
        born = qm.joint_distribution(state, [qm.XY(a), qm.XY(b), qm.XY(c)])
        joint.append(JointComparison((a, b, c), n_joint, total_variation(model, born), model, born))
    return ComparisonTable(float(phi), rows, joint)


# --------------------------------------------------------------------------
# free-will audit


@dataclass
class FreeWillReport:
    n_trials: int
    streams_identical: bool
    cross_schedule_ks: list  # (i, j, statistic, pvalue)
    setting_conditional_ks: list  # (schedule, setting, statistic, pvalue)
    chart_ks: list  # (schedule, statistic for L(omega), statistic for omega_B)

    def to_dict(self) -> dict:
        return asdict(self)


def freewill_audit(schedules: Sequence[ScheduleSpec], n_trials: int, seed: int = 0, phi: float = 0.0) -> FreeWillReport:
    """Check that the hidden state is statistically blind to the settings."""
    from scipy import stats

    if len(schedules) < 2:
        raise ValueError("freewill_audit needs at least two schedules")
    batches = [run_trials(s, n_trials, phi, seed) for s in schedules]
    ref = batches[0]
    identical = all(
        b.omega.tobytes() == ref.omega.tobytes() and b.eta.tobytes() == ref.eta.tobytes()
        for b in batches[1:]
    )
    cross = []
    for i, j in itertools.combinations(range(len(batches)), 2):
        r = stats.ks_2samp(batches[i].omega, batches[j].omega)
        cross.append((i, j, float(r.statistic), float(r.pvalue)))
    conditional = []
    chart = []
    cdf = lambda x: np.asarray(lhv.omega_cdf(x))  # noqa: E731
    for k, (sched, b) in enumerate(zip(schedules, batches)):
        choice = sched.choices(0, n_trials)
        for s in np.unique(choice):
            mask = choice == s
            if mask.all() or not mask.any():
                continue
            r = stats.ks_2samp(b.omega[mask], b.omega[~mask])
            conditional.append((k, int(s), float(r.statistic), float(r.pvalue)))
        moved = np.asarray(lhv.transform_L(b.omega, b.delta))
        in_b = np.asarray(lhv.omega_B_of(b.omega, b.eta, b.delta))
        chart.append(
            (k, float(stats.kstest(moved, cdf).statistic), float(stats.kstest(in_b, cdf).statistic))
        )
    return FreeWillReport(n_trials, identical, cross, conditional, chart)
