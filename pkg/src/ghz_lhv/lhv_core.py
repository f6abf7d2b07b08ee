"""Geometry of the hidden-variable model on the torus.

A hidden configuration is a point ``(omega, eta)`` in ``[-pi, pi)**2``.  The
``omega`` coordinate is chart dependent (each observer reads it in the frame
fixed by their own apparatus); ``eta`` is shared by all charts.

Every function here is pure and vectorised: scalars and numpy arrays are both
accepted and broadcast against each other.  Outcomes are returned as ``int8``
arrays (or plain ``int`` for scalar input).

Boundary conventions (all on measure-zero sets):

* angles are canonical in ``[-pi, pi)``; ``-pi`` stands for ``+pi`` wherever a
  response interval is closed at ``+pi``, so ``sign_S(-pi) == +1``;
* ``eta == -pi`` belongs to the ``eta <= 0`` branch;
* ``q_factor`` uses ``sign(0) := +1``.
"""

from __future__ import annotations

import enum

import numpy as np

PI = np.pi
TWO_PI = 2.0 * np.pi

#: slack tolerated on acos arguments before a branch error is raised
ACOS_SLACK = 1e-12


class Region(enum.IntEnum):
    """Cells of the four-region partition, named by the signs of (S_A, S_B)."""

    PP = 0
    PM = 1
    MP = 2
    MM = 3

    @property
    def correlated(self) -> bool:
        return self in (Region.PP, Region.MM)


def _out(x):
    """Return a Python scalar for 0-d results, the array otherwise."""
    x = np.asarray(x)
    if x.ndim == 0:
        return x.item()
    return x


def canonicalize_angle(x):
    """Reduce ``x`` modulo 2*pi into ``[-pi, pi)``.

    Values already inside the range are returned bit-for-bit unchanged.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("angle must be finite")
    inside = (x >= -PI) & (x < PI)
    if np.all(inside):
        return _out(x)
    r = np.mod(x + PI, TWO_PI) - PI
    r = np.where(r >= PI, r - TWO_PI, r)
    return _out(np.where(inside, x, r))


def density(omega, eta=0.0):
    """Probability density ``|sin omega| / (8 pi)`` of a configuration."""
    omega, eta = np.broadcast_arrays(np.asarray(omega, float), np.asarray(eta, float))
    return _out(np.abs(np.sin(omega)) / (8.0 * PI))


def g(omega):
    """Marginal density of ``omega``: ``|sin omega| / 4``."""
    return _out(np.abs(np.sin(np.asarray(omega, float))) / 4.0)


def omega_cdf(omega):
    """CDF of the ``omega`` marginal on ``[-pi, pi]``."""
    w = np.asarray(omega, float)
    c = np.cos(w)
    return _out(np.where(w <= 0.0, (c + 1.0) / 4.0, (3.0 - c) / 4.0))


def sample_hidden(u, v):
    """Map uniforms ``(u, v)`` in ``[0, 1)`` to a configuration by inverse CDF.

    Returns ``(omega, eta)``.
    """
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    lower = -np.arccos(np.clip(4.0 * u - 1.0, -1.0, 1.0))
    upper = np.arccos(np.clip(3.0 - 4.0 * u, -1.0, 1.0))
    omega = np.where(u < 0.5, lower, upper)
    # u -> 1 gives acos(-1) = pi, which is -pi on the canonical circle
    omega = np.where(omega >= PI, -PI, omega)
    eta = -PI + TWO_PI * v
    eta = np.where(eta >= PI, -PI, eta)
    return _out(omega), _out(eta)


def sign_S(omega):
    """+1 on ``(0, pi]`` (with ``-pi`` read as ``pi``), -1 on ``(-pi, 0]``."""
    w = np.asarray(omega, float)
    return _out(np.where((w > 0.0) | (w <= -PI), 1, -1).astype(np.int8))


def outcome_C(eta):
    """Station C's outcome: +1 iff ``eta > 0``."""
    return _out(np.where(np.asarray(eta, float) > 0.0, 1, -1).astype(np.int8))


def response(omega_local, eta):
    """Binary outcome of station A or B given its own chart coordinate."""
    return _out(
        (np.asarray(sign_S(omega_local)) * np.asarray(outcome_C(eta))).astype(np.int8)
    )


def q_factor(omega, delta):
    """Sign of ``canonicalize(omega - delta)`` with ``sign(0) = +1``."""
    d = np.asarray(canonicalize_angle(np.asarray(omega, float) - np.asarray(delta, float)))
    return _out(np.where(d >= 0.0, 1, -1).astype(np.int8))


def _branch_signs(omega, delta):
    """Signs ``(s1, s2, s3)`` of the branch ``s1 cos(delta) + s2 cos(omega) + s3``."""
    # delta in [0, pi)
    pos = np.select(
        [omega < delta - PI, omega < 0.0, omega < delta],
        [0, 1, 2],
        3,
    )
    # delta in [-pi, 0)
    neg = np.select(
        [omega < delta, omega < 0.0, omega < delta + PI],
        [3, 2, 1],
        0,
    )
    idx = np.where(delta >= 0.0, pos, neg)
    return _BRANCHES[:, 0][idx], _BRANCHES[:, 1][idx], _BRANCHES[:, 2][idx]


_BRANCHES = np.array([(-1, -1, -1), (1, 1, -1), (1, -1, 1), (-1, 1, 1)], dtype=float)


def _acos_args(omega, delta):
    """acos argument of the branch of L selected by ``(omega, delta)``."""
    s1, s2, s3 = _branch_signs(omega, delta)
    return s1 * np.cos(delta) + s2 * np.cos(omega) + s3


def _acos_branch(omega, delta):
    """``acos`` of the branch argument, accurate next to the breakpoints.

    With ``P = s1 cos(delta) + s2 cos(omega)`` both ``1 - arg`` and
    ``1 + arg`` are ``-P``, ``P`` or ``2 +- P``.  ``P`` is a product of two
    sines or cosines and ``2 +- P`` a sum of two squares, so their square
    roots come out without cancellation or underflow, and then
    ``acos(x) = 2 atan2(sqrt(1-x), sqrt(1+x))``.
    """
    s1, s2, s3 = _branch_signs(omega, delta)
    same = s1 == s2
    h, m = (delta + omega) / 2, (delta - omega) / 2
    # P = k * x * y with x, y the half-sum / half-difference factors
    x = np.where(same, np.cos(h), np.sin(h))
    y = np.where(same, np.cos(m), np.sin(m))
    k = np.where(same, s1, -s1)
    sqrt_p = np.sqrt(2 * np.abs(x)) * np.sqrt(np.abs(y))
    p_sign = k * np.sign(x) * np.sign(y)
    # 2 + s * P = 2 (a^2 + b^2) with a, b the half-angle cos/sin picked by the signs
    cd, sd = np.cos(delta / 2), np.sin(delta / 2)
    cw, sw = np.cos(omega / 2), np.sin(omega / 2)
    a_plus, a_minus = np.where(s1 > 0, cd, sd), np.where(s1 > 0, sd, cd)
    b_plus, b_minus = np.where(s2 > 0, cw, sw), np.where(s2 > 0, sw, cw)
    root2 = np.sqrt(2.0)
    up = s3 > 0
    root_minus = np.where(up, np.where(p_sign < 0, sqrt_p, 0.0), root2 * np.hypot(a_minus, b_minus))
    root_plus = np.where(up, root2 * np.hypot(a_plus, b_plus), np.where(p_sign > 0, sqrt_p, 0.0))
    return 2 * np.arctan2(root_minus, root_plus)


def transform_L(omega, delta):
    """Chart change between observers whose settings differ by ``delta``.

    Piecewise ``q(omega) * acos(+-cos(delta) +- cos(omega) +- 1)``; the branch
    is picked by the half-open ``omega`` interval and the sign of ``delta``.
    The map preserves the density ``g``.
    """
    omega = np.asarray(canonicalize_angle(omega), float)
    delta = np.asarray(canonicalize_angle(delta), float)
    omega, delta = np.broadcast_arrays(omega, delta)
    arg = _acos_args(omega, delta)
    if np.any(np.abs(arg) > 1.0 + ACOS_SLACK):
        worst = float(np.max(np.abs(arg)))
        raise ValueError(f"acos argument {worst!r} outside [-1, 1]: branch selection error")
    out = np.asarray(q_factor(omega, delta)) * _acos_branch(omega, delta)
    out = np.where(out >= PI, -PI, out)
    # identity at delta = 0 exactly; omega / 2 underflows for the tiniest subnormals
    out = np.where(delta == 0.0, omega, out)
    return _out(out)


def omega_B_of(omega_A, eta, delta):
    """Coordinate of the configuration in B's chart, given A's coordinate."""
    w = np.asarray(transform_L(omega_A, delta), float)
    eta = np.asarray(eta, float)
    shifted = np.asarray(canonicalize_angle(w + PI))
    return _out(np.where(eta > 0.0, w, shifted))


def classify_region(omega_A, delta):
    """Partition cell of ``omega_A`` for ``0 <= delta <= pi``.

    PP: (delta, pi], PM: (0, delta], MM: (delta - pi, 0], MP: (-pi, delta - pi],
    with ``-pi`` identified with ``pi``.  Returns ``Region`` codes (int8).
    """
    d = np.asarray(delta, float)
    if np.any((d < 0.0) | (d > PI)):
        raise ValueError("classify_region requires 0 <= delta <= pi")
    w = np.asarray(omega_A, float)
    w = np.where(w <= -PI, w + TWO_PI, w)
    code = np.select(
        [w > d, w > 0.0, w > d - PI],
        [Region.PP, Region.PM, Region.MM],
        Region.MP,
    ).astype(np.int8)
    return _out(code)


def region_of(omega_A, delta):
    """Partition cell for any ``delta``, from the signs (S(omega_A), S(L)).

    Coincides with :func:`classify_region` on ``[0, pi)``; for negative
    ``delta`` it yields the mirrored partition.
    """
    sa = np.asarray(sign_S(omega_A))
    sl = np.asarray(sign_S(transform_L(omega_A, delta)))
    code = np.where(
        sa > 0,
        np.where(sl > 0, Region.PP, Region.PM),
        np.where(sl > 0, Region.MP, Region.MM),
    ).astype(np.int8)
    return _out(code)


def _region_signs(region):
    r = np.asarray(region)
    first = np.where((r == Region.PP) | (r == Region.PM), 1, -1)
    second = np.where((r == Region.PP) | (r == Region.MP), 1, -1)
    return first, second


def star_remap(omega_A, omega_B, eta, region):
    """Re-coordinatise a configuration so that C's sign(eta*) tracks S_A * S_B.

    On the anti-correlated cells (PM, MP) ``eta`` and ``omega_A`` are negated
    and ``omega_B`` is shifted by pi; on the correlated cells ``omega_A`` is
    reflected to ``pi - omega_A``.  Returns ``(omega_A*, omega_B*, eta*)``.

    Raises ``ValueError`` if ``region`` disagrees with the signs carried by
    ``omega_A`` and ``(omega_B, eta)``.
    """
    wa = np.asarray(omega_A, float)
    wb = np.asarray(omega_B, float)
    eta = np.asarray(eta, float)
    region = np.asarray(region)
    first, second = _region_signs(region)
    if np.any(first != np.asarray(sign_S(wa))) or np.any(
        second != np.asarray(response(wb, eta))
    ):
        raise ValueError("region tag inconsistent with the configuration")
    anti = (region == Region.PM) | (region == Region.MP)
    wa_star = np.where(anti, canonicalize_angle(-wa), canonicalize_angle(PI - wa))
    wb_star = np.where(anti, canonicalize_angle(wb + PI), wb)
    eta_star = np.where(anti, canonicalize_angle(-eta), eta)
    return _out(wa_star), _out(wb_star), _out(eta_star)


def weak_y(s_x):
    """Complex Y-component ``i * s_x`` relative to a parallel X frame."""
    s = np.asarray(s_x)
    if np.any((s != 1) & (s != -1)):
        raise ValueError("s_x must be +1 or -1")
    return _out(1j * s)


def weak_identity_products(s_a, s_b, s_c):
    """Products for the XXX, XYY, YXY, YYX settings with Y = weak_y(X)."""
    ya, yb, yc = weak_y(s_a), weak_y(s_b), weak_y(s_c)
    return (
        s_a * s_b * s_c,
        s_a * yb * yc,
        ya * s_b * yc,
        ya * yb * s_c,
    )
