"""Arbitrary-precision branch maps for polishing symbolic constructions.

One return-map step expands tangent vectors by ~ ||DG|| ~ 1/r, so the forward
closure residual of a length-k symbolic word has a double-precision floor of
order ||DG||^k * eps, far above the certified tolerances at small r.  Once
the float path has discovered an orbit's flight counts, however, each branch
of the return map is a closed-form composition (obstacle -> wall, m rigid
flights, wall -> obstacle), so it can be re-evaluated with mpmath at any
precision.  These kernels mirror the float geometry exactly.
"""

from __future__ import annotations

import mpmath as mp


def _wrap(x):
    y = mp.fmod(x, 2 * mp.pi)
    if y > mp.pi:
        y -= 2 * mp.pi
    elif y <= -mp.pi:
        y += 2 * mp.pi
    return y


def obstacle_to_wall(omega, beta, delta, r):
    """High-precision obstacle-to-wall map; returns (s, theta)."""
    a = omega + beta
    wx, wy = mp.cos(a), -mp.sin(a)
    px = -delta + r * mp.cos(omega)
    py = -r * mp.sin(omega)
    b = px * wx + py * wy
    c0 = px * px + py * py - 1
    t = mp.sqrt(b * b - c0) - b
    s = mp.atan2(py + t * wy, px + t * wx)
    theta = _wrap(mp.atan2(wy, wx) - s)
    return s, theta


def chord_miss(s, theta, delta):
    """Signed distance of the obstacle center from the flight line leaving (s, theta)."""
    return mp.sin(theta) + delta * mp.sin(theta - s)


def wall_to_obstacle(s, theta, delta, r):
    """High-precision wall-to-obstacle map for a chord known to hit; returns (omega, beta)."""
    a = s - theta
    vx, vy = -mp.cos(a), -mp.sin(a)
    dx, dy = mp.cos(s) + delta, mp.sin(s)
    b = dx * vx + dy * vy
    c0 = dx * dx + dy * dy - r * r
    dist = chord_miss(s, theta, delta)
    disc = (r - dist) * (r + dist)
    if disc < 0:
        disc = mp.mpf(0)
    t = c0 / (mp.sqrt(disc) - b)
    yx, yy = dx + t * vx, dy + t * vy
    omega = mp.atan2(-yy / r, yx / r)
    beta = _wrap(omega - theta + s)
    return omega, beta


def return_step(omega, beta, m, delta, r, validate=False):
    """One branch of the return map with a known flight count m.

    With ``validate`` the first-hit structure of the branch is checked: the
    chords 0..m-1 must clear the obstacle and chord m must meet it.
    """
    s, theta = obstacle_to_wall(omega, beta, delta, r)
    step = mp.pi - 2 * theta
    if validate:
        for k in range(m):
            if abs(chord_miss(_wrap(s + k * step), theta, delta)) <= r:
                raise ValueError(f"chord {k} of a frozen-{m} branch already hits")
        if abs(chord_miss(_wrap(s + m * step), theta, delta)) > r:
            raise ValueError(f"chord {m} of a frozen-{m} branch misses")
    return wall_to_obstacle(_wrap(s + m * step), theta, delta, r)


def return_step_inverse(omega, beta, m, delta, r):
    """Inverse branch through the time-reversal conjugacy."""
    w, b = return_step(omega, -beta, m, delta, r)
    return w, -b


def return_chain(omega, beta, m_seq, delta, r, validate=False):
    """Forward return-map branches along a fixed flight-count itinerary."""
    for m in m_seq:
        omega, beta = return_step(omega, beta, m, delta, r, validate=validate)
    return omega, beta


def word_orbit(omega, beta, m_seq, delta, r):
    """Validated forward orbit along a fixed itinerary.

    Every step checks the first-hit structure of its branch (chords before m
    clear the obstacle, chord m meets it).  Returns one entry per step:
    (omega0, beta0, s0, theta, m, omega1, beta1).
    """
    out = []
    for m in m_seq:
        s, theta = obstacle_to_wall(omega, beta, delta, r)
        step = mp.pi - 2 * theta
        for k in range(m):
            if abs(chord_miss(_wrap(s + k * step), theta, delta)) <= r:
                raise ValueError(f"chord {k} of a frozen-{m} branch already hits")
        if abs(chord_miss(_wrap(s + m * step), theta, delta)) > r:
            raise ValueError(f"chord {m} of a frozen-{m} branch misses")
        w1, b1 = wall_to_obstacle(_wrap(s + m * step), theta, delta, r)
        out.append((omega, beta, s, theta, m, w1, b1))
        omega, beta = w1, b1
    return out


def bisect(f, lo, hi, tol, max_iter=400):
    """Plain bisection for mpf endpoints; f(lo) and f(hi) must differ in sign."""
    flo = f(lo)
    if flo == 0:
        return lo
    for _ in range(max_iter):
        mid = (lo + hi) / 2
        if hi - lo < tol:
            return mid
        fm = f(mid)
        if fm == 0:
            return mid
        if (flo < 0) == (fm < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return (lo + hi) / 2
