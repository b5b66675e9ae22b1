"""Numpy implementation of the per-frequency kernels.

Used when the compiled ``macdetect._kernels`` extension is unavailable, and
as the reference the compiled path is benchmarked and tested against.
"""
import numpy as np

_SQRT3 = np.sqrt(3.0)
# complex-pair imaginary parts below this (relative) are merged into a double root
_PAIR_MERGE = 1e-7
TINY_RATIO = 1e-100


def cubic_roots(a3, a2, a1, a0):
    """Real roots of ``a3 x^3 + a2 x^2 + a1 x + a0`` for batches of cubics.

    Returns an ``(m, 3)`` array sorted descending, padded with NaN where a
    root is not real. Requires ``a3 != 0``. Roots come from the
    trigonometric/Cardano closed form on a rescaled monic cubic, then two
    guarded Newton steps on the original polynomial.
    """
    a3, a2, a1, a0 = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (a3, a2, a1, a0)))
    b = a2 / a3
    c = a1 / a3
    d = a0 / a3
    # x = s*y with s the largest of |b|, |c|^(1/2), |d|^(1/3) keeps the monic
    # coefficients in [-1, 1] without overflow when one of them is tiny
    s = np.maximum(np.maximum(np.abs(b), np.sqrt(np.abs(c))), np.cbrt(np.abs(d)))
    s = np.where(s > 0, s, 1.0)
    B = b / s
    C = c / s**2
    D = d / s**3

    p = C - B * B / 3.0
    q = 2.0 * B**3 / 27.0 - B * C / 3.0 + D
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    shift = -B / 3.0

    roots = np.full(B.shape + (3,), np.nan)

    three = disc <= 0
    if np.any(three):
        pp = np.minimum(p[three], 0.0)
        r = 2.0 * np.sqrt(-pp / 3.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            arg = np.where(pp < 0, 3.0 * q[three] / (pp * r), 0.0)
        theta = np.arccos(np.clip(arg, -1.0, 1.0)) / 3.0
        for k in range(3):
            roots[three, k] = r * np.cos(theta - 2.0 * np.pi * k / 3.0) + shift[three]

    one = ~three
    if np.any(one):
        qq = q[one]
        sq = np.sqrt(disc[one])
        A = -np.sign(qq) * np.cbrt(np.abs(qq) / 2.0 + sq)
        A = np.where(qq == 0, np.cbrt(sq), A)
        with np.errstate(divide="ignore", invalid="ignore"):
            Bc = np.where(A != 0, -p[one] / (3.0 * A), 0.0)
        y_real = A + Bc
        re = -y_real / 2.0
        im = _SQRT3 / 2.0 * np.abs(A - Bc)
        sub = np.full((qq.size, 3), np.nan)
        sub[:, 0] = y_real + shift[one]
        pair = im <= _PAIR_MERGE * np.maximum(1.0, np.abs(re))
        sub[pair, 1] = re[pair] + shift[one][pair]
        sub[pair, 2] = re[pair] + shift[one][pair]
        roots[one] = sub

    roots = roots * s[..., None]
    roots = _polish(roots, a3[..., None], a2[..., None], a1[..., None], a0[..., None])
    return -np.sort(-roots, axis=-1)  # NaN sorts last


def _polish(x, a3, a2, a1, a0, steps=2):
    for _ in range(steps):
        f = ((a3 * x + a2) * x + a1) * x + a0
        fp = (3.0 * a3 * x + 2.0 * a2) * x + a1
        # a wild step may overflow; the residual test below rejects it
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            xn = np.where(fp != 0, x - f / fp, x)
            fn = ((a3 * xn + a2) * xn + a1) * xn + a0
        x = np.where(np.abs(fn) < np.abs(f), xn, x)
    return x


def oep_coefficients(phi, lam, v, w):
    """Cubic coefficients ``(a3, a2, a1, a0)`` of the stationarity equation."""
    phi = np.asarray(phi, dtype=float)
    a3 = lam * v * (phi + v) ** 2
    a2 = lam * w * (phi * phi + 4.0 * phi * v + 3.0 * v * v)
    a1 = w * (-phi * phi + lam * w * (2.0 * phi + 3.0 * v))
    a0 = np.broadcast_to(lam * w**3, phi.shape)
    return a3, a2, a1, a0


def snr_gain(xi, phi, v, w):
    return xi * phi / (xi * v + w)


def info_density(gamma):
    """``log(1+g) - g/(1+g)``, accurate for small ``g``."""
    g = np.asarray(gamma, dtype=float)
    out = np.log1p(g) - g / (1.0 + g)
    small = np.abs(g) < 1e-3
    if np.any(small):
        gs = g[small]
        # sum_{k>=2} (-1)^k (k-1) g^k / k
        acc = np.zeros_like(gs)
        for k in range(8, 1, -1):
            acc = acc * gs + (-1) ** k * (k - 1) / k
        out[small] = acc * gs * gs
    return out


def marginal_gain(xi, phi, v, w):
    """Derivative of the per-frequency miss-exponent integrand w.r.t. energy."""
    h0 = v * xi + w
    h1 = (phi + v) * xi + w
    return phi * phi * w * xi / (h0 * h1 * h1)


def peak_allocation(phi, v, w):
    """Energy at which the marginal gain peaks (the cubic's double root)."""
    P = np.asarray(phi, dtype=float) + v
    return 2.0 * w / (P + np.sqrt(P * P + 8.0 * v * P))


def oep_entry(phi, v, w, lagrangian=True):
    """Per-node entry multiplier and entry allocation.

    A node is active for multipliers ``lam <= lam_entry``; at ``lam_entry`` it
    receives ``xi_entry``. With ``lagrangian`` the entry point is where the
    per-node Lagrangian ``I(xi) - lam*xi`` first becomes positive (tangent
    from the origin); otherwise it is where positive cubic roots first appear.
    """
    phi = np.asarray(phi, dtype=float)
    lam_e = np.zeros_like(phi)
    xi_e = np.zeros_like(phi)
    live = phi > 0
    if not np.any(live):
        return lam_e, xi_e
    p = phi[live]
    xd = peak_allocation(p, v, w)
    if not lagrangian:
        xi_e[live] = xd
        lam_e[live] = marginal_gain(xd, p, v, w)
        return lam_e, xi_e

    # the tangent gap underflows for phi/v -> 0, where its root tends to w/v
    tiny = p < TINY_RATIO * v

    def g(x):
        gap = x * marginal_gain(x, p, v, w) - info_density(snr_gain(x, p, v, w))
        return np.where(tiny, -1.0, gap)

    xd = np.where(tiny, w / v, xd)
    lo = xd.copy()
    hi = 2.0 * xd
    for _ in range(200):
        up = g(hi) > 0
        if not np.any(up):
            break
        lo = np.where(up, hi, lo)
        hi = np.where(up, 2.0 * hi, hi)
    for _ in range(64):
        mid = np.sqrt(lo * hi)
        pos = g(mid) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
        if np.all(hi - lo <= 4e-16 * hi):
            break
    xt = np.where(tiny, w / v, 0.5 * (lo + hi))
    xi_e[live] = xt
    lam_e[live] = marginal_gain(xt, p, v, w)
    return lam_e, xi_e


def oep_allocate(phi, lam, v, w, lam_entry, xi_entry):
    """Largest positive root of the stationarity cubic on active nodes, 0 elsewhere."""
    phi = np.asarray(phi, dtype=float)
    out = np.zeros_like(phi)
    act = (lam_entry > 0) & (lam <= lam_entry)
    if not np.any(act):
        return out
    roots = cubic_roots(*oep_coefficients(phi[act], lam, v, w))
    top = roots[:, 0]
    top = np.where(np.isnan(top), xi_entry[act], top)
    out[act] = np.maximum(top, xi_entry[act])
    return out
