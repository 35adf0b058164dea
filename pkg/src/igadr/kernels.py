"""Hot numeric kernels, each with a numba path and a pure-numpy path.

Public names (``find_spans``, ``basis_ders``, ``eval_field`` ...) dispatch on
:func:`igadr._accel.use_numba`.  The ``*_nb`` and ``*_np`` implementations are
importable directly so tests can compare the two paths on the same input.

Conventions shared by all kernels:

* knot vectors are float64 arrays, degrees are python ints;
* a tensor-product space with ``mb`` functions along the first direction
  stores global index ``m = i + j * mb``;
* weights and coefficients are flat arrays in that ordering;
* returned inversion status: 0 converged inside, 1 clamped to the parametric
  boundary (target outside the patch), 2 not converged.
"""

import numpy as np

from ._accel import njit, prange, use_numba

INSIDE, CLAMPED, FAILED = 0, 1, 2


# fixed so compiled kernels stay cacheable; threads pick chunks dynamically
_MAX_CHUNKS = 64


@njit
def _n_chunks(n):
    # a few chunks per thread; each chunk owns its scratch buffers
    return max(1, min(n, _MAX_CHUNKS))


# --------------------------------------------------------------------------
# 1D spans and basis derivatives
# --------------------------------------------------------------------------


@njit
def _span_nb(knots, p, nb, x):
    if x >= knots[nb]:
        return nb - 1
    if x <= knots[p]:
        return p
    lo = p
    hi = nb
    mid = (lo + hi) // 2
    while x < knots[mid] or x >= knots[mid + 1]:
        if x < knots[mid]:
            hi = mid
        else:
            lo = mid
        mid = (lo + hi) // 2
    return mid


@njit
def find_spans_nb(knots, p, xs):
    nb = knots.size - p - 1
    out = np.empty(xs.size, np.int64)
    for i in range(xs.size):
        out[i] = _span_nb(knots, p, nb, xs[i])
    return out


def find_spans_np(knots, p, xs):
    nb = knots.size - p - 1
    s = np.searchsorted(knots, xs, side="right") - 1
    return np.clip(s, p, nb - 1).astype(np.int64)


@njit
def _ders_into(knots, p, span, x, nder, ndu, a, left, right, out):
    # Piegl & Tiller, The NURBS Book, A2.3
    ndu[0, 0] = 1.0
    for j in range(1, p + 1):
        left[j] = x - knots[span + 1 - j]
        right[j] = knots[span + j] - x
        saved = 0.0
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved
    for j in range(p + 1):
        out[0, j] = ndu[j, p]
    for k in range(1, nder + 1):
        for j in range(p + 1):
            out[k, j] = 0.0
    for r in range(p + 1):
        s1 = 0
        s2 = 1
        a[0, 0] = 1.0
        for k in range(1, nder + 1):
            d = 0.0
            rk = r - k
            pk = p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d += a[s2, k] * ndu[r, pk]
            out[k, r] = d
            s1, s2 = s2, s1
    fac = float(p)
    for k in range(1, nder + 1):
        for j in range(p + 1):
            out[k, j] *= fac
        fac *= p - k


@njit
def basis_ders_nb(knots, p, xs, nder):
    n = xs.size
    nb = knots.size - p - 1
    spans = np.empty(n, np.int64)
    out = np.zeros((n, nder + 1, p + 1))
    ndu = np.zeros((p + 1, p + 1))
    a = np.zeros((2, p + 1))
    left = np.zeros(p + 1)
    right = np.zeros(p + 1)
    for i in range(n):
        s = _span_nb(knots, p, nb, xs[i])
        spans[i] = s
        _ders_into(knots, p, s, xs[i], nder, ndu, a, left, right, out[i])
    return spans, out


def basis_ders_np(knots, p, xs, nder):
    xs = np.asarray(xs, dtype=float)
    n = xs.size
    spans = find_spans_np(knots, p, xs)
    ndu = np.zeros((n, p + 1, p + 1))
    ndu[:, 0, 0] = 1.0
    left = np.zeros((n, p + 1))
    right = np.zeros((n, p + 1))
    for j in range(1, p + 1):
        left[:, j] = xs - knots[spans + 1 - j]
        right[:, j] = knots[spans + j] - xs
        saved = np.zeros(n)
        for r in range(j):
            ndu[:, j, r] = right[:, r + 1] + left[:, j - r]
            temp = ndu[:, r, j - 1] / ndu[:, j, r]
            ndu[:, r, j] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        ndu[:, j, j] = saved
    out = np.zeros((n, nder + 1, p + 1))
    out[:, 0, :] = ndu[:, :, p]
    for r in range(p + 1):
        a = np.zeros((2, n, p + 1))
        a[0, :, 0] = 1.0
        s1, s2 = 0, 1
        for k in range(1, nder + 1):
            d = np.zeros(n)
            rk, pk = r - k, p - k
            if r >= k:
                a[s2, :, 0] = a[s1, :, 0] / ndu[:, pk + 1, rk]
                d = a[s2, :, 0] * ndu[:, rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, :, j] = (a[s1, :, j] - a[s1, :, j - 1]) / ndu[:, pk + 1, rk + j]
                d = d + a[s2, :, j] * ndu[:, rk + j, pk]
            if r <= pk:
                a[s2, :, k] = -a[s1, :, k - 1] / ndu[:, pk + 1, r]
                d = d + a[s2, :, k] * ndu[:, r, pk]
            out[:, k, r] = d
            s1, s2 = s2, s1
    fac = float(p)
    for k in range(1, nder + 1):
        out[:, k, :] *= fac
        fac *= p - k
    return spans, out


# --------------------------------------------------------------------------
# tensor-product rational fields
# --------------------------------------------------------------------------


@njit(parallel=True)
def eval_field_nb(ku, kv, p, q, mb, w, coeffs, xi, eta):
    n = xi.size
    ncomp = coeffs.shape[0]
    nbu = ku.size - p - 1
    nbv = kv.size - q - 1
    out = np.zeros((ncomp, n))
    nch = _n_chunks(n)
    for ch in prange(nch):
        ndu_u = np.zeros((p + 1, p + 1))
        a_u = np.zeros((2, p + 1))
        lu = np.zeros(p + 1)
        ru = np.zeros(p + 1)
        Bu = np.zeros((1, p + 1))
        ndu_v = np.zeros((q + 1, q + 1))
        a_v = np.zeros((2, q + 1))
        lv = np.zeros(q + 1)
        rv = np.zeros(q + 1)
        Bv = np.zeros((1, q + 1))
        acc = np.zeros(ncomp)
        for k in range(ch * n // nch, (ch + 1) * n // nch):
            su = _span_nb(ku, p, nbu, xi[k])
            sv = _span_nb(kv, q, nbv, eta[k])
            _ders_into(ku, p, su, xi[k], 0, ndu_u, a_u, lu, ru, Bu)
            _ders_into(kv, q, sv, eta[k], 0, ndu_v, a_v, lv, rv, Bv)
            W = 0.0
            for c in range(ncomp):
                acc[c] = 0.0
            for b in range(q + 1):
                row = (sv - q + b) * mb + su - p
                for a in range(p + 1):
                    m = row + a
                    bw = Bu[0, a] * Bv[0, b] * w[m]
                    W += bw
                    for c in range(ncomp):
                        acc[c] += bw * coeffs[c, m]
            for c in range(ncomp):
                out[c, k] = acc[c] / W
    return out


@njit(parallel=True)
def eval_basis_nb(ku, kv, p, q, mb, w, xi, eta):
    n = xi.size
    nl = (p + 1) * (q + 1)
    nbu = ku.size - p - 1
    nbv = kv.size - q - 1
    idx = np.empty((n, nl), np.int64)
    R = np.empty((n, nl))
    nch = _n_chunks(n)
    for ch in prange(nch):
        ndu_u = np.zeros((p + 1, p + 1))
        a_u = np.zeros((2, p + 1))
        lu = np.zeros(p + 1)
        ru = np.zeros(p + 1)
        Bu = np.zeros((1, p + 1))
        ndu_v = np.zeros((q + 1, q + 1))
        a_v = np.zeros((2, q + 1))
        lv = np.zeros(q + 1)
        rv = np.zeros(q + 1)
        Bv = np.zeros((1, q + 1))
        for k in range(ch * n // nch, (ch + 1) * n // nch):
            su = _span_nb(ku, p, nbu, xi[k])
            sv = _span_nb(kv, q, nbv, eta[k])
            _ders_into(ku, p, su, xi[k], 0, ndu_u, a_u, lu, ru, Bu)
            _ders_into(kv, q, sv, eta[k], 0, ndu_v, a_v, lv, rv, Bv)
            W = 0.0
            for b in range(q + 1):
                row = (sv - q + b) * mb + su - p
                for a in range(p + 1):
                    j = b * (p + 1) + a
                    idx[k, j] = row + a
                    R[k, j] = Bu[0, a] * Bv[0, b] * w[row + a]
                    W += R[k, j]
            for j in range(nl):
                R[k, j] /= W
    return idx, R


@njit(parallel=True)
def gather_dot_nb(idx, R, coeffs):
    n, nl = R.shape
    ncomp = coeffs.shape[0]
    out = np.zeros((ncomp, n))
    for k in prange(n):
        for c in range(ncomp):
            s = 0.0
            for j in range(nl):
                s += R[k, j] * coeffs[c, idx[k, j]]
            out[c, k] = s
    return out


def local_indices(su, sv, p, q, mb):
    """Global indices of the ``(p+1)(q+1)`` functions supported at each point.

    Returned shape is ``(n, q+1, p+1)`` with the first-direction index fastest.
    """
    ia = (su - p)[:, None] + np.arange(p + 1)[None, :]
    jb = (sv - q)[:, None] + np.arange(q + 1)[None, :]
    return ia[:, None, :] + mb * jb[:, :, None]


def eval_field_np(ku, kv, p, q, mb, w, coeffs, xi, eta):
    su, Bu = basis_ders_np(ku, p, xi, 0)
    sv, Bv = basis_ders_np(kv, q, eta, 0)
    idx = local_indices(su, sv, p, q, mb)
    bw = Bv[:, 0, :, None] * Bu[:, 0, None, :] * w[idx]
    W = bw.sum(axis=(1, 2))
    vals = np.einsum("nba,cnba->cn", bw, coeffs[:, idx])
    return vals / W


@njit
def _surface_point(ku, kv, p, q, nbu, nbv, mb, w, P, u, v, ndu_u, a_u, lu, ru, Du, ndu_v, a_v, lv, rv, Dv, res):
    su = _span_nb(ku, p, nbu, u)
    sv = _span_nb(kv, q, nbv, v)
    _ders_into(ku, p, su, u, 1, ndu_u, a_u, lu, ru, Du)
    _ders_into(kv, q, sv, v, 1, ndu_v, a_v, lv, rv, Dv)
    W = 0.0
    Wu = 0.0
    Wv = 0.0
    Ax = 0.0
    Ay = 0.0
    Axu = 0.0
    Ayu = 0.0
    Axv = 0.0
    Ayv = 0.0
    for b in range(q + 1):
        row = (sv - q + b) * mb + su - p
        for a in range(p + 1):
            m = row + a
            wm = w[m]
            b00 = Du[0, a] * Dv[0, b] * wm
            b10 = Du[1, a] * Dv[0, b] * wm
            b01 = Du[0, a] * Dv[1, b] * wm
            W += b00
            Wu += b10
            Wv += b01
            Ax += b00 * P[m, 0]
            Ay += b00 * P[m, 1]
            Axu += b10 * P[m, 0]
            Ayu += b10 * P[m, 1]
            Axv += b01 * P[m, 0]
            Ayv += b01 * P[m, 1]
    x = Ax / W
    y = Ay / W
    res[0] = x
    res[1] = y
    res[2] = (Axu - x * Wu) / W
    res[3] = (Axv - x * Wv) / W
    res[4] = (Ayu - y * Wu) / W
    res[5] = (Ayv - y * Wv) / W


@njit(parallel=True)
def surface_eval_nb(ku, kv, p, q, mb, w, P, xi, eta):
    n = xi.size
    nbu = ku.size - p - 1
    nbv = kv.size - q - 1
    pts = np.empty((n, 2))
    jac = np.empty((n, 2, 2))
    nch = _n_chunks(n)
    for ch in prange(nch):
        ndu_u = np.zeros((p + 1, p + 1))
        a_u = np.zeros((2, p + 1))
        lu = np.zeros(p + 1)
        ru = np.zeros(p + 1)
        Du = np.zeros((2, p + 1))
        ndu_v = np.zeros((q + 1, q + 1))
        a_v = np.zeros((2, q + 1))
        lv = np.zeros(q + 1)
        rv = np.zeros(q + 1)
        Dv = np.zeros((2, q + 1))
        res = np.zeros(6)
        for k in range(ch * n // nch, (ch + 1) * n // nch):
            _surface_point(ku, kv, p, q, nbu, nbv, mb, w, P, xi[k], eta[k],
                           ndu_u, a_u, lu, ru, Du, ndu_v, a_v, lv, rv, Dv, res)
            pts[k, 0] = res[0]
            pts[k, 1] = res[1]
            jac[k, 0, 0] = res[2]
            jac[k, 0, 1] = res[3]
            jac[k, 1, 0] = res[4]
            jac[k, 1, 1] = res[5]
    return pts, jac


def eval_basis_np(ku, kv, p, q, mb, w, xi, eta):
    su, Bu = basis_ders_np(ku, p, xi, 0)
    sv, Bv = basis_ders_np(kv, q, eta, 0)
    idx = local_indices(su, sv, p, q, mb)
    bw = Bv[:, 0, :, None] * Bu[:, 0, None, :] * w[idx]
    R = bw / bw.sum(axis=(1, 2), keepdims=True)
    n = xi.size
    return idx.reshape(n, -1), R.reshape(n, -1)


def gather_dot_np(idx, R, coeffs):
    return np.einsum("nj,cnj->cn", R, coeffs[:, idx])


def surface_eval_np(ku, kv, p, q, mb, w, P, xi, eta):
    su, Du = basis_ders_np(ku, p, xi, 1)
    sv, Dv = basis_ders_np(kv, q, eta, 1)
    idx = local_indices(su, sv, p, q, mb)
    wl = w[idx]
    Pl = P[idx]
    b00 = Dv[:, 0, :, None] * Du[:, 0, None, :] * wl
    b10 = Dv[:, 0, :, None] * Du[:, 1, None, :] * wl
    b01 = Dv[:, 1, :, None] * Du[:, 0, None, :] * wl
    W = b00.sum(axis=(1, 2))
    Wu = b10.sum(axis=(1, 2))
    Wv = b01.sum(axis=(1, 2))
    S = np.einsum("nba,nbad->nd", b00, Pl) / W[:, None]
    Su = (np.einsum("nba,nbad->nd", b10, Pl) - S * Wu[:, None]) / W[:, None]
    Sv = (np.einsum("nba,nbad->nd", b01, Pl) - S * Wv[:, None]) / W[:, None]
    jac = np.stack([Su, Sv], axis=-1)
    return S, jac


# --------------------------------------------------------------------------
# point inversion
# --------------------------------------------------------------------------


@njit
def _newton_direction(r0, r1, j00, j01, j10, j11, u, v, lo_u, hi_u, lo_v, hi_v):
    det = j00 * j11 - j01 * j10
    scale = abs(j00 * j11) + abs(j01 * j10) + 1e-300
    if abs(det) > 1e-13 * scale:
        du = -(j11 * r0 - j01 * r1) / det
        dv = -(-j10 * r0 + j00 * r1) / det
    else:
        g0 = j00 * r0 + j10 * r1
        g1 = j01 * r0 + j11 * r1
        h = j00 * j00 + j10 * j10 + j01 * j01 + j11 * j11 + 1e-300
        du = -g0 / h
        dv = -g1 / h
    fix_u = (u <= lo_u and du < 0.0) or (u >= hi_u and du > 0.0)
    fix_v = (v <= lo_v and dv < 0.0) or (v >= hi_v and dv > 0.0)
    if fix_u and fix_v:
        return 0.0, 0.0
    if fix_u:
        du = 0.0
        dv = -(j01 * r0 + j11 * r1) / (j01 * j01 + j11 * j11 + 1e-300)
    elif fix_v:
        dv = 0.0
        du = -(j00 * r0 + j10 * r1) / (j00 * j00 + j10 * j10 + 1e-300)
    return du, dv


@njit
def _invert_one(ku, kv, p, q, nbu, nbv, mb, w, P, x0, x1, u, v, tol, maxit, max_halvings,
                lo_u, hi_u, lo_v, hi_v, ndu_u, a_u, lu, ru, Du, ndu_v, a_v, lv, rv, Dv, res, out):
    u = min(max(u, lo_u), hi_u)
    v = min(max(v, lo_v), hi_v)
    _surface_point(ku, kv, p, q, nbu, nbv, mb, w, P, u, v,
                   ndu_u, a_u, lu, ru, Du, ndu_v, a_v, lv, rv, Dv, res)
    r0 = res[0] - x0
    r1 = res[1] - x1
    rn = np.sqrt(r0 * r0 + r1 * r1)
    for it in range(maxit):
        if rn <= tol:
            break
        du, dv = _newton_direction(r0, r1, res[2], res[3], res[4], res[5],
                                   u, v, lo_u, hi_u, lo_v, hi_v)
        if du == 0.0 and dv == 0.0:
            break
        lam = 1.0
        accepted = False
        un = u
        vn = v
        for h in range(max_halvings + 1):
            un = min(max(u + lam * du, lo_u), hi_u)
            vn = min(max(v + lam * dv, lo_v), hi_v)
            _surface_point(ku, kv, p, q, nbu, nbv, mb, w, P, un, vn,
                           ndu_u, a_u, lu, ru, Du, ndu_v, a_v, lv, rv, Dv, res)
            s0 = res[0] - x0
            s1 = res[1] - x1
            sn = np.sqrt(s0 * s0 + s1 * s1)
            if sn < rn:
                accepted = True
                r0 = s0
                r1 = s1
                rn = sn
                break
            lam *= 0.5
        if not accepted:
            break
        moved = abs(un - u) + abs(vn - v)
        u = un
        v = vn
        if moved < 1e-15 * (hi_u - lo_u + hi_v - lo_v):
            break
    out[0] = u
    out[1] = v
    out[2] = rn


@njit(parallel=True)
def invert_points_nb(ku, kv, p, q, mb, w, P, X, seeds, tol, maxit, max_halvings):
    n = X.shape[0]
    nbu = ku.size - p - 1
    nbv = kv.size - q - 1
    lo_u = ku[0]
    hi_u = ku[ku.size - 1]
    lo_v = kv[0]
    hi_v = kv[kv.size - 1]
    uv = np.empty((n, 2))
    status = np.zeros(n, np.int8)
    nch = _n_chunks(n)
    for ch in prange(nch):
        ndu_u = np.zeros((p + 1, p + 1))
        a_u = np.zeros((2, p + 1))
        lu = np.zeros(p + 1)
        ru = np.zeros(p + 1)
        Du = np.zeros((2, p + 1))
        ndu_v = np.zeros((q + 1, q + 1))
        a_v = np.zeros((2, q + 1))
        lv = np.zeros(q + 1)
        rv = np.zeros(q + 1)
        Dv = np.zeros((2, q + 1))
        res = np.zeros(6)
        out = np.zeros(3)
        for k in range(ch * n // nch, (ch + 1) * n // nch):
            _invert_one(ku, kv, p, q, nbu, nbv, mb, w, P, X[k, 0], X[k, 1], seeds[k, 0], seeds[k, 1],
                        tol, maxit, max_halvings, lo_u, hi_u, lo_v, hi_v,
                        ndu_u, a_u, lu, ru, Du, ndu_v, a_v, lv, rv, Dv, res, out)
            u = out[0]
            v = out[1]
            uv[k, 0] = u
            uv[k, 1] = v
            if out[2] <= tol:
                status[k] = INSIDE
            elif u <= lo_u or u >= hi_u or v <= lo_v or v >= hi_v:
                status[k] = CLAMPED
            else:
                status[k] = FAILED
    return uv, status


def invert_points_np(ku, kv, p, q, mb, w, P, X, seeds, tol, maxit, max_halvings):
    lo_u, hi_u = ku[0], ku[-1]
    lo_v, hi_v = kv[0], kv[-1]
    n = X.shape[0]
    uv = np.empty((n, 2))
    uv[:, 0] = np.clip(seeds[:, 0], lo_u, hi_u)
    uv[:, 1] = np.clip(seeds[:, 1], lo_v, hi_v)
    S, J = surface_eval_np(ku, kv, p, q, mb, w, P, uv[:, 0], uv[:, 1])
    r = S - X
    rn = np.hypot(r[:, 0], r[:, 1])
    active = rn > tol
    span = hi_u - lo_u + hi_v - lo_v
    for _ in range(maxit):
        ids = np.flatnonzero(active)
        if ids.size == 0:
            break
        u, v = uv[ids, 0], uv[ids, 1]
        r0, r1 = r[ids, 0], r[ids, 1]
        j00, j01, j10, j11 = J[ids, 0, 0], J[ids, 0, 1], J[ids, 1, 0], J[ids, 1, 1]
        det = j00 * j11 - j01 * j10
        scale = np.abs(j00 * j11) + np.abs(j01 * j10) + 1e-300
        regular = np.abs(det) > 1e-13 * scale
        safe_det = np.where(regular, det, 1.0)
        h = j00**2 + j10**2 + j01**2 + j11**2 + 1e-300
        du = np.where(regular, -(j11 * r0 - j01 * r1) / safe_det, -(j00 * r0 + j10 * r1) / h)
        dv = np.where(regular, -(-j10 * r0 + j00 * r1) / safe_det, -(j01 * r0 + j11 * r1) / h)
        fix_u = ((u <= lo_u) & (du < 0)) | ((u >= hi_u) & (du > 0))
        fix_v = ((v <= lo_v) & (dv < 0)) | ((v >= hi_v) & (dv > 0))
        only_u = fix_u & ~fix_v
        only_v = fix_v & ~fix_u
        both = fix_u & fix_v
        dv = np.where(only_u, -(j01 * r0 + j11 * r1) / (j01**2 + j11**2 + 1e-300), dv)
        du = np.where(only_u, 0.0, du)
        du = np.where(only_v, -(j00 * r0 + j10 * r1) / (j00**2 + j10**2 + 1e-300), du)
        dv = np.where(only_v, 0.0, dv)
        du = np.where(both, 0.0, du)
        dv = np.where(both, 0.0, dv)
        stuck = (du == 0.0) & (dv == 0.0)

        lam = np.ones(ids.size)
        pending = ~stuck
        new_u, new_v = u.copy(), v.copy()
        new_S, new_J = S[ids].copy(), J[ids].copy()
        new_rn = rn[ids].copy()
        accepted = np.zeros(ids.size, bool)
        for _h in range(max_halvings + 1):
            sel = np.flatnonzero(pending)
            if sel.size == 0:
                break
            tu = np.clip(u[sel] + lam[sel] * du[sel], lo_u, hi_u)
            tv = np.clip(v[sel] + lam[sel] * dv[sel], lo_v, hi_v)
            tS, tJ = surface_eval_np(ku, kv, p, q, mb, w, P, tu, tv)
            tr = tS - X[ids[sel]]
            tn = np.hypot(tr[:, 0], tr[:, 1])
            ok = tn < rn[ids[sel]]
            good = sel[ok]
            new_u[good], new_v[good] = tu[ok], tv[ok]
            new_S[good], new_J[good] = tS[ok], tJ[ok]
            new_rn[good] = tn[ok]
            accepted[good] = True
            pending[good] = False
            lam[sel[~ok]] *= 0.5
        moved = np.abs(new_u - u) + np.abs(new_v - v)
        uv[ids, 0], uv[ids, 1] = new_u, new_v
        S[ids], J[ids] = new_S, new_J
        r[ids] = new_S - X[ids]
        rn[ids] = new_rn
        done = ~accepted | (new_rn <= tol) | (moved < 1e-15 * span)
        active[ids[done]] = False
    status = np.full(n, FAILED, np.int8)
    on_edge = (uv[:, 0] <= lo_u) | (uv[:, 0] >= hi_u) | (uv[:, 1] <= lo_v) | (uv[:, 1] >= hi_v)
    status[on_edge] = CLAMPED
    status[rn <= tol] = INSIDE
    return uv, status


# --------------------------------------------------------------------------
# element matrices and scatter
# --------------------------------------------------------------------------


@njit
def element_mass_nb(R, wq):
    ne, nq, nl = R.shape
    out = np.zeros((ne, nl, nl))
    for e in range(ne):
        for g in range(nq):
            wg = wq[e, g]
            for a in range(nl):
                ra = R[e, g, a] * wg
                for b in range(a, nl):
                    out[e, a, b] += ra * R[e, g, b]
        for a in range(nl):
            for b in range(a + 1, nl):
                out[e, b, a] = out[e, a, b]
    return out


def element_mass_np(R, wq):
    return np.matmul(np.swapaxes(R * wq[:, :, None], 1, 2), R)


@njit
def element_stiffness_nb(G, wq):
    ne, nq, nl, _ = G.shape
    out = np.zeros((ne, nl, nl))
    for e in range(ne):
        for g in range(nq):
            wg = wq[e, g]
            for a in range(nl):
                gx = G[e, g, a, 0] * wg
                gy = G[e, g, a, 1] * wg
                for b in range(a, nl):
                    out[e, a, b] += gx * G[e, g, b, 0] + gy * G[e, g, b, 1]
        for a in range(nl):
            for b in range(a + 1, nl):
                out[e, b, a] = out[e, a, b]
    return out


def element_stiffness_np(G, wq):
    Gw = G * wq[:, :, None, None]
    return np.matmul(np.swapaxes(Gw[..., 0], 1, 2), G[..., 0]) + np.matmul(
        np.swapaxes(Gw[..., 1], 1, 2), G[..., 1]
    )


@njit
def scatter_add_nb(index, values, size):
    out = np.zeros(size)
    for k in range(index.size):
        out[index[k]] += values[k]
    return out


def scatter_add_np(index, values, size):
    return np.bincount(index, weights=values, minlength=size)


@njit
def element_load_nb(wq, values, R, dofs, ndof):
    """``out[c, dofs[e, a]] += sum_g wq[e, g] values[c, e, g] R[e, g, a]``."""
    nc, ne, nq = values.shape
    nl = R.shape[2]
    out = np.zeros((nc, ndof))
    for c in range(nc):
        for e in range(ne):
            for g in range(nq):
                s = wq[e, g] * values[c, e, g]
                for a in range(nl):
                    out[c, dofs[e, a]] += s * R[e, g, a]
    return out


def element_load_np(wq, values, R, dofs, ndof):
    contrib = np.einsum("kg,ckg,kga->cka", wq, values, R, optimize=True)
    idx = dofs.ravel()
    return np.stack([np.bincount(idx, weights=row.ravel(), minlength=ndof) for row in contrib])


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------


def _pick(nb, np_):
    def dispatch(*args):
        return nb(*args) if use_numba() else np_(*args)

    dispatch.__name__ = np_.__name__[:-3]
    dispatch.__doc__ = np_.__doc__
    return dispatch


find_spans = _pick(find_spans_nb, find_spans_np)
basis_ders = _pick(basis_ders_nb, basis_ders_np)
eval_field = _pick(eval_field_nb, eval_field_np)
eval_basis = _pick(eval_basis_nb, eval_basis_np)
gather_dot = _pick(gather_dot_nb, gather_dot_np)
surface_eval = _pick(surface_eval_nb, surface_eval_np)
invert_points = _pick(invert_points_nb, invert_points_np)
element_mass = _pick(element_mass_nb, element_mass_np)
element_stiffness = _pick(element_stiffness_nb, element_stiffness_np)
scatter_add = _pick(scatter_add_nb, scatter_add_np)
element_load = _pick(element_load_nb, element_load_np)
