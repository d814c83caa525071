"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

Two inner loops dominate pipeline runtime: per-pixel non-negative sparse
coding during stain normalization (ISTA over every pixel of every image)
and the 3x3 convolutions of the conv trunk during training. Both are
implemented twice — as serial ``@njit`` kernels and as vectorized numpy —
and selected by the ``HISTOSPOT_NUMBA`` environment variable:

    HISTOSPOT_NUMBA=0   force the pure-numpy path
    unset / any other   use numba when importable

The two paths compute the same quantities; they differ only in floating
point summation order. ``benchmarks/bench_kernels.py`` compares them.
All kernels are serial, so results do not depend on thread counts.
"""

import os

import numpy as np

try:
    from numba import njit

    _NUMBA_IMPORTABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _NUMBA_IMPORTABLE = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if len(args) == 1 and callable(args[0]):
            return args[0]
        return wrap


_env = os.environ.get("HISTOSPOT_NUMBA", "1").strip().lower()
USE_NUMBA = _NUMBA_IMPORTABLE and _env not in ("0", "false", "off", "no")


def set_backend(name: str) -> None:
    """Select 'numba' or 'numpy' at runtime (tests and benchmarks)."""
    global USE_NUMBA
    if name == "numba":
        if not _NUMBA_IMPORTABLE:
            raise RuntimeError("numba backend requested but numba is not importable")
        USE_NUMBA = True
    elif name == "numpy":
        USE_NUMBA = False
    else:
        raise ValueError(f"unknown backend {name!r}")


def active_backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# Non-negative l1-penalized sparse coding (ISTA)
# ---------------------------------------------------------------------------

def ista_step_size(basis: np.ndarray) -> float:
    """1/L where L is the largest eigenvalue of basis @ basis.T."""
    gram = basis @ basis.T
    lmax = float(np.linalg.eigvalsh(gram)[-1])
    if lmax <= 0.0:
        raise ValueError("basis has zero energy; cannot derive an ISTA step")
    return 1.0 / lmax


@njit(cache=True)
def _nneg_lasso_numba(gram, corr, pixels_sq, lam, step, iters, codes, objectives):
    n, k = codes.shape
    for it in range(iters + 1):
        if it > 0:
            for p in range(n):
                for a in range(k):
                    grad = -corr[p, a]
                    for b in range(k):
                        grad += gram[a, b] * codes[p, b]
                    v = codes[p, a] - step * grad - step * lam
                    codes[p, a] = v if v > 0.0 else 0.0
        total = 0.0
        for p in range(n):
            quad = 0.0
            lin = 0.0
            l1 = 0.0
            for a in range(k):
                lin += corr[p, a] * codes[p, a]
                l1 += codes[p, a]
                for b in range(k):
                    quad += codes[p, a] * gram[a, b] * codes[p, b]
            total += 0.5 * (pixels_sq[p] + quad) - lin + lam * l1
        objectives[it] = total


def _nneg_lasso_numpy(gram, corr, pixels_sq, lam, step, iters, codes, objectives):
    total_sq = float(np.sum(pixels_sq))
    for it in range(iters + 1):
        if it > 0:
            grad = codes @ gram - corr
            codes[:] = np.maximum(0.0, codes - step * grad - step * lam)
        quad = float(np.einsum("pa,ab,pb->", codes, gram, codes))
        lin = float(np.einsum("pa,pa->", corr, codes))
        objectives[it] = 0.5 * (total_sq + quad) - lin + lam * float(codes.sum())


def nneg_lasso_codes(basis, pixels, lam, iters, codes0=None):
    """Solve min_{C>=0} 0.5*||pixels - C @ basis||^2 + lam*sum(C) by ISTA.

    Parameters
    ----------
    basis : (K, C) float64
        Dictionary atoms as rows.
    pixels : (N, C) float64
        One sample per row.
    lam : float
        l1 penalty weight (>= 0).
    iters : int
        Number of ISTA iterations (>= 1).
    codes0 : (N, K) float64, optional
        Warm-start codes; zeros when omitted.

    Returns
    -------
    codes : (N, K) float64, all entries >= 0
    objectives : (iters + 1,) float64
        Total objective before the first step and after each iteration.
        Non-increasing because the step is 1/L of the gradient.
    """
    basis = np.ascontiguousarray(basis, dtype=np.float64)
    pixels = np.ascontiguousarray(pixels, dtype=np.float64)
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if lam < 0.0:
        raise ValueError("lam must be >= 0")
    n = pixels.shape[0]
    k = basis.shape[0]
    gram = basis @ basis.T
    corr = pixels @ basis.T
    pixels_sq = np.einsum("pc,pc->p", pixels, pixels)
    step = ista_step_size(basis)
    if codes0 is None:
        codes = np.zeros((n, k), dtype=np.float64)
    else:
        codes = np.array(codes0, dtype=np.float64, copy=True)
    objectives = np.empty(iters + 1, dtype=np.float64)
    if USE_NUMBA:
        _nneg_lasso_numba(gram, corr, pixels_sq, lam, step, iters, codes, objectives)
    else:
        _nneg_lasso_numpy(gram, corr, pixels_sq, lam, step, iters, codes, objectives)
    return codes, objectives


# ---------------------------------------------------------------------------
# 3x3 same-padding convolution (forward and both backward passes)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _conv3x3_fwd_numba(x, kern, bias, out):
    bsz, cin, h, w = x.shape
    cout = kern.shape[0]
    for b in range(bsz):
        for o in range(cout):
            for i in range(h):
                for j in range(w):
                    acc = bias[o]
                    for c in range(cin):
                        for u in range(3):
                            ii = i + u - 1
                            if ii < 0 or ii >= h:
                                continue
                            for v in range(3):
                                jj = j + v - 1
                                if 0 <= jj < w:
                                    acc += kern[o, c, u, v] * x[b, c, ii, jj]
                    out[b, o, i, j] = acc


@njit(cache=True)
def _conv3x3_bwd_input_numba(dy, kern, dx):
    bsz, cout, h, w = dy.shape
    cin = kern.shape[1]
    for b in range(bsz):
        for o in range(cout):
            for i in range(h):
                for j in range(w):
                    g = dy[b, o, i, j]
                    for c in range(cin):
                        for u in range(3):
                            ii = i + u - 1
                            if ii < 0 or ii >= h:
                                continue
                            for v in range(3):
                                jj = j + v - 1
                                if 0 <= jj < w:
                                    dx[b, c, ii, jj] += kern[o, c, u, v] * g


@njit(cache=True)
def _conv3x3_bwd_kernel_numba(x, dy, dk, db):
    bsz, cin, h, w = x.shape
    cout = dy.shape[1]
    for b in range(bsz):
        for o in range(cout):
            for i in range(h):
                for j in range(w):
                    g = dy[b, o, i, j]
                    db[o] += g
                    for c in range(cin):
                        for u in range(3):
                            ii = i + u - 1
                            if ii < 0 or ii >= h:
                                continue
                            for v in range(3):
                                jj = j + v - 1
                                if 0 <= jj < w:
                                    dk[o, c, u, v] += x[b, c, ii, jj] * g


def _conv3x3_fwd_numpy(x, kern, bias):
    bsz, cin, h, w = x.shape
    xp = np.zeros((bsz, cin, h + 2, w + 2), dtype=x.dtype)
    xp[:, :, 1:-1, 1:-1] = x
    out = np.tile(bias[None, :, None, None], (bsz, 1, h, w)).astype(x.dtype)
    for u in range(3):
        for v in range(3):
            out += np.einsum("oc,bcij->boij", kern[:, :, u, v], xp[:, :, u:u + h, v:v + w])
    return out


def _conv3x3_bwd_input_numpy(dy, kern, shape):
    bsz, cin, h, w = shape
    dxp = np.zeros((bsz, cin, h + 2, w + 2), dtype=dy.dtype)
    for u in range(3):
        for v in range(3):
            dxp[:, :, u:u + h, v:v + w] += np.einsum("oc,boij->bcij", kern[:, :, u, v], dy)
    return dxp[:, :, 1:-1, 1:-1]


def _conv3x3_bwd_kernel_numpy(x, dy):
    bsz, cin, h, w = x.shape
    cout = dy.shape[1]
    xp = np.zeros((bsz, cin, h + 2, w + 2), dtype=x.dtype)
    xp[:, :, 1:-1, 1:-1] = x
    dk = np.empty((cout, cin, 3, 3), dtype=x.dtype)
    for u in range(3):
        for v in range(3):
            dk[:, :, u, v] = np.einsum("boij,bcij->oc", dy, xp[:, :, u:u + h, v:v + w])
    db = dy.sum(axis=(0, 2, 3))
    return dk, db


def conv3x3_forward(x, kern, bias):
    """Zero-padded 3x3 convolution. x: (B,C,H,W), kern: (O,C,3,3) -> (B,O,H,W)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    kern = np.ascontiguousarray(kern, dtype=np.float64)
    bias = np.ascontiguousarray(bias, dtype=np.float64)
    if USE_NUMBA:
        out = np.empty((x.shape[0], kern.shape[0], x.shape[2], x.shape[3]), dtype=np.float64)
        _conv3x3_fwd_numba(x, kern, bias, out)
        return out
    return _conv3x3_fwd_numpy(x, kern, bias)


def conv3x3_backward_input(dy, kern, input_shape):
    """Gradient of conv3x3_forward w.r.t. its input."""
    dy = np.ascontiguousarray(dy, dtype=np.float64)
    kern = np.ascontiguousarray(kern, dtype=np.float64)
    if USE_NUMBA:
        dx = np.zeros(input_shape, dtype=np.float64)
        _conv3x3_bwd_input_numba(dy, kern, dx)
        return dx
    return _conv3x3_bwd_input_numpy(dy, kern, input_shape)


def conv3x3_backward_kernel(x, dy):
    """Gradients of conv3x3_forward w.r.t. kernel and bias."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    dy = np.ascontiguousarray(dy, dtype=np.float64)
    if USE_NUMBA:
        dk = np.zeros((dy.shape[1], x.shape[1], 3, 3), dtype=np.float64)
        db = np.zeros(dy.shape[1], dtype=np.float64)
        _conv3x3_bwd_kernel_numba(x, dy, dk, db)
        return dk, db
    return _conv3x3_bwd_kernel_numpy(x, dy)
