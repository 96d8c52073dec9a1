"""Structured differentiable ops: conv, pooling, sampling, norm, losses.

Image tensors are NHWC; convolution kernels are (kh, kw, Cin, Cout). Stride
is always 1 for conv (downsampling is done by pooling), which keeps the
backward pass expressible as another convolution.
"""

import numpy as np

from .errors import ShapeError
from .tensor import Tensor, _record, as_tensor, matmul, add


def linear(x, w, b=None):
    """x @ w (+ b). `w` is (in, out); `b` broadcasts over leading axes."""
    y = matmul(x, w)
    if b is not None:
        y = add(y, b)
    return y


def _conv_forward(xp, w):
    kh, kw = w.shape[:2]
    ho = xp.shape[1] - kh + 1
    wo = xp.shape[2] - kw + 1
    y = np.zeros((xp.shape[0], ho, wo, w.shape[3]), dtype=xp.dtype)
    for ki in range(kh):
        for kj in range(kw):
            y += xp[:, ki : ki + ho, kj : kj + wo, :] @ w[ki, kj]
    return y


def conv2d(x, w, b=None, padding=(0, 0)):
    """2D convolution, NHWC, stride 1.

    x: (N, H, W, Cin); w: (kh, kw, Cin, Cout); b: (Cout,) or None.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects 4D x and w, got {tuple(x.shape)} and {tuple(w.shape)}")
    if x.shape[3] != w.shape[2]:
        raise ShapeError(f"conv2d channel mismatch: input {tuple(x.shape)} vs kernel {tuple(w.shape)}")
    ph, pw = padding
    kh, kw = w.shape[:2]
    if x.shape[1] + 2 * ph < kh or x.shape[2] + 2 * pw < kw:
        raise ShapeError(f"conv2d kernel {kh}x{kw} larger than padded input {tuple(x.shape)}")
    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    y = _conv_forward(xp, w.data)
    if b is not None:
        b = as_tensor(b)
        y = y + b.data
    out = Tensor(y)
    n, h, wdt = x.shape[0], x.shape[1], x.shape[2]
    ho, wo = y.shape[1], y.shape[2]

    def bwd(g):
        gx = gw = gb = None
        if b is not None and b.requires_grad:
            gb = g.sum(axis=(0, 1, 2))
        if w.requires_grad:
            gw = np.empty_like(w.data)
            for ki in range(kh):
                for kj in range(kw):
                    gw[ki, kj] = np.tensordot(
                        xp[:, ki : ki + ho, kj : kj + wo, :], g, axes=([0, 1, 2], [0, 1, 2])
                    )
        if x.requires_grad:
            # gradient w.r.t. input is a full correlation: conv of the padded
            # output gradient with the kernel flipped and channels swapped
            gp = np.pad(g, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1), (0, 0)))
            wf = w.data[::-1, ::-1].transpose(0, 1, 3, 2)
            gxp = _conv_forward(gp, np.ascontiguousarray(wf))
            gx = gxp[:, ph : ph + h, pw : pw + wdt, :]
        inputs_g = (gx, gw) if b is None else (gx, gw, gb)
        return inputs_g

    inputs = (x, w) if b is None else (x, w, b)
    return _record(out, inputs, bwd)


def max_pool2d(x, kernel):
    """Max pooling with stride == kernel; spatial dims must divide evenly."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"max_pool2d expects NHWC input, got {tuple(x.shape)}")
    kh, kw = kernel
    n, h, w, c = x.shape
    if h % kh or w % kw:
        raise ShapeError(f"max_pool2d: input {h}x{w} not divisible by kernel {kh}x{kw}")
    ho, wo = h // kh, w // kw
    windows = (
        x.data.reshape(n, ho, kh, wo, kw, c)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(n, ho, wo, c, kh * kw)
    )
    idx = windows.argmax(axis=-1)
    out = Tensor(np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0])

    def bwd(g):
        gw = np.zeros((n, ho, wo, c, kh * kw), dtype=g.dtype)
        np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
        gx = (
            gw.reshape(n, ho, wo, c, kh, kw)
            .transpose(0, 1, 4, 2, 5, 3)
            .reshape(n, h, w, c)
        )
        return (gx,)

    return _record(out, (x,), bwd)


def bilinear_sample(img, grid):
    """Sample `img` at normalized grid coordinates with zero padding outside.

    img: (N, H, W, C); grid: (N, Ho, Wo, 2) with (x, y) in [-1, 1]^2 mapping
    to pixel centers ((x+1)/2*(W-1), (y+1)/2*(H-1)). Points outside the
    source read as zero. Differentiable in both the image and the grid.
    """
    img, grid = as_tensor(img), as_tensor(grid)
    if img.ndim != 4 or grid.ndim != 4 or grid.shape[-1] != 2:
        raise ShapeError(
            f"bilinear_sample expects img (N,H,W,C) and grid (N,Ho,Wo,2), "
            f"got {tuple(img.shape)} and {tuple(grid.shape)}"
        )
    if img.shape[0] != grid.shape[0]:
        raise ShapeError(f"batch mismatch: {tuple(img.shape)} vs {tuple(grid.shape)}")
    n, h, w, c = img.shape
    px = (grid.data[..., 0] + 1) * 0.5 * (w - 1)
    py = (grid.data[..., 1] + 1) * 0.5 * (h - 1)
    x0 = np.floor(px)
    y0 = np.floor(py)
    fx = (px - x0).astype(img.dtype)[..., None]
    fy = (py - y0).astype(img.dtype)[..., None]
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    ns = np.arange(n).reshape(n, 1, 1)

    corners = []
    for dy, dx in ((0, 0), (0, 1), (1, 0), (1, 1)):
        xc, yc = x0 + dx, y0 + dy
        valid = ((xc >= 0) & (xc < w) & (yc >= 0) & (yc < h)).astype(img.dtype)[..., None]
        v = img.data[ns, yc.clip(0, h - 1), xc.clip(0, w - 1), :] * valid
        wgt = (fy if dy else 1 - fy) * (fx if dx else 1 - fx)
        corners.append((xc, yc, valid, v, wgt))
    out = Tensor(sum(v * wgt for _, _, _, v, wgt in corners))

    def bwd(g):
        gi = gg = None
        if img.requires_grad:
            gi = np.zeros_like(img.data)
            flat = gi.reshape(n * h * w, c)
            for xc, yc, valid, _, wgt in corners:
                lin = (ns * h + yc.clip(0, h - 1)) * w + xc.clip(0, w - 1)
                np.add.at(flat, lin.ravel(), (g * wgt * valid).reshape(-1, c))
        if grid.requires_grad:
            (_, _, va, v00, _), (_, _, vb, v01, _), (_, _, vc_, v10, _), (_, _, vd, v11, _) = corners
            dpx = ((1 - fy) * (v01 - v00) + fy * (v11 - v10)) * g
            dpy = ((1 - fx) * (v10 - v00) + fx * (v11 - v01)) * g
            gg = np.stack(
                [dpx.sum(-1) * 0.5 * (w - 1), dpy.sum(-1) * 0.5 * (h - 1)], axis=-1
            ).astype(grid.dtype)
        return gi, gg

    return _record(out, (img, grid), bwd)


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    if x.shape[-1] != gain.shape[-1] or x.shape[-1] != bias.shape[-1]:
        raise ShapeError(
            f"layer_norm affine shape {tuple(gain.shape)} does not match input {tuple(x.shape)}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gain.data + bias.data)
    d = x.shape[-1]

    def bwd(g):
        gx = gg = gb = None
        if gain.requires_grad:
            gg = (g * xhat).reshape(-1, d).sum(axis=0)
        if bias.requires_grad:
            gb = g.reshape(-1, d).sum(axis=0)
        if x.requires_grad:
            dxhat = g * gain.data
            gx = inv * (
                dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            )
        return gx, gg, gb

    return _record(out, (x, gain, bias), bwd)


def cross_entropy(logits, targets, ignore_index=None):
    """Mean negative log-likelihood over non-ignored positions.

    logits: (T, C); targets: int array (T,). Positions equal to
    `ignore_index` contribute neither loss nor gradient; if every position
    is ignored the loss is exactly 0 with zero gradient.
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets)
    if logits.ndim != 2 or targets.ndim != 1 or targets.shape[0] != logits.shape[0]:
        raise ShapeError(
            f"cross_entropy expects logits (T,C) and targets (T,), got "
            f"{tuple(logits.shape)} and {tuple(targets.shape)}"
        )
    t, c = logits.shape
    valid = np.ones(t, dtype=bool) if ignore_index is None else targets != ignore_index
    checked = targets[valid]
    if checked.size and (checked.min() < 0 or checked.max() >= c):
        raise IndexError(f"target index out of range [0, {c}): {checked.min()}..{checked.max()}")
    zmax = logits.data.max(axis=1, keepdims=True)
    z = logits.data - zmax
    lse = np.log(np.exp(z).sum(axis=1)) + zmax[:, 0]
    n_valid = int(valid.sum())
    if n_valid:
        safe_t = np.where(valid, targets, 0)
        nll = lse - logits.data[np.arange(t), safe_t]
        loss = float(nll[valid].mean())
    else:
        loss = 0.0
    out = Tensor(np.asarray(loss, dtype=logits.dtype))

    def bwd(g):
        if n_valid == 0:
            return (np.zeros_like(logits.data),)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        safe_t = np.where(valid, targets, 0)
        p[np.arange(t), safe_t] -= 1.0
        p[~valid] = 0.0
        return ((g / n_valid) * p,)

    return _record(out, (logits,), bwd)


def embedding_lookup(table, indices):
    """Gather rows of `table` (V, E) at integer `indices` (any shape)."""
    table = as_tensor(table)
    indices = np.asarray(indices)
    if table.ndim != 2:
        raise ShapeError(f"embedding table must be 2D, got {tuple(table.shape)}")
    if indices.size and (indices.min() < 0 or indices.max() >= table.shape[0]):
        raise IndexError(
            f"embedding index out of range [0, {table.shape[0]}): "
            f"{indices.min()}..{indices.max()}"
        )
    out = Tensor(table.data[indices])

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, indices.ravel(), g.reshape(-1, table.shape[1]))
        return (gt,)

    return _record(out, (table,), bwd)
