"""Independent brute-force oracles used to freeze expected test values.

Everything in here is deliberately written as plain loops over numpy
scalars so it shares no code path with the library implementations.
"""

import numpy as np


def loop_matmul(a, b):
    a, b = np.asarray(a), np.asarray(b)
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def loop_softmax_rows(x):
    x = np.asarray(x)
    out = np.zeros_like(x)
    for i in range(x.shape[0]):
        row = np.exp(x[i] - x[i].max())
        out[i] = row / row.sum()
    return out


def loop_conv_same(x, kernel, dims=None):
    """Direct-sum same-padded correlation; kernel rank == len(dims) or x.ndim."""
    x, kernel = np.asarray(x), np.asarray(kernel)
    if dims is None:
        dims = tuple(range(x.ndim))
    per_channel = kernel.ndim == x.ndim
    extents = [kernel.shape[d] for d in dims] if per_channel else list(kernel.shape)
    out = np.zeros_like(x, dtype=np.float64)
    for idx in np.ndindex(*x.shape):
        acc = 0.0
        for offsets in np.ndindex(*extents):
            src = list(idx)
            ok = True
            for d, off, ext in zip(dims, offsets, extents):
                src[d] = idx[d] + off - (ext - 1) // 2
                if not 0 <= src[d] < x.shape[d]:
                    ok = False
                    break
            if not ok:
                continue
            if per_channel:
                kidx = list(idx)
                for d, off in zip(dims, offsets):
                    kidx[d] = off
                acc += x[tuple(src)] * kernel[tuple(kidx)]
            else:
                acc += x[tuple(src)] * kernel[offsets]
        out[idx] = acc
    return out


def loop_pool_then_interp(values, window, stride, frames):
    """Mean pooling over sliding windows, then linear interpolation back."""
    values = np.asarray(values)
    pooled = []
    start = 0
    while start + window <= values.shape[0]:
        pooled.append(values[start : start + window].mean(axis=0))
        start += stride
    pooled = np.stack(pooled, axis=0)
    n = pooled.shape[0]
    if n == frames:
        return pooled
    out = np.zeros((frames, values.shape[1]))
    for j in range(frames):
        if n == 1:
            out[j] = pooled[0]
            continue
        pos = j * (n - 1) / (frames - 1)
        lo = int(np.floor(pos))
        hi = min(lo + 1, n - 1)
        frac = pos - lo
        out[j] = pooled[lo] * (1 - frac) + pooled[hi] * frac
    return out


def loop_mlp_two_layer(x, w1, b1, w2, b2):
    x = np.asarray(x)
    out = np.zeros((x.shape[0], w2.shape[1]))
    for i in range(x.shape[0]):
        hidden = np.maximum(0.0, x[i] @ w1 + b1)
        out[i] = hidden @ w2 + b2
    return out


def loop_separable_context(x, depthwise, dw_bias, pointwise, pw_bias):
    """Depthwise temporal filter then pointwise projection, per frame."""
    x = np.asarray(x)
    frames, d = x.shape
    width = depthwise.shape[0]
    half = (width - 1) // 2
    filtered = np.zeros_like(x)
    for t in range(frames):
        for c in range(d):
            acc = 0.0
            for j in range(width):
                src = t + j - half
                if 0 <= src < frames:
                    acc += x[src, c] * depthwise[j, c]
            filtered[t, c] = acc + dw_bias[c]
    rows = np.zeros((frames, frames))
    for t in range(frames):
        for o in range(frames):
            acc = 0.0
            for c in range(d):
                acc += filtered[t, c] * pointwise[c, o]
            rows[t, o] = acc + pw_bias[o]
    return rows


def loop_mse(pred, truth):
    pred, truth = np.asarray(pred), np.asarray(truth)
    total = 0.0
    for i in range(pred.shape[0]):
        acc = 0.0
        for t in range(pred.shape[1]):
            diff = pred[i, t] - truth[i, t]
            acc += diff * diff
        total += acc
    return total / pred.shape[0]


def adam_scalar_recurrence(grad_fn, w0, lr, steps, beta1=0.9, beta2=0.999, eps=1e-8):
    """Reference Adam on a single scalar, written as the bare recurrence."""
    w, m, v = w0, 0.0, 0.0
    for t in range(1, steps + 1):
        g = grad_fn(w)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        w = w - lr * m_hat / (np.sqrt(v_hat) + eps)
    return w


def finite_difference(f, params, rng, samples_per_param=4, h=1e-6):
    """Central finite differences of a scalar function at random coordinates.

    Yields (param_index, flat_index, numeric_gradient) triples; mutates and
    restores param data in place.
    """
    for pi, p in enumerate(params):
        flat = p.data.ravel()
        count = min(samples_per_param, flat.size)
        for idx in rng.choice(flat.size, size=count, replace=False):
            old = flat[idx]
            step = h * max(1.0, abs(old))
            flat[idx] = old + step
            fp = f()
            flat[idx] = old - step
            fm = f()
            flat[idx] = old
            yield pi, int(idx), (fp - fm) / (2 * step)


def relative_error(a, b):
    return abs(a - b) / max(1e-8, abs(a) + abs(b))
