"""Dense-matrix reverse-mode differentiation on a linear tape.

Only 2-D float64 tensors. Every operation executes eagerly, records its
backward rule on the tape, and `Tape.backward` replays the records in
exact reverse order. No broadcasting beyond the few shaped ops the model
needs (add_bias, scale_rows); shape mismatches raise immediately.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import ShapeError
from .graphs import SparseAdjacency

SIGMA_FLOOR = 1e-6


class Tensor:
    """A value on the tape: float64 matrix plus same-shape gradient buffer."""

    __slots__ = ("values", "grad", "tape_id", "_tape")

    def __init__(self, values, tape, tape_id):
        v = np.ascontiguousarray(values, dtype=np.float64)
        if v.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {v.shape}")
        self.values = v
        self.grad = np.zeros_like(v)
        self.tape_id = tape_id
        self._tape = tape

    @property
    def shape(self):
        return self.values.shape

    @property
    def tape(self):
        return self._tape

    def item(self):
        if self.values.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.values[0, 0])

    def __repr__(self):
        return f"Tensor(id={self.tape_id}, shape={self.shape})"


class Tape:
    """Ordered record of operations; replayed backwards for gradients."""

    def __init__(self):
        self._records = []  # (op_name, input_ids, output_ids, backward_fn)
        self._next_id = 0
        self.sigma_clamp_count = 0

    def tensor(self, values) -> Tensor:
        """Create a leaf tensor (parameter or constant). Records nothing."""
        t = Tensor(values, self, self._next_id)
        self._next_id += 1
        return t

    def _out(self, values) -> Tensor:
        return self.tensor(values)

    def _record(self, name, inputs, outputs, backward_fn):
        self._records.append((name, tuple(t.tape_id for t in inputs),
                              tuple(t.tape_id for t in outputs), backward_fn))

    def backward(self, loss: Tensor):
        """Populate .grad of every recorded tensor with d(loss)/d(tensor)."""
        if loss._tape is not self:
            raise ValueError("loss tensor belongs to a different tape")
        if loss.shape != (1, 1):
            raise ShapeError(f"backward needs a scalar 1x1 loss, got {loss.shape}")
        loss.grad[...] = 1.0
        for _, _, _, bwd in reversed(self._records):
            bwd()

    def to_json(self) -> str:
        """Dump the recorded operation list for debugging."""
        return json.dumps(
            [{"op": name, "inputs": list(i), "outputs": list(o)}
             for name, i, o, _ in self._records],
            indent=2,
        )


def _same_tape(*tensors):
    tape = tensors[0]._tape
    for t in tensors[1:]:
        if t._tape is not tape:
            raise ValueError("tensors belong to different tapes")
    return tape


def _check_same_shape(a, b, op):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(n, k) @ (k, m) -> (n, m)."""
    tape = _same_tape(a, b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims {a.shape} @ {b.shape}")
    out = tape._out(a.values @ b.values)

    def bwd():
        a.grad += out.grad @ b.values.T
        b.grad += a.values.T @ out.grad

    tape._record("matmul", (a, b), (out,), bwd)
    return out


def spmm(adj: SparseAdjacency, b: Tensor) -> Tensor:
    """Sparse (N, N) times dense (N, d). The sparse side is constant."""
    tape = b._tape
    if adj.num_nodes != b.shape[0]:
        raise ShapeError(f"spmm: adjacency is {adj.num_nodes}x{adj.num_nodes}, dense is {b.shape}")
    csr = adj.to_scipy()
    out = tape._out(np.asarray(csr @ b.values))

    def bwd():
        # adjacency is symmetric, so A^T grad = A grad
        b.grad += np.asarray(csr @ out.grad)

    tape._record("spmm", (b,), (out,), bwd)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    tape = _same_tape(a, b)
    _check_same_shape(a, b, "add")
    out = tape._out(a.values + b.values)

    def bwd():
        a.grad += out.grad
        b.grad += out.grad

    tape._record("add", (a, b), (out,), bwd)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    tape = _same_tape(a, b)
    _check_same_shape(a, b, "sub")
    out = tape._out(a.values - b.values)

    def bwd():
        a.grad += out.grad
        b.grad -= out.grad

    tape._record("sub", (a, b), (out,), bwd)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product."""
    tape = _same_tape(a, b)
    _check_same_shape(a, b, "mul")
    out = tape._out(a.values * b.values)

    def bwd():
        a.grad += out.grad * b.values
        b.grad += out.grad * a.values

    tape._record("mul", (a, b), (out,), bwd)
    return out


def div(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise quotient."""
    tape = _same_tape(a, b)
    _check_same_shape(a, b, "div")
    out = tape._out(a.values / b.values)

    def bwd():
        a.grad += out.grad / b.values
        b.grad -= out.grad * a.values / (b.values * b.values)

    tape._record("div", (a, b), (out,), bwd)
    return out


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python scalar constant."""
    tape = a._tape
    c = float(c)
    out = tape._out(a.values * c)

    def bwd():
        a.grad += out.grad * c

    tape._record("scale", (a,), (out,), bwd)
    return out


def add_scalar(a: Tensor, c: float) -> Tensor:
    tape = a._tape
    out = tape._out(a.values + float(c))

    def bwd():
        a.grad += out.grad

    tape._record("add_scalar", (a,), (out,), bwd)
    return out


def relu(a: Tensor) -> Tensor:
    tape = a._tape
    out = tape._out(np.maximum(a.values, 0.0))

    def bwd():
        a.grad += out.grad * (a.values > 0.0)

    tape._record("relu", (a,), (out,), bwd)
    return out


def exp_elem(a: Tensor) -> Tensor:
    tape = a._tape
    out = tape._out(np.exp(a.values))

    def bwd():
        a.grad += out.grad * out.values

    tape._record("exp", (a,), (out,), bwd)
    return out


def log_elem(a: Tensor) -> Tensor:
    tape = a._tape
    out = tape._out(np.log(a.values))

    def bwd():
        a.grad += out.grad / a.values

    tape._record("log", (a,), (out,), bwd)
    return out


def sqrt_elem(a: Tensor) -> Tensor:
    tape = a._tape
    out = tape._out(np.sqrt(a.values))

    def bwd():
        a.grad += out.grad * 0.5 / out.values

    tape._record("sqrt", (a,), (out,), bwd)
    return out


def clamp_min(a: Tensor, floor: float, track: bool = True) -> Tensor:
    """max(a, floor) elementwise; gradient passes only where a > floor.

    track=True adds clamp events to tape.sigma_clamp_count (the counter
    exists to surface degenerate sigmas fed to the divergence terms).
    """
    tape = a._tape
    floor = float(floor)
    clamped = a.values < floor
    if track:
        tape.sigma_clamp_count += int(clamped.sum())
    out = tape._out(np.maximum(a.values, floor))

    def bwd():
        a.grad += out.grad * ~clamped

    tape._record("clamp_min", (a,), (out,), bwd)
    return out


def add_bias(a: Tensor, b: Tensor) -> Tensor:
    """Add a (1, d) bias row to every row of (n, d)."""
    tape = _same_tape(a, b)
    if b.shape != (1, a.shape[1]):
        raise ShapeError(f"add_bias: bias {b.shape} for matrix {a.shape}")
    out = tape._out(a.values + b.values)

    def bwd():
        a.grad += out.grad
        b.grad += out.grad.sum(axis=0, keepdims=True)

    tape._record("add_bias", (a, b), (out,), bwd)
    return out


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    """Horizontal concatenation (n, p) ++ (n, q) -> (n, p + q)."""
    tape = _same_tape(a, b)
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_cols: row mismatch {a.shape} vs {b.shape}")
    out = tape._out(np.concatenate([a.values, b.values], axis=1))
    p = a.shape[1]

    def bwd():
        a.grad += out.grad[:, :p]
        b.grad += out.grad[:, p:]

    tape._record("concat_cols", (a, b), (out,), bwd)
    return out


def split_cols(a: Tensor, at: int) -> tuple[Tensor, Tensor]:
    """Exact inverse of concat_cols: (n, w) -> (n, at), (n, w - at)."""
    tape = a._tape
    if not 0 < at < a.shape[1]:
        raise ShapeError(f"split_cols: at={at} outside (0, {a.shape[1]})")
    left = tape._out(a.values[:, :at].copy())
    right = tape._out(a.values[:, at:].copy())

    def bwd():
        a.grad[:, :at] += left.grad
        a.grad[:, at:] += right.grad

    tape._record("split_cols", (a,), (left, right), bwd)
    return left, right


def row_sum(a: Tensor) -> Tensor:
    """(n, d) -> (n, 1) sum over columns."""
    tape = a._tape
    out = tape._out(a.values.sum(axis=1, keepdims=True))

    def bwd():
        a.grad += out.grad  # broadcasts (n,1) over columns

    tape._record("row_sum", (a,), (out,), bwd)
    return out


def sum_all(a: Tensor) -> Tensor:
    """(n, d) -> (1, 1) total sum."""
    tape = a._tape
    out = tape._out(np.array([[a.values.sum()]]))

    def bwd():
        a.grad += out.grad[0, 0]

    tape._record("sum_all", (a,), (out,), bwd)
    return out


def scale_rows(a: Tensor, s: Tensor) -> Tensor:
    """Row-wise scaling: out[i, :] = a[i, :] * s[i, 0] with s of shape (n, 1)."""
    tape = _same_tape(a, s)
    if s.shape != (a.shape[0], 1):
        raise ShapeError(f"scale_rows: scaler {s.shape} for matrix {a.shape}")
    out = tape._out(a.values * s.values)

    def bwd():
        a.grad += out.grad * s.values
        s.grad += (out.grad * a.values).sum(axis=1, keepdims=True)

    tape._record("scale_rows", (a, s), (out,), bwd)
    return out


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax, max-shifted for stability. Rows sum to 1."""
    tape = a._tape
    shifted = a.values - a.values.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)
    out = tape._out(p)

    def bwd():
        dot = (out.grad * out.values).sum(axis=1, keepdims=True)
        a.grad += out.values * (out.grad - dot)

    tape._record("softmax_rows", (a,), (out,), bwd)
    return out


# ---------------------------------------------------------------------------
# neighborhood statistics


def flatten_neighbor_lists(neighbor_lists):
    """Precompute flat (member, owner) index arrays plus per-node degrees."""
    degrees = np.array([len(nb) for nb in neighbor_lists], dtype=np.int64)
    if degrees.sum():
        idx = np.concatenate([np.asarray(nb, dtype=np.int64) for nb in neighbor_lists if len(nb)])
    else:
        idx = np.zeros(0, dtype=np.int64)
    seg = np.repeat(np.arange(len(neighbor_lists), dtype=np.int64), degrees)
    return idx, seg, degrees


def segment_stats_values(values, idx, seg, degrees):
    """Per-node mean and population std of neighbor rows (plain arrays).

    Degree-0 rows come back as zeros; callers mask them out.
    """
    n, d = len(degrees), values.shape[1]
    sums = np.zeros((n, d))
    sq_sums = np.zeros((n, d))
    np.add.at(sums, seg, values[idx])
    np.add.at(sq_sums, seg, values[idx] ** 2)
    safe_deg = np.maximum(degrees, 1).astype(np.float64)[:, None]
    mu = sums / safe_deg
    var = np.maximum(sq_sums / safe_deg - mu * mu, 0.0)
    sigma = np.sqrt(var)
    mask = degrees > 0
    mu[~mask] = 0.0
    sigma[~mask] = 0.0
    return mu, sigma, mask


def segment_mean_std(h: Tensor, neighbor_lists) -> tuple[Tensor, Tensor, np.ndarray]:
    """Per node v: mean and population std of rows {h[u] : u in N(v)}.

    Returns (mu, sigma, degrees); degree-0 rows are zero and flagged by
    degrees == 0. A single neighbor yields sigma = 0 (floored downstream).
    The sigma gradient is zero wherever sigma == 0 (subgradient choice).
    """
    tape = h._tape
    idx, seg, degrees = flatten_neighbor_lists(neighbor_lists)
    if len(neighbor_lists) and idx.size and idx.max() >= h.shape[0]:
        raise ShapeError(f"neighbor index {idx.max()} >= {h.shape[0]} rows")
    mu_v, sigma_v, _ = segment_stats_values(h.values, idx, seg, degrees)
    mu = tape._out(mu_v)
    sigma = tape._out(sigma_v)
    inv_deg = 1.0 / np.maximum(degrees, 1).astype(np.float64)

    def bwd():
        if idx.size == 0:
            return
        centered = h.values[idx] - mu.values[seg]
        sig = sigma.values[seg]
        sig_safe = np.where(sig > 0.0, sig, 1.0)
        contrib = mu.grad[seg] * inv_deg[seg, None]
        contrib += np.where(sig > 0.0, sigma.grad[seg] * centered / sig_safe, 0.0) * inv_deg[seg, None]
        np.add.at(h.grad, idx, contrib)

    tape._record("segment_mean_std", (h,), (mu, sigma), bwd)
    return mu, sigma, degrees


def gaussian_kl(mu1: Tensor, sigma1: Tensor, mu2: Tensor, sigma2: Tensor,
                floor: float = SIGMA_FLOOR) -> Tensor:
    """Diagonal-Gaussian KL(N(mu1, sigma1^2) || N(mu2, sigma2^2)) per row.

    sum_k [ ln(s2/s1) + (s1^2 + (m1-m2)^2) / (2 s2^2) - 1/2 ], shape (n, 1).
    Sigmas below `floor` are clamped (counted on tape.sigma_clamp_count).
    """
    for t, name in ((sigma1, "sigma1"), (mu2, "mu2"), (sigma2, "sigma2")):
        _check_same_shape(mu1, t, f"gaussian_kl/{name}")
    k = mu1.shape[1]
    s1 = clamp_min(sigma1, floor)
    s2 = clamp_min(sigma2, floor)
    log_term = log_elem(div(s2, s1))
    diff = sub(mu1, mu2)
    quad = div(add(mul(s1, s1), mul(diff, diff)), scale(mul(s2, s2), 2.0))
    return add_scalar(row_sum(add(log_term, quad)), -0.5 * k)


def finite_difference_check(loss_fn, params, grads, step=1e-5, rel_tol=1e-4,
                            names=None):
    """Central-finite-difference check of tape gradients.

    loss_fn() -> float re-evaluates the scalar loss from the current
    contents of `params` (a list of mutable arrays). `grads` holds the
    tape gradient for each array. Perturbs every element in place.
    Returns the worst relative error; raises AssertionError past rel_tol.
    """
    worst = 0.0
    for pi, (p, g) in enumerate(zip(params, grads)):
        flat = p.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss_fn()
            flat[i] = orig - step
            down = loss_fn()
            flat[i] = orig
            fd = (up - down) / (2.0 * step)
            denom = max(abs(fd), abs(gflat[i]), 1e-8)
            err = abs(fd - gflat[i]) / denom
            worst = max(worst, err)
            if err > rel_tol:
                label = names[pi] if names else f"param {pi}"
                raise AssertionError(
                    f"gradient mismatch in {label}[{i}]: tape={gflat[i]:.8g} "
                    f"fd={fd:.8g} rel_err={err:.3g}"
                )
    return worst
