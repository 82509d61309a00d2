"""Reverse-mode automatic differentiation over 2-D float64 arrays.

A small tape-based engine sized for stacked LSTM sequence models. Forward
primitives append closure records to a Tape; ``Tape.backward`` replays them
in reverse order and accumulates gradients into Parameters, optionally
restricted to a named scope. A tape is built per training step and cleared
by its backward pass; there is no graph reuse.

Vectors are column matrices of shape (n, 1). Everything is float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ShapeError, TapeError


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp of a non-positive argument never overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def as_matrix(data) -> np.ndarray:
    """Coerce to a 2-D float64 array; 1-D input becomes a column vector."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ShapeError(f"expected a vector or matrix, got ndim={arr.ndim}")
    return arr


class Parameter:
    """Named trainable matrix paired with a gradient accumulator."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value) -> None:
        self.name = name
        self.value = np.ascontiguousarray(as_matrix(value))
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class Tensor:
    """A node of the tape graph holding a 2-D float64 array.

    ``adj`` is the adjoint buffer filled transiently during backward;
    ``param`` ties leaf nodes back to their Parameter.
    """

    __slots__ = ("data", "adj", "param")

    def __init__(self, data: np.ndarray, param: Parameter | None = None) -> None:
        self.data = data
        self.adj: np.ndarray | None = None
        self.param = param

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise ShapeError(f"item() needs a scalar, got shape {self.data.shape}")
        return float(self.data[0, 0])


def _accum(t: Tensor, g: np.ndarray) -> None:
    # copy on first write: g may alias an upstream adjoint buffer or a view
    if t.adj is None:
        t.adj = g.copy()
    else:
        t.adj += g


class Tape:
    """Ordered record of forward computations enabling one backward pass.

    Records are appended in forward (topological) order, so replaying them
    in reverse visits every node after all of its consumers.
    """

    def __init__(self) -> None:
        self._records: list = []  # (kind, out tensor, backward closure)
        self._leaves: dict[str, Tensor] = {}
        self._consumed = False

    def __len__(self) -> int:
        return len(self._records)

    # ---- leaves ----

    def param(self, p: Parameter) -> Tensor:
        """Leaf view of a Parameter; memoized per tape so gradients pool."""
        leaf = self._leaves.get(p.name)
        if leaf is None:
            leaf = Tensor(p.value, param=p)
            self._leaves[p.name] = leaf
        return leaf

    def const(self, data) -> Tensor:
        """Leaf holding fixed values; receives no gradient."""
        return Tensor(as_matrix(data))

    # ---- primitives ----

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.data.shape[1] != b.data.shape[0]:
            raise ShapeError(
                f"matmul: inner dimensions differ for {a.data.shape} @ {b.data.shape}"
            )
        out = Tensor(a.data @ b.data)

        def fn(g, a=a, b=b):
            _accum(a, g @ b.data.T)
            _accum(b, a.data.T @ g)

        self._records.append(("matmul", out, fn))
        return out

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        if a.data.shape != b.data.shape:
            raise ShapeError(f"add: shapes {a.data.shape} and {b.data.shape} differ")
        out = Tensor(a.data + b.data)

        def fn(g, a=a, b=b):
            _accum(a, g)
            _accum(b, g)

        self._records.append(("add", out, fn))
        return out

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        """Elementwise product."""
        if a.data.shape != b.data.shape:
            raise ShapeError(
                f"elementwise-mul: shapes {a.data.shape} and {b.data.shape} differ"
            )
        out = Tensor(a.data * b.data)

        def fn(g, a=a, b=b):
            _accum(a, g * b.data)
            _accum(b, g * a.data)

        self._records.append(("elementwise-mul", out, fn))
        return out

    def sigmoid(self, a: Tensor) -> Tensor:
        out = Tensor(_sigmoid(a.data))

        def fn(g, a=a, out=out):
            s = out.data
            _accum(a, g * (s * (1.0 - s)))

        self._records.append(("sigmoid", out, fn))
        return out

    def tanh(self, a: Tensor) -> Tensor:
        out = Tensor(np.tanh(a.data))

        def fn(g, a=a, out=out):
            _accum(a, g * (1.0 - out.data * out.data))

        self._records.append(("tanh", out, fn))
        return out

    def concat(self, parts: list[Tensor]) -> Tensor:
        """Stack column vectors (or equal-width blocks) along the row axis."""
        parts = list(parts)
        if not parts:
            raise ShapeError("concat: need at least one input")
        cols = parts[0].data.shape[1]
        for p in parts[1:]:
            if p.data.shape[1] != cols:
                raise ShapeError(
                    f"concat: column counts differ, {parts[0].data.shape} vs {p.data.shape}"
                )
        out = Tensor(np.concatenate([p.data for p in parts], axis=0))
        sizes = [p.data.shape[0] for p in parts]

        def fn(g, parts=parts, sizes=sizes):
            off = 0
            for p, n in zip(parts, sizes):
                _accum(p, g[off : off + n])
                off += n

        self._records.append(("concat", out, fn))
        return out

    def affine(self, w: Tensor, x: Tensor, b: Tensor) -> Tensor:
        """w @ x + b for a column vector x."""
        if x.data.shape[1] != 1:
            raise ShapeError(f"affine: x must be a column vector, got {x.data.shape}")
        if w.data.shape[1] != x.data.shape[0]:
            raise ShapeError(
                f"affine: inner dimensions differ for {w.data.shape} @ {x.data.shape}"
            )
        if b.data.shape != (w.data.shape[0], 1):
            raise ShapeError(
                f"affine: bias shape {b.data.shape} does not match output ({w.data.shape[0]}, 1)"
            )
        out = Tensor(w.data @ x.data + b.data)

        def fn(g, w=w, x=x, b=b):
            _accum(w, g @ x.data.T)
            _accum(x, w.data.T @ g)
            _accum(b, g)

        self._records.append(("affine", out, fn))
        return out

    _ARITY = {
        "matmul": 2,
        "add": 2,
        "elementwise-mul": 2,
        "sigmoid": 1,
        "tanh": 1,
        "concat": None,  # variadic
        "affine": 3,
    }

    def apply(self, kind: str, inputs: list[Tensor]) -> Tensor:
        """Dispatch a primitive by name (the uniform op surface)."""
        if kind not in self._ARITY:
            raise ValueError(f"unknown primitive {kind!r}")
        arity = self._ARITY[kind]
        if arity is not None and len(inputs) != arity:
            raise ShapeError(f"{kind}: expected {arity} inputs, got {len(inputs)}")
        if kind == "matmul":
            return self.matmul(*inputs)
        if kind == "add":
            return self.add(*inputs)
        if kind == "elementwise-mul":
            return self.mul(*inputs)
        if kind == "sigmoid":
            return self.sigmoid(*inputs)
        if kind == "tanh":
            return self.tanh(*inputs)
        if kind == "concat":
            return self.concat(inputs)
        return self.affine(*inputs)

    # ---- extras beyond the primitive set ----

    def gate_affine(self, w: Tensor, x: Tensor, u: Tensor, h: Tensor,
                    b: Tensor) -> Tensor:
        """w @ x + u @ h + b in a single record (the LSTM gate pre-activation)."""
        if (w.data.shape[1] != x.data.shape[0] or u.data.shape[1] != h.data.shape[0]
                or x.data.shape[1] != 1 or h.data.shape[1] != 1
                or w.data.shape[0] != u.data.shape[0]
                or b.data.shape != (w.data.shape[0], 1)):
            raise ShapeError(
                f"gate_affine: shapes do not conform: {w.data.shape} @ {x.data.shape} "
                f"+ {u.data.shape} @ {h.data.shape} + {b.data.shape}"
            )
        out = Tensor(w.data @ x.data + u.data @ h.data + b.data)

        def fn(g, w=w, x=x, u=u, h=h, b=b):
            _accum(w, g @ x.data.T)
            _accum(x, w.data.T @ g)
            _accum(u, g @ h.data.T)
            _accum(h, u.data.T @ g)
            _accum(b, g)

        self._records.append(("gate_affine", out, fn))
        return out

    def scale(self, a: Tensor, c: float) -> Tensor:
        """Multiply by a Python constant."""
        c = float(c)
        out = Tensor(a.data * c)

        def fn(g, a=a, c=c):
            _accum(a, g * c)

        self._records.append(("scale", out, fn))
        return out

    def sum(self, a: Tensor) -> Tensor:
        """Total of all entries, as a (1, 1) scalar."""
        out = Tensor(np.array([[a.data.sum()]]))

        def fn(g, a=a):
            _accum(a, np.full(a.data.shape, g[0, 0]))

        self._records.append(("sum", out, fn))
        return out

    def lookup_row(self, m: Tensor, row: int) -> Tensor:
        """Row ``row`` of matrix ``m`` as a column vector (embedding lookup)."""
        n_rows, width = m.data.shape
        if not 0 <= row < n_rows:
            raise ValueError(f"lookup_row: row {row} out of range for {m.data.shape}")
        out = Tensor(m.data[row].reshape(width, 1))

        def fn(g, m=m, row=row):
            if m.adj is None:
                m.adj = np.zeros_like(m.data)
            m.adj[row, :] += g[:, 0]

        self._records.append(("lookup_row", out, fn))
        return out

    def softmax_cross_entropy(self, logits: Tensor, gold: int) -> Tensor:
        """-log softmax(logits)[gold], log-sum-exp stabilized."""
        if logits.data.shape[1] != 1 or logits.data.shape[0] < 2:
            raise ShapeError(
                f"softmax_cross_entropy: need a column of >=2 logits, got {logits.data.shape}"
            )
        n = logits.data.shape[0]
        if not 0 <= gold < n:
            raise ValueError(f"gold label {gold} out of range [0, {n})")
        z = logits.data[:, 0]
        m = z.max()
        e = np.exp(z - m)
        s = e.sum()
        loss = (m + np.log(s)) - z[gold]
        probs = e / s
        out = Tensor(np.array([[loss]]))

        def fn(g, logits=logits, probs=probs, gold=gold):
            d = probs.reshape(-1, 1) * g[0, 0]
            d[gold, 0] -= g[0, 0]
            _accum(logits, d)

        self._records.append(("softmax_cross_entropy", out, fn))
        return out

    def add_n(self, terms: list[Tensor]) -> Tensor:
        """Sum a nonempty list of same-shaped tensors (chained adds)."""
        if not terms:
            raise ShapeError("add_n: need at least one term")
        total = terms[0]
        for t in terms[1:]:
            total = self.add(total, t)
        return total

    # ---- backward ----

    def backward(self, loss: Tensor, scope=None) -> None:
        """Accumulate dLoss/dParam into Parameter grads, then clear the tape.

        ``scope`` is an optional collection of parameter names; gradients of
        parameters outside it are left untouched (the filter applies at
        accumulation time, so the forward pass is scope-independent).
        """
        if self._consumed:
            raise TapeError("backward already called on this tape")
        if loss.data.shape != (1, 1):
            raise ShapeError(f"backward: loss must be scalar, got {loss.data.shape}")
        self._consumed = True
        if scope is not None and not isinstance(scope, (set, frozenset)):
            scope = frozenset(scope)
        loss.adj = np.ones((1, 1))
        for _kind, out, fn in reversed(self._records):
            if out.adj is not None:
                fn(out.adj)
        for name, leaf in self._leaves.items():
            if leaf.adj is not None and (scope is None or name in scope):
                leaf.param.grad += leaf.adj
        self._records.clear()


def zero_grads(params) -> None:
    for p in params:
        p.grad[...] = 0.0


def sgd_step(params, learning_rate: float, clip_norm: float | None = None) -> None:
    """value <- value - lr * grad for every parameter, then zero the grads.

    With ``clip_norm`` set, the update is rescaled when the global gradient
    norm over ``params`` exceeds it.
    """
    if not learning_rate > 0:
        raise ValueError(f"learning_rate must be positive, got {learning_rate}")
    params = list(params)
    for p in params:
        if not np.isfinite(p.grad).all():
            raise NumericError(f"non-finite gradient for parameter {p.name}")
    factor = 1.0
    if clip_norm is not None:
        total = np.sqrt(sum(float((p.grad * p.grad).sum()) for p in params))
        if total > clip_norm:
            factor = clip_norm / total
    for p in params:
        p.value -= (learning_rate * factor) * p.grad
        p.grad[...] = 0.0


@dataclass
class WorstCoordinate:
    index: tuple[int, int]
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckResult:
    max_rel_error: float
    per_param: dict[str, WorstCoordinate]

    def report(self) -> str:
        lines = [f"max relative error: {self.max_rel_error:.3e}"]
        for name, w in sorted(self.per_param.items()):
            lines.append(
                f"  {name:40s} worst at {w.index}: analytic={w.analytic: .6e} "
                f"numeric={w.numeric: .6e} rel={w.rel_error:.3e}"
            )
        return "\n".join(lines)


def finite_difference_check(forward, params, epsilon: float = 1e-5) -> GradCheckResult:
    """Compare analytic gradients against central finite differences.

    ``forward`` must be a deterministic function Tape -> scalar Tensor over
    the current values of ``params``. Relative error per coordinate is
    |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    """
    if not (np.isfinite(epsilon) and epsilon > 0):
        raise ValueError(f"epsilon must be a positive finite number, got {epsilon}")
    params = list(params)
    zero_grads(params)
    tape = Tape()
    tape.backward(forward(tape))
    analytic = {p.name: p.grad.copy() for p in params}
    zero_grads(params)

    def eval_loss() -> float:
        return forward(Tape()).item()

    max_err = 0.0
    per_param: dict[str, WorstCoordinate] = {}
    for p in params:
        worst = WorstCoordinate((0, 0), 0.0, 0.0, -1.0)
        rows, cols = p.value.shape
        for r in range(rows):
            for c in range(cols):
                orig = p.value[r, c]
                p.value[r, c] = orig + epsilon
                hi = eval_loss()
                p.value[r, c] = orig - epsilon
                lo = eval_loss()
                p.value[r, c] = orig
                numeric = (hi - lo) / (2.0 * epsilon)
                a = analytic[p.name][r, c]
                rel = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
                if rel > worst.rel_error:
                    worst = WorstCoordinate((r, c), float(a), float(numeric), rel)
        per_param[p.name] = worst
        max_err = max(max_err, worst.rel_error)
    return GradCheckResult(max_err, per_param)
