"""Exact floating-point-operation accounting for forward passes.

Counting convention (fixed so cost comparisons between model variants are
reproducible):

* matrix multiply: ``2 * m * k * n`` per 2-D product (multiply-add = 2),
  times the number of batched products;
* elementwise unary/binary ops: 1 per output element, regardless of how
  expensive the scalar function is (``exp`` and ``+`` both count 1);
* reductions (``sum``/``mean``): 1 per reduced input element (``mean``
  adds 1 per output element for the divide);
* softmax: 3 per element (exp + sum + divide);
* pure shape ops (reshape, transpose, slicing): 0.

A counter only observes operations executed while it is installed as the
active counter (``with FlopCounter() as c: ...``). Counting is keyed by a
``ContextVar`` so concurrent inference threads never share a counter by
accident.
"""

from __future__ import annotations

from contextvars import ContextVar

_ACTIVE: ContextVar["FlopCounter | None"] = ContextVar("active_flop_counter", default=None)


class FlopCounter:
    """Accumulates forward-pass floating-point operations by op name.

    The count is monotonically non-decreasing while installed and can be
    reset between passes. Identical graph + shapes always produce an
    identical count.
    """

    def __init__(self):
        self.total: int = 0
        self.by_op: dict[str, int] = {}
        self._token = None

    def add(self, op: str, flops: int) -> None:
        if flops < 0:
            raise ValueError(f"negative flop increment for {op!r}")
        self.total += flops
        self.by_op[op] = self.by_op.get(op, 0) + flops

    def reset(self) -> None:
        self.total = 0
        self.by_op = {}

    def __enter__(self) -> "FlopCounter":
        self._token = _ACTIVE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.reset(self._token)
        self._token = None


def tally(op: str, flops: int) -> None:
    """Record ``flops`` against the active counter, if any."""
    counter = _ACTIVE.get()
    if counter is not None:
        counter.add(op, flops)
