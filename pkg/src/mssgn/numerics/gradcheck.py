"""Central-difference gradient oracle."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..errors import ConfigurationError
from .tensor import Tensor, record_nonsmooth


@dataclass
class GroupResult:
    name: str
    checked: int
    skipped: int
    max_rel_error: float
    worst_index: Optional[tuple] = None


@dataclass
class GradCheckReport:
    groups: list = field(default_factory=list)
    tol: float = 1e-4

    @property
    def max_rel_error(self) -> float:
        return max((g.max_rel_error for g in self.groups), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol and all(g.checked > 0 for g in self.groups)

    def failures(self) -> list:
        return [g for g in self.groups if g.max_rel_error >= self.tol]

    def summary(self) -> str:
        lines = [f"max rel error {self.max_rel_error:.3e} (tol {self.tol:.0e})"]
        for g in self.groups:
            lines.append(f"  {g.name}: checked={g.checked} skipped={g.skipped} max_rel={g.max_rel_error:.3e}")
        return "\n".join(lines)


def relative_error(a, n, floor: float = 1e-8):
    a = np.asarray(a, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def _same_branches(a: list, b: list) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def grad_check(f: Callable[[], Tensor], params, h: float = 1e-5, tol: float = 1e-4,
               max_coords: Optional[int] = None, rng=None) -> GradCheckReport:
    """Compare backward() gradients of scalar ``f()`` with central differences.

    ``params`` is a list of tensors or ``(name, tensor)`` pairs.  Frozen
    tensors are left out of the report.  A coordinate whose perturbation flips a
    relu mask or pooling argmax is retried with ``h/100`` and skipped if the
    function still is not smooth there.
    """
    named = [(p if isinstance(p, tuple) else (p.name or f"param{i}", p)) for i, p in enumerate(params)]
    named = [(n, p) for n, p in named if p.requires_grad]
    for n, p in named:
        if p.dtype != np.float64:
            raise ConfigurationError(f"grad_check needs 64-bit tensors; {n} is {p.dtype}")
    rng = rng if rng is not None else np.random.default_rng(0)

    for _, p in named:
        p.grad = None
    with record_nonsmooth() as base_branches:
        out = f()
    out.backward()
    analytic = {n: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for n, p in named}

    def evaluate():
        with record_nonsmooth() as log:
            val = float(f().data)
        return val, log

    report = GradCheckReport(tol=tol)
    for name, p in named:
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        worst, worst_idx, checked, skipped = 0.0, None, 0, 0
        for c in coords:
            orig = flat[c]
            numeric = None
            for step in (h, h / 100):
                flat[c] = orig + step
                fp, lp = evaluate()
                flat[c] = orig - step
                fm, lm = evaluate()
                flat[c] = orig
                if _same_branches(lp, base_branches) and _same_branches(lm, base_branches):
                    numeric = (fp - fm) / (2 * step)
                    break
            if numeric is None:
                skipped += 1
                continue
            a = analytic[name].reshape(-1)[c]
            err = float(relative_error(a, numeric))
            checked += 1
            if err > worst:
                worst, worst_idx = err, np.unravel_index(c, p.shape)
        report.groups.append(GroupResult(name, checked, skipped, worst, worst_idx))
    return report
