"""Central finite-difference gradient oracle.

Independent of autograd: evaluates the scalar function twice per input
element and compares the quotient against the analytic gradient.
"""

import numpy as np
import torch


def finite_diff_grad(fn, x: torch.Tensor, h: float) -> torch.Tensor:
    """d fn / d x by central differences, evaluated elementwise."""
    grad = torch.zeros_like(x, dtype=torch.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + h
        up = float(fn())
        flat[i] = orig - h
        down = float(fn())
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def assert_grad_matches(fn, tensors, rel_tol: float, abs_tol: float, h: float) -> None:
    """Check autograd gradients of scalar ``fn()`` against finite differences
    for every tensor in ``tensors``."""
    for t in tensors:
        t.grad = None
    loss = fn()
    loss.backward()
    for t in tensors:
        ad = t.grad.detach().to(torch.float64).clone()
        with torch.no_grad():
            fd = finite_diff_grad(fn, t, h)
        err = (ad - fd).abs()
        bound = rel_tol * torch.maximum(ad.abs(), fd.abs()) + abs_tol
        worst = (err - bound).max().item()
        assert torch.all(err <= bound), (
            f"gradient mismatch: worst excess {worst:.3e} "
            f"(max |ad-fd|={err.max():.3e}, rel_tol={rel_tol}, abs_tol={abs_tol})")
