"""Central finite-difference gradient checking for small float64 networks."""

import torch


def fd_gradients(loss_fn, params, h=1e-6):
    """Central-difference gradient of ``loss_fn()`` w.r.t. each tensor in
    ``params``; the loss must be a pure function of the current values."""
    grads = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p)
            flat = p.view(-1)
            gflat = g.view(-1)
            for k in range(flat.numel()):
                orig = flat[k].item()
                flat[k] = orig + h
                hi = loss_fn()
                flat[k] = orig - h
                lo = loss_fn()
                flat[k] = orig
                gflat[k] = (hi - lo) / (2 * h)
            grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-4):
    """Elementwise |a-n| / max(floor, |a|, |n|), maximized over all entries.

    The floor keeps near-zero gradient entries from inflating the ratio with
    finite-difference noise.
    """
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = torch.clamp(torch.maximum(a.abs(), n.abs()), min=floor)
        worst = max(worst, ((a - n).abs() / denom).max().item())
    return worst


def check_gradients(loss_fn, params, h=1e-6, floor=1e-4):
    """Returns max relative error between autograd and central differences."""
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [p.grad.detach().clone() for p in params]
    numeric = fd_gradients(lambda: loss_fn().item(), params, h=h)
    return max_relative_error(analytic, numeric, floor=floor)
