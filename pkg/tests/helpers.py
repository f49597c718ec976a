"""Shared test utilities: finite differences and brute-force oracles."""

from __future__ import annotations

import torch


def finite_difference(loss_fn, param: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
    """Central-difference gradient of loss_fn() w.r.t. every entry of param.

    loss_fn must be a pure function of the current parameter values.
    """
    grad = torch.zeros_like(param)
    flat = param.data.view(-1)
    gflat = grad.view(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + eps
        hi = float(loss_fn())
        flat[i] = orig - eps
        lo = float(loss_fn())
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def grad_rel_err(analytic: torch.Tensor | None, numeric: torch.Tensor) -> float:
    """Relative L2 error with an absolute fallback for near-zero gradients."""
    if analytic is None:
        analytic = torch.zeros_like(numeric)
    diff = float((analytic - numeric).norm())
    scale = float(analytic.norm() + numeric.norm())
    if scale < 1e-8:
        return diff  # both effectively zero: compare absolutely
    return diff / scale


def check_grads(loss_fn, named_params, eps: float = 1e-5, tol: float = 1e-4) -> dict[str, float]:
    """Backprop once, then finite-difference every table; returns per-name errors."""
    named_params = list(named_params)
    for _, p in named_params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = {name: (p.grad.clone() if p.grad is not None else None) for name, p in named_params}
    errs = {}
    for name, p in named_params:
        with torch.no_grad():
            numeric = finite_difference(lambda: loss_fn().detach(), p, eps)
        errs[name] = grad_rel_err(analytic[name], numeric)
        assert errs[name] < tol, f"gradient mismatch for {name}: {errs[name]:.3e}"
    return errs


def rank_by_sort_and_scan(scores, target: int, known_true) -> int:
    """Exhaustive ranking oracle: sort eligible scores, scan past ties."""
    known = set(known_true)
    eligible = [
        (float(scores[j]), j) for j in range(len(scores)) if j != target and j not in known
    ]
    eligible.sort(key=lambda sj: -sj[0])
    target_score = float(scores[target])
    rank = 1
    for s, _ in eligible:
        if s >= target_score:
            rank += 1
    return rank
