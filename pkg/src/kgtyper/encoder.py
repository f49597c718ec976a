"""Parameter-free graph propagation over the bipartite views.

Each view is encoded by symmetric-normalized neighborhood averaging with no
self-loops and no per-layer transforms; the readout sums the layer sequence.
Nodes with no edges keep a zero propagated component and survive on their
layer-0 embedding alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .data import ViewGraph

# One embedding stream per (view, side) pair; keys used across the codebase.
STREAMS = (
    ("e2t", "entity"),
    ("e2t", "type"),
    ("c2t", "cluster"),
    ("c2t", "type"),
    ("e2c", "entity"),
    ("e2c", "cluster"),
)


def stream_key(view: str, side: str) -> str:
    return f"{view}_{side}"


@dataclass
class ViewTensors:
    """Edge tensors for one view: endpoints plus the 1/sqrt(dl*dr) weights."""

    left: torch.Tensor
    right: torch.Tensor
    coeff: torch.Tensor
    left_count: int
    right_count: int

    @classmethod
    def from_view(cls, view: ViewGraph) -> "ViewTensors":
        left = torch.from_numpy(view.edges[:, 0].copy())
        right = torch.from_numpy(view.edges[:, 1].copy())
        dl = torch.from_numpy(view.left_degree.copy()).to(torch.float64)
        dr = torch.from_numpy(view.right_degree.copy()).to(torch.float64)
        coeff = 1.0 / torch.sqrt(dl[left] * dr[right]) if len(view.edges) else torch.zeros(0, dtype=torch.float64)
        return cls(left, right, coeff, view.left_count, view.right_count)


def propagate_layer(
    vt: ViewTensors, left_prev: torch.Tensor, right_prev: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """One propagation step: each side gathers its weighted cross-side sum."""
    left_next = torch.zeros_like(left_prev)
    right_next = torch.zeros_like(right_prev)
    if vt.coeff.numel():
        w = vt.coeff.unsqueeze(1)
        left_next = left_next.index_add(0, vt.left, w * right_prev[vt.right])
        right_next = right_next.index_add(0, vt.right, w * left_prev[vt.left])
    return left_next, right_next


def run_layers(
    vt: ViewTensors, left0: torch.Tensor, right0: torch.Tensor, num_layers: int
) -> tuple[list[torch.Tensor], list[torch.Tensor]]:
    """Layer sequences [x^0 .. x^L] for both sides (L = num_layers)."""
    lefts, rights = [left0], [right0]
    for _ in range(num_layers):
        ln, rn = propagate_layer(vt, lefts[-1], rights[-1])
        lefts.append(ln)
        rights.append(rn)
    return lefts, rights


def readout(layers: list[torch.Tensor], include_final_layer: bool = False) -> torch.Tensor:
    """Sum of the layer sequence; the top layer joins only when asked.

    With L propagation steps the sequence holds L+1 tensors; the default sums
    indices 0..L-1, the switch extends the sum through index L.
    """
    upto = len(layers) if include_final_layer else len(layers) - 1
    if upto < 1:
        upto = 1  # degenerate L=0: the initial embedding is the readout
    out = layers[0].clone()
    for x in layers[1:upto]:
        out = out + x
    return out


def encode_view(
    vt: ViewTensors,
    left0: torch.Tensor,
    right0: torch.Tensor,
    num_layers: int,
    include_final_layer: bool = False,
) -> tuple[torch.Tensor, torch.Tensor]:
    lefts, rights = run_layers(vt, left0, right0, num_layers)
    return (
        readout(lefts, include_final_layer),
        readout(rights, include_final_layer),
    )


VIEW_SIDES = {
    "e2t": ("entity", "type"),
    "c2t": ("cluster", "type"),
    "e2c": ("entity", "cluster"),
}


def encode_all_views(
    view_tensors: dict[str, ViewTensors],
    initial: dict[str, torch.Tensor],
    num_layers: int,
    include_final_layer: bool = False,
    ablated: frozenset[str] = frozenset(),
) -> dict[str, torch.Tensor]:
    """Encode every view; ablated views fall back to their layer-0 tables.

    Views share no parameters: `initial` maps each stream key (view_side) to
    that view's own layer-0 table, and the result maps the same keys to the
    encoded tables.
    """
    out: dict[str, torch.Tensor] = {}
    for view, (ls, rs) in VIEW_SIDES.items():
        lk, rk = stream_key(view, ls), stream_key(view, rs)
        l0, r0 = initial[lk], initial[rk]
        if view in ablated:
            out[lk], out[rk] = l0, r0
            continue
        le, re = encode_view(view_tensors[view], l0, r0, num_layers, include_final_layer)
        out[lk], out[rk] = le, re
    return out


def dense_propagation_oracle(
    view: ViewGraph, left0: torch.Tensor, right0: torch.Tensor, num_layers: int
) -> tuple[list[torch.Tensor], list[torch.Tensor]]:
    """Same propagation via an explicit D^{-1/2} A D^{-1/2} matrix (test oracle)."""
    nl, nr = view.left_count, view.right_count
    a = torch.zeros(nl, nr, dtype=torch.float64)
    for l, r in view.edges:
        a[l, r] = 1.0
    dl = torch.from_numpy(view.left_degree.copy()).to(torch.float64).clamp(min=1.0)
    dr = torch.from_numpy(view.right_degree.copy()).to(torch.float64).clamp(min=1.0)
    norm = torch.diag(dl.pow(-0.5)) @ a @ torch.diag(dr.pow(-0.5))
    # zero-degree rows/cols contribute nothing; clamp only guards the division
    norm = norm * (torch.from_numpy(view.left_degree.copy()).unsqueeze(1) > 0)
    norm = norm * (torch.from_numpy(view.right_degree.copy()).unsqueeze(0) > 0)
    lefts, rights = [left0], [right0]
    for _ in range(num_layers):
        lefts.append(norm @ rights[-1])
        rights.append(norm.T @ lefts[-2])
    return lefts, rights
