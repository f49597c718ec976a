import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from kgtyper.data import ViewGraph, toy_corpus
from kgtyper.encoder import (
    STREAMS,
    ViewTensors,
    dense_propagation_oracle,
    encode_all_views,
    encode_view,
    propagate_layer,
    readout,
    run_layers,
    stream_key,
)


def random_view(rng, max_left=50, max_right=50):
    nl = int(rng.integers(1, max_left + 1))
    nr = int(rng.integers(1, max_right + 1))
    density = rng.uniform(0.0, 0.4)
    edges = [
        (l, r)
        for l in range(nl)
        for r in range(nr)
        if rng.random() < density
    ]
    return ViewGraph.build("e2t", nl, nr, edges)


class TestPropagation:
    def test_single_edge_copies_vector(self):
        view = ViewGraph.build("e2t", 1, 1, [(0, 0)])
        vt = ViewTensors.from_view(view)
        v = torch.tensor([[2.0, -3.0]], dtype=torch.float64)
        left, right = propagate_layer(vt, torch.zeros_like(v), v)
        assert torch.equal(left, v)

    def test_two_neighbors_normalized(self):
        # e connected to t1, t2; each type has degree 1 -> x_e = (t1+t2)/sqrt(2)
        view = ViewGraph.build("e2t", 1, 2, [(0, 0), (0, 1)])
        vt = ViewTensors.from_view(view)
        right = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
        left, _ = propagate_layer(vt, torch.zeros(1, 2, dtype=torch.float64), right)
        expected = (right[0] + right[1]) / np.sqrt(2.0)
        assert torch.allclose(left[0], expected, atol=1e-15)

    def test_isolated_nodes_stay_zero(self):
        view = ViewGraph.build("e2t", 3, 2, [(0, 0)])
        vt = ViewTensors.from_view(view)
        left0 = torch.randn(3, 4, dtype=torch.float64)
        right0 = torch.randn(2, 4, dtype=torch.float64)
        left1, right1 = propagate_layer(vt, left0, right0)
        assert torch.equal(left1[1], torch.zeros(4, dtype=torch.float64))
        assert torch.equal(left1[2], torch.zeros(4, dtype=torch.float64))
        assert torch.equal(right1[1], torch.zeros(4, dtype=torch.float64))

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            view = random_view(rng)
            d = int(rng.integers(1, 9))
            left0 = torch.from_numpy(rng.standard_normal((view.left_count, d)))
            right0 = torch.from_numpy(rng.standard_normal((view.right_count, d)))
            vt = ViewTensors.from_view(view)
            lefts, rights = run_layers(vt, left0, right0, 3)
            dl, dr = dense_propagation_oracle(view, left0, right0, 3)
            for a, b in zip(lefts + rights, dl + dr):
                assert (a - b).abs().max() < 1e-10

    def test_linearity(self):
        view = ViewGraph.build("e2t", 2, 2, [(0, 0), (1, 0), (1, 1)])
        vt = ViewTensors.from_view(view)
        left0 = torch.randn(2, 3, dtype=torch.float64)
        right0 = torch.randn(2, 3, dtype=torch.float64)
        l1, r1 = propagate_layer(vt, left0, right0)
        l2, r2 = propagate_layer(vt, 2.0 * left0, 2.0 * right0)
        assert torch.allclose(l2, 2.0 * l1, atol=1e-14)
        assert torch.allclose(r2, 2.0 * r1, atol=1e-14)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_zero_input_zero_output(self, seed):
        rng = np.random.default_rng(seed)
        view = random_view(rng, 10, 10)
        vt = ViewTensors.from_view(view)
        left, right = propagate_layer(
            vt,
            torch.zeros(view.left_count, 3, dtype=torch.float64),
            torch.zeros(view.right_count, 3, dtype=torch.float64),
        )
        assert not left.any() and not right.any()

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(4)
        view = random_view(rng, 8, 8)
        d = 5
        left0 = torch.from_numpy(rng.standard_normal((view.left_count, d)))
        right0 = torch.from_numpy(rng.standard_normal((view.right_count, d)))
        perm = rng.permutation(view.left_count)
        pview = ViewGraph.build(
            "e2t",
            view.left_count,
            view.right_count,
            [(int(perm[l]), int(r)) for l, r in view.edges],
        )
        base, _ = encode_view(ViewTensors.from_view(view), left0, right0, 2)
        pleft0 = torch.empty_like(left0)
        pleft0[perm] = left0
        permuted, _ = encode_view(ViewTensors.from_view(pview), pleft0, right0, 2)
        # row for relabeled node equals row for original node
        for old in range(view.left_count):
            assert torch.allclose(permuted[perm[old]], base[old], atol=1e-12)


class TestReadout:
    def make_layers(self, n, shape=(2, 3)):
        g = torch.Generator().manual_seed(0)
        return [torch.randn(*shape, generator=g, dtype=torch.float64) for _ in range(n)]

    def test_l1_default_is_initial_only(self):
        layers = self.make_layers(2)  # L=1 -> [x0, x1]
        assert torch.equal(readout(layers), layers[0])

    def test_l2_default(self):
        layers = self.make_layers(3)
        assert torch.allclose(readout(layers), layers[0] + layers[1], atol=1e-15)

    def test_l2_include_final(self):
        layers = self.make_layers(3)
        assert torch.allclose(
            readout(layers, include_final_layer=True),
            layers[0] + layers[1] + layers[2],
            atol=1e-15,
        )

    def test_l0_degenerate(self):
        layers = self.make_layers(1)
        assert torch.equal(readout(layers), layers[0])


class TestEncodeAllViews:
    def setup_method(self):
        self.corpus = toy_corpus()
        self.vts = {k: ViewTensors.from_view(v) for k, v in self.corpus.views.items()}
        counts = {"entity": 6, "type": 4, "cluster": 2}
        g = torch.Generator().manual_seed(1)
        self.initial = {
            stream_key(v, s): torch.randn(counts[s], 4, generator=g, dtype=torch.float64)
            for v, s in STREAMS
        }

    def test_all_streams_present(self):
        out = encode_all_views(self.vts, self.initial, 2)
        assert set(out) == {stream_key(v, s) for v, s in STREAMS}

    def test_zero_initials_zero_readouts(self):
        zeros = {k: torch.zeros_like(v) for k, v in self.initial.items()}
        out = encode_all_views(self.vts, zeros, 2)
        assert all(not t.any() for t in out.values())

    def test_scaling_one_view_is_local(self):
        base = encode_all_views(self.vts, self.initial, 2)
        scaled_in = dict(self.initial)
        scaled_in["e2t_entity"] = 2.0 * self.initial["e2t_entity"]
        scaled_in["e2t_type"] = 2.0 * self.initial["e2t_type"]
        out = encode_all_views(self.vts, scaled_in, 2)
        assert torch.allclose(out["e2t_entity"], 2.0 * base["e2t_entity"], atol=1e-12)
        assert torch.allclose(out["e2t_type"], 2.0 * base["e2t_type"], atol=1e-12)
        for key in ("c2t_cluster", "c2t_type", "e2c_entity", "e2c_cluster"):
            assert torch.equal(out[key], base[key])

    def test_ablated_view_returns_layer0(self):
        out = encode_all_views(self.vts, self.initial, 3, ablated=frozenset({"c2t"}))
        assert out["c2t_cluster"] is self.initial["c2t_cluster"]
        assert out["c2t_type"] is self.initial["c2t_type"]
        # non-ablated views still propagate
        assert not torch.equal(out["e2t_entity"], self.initial["e2t_entity"])

    def test_gradients_flow_to_initials(self):
        initial = {k: v.clone().requires_grad_(True) for k, v in self.initial.items()}
        out = encode_all_views(self.vts, initial, 2)
        loss = sum(t.pow(2).sum() for t in out.values())
        loss.backward()
        assert initial["e2t_entity"].grad is not None
        assert torch.isfinite(initial["e2t_entity"].grad).all()
