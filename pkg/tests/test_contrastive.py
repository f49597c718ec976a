import math

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import check_grads
from kgtyper.contrastive import (
    CONTRAST_PAIRS,
    Projector,
    contrastive_loss,
    cosine,
    cross_view_loss,
    make_projectors,
    pair_loss,
    pair_loss_oracle,
)
from kgtyper.encoder import STREAMS, stream_key


def brute_force_cross_view(za, zb, tau):
    """Scalar re-implementation: sum over anchors of both direction losses."""
    m = za.shape[0]

    def cos(a, b):
        na, nb = a.norm(), b.norm()
        if na == 0 or nb == 0:
            return torch.zeros(())
        return (a * b).sum() / (na * nb)

    total = 0.0
    for u, v in ((za, zb), (zb, za)):
        for i in range(m):
            pos = math.exp(float(cos(u[i], v[i])) / tau)
            den = pos
            for j in range(m):
                if j == i:
                    continue
                den += math.exp(float(cos(u[i], u[j])) / tau)
                den += math.exp(float(cos(u[i], v[j])) / tau)
            total += -math.log(pos / den)
    return total


class TestProjector:
    def test_two_layer_formula(self):
        p = Projector(3, torch.Generator().manual_seed(0))
        x = torch.randn(5, 3, dtype=torch.float64)
        manual = torch.nn.functional.elu(x @ p.fc1.weight.T + p.fc1.bias)
        manual = manual @ p.fc2.weight.T + p.fc2.bias
        assert torch.allclose(p(x), manual, atol=1e-12)

    def test_identity_weights_pass_nonnegative_input(self):
        p = Projector(3)
        with torch.no_grad():
            p.fc1.weight.copy_(torch.eye(3, dtype=torch.float64))
            p.fc2.weight.copy_(torch.eye(3, dtype=torch.float64))
            p.fc1.bias.zero_()
            p.fc2.bias.zero_()
        x = torch.rand(4, 3, dtype=torch.float64)  # nonnegative: ELU is identity
        assert torch.allclose(p(x), x, atol=1e-12)

    def test_zero_input_gives_second_bias(self):
        p = Projector(3, torch.Generator().manual_seed(1))
        with torch.no_grad():
            p.fc2.bias.copy_(torch.tensor([1.0, 2.0, 3.0], dtype=torch.float64))
        out = p(torch.zeros(1, 3, dtype=torch.float64))
        # b1 = 0 from init, so ELU(0) = 0 and only b2 remains
        assert torch.allclose(out[0], p.fc2.bias, atol=1e-12)

    def test_six_unshared_instances(self):
        heads = make_projectors(4, torch.Generator().manual_seed(0))
        assert set(heads.keys()) == {stream_key(v, s) for v, s in STREAMS}
        w = [heads[k].fc1.weight for k in sorted(heads.keys())]
        for i in range(len(w)):
            for j in range(i + 1, len(w)):
                assert not torch.equal(w[i], w[j])


class TestCosine:
    def test_parallel(self):
        u = torch.tensor([1.0, 2.0], dtype=torch.float64)
        assert float(cosine(u, 3.0 * u)) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        u = torch.tensor([1.0, 0.0], dtype=torch.float64)
        v = torch.tensor([0.0, 1.0], dtype=torch.float64)
        assert float(cosine(u, v)) == 0.0

    def test_hand_value(self):
        u = torch.tensor([1.0, 0.0], dtype=torch.float64)
        v = torch.tensor([1.0, 1.0], dtype=torch.float64)
        assert float(cosine(u, v)) == pytest.approx(1.0 / math.sqrt(2.0), abs=1e-12)

    def test_zero_vector_warns_and_returns_zero(self, caplog):
        u = torch.zeros(2, dtype=torch.float64)
        v = torch.tensor([1.0, 1.0], dtype=torch.float64)
        with caplog.at_level("WARNING"):
            out = cosine(u, v)
        assert float(out) == 0.0
        assert any("zero-norm" in r.message for r in caplog.records)

    @given(st.lists(st.floats(-10, 10), min_size=2, max_size=6))
    def test_bounded(self, vals):
        u = torch.tensor(vals, dtype=torch.float64)
        v = torch.roll(u, 1)
        c = float(cosine(u, v))
        assert -1.0 - 1e-9 <= c <= 1.0 + 1e-9


class TestPairLoss:
    def empty(self, d=2):
        return torch.zeros(0, d, dtype=torch.float64)

    def test_no_negatives_is_exactly_zero(self):
        u = torch.tensor([1.0, 2.0], dtype=torch.float64)
        loss = pair_loss(u, u, self.empty(), self.empty(), tau=0.6)
        assert float(loss) == 0.0

    def test_closed_form_value(self):
        # positive similarity 1, one negative similarity 0, tau 1
        anchor = torch.tensor([1.0, 0.0], dtype=torch.float64)
        positive = torch.tensor([2.0, 0.0], dtype=torch.float64)
        negative = torch.tensor([[0.0, 1.0]], dtype=torch.float64)
        loss = pair_loss(anchor, positive, negative, self.empty(), tau=1.0)
        expected = -math.log(math.e / (math.e + 1.0))
        assert float(loss) == pytest.approx(expected, abs=1e-12)
        assert float(loss) == pytest.approx(0.313262, abs=1e-6)

    def test_adding_negative_increases_loss(self):
        anchor = torch.tensor([1.0, 0.2], dtype=torch.float64)
        positive = torch.tensor([0.8, 0.3], dtype=torch.float64)
        neg1 = torch.tensor([[0.1, 1.0]], dtype=torch.float64)
        neg2 = torch.tensor([[0.1, 1.0], [-0.5, 0.4]], dtype=torch.float64)
        l1 = pair_loss(anchor, positive, neg1, self.empty(), tau=0.6)
        l2 = pair_loss(anchor, positive, neg2, self.empty(), tau=0.6)
        assert float(l2) > float(l1)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**9))
    def test_matches_scalar_oracle(self, seed):
        g = torch.Generator().manual_seed(seed)
        d = 3
        anchor = torch.randn(d, generator=g, dtype=torch.float64)
        positive = torch.randn(d, generator=g, dtype=torch.float64)
        intra = torch.randn(2, d, generator=g, dtype=torch.float64)
        inter = torch.randn(3, d, generator=g, dtype=torch.float64)
        got = float(pair_loss(anchor, positive, intra, inter, tau=0.6))
        want = pair_loss_oracle(
            anchor.tolist(), positive.tolist(), intra.tolist(), inter.tolist(), tau=0.6
        )
        assert got == pytest.approx(want, rel=1e-9)
        assert got >= 0.0

    def test_stable_at_small_tau(self):
        anchor = torch.tensor([1.0, 0.0], dtype=torch.float64)
        positive = torch.tensor([1.0, 0.0], dtype=torch.float64)
        neg = torch.tensor([[0.9, 0.1]], dtype=torch.float64)
        loss = pair_loss(anchor, positive, neg, self.empty(), tau=0.01)
        assert torch.isfinite(loss)


class TestCrossViewLoss:
    def test_single_pair_no_negatives(self):
        za = torch.randn(1, 4, dtype=torch.float64)
        zb = torch.randn(1, 4, dtype=torch.float64)
        assert float(cross_view_loss(za, zb, tau=0.6)) == 0.0

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10**9), st.integers(2, 6))
    def test_matches_brute_force(self, seed, m):
        g = torch.Generator().manual_seed(seed)
        za = torch.randn(m, 3, generator=g, dtype=torch.float64)
        zb = torch.randn(m, 3, generator=g, dtype=torch.float64)
        got = float(cross_view_loss(za, zb, tau=0.7))
        want = brute_force_cross_view(za, zb, 0.7)
        assert got == pytest.approx(want, rel=1e-9)

    def test_view_swap_symmetry(self):
        g = torch.Generator().manual_seed(3)
        za = torch.randn(4, 3, generator=g, dtype=torch.float64)
        zb = torch.randn(4, 3, generator=g, dtype=torch.float64)
        assert float(cross_view_loss(za, zb, 0.6)) == pytest.approx(
            float(cross_view_loss(zb, za, 0.6)), rel=1e-12
        )

    def test_scale_invariance(self):
        g = torch.Generator().manual_seed(5)
        za = torch.randn(4, 3, generator=g, dtype=torch.float64)
        zb = torch.randn(4, 3, generator=g, dtype=torch.float64)
        a = float(cross_view_loss(za, zb, 0.6))
        b = float(cross_view_loss(3.0 * za, 3.0 * zb, 0.6))
        assert abs(a - b) < 1e-9

    def test_negative_cap_deterministic_and_bounded(self):
        g = torch.Generator().manual_seed(7)
        za = torch.randn(8, 3, generator=g, dtype=torch.float64)
        zb = torch.randn(8, 3, generator=g, dtype=torch.float64)
        l1 = float(cross_view_loss(za, zb, 0.6, negative_cap=3,
                                   generator=torch.Generator().manual_seed(0)))
        l2 = float(cross_view_loss(za, zb, 0.6, negative_cap=3,
                                   generator=torch.Generator().manual_seed(0)))
        assert l1 == l2
        full = float(cross_view_loss(za, zb, 0.6))
        assert l1 != full  # fewer negatives, different denominator

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            cross_view_loss(
                torch.zeros(2, 3, dtype=torch.float64),
                torch.zeros(3, 3, dtype=torch.float64),
                0.6,
            )


class TestContrastiveLoss:
    def make_projected(self, seed=0, n=5, d=3):
        g = torch.Generator().manual_seed(seed)
        counts = {"entity": n, "type": n + 1, "cluster": n - 1}
        return {
            stream_key(v, s): torch.randn(counts[s], d, generator=g, dtype=torch.float64)
            for v, s in STREAMS
        }

    def test_empty_node_sets_zero(self):
        projected = self.make_projected()
        sets = {k: torch.zeros(0, dtype=torch.long) for k in ("entity", "type", "cluster")}
        assert float(contrastive_loss(projected, sets, 0.6)) == 0.0

    def test_mean_convention(self):
        projected = self.make_projected()
        sets = {
            "entity": torch.tensor([0, 1, 2]),
            "type": torch.tensor([1, 3]),
            "cluster": torch.tensor([0]),
        }
        got = float(contrastive_loss(projected, sets, 0.6))
        total, count = 0.0, 0
        for va, vb, kind in CONTRAST_PAIRS:
            idx = sets[kind]
            za = projected[stream_key(va, kind)][idx]
            zb = projected[stream_key(vb, kind)][idx]
            total += float(cross_view_loss(za, zb, 0.6))
            count += idx.numel()
        assert got == pytest.approx(total / count, rel=1e-12)

    def test_gradients_match_finite_differences(self):
        heads = make_projectors(3, torch.Generator().manual_seed(2))
        g = torch.Generator().manual_seed(0)
        counts = {"entity": 4, "type": 5, "cluster": 3}
        raw = {
            stream_key(v, s): torch.randn(counts[s], 3, generator=g, dtype=torch.float64)
            for v, s in STREAMS
        }
        sets = {
            "entity": torch.tensor([0, 2]),
            "type": torch.tensor([1, 4]),
            "cluster": torch.tensor([0, 1]),
        }

        def loss_fn():
            projected = {k: heads[k](x) for k, x in raw.items()}
            return contrastive_loss(projected, sets, tau=0.6)

        subset = [
            ("e2t_entity.fc1.weight", heads["e2t_entity"].fc1.weight),
            ("e2c_entity.fc2.bias", heads["e2c_entity"].fc2.bias),
            ("c2t_type.fc2.weight", heads["c2t_type"].fc2.weight),
        ]
        check_grads(loss_fn, subset)
