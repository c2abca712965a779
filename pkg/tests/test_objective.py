import numpy as np
import pytest

from hgsel import autodiff as ad
from hgsel.autodiff import Tensor
from hgsel.errors import ValidationError
from hgsel.gradcheck import check_gradients
from hgsel.objective import (ContrastConfig, PositiveSets, baseline_loss,
                             contrastive_loss_s, pretrain_loss,
                             select_positives, loss_bound_check)
from hgsel.selfexpr import CLOSED_FORM, NETWORK

from .conftest import paper_author_graph, PAP

RNG = np.random.default_rng(77)


def random_positives(rng, n, k=2):
    sets = []
    for i in range(n):
        others = np.delete(np.arange(n), i)
        sets.append(np.append(rng.choice(others, size=min(k, n - 1),
                                         replace=False), i))
    return PositiveSets.from_sets(sets, n)


class TestSelectPositives:
    def test_isolated_node_keeps_only_itself(self):
        graph = paper_author_graph([(0, 0), (1, 0)])  # node 2 isolated
        pos = select_positives(graph, [PAP], k_pos=2)
        assert pos.sets[2].tolist() == [2]

    def test_tie_break_on_index(self):
        # strengths from node 0: node1=3, node2=2, node3=2 -> pick 1 and 2
        edges = []
        attr = 0
        for peer, strength in ((1, 3), (2, 2), (3, 2)):
            for _ in range(strength):
                edges.append((0, attr))
                edges.append((peer, attr))
                attr += 1
        graph = paper_author_graph(edges, n_papers=4, n_authors=attr)
        pos = select_positives(graph, [PAP], k_pos=2)
        assert set(pos.sets[0].tolist()) == {0, 1, 2}

    def test_fewer_peers_than_k_takes_all(self):
        graph = paper_author_graph([(0, 0), (1, 0)])
        pos = select_positives(graph, [PAP], k_pos=5)
        assert set(pos.sets[0].tolist()) == {0, 1}

    def test_planted_partition_positives_mostly_intra(self, synth_graph):
        graph, specs = synth_graph
        pos = select_positives(graph, specs, k_pos=8)
        labels = graph.labels
        agree = total = 0
        for i, members in enumerate(pos.sets):
            peers = members[members != i]
            agree += (labels[peers] == labels[i]).sum()
            total += peers.size
        assert agree / total >= 0.8

    def test_mask_matches_sets(self):
        graph = paper_author_graph([(0, 0), (1, 0), (1, 1), (2, 1)])
        pos = select_positives(graph, [PAP], k_pos=1)
        for i, members in enumerate(pos.sets):
            assert set(np.flatnonzero(pos.mask[i])) == set(members.tolist())

    def test_min_strength_filter(self):
        graph = paper_author_graph([(0, 0), (1, 0), (1, 1), (2, 1)])
        pos = select_positives(graph, [PAP], k_pos=3, min_strength=2)
        assert pos.sets[0].tolist() == [0]  # strength-1 neighbors filtered out


class TestContrastiveLoss:
    def test_single_node_loss_is_zero(self):
        pos = PositiveSets.from_sets([np.array([0])], 1)
        u = Tensor(RNG.normal(size=(1, 4)))
        v = Tensor(RNG.normal(size=(1, 4)))
        loss = contrastive_loss_s(u, v, np.zeros((1, 1)), pos, tau=0.7)
        assert loss.item() == pytest.approx(0.0, abs=1e-12)

    def test_saturated_mask_makes_negatives_unit_terms(self):
        n = 5
        rng = np.random.default_rng(3)
        pos = random_positives(rng, n, k=1)
        u = rng.normal(size=(n, 4))
        v = rng.normal(size=(n, 4))
        mask = np.ones((n, n))
        tau = 0.8
        loss = contrastive_loss_s(Tensor(u), Tensor(v), mask, pos, tau).item()

        un = u / np.linalg.norm(u, axis=1, keepdims=True)
        vn = v / np.linalg.norm(v, axis=1, keepdims=True)
        sims = un @ vn.T
        expected = 0.0
        for i in range(n):
            members = pos.sets[i]
            neg_count = n - members.size  # each masked negative contributes e^0 = 1
            for sim_row in (sims[i], sims.T[i]):
                p = np.exp(sim_row[members] / tau).sum()
                expected += -np.log((p + 1e-12) / (p + neg_count + 1e-12))
        assert loss == pytest.approx(expected / (2 * n), rel=1e-9)

    def test_zero_mask_equals_baseline(self):
        n = 6
        rng = np.random.default_rng(4)
        pos = random_positives(rng, n)
        u, v = Tensor(rng.normal(size=(n, 3))), Tensor(rng.normal(size=(n, 3)))
        masked = contrastive_loss_s(u, v, np.zeros((n, n)), pos, 0.6).item()
        plain = baseline_loss(u, v, pos, 0.6).item()
        assert masked == plain

    def test_baseline_closed_form_single_pos_single_neg(self):
        # one positive at similarity 1, one negative at similarity 0, tau 1
        u = Tensor(np.array([[1.0, 0.0]]* 2 + [[0.0, 1.0]]))
        v = Tensor(np.array([[1.0, 0.0]] * 2 + [[0.0, 1.0]]))
        # node 0: positive set {0,1} -> similarities 1; negative {2} -> 0
        pos = PositiveSets.from_sets(
            [np.array([0, 1]), np.array([0, 1]), np.array([2])], 3)
        loss = baseline_loss(u, v, pos, tau=1.0).item()
        # per anchor 0: -log(2e/(2e+1)); anchor 1 same; anchor 2: -log(e/(e+2))
        e = np.e
        expected = (2 * -np.log(2 * e / (2 * e + 1)) * 2
                    + 2 * -np.log(e / (e + 2))) / 6
        assert loss == pytest.approx(expected, rel=1e-6)

    def test_loss_terms_nonnegative(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            n = int(rng.integers(2, 10))
            pos = random_positives(rng, n, k=1)
            u = Tensor(rng.normal(size=(n, 4)))
            v = Tensor(rng.normal(size=(n, 4)))
            mask = rng.uniform(size=(n, n))
            assert contrastive_loss_s(u, v, mask, pos, 0.7).item() >= 0.0

    def test_permutation_invariance(self):
        rng = np.random.default_rng(6)
        n = 7
        pos_sets = [np.append(rng.choice(np.delete(np.arange(n), i), 2,
                                         replace=False), i) for i in range(n)]
        u = rng.normal(size=(n, 4))
        v = rng.normal(size=(n, 4))
        mask = rng.uniform(size=(n, n))
        mask = 0.5 * (mask + mask.T)
        base = contrastive_loss_s(Tensor(u), Tensor(v), mask,
                                  PositiveSets.from_sets(pos_sets, n), 0.9).item()
        perm = rng.permutation(n)
        inv = np.argsort(perm)
        permuted_sets = [inv[pos_sets[perm[i]]] for i in range(n)]
        permuted = contrastive_loss_s(
            Tensor(u[perm]), Tensor(v[perm]), mask[np.ix_(perm, perm)],
            PositiveSets.from_sets(permuted_sets, n), 0.9).item()
        assert permuted == pytest.approx(base, rel=1e-12)

    def test_gradient_through_loss(self):
        rng = np.random.default_rng(8)
        n = 6
        pos = random_positives(rng, n)
        mask = rng.uniform(size=(n, n))
        u = Tensor(rng.normal(size=(n, 3)), requires_grad=True)
        v = Tensor(rng.normal(size=(n, 3)), requires_grad=True)

        def loss_fn():
            return contrastive_loss_s(u, v, mask, pos, 0.7)

        assert check_gradients(loss_fn, [u, v]) <= 1e-5


class TestLossBound:
    def test_zero_mask_gives_equality(self):
        rng = np.random.default_rng(9)
        n = 8
        pos = random_positives(rng, n)
        u, v = rng.normal(size=(n, 4)), rng.normal(size=(n, 4))
        plain, masked, holds = loss_bound_check(u, v, np.zeros((n, n)), pos, 0.7)
        assert plain == masked
        assert holds

    def test_strict_inequality_with_positive_mass_nonneg_sims(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            n = int(rng.integers(3, 12))
            pos = random_positives(rng, n, k=1)
            u = np.abs(rng.normal(size=(n, 5)))
            v = np.abs(rng.normal(size=(n, 5)))
            mask = rng.uniform(0.1, 1.0, size=(n, n))
            plain, masked, holds = loss_bound_check(u, v, mask, pos, 0.6)
            assert holds
            assert masked < plain

    def test_holds_with_clamped_similarities_for_any_sign(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            n = int(rng.integers(3, 10))
            pos = random_positives(rng, n, k=1)
            u = Tensor(rng.normal(size=(n, 4)))
            v = Tensor(rng.normal(size=(n, 4)))
            mask = rng.uniform(size=(n, n))
            masked = contrastive_loss_s(u, v, mask, pos, 0.7,
                                        clamp_sim_nonneg=True).item()
            plain = baseline_loss(u, v, pos, 0.7, clamp_sim_nonneg=True).item()
            assert masked <= plain + 1e-10


class TestPretrainLoss:
    def setup_method(self):
        rng = np.random.default_rng(12)
        self.n = 6
        self.pos = random_positives(rng, self.n)
        self.mask = rng.uniform(size=(self.n, self.n))
        self.h1 = Tensor(rng.normal(size=(self.n, 4)))
        self.h2 = Tensor(rng.normal(size=(self.n, 4)))
        self.hs = Tensor(rng.normal(size=(self.n, 4)))

    def test_network_variant_requires_self_expression_loss(self):
        with pytest.raises(ValidationError):
            pretrain_loss(self.h1, self.h2, self.hs, self.mask, self.pos,
                          0.7, NETWORK)

    def test_mu_zero_matches_closed_form_shape(self):
        se_loss = Tensor(np.asarray(13.0))
        with_net = pretrain_loss(self.h1, self.h2, self.hs, self.mask,
                                 self.pos, 0.7, NETWORK,
                                 self_expr_loss=se_loss, mu=0.0).item()
        closed = pretrain_loss(self.h1, self.h2, self.hs, self.mask,
                               self.pos, 0.7, CLOSED_FORM).item()
        assert with_net == pytest.approx(closed)

    def test_self_view_equal_to_second_view_doubles_loss(self):
        doubled = pretrain_loss(self.h1, self.h2, Tensor(self.h2.data.copy()),
                                self.mask, self.pos, 0.7, CLOSED_FORM).item()
        single = contrastive_loss_s(self.h1, self.h2, self.mask, self.pos,
                                    0.7).item()
        assert doubled == pytest.approx(2 * single, rel=1e-12)

    def test_without_self_view_single_term(self):
        value = pretrain_loss(self.h1, self.h2, None, self.mask, self.pos,
                              0.7, CLOSED_FORM).item()
        assert value == pytest.approx(
            contrastive_loss_s(self.h1, self.h2, self.mask, self.pos,
                               0.7).item())

    def test_gradient_through_full_loss(self):
        rng = np.random.default_rng(13)
        u = Tensor(rng.normal(size=(self.n, 3)), requires_grad=True)
        v = Tensor(rng.normal(size=(self.n, 3)), requires_grad=True)
        w = Tensor(rng.normal(size=(self.n, 3)), requires_grad=True)

        def loss_fn():
            se = ad.reduce_sum(ad.mul(w, w))
            return pretrain_loss(u, v, w, self.mask, self.pos, 0.7,
                                 NETWORK, self_expr_loss=se, mu=0.3)

        assert check_gradients(loss_fn, [u, v, w]) <= 1e-5


class TestConfig:
    def test_tau_positive(self):
        with pytest.raises(ValidationError):
            ContrastConfig(tau=0.0)

    def test_k_pos_at_least_one(self):
        with pytest.raises(ValidationError):
            ContrastConfig(k_pos=0)
