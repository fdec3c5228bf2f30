import math

import numpy as np
import pytest
import torch

from hiccap.errors import ShapeMismatchError, ZeroVectorError
from hiccap.heads_losses import (
    ContrastiveHead,
    MlpBlock,
    PairProjection,
    PositiveWeights,
    RunningBatchNorm,
    binary_forward,
    class_probabilities,
    contrastive_total,
    cross_entropy_loss,
    matching_forward,
    matching_total,
    mlp_block,
    multitask_forward,
    multitask_total,
    nce_loss,
    project_pair,
    task_loss,
)


def nce_oracle(u, up, tau):
    """Brute-force double loop over the pooled formula."""
    n = u.shape[0]
    num = sum(math.exp(float(u[i] @ up[i]) / tau) for i in range(n))
    den = num + sum(
        math.exp(float(u[i] @ up[j]) / tau) for i in range(n) for j in range(n) if j != i
    )
    return -math.log(num / den)


def unit_rows(n, d, seed=0):
    r = np.random.default_rng(seed)
    x = r.normal(size=(n, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return torch.from_numpy(x)


class TestRunningBatchNorm:
    def test_train_mode_normalizes_two_sample_batch(self):
        bn = RunningBatchNorm(1)
        bn.train()
        out = bn(torch.tensor([[-1.0], [1.0]]))
        expect = 1.0 / math.sqrt(1.0 + bn.eps)
        assert out.squeeze().tolist() == pytest.approx([-expect, expect], abs=1e-6)

    def test_eval_mode_uses_running_stats(self):
        bn = RunningBatchNorm(2)
        bn.eval()
        x = torch.tensor([[3.0, -2.0]])
        out = bn(x)  # running mean 0, var 1, scale 1, shift 0
        assert torch.allclose(out, x / math.sqrt(1 + bn.eps), atol=1e-6)

    def test_singleton_train_batch_falls_back_to_running(self):
        bn = RunningBatchNorm(2)
        bn.train()
        x = torch.tensor([[5.0, 5.0]])
        out = bn(x)
        assert torch.allclose(out, x / math.sqrt(1 + bn.eps), atol=1e-6)

    def test_running_stats_update_only_when_enabled(self):
        bn = RunningBatchNorm(1)
        bn.train()
        bn.update_running = False
        bn(torch.tensor([[-4.0], [4.0]]))
        assert bn.running_mean.item() == 0.0 and bn.running_var.item() == 1.0
        bn.update_running = True
        bn(torch.tensor([[-4.0], [4.0]]))
        assert bn.running_var.item() == pytest.approx(0.9 * 1.0 + 0.1 * 16.0)


class TestMlpBlock:
    def test_shape_contract(self):
        head = MlpBlock(12, 2)
        out = mlp_block(torch.zeros(5, 12), head, mode="eval")
        assert out.shape == (5, 2)

    def test_zeroed_block_maps_zero_to_zero(self):
        head = MlpBlock(4, 2)
        with torch.no_grad():
            for p in head.parameters():
                p.zero_()
        out = mlp_block(torch.zeros(3, 4), head, mode="eval")
        assert torch.all(out == 0)

    def test_mode_restores_training_flag(self):
        head = MlpBlock(4, 2)
        head.eval()
        mlp_block(torch.zeros(2, 4), head, mode="train")
        assert not head.training

    def test_width_mismatch_rejected(self):
        head = MlpBlock(4, 2)
        with pytest.raises(ShapeMismatchError):
            head(torch.zeros(2, 5))


class TestClassifierHeads:
    def reps(self, b=3, d=4):
        r = np.random.default_rng(0)
        return [torch.from_numpy(r.normal(size=(b, d)).astype(np.float32)) for _ in range(3)]

    def test_equal_logits_give_half(self):
        probs = class_probabilities(torch.zeros(2, 2))
        assert torch.allclose(probs, torch.full((2, 2), 0.5))

    def test_softmax_hand_case(self):
        probs = class_probabilities(torch.tensor([[0.0, math.log(3.0)]]))
        assert probs.squeeze().tolist() == pytest.approx([0.25, 0.75], abs=1e-6)

    def test_binary_forward_rows_sum_to_one(self):
        head = MlpBlock(12, 2)
        head.eval()
        probs = binary_forward(*self.reps(), head)
        assert probs.shape == (3, 2)
        assert torch.allclose(probs.sum(dim=-1), torch.ones(3), atol=1e-6)

    def test_multitask_forward_shape_and_sums(self):
        heads = [MlpBlock(12, 2) for _ in range(4)]
        for h in heads:
            h.eval()
        probs = multitask_forward(*self.reps(), heads)
        assert probs.shape == (3, 4, 2)
        assert torch.allclose(probs.sum(dim=-1), torch.ones(3, 4), atol=1e-6)

    def test_matching_forward_shape(self):
        head = MlpBlock(8, 2)
        head.eval()
        r = self.reps()
        probs = matching_forward(r[0], r[1], head)
        assert probs.shape == (3, 2)
        assert torch.allclose(probs.sum(dim=-1), torch.ones(3), atol=1e-6)


class TestTaskLoss:
    def test_certain_correct_prediction_is_free(self):
        assert float(task_loss(torch.tensor([1.0, 0.0]), 0)) == 0.0

    def test_uniform_is_ln2(self):
        assert float(task_loss(torch.tensor([0.5, 0.5]), 1)) == pytest.approx(math.log(2), abs=1e-7)

    def test_quarter_case(self):
        loss = task_loss(torch.tensor([0.25, 0.75]), 1)
        assert float(loss) == pytest.approx(-math.log(0.75), abs=1e-7)

    def test_agrees_with_logit_space_loss(self):
        r = np.random.default_rng(1)
        logits = torch.from_numpy(r.normal(size=(6, 2)))
        golds = torch.from_numpy(r.integers(0, 2, size=6))
        a = task_loss(class_probabilities(logits), golds)
        b = cross_entropy_loss(logits, golds)
        assert float(a) == pytest.approx(float(b), rel=1e-10)


class TestWeightedTotals:
    def test_zero_losses_zero_total(self):
        state = PositiveWeights(("a", "b", "c", "d"))
        total = multitask_total([torch.tensor(0.0)] * 4, state)
        assert float(total.detach()) == 0.0

    def test_unit_weights_sum(self):
        state = PositiveWeights(("a", "b", "c", "d"))  # raw init makes softplus = 1
        losses = [torch.tensor(v) for v in (0.5, 0.25, 0.25, 1.0)]
        assert float(multitask_total(losses, state).detach()) == pytest.approx(2.0, abs=1e-6)

    def test_zero_raw_gives_ln2_weights(self):
        state = PositiveWeights(("a", "b", "c", "d"))
        with torch.no_grad():
            state.raw.zero_()
        total = multitask_total([torch.tensor(1.0)] * 4, state).detach()
        assert float(total) == pytest.approx(4 * math.log(2), abs=1e-6)

    def test_matching_total_same_mechanics(self):
        state = PositiveWeights(("vtm", "vam", "atm"))
        losses = [torch.tensor(v) for v in (0.1, 0.2, 0.3)]
        assert float(matching_total(losses, state).detach()) == pytest.approx(0.6, abs=1e-6)

    def test_weights_stay_positive(self):
        state = PositiveWeights(("a", "b", "c"))
        with torch.no_grad():
            state.raw.fill_(-50.0)
        assert (state.weights() > 0).all()

    def test_linear_in_losses_for_fixed_weights(self):
        state = PositiveWeights(("a", "b", "c", "d"))
        l1 = [torch.tensor(v) for v in (0.3, 0.1, 0.8, 0.2)]
        l2 = [torch.tensor(v) for v in (0.5, 0.9, 0.1, 0.4)]
        lhs = multitask_total([a + b for a, b in zip(l1, l2)], state).detach()
        rhs = (multitask_total(l1, state) + multitask_total(l2, state)).detach()
        assert float(lhs) == pytest.approx(float(rhs), rel=1e-6)


class TestProjectPair:
    def test_rows_are_unit_norm(self):
        stack = PairProjection(6, 6)
        stack.eval()
        out = project_pair(torch.from_numpy(np.random.default_rng(0).normal(size=(5, 6)).astype(np.float32)), stack)
        assert torch.allclose(out.norm(dim=-1), torch.ones(5), atol=1e-6)

    def test_identity_configuration_preserves_unit_vector(self):
        d = 4
        stack = PairProjection(d, d)
        stack.eval()
        block = stack.stack
        with torch.no_grad():
            for lin in (block.fc1, block.fc2, block.fc3):
                lin.weight.copy_(torch.eye(d))
                lin.bias.zero_()
            for bn in (block.bn1, block.bn2):
                bn.weight.fill_(math.sqrt(1.0 + bn.eps))  # cancel the eps shrink
                bn.bias.zero_()
        e1 = torch.zeros(1, d)
        e1[0, 0] = 1.0
        out = project_pair(e1, stack)
        assert torch.allclose(out, e1, atol=1e-6)

    def test_zero_row_rejected(self):
        stack = PairProjection(4, 4)
        stack.eval()
        with torch.no_grad():
            for p in stack.parameters():
                p.zero_()
        with pytest.raises(ZeroVectorError):
            project_pair(torch.ones(2, 4), stack)


class TestNceLoss:
    def test_single_row_is_exactly_zero(self):
        u = unit_rows(1, 4, 0)
        assert float(nce_loss(u, u, tau=0.07)) == 0.0

    def test_two_orthogonal_identical_pairs(self):
        """Pinned value -ln(2e / (2e + 2)) = softplus(-1) ~ 0.313262."""
        u = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
        loss = float(nce_loss(u, u.clone(), tau=1.0))
        assert loss == pytest.approx(0.313262, abs=1e-6)
        assert loss == pytest.approx(math.log(1 + math.exp(-1.0)), abs=1e-12)

    def test_duplicated_batch_follows_pooled_formula(self):
        u = unit_rows(3, 5, 1)
        up = unit_rows(3, 5, 2)
        doubled = float(nce_loss(torch.cat([u, u]), torch.cat([up, up]), tau=0.5))
        oracle = nce_oracle(torch.cat([u, u]), torch.cat([up, up]), tau=0.5)
        assert doubled == pytest.approx(oracle, rel=1e-9)
        assert doubled != pytest.approx(float(nce_loss(u, up, tau=0.5)), abs=1e-3)

    def test_nonnegative_and_positive_for_multi_row(self):
        for seed in range(5):
            u = unit_rows(4, 6, seed)
            up = unit_rows(4, 6, seed + 100)
            loss = float(nce_loss(u, up, tau=0.07))
            assert loss > 0.0

    @pytest.mark.parametrize("n", [1, 2, 5, 17, 32])
    def test_matches_brute_force(self, n):
        u = unit_rows(n, 8, n)
        up = unit_rows(n, 8, n + 50)
        mine = float(nce_loss(u, up, tau=0.2))
        assert mine == pytest.approx(nce_oracle(u, up, tau=0.2), rel=1e-6, abs=1e-12)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeMismatchError):
            nce_loss(unit_rows(2, 3), unit_rows(3, 3), tau=1.0)


class TestContrastiveTotal:
    def test_single_sample_batch_is_zero(self):
        head = ContrastiveHead(d_model=6, tau=0.07)
        head.eval()
        r = np.random.default_rng(0)
        z = [torch.from_numpy(r.normal(size=(1, 6)).astype(np.float32)) for _ in range(3)]
        assert float(contrastive_total(*z, head).detach()) == pytest.approx(0.0, abs=1e-7)

    def test_unit_weight_sum_of_pair_losses(self):
        head = ContrastiveHead(d_model=6, tau=0.1)
        head.eval()
        r = np.random.default_rng(1)
        z_a, z_v, z_t = [torch.from_numpy(r.normal(size=(4, 6)).astype(np.float32)) for _ in range(3)]
        total, components = head(z_a, z_v, z_t)
        total = total.detach()
        assert float(total) == pytest.approx(sum(float(v.detach()) for v in components.values()), rel=1e-6)

    def test_matches_brute_force_through_projections(self):
        head = ContrastiveHead(d_model=5, proj_dim=4, tau=0.3)
        head.eval()
        r = np.random.default_rng(2)
        z_a, z_v, z_t = [torch.from_numpy(r.normal(size=(6, 5)).astype(np.float32)) for _ in range(3)]
        total = float(contrastive_total(z_a, z_v, z_t, head).detach())
        expect = 0.0
        for pair, (x, y) in {"av": (z_a, z_v), "at": (z_a, z_t), "vt": (z_v, z_t)}.items():
            u = head.projections[pair](x).detach()
            up = head.projections[pair](y).detach()
            expect += nce_oracle(u, up, tau=0.3)
        assert total == pytest.approx(expect, rel=1e-5)


def test_loss_gradients_match_finite_differences():
    """Gradcheck through heads, BN in train mode, projections, and NCE."""
    torch.manual_seed(0)
    d = 6
    head = MlpBlock(3 * d, 2, dtype=torch.float64)
    weights = PositiveWeights(("a", "b", "c", "d"), dtype=torch.float64)
    contrast = ContrastiveHead(d_model=d, proj_dim=5, tau=0.2, dtype=torch.float64)
    module = torch.nn.ModuleDict({"head": head, "w": weights, "c": contrast})
    module.train()
    for m in module.modules():
        if isinstance(m, RunningBatchNorm):
            m.update_running = False

    r = np.random.default_rng(3)
    reps = [torch.from_numpy(r.normal(size=(4, d))) for _ in range(3)]
    golds = torch.from_numpy(r.integers(0, 2, size=4))

    def loss_fn():
        task = cross_entropy_loss(head(torch.cat(reps, dim=-1)), golds)
        task_total = weights([task, task * 0.5, task * 0.25, task * 2.0])
        ctr = contrastive_total(reps[0], reps[1], reps[2], contrast)
        return task_total + ctr

    from gradcheck import finite_difference_worst_error

    assert finite_difference_worst_error(loss_fn, module.parameters()) <= 1e-4
