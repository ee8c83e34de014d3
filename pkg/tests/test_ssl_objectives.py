import math
from collections import deque

import pytest
import torch
from torch.autograd import gradcheck

from packages.kaizen.contracts.experiment import SSLConfig
from packages.kaizen.errors import ObjectiveError
from packages.kaizen.ssl_objectives import (
    EmbeddingQueue,
    SSLObjective,
    build_projector,
    byol_loss,
    info_nce,
    nt_xent,
    vicreg_loss,
    vicreg_terms,
)


def _unit(rows):
    out = []
    for row in rows:
        norm = math.sqrt(sum(v * v for v in row))
        out.append([v / norm for v in row])
    return out


def _dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def nt_xent_oracle(online, target, temperature):
    views = _unit(online) + _unit(target)
    n = len(online)
    total = 0.0
    for i, anchor in enumerate(views):
        positive = (i + n) % (2 * n)
        denominator = sum(
            math.exp(_dot(anchor, other) / temperature) for j, other in enumerate(views) if j != i
        )
        total -= math.log(math.exp(_dot(anchor, views[positive]) / temperature) / denominator)
    return total / (2 * n)


def info_nce_oracle(query, key, temperature, negatives):
    queries, keys = _unit(query), _unit(key)
    total = 0.0
    for q, k in zip(queries, keys):
        positive = math.exp(_dot(q, k) / temperature)
        denominator = positive + sum(math.exp(_dot(q, neg) / temperature) for neg in negatives)
        total -= math.log(positive / denominator)
    return total / len(queries)


def vicreg_oracle(online, target, weights, eps=1e-4):
    n, dim = len(online), len(online[0])
    invariance = sum((a - b) ** 2 for ra, rb in zip(online, target) for a, b in zip(ra, rb)) / (n * dim)
    variance = covariance = 0.0
    for z in (online, target):
        means = [sum(row[d] for row in z) / n for d in range(dim)]
        for d in range(dim):
            var = sum((row[d] - means[d]) ** 2 for row in z) / (n - 1)
            variance += max(0.0, 1.0 - math.sqrt(var + eps)) / dim / 2
        for a in range(dim):
            for b in range(dim):
                if a != b:
                    cov = sum((row[a] - means[a]) * (row[b] - means[b]) for row in z) / (n - 1)
                    covariance += cov**2 / dim
    lam, mu, nu = weights
    return lam * invariance + mu * variance + nu * covariance


def _pair(n=6, dim=5, seed=0):
    generator = torch.Generator().manual_seed(seed)
    online = torch.randn(n, dim, generator=generator, dtype=torch.float64)
    target = torch.randn(n, dim, generator=generator, dtype=torch.float64)
    return online, target


class TestLossValues:
    def test_nt_xent_two_sources_by_enumeration(self):
        online = [[1.0, 0.0], [0.0, 1.0]]
        target = [[0.8, 0.6], [-0.6, 0.8]]
        expected = nt_xent_oracle(online, target, 0.5)
        value = nt_xent(torch.tensor(online, dtype=torch.float64), torch.tensor(target, dtype=torch.float64), 0.5)
        assert value.item() == pytest.approx(expected, abs=1e-12)

    def test_nt_xent_random_batch(self):
        online, target = _pair()
        expected = nt_xent_oracle(online.tolist(), target.tolist(), 0.2)
        assert nt_xent(online, target, 0.2).item() == pytest.approx(expected, abs=1e-10)

    def test_info_nce_with_queue(self):
        query, key = _pair(n=4, dim=3, seed=1)
        negatives = torch.nn.functional.normalize(torch.randn(7, 3, dtype=torch.float64), dim=1)
        expected = info_nce_oracle(query.tolist(), key.tolist(), 0.2, negatives.tolist())
        assert info_nce(query, key, 0.2, negatives).item() == pytest.approx(expected, abs=1e-10)

    def test_info_nce_casts_queued_negatives_to_the_query(self):
        query, key = _pair(n=4, dim=3, seed=1)
        negatives = torch.nn.functional.normalize(torch.randn(7, 3, dtype=torch.float64), dim=1)
        expected = info_nce(query, key, 0.2, negatives).item()
        assert info_nce(query, key, 0.2, negatives.float()).item() == pytest.approx(expected, abs=1e-6)

    def test_info_nce_in_batch_negatives_without_queue(self):
        query, key = _pair(n=4, dim=3, seed=2)
        keys = _unit(key.tolist())
        total = 0.0
        for i, q in enumerate(_unit(query.tolist())):
            logits = [_dot(q, k) / 0.2 for k in keys]
            total -= logits[i] - math.log(sum(math.exp(v) for v in logits))
        assert info_nce(query, key, 0.2).item() == pytest.approx(total / 4, abs=1e-10)

    def test_byol_identical_vectors_is_zero(self):
        online, _ = _pair()
        assert byol_loss(online, online.clone()).item() == pytest.approx(0.0, abs=1e-12)

    def test_byol_matches_cosine_form(self):
        online, target = _pair(n=3, dim=4, seed=3)
        expected = sum(
            2 - 2 * _dot(p, z) for p, z in zip(_unit(online.tolist()), _unit(target.tolist()))
        ) / 3
        assert byol_loss(online, target).item() == pytest.approx(expected, abs=1e-12)

    def test_vicreg_identical_spread_batches(self):
        z = torch.tensor([[-2.0, 0.0], [2.0, 0.0], [0.0, 2.0], [0.0, -2.0]], dtype=torch.float64)
        invariance, variance, covariance = vicreg_terms(z, z.clone())
        assert invariance.item() == 0.0
        assert variance.item() == 0.0
        assert covariance.item() == pytest.approx(0.0, abs=1e-12)

    def test_vicreg_matches_oracle(self):
        online, target = _pair(n=5, dim=3, seed=4)
        online = online * 0.5
        expected = vicreg_oracle(online.tolist(), target.tolist(), (25.0, 25.0, 1.0))
        assert vicreg_loss(online, target).item() == pytest.approx(expected, rel=1e-10)


class TestGradients:
    @pytest.mark.parametrize(
        "loss",
        [
            lambda a, b: nt_xent(a, b, 0.5),
            lambda a, b: info_nce(a, b, 0.2),
            byol_loss,
            lambda a, b: vicreg_loss(0.5 * a, 0.5 * b),
        ],
        ids=["nt_xent", "info_nce", "byol", "vicreg"],
    )
    def test_finite_difference(self, loss):
        online, target = _pair(n=4, dim=3, seed=5)
        online.requires_grad_(True)
        target.requires_grad_(True)
        assert gradcheck(loss, (online, target), eps=1e-6, atol=1e-5)


class TestInvariances:
    @pytest.mark.parametrize("kind", ["simclr", "mocov2plus", "byol", "vicreg"])
    def test_batch_permutation(self, kind):
        objective = SSLObjective(kind, temperature=0.3)
        online, target = _pair(n=6, dim=4, seed=6)
        order = torch.tensor([3, 0, 5, 1, 4, 2])
        assert objective.ssl_loss(online[order], target[order]).item() == pytest.approx(
            objective.ssl_loss(online, target).item(), abs=1e-10
        )

    @pytest.mark.parametrize("kind", ["simclr", "byol", "vicreg"])
    def test_symmetrized_loss_is_order_free(self, kind):
        objective = SSLObjective(kind, symmetrize=True)
        online, target = _pair(seed=7)
        assert objective.ssl_loss(online, target).item() == pytest.approx(
            objective.ssl_loss(target, online).item(), abs=1e-12
        )


class TestEmbeddingQueue:
    def test_keeps_last_pushed(self):
        queue = EmbeddingQueue(8)
        keys = torch.arange(9, dtype=torch.float32).unsqueeze(1)
        queue.push(keys[:3])
        queue.push(keys[3:])
        assert torch.equal(queue.contents(), keys[1:])

    def test_full_push_replaces_everything(self):
        queue = EmbeddingQueue(4)
        queue.push(torch.zeros(3, 2))
        queue.push(torch.ones(4, 2))
        assert torch.equal(queue.contents(), torch.ones(4, 2))

    def test_matches_ring_buffer_simulation(self):
        capacity = 5
        queue = EmbeddingQueue(capacity)
        reference: deque[float] = deque(maxlen=capacity)
        value = 0.0
        for size in [1, 3, 2, 7, 1, 5, 4]:
            batch = torch.arange(value, value + size).unsqueeze(1)
            value += size
            queue.push(batch)
            reference.extend(batch.squeeze(1).tolist())
            assert queue.contents().squeeze(1).tolist() == list(reference)

    def test_pushed_keys_are_detached(self):
        queue = EmbeddingQueue(4)
        queue.push(torch.ones(2, 3, requires_grad=True))
        assert not queue.contents().requires_grad

    def test_dimension_mismatch(self):
        queue = EmbeddingQueue(4)
        queue.push(torch.ones(2, 3))
        with pytest.raises(ObjectiveError, match="does not match"):
            queue.push(torch.ones(2, 4))


class TestSSLObjective:
    def test_from_config_uses_method_defaults(self):
        simclr = SSLObjective.from_config(SSLConfig(kind="simclr"))
        assert simclr.temperature == 0.5
        assert not simclr.uses_momentum
        assert simclr.queues == {}

        moco = SSLObjective.from_config(SSLConfig(kind="MoCoV2+", queue_size=16))
        assert moco.temperature == 0.2
        assert moco.momentum == 0.99
        assert set(moco.queues) == {"current", "distill"}

    def test_queue_update_requires_moco(self):
        with pytest.raises(ObjectiveError, match="no key queue"):
            SSLObjective("byol", momentum=0.99).queue_update(torch.ones(2, 3))

    def test_branches_keep_separate_queues(self):
        objective = SSLObjective("mocov2plus", temperature=0.2, momentum=0.99, queue_size=8)
        online, target = _pair(n=4, dim=3, seed=8)
        before = objective.ssl_loss(online, target, branch="current").item()
        objective.queue_update(torch.randn(5, 3, dtype=torch.float64), branch="distill")

        assert len(objective.queues["distill"]) == 5
        assert len(objective.queues["current"]) == 0
        assert objective.ssl_loss(online, target, branch="current").item() == before
        assert objective.ssl_loss(online, target, branch="distill").item() != before

    def test_queued_keys_are_normalized(self):
        objective = SSLObjective("mocov2plus", momentum=0.99, queue_size=8)
        objective.queue_update(torch.tensor([[3.0, 4.0]]))
        assert torch.allclose(objective.queues["current"].contents(), torch.tensor([[0.6, 0.8]]))

    def test_state_dict_roundtrip(self):
        source = SSLObjective("mocov2plus", momentum=0.99, queue_size=8)
        source.queue_update(torch.randn(3, 4))
        restored = SSLObjective("mocov2plus", momentum=0.99, queue_size=8)
        restored.load_state_dict(source.state_dict())
        assert torch.equal(restored.queues["current"].contents(), source.queues["current"].contents())
        assert len(restored.queues["distill"]) == 0

    def test_to_moves_queued_keys(self):
        objective = SSLObjective("mocov2plus", momentum=0.99, queue_size=8)
        objective.queue_update(torch.randn(3, 4))
        assert objective.to("meta") is objective
        assert objective.queues["current"].contents().device.type == "meta"
        assert objective.queues["distill"].contents() is None

    def test_state_dict_kind_mismatch(self):
        with pytest.raises(ObjectiveError, match="does not match"):
            SSLObjective("simclr").load_state_dict({"kind": "byol", "queues": {}})

    def test_momentum_schedule(self):
        constant = SSLObjective("byol", momentum=0.99)
        assert constant.momentum_at(50, 100) == 0.99

        cosine = SSLObjective("byol", momentum=0.99, momentum_schedule="cosine")
        assert cosine.momentum_at(0, 100) == pytest.approx(0.99)
        assert cosine.momentum_at(50, 100) == pytest.approx(0.995)
        assert cosine.momentum_at(100, 100) == pytest.approx(1.0)

    def test_momentum_requires_momentum_kind(self):
        with pytest.raises(ObjectiveError):
            SSLObjective("simclr").momentum_at(0, 10)

    def test_vicreg_needs_two_rows(self):
        with pytest.raises(ObjectiveError, match="too small"):
            SSLObjective("vicreg").ssl_loss(torch.ones(1, 4), torch.ones(1, 4))

    def test_shape_mismatch(self):
        with pytest.raises(ObjectiveError, match="differ in shape"):
            byol_loss(torch.ones(2, 3), torch.ones(2, 4))

    def test_unknown_kind(self):
        with pytest.raises(ObjectiveError, match="unknown SSL kind"):
            SSLObjective("barlow")

    @pytest.mark.parametrize("kind", ["simclr", "mocov2plus", "byol", "vicreg"])
    def test_projector_shapes(self, kind):
        head = build_projector(kind, 12, 16, 8)
        assert head(torch.randn(4, 12)).shape == (4, 8)
