"""Self-supervised loss forms and their projector heads.

Four methods are supported: SimCLR (NT-Xent), MoCoV2+ (InfoNCE against a
FIFO key queue), BYOL (2 - 2 cos) and VICReg (invariance, variance hinge and
covariance penalty). Each loss takes row-aligned ``online`` and ``target``
embedding batches; stopping the gradient on the target side is the caller's
job.
"""

from __future__ import annotations

import math
from typing import Literal

import torch
import torch.nn.functional as F
from torch import nn

from .contracts.experiment import SSLConfig, normalize_ssl_kind
from .errors import ObjectiveError

Branch = Literal["current", "distill"]
BRANCHES: tuple[Branch, ...] = ("current", "distill")

SSL_KINDS = ("simclr", "mocov2plus", "byol", "vicreg")
CONTRASTIVE_KINDS = frozenset({"simclr", "mocov2plus"})
VICREG_EPS = 1e-4


def _check_pair(online: torch.Tensor, target: torch.Tensor, *, min_batch: int) -> None:
    if online.ndim != 2 or target.ndim != 2:
        raise ObjectiveError(
            "embeddings must be 2-D (batch, dim)",
            details={"online": list(online.shape), "target": list(target.shape)},
        )
    if online.shape != target.shape:
        raise ObjectiveError(
            f"online {tuple(online.shape)} and target {tuple(target.shape)} embeddings differ in shape"
        )
    if online.shape[0] < min_batch:
        raise ObjectiveError(
            f"batch of {online.shape[0]} is too small; at least {min_batch} rows are needed",
            details={"batch": int(online.shape[0])},
        )


def nt_xent(online: torch.Tensor, target: torch.Tensor, temperature: float) -> torch.Tensor:
    """NT-Xent over 2N views: each anchor against its positive and 2N - 2 negatives."""
    _check_pair(online, target, min_batch=2)
    n = online.shape[0]
    z = F.normalize(torch.cat([online, target]), dim=1)
    logits = z @ z.T / temperature
    logits = logits.masked_fill(torch.eye(2 * n, dtype=torch.bool, device=z.device), float("-inf"))
    positives = torch.cat([torch.arange(n, 2 * n), torch.arange(0, n)]).to(z.device)
    return F.cross_entropy(logits, positives)


def info_nce(
    query: torch.Tensor,
    key: torch.Tensor,
    temperature: float,
    negatives: torch.Tensor | None = None,
) -> torch.Tensor:
    """InfoNCE of each query against its key and the queued negatives.

    Without queued negatives the other keys of the batch act as negatives.
    """
    _check_pair(query, key, min_batch=2)
    q = F.normalize(query, dim=1)
    k = F.normalize(key, dim=1)
    if negatives is None or negatives.shape[0] == 0:
        logits = q @ k.T / temperature
        return F.cross_entropy(logits, torch.arange(q.shape[0], device=q.device))
    if negatives.shape[1] != q.shape[1]:
        raise ObjectiveError(
            f"queue dimension {negatives.shape[1]} does not match embedding dimension {q.shape[1]}"
        )
    positive = (q * k).sum(dim=1, keepdim=True)
    negative = q @ negatives.to(q).T
    logits = torch.cat([positive, negative], dim=1) / temperature
    return F.cross_entropy(logits, torch.zeros(q.shape[0], dtype=torch.long, device=q.device))


def byol_loss(prediction: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean over the batch of ``2 - 2 cos(p, z)``."""
    _check_pair(prediction, target, min_batch=1)
    cosine = F.cosine_similarity(prediction, target, dim=1)
    return (2.0 - 2.0 * cosine).mean()


def vicreg_terms(
    online: torch.Tensor, target: torch.Tensor, eps: float = VICREG_EPS
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Unweighted (invariance, variance, covariance) terms."""
    _check_pair(online, target, min_batch=2)
    n, dim = online.shape
    invariance = F.mse_loss(online, target)

    variance = online.new_zeros(())
    covariance = online.new_zeros(())
    off_diagonal = ~torch.eye(dim, dtype=torch.bool, device=online.device)
    for z in (online, target):
        std = torch.sqrt(z.var(dim=0) + eps)
        variance = variance + F.relu(1.0 - std).mean() / 2
        centred = z - z.mean(dim=0)
        cov = centred.T @ centred / (n - 1)
        covariance = covariance + cov[off_diagonal].pow(2).sum() / dim
    return invariance, variance, covariance


def vicreg_loss(
    online: torch.Tensor,
    target: torch.Tensor,
    weights: tuple[float, float, float] = (25.0, 25.0, 1.0),
) -> torch.Tensor:
    invariance, variance, covariance = vicreg_terms(online, target)
    lam, mu, nu = weights
    return lam * invariance + mu * variance + nu * covariance


class EmbeddingQueue:
    """Fixed-capacity FIFO of detached key embeddings, oldest first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ObjectiveError("queue capacity must be at least 1")
        self.capacity = capacity
        self._keys: torch.Tensor | None = None

    def __len__(self) -> int:
        return 0 if self._keys is None else int(self._keys.shape[0])

    def contents(self) -> torch.Tensor | None:
        return self._keys

    def push(self, keys: torch.Tensor) -> None:
        keys = keys.detach()
        if keys.ndim != 2:
            raise ObjectiveError("queued keys must be 2-D (batch, dim)")
        if self._keys is not None and self._keys.shape[1] != keys.shape[1]:
            raise ObjectiveError(
                f"key dimension {keys.shape[1]} does not match queue dimension {self._keys.shape[1]}"
            )
        merged = keys if self._keys is None else torch.cat([self._keys, keys.to(self._keys.device)])
        self._keys = merged[-self.capacity :].clone()

    def to(self, device: torch.device | str) -> EmbeddingQueue:
        if self._keys is not None:
            self._keys = self._keys.to(device)
        return self

    def reset(self) -> None:
        self._keys = None


class SSLObjective:
    """One SSL method with its hyperparameters and, for MoCoV2+, its key queues."""

    def __init__(
        self,
        kind: str,
        *,
        temperature: float = 0.5,
        momentum: float | None = None,
        momentum_schedule: str = "constant",
        queue_size: int = 4096,
        vicreg_weights: tuple[float, float, float] = (25.0, 25.0, 1.0),
        symmetrize: bool = False,
    ):
        kind = normalize_ssl_kind(kind)
        if kind not in SSL_KINDS:
            raise ObjectiveError(f"unknown SSL kind {kind!r}", details={"known": list(SSL_KINDS)})
        if temperature <= 0:
            raise ObjectiveError(f"temperature must be positive, got {temperature}")
        if momentum is not None and not 0.0 <= momentum <= 1.0:
            raise ObjectiveError(f"momentum must lie in [0, 1], got {momentum}")
        self.kind = kind
        self.temperature = temperature
        self.momentum = momentum
        self.momentum_schedule = momentum_schedule
        self.vicreg_weights = tuple(vicreg_weights)
        self.symmetrize = symmetrize
        self.queues: dict[str, EmbeddingQueue] = (
            {branch: EmbeddingQueue(queue_size) for branch in BRANCHES} if self.uses_queue else {}
        )

    @classmethod
    def from_config(cls, config: SSLConfig) -> SSLObjective:
        return cls(
            config.kind,
            temperature=config.resolved_temperature(),
            momentum=config.resolved_momentum(),
            momentum_schedule=config.momentum_schedule,
            queue_size=config.queue_size,
            vicreg_weights=config.vicreg_weights,
            symmetrize=config.symmetrize,
        )

    @property
    def uses_queue(self) -> bool:
        return self.kind == "mocov2plus"

    @property
    def uses_momentum(self) -> bool:
        return self.momentum is not None

    @property
    def min_batch(self) -> int:
        return 1 if self.kind == "byol" else 2

    def momentum_at(self, step: int, total_steps: int) -> float:
        """EMA coefficient for *step*; the cosine schedule rises to 1.0 over the task."""
        if self.momentum is None:
            raise ObjectiveError(f"{self.kind} has no momentum extractor")
        if self.momentum_schedule == "constant" or total_steps <= 0:
            return self.momentum
        progress = min(step, total_steps) / total_steps
        return 1.0 - (1.0 - self.momentum) * (math.cos(math.pi * progress) + 1.0) / 2.0

    def _one_direction(self, online: torch.Tensor, target: torch.Tensor, branch: Branch) -> torch.Tensor:
        if self.kind == "simclr":
            return nt_xent(online, target, self.temperature)
        if self.kind == "mocov2plus":
            return info_nce(online, target, self.temperature, self.queues[branch].contents())
        if self.kind == "byol":
            return byol_loss(online, target)
        return vicreg_loss(online, target, self.vicreg_weights)

    def ssl_loss(
        self, online: torch.Tensor, target: torch.Tensor, branch: Branch = "current"
    ) -> torch.Tensor:
        """Loss of *online* against *target*; averaged over both orders when symmetrized."""
        if branch not in BRANCHES:
            raise ObjectiveError(f"unknown branch {branch!r}")
        loss = self._one_direction(online, target, branch)
        if self.symmetrize:
            loss = 0.5 * (loss + self._one_direction(target, online, branch))
        return loss

    def queue_update(self, keys: torch.Tensor, branch: Branch = "current") -> SSLObjective:
        if not self.uses_queue:
            raise ObjectiveError(f"{self.kind} keeps no key queue")
        self.queues[branch].push(F.normalize(keys.detach(), dim=1))
        return self

    def state_dict(self) -> dict:
        return {
            "kind": self.kind,
            "queues": {name: queue.contents() for name, queue in self.queues.items()},
        }

    def load_state_dict(self, state: dict) -> None:
        if state.get("kind") != self.kind:
            raise ObjectiveError(
                f"checkpoint objective {state.get('kind')!r} does not match {self.kind!r}"
            )
        for name, keys in state.get("queues", {}).items():
            queue = self.queues[name]
            queue.reset()
            if keys is not None:
                queue.push(keys)

    def to(self, device: torch.device | str) -> SSLObjective:
        """Move the queued keys to *device*."""
        for queue in self.queues.values():
            queue.to(device)
        return self


def build_projector(kind: str, in_dim: int, hidden_dim: int, out_dim: int) -> nn.Module:
    """Projector head placed after the backbone, shaped after each method's recipe."""
    kind = normalize_ssl_kind(kind)
    if kind == "simclr":
        return nn.Sequential(
            nn.Linear(in_dim, hidden_dim), nn.ReLU(inplace=True), nn.Linear(hidden_dim, out_dim)
        )
    if kind in ("mocov2plus", "byol"):
        return nn.Sequential(
            nn.Linear(in_dim, hidden_dim),
            nn.BatchNorm1d(hidden_dim),
            nn.ReLU(inplace=True),
            nn.Linear(hidden_dim, out_dim),
        )
    if kind == "vicreg":
        return nn.Sequential(
            nn.Linear(in_dim, hidden_dim),
            nn.BatchNorm1d(hidden_dim),
            nn.ReLU(inplace=True),
            nn.Linear(hidden_dim, hidden_dim),
            nn.BatchNorm1d(hidden_dim),
            nn.ReLU(inplace=True),
            nn.Linear(hidden_dim, out_dim),
        )
    raise ObjectiveError(f"unknown SSL kind {kind!r}", details={"known": list(SSL_KINDS)})
