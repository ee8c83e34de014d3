"""Networks of the training architecture and their lifecycle.

A :class:`ModelState` bundles the current feature extractor, its momentum
copy (momentum-based SSL kinds only), the distillation and current-task
predictors, the all-class classifier and, from task 2 onwards, the frozen
snapshot of the previous task's extractor and classifier.
"""

from __future__ import annotations

import copy
import hashlib
import pickle
from collections.abc import Iterator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import torch
from torch import nn
from torchvision.models import resnet18

from .augmentations import ViewPair
from .contracts.experiment import ArchitectureSpec, ClassifierInput, normalize_ssl_kind
from .errors import ModelError
from .logging import get_logger
from .ssl_objectives import SSL_KINDS, build_projector

logger = get_logger(__name__)

BACKBONES = ("resnet18", "convnet")
MOMENTUM_SSL_KINDS = frozenset({"mocov2plus", "byol"})
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
CHECKPOINT_FORMAT = 1


class Normalize(nn.Module):
    def __init__(self, mean: tuple[float, ...] = IMAGENET_MEAN, std: tuple[float, ...] = IMAGENET_STD):
        super().__init__()
        self.register_buffer("mean", torch.tensor(mean).view(1, -1, 1, 1))
        self.register_buffer("std", torch.tensor(std).view(1, -1, 1, 1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return (x - self.mean) / self.std


class ConvNet(nn.Module):
    """Four conv blocks of widths w, 2w, 4w, 8w followed by global pooling."""

    def __init__(self, width: int = 32):
        super().__init__()
        layers: list[nn.Module] = []
        in_channels = 3
        for multiplier in (1, 2, 4, 8):
            out_channels = width * multiplier
            layers += [
                nn.Conv2d(in_channels, out_channels, 3, padding=1, bias=False),
                nn.BatchNorm2d(out_channels),
                nn.ReLU(inplace=True),
            ]
            if multiplier != 8:
                layers.append(nn.MaxPool2d(2))
            in_channels = out_channels
        layers += [nn.AdaptiveAvgPool2d(1), nn.Flatten()]
        self.body = nn.Sequential(*layers)
        self.out_dim = in_channels

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.body(x)


def build_backbone(spec: ArchitectureSpec) -> tuple[nn.Module, int]:
    """Return the backbone and its feature dimension."""
    if spec.backbone == "resnet18":
        net = resnet18(weights=None)
        if spec.image_size <= 64:
            net.conv1 = nn.Conv2d(3, 64, kernel_size=3, stride=1, padding=1, bias=False)
            net.maxpool = nn.Identity()
        out_dim = net.fc.in_features
        net.fc = nn.Identity()
        return net, out_dim
    if spec.backbone == "convnet":
        net = ConvNet(spec.width)
        return net, net.out_dim
    raise ModelError(
        f"unknown backbone {spec.backbone!r}", details={"known": list(BACKBONES)}
    )


@dataclass
class ExtractorOutput:
    features: torch.Tensor
    embedding: torch.Tensor


class FeatureExtractor(nn.Module):
    """Normalisation, backbone and SSL projector.

    ``features`` is the backbone representation read by the classifier;
    ``embedding`` is the projector output the SSL losses compare.
    """

    def __init__(self, spec: ArchitectureSpec, ssl_kind: str):
        super().__init__()
        self.normalize = Normalize()
        self.backbone, self.feature_dim = build_backbone(spec)
        self.projector = build_projector(
            ssl_kind, self.feature_dim, spec.projector_hidden, spec.projector_dim
        )
        self.embedding_dim = spec.projector_dim

    def forward(self, x: torch.Tensor) -> ExtractorOutput:
        features = self.backbone(self.normalize(x))
        return ExtractorOutput(features=features, embedding=self.projector(features))


def build_predictor(dim: int, hidden: int) -> nn.Module:
    return nn.Sequential(
        nn.Linear(dim, hidden), nn.BatchNorm1d(hidden), nn.ReLU(inplace=True), nn.Linear(hidden, dim)
    )


def build_classifier(in_dim: int, hidden: int, num_outputs: int) -> nn.Module:
    """Hidden affine layer, ReLU, output affine layer over all classes."""
    return nn.Sequential(
        nn.Linear(in_dim, hidden), nn.ReLU(inplace=True), nn.Linear(hidden, num_outputs)
    )


def freeze(module: nn.Module) -> nn.Module:
    module.eval()
    for parameter in module.parameters():
        parameter.requires_grad_(False)
    return module


@dataclass
class ModelState:
    """All networks of one training run plus the current task index."""

    spec: ArchitectureSpec
    ssl_kind: str
    f_current: FeatureExtractor
    h_kd: nn.Module
    h_ssl: nn.Module
    classifier: nn.Module
    f_momentum: FeatureExtractor | None = None
    prev_f: FeatureExtractor | None = None
    prev_g: nn.Module | None = None
    task_index: int = 1
    extras: dict[str, Any] = field(default_factory=dict)

    def named_modules(self) -> Iterator[tuple[str, nn.Module]]:
        for name in ("f_current", "f_momentum", "h_kd", "h_ssl", "classifier", "prev_f", "prev_g"):
            module = getattr(self, name)
            if module is not None:
                yield name, module

    def check(self) -> None:
        has_prev = self.prev_f is not None and self.prev_g is not None
        if has_prev != (self.task_index > 1):
            raise ModelError(
                "previous snapshot must exist exactly when task_index > 1",
                details={"task_index": self.task_index, "has_prev": has_prev},
            )

    def to(self, device: torch.device | str) -> ModelState:
        for _, module in self.named_modules():
            module.to(device)
        return self

    def train(self) -> ModelState:
        for name, module in self.named_modules():
            if name not in ("prev_f", "prev_g"):
                module.train()
        return self

    def eval(self) -> ModelState:
        for _, module in self.named_modules():
            module.eval()
        return self

    @property
    def device(self) -> torch.device:
        return next(self.f_current.parameters()).device


def init_model(
    spec: ArchitectureSpec, ssl_kind: str, seed: int, *, num_classes: int | None = None
) -> ModelState:
    """Freshly initialised state for task 1; identical seeds give identical parameters."""
    kind = normalize_ssl_kind(ssl_kind)
    if kind not in SSL_KINDS:
        raise ModelError(f"unknown SSL kind {ssl_kind!r}", details={"known": list(SSL_KINDS)})
    if spec.backbone not in BACKBONES:
        raise ModelError(f"unknown backbone {spec.backbone!r}", details={"known": list(BACKBONES)})
    if num_classes is not None and spec.num_outputs < num_classes:
        raise ModelError(
            f"classifier has {spec.num_outputs} outputs but the stream has {num_classes} classes"
        )
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        f_current = FeatureExtractor(spec, kind)
        h_kd = build_predictor(spec.projector_dim, spec.predictor_hidden)
        h_ssl = build_predictor(spec.projector_dim, spec.predictor_hidden)
        classifier = build_classifier(f_current.feature_dim, spec.classifier_hidden, spec.num_outputs)
    f_momentum = None
    if kind in MOMENTUM_SSL_KINDS:
        f_momentum = copy.deepcopy(f_current)
        for parameter in f_momentum.parameters():
            parameter.requires_grad_(False)
    return ModelState(
        spec=spec,
        ssl_kind=kind,
        f_current=f_current,
        f_momentum=f_momentum,
        h_kd=h_kd,
        h_ssl=h_ssl,
        classifier=classifier,
    )


@torch.no_grad()
def ema_update(state: ModelState, momentum: float) -> ModelState:
    """theta_m <- momentum * theta_m + (1 - momentum) * theta_current; buffers are copied."""
    if state.f_momentum is None:
        raise ModelError(f"{state.ssl_kind} has no momentum extractor")
    if not 0.0 <= momentum <= 1.0:
        raise ModelError(f"momentum must lie in [0, 1], got {momentum}")
    for target, online in zip(state.f_momentum.parameters(), state.f_current.parameters()):
        target.mul_(momentum).add_(online.detach(), alpha=1.0 - momentum)
    for target, online in zip(state.f_momentum.buffers(), state.f_current.buffers()):
        target.copy_(online)
    return state


def snapshot_previous(state: ModelState) -> ModelState:
    """Freeze copies of the extractor and classifier, then advance the task index."""
    state.prev_f = freeze(copy.deepcopy(state.f_current))
    state.prev_g = freeze(copy.deepcopy(state.classifier))
    state.task_index += 1
    logger.debug("snapshot taken | next_task=%d", state.task_index)
    return state


@dataclass
class ForwardPaths:
    z_o: torch.Tensor
    z_t: torch.Tensor
    p_kd: torch.Tensor
    p_ssl: torch.Tensor
    c_t: torch.Tensor
    z_p: torch.Tensor | None = None
    c_p: torch.Tensor | None = None


def forward_paths(
    state: ModelState, pair: ViewPair, classifier_input: ClassifierInput = "current_view1"
) -> ForwardPaths:
    """Every network output one training step needs.

    The classifier reads gradient-stopped features, so classification losses
    never reach the extractor. Previous-task outputs carry no gradient.
    """
    state.check()
    if pair.view1.shape != pair.view2.shape:
        raise ModelError("views of a pair must have the same shape")
    current = state.f_current(pair.view1)
    if state.f_momentum is not None:
        with torch.no_grad():
            target = state.f_momentum(pair.view2)
    else:
        target = state.f_current(pair.view2)

    if classifier_input == "current_view1":
        c_t = state.classifier(current.features.detach())
    else:
        c_t = state.classifier(target.features.detach())

    z_p = c_p = None
    if state.task_index > 1:
        with torch.no_grad():
            previous = state.prev_f(pair.view1)
            z_p = previous.embedding
            c_p = state.prev_g(previous.features)

    return ForwardPaths(
        z_o=current.embedding,
        z_t=target.embedding,
        p_kd=state.h_kd(current.embedding),
        p_ssl=state.h_ssl(current.embedding),
        c_t=c_t,
        z_p=z_p,
        c_p=c_p,
    )


def parameter_digest(module: nn.Module) -> str:
    """SHA-256 over every parameter and buffer, in registration order."""
    digest = hashlib.sha256()
    for name, tensor in list(module.named_parameters()) + list(module.named_buffers()):
        digest.update(name.encode("utf-8"))
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


def save_checkpoint(path: Path, state: ModelState, extra: dict[str, Any] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "spec": state.spec.model_dump(mode="json"),
        "ssl_kind": state.ssl_kind,
        "task_index": state.task_index,
        "modules": {name: module.state_dict() for name, module in state.named_modules()},
        "extra": extra or {},
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)
    return path


def load_checkpoint(path: Path) -> tuple[ModelState, dict[str, Any]]:
    """Restore a state saved by :func:`save_checkpoint` and its extra payload."""
    try:
        payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    except (OSError, RuntimeError, EOFError, pickle.UnpicklingError) as exc:
        raise ModelError(f"cannot read checkpoint {path}: {exc}") from exc
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ModelError(f"unsupported checkpoint format in {path}")
    spec = ArchitectureSpec.model_validate(payload["spec"])
    state = init_model(spec, payload["ssl_kind"], seed=0)
    modules = payload["modules"]
    if "prev_f" in modules:
        state.prev_f = freeze(copy.deepcopy(state.f_current))
        state.prev_g = freeze(copy.deepcopy(state.classifier))
    for name, module in state.named_modules():
        if name not in modules:
            raise ModelError(f"checkpoint {path} lacks module {name}")
        module.load_state_dict(modules[name])
    state.task_index = int(payload["task_index"])
    state.check()
    return state, payload.get("extra", {})
