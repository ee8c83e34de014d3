import pytest
import torch

from packages.kaizen.augmentations import augment_batch, augment_pair, augment_single, augment_view
from packages.kaizen.contracts.experiment import AugmentationPolicy
from packages.kaizen.errors import DataError


def _image(seed: int = 0, size: int = 16) -> torch.Tensor:
    return torch.rand(3, size, size, generator=torch.Generator().manual_seed(seed))


def _is_uniform(view: torch.Tensor) -> bool:
    return torch.allclose(view, view[:, :1, :1].expand_as(view), atol=1e-5)


def test_identity_policy_returns_the_image():
    image = _image()
    pair = augment_pair(image, torch.Generator().manual_seed(0), AugmentationPolicy.identity())
    assert torch.equal(pair.view1, image)
    assert torch.equal(pair.view2, image)


def test_same_generator_state_same_pair():
    image = _image()
    policy = AugmentationPolicy(blur_p=0.5, solarize_p=0.2)
    first = augment_pair(image, torch.Generator().manual_seed(42), policy)
    second = augment_pair(image, torch.Generator().manual_seed(42), policy)
    assert torch.equal(first.view1, second.view1)
    assert torch.equal(first.view2, second.view2)


def test_views_differ_within_a_pair():
    pair = augment_pair(_image(), torch.Generator().manual_seed(1), AugmentationPolicy(crop_p=1.0))
    assert not torch.equal(pair.view1, pair.view2)


@pytest.mark.parametrize(
    "policy",
    [
        AugmentationPolicy(jitter_p=0.0, grayscale_p=0.0),
        AugmentationPolicy(blur_p=1.0),
    ],
    ids=["crop-flip", "default-with-blur"],
)
def test_uniform_image_stays_uniform(policy):
    image = torch.empty(3, 16, 16)
    image[0], image[1], image[2] = 0.2, 0.5, 0.7
    generator = torch.Generator().manual_seed(3)
    for _ in range(5):
        pair = augment_pair(image, generator, policy)
        assert _is_uniform(pair.view1)
        assert _is_uniform(pair.view2)


def test_crop_and_flip_keep_the_colour_of_a_uniform_image():
    image = torch.full((3, 16, 16), 0.3)
    view = augment_view(image, torch.Generator().manual_seed(0), AugmentationPolicy(jitter_p=0.0, grayscale_p=0.0))
    assert torch.allclose(view, image, atol=1e-5)


def test_views_stay_in_range():
    generator = torch.Generator().manual_seed(5)
    policy = AugmentationPolicy(blur_p=0.5, solarize_p=0.5)
    for seed in range(4):
        view = augment_view(_image(seed), generator, policy)
        assert view.shape == (3, 16, 16)
        assert 0.0 <= float(view.min()) and float(view.max()) <= 1.0


def test_batch_is_row_aligned():
    images = torch.stack([_image(s) for s in range(3)])
    source = torch.arange(3)
    pair = augment_batch(images, torch.Generator().manual_seed(0), AugmentationPolicy(), source=source)
    assert pair.view1.shape == pair.view2.shape == (3, 3, 16, 16)
    assert len(pair) == 3
    assert pair.source is source


def test_single_view_batch():
    images = torch.stack([_image(s) for s in range(2)])
    assert augment_single(images, torch.Generator().manual_seed(0), AugmentationPolicy()).shape == (2, 3, 16, 16)


def test_rejects_bad_shapes():
    generator = torch.Generator().manual_seed(0)
    with pytest.raises(DataError):
        augment_view(torch.rand(4, 8, 8), generator, AugmentationPolicy())
    with pytest.raises(DataError):
        augment_batch(torch.rand(3, 8, 8), generator, AugmentationPolicy())


def test_policy_ranges_are_validated():
    with pytest.raises(ValueError):
        AugmentationPolicy(crop_scale=(0.9, 0.1))


def test_blur_defaults_to_large_images_only():
    policy = AugmentationPolicy()
    assert policy.resolved_blur_p(32) == 0.0
    assert policy.resolved_blur_p(224) == 0.5
