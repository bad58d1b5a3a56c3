import pytest
import torch

from featadv.attack.insertion import (
    apply_channel,
    apply_region,
    channel_count,
    extract_generalized_patch,
    insert_patch,
    overlay_generalized_patch,
    patch_side,
    region_side,
)
from featadv.errors import InputError
from featadv.transforms import gaussian_blur


def test_patch_side_arithmetic():
    assert patch_side(256, 1 / 16) == 64
    assert patch_side(32, 1 / 16) == 8
    assert patch_side(32, 1.0) == 32
    assert region_side(8, 1 / 8) == 3
    with pytest.raises(InputError):
        patch_side(32, 0.0)


def test_insert_patch_window_readback():
    gen = torch.Generator().manual_seed(0)
    src = torch.rand(3, 32, 32, generator=gen)
    patch = torch.rand(3, 32, 32, generator=gen)
    out = insert_patch(src, patch, (5, 9), 1 / 16)
    resized = torch.nn.functional.interpolate(
        patch[None], size=(8, 8), mode="bilinear", align_corners=False)[0]
    assert torch.equal(out[:, 5:13, 9:17], resized)
    # complement untouched, bitwise
    m = torch.ones(32, 32, dtype=torch.bool)
    m[5:13, 9:17] = False
    assert torch.equal(out[:, m], src[:, m])


def test_insert_patch_full_area():
    src = torch.zeros(3, 32, 32)
    patch = torch.rand(3, 16, 16)
    out = insert_patch(src, patch, (0, 0), 1.0)
    resized = torch.nn.functional.interpolate(
        patch[None], size=(32, 32), mode="bilinear", align_corners=False)[0]
    assert torch.equal(out, resized)


def test_insert_patch_bounds():
    src = torch.zeros(3, 32, 32)
    patch = torch.rand(3, 8, 8)
    with pytest.raises(InputError):
        insert_patch(src, patch, (25, 0), 1 / 16)
    with pytest.raises(InputError):
        insert_patch(src, patch, (0, -1), 1 / 16)
    insert_patch(src, patch, (24, 24), 1 / 16)  # last valid offset


def test_insert_patch_gradient():
    src = torch.zeros(3, 32, 32)
    patch = torch.rand(3, 16, 16, requires_grad=True)
    out = insert_patch(src, patch, (3, 3), 1 / 16)
    out.sum().backward()
    assert float(patch.grad.abs().sum()) > 0


def test_apply_region_identity_and_locality():
    gen = torch.Generator().manual_seed(1)
    latent = torch.rand(64, 8, 8, generator=gen)
    window = latent[:, 2:5, 3:6].clone()
    assert torch.equal(apply_region(latent, window, (2, 3)), latent)

    block = torch.rand(64, 3, 3, generator=gen)
    out = apply_region(latent, block, (2, 3))
    assert torch.equal(out[:, 2:5, 3:6], block)
    m = torch.ones(8, 8, dtype=torch.bool)
    m[2:5, 3:6] = False
    assert torch.equal(out[:, m], latent[:, m])


def test_apply_region_validation():
    latent = torch.rand(64, 8, 8)
    with pytest.raises(InputError):
        apply_region(latent, torch.rand(32, 3, 3), (0, 0))  # not all channels
    with pytest.raises(InputError):
        apply_region(latent, torch.rand(64, 3, 3), (6, 6))  # out of bounds


def test_apply_channel():
    assert channel_count(64, 1 / 4) == 16
    gen = torch.Generator().manual_seed(2)
    latent = torch.rand(64, 8, 8, generator=gen)
    idx = list(range(10, 26))
    ins = torch.rand(16, 8, 8, generator=gen)
    out = apply_channel(latent, ins, idx)
    assert torch.equal(out[idx], ins)
    rest = [i for i in range(64) if i not in idx]
    assert torch.equal(out[rest], latent[rest])
    assert torch.equal(apply_channel(latent, latent[idx].clone(), idx), latent)
    with pytest.raises(InputError):
        apply_channel(latent, ins, list(range(50, 66)))
    with pytest.raises(InputError):
        apply_channel(latent, torch.rand(15, 8, 8), idx)


def test_mask_all_ties_row_major():
    x = torch.rand(3, 32, 32)
    mask, _ = extract_generalized_patch(x, x.clone(), smoothing_sigma=1.0)
    k = round(0.10 * 1024)
    flat = mask.flatten()
    assert int(flat.sum()) == k
    # zero differential everywhere -> first k row-major pixels
    assert torch.equal(torch.nonzero(flat).flatten(),
                       torch.arange(k))


def test_mask_single_hot_pixel_4x4():
    orig = torch.zeros(3, 4, 4)
    adv = torch.zeros(3, 4, 4)
    adv[:, 2, 1] = 1.0
    mask, patch = extract_generalized_patch(orig, adv, smoothing_sigma=0.0)
    assert int(mask.sum()) == 2  # round(1.6)
    assert mask[2, 1] == 1.0
    assert mask[0, 0] == 1.0  # tie-break fills from index 0
    assert torch.equal(patch, adv * mask[None])


def test_mask_matches_brute_force_oracle():
    gen = torch.Generator().manual_seed(3)
    for trial in range(100):
        a = torch.rand(3, 16, 16, generator=gen)
        b = torch.rand(3, 16, 16, generator=gen)
        sigma = float(torch.empty(1).uniform_(0.0, 2.0, generator=gen))
        mask, _ = extract_generalized_patch(a, b, smoothing_sigma=sigma)
        g = gaussian_blur((a - b).abs().mean(0)[None, None], sigma)[0, 0]
        flat = g.flatten().tolist()
        n = len(flat)
        k = round(0.10 * n)
        chosen = sorted(range(n), key=lambda i: (-flat[i], i))[:k]
        want = torch.zeros(n)
        want[chosen] = 1.0
        assert torch.equal(mask.flatten(), want), trial


def test_extract_shape_mismatch():
    with pytest.raises(InputError):
        extract_generalized_patch(torch.rand(3, 8, 8), torch.rand(3, 16, 16))


def test_extract_gradient_flows_through_patch_only():
    orig = torch.rand(3, 8, 8)
    adv = torch.rand(3, 8, 8, requires_grad=True)
    mask, patch = extract_generalized_patch(orig, adv, smoothing_sigma=0.5)
    assert not mask.requires_grad
    patch.sum().backward()
    assert float(adv.grad.abs().sum()) > 0


def test_overlay_empty_and_full():
    gen = torch.Generator().manual_seed(4)
    src = torch.rand(3, 32, 32, generator=gen)
    patch = torch.rand(3, 32, 32, generator=gen)
    empty = torch.zeros(32, 32)
    assert torch.equal(overlay_generalized_patch(src, patch, empty, (0, 0)), src)
    full = torch.ones(32, 32)
    assert torch.equal(overlay_generalized_patch(src, patch, full, (0, 0)), patch)


def test_overlay_translation_and_locality():
    src = torch.zeros(3, 32, 32)
    patch = torch.ones(3, 32, 32)
    mask = torch.zeros(32, 32)
    mask[0:4, 0:4] = 1.0
    out = overlay_generalized_patch(src, patch, mask, (10, 20))
    assert float(out[:, 10:14, 20:24].min()) == 1.0
    assert float(out.sum()) == 3 * 16  # nothing else written
    with pytest.raises(InputError):
        overlay_generalized_patch(src, patch, mask, (29, 0))
