import torch

from featadv import data


def test_split_shapes_and_range():
    x, y = data.make_split(24, seed=7)
    assert x.shape == (24, 3, 32, 32)
    assert y.shape == (24,)
    assert y.dtype == torch.long
    assert float(x.min()) >= 0.0 and float(x.max()) <= 1.0
    assert int(y.min()) >= 0 and int(y.max()) < data.NUM_CLASSES


def test_split_deterministic():
    x1, y1 = data.make_split(12, seed=3)
    x2, y2 = data.make_split(12, seed=3)
    assert torch.equal(x1, x2) and torch.equal(y1, y2)


def test_splits_differ_by_seed():
    x1, _ = data.make_split(12, seed=3)
    x2, _ = data.make_split(12, seed=4)
    assert not torch.equal(x1, x2)


def test_class_pool_single_class():
    x = data.class_pool(5, n=6, seed=1)
    assert x.shape == (6, 3, 32, 32)


def test_motifs_present_and_distinct():
    # each class's dominant color channel pattern should reflect its palette
    for cls in range(data.NUM_CLASSES):
        img = data.class_pool(cls, n=1, seed=9)[0]
        color = data.CLASS_DEFS[cls][0]
        rgb = torch.tensor(data.PALETTE[color])
        # brightest pixel should be close to the palette color
        idx = img.sum(0).flatten().argmax()
        px = img.flatten(1)[:, idx]
        assert torch.allclose(px, rgb, atol=0.25), (cls, px, rgb)


def test_motif_mask_known_shapes():
    disk = data.motif_mask("disk", size=10, rotation=0.0, res=21)
    assert disk[10, 10] == 1.0  # center inside
    assert disk[0, 0] == 0.0  # corner outside
    area = float(disk.sum())
    import math
    assert abs(area - math.pi * 25) / (math.pi * 25) < 0.15

    ring = data.motif_mask("ring", size=10, rotation=0.0, res=21)
    assert ring[10, 10] == 0.0  # ring has a hole

    bar0 = data.motif_mask("bar", size=12, rotation=0.0, res=25)
    bar90 = data.motif_mask("bar", size=12, rotation=1.5707963, res=25)
    assert torch.allclose(bar0, bar90.T, atol=0)


def test_class_names_align():
    assert len(data.CLASS_NAMES) == data.NUM_CLASSES
    assert data.CLASS_NAMES[0] == "red_disk"
    assert data.CLASS_NAMES[9] == "cyan_hollow"
