import pytest
import torch

from featadv.errors import ConfigurationError, InputError
from featadv.models import (
    ClassifierHandle,
    ConvClassifier,
    DiscriminatorHandle,
    GeneratorHandle,
    ProjectionDiscriminator,
    SkipZGenerator,
    build_model,
    load_classifier,
    load_generator,
)
from featadv.models.architectures import architecture_id
from featadv import tensorio


@pytest.fixture(scope="module")
def gen_handle():
    torch.manual_seed(0)
    return GeneratorHandle(SkipZGenerator(z_dim=32, num_classes=10, width=16))


@pytest.fixture(scope="module")
def clf_handle():
    torch.manual_seed(1)
    return ClassifierHandle(ConvClassifier(width=8, pooling="lse"))


@pytest.fixture(scope="module")
def disc_handle():
    torch.manual_seed(2)
    return DiscriminatorHandle(ProjectionDiscriminator(width=16))


def test_generate_range_and_determinism(gen_handle):
    z = torch.randn(4, gen_handle.input_dim, generator=torch.Generator().manual_seed(3))
    a = gen_handle.generate(z, 2)
    b = gen_handle.generate(z, 2)
    assert a.shape == (4, 3, 32, 32)
    assert torch.equal(a, b)
    assert float(a.min()) >= 0.0 and float(a.max()) <= 1.0


def test_generate_single_vector(gen_handle):
    z = torch.randn(gen_handle.input_dim)
    img = gen_handle.generate(z, 0)
    assert img.shape == (3, 32, 32)


def test_generate_rejects_bad_shapes(gen_handle):
    with pytest.raises(ConfigurationError):
        gen_handle.generate(torch.randn(4, gen_handle.input_dim + 1), 0)
    with pytest.raises(ConfigurationError):
        gen_handle.generate(torch.randn(4, gen_handle.input_dim), gen_handle.num_classes)


def test_layer_catalog_shapes(gen_handle):
    ids = [k for k, _ in gen_handle.layer_catalog]
    assert ids == ["latent_input", "stem", "block1", "block2"]
    z = torch.randn(2, gen_handle.input_dim)
    for layer_id, shape in gen_handle.layer_catalog:
        act = gen_handle.activations_at(z, 1, layer_id)
        assert tuple(act.shape) == (2, *shape), layer_id
        if layer_id != "latent_input":  # rectified sites
            assert float(act.min()) >= 0.0


def test_suffix_consistency_every_layer(gen_handle):
    z = torch.randn(3, gen_handle.input_dim, generator=torch.Generator().manual_seed(5))
    y = torch.tensor([0, 4, 9])
    y_vec = torch.nn.functional.one_hot(y, gen_handle.num_classes).float()
    ref = gen_handle.generate(z, y)
    for layer_id, _ in gen_handle.layer_catalog:
        act = gen_handle.activations_at(z, y, layer_id)
        out = gen_handle.forward_from(layer_id, act, conditioning=(z, y_vec))
        assert float((out - ref).abs().max()) <= 1e-5, layer_id


def test_forward_from_validates(gen_handle):
    z = torch.randn(1, gen_handle.input_dim)
    y_vec = torch.zeros(1, gen_handle.num_classes)
    with pytest.raises(ConfigurationError):
        gen_handle.forward_from("nope", torch.zeros(1, 4, 4, 4), (z, y_vec))
    with pytest.raises(ConfigurationError):
        gen_handle.forward_from("block2", torch.zeros(1, 4, 4, 4), (z, y_vec))
    with pytest.raises(ConfigurationError):
        gen_handle.activations_at(z, 0, "missing_layer")


def test_generate_from_vector_matches_onehot(gen_handle):
    z = torch.randn(2, gen_handle.input_dim)
    y_vec = torch.nn.functional.one_hot(torch.tensor([3, 3]), 10).float()
    assert torch.equal(gen_handle.generate_from_vector(z, y_vec),
                       gen_handle.generate(z, 3))


def test_generator_gradient_matches_finite_differences():
    # float64 copy; scalar functional = fixed random projection of the image
    torch.manual_seed(7)
    model = SkipZGenerator(z_dim=16, num_classes=10, width=16).double()
    handle = GeneratorHandle(model)
    w = torch.randn(3, 32, 32, dtype=torch.float64)
    z0 = torch.randn(1, 16, dtype=torch.float64, requires_grad=True)

    def f(z):
        return (handle.generate_from_vector(
            z, torch.nn.functional.one_hot(torch.tensor([2]), 10).double()) * w).sum()

    loss = f(z0)
    (grad,) = torch.autograd.grad(loss, z0)
    rng = torch.Generator().manual_seed(11)
    coords = torch.randperm(16, generator=rng)[:16]
    h = 1e-5
    for c in coords:
        zp, zm = z0.detach().clone(), z0.detach().clone()
        zp[0, c] += h
        zm[0, c] -= h
        fd = (f(zp) - f(zm)) / (2 * h)
        denom = max(abs(float(fd)), abs(float(grad[0, c])), 1e-8)
        assert abs(float(fd) - float(grad[0, c])) / denom < 1e-3, int(c)


def _rf_bbox(handle, layer_id, z, y_vec, pos, magnitude=25.0):
    """Receptive field of one activation column via brute-force single-unit
    perturbation: bump one unit, mark output pixels whose change exceeds 1%
    of the peak change."""
    act = handle.activations_at(z, 0, layer_id)
    base = handle.forward_from(layer_id, act, (z, y_vec))
    bumped = act.clone()
    bumped[0, 0, pos[0], pos[1]] += magnitude
    out = handle.forward_from(layer_id, bumped, (z, y_vec))
    diff = (out - base).abs().sum(dim=1)[0]
    support = diff > 0.01 * float(diff.max())
    rows = torch.where(support.any(dim=1))[0]
    cols = torch.where(support.any(dim=0))[0]
    return int(rows.min()), int(rows.max()), int(cols.min()), int(cols.max())


def test_column_replacement_is_local(gen_handle):
    z = torch.randn(1, gen_handle.input_dim, generator=torch.Generator().manual_seed(9))
    y_vec = torch.nn.functional.one_hot(torch.tensor([0]), 10).float()
    pos = (3, 5)
    r0, r1, c0, c1 = _rf_bbox(gen_handle, "block1", z, y_vec, pos)
    act = gen_handle.activations_at(z, 0, "block1")
    base = gen_handle.forward_from("block1", act, (z, y_vec))
    mod = act.clone()
    gen = torch.Generator().manual_seed(13)
    mod[0, :, pos[0], pos[1]] = 5.0 * torch.rand(act.shape[1], generator=gen)
    out = gen_handle.forward_from("block1", mod, (z, y_vec))
    energy = ((out - base) ** 2).sum(dim=1)[0]
    inside = float(energy[r0:r1 + 1, c0:c1 + 1].sum())
    total = float(energy.sum())
    assert total > 0
    assert inside / total > 0.6, (inside / total, (r0, r1, c0, c1))


def test_classify_simplex_and_determinism(clf_handle):
    x = torch.rand(5, 3, 32, 32, generator=torch.Generator().manual_seed(4))
    p1 = clf_handle.classify(x)
    p2 = clf_handle.classify(x)
    assert torch.equal(p1, p2)
    assert p1.shape == (5, 10)
    assert float(p1.min()) >= 0.0
    assert torch.allclose(p1.sum(dim=1), torch.ones(5), atol=1e-5)


def test_classify_resizes(clf_handle):
    x = torch.rand(3, 48, 48)
    p = clf_handle.classify(x)
    assert p.shape == (10,)


def test_classify_rejects_nonfinite(clf_handle):
    x = torch.rand(1, 3, 32, 32)
    x[0, 0, 0, 0] = float("nan")
    with pytest.raises(InputError):
        clf_handle.classify(x)


def test_classifier_poolings_differ():
    torch.manual_seed(5)
    base = ConvClassifier(width=8, pooling="lse")
    x = torch.rand(2, 3, 32, 32)
    outs = []
    for pool in ConvClassifier.POOLINGS:
        m = ConvClassifier(width=8, pooling=pool)
        m.load_state_dict(base.state_dict())
        m.eval()
        with torch.no_grad():
            outs.append(m(x))
    assert not torch.allclose(outs[0], outs[1])
    assert not torch.allclose(outs[1], outs[2])


def test_discriminate_scalar_and_batch(disc_handle):
    x = torch.rand(4, 3, 32, 32)
    s = disc_handle.discriminate(x)
    assert s.shape == (4,)
    assert torch.equal(s, disc_handle.discriminate(x))
    single = disc_handle.discriminate(x[0])
    assert single.dim() == 0
    assert torch.allclose(single, s[0], atol=1e-6)


def test_discriminate_rejects_wrong_resolution(disc_handle):
    with pytest.raises(InputError):
        disc_handle.discriminate(torch.rand(1, 3, 16, 16))


def test_discriminator_gradient_finite_differences():
    torch.manual_seed(8)
    handle = DiscriminatorHandle(ProjectionDiscriminator(width=16).double())
    x = torch.rand(1, 3, 32, 32, dtype=torch.float64, requires_grad=True)
    s = handle.discriminate(x).sum()
    (grad,) = torch.autograd.grad(s, x)
    rng = torch.Generator().manual_seed(3)
    h = 1e-5
    for _ in range(8):
        c = int(torch.randint(0, 3, (1,), generator=rng))
        i = int(torch.randint(0, 32, (1,), generator=rng))
        j = int(torch.randint(0, 32, (1,), generator=rng))
        xp, xm = x.detach().clone(), x.detach().clone()
        xp[0, c, i, j] += h
        xm[0, c, i, j] -= h
        fd = (handle.discriminate(xp).sum() - handle.discriminate(xm).sum()) / (2 * h)
        denom = max(abs(float(fd)), abs(float(grad[0, c, i, j])), 1e-8)
        assert abs(float(fd) - float(grad[0, c, i, j])) / denom < 1e-3


def test_architecture_id_round_trip():
    for model in (SkipZGenerator(z_dim=16, width=16),
                  ProjectionDiscriminator(width=16),
                  ConvClassifier(width=8, pooling="avgmax")):
        rebuilt = build_model(architecture_id(model))
        assert type(rebuilt) is type(model)
        assert {k: v.shape for k, v in rebuilt.state_dict().items()} == \
               {k: v.shape for k, v in model.state_dict().items()}


def test_save_load_handles(tmp_path):
    torch.manual_seed(12)
    g = SkipZGenerator(z_dim=16, width=16)
    tensorio.save_state_dict(tmp_path / "g", g.state_dict(), architecture_id(g))
    gh = load_generator(tmp_path / "g")
    z = torch.randn(2, 16)
    want = GeneratorHandle(g).generate(z, 1)
    assert torch.equal(gh.generate(z, 1), want)
    assert gh.content_hash

    c = ConvClassifier(width=8)
    tensorio.save_state_dict(tmp_path / "c", c.state_dict(), architecture_id(c))
    ch = load_classifier(tmp_path / "c")
    x = torch.rand(1, 3, 32, 32)
    assert torch.equal(ch.classify(x), ClassifierHandle(c).classify(x))

    with pytest.raises(ConfigurationError):
        load_generator(tmp_path / "c")
