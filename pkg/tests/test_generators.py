import numpy as np
import pytest
import torch

from deblur.data import motion_kernel
from deblur.errors import ArchitectureError, ParameterError
from deblur.generators import (CHECKPOINT_FORMAT, count_parameters, init_image_generator,
                               init_kernel_field, load_checkpoint, regress_kernel, render_image,
                               render_kernel, save_checkpoint)
from deblur.metrics import fbe

SMALL = dict(widths=(8, 16, 16))


def test_image_shape_and_range():
    gen = init_image_generator((37, 45), channels=3, seed=0, **SMALL)
    with torch.no_grad():
        x = render_image(gen)
    assert x.shape == (1, 3, 37, 45)
    assert x.min() > 0 and x.max() < 1


def test_image_determinism():
    a = init_image_generator((32, 32), seed=4, **SMALL)
    b = init_image_generator((32, 32), seed=4, **SMALL)
    c = init_image_generator((32, 32), seed=5, **SMALL)
    with torch.no_grad():
        assert torch.equal(render_image(a), render_image(b))
        assert not torch.equal(render_image(a), render_image(c))


def test_seed_input_frozen_and_uniform():
    gen = init_image_generator((64, 64), seed=0, **SMALL)
    z = gen.z.clone()
    assert z.shape == (1, 32, 64, 64)
    assert 0 <= z.min() and z.max() <= 0.1
    assert "z" not in dict(gen.named_parameters())
    opt = torch.optim.Adam(gen.parameters(), lr=1e-2)
    render_image(gen).mean().backward()
    opt.step()
    assert torch.equal(gen.z, z)


def test_architecture_error():
    with pytest.raises(ArchitectureError):
        init_image_generator((20, 40), seed=0)


def test_default_parameter_count_near_reported_size():
    gen = init_image_generator((64, 64), seed=0)
    assert abs(count_parameters(gen) - 2.3e6) <= 0.3 * 2.3e6


def test_image_gradient_finite_differences():
    gen = init_image_generator((16, 16), seed=1, dtype=torch.float64, **SMALL)
    w = torch.from_numpy(np.random.default_rng(0).standard_normal((1, 1, 16, 16)))
    f = lambda: (render_image(gen) * w).sum()  # noqa: E731
    params = list(gen.parameters())
    grads = torch.autograd.grad(f(), params)
    rng = np.random.default_rng(1)
    h = 1e-6
    checked = 0
    with torch.no_grad():
        while checked < 20:
            i = int(rng.integers(len(params)))
            j = int(rng.integers(params[i].numel()))
            flat = params[i].view(-1)
            analytic = grads[i].view(-1)[j].item()
            if abs(analytic) < 1e-8:
                continue
            old = flat[j].item()
            flat[j] = old + h
            plus = f().item()
            flat[j] = old - h
            minus = f().item()
            flat[j] = old
            numeric = (plus - minus) / (2 * h)
            assert abs(numeric - analytic) / abs(analytic) < 1e-3
            checked += 1


@pytest.mark.parametrize("model", ["siren", "mlp"])
def test_kernel_shape_range_normalization(model):
    field = init_kernel_field((13, 7), seed=0, model=model)
    with torch.no_grad():
        raw = render_kernel(field, "none")
        k = render_kernel(field)
    assert k.shape == (13, 7)
    assert 0 < raw.min() and raw.max() < 1
    assert k.min() > 0 and k.sum().item() == pytest.approx(1.0, abs=1e-6)


def test_kernel_determinism():
    a = init_kernel_field((9, 9), seed=3)
    b = init_kernel_field((9, 9), seed=3)
    with torch.no_grad():
        assert torch.equal(a(), b())


def test_kernel_grid_covers_pixel_lattice():
    field = init_kernel_field((3, 5), seed=0)
    grid = field.grid.numpy()
    assert grid.shape == (15, 2)
    np.testing.assert_allclose(np.unique(grid[:, 0]), [-1, 0, 1])
    np.testing.assert_allclose(np.unique(grid[:, 1]), [-1, -0.5, 0, 0.5, 1])


def test_kernel_field_errors():
    with pytest.raises(ParameterError):
        init_kernel_field((0, 3))
    with pytest.raises(ParameterError):
        init_kernel_field((3, 3), model="dip")
    with pytest.raises(ParameterError):
        render_kernel(init_kernel_field((3, 3)), "softmax")


def test_regression_reduces_every_band():
    target = motion_kernel((13, 13), seed=1)
    field = init_kernel_field((13, 13), seed=0)
    with torch.no_grad():
        start = fbe(target, render_kernel(field).double().numpy())
    end = fbe(target, regress_kernel(field, target, steps=2000))
    assert np.all(end < start)


def test_checkpoint_round_trip(tmp_path):
    gen = init_image_generator((32, 32), seed=2, **SMALL)
    field = init_kernel_field((9, 9), seed=3)
    with torch.no_grad():
        x, k = render_image(gen), render_kernel(field)
    save_checkpoint(tmp_path / "ck.npz", gen, field, seed=2, extra={"best_iter": 7})
    gen2, field2, meta = load_checkpoint(tmp_path / "ck.npz")
    assert meta["format"] == CHECKPOINT_FORMAT and meta["seed"] == 2
    assert meta["extra"] == {"best_iter": 7}
    with torch.no_grad():
        assert torch.equal(render_image(gen2), x)
        assert torch.equal(render_kernel(field2), k)
