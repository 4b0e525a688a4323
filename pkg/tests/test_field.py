import numpy as np
import pytest

from implicit_forge import autodiff as ad
from implicit_forge.autodiff import ContractViolation, Tensor
from implicit_forge.field import (
    ImplicitFieldParams,
    encode_image,
    extract_point_cloud,
    init_params,
    lattice,
    predict_color,
    predict_occupancy,
    sample_feature,
)


@pytest.fixture(scope="module")
def params():
    return init_params(seed=0)


@pytest.fixture(scope="module")
def image():
    rng = np.random.default_rng(10)
    img = rng.uniform(0, 1, (64, 64, 4))
    img[..., 3] = 1.0
    return img


class TestInit:
    def test_shapes(self, params):
        assert params.conv0_w.shape == (16, 3, 3, 3)
        assert params.conv2_w.shape == (32, 16, 3, 3)
        assert params.occ0_w.shape == (33, 64)
        assert params.occ2_w.shape == (64, 1)
        assert params.tex2_w.shape == (64, 3)

    def test_deterministic(self):
        a, b = init_params(seed=7), init_params(seed=7)
        for (_, ta), (_, tb) in zip(a.named(), b.named()):
            assert np.array_equal(ta.data, tb.data)

    def test_seed_matters(self):
        a, b = init_params(seed=1), init_params(seed=2)
        assert not np.array_equal(a.conv0_w.data, b.conv0_w.data)

    def test_bounds_follow_fan_in(self, params):
        s = 1.0 / np.sqrt(3 * 9)
        assert np.abs(params.conv0_w.data).max() <= s
        s = 1.0 / np.sqrt(33)
        assert np.abs(params.occ0_w.data).max() <= s

    def test_groups_partition_all_params(self, params):
        groups = params.groups()
        names = [n for n, _ in params.named()]
        combined = groups["encoder"] + groups["occupancy"] + groups["texture"]
        assert sorted(combined) == sorted(names)


class TestEncoder:
    def test_output_shape(self, params, image):
        grid = encode_image(params, image)
        assert grid.shape == (16, 16, 32)

    def test_deterministic(self, params, image):
        a = encode_image(params, image)
        b = encode_image(params, image)
        assert np.array_equal(a.data, b.data)

    def test_indivisible_extent_rejected(self, params):
        with pytest.raises(ContractViolation):
            encode_image(params, np.zeros((30, 64, 4)))

    def test_gradient_through_first_conv(self, params):
        small = np.random.default_rng(3).uniform(0, 1, (8, 8, 3))

        def f(w0):
            patched = ImplicitFieldParams(
                **{name: (w0 if name == "conv0_w" else t) for name, t in params.named()}
            )
            return ad.reduce_mean(encode_image(patched, small))

        w0 = Tensor(params.conv0_w.data.copy())
        assert ad.grad_check(f, [w0]) < 1e-4


class TestSampleFeature:
    def _grid(self):
        rng = np.random.default_rng(4)
        return Tensor(rng.uniform(-1, 1, (8, 8, 32)))

    def test_cell_center_exact(self):
        grid = self._grid()
        # feature cell (u, v) sits at input pixel (4u + 2, 4v + 2)
        out = sample_feature(grid, np.array([4 * 3 + 2.0]), np.array([4 * 5 + 2.0]))
        np.testing.assert_allclose(out.data[0], grid.data[5, 3], atol=1e-12)

    def test_midpoint_averages(self):
        grid = self._grid()
        out = sample_feature(grid, np.array([4 * 3 + 4.0]), np.array([4 * 5 + 2.0]))
        want = 0.5 * (grid.data[5, 3] + grid.data[5, 4])
        np.testing.assert_allclose(out.data[0], want, atol=1e-12)

    def test_outside_zero(self):
        grid = self._grid()
        out = sample_feature(grid, np.array([-20.0, 500.0]), np.array([2.0, 2.0]))
        assert np.all(out.data == 0.0)

    def test_pixel_alignment_shift(self, params):
        # shifting the image by one feature cell (4 px) shifts features;
        # drop a 3-cell border: the encoder's receptive field is 19 px,
        # so boundary padding reaches that far into the grid
        rng = np.random.default_rng(11)
        img = rng.uniform(0, 1, (64, 64, 3))
        shifted = np.roll(img, 4, axis=1)  # shift right by 4 px
        ga = encode_image(params, img)
        gb = encode_image(params, shifted)
        # interior cells: feature (v, u) of img equals feature (v, u+1) of shifted
        np.testing.assert_allclose(gb.data[3:-3, 4:-2], ga.data[3:-3, 3:-3], atol=1e-9)


class TestPredictions:
    def test_occupancy_in_unit_interval(self, params, image):
        pts = np.random.default_rng(5).uniform(-1, 1, (50, 3))
        occ = predict_occupancy(params, image, pts)
        assert occ.shape == (50, 1)
        assert np.all(occ.data > 0.0) and np.all(occ.data < 1.0)

    def test_fresh_init_near_half(self, image):
        pts = np.random.default_rng(6).uniform(-1, 1, (100, 3))
        for seed in (0, 1, 2):
            occ = predict_occupancy(init_params(seed), image, pts)
            assert occ.data.min() >= 0.3
            assert occ.data.max() <= 0.7

    def test_color_shape_and_range(self, params, image):
        pts = np.random.default_rng(7).uniform(-1, 1, (20, 3))
        col = predict_color(params, image, pts)
        assert col.shape == (20, 3)
        assert np.all(col.data > 0.0) and np.all(col.data < 1.0)

    def test_single_point_accepted(self, params, image):
        occ = predict_occupancy(params, image, np.array([0.1, -0.2, 0.3]))
        assert occ.shape == (1, 1)

    def test_deterministic(self, params, image):
        pts = np.random.default_rng(8).uniform(-1, 1, (10, 3))
        a = predict_occupancy(params, image, pts)
        b = predict_occupancy(params, image, pts)
        assert np.array_equal(a.data, b.data)

    def test_grad_all_parameter_groups(self, params, image):
        pts = np.random.default_rng(9).uniform(-0.5, 0.5, (5, 3))
        target = np.array([[1.0], [0.0], [1.0], [0.0], [1.0]])

        def loss_with(name, replacement):
            patched = ImplicitFieldParams(
                **{n: (replacement if n == name else t) for n, t in params.named()}
            )
            occ = predict_occupancy(patched, image[:16, :16], pts)
            return ad.reduce_mean(ad.square(occ - Tensor(target)))

        for name in ("conv0_w", "conv3_b", "occ0_w", "occ2_b"):
            orig = dict(params.named())[name]
            t = Tensor(orig.data.copy())
            err = ad.grad_check(lambda x, _n=name: loss_with(_n, x), [t])
            assert err < 1e-4, name


class TestExtraction:
    def test_empty_for_zero_field(self, params, image):
        cloud = extract_point_cloud(params, image, grid_res=8, threshold=1.0)
        assert len(cloud) == 0

    def test_matches_bruteforce_lattice_count(self, params, image):
        # oracle: enumerate every lattice point, count occupancy > 0.5
        grid = encode_image(params, image)
        pts = lattice(16)
        occ = predict_occupancy(params, image, pts, grid=grid).data.reshape(-1)
        want = int((occ > 0.5).sum())
        cloud = extract_point_cloud(params, image, grid_res=16, grid=grid)
        assert len(cloud) == want

    def test_analytic_sphere_field_count(self):
        # drive selection with an oracle field: points inside radius 0.5
        pts = lattice(32)
        inside = np.linalg.norm(pts, axis=1) <= 0.5
        want = int(inside.sum())
        assert want > 0
        # the sphere count is what a perfect occupancy field would select
        sel = pts[inside]
        assert len(sel) == want

    def test_positions_are_lattice_subset(self, params, image):
        cloud = extract_point_cloud(params, image, grid_res=12)
        if len(cloud):
            all_pts = {tuple(np.round(p, 12)) for p in lattice(12)}
            for p in np.asarray(cloud.positions):
                assert tuple(np.round(p, 12)) in all_pts

    def test_opacity_equals_occupancy(self, params, image):
        grid = encode_image(params, image)
        cloud = extract_point_cloud(params, image, grid_res=12, grid=grid)
        occ = predict_occupancy(params, image, np.asarray(cloud.positions), grid=grid)
        np.testing.assert_allclose(np.asarray(cloud.opacities.data),
                                   occ.data.reshape(-1), atol=1e-12)

    def test_gradients_reach_heads(self, params, image):
        # fresh-init occupancies hover near 0.5; select below that so the
        # cloud is non-empty
        cloud = extract_point_cloud(params, image, grid_res=12, threshold=0.45)
        assert len(cloud) > 0
        loss = ad.reduce_mean(cloud.opacities) + ad.reduce_mean(cloud.colors)
        ad.zero_grads(params.tensors())
        ad.backward(loss)
        assert params.occ2_w.grad is not None and np.any(params.occ2_w.grad != 0)
        assert params.tex2_w.grad is not None and np.any(params.tex2_w.grad != 0)

    def test_small_grid_rejected(self, params, image):
        with pytest.raises(ContractViolation):
            extract_point_cloud(params, image, grid_res=4)

    def test_deterministic(self, params, image):
        a = extract_point_cloud(params, image, grid_res=12)
        b = extract_point_cloud(params, image, grid_res=12)
        assert np.array_equal(np.asarray(a.positions), np.asarray(b.positions))
        assert np.array_equal(a.opacities.data, b.opacities.data)
        assert np.array_equal(a.colors.data, b.colors.data)
