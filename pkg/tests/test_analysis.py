import numpy as np
import pytest

from posetraj.analysis import PcaModel, pca_fit, pca_project, trajectory_projection, write_csv


class TestPcaFit:
    def test_collinear_points_single_component(self):
        direction = np.array([1.0, 2.0, -0.5])
        points = np.outer([0.0, 1.0, 2.0, 3.5], direction)
        model = pca_fit(points, k=2)
        assert model.explained_variance_ratio[0] == pytest.approx(1.0, abs=1e-12)
        assert model.explained_variance_ratio[1] == pytest.approx(0.0, abs=1e-12)

    def test_axes_orthonormal(self):
        rng = np.random.default_rng(0)
        model = pca_fit(rng.normal(size=(200, 6)), k=4)
        gram = model.axes @ model.axes.T
        assert np.allclose(gram, np.eye(4), atol=1e-9)

    def test_planar_data_preserves_distances(self):
        rng = np.random.default_rng(1)
        points = rng.normal(size=(50, 2))
        model = pca_fit(points, k=2)
        proj = pca_project(model, points)
        d_orig = np.linalg.norm(points[:, None] - points[None, :], axis=-1)
        d_proj = np.linalg.norm(proj[:, None] - proj[None, :], axis=-1)
        assert np.allclose(d_orig, d_proj, atol=1e-9)

    def test_known_diagonal_covariance(self):
        # analytic oracle: diagonal Gaussian -> ratios proportional to variances
        rng = np.random.default_rng(2)
        variances = np.array([9.0, 4.0, 1.0, 0.25, 0.04])
        points = rng.normal(size=(10_000, 5)) * np.sqrt(variances)
        model = pca_fit(points, k=5)
        expected = variances / variances.sum()
        assert np.allclose(model.explained_variance_ratio, expected, rtol=0.05)

    def test_sign_convention(self):
        rng = np.random.default_rng(3)
        points = rng.normal(size=(100, 4))
        model = pca_fit(points, k=3)
        for axis in model.axes:
            nz = np.nonzero(np.abs(axis) > 1e-12)[0]
            assert axis[nz[0]] > 0

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        points = rng.normal(size=(60, 5))
        a = pca_fit(points, k=3)
        b = pca_fit(points, k=3)
        assert np.array_equal(a.axes, b.axes)
        assert np.array_equal(a.explained_variance_ratio, b.explained_variance_ratio)

    def test_validation(self):
        with pytest.raises(ValueError):
            pca_fit(np.zeros((5, 3)), k=4)  # k > d
        with pytest.raises(ValueError):
            pca_fit(np.zeros((2, 5)), k=3)  # n < k
        with pytest.raises(ValueError):
            pca_fit(np.zeros((5, 3)), k=0)

    def test_projection_dim_check(self):
        model = pca_fit(np.random.default_rng(5).normal(size=(10, 4)), k=2)
        with pytest.raises(ValueError):
            pca_project(model, np.zeros((3, 5)))


class TestTrajectoryProjection:
    def test_identical_tracks_identical_columns(self):
        rng = np.random.default_rng(6)
        z = rng.normal(size=(20, 8))
        rows = trajectory_projection(z, z.copy())
        assert rows.shape == (20, 5)
        assert np.allclose(rows[:, 1:3], rows[:, 3:5], atol=1e-12)

    def test_row_count_matches_frames(self):
        rng = np.random.default_rng(7)
        rows = trajectory_projection(rng.normal(size=(15, 6)), rng.normal(size=(15, 6)))
        assert rows.shape[0] == 15
        assert np.array_equal(rows[:, 0], np.arange(15))

    def test_projection_gap_tracks_latent_gap(self):
        # rank correlation between projected separation and true separation
        rng = np.random.default_rng(8)
        base = rng.normal(size=(30, 10))
        gaps, proj_gaps = [], []
        for scale in (0.01, 0.1, 0.5, 1.0, 2.0):
            noisy = base + scale * rng.normal(size=base.shape)
            rows = trajectory_projection(base, noisy)
            gaps.append(scale)
            proj_gaps.append(np.linalg.norm(rows[:, 1:3] - rows[:, 3:5], axis=1).mean())
        order = np.argsort(proj_gaps)
        assert list(order) == sorted(order)  # monotone in the injected gap

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            trajectory_projection(np.zeros((5, 3)), np.zeros((4, 3)))


class TestCsv:
    def test_deterministic_full_precision(self, tmp_path):
        rows = [[0, 0.1 + 0.2, -1.5e-17], [1, np.float32(0.25), 3]]
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_csv(p1, ["i", "x", "y"], rows)
        write_csv(p2, ["i", "x", "y"], rows)
        assert p1.read_bytes() == p2.read_bytes()
        text = p1.read_text()
        assert text.splitlines()[0] == "i,x,y"
        assert "0.30000000000000004" in text  # full float precision kept
