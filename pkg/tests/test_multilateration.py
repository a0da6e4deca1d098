import numpy as np
import pytest

from iccl import multilateration as ml
from iccl.errors import DegenerateGeometry, InvalidArgument

from oracles import trilaterate_three


def _ranges(anchors, points):
    return np.linalg.norm(anchors[:, None, :] - points[None, :, :], axis=2)  # (M_a, U)


class TestLinearized:
    def test_three_anchor_example(self):
        anchors = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
        est = ml.linearized_solve(anchors, [5.0, np.sqrt(65), np.sqrt(45)])
        np.testing.assert_allclose(est.position, (3.0, 4.0), atol=1e-9)
        assert est.residual < 1e-9 and np.isfinite(est.condition)

    def test_matches_closed_form(self, rng):
        for _ in range(50):
            anchors = rng.uniform(0, 100, (3, 2))
            p = rng.uniform(0, 100, 2)
            d = np.linalg.norm(anchors - p, axis=1)
            np.testing.assert_allclose(ml.linearized_solve(anchors, d).position, trilaterate_three(anchors, d),
                                       atol=1e-7)

    def test_collinear(self):
        with pytest.raises(DegenerateGeometry):
            ml.linearized_solve([[0, 0], [5, 0], [10, 0]], [1, 2, 3])

    def test_too_few_anchors(self):
        with pytest.raises(InvalidArgument):
            ml.linearized_solve([[0, 0], [5, 0]], [1, 2])

    def test_count_mismatch(self):
        with pytest.raises(InvalidArgument):
            ml.linearized_solve([[0, 0], [5, 0], [0, 5]], [1, 2])

    def test_twenty_anchors_fifty_points(self, rng):
        anchors = rng.uniform(0, 100, (20, 2))
        pts = rng.uniform(0, 100, (50, 2))
        est = ml.locate(anchors, _ranges(anchors, pts), iterative=False)
        assert np.max(np.linalg.norm(est - pts, axis=1)) < 1e-8


class TestRefine:
    def test_exact_converges_fast(self, rng):
        anchors = rng.uniform(0, 100, (6, 2))
        p = rng.uniform(0, 100, 2)
        d = np.linalg.norm(anchors - p, axis=1)
        est = ml.refine(ml.linearized_solve(anchors, d), anchors, d)
        assert est.iterations <= 2
        np.testing.assert_allclose(est.position, p, atol=1e-9)

    def test_noisy_never_worse(self, rng):
        anchors = rng.uniform(0, 100, (20, 2))
        for _ in range(30):
            p = rng.uniform(0, 100, 2)
            d = np.linalg.norm(anchors - p, axis=1) + rng.normal(0, 1, 20)
            lin = ml.linearized_solve(anchors, d)
            ref = ml.refine(lin, anchors, d)
            assert ref.residual <= lin.residual

    def test_never_worse_from_bad_start(self, rng):
        anchors = rng.uniform(0, 100, (5, 2))
        d = rng.uniform(0, 80, 5)
        start = ml.PositionEstimate(np.array([1e4, -1e4]), np.nan, 1.0)
        r0 = np.linalg.norm(ml.range_residuals(start.position[None], anchors, d[None]))
        assert ml.refine(start, anchors, d).residual <= r0

    def test_zero_iterations_identity(self, rng):
        anchors = rng.uniform(0, 100, (4, 2))
        d = rng.uniform(10, 50, 4)
        lin = ml.linearized_solve(anchors, d)
        out = ml.refine(lin, anchors, d, max_iter=0)
        np.testing.assert_array_equal(out.position, lin.position)
        assert out.iterations == 0

    def test_on_anchor_flags_degenerate(self):
        anchors = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
        start = ml.PositionEstimate(np.array([0.0, 0.0]), np.nan, 1.0)
        out = ml.refine(start, anchors, [1.0, 9.0, 9.0])
        assert out.degenerate
        np.testing.assert_array_equal(out.position, (0.0, 0.0))


class TestProperties:
    def test_exact_recovery_random_geometries(self, rng):
        worst = 0.0
        for _ in range(200):
            m = rng.integers(3, 21)
            anchors = rng.uniform(0, 100, (m, 2))
            pts = rng.uniform(0, 100, (5, 2))
            est = ml.locate(anchors, _ranges(anchors, pts))
            worst = max(worst, np.max(np.linalg.norm(est - pts, axis=1)))
        assert worst < 1e-8

    def test_rigid_equivariance(self, rng):
        anchors = rng.uniform(0, 100, (7, 2))
        pts = rng.uniform(0, 100, (20, 2))
        th = rng.uniform(0, 2 * np.pi)
        rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        shift = rng.uniform(-500, 500, 2)
        a2, p2 = anchors @ rot.T + shift, pts @ rot.T + shift
        est1 = ml.locate(anchors, _ranges(anchors, pts))
        est2 = ml.locate(a2, _ranges(a2, p2))
        np.testing.assert_allclose(est1 @ rot.T + shift, est2, atol=1e-8)

    def test_more_anchors_help(self, rng):
        medians = []
        for m in (3, 5, 10, 20):
            errs = []
            for _ in range(100):
                anchors = rng.uniform(0, 100, (m, 2))
                p = rng.uniform(0, 100, (1, 2))
                d = _ranges(anchors, p) + rng.normal(0, 2.0, (m, 1))
                errs.append(np.linalg.norm(ml.locate(anchors, np.abs(d))[0] - p[0]))
            medians.append(np.median(errs))
        assert all(b <= a for a, b in zip(medians, medians[1:])), medians


class TestLocalizeAll:
    def test_order_and_errors(self, rng):
        anchors = rng.uniform(0, 100, (5, 2))
        pts = rng.uniform(0, 100, (4, 2))
        d = _ranges(anchors, pts)
        d[2, 1] = np.nan
        d[0, 3] = -1.0
        out = ml.localize_all(anchors, d)
        assert [o.ok for o in out] == [True, False, True, False]
        np.testing.assert_allclose(out[0].position, pts[0], atol=1e-8)
        np.testing.assert_allclose(out[2].position, pts[2], atol=1e-8)
        assert out[1].error and np.all(np.isnan(out[1].position))

    def test_collinear_fails_everyone(self):
        out = ml.localize_all([[0, 0], [1, 1], [2, 2]], np.ones((3, 4)))
        assert len(out) == 4 and not any(o.ok for o in out) and all(o.degenerate for o in out)

    def test_shape_check(self):
        with pytest.raises(InvalidArgument):
            ml.localize_all([[0, 0], [1, 0], [0, 1]], np.ones((4, 2)))

    def test_agrees_with_fast_path(self, rng):
        anchors = rng.uniform(0, 100, (8, 2))
        d = _ranges(anchors, rng.uniform(0, 100, (10, 2))) + rng.normal(0, 3, (8, 10))
        d = np.abs(d)
        fast = ml.locate(anchors, d)
        slow = np.array([o.position for o in ml.localize_all(anchors, d)])
        np.testing.assert_array_equal(fast, slow)
