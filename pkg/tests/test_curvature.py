import numpy as np
import pytest

from varmcf.curvature import (
    CurvatureField,
    QuadratureSpec,
    curvature_field,
    dissipation,
    raw_curvature,
    smoothed_first_variation,
    smoothed_mass,
)
from varmcf.errors import QuadratureBudgetExceeded
from varmcf.geometry import Plane
from varmcf.ingest import ShapeSpec, generate
from varmcf.kernel import Kernel
from varmcf.varifold import Atom, Varifold, first_variation


def field_divergence(v, field):
    return first_variation(v, field.velocities, field.differentials)


def circle(n_atoms, radius=1.0):
    return generate(ShapeSpec("circle", samples=n_atoms, radius=radius))


def single_atom(mass=1.0):
    return Varifold.from_atoms(
        1, 2, [Atom(np.zeros(2), Plane(np.eye(1, 2)), mass)]
    )


def arc_quadrature_mass(kernel, y, radius=1.0, nodes=100_000):
    """1-d arc-length oracle for the smoothed mass of the unit-density circle."""
    theta = 2.0 * np.pi * (np.arange(nodes) + 0.5) / nodes
    pts = radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    seg = 2.0 * np.pi * radius / nodes
    return float(np.sum(kernel.values(pts - y)) * seg)


def arc_quadrature_first_variation(kernel, y, radius=1.0, nodes=100_000):
    """Arc-length oracle for the smoothed first variation of the circle."""
    theta = 2.0 * np.pi * (np.arange(nodes) + 0.5) / nodes
    pts = radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    tangents = np.stack([-np.sin(theta), np.cos(theta)], axis=1)
    grads = kernel.gradients(pts - y)
    proj = tangents * np.einsum("ji,ji->j", tangents, grads)[:, None]
    return proj.sum(axis=0) * (2.0 * np.pi * radius / nodes)


class TestQuadratureSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            QuadratureSpec(rule="monte-carlo")
        with pytest.raises(ValueError):
            QuadratureSpec(points_per_axis=2)
        with pytest.raises(ValueError):
            QuadratureSpec(domain_radius_factor=1.0)

    def test_ball_nodes_integrate_a_gaussian(self):
        # the intended integrands decay to ~0 at the ball boundary
        sigma = 0.15
        for rule in ("tensor-midpoint", "tensor-gauss"):
            spec = QuadratureSpec(rule, 24, 5.0)
            nodes, weights = spec.ball_nodes(2, 1.0)
            r2 = np.einsum("pi,pi->p", nodes, nodes)
            vals = np.exp(-r2 / (2.0 * sigma**2)) / (2.0 * np.pi * sigma**2)
            assert weights @ vals == pytest.approx(1.0, abs=1e-6)
            assert np.all(r2 <= 1.0 + 1e-12)

    def test_budget_enforced(self):
        spec = QuadratureSpec(points_per_axis=64, max_nodes=1000)
        with pytest.raises(QuadratureBudgetExceeded):
            spec.ball_nodes(2, 1.0)

    def test_refined_doubles_points(self):
        spec = QuadratureSpec()
        assert spec.refined().points_per_axis == 2 * spec.points_per_axis


class TestSmoothedMass:
    def test_far_point_vanishes(self):
        v = circle(30)
        kernel = Kernel.create(2, 0.1)
        assert smoothed_mass(v, kernel, np.array([5.0, 0.0])) == 0.0

    def test_single_atom_peak(self):
        kernel = Kernel.create(2, 0.2)
        v = single_atom(mass=0.7)
        expected = 0.7 * kernel.values(np.zeros((1, 2)))[0]
        assert smoothed_mass(v, kernel, np.zeros(2)) == pytest.approx(expected, rel=1e-14)

    def test_circle_matches_arc_oracle(self):
        kernel = Kernel.create(2, 0.1)
        v = circle(400)
        y = v.positions[17]
        oracle = arc_quadrature_mass(kernel, y)
        assert smoothed_mass(v, kernel, y) == pytest.approx(oracle, rel=0.01)


class TestSmoothedFirstVariation:
    def test_single_atom_center(self):
        kernel = Kernel.create(2, 0.2)
        v = single_atom()
        assert np.abs(smoothed_first_variation(v, kernel, np.zeros(2))).max() == 0.0

    def test_reflection_symmetric_pair_cancels(self):
        # two atoms mirror-symmetric about y with matching planes
        plane = Plane(np.eye(1, 2))
        v = Varifold.from_atoms(
            1,
            2,
            [
                Atom(np.array([0.3, 0.1]), plane, 1.0),
                Atom(np.array([-0.3, -0.1]), plane, 1.0),
            ],
        )
        kernel = Kernel.create(2, 0.25)
        val = smoothed_first_variation(v, kernel, np.zeros(2))
        assert np.abs(val).max() <= 1e-14

    def test_circle_points_outward(self):
        kernel = Kernel.create(2, 0.05)
        v = circle(400)
        y = v.positions[5]
        val = smoothed_first_variation(v, kernel, y)
        oracle = arc_quadrature_first_variation(kernel, y)
        assert np.linalg.norm(val - oracle) <= 0.02 * np.linalg.norm(oracle)
        outward = y / np.linalg.norm(y)
        assert np.dot(val, outward) > 0.0


class TestRawCurvature:
    def test_far_point(self):
        v = circle(30)
        kernel = Kernel.create(2, 0.1)
        assert np.abs(raw_curvature(v, kernel, np.array([7.0, 0.0]))).max() == 0.0

    def test_single_atom_center(self):
        kernel = Kernel.create(2, 0.3)
        assert np.abs(raw_curvature(single_atom(), kernel, np.zeros(2))).max() == 0.0

    def test_circle_points_inward(self):
        kernel = Kernel.create(2, 0.05)
        v = circle(400)
        y = v.positions[42]
        val = raw_curvature(v, kernel, y)
        assert np.dot(val, y / np.linalg.norm(y)) < 0.0

    def test_bounded_by_scaling_law(self):
        # |raw| <= c1 M eps^-2 with the recomputed constants
        rng = np.random.default_rng(2)
        for eps in (0.1, 0.3):
            kernel = Kernel.create(2, eps)
            from varmcf.kernel import unit_ball_volume

            c1 = 2.0 * (1.0 + unit_ball_volume(2) * kernel.c0) * (1.0 + kernel.c0)
            for count in (1, 20):
                v = circle(max(count, 3))
                cap = max(1.0, v.mass())
                pts = rng.standard_normal((50, 2))
                vals = np.array([raw_curvature(v, kernel, p) for p in pts])
                assert np.linalg.norm(vals, axis=1).max() <= c1 * cap * eps**-2


class TestCurvatureField:
    def test_single_atom_velocity_vanishes(self):
        kernel = Kernel.create(2, 0.3)
        field = curvature_field(single_atom(), kernel, QuadratureSpec())
        assert np.abs(field.velocities).max() <= 1e-8

    def test_crossing_lines_center_is_stationary(self):
        v = generate(ShapeSpec("crossing-lines", samples=21, length=2.0))
        kernel = Kernel.create(2, 0.2)
        field = curvature_field(v, kernel, QuadratureSpec())
        center = np.flatnonzero(np.linalg.norm(v.positions, axis=1) == 0.0)
        assert len(center) == 2
        assert np.abs(field.velocities[center]).max() <= 1e-8

    def test_circle_recovers_curvature(self):
        kernel = Kernel.create(2, 0.05)
        v = circle(400)
        field = curvature_field(v, kernel, QuadratureSpec())
        speeds = np.linalg.norm(field.velocities, axis=1)
        assert np.all((0.9 <= speeds) & (speeds <= 1.1))
        inward = -v.positions / np.linalg.norm(v.positions, axis=1, keepdims=True)
        cosines = np.einsum("ji,ji->j", field.velocities, inward) / speeds
        assert np.all(cosines >= np.cos(np.radians(5.0)))

    def test_differential_matches_finite_differences(self):
        # central differences of the velocity integral at matched quadrature;
        # eps = 0.05 keeps the quadrature ball inside the cutoff plateau,
        # where both quadratures resolve the common continuum derivative
        kernel = Kernel.create(2, 0.05)
        v = circle(150)
        spec = QuadratureSpec()
        field = curvature_field(v, kernel, spec)
        offsets, weights = spec.ball_nodes(2, min(1.0, spec.domain_radius_factor * kernel.eps))
        kvals = kernel.values(offsets)

        def velocity_at(x):
            nodes = x + offsets
            mass = np.array([smoothed_mass(v, kernel, z) for z in nodes])
            var = np.array([smoothed_first_variation(v, kernel, z) for z in nodes])
            raw = -var / (mass + kernel.eps)[:, None]
            return (weights * kvals) @ raw

        h = 1e-5
        atom = 7
        fd = np.empty((2, 2))
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            fd[i] = (velocity_at(v.positions[atom] + e) - velocity_at(v.positions[atom] - e)) / (
                2.0 * h
            )
        analytic = field.differentials[atom]  # standard Jacobian layout
        assert np.abs(analytic - fd.T).max() <= 1e-3 * max(1.0, np.abs(analytic).max())

    def test_scaling_bounds_over_mass_grid(self):
        from varmcf.kernel import unit_ball_volume

        for eps in (0.2, 0.4):
            kernel = Kernel.create(2, eps)
            c1 = 2.0 * (1.0 + unit_ball_volume(2) * kernel.c0) * (1.0 + kernel.c0)
            for scale in (0.5, 4.0):
                base = circle(40)
                v = Varifold(1, 2, base.positions, base.frames, scale * base.masses)
                cap = max(1.0, v.mass())
                field = curvature_field(v, kernel, QuadratureSpec(points_per_axis=8))
                assert field.sup_velocity <= c1 * cap * eps**-2
                assert field.sup_differential <= c1 * cap * eps**-4

    def test_empty_varifold(self):
        field = curvature_field(Varifold.empty(1, 2), Kernel.create(2, 0.2), QuadratureSpec())
        assert len(field) == 0 and field.sup_velocity == 0.0


class TestDissipation:
    def test_empty(self):
        assert dissipation(Varifold.empty(1, 2), Kernel.create(2, 0.2), QuadratureSpec()) == 0.0

    def test_single_atom_matches_velocity_divergence(self):
        kernel = Kernel.create(2, 0.3)
        spec = QuadratureSpec()
        v = single_atom()
        d = dissipation(v, kernel, spec)
        assert d > 0.0
        field = curvature_field(v, kernel, spec)
        assert abs(field_divergence(v, field) + d) <= 1e-3 * d

    def test_circle_willmore_energy(self):
        kernel = Kernel.create(2, 0.05)
        v = circle(400)
        d = dissipation(v, kernel, QuadratureSpec())
        assert d == pytest.approx(2.0 * np.pi, rel=0.15)

    def test_identity_tightens_under_refinement(self):
        kernel = Kernel.create(2, 0.1)
        v = circle(50)
        spec = QuadratureSpec()
        rels = []
        for q in (spec, spec.refined()):
            field = curvature_field(v, kernel, q)
            d = dissipation(v, kernel, q)
            rels.append(abs(field_divergence(v, field) + d) / d)
        assert rels[0] <= 1e-2
        assert rels[1] <= 1e-3

    def test_velocity_divergence_nonpositive(self):
        # the exact identity makes deltaV(h) = -D <= 0; quadrature noise only
        kernel = Kernel.create(2, 0.1)
        for shape in (circle(40), generate(ShapeSpec("segment", samples=20))):
            field = curvature_field(shape, kernel, QuadratureSpec())
            assert field_divergence(shape, field) <= 1e-6


class TestStability:
    def test_velocity_lipschitz_in_the_varifold(self):
        # perturbation response fit: the growth rate in eps stays below n + 5
        from varmcf.metric import bounded_lipschitz_distance

        rng = np.random.default_rng(4)
        base = circle(40)
        rates = []
        for eps in (0.1, 0.2, 0.4):
            kernel = Kernel.create(2, eps)
            spec = QuadratureSpec(points_per_axis=8)
            f0 = curvature_field(base, kernel, spec)
            worst = 0.0
            for amplitude in (1e-4, 1e-3):
                jitter = amplitude * rng.standard_normal(base.positions.shape)
                moved = Varifold(1, 2, base.positions + jitter, base.frames, base.masses)
                fm = curvature_field(moved, kernel, spec)
                gap = float(np.linalg.norm(fm.velocities - f0.velocities, axis=1).max())
                dist = bounded_lipschitz_distance(base, moved)
                worst = max(worst, gap / dist)
            rates.append(worst)
        slopes = np.diff(np.log(rates)) / np.diff(np.log([0.1, 0.2, 0.4]))
        assert np.all(slopes >= -(2 + 5) - 0.5)
