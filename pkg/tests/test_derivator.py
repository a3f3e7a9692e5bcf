# tests/test_derivator.py - Derivator evaluation, jumps, measures and JSON
import math

import numpy as np
import pytest

from core.derivator import (
    AffineShape, ArcShape, ConstantShape, Derivator, IdentityShape, Segment, SegmentKind,
    builtin_derivator, default_grid, identity_with_jumps, resolve_derivator,
)
from core.errors import DerivatorSpecError, DomainError, IntervalError

TOL = 1e-12


class TestEval:
    def test_silkworm_branch_values(self, silkworm):
        assert silkworm.eval(0.0) == 0.0
        assert silkworm.eval(2.0) == pytest.approx(1.0, abs=TOL)
        assert silkworm.eval(2.5) == 1.0
        assert silkworm.eval(4.0) == pytest.approx(2.0, abs=TOL)
        assert silkworm.eval(5.0) == 3.0

    def test_silkworm_periodic_branch(self, silkworm):
        assert silkworm.eval(6.0) == pytest.approx(4.0 + math.sqrt(3.0) / 2.0, abs=TOL)

    def test_identity(self, identity):
        assert identity.eval(7.3) == 7.3

    def test_period_shift_adds_four(self, silkworm):
        # t = 0 is excluded: g(5) is the left value before the rebirth jump
        for t in np.linspace(0.0, 10.0, 401)[1:]:
            assert silkworm.eval(t + 5.0) - silkworm.eval(t) == pytest.approx(4.0, abs=TOL)

    def test_monotone_on_random_pairs(self, silkworm, rng):
        pairs = np.sort(rng.uniform(0.0, 15.0, size=(10_000, 2)), axis=1)
        for t1, t2 in pairs:
            assert silkworm.eval(t1) <= silkworm.eval(t2) + TOL

    def test_outside_domain(self, silkworm, identity):
        with pytest.raises(DomainError):
            silkworm.eval(-0.1)
        with pytest.raises(DomainError):
            identity.eval(math.inf)
        with pytest.raises(DomainError):
            identity_with_jumps([], 2.0).eval(2.5)


class TestJumps:
    @pytest.mark.parametrize("t, expected", [(4.0, 3.0), (5.0, 4.0), (2.0, 1.0)])
    def test_right_limit(self, silkworm, t, expected):
        assert silkworm.right_limit(t) == pytest.approx(expected, abs=TOL)

    def test_right_limit_identity(self, identity):
        assert identity.right_limit(3.25) == 3.25

    @pytest.mark.parametrize("t, expected", [(4.0, 1.0), (3.0, 0.0), (5.0, 1.0), (9.0, 1.0), (7.5, 0.0)])
    def test_delta(self, silkworm, t, expected):
        assert silkworm.delta(t) == expected

    def test_delta_identity(self, identity):
        assert identity.delta(1.0) == 0.0

    def test_jumps_in_periodic(self, silkworm):
        jumps = silkworm.jumps_in(0.0, 12.0)
        assert list(jumps) == [(4.0, 1.0), (5.0, 1.0), (9.0, 1.0), (10.0, 1.0)]

    def test_jumps_half_open(self, silkworm):
        assert len(silkworm.jumps_in(0.0, 4.0)) == 0
        assert silkworm.jumps_in(4.0, 5.0).times == [4.0]

    def test_identity_has_no_jumps(self, identity):
        assert len(identity.jumps_in(0.0, 100.0)) == 0

    def test_inverted_interval(self, silkworm):
        with pytest.raises(IntervalError):
            silkworm.jumps_in(3.0, 1.0)


class TestMeasure:
    def test_measure(self, silkworm, identity):
        assert silkworm.measure(0.0, 5.0) == pytest.approx(3.0, abs=TOL)
        assert silkworm.measure(2.0, 3.0) == 0.0
        assert identity.measure(1.5, 4.0) == pytest.approx(2.5)

    def test_measure_minus_jumps(self, silkworm, identity):
        assert silkworm.measure_minus_jumps(0.0, 5.0) == pytest.approx(2.0, abs=TOL)
        assert silkworm.measure_minus_jumps(4.0, 5.0) == 0.0
        assert identity.measure_minus_jumps(0.5, 2.0) == pytest.approx(1.5)

    def test_measure_inverted(self, silkworm):
        with pytest.raises(IntervalError):
            silkworm.measure(2.0, 1.0)

    def test_constancy_components(self, silkworm, identity):
        assert silkworm.constancy_components(0.0, 5.0) == [(2.0, 3.0), (4.0, 5.0)]
        assert silkworm.constancy_components(0.0, 2.0) == []
        assert identity.constancy_components(0.0, 3.0) == []

    def test_constancy_components_second_period(self, silkworm):
        assert silkworm.constancy_components(5.0, 10.0) == [(7.0, 8.0), (9.0, 10.0)]

    def test_additive_on_random_triples(self, silkworm, rng):
        triples = np.sort(rng.uniform(0.0, 15.0, size=(500, 3)), axis=1)
        # jump times and segment ends as exact endpoints
        triples = np.vstack([triples, [[0.0, 4.0, 5.0], [2.0, 5.0, 9.0], [4.0, 4.0, 10.0]]])
        for a, b, c in triples:
            assert silkworm.measure(a, c) == pytest.approx(silkworm.measure(a, b) + silkworm.measure(b, c), abs=TOL)

    def test_jumps_split_measure_on_random_pairs(self, silkworm, rng):
        pairs = np.sort(rng.uniform(0.0, 15.0, size=(500, 2)), axis=1)
        pairs = np.vstack([pairs, [[4.0, 5.0], [0.0, 10.0], [5.0, 14.0]]])
        for a, b in pairs:
            split = silkworm.measure_minus_jumps(a, b) + silkworm.jumps_in(a, b).total()
            assert silkworm.measure(a, b) == pytest.approx(split, abs=TOL)

    @pytest.mark.parametrize("derivator", ["silkworm", "two_jumps", "step"])
    def test_listed_jumps_match_right_limits(self, derivator, request):
        d = request.getfixturevalue(derivator)
        upper = 15.0 if derivator == "silkworm" else d.t_max
        jumps = d.jumps_in(0.0, upper)
        assert len(jumps) > 0
        for t, delta in jumps:
            assert d.right_limit(t) - d.eval(t) == pytest.approx(delta, abs=TOL)


class TestConstruction:
    def test_gap_rejected(self):
        with pytest.raises(DerivatorSpecError):
            Derivator((Segment(0.0, 1.0, IdentityShape()), Segment(1.5, 2.0, AffineShape(1.0, 1.5))))

    def test_negative_jump_rejected(self):
        with pytest.raises(DerivatorSpecError):
            Derivator((Segment(0.0, 1.0, ConstantShape(0.0), -1.0), Segment(1.0, 2.0, ConstantShape(-1.0))))

    def test_discontinuous_junction_rejected(self):
        with pytest.raises(DerivatorSpecError):
            Derivator((Segment(0.0, 1.0, IdentityShape()), Segment(1.0, 2.0, ConstantShape(3.0))))

    def test_arc_outside_monotone_span(self):
        with pytest.raises(DerivatorSpecError):
            Derivator((Segment(0.0, 3.0, ArcShape(rising=True, center=2.0, radius=2.0)),))

    def test_initial_jump_only_without_period(self):
        with pytest.raises(DerivatorSpecError):
            Derivator((Segment(0.0, 1.0, IdentityShape()),), period=1.0, initial_jump=0.5)

    def test_initial_jump(self):
        d = Derivator((Segment(0.0, 1.0, IdentityShape()),), initial_jump=0.5)
        assert d.eval(0.0) == 0.0
        assert d.eval(0.5) == 1.0
        assert d.delta(0.0) == 0.5
        assert list(d.jumps_in(0.0, 1.0)) == [(0.0, 0.5)]

    def test_segment_kinds(self, silkworm):
        kinds = [seg.kind for seg in silkworm.segments]
        assert kinds == [SegmentKind.SMOOTH, SegmentKind.CONSTANT, SegmentKind.SMOOTH, SegmentKind.CONSTANT]

    def test_identity_with_jumps(self):
        d = identity_with_jumps([(1.0, 0.5)], 3.0)
        assert d.eval(1.0) == 1.0
        assert d.eval(1.5) == 2.0
        assert d.delta(1.0) == 0.5

    def test_step(self, step):
        assert step.eval(1.0) == 0.0
        assert step.right_limit(1.0) == 2.0
        assert step.measure(0.0, 2.0) == 2.0

    def test_unknown_builtin(self):
        with pytest.raises(DerivatorSpecError):
            builtin_derivator("logistic")


class TestSerialization:
    def test_json_round_trip(self, silkworm):
        again = Derivator.from_json(silkworm.to_json())
        assert again == silkworm
        for t in (0.7, 2.0, 3.5, 4.0, 6.3, 14.0):
            assert again.eval(t) == silkworm.eval(t)
            assert again.delta(t) == silkworm.delta(t)

    def test_resolve_from_file(self, tmp_path):
        d = identity_with_jumps([(0.5, 0.25)], 2.0)
        path = tmp_path / "g.json"
        path.write_text(d.to_json(), encoding="utf-8")
        assert resolve_derivator(str(path)) == d

    def test_resolve_unknown(self, tmp_path):
        with pytest.raises(DerivatorSpecError):
            resolve_derivator(str(tmp_path / "missing.json"))

    def test_kind_mismatch_rejected(self):
        data = {"segments": [{"kind": "constant", "span": [0, 1], "form": "identity", "params": {}}]}
        with pytest.raises(DerivatorSpecError):
            Derivator.from_dict(data)

    def test_unknown_form_rejected(self):
        data = {"segments": [{"span": [0, 1], "form": "cubic", "params": {}}]}
        with pytest.raises(DerivatorSpecError):
            Derivator.from_dict(data)


class TestStructure:
    def test_breakpoints(self, silkworm):
        assert silkworm.breakpoints(0.0, 7.0) == [0.0, 2.0, 3.0, 4.0, 5.0, 7.0]

    def test_sample(self, silkworm):
        g, g_right, delta = silkworm.sample([3.0, 4.0, 5.0])
        np.testing.assert_allclose(g, [1.0, 2.0, 3.0], atol=TOL)
        np.testing.assert_allclose(g_right, [1.0, 3.0, 4.0], atol=TOL)
        np.testing.assert_array_equal(delta, [0.0, 1.0, 1.0])

    def test_default_grid(self, silkworm):
        grid = default_grid(silkworm, 0.0, 5.0, points_per_stretch=10)
        assert grid.size == 5 + 2 * 9
        for t in (0.0, 2.0, 3.0, 4.0, 5.0):
            assert t in grid
        assert np.all(np.diff(grid) > 0)
