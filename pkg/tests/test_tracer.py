import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowembed import field as fld, tracer
from flowembed.errors import PreconditionError

import oracle


def test_zero_field_is_critical(backend):
    f = fld.make_analytic("zero", None, fld.Domain((8, 8)))
    tr = tracer.trace(f, (3.0, 4.0), 5, backend=backend)
    assert len(tr) == 1
    assert tr.critical
    assert np.array_equal(tr.positions, [[3.0, 4.0]])


def test_straight_line_exact(backend):
    dom = fld.Domain((9, 3))
    f = fld.make_analytic("constant", {"value": (1.0, 0.0)}, dom)
    tr = tracer.trace(f, (4.0, 1.0), 2, step=1.0, backend=backend)
    assert tr.indices.tolist() == [-2, -1, 0, 1, 2]
    assert np.array_equal(tr.positions, [[2, 1], [3, 1], [4, 1], [5, 1], [6, 1]])
    assert tr.forward == tr.backward == "complete"


def test_circle_closure(backend):
    dom = fld.Domain.from_box((40, 40), (-2.0, -2.0), (2.0, 2.0))
    f = fld.make_analytic("center", None, dom)
    tr = tracer.trace(f, (1.0, 0.0), 628, step=2 * math.pi / 628, backend=backend)
    assert np.linalg.norm(tr.positions[-1] - [1.0, 0.0]) <= 1e-4
    # a plain 0.01 step leaves the arc 2*pi - 6.28 short of closing
    tr = tracer.trace(f, (1.0, 0.0), 628, step=0.01, backend=backend)
    gap = 2 * math.pi - 6.28
    assert np.linalg.norm(tr.positions[-1] - [1.0, 0.0]) == pytest.approx(gap, abs=1e-4)


def test_arc_and_time_spacing(backend):
    dom = fld.Domain((20, 3))
    f = fld.make_analytic("constant", {"value": (2.0, 0.0)}, dom)
    arc = tracer.trace(f, (10.0, 1.0), 3, step=1.0, mode="arc", backend=backend)
    tim = tracer.trace(f, (10.0, 1.0), 3, step=1.0, mode="time", backend=backend)
    assert np.allclose(np.diff(arc.positions[:, 0]), 1.0)
    assert np.allclose(np.diff(tim.positions[:, 0]), 2.0)


def test_modes_share_orbit(backend):
    dom = fld.Domain.from_box((40, 40), (-2.0, -2.0), (2.0, 2.0))
    f = fld.make_analytic("center", None, dom)
    arc = tracer.trace(f, (0.5, 0.0), 50, step=0.02, mode="arc", backend=backend)
    tim = tracer.trace(f, (0.5, 0.0), 50, step=0.02, mode="time", backend=backend)
    assert np.allclose(np.linalg.norm(arc.positions, axis=1), 0.5, atol=1e-8)
    assert np.allclose(np.linalg.norm(tim.positions, axis=1), 0.5, atol=1e-8)
    darc = np.linalg.norm(np.diff(arc.positions, axis=0), axis=1)
    dtim = np.linalg.norm(np.diff(tim.positions, axis=0), axis=1)
    assert np.mean(darc) == pytest.approx(2 * np.mean(dtim), rel=1e-3)


def test_boundary_truncation(backend):
    dom = fld.Domain((4, 1))
    f = fld.make_analytic("constant", {"value": (1.0, 0.0)}, dom)
    tr = tracer.trace(f, (0.0, 0.0), 3, step=1.0, backend=backend)
    assert tr.indices.tolist() == [0, 1, 2, 3]
    assert tr.backward == "boundary" and tr.forward == "complete"


def test_seed_outside(backend):
    f = fld.make_analytic("center", None, fld.Domain((4, 4)))
    with pytest.raises(PreconditionError):
        tracer.trace(f, (10.0, 0.0), 3, backend=backend)


def test_default_step():
    dom = fld.Domain((4, 4), spacing=(0.5, 0.25))
    assert tracer.default_step(dom) == 0.125
    assert tracer.critical_speed(dom) == pytest.approx(5e-10)


@settings(max_examples=25, deadline=None)
@given(
    name=st.sampled_from(["center", "saddle", "stuart_vortex"]),
    fx=st.floats(0.05, 0.95), fy=st.floats(0.05, 0.95),
    L=st.integers(0, 30), time_mode=st.booleans(),
)
def test_matches_scalar_oracle(backend, name, fx, fy, L, time_mode):
    dom = fld.default_domain(name, (12, 10))
    f = fld.make_analytic(name, None, dom)
    (x0, x1), (y0, y1) = dom.bounds
    seed = (x0 + fx * (x1 - x0), y0 + fy * (y1 - y0))
    h = 0.5 * min(dom.spacing)
    tr = tracer.trace(f, seed, L, step=h, mode="time" if time_mode else "arc", backend=backend)
    ref = oracle.trace(name, dom, seed, L, h, time_mode=time_mode)
    assert tr.indices.tolist() == [s for s, _ in ref]
    assert np.allclose(tr.positions, [x for _, x in ref], rtol=0, atol=1e-12)
    assert np.allclose(tr.distances, tr.indices * h)
