import math

import numpy as np
import pytest

from renorm_currents.annuli import annuli_from_trace
from renorm_currents.core import BackgroundMeasure, PointConfig
from renorm_currents.fields import (
    AnalyticField,
    circle_rule,
    circulation,
    eval_squared_with_singularity_split,
    field_grid_csv,
    make_G,
    synthetic_j,
)
from renorm_currents.geometry import growth_family


def _random_circle(rng, pts):
    while True:
        c = rng.uniform(-3, 3, 2)
        r = rng.uniform(0.1, 3)
        if np.abs(np.hypot(*(pts - c).T) - r).min() > 1e-3:
            return c, r


@pytest.mark.parametrize("kind", ["zero", "lebesgue", "line"])
def test_circulation_counts_enclosed_charge(kind):
    rng = np.random.default_rng({"zero": 1, "lebesgue": 2, "line": 3}[kind])
    bg = BackgroundMeasure(kind)
    for _ in range(40):
        pts = rng.uniform(-3, 3, (int(rng.integers(1, 12)), 2))
        j = synthetic_j(PointConfig(pts), kind)
        c, r = _random_circle(rng, pts)
        inside = int(np.sum(np.hypot(*(pts - c).T) < r))
        expected = 2 * math.pi * inside - float(bg.mass(c, r))
        assert circulation(j, c, r) == pytest.approx(expected, abs=1e-6)


def test_vortex_field_is_divergence_free():
    j = synthetic_j(PointConfig([[0, 0], [1, 0.5]]), "lebesgue")
    h = 1e-5
    x = np.random.default_rng(0).uniform(2, 4, (50, 2))
    dx = (j(x + [h, 0])[:, 0] - j(x - [h, 0])[:, 0]) / (2 * h)
    dy = (j(x + [0, h])[:, 1] - j(x - [0, h])[:, 1]) / (2 * h)
    assert np.abs(dx + dy).max() < 1e-6


def test_field_at_pole_raises():
    j = synthetic_j(PointConfig([[0, 0]]))
    with pytest.raises(ValueError):
        j(np.array([[0.0, 0.0]]))


def test_translation_commutes():
    j = synthetic_j(PointConfig([[0, 0], [1, 2]]), "line")
    s = np.array([0.3, -0.7])
    x = np.array([[2.0, 1.0], [-1.0, 0.5]])
    assert np.allclose(j.translated(s)(x + s), j(x))


def test_circle_rule_integrates_trig_polynomials():
    for breaks in ([], [0.3, 2.0, 5.9]):
        th, w = circle_rule(breaks, 512)
        assert math.fsum(w) == pytest.approx(2 * math.pi, rel=1e-14)
        assert math.fsum(w * np.cos(th) ** 2) == pytest.approx(math.pi, rel=1e-12)


def test_singularity_split_reassembles():
    j = synthetic_j(PointConfig([[0, 0], [2, 0]]), "lebesgue")
    x = np.array([[0.1, 0.05], [-0.02, 0.3]])
    reg, coef = eval_squared_with_singularity_split(j, x, 0)
    full = np.einsum("ij,ij->i", j(x), j(x))
    assert np.allclose(coef / np.einsum("ij,ij->i", x, x) + reg, full)


def test_comparison_field_structure():
    cfg = PointConfig([[0, 0], [0.4, 0], [3, 1]])
    tr = growth_family(cfg, 1.5)
    coll = annuli_from_trace(tr)
    eta = 0.5 * min(cfg.eta0, tr.start / cfg.n)
    G = make_G(tr, coll, eta)
    # zero outside the final balls, 1/|x - c| on each annulus
    far = np.array([[20.0, 20.0]])
    assert np.allclose(G(far), 0)
    a = coll[0]
    x = np.array([[a.center[0] + 0.5 * (a.inner + a.outer), a.center[1]]])
    assert np.linalg.norm(G(x)) >= 1.0 / (0.5 * (a.inner + a.outer)) - 1e-12
    with pytest.raises(ValueError, match="eta must satisfy"):
        make_G(tr, coll, 10.0)


def test_mismatched_terms_rejected():
    with pytest.raises(ValueError):
        AnalyticField(annulus_centers=[[0, 0]], annulus_inner=[1.0], annulus_outer=[])
    with pytest.raises(ValueError):
        AnalyticField(background="weird")


def test_grid_csv_shape():
    j = synthetic_j(PointConfig([[0.05, 0.05]]))
    text = field_grid_csv(j, (-1, -1, 1, 1), 4, 3)
    assert len(text.strip().splitlines()) == 13
