import math

import numpy as np
import pytest

from geospot.cost import GroundCostConfig, build_cost_triplet
from geospot.distance import FailedDomain, PairwiseDistanceTable, geospot_distance, pairwise_matrix
from geospot.errors import DataError
from geospot.ingest import DomainDataset
from geospot.measures import domain_measure, to_measure
from geospot.ot import SinkhornConfig, sinkhorn_divergence

FEAT = GroundCostConfig("feat")
HYBRID = GroundCostConfig("feat", "arc", lam=0.5)
FAST = SinkhornConfig(epsilon=0.05)


def entropic_2x2(C, eps):
    """Closed-form entropic optimum for a 2x2 problem with uniform marginals.

    The plan is [[x, h-x], [h-x, x]] with h = 1/2; stationarity of
    <P, C> + eps * sum P log P gives x / (h - x) = exp(-(C11 + C22 - C12 - C21) / (2 eps)).
    """
    h = 0.5
    log_r = -(C[0, 0] + C[1, 1] - C[0, 1] - C[1, 0]) / (2 * eps)
    x = h / (1 + math.exp(-log_r)) if log_r > -700 else 0.0
    return x * (C[0, 0] + C[1, 1]) + (h - x) * (C[0, 1] + C[1, 0])


def _cos(u, v):
    return 1 - (u[0] * v[0] + u[1] * v[1]) / (math.hypot(*u) * math.hypot(*v))


@pytest.mark.parametrize("eps", [0.5, 0.1, 0.01])
def test_two_point_domains_hand_assembled(eps):
    fa = [(1.0, 0.0), (0.8, 0.6)]
    fb = [(0.0, 1.0), (-0.6, 0.8)]
    A = DomainDataset("A", np.zeros((2, 2)), {"feat": np.array(fa)})
    B = DomainDataset("B", np.zeros((2, 2)), {"feat": np.array(fb)})
    sq = lambda X, Y: np.array([[_cos(x, y) ** 2 for y in Y] for x in X])
    mats = [sq(fa, fb), sq(fa, fa), sq(fb, fb)]
    top = max(m.max() for m in mats)
    cross, self_a, self_b = (entropic_2x2(m / top, eps) for m in mats)
    expected = cross - 0.5 * (self_a + self_b)
    got = geospot_distance(A, B, FEAT, SinkhornConfig(epsilon=eps, tolerance=1e-13))
    assert got.value == pytest.approx(expected, abs=1e-11)
    assert got.cross_cost == pytest.approx(cross, abs=1e-11)


def test_self_pair_is_zero(make_domain):
    d = make_domain("A", 40)
    assert abs(geospot_distance(d, d, HYBRID, n_max=100).value) <= 1e-9


def test_lambda_one_reduces_to_feature_only(make_domain):
    a, b = make_domain("A", 30), make_domain("B", 25, shift=0.5)
    full = geospot_distance(a, b, GroundCostConfig("feat", "arc", lam=1.0), FAST)
    ma, mb = to_measure(a), to_measure(b)
    direct = sinkhorn_divergence(ma, mb, lambda s, t: build_cost_triplet(s, t, FEAT), FAST)
    assert abs(full.value - direct.value) <= 1e-12


def test_lambda_zero_reduces_to_location_only(make_domain):
    a, b = make_domain("A", 30), make_domain("B", 25, shift=0.5)
    loc_only = GroundCostConfig(None, "embedding", "loc", lam=0.0)
    full = geospot_distance(a, b, GroundCostConfig("feat", "embedding", "loc", lam=0.0), FAST)
    assert abs(full.value - geospot_distance(a, b, loc_only, FAST).value) <= 1e-12


def test_subsampling_uses_cap(make_domain):
    a, b = make_domain("A", 80), make_domain("B", 90)
    res = geospot_distance(a, b, FEAT, FAST, n_max=20, seed=3)
    ma, mb = domain_measure(a, 20, 3), domain_measure(b, 20, 3)
    assert len(ma) == len(mb) == 20
    direct = sinkhorn_divergence(ma, mb, lambda s, t: build_cost_triplet(s, t, FEAT), FAST)
    assert res.value == direct.value


def test_three_identical_domains(rng):
    coords = np.column_stack([rng.uniform(-50, 50, 20), rng.uniform(-100, 100, 20)])
    feats = rng.normal(size=(20, 4))
    domains = [DomainDataset(k, coords, {"feat": feats}) for k in "XYZ"]
    t = pairwise_matrix(domains, HYBRID)
    assert t.values.shape == (3, 3)
    assert np.abs(t.values).max() <= 1e-9


def test_two_domains_symmetric(make_domain):
    t = pairwise_matrix([make_domain("A", 15), make_domain("B", 12, 1.0)], HYBRID)
    assert t.values[0, 1] == t.values[1, 0]
    assert t.values[0, 1] > 0
    np.testing.assert_array_equal(np.diag(t.values), [0.0, 0.0])


def test_cells_match_independent_recomputation(make_domain):
    domains = [make_domain(k, n, s) for k, n, s in [("A", 30, 0), ("B", 45, 0.3), ("C", 28, 0.6), ("D", 50, 1)]]
    t = pairwise_matrix(domains, HYBRID, FAST, n_max=25, seed=11)
    assert t.diagnostics["subsample_sizes"] == {"A": 25, "B": 25, "C": 25, "D": 25}
    for i, di in enumerate(domains):
        for j, dj in enumerate(domains):
            if i != j:
                again = geospot_distance(di, dj, HYBRID, FAST, n_max=25, seed=11).value
                assert abs(t.values[i, j] - again) <= 1e-12
    np.testing.assert_array_equal(t.values, t.values.T)


def test_permuting_domains_permutes_table(make_domain):
    domains = [make_domain(k, 20, s) for k, s in zip("ABCD", (0, 0.4, 0.8, 1.2))]
    base = pairwise_matrix(domains, HYBRID, FAST)
    order = [2, 0, 3, 1]
    perm = pairwise_matrix([domains[k] for k in order], HYBRID, FAST)
    assert perm.domain_ids == [base.domain_ids[k] for k in order]
    np.testing.assert_array_equal(perm.values, base.values[np.ix_(order, order)])


def test_arc_lambda_zero_ranking_matches_geographic(make_domain):
    centers = [(0, 0), (10, 10), (-30, 60), (45, -120), (5, -5)]
    domains = [make_domain(f"G{k}", 15, center=c, spread=(3, 3)) for k, c in enumerate(centers)]
    cfg = GroundCostConfig("feat", "arc", lam=0.0)
    geo = GroundCostConfig(None, "arc", lam=0.0)
    t = pairwise_matrix(domains, cfg, FAST)
    for i, ref in enumerate(domains):
        pure = [geospot_distance(ref, d, geo, FAST).value if d is not ref else 0.0 for d in domains]
        assert list(np.argsort(t.values[i], kind="stable")) == list(np.argsort(pure, kind="stable"))
        np.testing.assert_array_equal(t.values[i], pure)


def test_failures_become_nan_cells(make_domain):
    good = [make_domain("A", 10), make_domain("B", 10, 0.5)]
    broken = DomainDataset("C", np.zeros((3, 2)), {"other": np.ones((3, 2))})
    t = pairwise_matrix(good + [FailedDomain("X", "corrupt file"), broken], FEAT, FAST)
    assert np.isfinite(t.values[:2, :2]).all()
    assert np.isnan(t.values[2]).all() and np.isnan(t.values[:, 2]).all()
    assert np.isnan(t.values[3, :3]).all() and t.values[3, 3] == 0.0
    assert t.errors["X"] == "corrupt file"
    assert any(k.startswith("A|C") for k in t.errors)
    assert t.diagnostics["n_failed"] == len(t.errors)


def test_needs_two_domains(make_domain):
    with pytest.raises(DataError):
        pairwise_matrix([make_domain("A", 5)], FEAT)


def test_jobs_do_not_change_values(make_domain):
    domains = [make_domain(k, 18, s) for k, s in zip("ABCD", (0, 0.4, 0.8, 1.2))]
    one = pairwise_matrix(domains, HYBRID, FAST, jobs=1)
    four = pairwise_matrix(domains, HYBRID, FAST, jobs=4)
    assert one.to_csv() == four.to_csv()


def test_table_export_round_trip(tmp_path, make_domain):
    t = pairwise_matrix([make_domain("A", 8), make_domain("B", 9, 0.5), FailedDomain("C", "bad")], FEAT, FAST)
    csv_path, json_path = t.write(tmp_path / "tab")
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "domain_id,A,B,C"
    assert lines[3].startswith("C,nan")
    for loaded in (PairwiseDistanceTable.read(csv_path), PairwiseDistanceTable.read(json_path)):
        assert loaded.domain_ids == ["A", "B", "C"]
        np.testing.assert_array_equal(loaded.values, t.values)
    js = PairwiseDistanceTable.read(json_path)
    assert js.config["ground_cost"]["feature_space"] == "feat"
    assert js.config["subsample"]["n_max"] == 1000
    assert js.errors == {"C": "bad"}
