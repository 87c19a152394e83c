import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergmflow import (ModelSpec, TermSpec,
                      ValidationError, build_dyad_covariates, build_network,
                      group_flow_matrix, load_distances, load_flows,
                      load_nodes, racial_dissimilarity, scalar_dissimilarity,
                      synthetic_generate, write_distances_csv,
                      write_flows_csv, write_nodes_csv)

compositions = st.lists(st.floats(min_value=0.0, max_value=1000.0),
                        min_size=5, max_size=5).filter(lambda x: sum(x) > 1e-6)


class TestRacialDissimilarity:
    def test_identity(self):
        assert racial_dissimilarity([0.2, 0.2, 0.2, 0.2, 0.2],
                                    [0.2, 0.2, 0.2, 0.2, 0.2]) == 0.0

    def test_disjoint_support_is_max(self):
        assert racial_dissimilarity([1, 0, 0, 0, 0], [0, 1, 0, 0, 0]) == 1.0

    def test_hand_case(self):
        got = racial_dissimilarity([0.5, 0.5, 0, 0, 0], [0.25, 0.25, 0.5, 0, 0])
        assert got == pytest.approx(0.5)

    def test_counts_normalized(self):
        assert racial_dissimilarity([50, 50, 0, 0, 0],
                                    [1, 1, 2, 0, 0]) == pytest.approx(0.5)

    def test_malformed_rejected(self):
        with pytest.raises(ValidationError):
            racial_dissimilarity([-1, 2, 0, 0, 0], [1, 0, 0, 0, 0])
        with pytest.raises(ValidationError):
            racial_dissimilarity([0, 0, 0, 0, 0], [1, 0, 0, 0, 0])
        with pytest.raises(ValidationError):
            racial_dissimilarity([1, 0, 0], [1, 0, 0, 0, 0])

    @settings(max_examples=200, deadline=None)
    @given(a=compositions, b=compositions, c=compositions)
    def test_semimetric(self, a, b, c):
        dab = racial_dissimilarity(a, b)
        dba = racial_dissimilarity(b, a)
        dac = racial_dissimilarity(a, c)
        dcb = racial_dissimilarity(c, b)
        assert dab == dba
        assert 0.0 <= dab <= 1.0
        assert dab <= dac + dcb + 1e-12

    @settings(max_examples=100, deadline=None)
    @given(a=compositions)
    def test_zero_iff_equal(self, a):
        assert racial_dissimilarity(a, a) <= 1e-15


class TestScalarDissimilarity:
    def test_cases(self):
        assert scalar_dissimilarity(60, 60) == 0.0
        assert scalar_dissimilarity(100, 0) == 1.0
        assert scalar_dissimilarity(41.6, 55.3) == pytest.approx(0.137)

    def test_out_of_range(self):
        with pytest.raises(ValidationError):
            scalar_dissimilarity(-2, 10)
        with pytest.raises(ValidationError):
            scalar_dissimilarity(2, 110)


class TestBuildDyadCovariates:
    def test_structure(self, small_data):
        _model, _theta, _cur, lagged, nodes, dyads = small_data
        n = nodes.n_nodes
        off = ~np.eye(n, dtype=bool)
        for name in ("political_dissim", "rural_dissim", "racial_dissim"):
            m = dyads.matrix(name)
            assert np.array_equal(m, m.T)
            assert m.min() >= 0 and m.max() <= 1
        u = dyads.matrix("unemp_diff")
        assert np.array_equal(u, -u.T)
        s = dyads.matrix("same_state")
        assert set(np.unique(s)) <= {0.0, 1.0}
        lag = dyads.matrix("lagged_log_flow")
        assert np.allclose(lag, np.log1p(lagged.dense_matrix(dtype=float)))
        assert np.all(np.isfinite(dyads.matrix("log_distance")[off]))

    def test_same_state_semantics(self):
        nodes = _tiny_nodes(states=["s0", "s0", "s1"])
        km = _tiny_km(3)
        dyads = build_dyad_covariates(nodes, km)
        assert dyads.value("same_state", 0, 1) == 1.0
        assert dyads.value("same_state", 0, 2) == 0.0

    def test_log_distance_value(self):
        nodes = _tiny_nodes(states=["s0", "s0", "s1"])
        km = _tiny_km(3, fill=1000.0)
        dyads = build_dyad_covariates(nodes, km)
        assert dyads.value("log_distance", 0, 1) == pytest.approx(6.9078, abs=1e-4)

    def test_lag_transform(self):
        nodes = _tiny_nodes(states=["s0", "s0", "s1"])
        lagged = build_network([(0, 1, 99)], n_nodes=3)
        dyads = build_dyad_covariates(nodes, _tiny_km(3), lagged=lagged)
        assert dyads.value("lagged_log_flow", 0, 1) == pytest.approx(
            math.log(100), abs=1e-10)
        assert dyads.value("lagged_log_flow", 1, 0) == 0.0

    def test_missing_distance_rejected(self):
        nodes = _tiny_nodes(states=["s0", "s0", "s1"])
        km = _tiny_km(3)
        km[0, 2] = km[2, 0] = np.nan
        with pytest.raises(ValidationError, match="missing distance"):
            build_dyad_covariates(nodes, km)

    def test_nonpositive_distance_rejected(self):
        nodes = _tiny_nodes(states=["s0", "s0", "s1"])
        km = _tiny_km(3)
        km[0, 1] = km[1, 0] = 0.0
        with pytest.raises(ValidationError, match="positive"):
            build_dyad_covariates(nodes, km)


def _tiny_nodes(states):
    from ergmflow import NodeTable

    n = len(states)
    return NodeTable(
        ids=["n%d" % k for k in range(n)],
        state=states,
        region=["West"] * n,
        population=[1000] * n,
        density=[1.0] * n,
        psr=[4.0] * n,
        racial_shares=[[0.2, 0.2, 0.2, 0.2, 0.2]] * n,
        renter_pct=[20.0] * n,
        highered_pct=[15.0] * n,
        unemployment_pct=[5.0] * n,
        rural_pct=[50.0] * n,
        democrat_poll_pct=[50.0] * n,
        immigrant_inflow=[0] * n,
    )


def _tiny_km(n, fill=100.0):
    km = np.full((n, n), fill)
    np.fill_diagonal(km, 0.0)
    return km


class TestLoaders:
    def test_flow_fixture(self, tmp_path):
        p = tmp_path / "flows.csv"
        p.write_text("origin,destination,count\nA,B,3\nB,A,1\nC,A,9\n")
        records = load_flows(p)
        net = build_network(records, node_ids=["A", "B", "C"])
        assert net.n_edges == 3

    def test_duplicate_row_named(self, tmp_path):
        p = tmp_path / "flows.csv"
        p.write_text("origin,destination,count\nA,B,3\nA,B,4\n")
        with pytest.raises(ValidationError, match="row 3"):
            load_flows(p)

    def test_non_numeric_cell_named(self, tmp_path):
        p = tmp_path / "flows.csv"
        p.write_text("origin,destination,count\nA,B,many\n")
        with pytest.raises(ValidationError, match="row 2"):
            load_flows(p)

    def test_missing_column(self, tmp_path):
        p = tmp_path / "flows.csv"
        p.write_text("origin,count\nA,3\n")
        with pytest.raises(ValidationError, match="missing columns"):
            load_flows(p)

    def test_node_shares_validation(self, tmp_path, small_data):
        _m, _t, _c, _l, nodes, _d = small_data
        p = tmp_path / "nodes.csv"
        write_nodes_csv(p, nodes)
        text = p.read_text().splitlines()
        parts = text[1].split(",")
        parts[6] = repr(float(parts[6]) - 2.0)  # break the share sum
        text[1] = ",".join(parts)
        p.write_text("\n".join(text) + "\n")
        with pytest.raises(ValidationError, match="sum to"):
            load_nodes(p)

    def test_duplicate_node_id(self, tmp_path, small_data):
        _m, _t, _c, _l, nodes, _d = small_data
        p = tmp_path / "nodes.csv"
        write_nodes_csv(p, nodes)
        lines = p.read_text().splitlines()
        lines.append(lines[1])
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValidationError, match="duplicate node id"):
            load_nodes(p)

    def test_round_trip(self, tmp_path, small_data):
        _m, _t, current, _l, nodes, dyads = small_data
        fp, np_, dp = (tmp_path / x for x in ("f.csv", "n.csv", "d.csv"))
        write_flows_csv(fp, current)
        write_nodes_csv(np_, nodes)
        km = np.exp(dyads.matrix("log_distance")).copy()
        np.fill_diagonal(km, 0.0)
        write_distances_csv(dp, km, nodes.ids)

        nodes2 = load_nodes(np_)
        net2 = build_network(load_flows(fp), node_ids=nodes2.ids)
        km2 = load_distances(dp, nodes2.ids)
        assert net2 == current
        assert nodes2.ids == nodes.ids
        assert np.allclose(nodes2.racial_shares, nodes.racial_shares, atol=1e-12)
        off = ~np.eye(nodes.n_nodes, dtype=bool)
        assert np.allclose(km2[off], km[off], rtol=1e-12)

    def test_distance_unknown_id(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("id_a,id_b,km\nX,Y,5\n")
        with pytest.raises(ValidationError, match="unknown node id"):
            load_distances(p, ["A", "B"])

    def test_distance_conflict(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("id_a,id_b,km\nA,B,5\nB,A,6\n")
        with pytest.raises(ValidationError, match="conflicting"):
            load_distances(p, ["A", "B"])


class TestGroupFlow:
    def test_hand_assignment(self):
        net = build_network([(0, 1, 3), (1, 0, 1)], n_nodes=2)
        gfm = group_flow_matrix(net, [0, 1])
        assert gfm.totals.tolist() == [[0, 3], [1, 0]]
        assert gfm.total_flow == 4
        # everyone arriving in group 1 came from group 0
        assert gfm.share_into(1, 0) == 1.0

    def test_degenerate_partition(self):
        net = build_network([(0, 1, 3), (2, 0, 2)], n_nodes=3)
        gfm = group_flow_matrix(net, [0, 0, 0])
        assert gfm.totals[0, 0] == 5
        assert gfm.totals.sum() == net.total_flow
        assert math.isnan(gfm.column_proportions[0, 1])

    def test_totals_sum_to_network_total(self, small_data):
        _m, _t, current, _l, nodes, _d = small_data
        part = (nodes.democrat_poll_pct > 50).astype(int)
        gfm = group_flow_matrix(current, part)
        assert gfm.totals.sum() == current.total_flow
        cols = gfm.column_proportions.sum(axis=0)
        assert np.allclose(cols[np.isfinite(cols)], 1.0)

    def test_partition_validation(self):
        net = build_network([(0, 1, 3)], n_nodes=2)
        with pytest.raises(ValidationError):
            group_flow_matrix(net, [0, 2])
        with pytest.raises(ValidationError):
            group_flow_matrix(net, [0])


class TestSyntheticGenerate:
    def test_determinism(self):
        model = ModelSpec(terms=(TermSpec("sum"),))
        theta = np.array([math.log(0.3)])
        a = synthetic_generate(20, model, theta, seed=5)
        b = synthetic_generate(20, model, theta, seed=5)
        assert a[0] == b[0]
        assert a[1] == b[1]
        assert np.array_equal(a[2].population, b[2].population)

    def test_sum_only_total_close_to_rate(self):
        model = ModelSpec(terms=(TermSpec("sum"),))
        theta = np.array([math.log(0.5)])
        current, _, _, _ = synthetic_generate(50, model, theta, seed=6)
        expected = 0.5 * 50 * 49
        assert abs(current.total_flow - expected) <= 3 * math.sqrt(expected)

    def test_negative_dissim_coefficient_gives_negative_correlation(self):
        model = ModelSpec(terms=(TermSpec("sum"),
                                 TermSpec("dyad", "political_dissim")))
        theta = np.array([math.log(0.6), -2.5])
        current, _, nodes, dyads = synthetic_generate(40, model, theta, seed=7)
        m = dyads.matrix("political_dissim")
        y = current.dense_matrix(dtype=float)
        off = ~np.eye(40, dtype=bool)
        corr = np.corrcoef(m[off], y[off])[0, 1]
        assert corr < 0.0

    def test_lagged_term_generation(self, small_data):
        model, theta, current, lagged, nodes, dyads = small_data
        assert model.has_lag
        assert lagged.period_label == "lagged"
        assert current.period_label == "current"
        assert dyads.has("lagged_log_flow")

    def test_validation(self):
        model = ModelSpec(terms=(TermSpec("sum"),))
        with pytest.raises(ValidationError):
            synthetic_generate(1, model, np.array([0.0]), seed=0)
        with pytest.raises(ValidationError):
            synthetic_generate(10, model, np.array([0.0, 1.0]), seed=0)
        with pytest.raises(ValidationError):
            synthetic_generate(10, model, np.array([0.0]), seed=0,
                               covariate_distributions={"bogus": None})
