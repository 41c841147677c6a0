import math

import numpy as np
import pytest

from evpool.network import (NetworkError, RoadNetwork, TravelTimeProvider,
                            build_grid, generate_grid_graphml, haversine,
                            load_network, write_graphml)

from conftest import exact_grid, floyd_warshall_times, line_network


def spherical_law_of_cosines(lat1, lon1, lat2, lon2):
    """Independent great-circle formula for cross-checking haversine."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dl = math.radians(lon2 - lon1)
    c = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
    return 6_371_000.0 * math.acos(max(-1.0, min(1.0, c)))


class TestHaversine:
    def test_identical_points(self):
        assert haversine(40.7, -74.0, 40.7, -74.0) == 0.0

    def test_equatorial_degree(self):
        # R * (pi/180) along the equator
        assert abs(haversine(0.0, 0.0, 0.0, 1.0) - 111_195.0) < 10.0

    def test_nyc_pair(self):
        d = haversine(40.7128, -74.0060, 40.7614, -73.9776)
        assert abs(d - spherical_law_of_cosines(40.7128, -74.0060,
                                                40.7614, -73.9776)) < 1.0
        assert abs(d - 5900.0) < 100.0

    def test_vectorized(self):
        d = haversine(np.zeros(3), np.zeros(3), np.zeros(3), np.array([0.0, 1.0, 2.0]))
        assert d[0] == 0.0 and d[2] > d[1] > 0


class TestLoadAndClean:
    def _write(self, tmp_path, net):
        path = tmp_path / "net.graphml"
        write_graphml(net, path)
        return path

    def test_four_vertex_cycle(self, tmp_path):
        net = RoadNetwork([0, 0, 1, 1], [0, 1, 1, 0],
                          [0, 1, 2, 3], [1, 2, 3, 0], [100.0] * 4)
        loaded = load_network(self._write(tmp_path, net))
        assert loaded.n == 4
        assert len(loaded.edge_from) == 4

    def test_dead_end_removed(self, tmp_path):
        # 4-cycle plus a pendant vertex with out-degree 0
        net = RoadNetwork([0, 0, 1, 1, 2], [0, 1, 1, 0, 2],
                          [0, 1, 2, 3, 0], [1, 2, 3, 0, 4], [100.0] * 5)
        loaded = load_network(self._write(tmp_path, net))
        assert loaded.n == 4
        # ids repacked densely
        assert set(loaded.edge_from) <= set(range(4))

    def test_duplicate_edges_consolidated(self, tmp_path):
        net = RoadNetwork([0, 0], [0, 1], [0, 1, 0, 1], [1, 0, 1, 0],
                          [100.0, 100.0, 90.0, 120.0])
        loaded = load_network(self._write(tmp_path, net))
        assert len(loaded.edge_from) == 2
        assert sorted(loaded.edge_len) == [90.0, 100.0]

    def test_grid_generator_counts(self, tmp_path):
        path = tmp_path / "grid.graphml"
        generate_grid_graphml(path, 15, 15, 300.0)
        net = load_network(path)
        assert net.n == 225
        assert len(net.edge_from) == 840  # 2 * 2 * 15 * 14 directed edges

    def test_empty_file_errors(self, tmp_path):
        path = tmp_path / "bad.graphml"
        path.write_text("not xml at all")
        with pytest.raises(NetworkError):
            load_network(path)

    def test_roundtrip_preserves_lengths(self, tmp_path):
        net = build_grid(4, 4, 250.0)
        path = tmp_path / "g.graphml"
        write_graphml(net, path)
        loaded = load_network(path)
        assert loaded.n == net.n
        assert np.allclose(sorted(loaded.edge_len), sorted(net.edge_len))


class TestNearestVertex:
    def test_point_at_vertex(self, grid5):
        assert grid5.nearest_vertex(float(grid5.lat[7]), float(grid5.lon[7])) == 7

    def test_tie_breaks_low_id(self):
        # vertices 3 and 7 symmetric about the query point
        lat = [10, 10, 10, 1.0, 10, 10, 10, -1.0]
        lon = [10, 11, 12, 0.0, 13, 14, 15, 0.0]
        net = RoadNetwork(lat, lon, [3, 7], [7, 3], [1.0, 1.0])
        assert net.nearest_vertex(0.0, 0.0) == 3

    def test_matches_linear_scan(self, grid5):
        rng = np.random.default_rng(42)
        for _ in range(200):
            qlat = float(rng.uniform(39.99, 40.02))
            qlon = float(rng.uniform(-74.01, -73.98))
            best, best_d = None, None
            for i in range(grid5.n):
                d = spherical_law_of_cosines(qlat, qlon,
                                             float(grid5.lat[i]), float(grid5.lon[i]))
                if best_d is None or d < best_d - 1e-9:
                    best, best_d = i, d
            assert grid5.nearest_vertex(qlat, qlon) == best


class TestShortestPaths:
    def test_trivial_same_vertex(self, line5):
        assert line5.shortest_path(2, 2) == ([2], 0.0)
        assert line5.travel_time(2, 2) == 0.0

    def test_three_vertex_line(self):
        net = line_network(3, edge_m=100.0, speed_mps=10.0)
        path, total = net.shortest_path(0, 2)
        assert path == [0, 1, 2]
        assert total == 20.0

    def test_grid_matches_floyd_warshall(self, grid5):
        oracle = floyd_warshall_times(grid5)
        rng = np.random.default_rng(7)
        for _ in range(100):
            u, v = rng.integers(0, grid5.n, size=2)
            assert grid5.travel_time(int(u), int(v)) == oracle[u, v]

    def test_large_grid_matches_oracle(self):
        net = exact_grid(15, 15)
        oracle = floyd_warshall_times(net)
        rng = np.random.default_rng(3)
        for _ in range(60):
            u, v = rng.integers(0, net.n, size=2)
            assert net.travel_time(int(u), int(v)) == oracle[u, v]

    def test_path_endpoints_and_sum(self, grid5):
        path, total = grid5.shortest_path(0, 24)
        assert path[0] == 0 and path[-1] == 24
        s = sum(grid5.edge_seconds(a, b, 0) for a, b in zip(path, path[1:]))
        assert abs(s - total) < 1e-9

    def test_triangle_inequality(self, grid5):
        rng = np.random.default_rng(11)
        for _ in range(200):
            u, v, w = rng.integers(0, grid5.n, size=3)
            assert (grid5.travel_time(int(u), int(v))
                    <= grid5.travel_time(int(u), int(w))
                    + grid5.travel_time(int(w), int(v)) + 1e-9)

    def test_direct_edge_time(self):
        net = line_network(2, edge_m=1000.0, speed_mps=10.0)
        assert net.travel_time(0, 1) == 100.0

    def test_speed_profile_halves_speed(self):
        prov = TravelTimeProvider(mode="profile", speed_mps=10.0,
                                  hourly_multipliers=tuple([0.5] + [1.0] * 23))
        net = line_network(2, edge_m=1000.0)
        net = RoadNetwork(net.lat, net.lon, net.edge_from, net.edge_to,
                          net.edge_len, prov)
        assert net.travel_time(0, 1, minute=0) == 200.0    # hour 0, multiplier 0.5
        assert net.travel_time(0, 1, minute=60) == 100.0   # hour 1, multiplier 1.0

    def test_hourly_cache_refresh(self):
        prov = TravelTimeProvider(mode="profile", speed_mps=10.0,
                                  hourly_multipliers=tuple([1.0, 2.0] + [1.0] * 22))
        net = line_network(3, edge_m=600.0)
        net = RoadNetwork(net.lat, net.lon, net.edge_from, net.edge_to,
                          net.edge_len, prov)
        t0 = net.travel_time(0, 2, minute=30)
        t1 = net.travel_time(0, 2, minute=75)
        assert t1 == pytest.approx(t0 / 2.0)

    def test_table_mode_overrides_edges(self):
        prov = TravelTimeProvider(mode="table", speed_mps=10.0,
                                  table={(0, 1, 0): 42.0})
        net = line_network(2, edge_m=1000.0)
        net = RoadNetwork(net.lat, net.lon, net.edge_from, net.edge_to,
                          net.edge_len, prov)
        assert net.travel_time(0, 1, minute=0) == 42.0
        assert net.travel_time(1, 0, minute=0) == 100.0  # falls back to speed


class TestClosenessCentrality:
    def test_path_graph(self):
        net = line_network(3)
        c = net.closeness_centrality()
        assert c[1] == pytest.approx(1.0)
        assert c[0] == pytest.approx(2.0 / 3.0)
        assert c[2] == pytest.approx(2.0 / 3.0)

    def test_complete_graph(self):
        ef, et = [], []
        for i in range(4):
            for j in range(4):
                if i != j:
                    ef.append(i)
                    et.append(j)
        net = RoadNetwork([0, 0, 1, 1], [0, 1, 0, 1], ef, et, [100.0] * len(ef))
        assert np.allclose(net.closeness_centrality(), 1.0)

    def test_star_graph(self):
        # center 0 with 5 leaves: center 1.0, each leaf 5/9
        ef, et = [], []
        for leaf in range(1, 6):
            ef += [0, leaf]
            et += [leaf, 0]
        net = RoadNetwork([0] * 6, list(range(6)), ef, et, [100.0] * len(ef))
        c = net.closeness_centrality()
        assert c[0] == pytest.approx(1.0)
        assert np.allclose(c[1:], 5.0 / 9.0)

    def test_matches_networkx(self, grid5):
        import networkx as nx

        g = nx.Graph()
        g.add_edges_from(zip(grid5.edge_from.tolist(), grid5.edge_to.tolist()))
        expected = nx.closeness_centrality(g)
        mine = grid5.closeness_centrality()
        for v, val in expected.items():
            assert mine[v] == pytest.approx(val)


class TestNormalizedAdjacency:
    def test_single_vertex(self):
        net = RoadNetwork([0.0], [0.0], [], [], [])
        a = net.normalized_adjacency().toarray()
        assert np.allclose(a, [[1.0]])

    def test_two_vertices(self):
        net = line_network(2)
        a = net.normalized_adjacency().toarray()
        assert np.allclose(a, 0.5)

    def test_symmetry_on_grid(self, grid5):
        a = grid5.normalized_adjacency()
        assert abs(a - a.T).max() < 1e-15

    def test_matches_dense_formula(self, grid5):
        n = grid5.n
        adj = np.zeros((n, n))
        for f, t in zip(grid5.edge_from, grid5.edge_to):
            adj[f, t] = adj[t, f] = 1.0
        a_loop = adj + np.eye(n)
        d_inv_sqrt = np.diag(1.0 / np.sqrt(a_loop.sum(axis=1)))
        oracle = d_inv_sqrt @ a_loop @ d_inv_sqrt
        assert np.abs(grid5.normalized_adjacency().toarray() - oracle).max() < 1e-12

    def test_spectrum_bounded_by_one(self, grid5):
        # symmetric normalization bounds the spectral radius at 1
        a = grid5.normalized_adjacency().toarray()
        eig = np.linalg.eigvalsh(a)
        assert abs(eig).max() <= 1.0 + 1e-9


class TestNetworkDistance:
    def test_meters_row_consistent_with_path(self, grid5):
        path, _ = grid5.shortest_path(0, 24)
        length = sum(grid5.edge_len[grid5.edge_index(a, b)]
                     for a, b in zip(path, path[1:]))
        assert grid5.network_distance_m(0, 24) == pytest.approx(length)
