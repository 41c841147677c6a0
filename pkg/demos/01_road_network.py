"""Road network walkthrough: build a grid, query paths, inspect structure.

Run:  python3 demos/01_road_network.py
"""

import numpy as np

from evpool import build_grid, haversine

net = build_grid(15, 15, spacing_m=300.0)
print(f"grid network: {net.n} vertices, {len(net.edge_from)} directed edges")
print(f"default speed: {net.provider.speed_mps * 3.6:.0f} km/h")

# coordinate matching
lat, lon = float(net.lat[112]), float(net.lon[112])
print(f"\nvertex 112 sits at ({lat:.4f}, {lon:.4f})")
print(f"nearest vertex to a point 40 m east: {net.nearest_vertex(lat, lon + 0.0005)}")
print(f"haversine corner-to-corner: "
      f"{haversine(net.lat[0], net.lon[0], net.lat[-1], net.lon[-1]) / 1000:.2f} km")

# shortest paths are time-minimal under the pluggable travel-time provider
path, seconds = net.shortest_path(0, 224)
print(f"\npath corner to corner: {len(path)} vertices, {seconds / 60:.1f} minutes")
print(f"network distance: {net.network_distance_m(0, 224) / 1000:.2f} km")

# closeness centrality drives charger placement sampling
scores = net.closeness_centrality()
top = np.argsort(scores)[::-1][:5]
print(f"\nmost central vertices: {top.tolist()} (scores {scores[top].round(4).tolist()})")

# the normalized adjacency feeds graph-convolution inference
a_hat = net.normalized_adjacency()
print(f"\nnormalized adjacency: shape {a_hat.shape}, "
      f"{a_hat.nnz} nonzeros, symmetric: {abs(a_hat - a_hat.T).max() < 1e-15}")
