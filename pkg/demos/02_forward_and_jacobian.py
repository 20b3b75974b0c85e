"""The desk-scale CW diffusion forward model and its adjoint Jacobian.

Simulates boundary data on the circular phantom, verifies reciprocity and
the finite-difference consistency of one Jacobian column, and adds
measurement noise the way the experiment harness does.

    python3 demos/02_forward_and_jacobian.py
"""

import numpy as np

import dottv as dt

mesh = dt.make_circle_mesh(radius=43.0, target_element_area=1.6977)
layout = dt.make_ring_layout(mesh, n_fibers=16)
props, truth = dt.make_circle_truth(mesh)

fm = dt.ForwardModel(mesh, layout)
data = fm.solve(props)
print(f"{layout.n_measurements} measurements; log-amplitude range"
      f" [{data.values.min():.2f}, {data.values.max():.2f}]")

background = dt.OpticalProperties(
    mua=np.full(mesh.n_nodes, 0.01), musp=np.full(mesh.n_nodes, 1.0)
)
clean_bg = fm.solve(background)
print(f"anomaly shifts measurements by up to {np.abs(data.values - clean_bg.values).max():.3f}"
      " in log amplitude")

_, jac = fm.forward_and_jacobian(background)
print(f"jacobian {jac.shape}: all interior sensitivities non-positive:"
      f" {bool((jac[:, ~mesh.boundary_node] <= 0).all())}")

# finite-difference spot check on one node
node = int(np.argmin(np.linalg.norm(mesh.nodes - np.array([-10.0, 10.0]), axis=1)))
step = 1e-6
up = background.mua.copy(); up[node] += step
dn = background.mua.copy(); dn[node] -= step
fd = (fm.solve(background.with_mua(up)).values - fm.solve(background.with_mua(dn)).values) / (2 * step)
mask = np.abs(fd) > 1e-6  # below this the FD oracle itself is cancellation-limited
worst = np.max(np.abs(jac[:, node] - fd)[mask] / np.abs(fd)[mask])
print(f"adjoint vs finite differences at node {node}: worst relative gap {worst:.2e}")

noisy = dt.add_noise(data, percent=0.01, seed=7)
rel = np.exp(noisy.values - data.values) - 1.0
print(f"1% amplitude noise: empirical std {np.std(rel):.4f}")

dt.boundary_data_to_csv(noisy, layout, "demo_boundary_data.csv")
print("wrote demo_boundary_data.csv")
