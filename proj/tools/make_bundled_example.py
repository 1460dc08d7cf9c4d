"""Generate the bundled 8-zone example (system.json, mu.csv, sigma.csv)."""
import json
import pathlib

import numpy as np

OUT = pathlib.Path(__file__).resolve().parent.parent / "data" / "iso8"
rng = np.random.default_rng(20240517)

N, T = 8, 24
lines = [(0, 1), (0, 2), (1, 2), (1, 3), (2, 4), (3, 4), (3, 5), (4, 6), (5, 6), (5, 7), (6, 7), (0, 7)]
susceptance = rng.uniform(8.0, 16.0, len(lines)).round(3)
flow_limit = [2200, 2200, 1800, 2000, 2000, 1600, 1800, 1800, 1600, 1500, 1500, 1800]

# 76 units summing to 23,100 MW, spread across nodes.
caps = rng.uniform(0.6, 1.4, 76)
caps = caps / caps.sum() * 23100.0
caps = np.round(caps, 1)
caps[-1] += round(23100.0 - caps.sum(), 1)
nodes = np.array([i % N for i in range(76)])
rng.shuffle(nodes)
gens = []
for i in range(76):
    g_max = float(caps[i])
    gens.append({
        "node": int(nodes[i]),
        "cost_quad": float(np.round(rng.uniform(0.002, 0.02), 5)),
        "cost_lin": float(np.round(rng.uniform(15.0, 70.0), 3)),
        "g_max": g_max,
        "g_min": float(np.round(0.1 * g_max, 2)),
        "ramp_up": float(np.round(rng.uniform(0.3, 0.6) * g_max, 2)),
        "ramp_down": float(np.round(rng.uniform(0.3, 0.6) * g_max, 2)),
    })

storages = []
for s in range(8):
    storages.append({
        "id": f"es{s}", "node": s, "p_max": 787.5, "e_max": 3150.0, "e_min": 0.0,
        "efficiency": 0.95, "marginal_cost": 10.0, "e_init": 1575.0,
    })

# Duck-shaped netload: 18 GW load peak with 50 % renewable energy share.
hours = np.arange(T)
load_shape = 0.62 + 0.2 * np.exp(-((hours - 11.0) / 5.0) ** 2) + 0.3 * np.exp(-((hours - 19.0) / 2.5) ** 2)
load_total = 18000.0 * load_shape / load_shape.max()
solar = np.clip(np.sin(np.pi * (hours - 6.0) / 13.0), 0.0, None)
wind = 0.55 + 0.25 * np.cos(2 * np.pi * (hours - 3.0) / 24.0)
ren_shape = 0.5 * solar / solar.mean() + 0.5 * wind / wind.mean()
ren_total = 0.5 * load_total.sum() * ren_shape / ren_shape.sum()
net_total = load_total - ren_total
share = rng.dirichlet(np.full(N, 6.0))
mu = np.outer(share, net_total) * rng.uniform(0.95, 1.05, (N, T))
sigma = np.outer(share, 0.03 * load_total + 0.12 * ren_total) * rng.uniform(0.8, 1.2, (N, T))


def write_matrix(path, m):
    with open(path, "w", newline="\n") as f:
        f.write("node," + ",".join(str(t) for t in range(m.shape[1])) + "\n")
        for n in range(m.shape[0]):
            f.write(str(n) + "," + ",".join(f"{v:.6f}" for v in m[n]) + "\n")


OUT.mkdir(parents=True, exist_ok=True)
write_matrix(OUT / "mu.csv", mu)
write_matrix(OUT / "sigma.csv", sigma)
doc = {
    "network": {
        "nodes": N,
        "slack": 0,
        "lines": [{"from": a, "to": b, "flow_limit": float(fl), "susceptance": float(x)}
                  for (a, b), fl, x in zip(lines, flow_limit, susceptance)],
    },
    "generators": gens,
    "storages": storages,
    "config": {"epsilon": 0.1, "reserve_ratio": 0.05, "horizon": T, "step_hours": 1.0},
    "netload": {"mu": "mu.csv", "sigma": "sigma.csv"},
    "price": {"baseline_sigma": 20.0, "n_bins": 10, "soc_points": 51, "scenarios": 200,
              "ar1": 0.0, "n_segments": 10},
    "simulation": {"da_scenarios": 10, "rt_per_da": 20, "seed": 20240601,
                   "sigma_scales": [1.0], "epsilons": [0.1], "withholding": [1.0],
                   "toggles": "both", "decay_lookahead": 6, "voll": 10000.0,
                   "da_forecast_noise": 0.5, "delta": 0.01},
}
with open(OUT / "system.json", "w", newline="\n") as f:
    json.dump(doc, f, indent=2)
    f.write("\n")
print("wrote", OUT)
