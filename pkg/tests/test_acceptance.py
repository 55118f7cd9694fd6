"""End-to-end acceptance criteria.

Each test prints one ``[PASS]``/``[FAIL]`` line (also collected in the
terminal summary) and then asserts the same condition.
"""
import itertools
import json
import time

import numpy as np
import pytest

from lcarsc.cli import main
from lcarsc.dataio import matrix_csv
from lcarsc.estimators import Method, default_tau, fit
from lcarsc.harness import (ExperimentConfig, bound_ratio_curve, consistency_trend, canned_bound_model,
                            run_experiment, run_toy_example, toy_instance)
from lcarsc.metrics import clustering_error, hamming_error, modularity
from lcarsc.model import Labeling, PopulationModel, sample_synthetic
from lcarsc.spectral import regularized_laplacian, row_normalize, top_k_svd
from oracles import brute_clustering_error, brute_hamming_error, double_sum_modularity, max_theta_deviation

pytestmark = pytest.mark.acceptance

ALL = [m.value for m in Method]
TAU_METHODS = ["rsc", "rscn", "rscors", "rlmk"]


def random_population_models(count=50, seed=2024):
    rng = np.random.default_rng(seed)
    models = []
    for idx in range(count):
        k = int(rng.choice([2, 3, 4]))
        n = int(rng.integers(30, 201))
        j = round(n / 5)
        m = int(rng.choice([1, 3, 5]))
        rho = float(rng.uniform(0.3, m))
        labeling, items, _ = sample_synthetic(n, j, k, m, rho, seed=seed * 1000 + idx)
        models.append(PopulationModel(labeling, items))
    return models


@pytest.fixture(scope="module")
def population_models():
    return random_population_models()


def test_ideal_exactness(population_models, criterion):
    start = time.perf_counter()
    worst_ce, worst_dev = 0.0, 0.0
    for model in population_models:
        tau = default_tau(model.n, model.j, model.m_levels)
        for method in ALL:
            res = fit(model.expected, model.k, method, tau if Method(method).uses_tau else None,
                      seed=0, m_levels=model.m_levels)
            worst_ce = max(worst_ce, clustering_error(model.labeling, res.labeling))
            worst_dev = max(worst_dev, max_theta_deviation(model.items.theta, res.theta_hat))
    elapsed = time.perf_counter() - start
    ok = worst_ce == 0 and worst_dev < 1e-6 and elapsed < 30
    criterion("1 ideal exactness", ok,
              f"50 models x 6 methods: max clustering error {worst_ce}, max |theta dev| {worst_dev:.2e}, "
              f"{elapsed:.1f}s")
    assert ok


def test_population_geometry(population_models, criterion):
    worst_x = worst_y = 0.0
    for model in population_models:
        tau = default_tau(model.n, model.j, model.m_levels)
        u = top_k_svd(regularized_laplacian(model.expected, tau), model.k).u
        reps = model.labeling.representatives
        x, y = u[reps], row_normalize(u)[0][reps]
        sizes = model.labeling.sizes
        for a, b in itertools.combinations(range(model.k), 2):
            worst_x = max(worst_x, abs(np.linalg.norm(x[a] - x[b]) - np.sqrt(1 / sizes[a] + 1 / sizes[b])))
            worst_y = max(worst_y, abs(np.linalg.norm(y[a] - y[b]) - np.sqrt(2)))
    ok = worst_x < 1e-6 and worst_y < 1e-6
    criterion("2 population geometry", ok, f"max deviation X {worst_x:.2e}, Y {worst_y:.2e}")
    assert ok


def test_bound_ratio(criterion):
    start = time.perf_counter()
    maxima, monotone = [], 0
    multipliers = [round(0.2 * i, 10) for i in range(1, 11)]
    for seed in range(5):
        model = canned_bound_model(seed)
        base = default_tau(model.n, model.j, model.m_levels)
        ratios = [p.ratio for p in bound_ratio_curve(model, 1000 + seed, [c * base for c in multipliers])]
        maxima.append(max(ratios))
        monotone += all(b >= a for a, b in zip(ratios, ratios[1:]))
    elapsed = time.perf_counter() - start
    ok = np.mean(maxima) < 0.5 and monotone >= 4 and elapsed < 120
    criterion("3 perturbation bound ratio", ok,
              f"mean max ratio {np.mean(maxima):.4f} (< 0.5), non-decreasing in {monotone}/5 seeds, {elapsed:.1f}s")
    assert ok


def test_tau_choice(criterion):
    start = time.perf_counter()
    grid = [0.2, 0.6, 1.0, 1.4, 2.0]
    cfg = ExperimentConfig("1", [500], [0.8], grid, methods=TAU_METHODS, repetitions=20, select_k=False)
    report = run_experiment(cfg)
    elapsed = time.perf_counter() - start
    details, ok = [], elapsed < 600
    for method in TAU_METHODS:
        errs = [report.row(method, c0=c)["mean_clustering_error"] for c in grid]
        at_one, best = errs[grid.index(1.0)], min(errs)
        good = at_one <= 1.1 * best
        ok &= good
        details.append(f"{method} {at_one:.4f} vs min {best:.4f}")
    criterion("4 tau choice (experiment 1)", ok, "; ".join(details) + f"; {elapsed:.0f}s")
    assert ok


def test_sparsity(criterion):
    start = time.perf_counter()
    rhos = [0.2, 0.5, 1.0, 2.0]
    report = run_experiment(ExperimentConfig("2", [500], rhos, [1.0], repetitions=20, select_k=True, k_max=6))
    elapsed = time.perf_counter() - start
    details, ok = [], elapsed < 900
    for method in ALL:
        errs = [report.row(method, rho=r)["mean_clustering_error"] for r in rhos]
        acc = [report.row(method, rho=r)["k_accuracy"] for r in rhos[1:]]
        good = all(b < a for a, b in zip(errs, errs[1:])) and min(acc) >= 0.95
        ok &= good
        details.append(f"{method} ce={[round(e, 4) for e in errs]} acc={min(acc):.2f}")
    criterion("5 sparsity (experiment 2)", ok, "; ".join(details) + f"; {elapsed:.0f}s")
    assert ok


def test_consistency(criterion):
    start = time.perf_counter()
    cfg = ExperimentConfig("3", [1000, 4000], [0.15], [1.0], repetitions=10, select_k=False)
    flag, table = consistency_trend(cfg)
    elapsed = time.perf_counter() - start
    details, ok = [], flag and elapsed < 900
    for method, series in table.items():
        (_, ce_small, l2_small), (_, ce_big, l2_big) = series[0], series[-1]
        ok &= ce_big < ce_small and l2_big < l2_small
        details.append(f"{method} ce {ce_small:.4f}->{ce_big:.4f} l2 {l2_small:.4f}->{l2_big:.4f}")
    criterion("6 consistency (experiment 3)", ok, "; ".join(details) + f"; {elapsed:.0f}s")
    assert ok


def test_toy_exactness(criterion):
    start = time.perf_counter()
    out = run_toy_example(0)
    elapsed = time.perf_counter() - start
    model = out["model"]
    gaps = np.abs(model.items.theta[:, 0] - model.items.theta[:, 1])
    separated = np.sum(gaps >= 1.5) >= model.j / 2
    exact = all(r["clustering_error"] == 0 and r["nmi"] == 1 and r["ari"] == 1 and r["k_hat"] == 2
                for r in out["table"])
    hats = list(out["theta_hat"].values())
    same = all(max_theta_deviation(hats[0], h) == 0 for h in hats[1:])
    ok = separated and exact and same and elapsed < 5
    criterion("7 toy exactness (experiment 4)", ok,
              f"separated={separated} all-exact={exact} identical theta_hat={same}, {elapsed:.2f}s")
    assert ok


def test_metric_oracles(criterion):
    rng = np.random.default_rng(8)
    label_mismatch = 0
    for _ in range(200):
        k = int(rng.integers(1, 4))
        n = int(rng.integers(k, 13))
        truth = rng.permutation(np.concatenate([np.arange(k), rng.integers(0, k, n - k)]))
        est = rng.integers(0, k, n)
        t, e = Labeling(truth, k), Labeling(est, k)
        label_mismatch += clustering_error(t, e) != brute_clustering_error(truth, est, k)
        label_mismatch += hamming_error(t, e) != brute_hamming_error(truth, est, k)
    worst_q = worst_q1 = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 9))
        a = rng.uniform(0, 2, (n, n))
        a = a + a.T
        k = int(rng.integers(1, 4))
        labels = rng.integers(0, k, n)
        worst_q = max(worst_q, abs(modularity(a, Labeling(labels, k)) - double_sum_modularity(a, labels)))
        worst_q1 = max(worst_q1, abs(modularity(a, Labeling(np.zeros(n, dtype=int), 1))))
    ok = label_mismatch == 0 and worst_q < 1e-12 and worst_q1 < 1e-12
    criterion("8 metric oracles", ok,
              f"{label_mismatch} label-metric mismatches in 200 pairs, modularity dev {worst_q:.1e}, "
              f"|Q(1)| max {worst_q1:.1e}")
    assert ok


def _cli_outputs(root, run):
    base = root / f"run{run}"
    base.mkdir()
    _, r = toy_instance(0)
    data = root / "toy.csv"
    if not data.exists():
        data.write_text(matrix_csv(r.entries))
    cfg = root / "cfg.json"
    if not cfg.exists():
        cfg.write_text(json.dumps({"n_values": [60], "rho_values": [1.0], "k": 2, "m_levels": 3,
                                   "repetitions": 2, "k_max": 3}))
    commands = [
        ["fit", "--input", str(data), "--m-levels", "3", "--k", "2", "--method", "rscors", "--seed", "5",
         "--output", str(base / "fit.json")],
        ["select-k", "--input", str(data), "--m-levels", "3", "--k-max", "4", "--output", str(base / "k.json"),
         "--csv", str(base / "k.csv")],
        ["simulate", "--n", "60", "--j", "12", "--k", "3", "--m-levels", "5", "--rho", "1", "--seed", "2",
         "--output-prefix", str(base / "sim")],
        ["experiment", "--experiment", "4", "--output-dir", str(base / "toy")],
        ["experiment", "--config", str(cfg), "--seed", "9", "--output-dir", str(base / "exp")],
        ["diagnose", "--n", "100", "--j", "20", "--k", "2", "--m-levels", "3", "--rho", "1",
         "--tau-grid", "0.5,1,2", "--output-prefix", str(base / "diag")],
    ]
    codes = [main(c) for c in commands]
    files = {p.relative_to(base): p.read_bytes() for p in sorted(base.rglob("*")) if p.is_file()}
    return codes, files


def test_determinism(tmp_path, criterion):
    codes_a, files_a = _cli_outputs(tmp_path, "a")
    codes_b, files_b = _cli_outputs(tmp_path, "b")
    identical = files_a.keys() == files_b.keys() and all(files_a[k] == files_b[k] for k in files_a)
    ok = codes_a == codes_b == [0] * 6 and identical and len(files_a) >= 20
    criterion("9 determinism", ok, f"{len(files_a)} output files from 6 commands, byte-identical={identical}")
    assert ok


def test_runtime_ordering(criterion):
    _, _, r = sample_synthetic(4000, 800, 3, 5, 0.8, seed=11)
    tau = default_tau(4000, 800, 5)
    means = {}
    for method in ALL:
        times = []
        for run in range(5):
            start = time.perf_counter()
            fit(r, 3, method, tau if Method(method).uses_tau else None, seed=run)
            times.append(time.perf_counter() - start)
        means[method] = float(np.mean(times))
    slowest_spectral = max(means[m] for m in ("rsc", "rscn", "rscors", "pca"))
    ok = slowest_spectral <= min(means["rmk"], means["rlmk"])
    criterion("10 runtime ordering", ok, ", ".join(f"{m} {t:.3f}s" for m, t in means.items()))
    assert ok
