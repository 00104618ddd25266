"""Acceptance gate: one test and one pass/fail line per criterion."""

import time
import warnings
from fractions import Fraction

import numpy as np

from relarb import (
    JumpSample,
    RegionK,
    ReturnHistory,
    asset_one_weight,
    bootstrap_paths,
    catalog,
    collect_pairs,
    divergence_dominates,
    fernholz_decompose,
    integral_condition,
    l_divergence,
    market_portfolio,
    pairs_from_markov,
    random_walk_sampler,
    recenter_returns,
    relative_concavity_transform,
    rmcm_cycle_test,
    shifted,
    two_asset_aggressiveness,
)
from relarb.optimizer import (
    ConstraintSet,
    DecisionVars,
    Grid,
    SolverConfig,
    brute_force_solve,
    build_problem,
    consistency_experiment,
    feasibility_residuals,
    market_vars,
    objective,
    objective_and_gradient,
    polyhedral_extension,
    solve,
)

from conftest import interior_points, random_feasible_vars, tiny_instance

CATALOG = [("market", None), ("equal", None), ("entropy", None), ("diversity", 0.5)]


def _catalog():
    return [catalog(name, r) for name, r in CATALOG]


def _interior_walk(rng, n, length, floor=0.02):
    # multiplicative random walk reflected back into {min p_i >= floor}
    p = np.empty((length, n))
    p[0] = interior_points(rng, n, 1, floor=0.1)[0]
    for t in range(1, length):
        nxt = p[t - 1] * np.exp(0.05 * rng.standard_normal(n))
        nxt /= nxt.sum()
        p[t] = nxt if nxt.min() >= floor else p[t - 1]
    return p


def test_criterion_01_decomposition_identity(acceptance):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst_err, monotone = 0.0, True
    for k in range(100):
        n = (2, 3, 5)[k % 3]
        path = _interior_walk(rng, n, 1000)
        for fg in _catalog():
            dec = fernholz_decompose(fg, path)
            # independent log V and generator term
            pi = fg.portfolio(path[:-1])
            log_v = np.concatenate([[0.0], np.cumsum(np.log(np.sum(pi * path[1:] / path[:-1], axis=1)))])
            gen = np.log(fg.generator(path)) - np.log(fg.generator(path[:1]))
            worst_err = max(worst_err, float(np.max(np.abs(log_v - gen - dec.drift))))
            monotone &= bool(np.all(np.diff(dec.drift) >= 0))
    elapsed = time.perf_counter() - t0
    ok = worst_err <= 1e-10 and monotone and elapsed < 10
    acceptance(1, ok, f"max identity error {worst_err:.2e} (<= 1e-10), drift nondecreasing={monotone}, "
                      f"{elapsed:.1f}s (< 10s)")


def test_criterion_02_divergence_nonnegative(acceptance):
    rng = np.random.default_rng(102)
    t0 = time.perf_counter()
    worst, market_max = np.inf, 0.0
    for name, r in CATALOG:
        fg = catalog(name, r)
        for n in (2, 3, 5):
            size = 10_000 // 3 + (1 if n == 2 else 0)
            p, q = rng.dirichlet(np.ones(n), size), rng.dirichlet(np.ones(n), size)
            t = l_divergence(fg, q, p, strict=False)
            if name == "market":
                market_max = max(market_max, float(np.max(np.abs(t))))
            else:
                worst = min(worst, float(t.min()))
    elapsed = time.perf_counter() - t0
    ok = worst >= -1e-10 and market_max == 0.0 and elapsed < 5
    acceptance(2, ok, f"min T {worst:.2e} (>= -1e-10), market max |T| {market_max:g} (== 0), {elapsed:.2f}s (< 5s)")


def test_criterion_03_equal_weight_spot_values(acceptance):
    # exact rational arithmetic: Phi = sqrt(p1 p2), weights 1/2 each
    p, q = (Fraction(1, 2), Fraction(1, 2)), (Fraction(3, 5), Fraction(2, 5))

    def gain(a, b):
        return 1 + sum(Fraction(1, 2) / ai * (bi - ai) for ai, bi in zip(a, b))

    ratio = gain(p, q) * gain(q, p)
    t_oracle = float(np.log(float(gain(p, q)))) - 0.5 * float(np.log(float(q[0] * q[1] / (p[0] * p[1]))))
    fg = catalog("equal")
    pa, qa = np.array([0.5, 0.5]), np.array([0.6, 0.4])
    t = l_divergence(fg, qa, pa)
    cyc = rmcm_cycle_test(fg.portfolio, market_portfolio(), np.array([pa, qa, pa])).value_ratio
    ok = (abs(t - t_oracle) <= 1e-6 and abs(t - 0.020411) <= 1e-6
          and abs(cyc - float(ratio)) <= 1e-6 and abs(cyc - 1.041667) <= 1e-6)
    acceptance(3, ok, f"T = {t:.7f} (oracle {t_oracle:.7f}), cycle ratio {cyc:.7f} (oracle {float(ratio):.7f} = 25/24)")


def test_criterion_04_cycle_ratio_and_divergence_sum(acceptance):
    rng = np.random.default_rng(104)
    mk = market_portfolio()
    worst_ratio, worst_gap = np.inf, 0.0
    for fg in _catalog():
        for _ in range(1000):
            n = int(rng.integers(2, 6))
            pts = interior_points(rng, n, int(rng.integers(2, 7)))
            cyc = np.vstack([pts, pts[:1]])
            ratio = rmcm_cycle_test(fg.portfolio, mk, cyc).value_ratio
            total = np.sum(l_divergence(fg, cyc[1:], cyc[:-1], strict=False))
            worst_ratio = min(worst_ratio, ratio)
            worst_gap = max(worst_gap, abs(np.exp(total) - ratio))
    ok = worst_ratio >= 1 - 1e-12 and worst_gap <= 1e-10
    acceptance(4, ok, f"min cycle ratio {worst_ratio:.15f} (>= 1 - 1e-12), max |exp(sum T) - ratio| {worst_gap:.2e}")


def test_criterion_05_shifted_generator_dominates(acceptance):
    rng = np.random.default_rng(105)
    phi = catalog("diversity", 0.5)
    psi = shifted(phi, 1.0)
    p, q = interior_points(rng, 2, 10_000, floor=1e-3), interior_points(rng, 2, 10_000, floor=1e-3)
    fwd = divergence_dominates(psi, phi, (p, q))
    rev = divergence_dominates(phi, psi, (p, q))
    wp, wq = rev.worst_pair
    witness_ok = l_divergence(phi, wq, wp, strict=False) < l_divergence(psi, wq, wp, strict=False)
    ok = fwd.dominates and not rev.dominates and witness_ok
    acceptance(5, ok, f"forward dominates={fwd.dominates} (margin {fwd.worst_margin:.2e}), "
                      f"reverse dominates={rev.dominates} with witness p={wp.round(4)}, q={wq.round(4)}")


def test_criterion_06_integral_classification(acceptance):
    expected = {"equal": "divergent", "entropy": "divergent", "market": "convergent", "diversity": "convergent"}
    got = {name: integral_condition(catalog(name, r).generator, 2) for name, r in CATALOG}
    mv = got["market"].value
    ok = all(got[k].verdict == v for k, v in expected.items()) and abs(mv - 1.0) <= 1e-9
    acceptance(6, ok, ", ".join(f"{k}={got[k].verdict}" for k in expected) + f", market value {mv:.12f}")


def test_criterion_07_aggressiveness(acceptance):
    eq = two_asset_aggressiveness(asset_one_weight(catalog("equal").portfolio))
    mk = two_asset_aggressiveness(asset_one_weight(catalog("market").portfolio))
    eq_dev = float(np.max(np.abs(eq.values - 0.25)))
    mk_dev = float(np.max(np.abs(mk.values)))
    ok = eq_dev <= 1e-9 and mk_dev <= 1e-6
    acceptance(7, ok, f"equal max |value - 0.25| {eq_dev:.2e} (<= 1e-9), market max |value| {mk_dev:.2e} (<= 1e-6)")


def _concavity_ratio(f, x, h=1e-4):
    # -f''/f by central differences
    return -(f(x + h) - 2 * f(x) + f(x - h)) / h**2 / f(x)


def _relative_concavity_cases(rng):
    cases = []
    for k in range(20):
        kind = k % 3
        if kind == 0:
            alpha = rng.uniform(0.5, 1.5)
            gamma = rng.uniform(alpha, 2.0)
            beta, delta = rng.uniform(0.1, 0.5), rng.uniform(0.1, 0.5)
            b = min(1.0, (np.pi - 0.2 - max(beta, delta)) / gamma)
            u = lambda x, al=alpha, be=beta: np.sin(al * x + be)
            v = lambda x, ga=gamma, de=delta: np.sin(ga * x + de)
        elif kind == 1:
            alpha = rng.uniform(0.5, 2.0)
            gamma = rng.uniform(0.0, alpha)
            beta, delta = rng.uniform(-1, 1), rng.uniform(-1, 1)
            b = 1.0
            u = lambda x, al=alpha, be=beta: np.cosh(al * x + be)
            v = lambda x, ga=gamma, de=delta: np.cosh(ga * x + de)
        else:
            c = rng.uniform(0.5, 2.0)
            b = 1.0
            u = lambda x: np.ones_like(x)
            v = lambda x, c=c: 1.0 + c * x * (1.5 - x)
        cases.append((u, v, 0.0, b))
    return cases


def test_criterion_08_relative_concavity(acceptance):
    rng = np.random.default_rng(108)
    passed, verified = 0, 0
    for u, v, a, b in _relative_concavity_cases(rng):
        xs = np.linspace(a + 1e-3, b - 1e-3, 200)
        if np.all(_concavity_ratio(v, xs) >= _concavity_ratio(u, xs) - 1e-4):
            verified += 1
        passed += relative_concavity_transform(u, v, a, b).concave
    witnesses = 0
    for _ in range(5):
        alpha = rng.uniform(1.5, 2.5)
        gamma = rng.uniform(0.2, alpha - 1.0)
        beta, delta = rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.3)
        b = (np.pi - 0.3) / alpha
        rep = relative_concavity_transform(lambda x: np.sin(alpha * x + beta), lambda x: np.sin(gamma * x + delta), 0.0, b)
        witnesses += (not rep.concave) and bool(rep.witness)
    ok = verified == 20 and passed == 20 and witnesses == 5
    acceptance(8, ok, f"{passed}/20 concave pairs pass ({verified}/20 with C >= c verified), "
                      f"{witnesses}/5 violations return a witness")


def test_criterion_09_gradient(acceptance):
    rng = np.random.default_rng(109)
    x = np.round(0.1 + 0.01 * np.arange(20), 10)
    grid = Grid(x)
    idx = rng.integers(0, 20, 400)
    jdx = np.clip(idx + rng.integers(-2, 3, 400), 0, 19)
    sample = JumpSample(np.column_stack([x[idx], 1 - x[idx]]), np.column_stack([x[jdx], 1 - x[jdx]]))
    prob = build_problem(sample, grid, ConstraintSet((0.5, 2.0), monotone=True))
    worst = 0.0
    for _ in range(50):
        v = random_feasible_vars(rng, grid)
        _, g = objective_and_gradient(prob, v)
        flat = np.concatenate([g.z, g.phi])
        base = np.concatenate([v.z, v.phi])
        fd = np.empty_like(base)
        for i in range(len(base)):
            h = 1e-6 * max(1.0, abs(base[i]))
            up, dn = base.copy(), base.copy()
            up[i] += h
            dn[i] -= h
            fd[i] = (objective(prob, DecisionVars(up[:20], up[20:]))
                     - objective(prob, DecisionVars(dn[:20], dn[20:]))) / (2 * h)
        worst = max(worst, float(np.max(np.abs(fd - flat)) / max(np.max(np.abs(flat)), 1e-12)))
    acceptance(9, worst <= 1e-6, f"max relative gradient error {worst:.2e} over 50 points, m = 20 (<= 1e-6)")


def test_criterion_10_brute_force_oracle(acceptance):
    t0 = time.perf_counter()
    worst_gap, worst_res, bad = np.inf, 0.0, []
    for seed in range(20):
        prob = tiny_instance(seed)
        sol, b = solve(prob), brute_force_solve(prob)
        gap = sol.objective - (b.objective - 1e-4 - b.meta["resolution"])
        worst_gap = min(worst_gap, gap)
        worst_res = max(worst_res, sol.residuals.max())
        if gap < 0 or sol.residuals.max() > 1e-8:
            bad.append(seed)
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 60
    acceptance(10, ok, f"min margin over brute force {worst_gap:.2e} (>= 0), max residual {worst_res:.2e} "
                       f"(<= 1e-8), failing seeds {bad}, {elapsed:.1f}s (< 60s)")


def _synthetic_history(seed, months=120):
    rng = np.random.default_rng(seed)
    sd = np.array([0.06, 0.04])
    cov = np.outer(sd, sd) * np.array([[1.0, 0.5], [0.5, 1.0]])
    return ReturnHistory.from_log_returns(rng.multivariate_normal(np.zeros(2), cov, months))


def test_criterion_11_end_to_end(acceptance):
    t0 = time.perf_counter()
    hist = recenter_returns(_synthetic_history(2024))
    region = RegionK.two_asset(0.1, 0.3)
    paths = bootstrap_paths(hist, [0.1819, 0.8181], region, 50, 5000, seed=7)
    sample = collect_pairs(paths, 3, region)
    grid = Grid.from_range(0.1, 0.3, 0.001)
    cons = ConstraintSet((0.5, 2.0), monotone=True)
    prob = build_problem(sample, grid, cons)
    sol = solve(prob, SolverConfig(seed=7))

    z, phi = sol.z, sol.phi
    s = np.diff(phi) / np.diff(grid.full)
    starts = {r["label"]: r["objective"] for r in sol.starts if r["label"].endswith("[start point]")}
    mk_obj = objective(prob, market_vars(grid))
    eq_obj = [v for k, v in starts.items() if k.startswith("equal-weight")]
    fg = polyhedral_extension(sol, warn=False)
    reproduces = bool(np.array_equal(fg.portfolio(np.column_stack([grid.x, 1 - grid.x]))[:, 0], z))

    held = _synthetic_history(99, months=240)
    mu = [np.array([0.2, 0.8])]
    for g in held.gross:
        c = mu[-1] * g
        mu.append(c / c.sum())
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        bt = fernholz_decompose(polyhedral_extension(sol, outside="hold", warn=False), np.array(mu))
    elapsed = time.perf_counter() - t0

    checks = {
        "m = 201": grid.m == 201,
        "converged": sol.converged,
        "z nondecreasing": bool(np.all(np.diff(z) >= 0)),
        "phi concave": bool(np.all(np.diff(s) <= 1e-12)) and sol.residuals.values["concavity"] <= 1e-8,
        "residuals <= 1e-8": sol.residuals.max() <= 1e-8,
        "beats market start": sol.objective >= mk_obj,
        "beats equal-weight start": bool(eq_obj) and sol.objective >= max(eq_obj),
        "extension reproduces z": reproduces,
        "backtest identity": bt.identity_error() <= 1e-10,
        "under 5 min": elapsed < 300,
    }
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    acceptance(11, ok, f"objective {sol.objective:.6e} vs market {mk_obj:.1e} and equal-weight "
                       f"{max(eq_obj) if eq_obj else float('nan'):.6e}; {len(sample)} pairs; "
                       f"backtest identity {bt.identity_error():.1e}; {elapsed:.0f}s; failed: {failed or 'none'}")


def test_criterion_12_consistency_trend(acceptance):
    gen = lambda N: pairs_from_markov(random_walk_sampler(0.01, 0.1, 0.3), [0.2, 0.8], 100, N, seed=12)
    rep = consistency_experiment(gen, [500, 2000, 8000], Grid.from_range(0.1, 0.3, 0.01),
                                 ConstraintSet((0.5, 2.0), monotone=True))
    d = rep.distances
    acceptance(12, rep.trend_ok(2.0), f"distances N=500->2000 {d[0]:.4g}, N=2000->8000 {d[1]:.4g} "
                                      f"(second <= 2x first)")
