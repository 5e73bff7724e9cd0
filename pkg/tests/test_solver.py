import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from doublephase.energy import RegularizationMode, energy_I
from doublephase.grid import ScalarField
from doublephase.solver import (
    SolveOptions,
    StepRule,
    gradient_norm_bound,
    minimize_I,
    minimize_I_eps,
    rof_baseline,
    staircase_metric,
)
from doublephase.synth import synthesize
from doublephase.weight import WeightSpec, estimate_weight

from conftest import ramp_field, step_field


def _noisy(kind="disk", size=32, seed=0, noise=0.1, spacing=1.0):
    return synthesize(kind, size, seed=seed, noise=noise, spacing=spacing)


def _weight(f, a_max=2.0):
    return estimate_weight(f, WeightSpec(presmooth_sigma=2.0 * f.spacing, edge_threshold=0.1 / f.spacing,
                                         a_max=a_max))


def _neumann_laplacian(n, h):
    d = sp.diags([-np.ones(n), np.ones(n - 1)], [0, 1], shape=(n, n), format="lil")
    d[n - 1, n - 1] = 0.0
    d = sp.csr_matrix(d) / h
    eye = sp.identity(n, format="csr")
    gx, gy = sp.kron(eye, d), sp.kron(d, eye)
    return (gx.T @ gx + gy.T @ gy).tocsr()


def test_gradient_norm_bound():
    assert gradient_norm_bound(2, 0.5) == 32.0
    A = _neumann_laplacian(12, 0.5).toarray()
    assert np.linalg.eigvalsh(A).max() <= gradient_norm_bound(2, 0.5)


def test_constant_data_is_fixed_point():
    f = ScalarField.constant((16, 16), 0.25)
    a = ScalarField.constant(f.shape, 1.0)
    for res in (
        minimize_I(f, a),
        minimize_I_eps(f, a, 0.1, RegularizationMode.COMBINED),
        minimize_I_eps(f, a, 0.1, RegularizationMode.COMBINED, method="primal_dual"),
        minimize_I_eps(f, a, 0.1, RegularizationMode.WEIGHT),
        rof_baseline(f, 1.0),
    ):
        np.testing.assert_array_equal(res.minimizer.values, f.values)
        assert res.report.total == 0.0
        assert res.converged
        assert res.iterations == 0


@pytest.mark.parametrize("eps", [0.5, 3.0])
def test_quadratic_case_matches_linear_solve(eps):
    n, h = 16, 0.5
    f = _noisy("two-region", n, seed=3, spacing=h)
    zero = ScalarField.constant(f.shape, 0.0, h)
    res = minimize_I_eps(f, zero, eps, RegularizationMode.WEIGHT,
                         SolveOptions(max_iters=2000, tol=1e-10), tv_term=False)
    A = sp.identity(n * n) + eps * _neumann_laplacian(n, h)
    oracle = spsolve(A.tocsc(), f.values.ravel()).reshape(n, n)
    assert res.converged
    np.testing.assert_allclose(res.minimizer.values, oracle, atol=1e-9)


def test_fixed_step_quadratic_case():
    f = _noisy("ramp", 16, seed=1)
    zero = ScalarField.constant(f.shape, 0.0)
    opts = SolveOptions(max_iters=20000, tol=1e-10, step_rule=StepRule.FIXED)
    res = minimize_I_eps(f, zero, 0.5, RegularizationMode.WEIGHT, opts, tv_term=False)
    oracle = spsolve((sp.identity(256) + 0.5 * _neumann_laplacian(16, 1.0)).tocsc(), f.values.ravel())
    np.testing.assert_allclose(res.minimizer.values.ravel(), oracle, atol=1e-8)
    with pytest.raises(ValueError):
        minimize_I_eps(f, zero, 0.5, RegularizationMode.EXPONENT, opts)


def test_descent_energy_never_increases():
    f = _noisy("disk", 24, seed=2)
    a = _weight(f)
    res = minimize_I_eps(f, a, 0.2, RegularizationMode.COMBINED,
                         SolveOptions(max_iters=300, tol=1e-10, record_trace=True))
    energies = [e for _, e, _ in res.trace]
    assert len(energies) > 10
    assert all(b <= a_ for a_, b in zip(energies, energies[1:]))


@pytest.mark.parametrize("solver,eps", [("I", None), ("descent", 0.5), ("primal_dual", 0.1)])
def test_two_inits_agree(solver, eps):
    f = _noisy("disk", 32, seed=4)
    a = _weight(f)

    def run(opts):
        if solver == "I":
            return minimize_I(f, a, opts)
        return minimize_I_eps(f, a, eps, opts=opts, method=solver)

    # tol = 1e-6 relative to the certificate of the data; both runs are then
    # certified absolutely, so the distance bound holds for either init
    tau = run(SolveOptions(max_iters=1, tol=1e-6, check_every=1)).threshold
    runs = []
    for init in ("from_f", "zero"):
        if solver == "descent":
            # 2-strong convexity: ||u - u*|| <= |grad|/2
            opts = SolveOptions(max_iters=20000, tol=tau, relative=False, init=init)
        else:
            # 2-strong convexity: ||u - u*|| <= sqrt(gap)
            opts = SolveOptions(max_iters=500000, tol=(5 * tau) ** 2, relative=False, check_every=500,
                                init=init)
        runs.append(run(opts))
    assert all(r.converged for r in runs)
    u, v = runs[0].minimizer, runs[1].minimizer
    assert np.sqrt(u.integrate((u.values - v.values) ** 2)) <= 10 * tau


def test_zero_weight_matches_rof():
    f = _noisy("disk", 32, seed=0, noise=0.05)
    zero = ScalarField.constant(f.shape, 0.0)
    opts = SolveOptions(max_iters=100000, tol=1e-9)
    u = minimize_I(f, zero, opts).minimizer.values
    v = rof_baseline(f, 1.0, opts).minimizer.values
    assert np.linalg.norm(u - v) <= 1e-3 * np.linalg.norm(v)


def test_rof_lambda_scales_fidelity():
    f = _noisy("disk", 24, seed=0)
    loose = rof_baseline(f, 0.5, SolveOptions(max_iters=20000, tol=1e-8)).minimizer
    tight = rof_baseline(f, 5.0, SolveOptions(max_iters=20000, tol=1e-8)).minimizer
    err = [np.abs(u.values - f.values).mean() for u in (loose, tight)]
    assert err[1] < err[0]


def test_rof_large_lambda_returns_data():
    f = _noisy("ramp+noise", 32, seed=5)
    u = rof_baseline(f, 1e6, SolveOptions(max_iters=5000, tol=1e-10)).minimizer
    assert np.abs(u.values - f.values).max() <= 1e-3


def test_rof_ignores_init():
    f = _noisy("disk", 16, seed=1)
    u0 = rof_baseline(f, 1.0, SolveOptions(max_iters=50)).minimizer
    u1 = rof_baseline(f, 1.0, SolveOptions(max_iters=50, init="zero")).minimizer
    np.testing.assert_array_equal(u0.values, u1.values)


def test_minimize_I_below_eps_minimizers():
    f = _noisy("two-region", 32, seed=2)
    a = _weight(f, 1.0)
    best = minimize_I(f, a, SolveOptions(max_iters=100000, tol=1e-10))
    for eps in (1e-1, 1e-2, 1e-3):
        res = minimize_I_eps(f, a, eps, RegularizationMode.WEIGHT, SolveOptions(max_iters=20000, tol=1e-8))
        assert best.report.total <= energy_I(res.minimizer, f, a).total + best.certificate


def test_eps_consistency_weight_mode():
    f = _noisy("disk", 32, seed=6)
    a = _weight(f, 1.0)
    opts = SolveOptions(max_iters=200000, tol=1e-11)
    values = [energy_I(minimize_I_eps(f, a, e, RegularizationMode.WEIGHT, opts).minimizer, f, a).total
              for e in (1e-1, 1e-2, 1e-3)]
    assert all(b <= a_ + 1e-8 for a_, b in zip(values, values[1:]))


def test_weight_mode_eps_zero_is_minimize_I():
    f = _noisy("disk", 16, seed=6)
    a = _weight(f, 1.0).with_values(_weight(f, 1.0).values + 0.1)
    opts = SolveOptions(max_iters=5000, tol=1e-8)
    u = minimize_I(f, a, opts)
    v = minimize_I_eps(f, a, 0.0, RegularizationMode.WEIGHT, opts)
    np.testing.assert_array_equal(u.minimizer.values, v.minimizer.values)
    assert v.report == u.report


def test_input_validation():
    f = _noisy("disk", 8)
    zero = ScalarField.constant(f.shape, 0.0)
    with pytest.raises(ValueError):
        minimize_I_eps(f, zero, 0.0, RegularizationMode.COMBINED)
    with pytest.raises(ValueError):
        minimize_I_eps(f, zero, 0.0, RegularizationMode.WEIGHT)
    with pytest.raises(ValueError):
        minimize_I(f, ScalarField.constant(f.shape, -1.0))
    with pytest.raises(ValueError):
        rof_baseline(f, 0.0)
    with pytest.raises(ValueError):
        minimize_I_eps(f, zero, 0.1, method="newton")
    with pytest.raises(ValueError):
        SolveOptions(tol=0.0)
    with pytest.raises(ValueError):
        SolveOptions(init="random")


def test_nonconvergence_reports_best_iterate():
    f = _noisy("disk", 32, seed=0)
    res = minimize_I(f, _weight(f), SolveOptions(max_iters=100, tol=1e-12, check_every=10))
    assert not res.converged
    assert res.iterations == 100
    assert res.certificate > res.threshold


@pytest.mark.parametrize("solver", ["I", "eps", "eps_pd", "rof"])
@pytest.mark.parametrize("kind", ["disk", "ramp+noise"])
def test_comparison_principle(solver, kind):
    f = _noisy(kind, 24, seed=8, noise=0.2)
    a = _weight(f)
    opts = SolveOptions(max_iters=20000, tol=1e-9)
    if solver == "I":
        u = minimize_I(f, a, opts).minimizer.values
    elif solver == "eps":
        u = minimize_I_eps(f, a, 0.5, opts=opts).minimizer.values
    elif solver == "eps_pd":
        u = minimize_I_eps(f, a, 0.1, opts=opts.replace(max_iters=3000), method="primal_dual").minimizer.values
    else:
        u = rof_baseline(f, 1.0, opts).minimizer.values
    slack = 1e-6 * np.ptp(f.values)
    assert u.min() >= f.values.min() - slack
    assert u.max() <= f.values.max() + slack


def test_staircase_metric_conventions():
    assert staircase_metric(ramp_field(32)) == 0.0
    assert staircase_metric(ScalarField.constant((8, 8), 1.0)) == 0.0
    n = 32
    # only the column before the jump has a nonzero forward difference
    assert staircase_metric(step_field(n)) == pytest.approx(1 - 1 / (n - 1))


def _plateaus(profile, tol=1e-4):
    runs, count = 0, 0
    for a, b in zip(profile, profile[1:]):
        if abs(b - a) <= tol:
            count += 1
        else:
            runs += count >= 2
            count = 0
    return runs + (count >= 2)


def test_rof_plateaus_exceed_double_phase():
    n = 64
    rng = np.random.default_rng(9)
    profile = np.linspace(0, 1, n) + 0.05 * rng.normal(size=n)
    f = ScalarField(np.tile(profile, (8, 1)))
    opts = SolveOptions(max_iters=50000, tol=1e-9)
    a = ScalarField.constant(f.shape, 2.0)
    rof = rof_baseline(f, 1.0, opts).minimizer.values[4]
    dp = minimize_I(f, a, opts).minimizer.values[4]
    assert _plateaus(rof) >= 5
    assert _plateaus(rof) > _plateaus(dp)


@pytest.mark.parametrize("cp,eps,lin,rhs", [
    (1.1, 0.1, 0.5, 0.3), (1.1, 0.1, 8.0, 1.2), (1.5, 0.5, 0.0, 2.0), (1.0001, 1e-4, 3.0, 7.0),
    (1.01, 0.01, 1e6, 1.05), (0.0, 0.1, 2.0, 3.0),
])
def test_radial_root_solves_equation(cp, eps, lin, rhs):
    from doublephase.solver import _radial_root

    for guess in (0.0, 1e-3, 10.0):
        s = _radial_root(cp, eps, lin, rhs, guess)
        assert s >= 0
        assert cp * s**eps + lin * s == pytest.approx(rhs, rel=1e-12)
    assert _radial_root(cp, eps, lin, 0.0) == 0.0


def test_kernels_match_numpy_fallback():
    from doublephase.solver import _primal_dual, _smooth_primal_dual

    f = _noisy("disk", 16, seed=3)
    a2 = _weight(f).values ** 2
    opts = SolveOptions(max_iters=200, check_every=50)
    fast = _primal_dual(f, a2, 1.0, opts, use_numba=True)
    slow = _primal_dual(f, a2, 1.0, opts, use_numba=False)
    np.testing.assert_allclose(fast[0], slow[0], atol=1e-10)
    fast = _smooth_primal_dual(f, a2 + 0.1, 1.1, 0.1, opts, use_numba=True)
    slow = _smooth_primal_dual(f, a2 + 0.1, 1.1, 0.1, opts, use_numba=False)
    np.testing.assert_allclose(fast[0], slow[0], atol=1e-10)


@pytest.mark.parametrize("mode", list(RegularizationMode))
def test_gap_certificate_bounds_suboptimality(mode):
    # the energy of an early iterate exceeds the converged one by at most its gap
    f = _noisy("two-region", 24, seed=1)
    a = _weight(f, 1.0)
    early = minimize_I_eps(f, a, 0.05, mode, SolveOptions(max_iters=100, check_every=100), method="primal_dual")
    late = minimize_I_eps(f, a, 0.05, mode, SolveOptions(max_iters=20000, tol=1e-9), method="primal_dual")
    assert early.certificate >= 0
    assert early.report.total - late.report.total <= early.certificate * (1 + 1e-9)
    assert late.report.total <= early.report.total
