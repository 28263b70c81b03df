import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from mvtost import (
    DomainError,
    MCConfig,
    RngStream,
    SimScenario,
    export_curve,
    make_cov,
    read_curve,
    run_curve,
    sample_canonical,
)
from mvtost.simulation import engine_size


class TestMakeCov:
    def test_independent(self):
        s = make_cov("compound_symmetry", [0.1, 0.2, 0.3], 0.0)
        assert_allclose(s, np.diag([0.01, 0.04, 0.09]))

    def test_two_outcomes_coincide(self):
        sd = [0.05, 0.15]
        assert_array_equal(make_cov("ar1", sd, -0.4), make_cov("compound_symmetry", sd, -0.4))

    def test_ar1_lag_three(self):
        sd = np.array([0.1, 0.2, 0.3, 0.4])
        s = make_cov("ar1", sd, 0.5)
        assert_allclose(s[0, 3], 0.125 * sd[0] * sd[3])
        assert_allclose(s[1, 2], 0.5 * sd[1] * sd[2])

    def test_compound_symmetry(self):
        s = make_cov("compound_symmetry", [1.0] * 3, 0.3)
        assert_allclose(s[np.triu_indices(3, 1)], 0.3)

    @pytest.mark.parametrize("rho", [-0.5, -0.9])
    def test_not_positive_definite(self, rho):
        with pytest.raises(DomainError, match="positive definite"):
            make_cov("compound_symmetry", [0.1] * 3, rho)

    @pytest.mark.parametrize("args", [("toeplitz", [0.1], 0.0), ("ar1", [0.1, -0.1], 0.0), ("ar1", [0.1], 1.0)])
    def test_invalid(self, args):
        with pytest.raises(DomainError):
            make_cov(*args)


SIGMA2 = make_cov("compound_symmetry", [0.1, 0.2], 0.6)
THETA2 = np.array([0.05, -0.1])


@pytest.fixture(scope="module")
def draws():
    return sample_canonical(THETA2, SIGMA2, 12, rng=3, size=100_000)


class TestSampleCanonical:
    SIGMA = SIGMA2
    THETA = THETA2

    def test_mean(self, draws):
        th, _ = draws
        se = np.sqrt(np.diag(self.SIGMA) / th.shape[0])
        assert np.all(np.abs(th.mean(axis=0) - self.THETA) < 3 * se)

    def test_wishart_mean(self, draws):
        _, sh = draws
        assert_allclose(sh.mean(axis=0), self.SIGMA, atol=3e-4)

    def test_independence(self, draws):
        th, sh = draws
        n = th.shape[0]
        for j in range(2):
            r = np.corrcoef(th[:, j], sh[:, j, j])[0, 1]
            assert abs(r) < 4 / math.sqrt(n)
        r = np.corrcoef(th[:, 0] * th[:, 1], sh[:, 0, 1])[0, 1]
        assert abs(r) < 4 / math.sqrt(n)

    def test_deterministic(self):
        a = sample_canonical(self.THETA, self.SIGMA, 12, rng=RngStream(9), size=5)
        b = sample_canonical(self.THETA, self.SIGMA, 12, rng=RngStream(9), size=5)
        assert_array_equal(a[0], b[0])
        assert_array_equal(a[1], b[1])

    def test_single_draw_shapes(self):
        th, sh = sample_canonical(self.THETA, self.SIGMA, 12, rng=1)
        assert th.shape == (2,) and sh.shape == (2, 2)

    def test_nu_below_dimension(self):
        with pytest.raises(DomainError):
            sample_canonical(np.zeros(3), np.eye(3), 2, rng=0)


class TestScenario:
    def test_defaults(self):
        sc = SimScenario()
        assert len(sc.kappa_grid) == 30 and sc.kappa_grid[-1] == pytest.approx(1.2)
        assert sc.sigma_diag == (0.1, 0.1)

    def test_from_dict_with_grid_spec(self):
        sc = SimScenario.from_dict(
            {"m": 3, "sigma_diag": [0.05, 0.1, 0.15], "structure": "ar1", "rho": 0.5,
             "kappa_grid": {"start": 0, "stop": 1, "num": 5}, "spec": {"alpha": 0.1}}
        )
        assert sc.kappa_grid == (0.0, 0.25, 0.5, 0.75, 1.0)
        assert sc.spec.alpha == 0.1
        assert SimScenario.from_dict(sc.to_dict()) == sc

    @pytest.mark.parametrize(
        "kw",
        [{"kappa_grid": (0.5, 0.2)}, {"kappa_grid": (0.0, 1.5)}, {"m": 3, "sigma_diag": (0.1, 0.1)}, {"nu": 1}, {"B": 0}],
    )
    def test_invalid(self, kw):
        with pytest.raises(DomainError):
            SimScenario(**kw)


SMALL = dict(m=2, nu=20, B=300, seed=11)


@pytest.fixture(scope="module")
def curve_rho0():
    return run_curve(SimScenario(sigma_diag=0.1, rho=0.0, name="s2_rho0", **SMALL))


class TestRunCurve:
    def test_dominance(self, curve_rho0):
        r = curve_rho0
        assert r.dominance_violations == 0
        assert np.all(r.alpha_hat >= 0.05)
        assert r.level_used["atost"] >= r.level_used["tost"] == 0.05

    def test_proportions(self, curve_rho0):
        for p in curve_rho0.proportion.values():
            assert p.shape == (30,) and np.all((0 <= p) & (p <= 1))

    def test_size_at_boundary(self, curve_rho0):
        r = curve_rho0
        assert r.size_at_one["tost"] <= r.size_at_one["atost"] + 3 * r.size_at_one_se["atost"]
        assert r.size_at_one["atost"] <= 0.05 + 3 * math.sqrt(0.05 * 0.95 / r.scenario.B)

    def test_decreasing_beyond_boundary(self, curve_rho0):
        r = curve_rho0
        i1 = int(np.argmin(np.abs(r.kappa - 1.0)))
        for mth, p in r.proportion.items():
            assert p[-1] < p[i1]
            # each replicate path is not monotone; the curve is, up to noise
            s = r.std_error[mth]
            assert np.all(np.diff(p) <= 3 * np.hypot(s[1:], s[:-1]))
            assert p[0] > p[i1]

    def test_engine_agreement(self, curve_rho0):
        sc = curve_rho0.scenario
        eng = engine_size(sc)
        sim = curve_rho0.size_at_one["tost"]
        se = math.hypot(eng.std_error, math.sqrt(eng.value * (1 - eng.value) / sc.B))
        assert abs(sim - eng.value) <= 3 * se

    def test_overlap_at_origin_small_sigma(self):
        r = run_curve(SimScenario(sigma_diag=0.05, rho=0.0, **SMALL))
        p, s = r.proportion, r.std_error
        assert abs(p["tost"][0] - p["atost"][0]) <= 3 * math.hypot(s["tost"][0], s["atost"][0])

    def test_decreasing_in_scale(self):
        props = [
            run_curve(SimScenario(sigma_diag=sd, kappa_grid=(0.0, 0.5), **SMALL), methods=("tost",)).proportion["tost"]
            for sd in (0.05, 0.1, 0.15)
        ]
        assert np.all(np.diff(np.array(props), axis=0) <= 0)

    def test_worker_count_invariance(self):
        sc = SimScenario(sigma_diag=0.1, rho=0.5, kappa_grid=(0.0, 1.0), B=40, seed=2)
        a = run_curve(sc, replicate_mc=MCConfig(128, 4))
        b = run_curve(sc, replicate_mc=MCConfig(128, 4), n_jobs=2)
        assert_array_equal(a.alpha_hat, b.alpha_hat)
        assert_array_equal(a.proportion["atost"], b.proportion["atost"])

    def test_unknown_method(self):
        with pytest.raises(DomainError):
            run_curve(SimScenario(B=5), methods=("bonferroni",))


class TestExport:
    def test_roundtrip(self, curve_rho0, tmp_path):
        csv_path, json_path = export_curve(curve_rho0, tmp_path / "out")
        back = read_curve(tmp_path / "out")
        for k in curve_rho0.methods:
            assert_array_equal(back.proportion[k], curve_rho0.proportion[k])
            assert_array_equal(back.std_error[k], curve_rho0.std_error[k])
            assert_array_equal(back.lambda_used[k], curve_rho0.lambda_used[k])
        assert_array_equal(back.kappa, curve_rho0.kappa)
        assert back.scenario == curve_rho0.scenario
        assert back.size_at_one == curve_rho0.size_at_one

    def test_layout(self, curve_rho0, tmp_path):
        csv_path, json_path = export_curve(curve_rho0, tmp_path / "out.csv")
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "scenario_id,method,kappa,proportion,se"
        assert len(lines) == 1 + 2 * 30
        meta = json.loads(json_path.read_text())
        assert meta["seed"] == 11 and "version" in meta
        assert meta["scenario"]["B"] == 300

    def test_deterministic_bytes(self, tmp_path):
        sc = SimScenario(sigma_diag=0.1, rho=0.3, B=60, seed=4, kappa_grid=(0.0, 0.6, 1.0))
        paths = [export_curve(run_curve(sc, replicate_mc=MCConfig(128, 4)), tmp_path / d / "c") for d in "ab"]
        for i in range(2):
            assert paths[0][i].read_bytes() == paths[1][i].read_bytes()
