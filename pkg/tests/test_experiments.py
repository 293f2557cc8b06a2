import json

import numpy as np
import pytest

from rankspec.blockmodel import BlockModelSpec, Membership, limiting_rank_matrices, sample_matrix
from rankspec.distributions import Exponential, Normal, Uniform
from rankspec.errors import ArgumentError
from rankspec.experiments import (
    EXPERIMENTS,
    GAUSSIAN_EFFICIENCY_CEILING,
    REPORT_FILE,
    ExperimentReport,
    PassFlag,
    Table,
    centered_rank_moments,
    efficiency_ratio,
    exponential_rank_mean_limit,
    moment_checks,
    pareto_rank_mean_limit,
    pareto_spec,
    run_are_curves,
    run_contaminated_normal,
    run_contour_ratio,
    run_graph_comparison,
    run_mixed_membership,
    run_normality_check,
    run_overlay,
    run_pareto,
    run_rank_deficiency_demos,
    run_trace_bound,
    trace_bound,
    verify_moments,
)


def _small_report():
    table = Table(
        {"step": np.arange(3), "value": [0.1, np.pi, 1e-300], "ok": [True, False, True]},
        {"step": ("step", "index"), "value": ("value", "units"), "ok": ("flag", "boolean")},
    )
    return ExperimentReport(
        name="small",
        seed=3,
        replicates=3,
        parameters={"n": np.int64(5), "grid": (1.0, 2.0)},
        tables={"steps": table},
        pass_flags={"fine": PassFlag.check(0.5, 1, "<=", "value below one")},
        notes=["a note"],
    )


def test_table_validation():
    table = Table({"a": [True, False]}, {"a": ("flag", "boolean")})
    assert table["a"].tolist() == [1, 0]
    assert len(table) == 2
    with pytest.raises(ArgumentError):
        Table({"a": [1, 2], "b": [1.0]}, {"a": ("x", "u"), "b": ("y", "u")})
    with pytest.raises(ArgumentError):
        Table({"a": [1, 2]}, {})
    with pytest.raises(ArgumentError):
        Table({"a": ["x"]}, {"a": ("x", "u")})


def test_pass_flag():
    assert PassFlag.check(2, 1, ">", "bigger").passed
    assert not PassFlag.check(2, 1, "<=", "smaller").passed
    with pytest.raises(ArgumentError):
        PassFlag.check(1, 1, "~", "close")


def test_report_write_and_read(tmp_path):
    report = _small_report()
    path = report.write(tmp_path / "small")
    assert path.name == REPORT_FILE
    payload = json.loads(path.read_text())
    assert payload["metadata"]["fingerprint"] == str(report.fingerprint)
    assert payload["parameters"] == {"n": 5, "grid": [1.0, 2.0]}
    assert payload["tables"]["steps"]["columns"][2]["dtype"] == "int"
    back = ExperimentReport.read(tmp_path / "small")
    assert back == report
    assert back.tables["steps"]["value"][1] == np.pi
    assert report.passed
    assert "[PASS] fine" in report.summary()
    with pytest.raises(FileNotFoundError):
        ExperimentReport.read(tmp_path / "absent")


def test_centered_rank_moments():
    for N in (6, 45, 1225):
        a = np.arange(1, N + 1) / (N + 1) - 0.5
        second, fourth = centered_rank_moments(N)
        assert second == pytest.approx(np.mean(a**2), rel=1e-12)
        assert fourth == pytest.approx(np.mean(a**4), rel=1e-12)


def test_trace_bound_values():
    assert trace_bound(50, 1) == pytest.approx(2500.0)
    assert trace_bound(10, 2) == pytest.approx(28400.0)


def test_run_trace_bound():
    report = run_trace_bound(n=30, K=1, replicates=20, seed=1)
    assert report.passed
    assert len(report.tables["replicates"]) == 20
    assert set(report.pass_flags) == {
        "bound_holds",
        "nonnegative",
        "second_moment_exact",
        "fourth_moment_exact",
    }
    assert report == run_trace_bound(n=30, K=1, replicates=20, seed=1)


def test_run_trace_bound_two_blocks():
    report = run_trace_bound(n=20, K=2, replicates=10, seed=2)
    assert report.pass_flags["bound_holds"].passed
    assert report.parameters["bound"] == trace_bound(20, 2)
    assert report.notes == []


def test_exponential_rank_mean_limit():
    limit = exponential_rank_mean_limit((2.0, 1.0), 0.5)
    np.testing.assert_allclose(limit, [[0.658333, 0.5], [0.5, 0.341667]], atol=1e-6)


def test_pareto_limit_matches_quadrature():
    spec = pareto_spec(40, 0.25)
    rank_mean, _ = limiting_rank_matrices(spec, (0.25, 0.75), 100000, method="quadrature")
    assert rank_mean[0, 0] == pytest.approx(pareto_rank_mean_limit(0.25, (1.0, 2.0, 3.0)), abs=1e-3)
    assert pareto_rank_mean_limit(1.0, (1.0, 2.0, 3.0)) == pytest.approx(0.5)


def test_rank_deficiency_exponential():
    report = run_rank_deficiency_demos("exponential", n=2000)
    assert report.passed
    assert report.tables["eigenvalues"]["mean_eigenvalue"][1] == pytest.approx(0.0, abs=1e-12)


def test_rank_deficiency_identical_exponentials():
    report = run_rank_deficiency_demos("exponential", n=200, mu=(1.0, 1.0))
    assert report.pass_flags["rank_mean_rank"].threshold == 1.0
    assert report.pass_flags["rank_mean_rank"].passed


def test_rank_deficiency_gamma():
    report = run_rank_deficiency_demos("gamma")
    assert report.passed, report.summary()
    table = report.tables["matrices"]
    np.testing.assert_allclose(table["mean"], 1.0)


def test_rank_deficiency_rejects_unknown_model():
    with pytest.raises(ArgumentError):
        run_rank_deficiency_demos("lognormal")


def test_efficiency_ratio_near_gaussian_ceiling():
    spec = BlockModelSpec(
        Membership.from_block_sizes([1, 1]),
        {(1, 1): Normal(1.0, 4.0), (1, 2): Normal(0.8, 4.0), (2, 2): Normal(1.0, 4.0)},
    )
    raw, rank, ratio = efficiency_ratio(spec)
    assert raw == pytest.approx(4.0 * 16.0 / 0.2**2, rel=1e-6)
    assert ratio == pytest.approx(GAUSSIAN_EFFICIENCY_CEILING, rel=0.01)


def test_run_are_curves_small_grid():
    report = run_are_curves(
        mu_grid=(2.0,),
        gamma_grid=(2.0, 2.5),
        sigma_grid=(1.0, 1.25),
        epsilon_grid=(0.2,),
        tau_grid=(100.0,),
        limit_n=2000,
    )
    assert report.replicates == 0
    assert len(report.tables["gaussian_mu_gamma"]) == 2
    assert len(report.tables["contaminated"]) == 1
    assert report.pass_flags["gaussian_efficiency_ceiling"].passed
    assert report.pass_flags["contamination_favors_ranks"].passed


def test_verify_moments(uniform_exponential_spec):
    names = [name for name, _, _ in moment_checks(uniform_exponential_spec)]
    assert names == [
        "expectation",
        "variance",
        "covariance_same_pair_shared",
        "covariance_cross_pair_shared",
        "covariance_disjoint",
    ]
    report = verify_moments(uniform_exponential_spec, replicates=4000, seed=5, bands=4.0)
    assert report.passed, report.summary()
    assert len(report.tables["checks"]) == 5


def test_verify_moments_one_block():
    spec = BlockModelSpec(Membership.from_block_sizes([12]), {(1, 1): Normal(0.0, 1.0)})
    report = verify_moments(spec, replicates=2000, seed=1, bands=4.0)
    assert set(report.pass_flags) == {"expectation", "variance", "covariance_shared", "covariance_disjoint"}
    assert report.tables["checks"]["exact"][0] == pytest.approx(0.5)
    assert report.passed, report.summary()


def test_contaminated_normal_small_run():
    report = run_contaminated_normal(n=100, replicates=3, seed=2, restarts=2)
    assert len(report.tables["scree"]) == 10
    assert len(report.tables["eigenvectors"]) == 100
    assert len(report.tables["replicates"]) == 3
    assert "raw_fails" in report.pass_flags
    assert report == run_contaminated_normal(n=100, replicates=3, seed=2, restarts=2)


def test_pareto_small_run():
    report = run_pareto(n=80, replicates=2, seed=1, restarts=2, limit_n=20000)
    assert len(report.tables["embedding"]) == 80
    assert len(report.tables["rank_mean_limit"]) == 3
    assert report.pass_flags["rank_mean_limit"].passed


def test_overlay_small_run():
    report = run_overlay(n=150, seed=1, restarts=2)
    assert len(report.tables["clouds"]) == 150
    assert len(report.tables["correlations"]) == 9
    assert "raw_corrupted_degenerate" in report.pass_flags


def test_contour_ratio_small_grid():
    report = run_contour_ratio(epsilons=(0.0, 0.3), taus=(1.0, 1000.0), n=100, replicates=3, seed=4)
    grid = report.tables["grid"]
    assert len(grid) == 4
    assert np.all(grid["ratio"] > 0)
    assert report.pass_flags["heavy_contamination_favors_ranks"].passed


def test_normality_small_run(normal_spec):
    report = run_normality_check(spec=normal_spec, n_list=(60, 80), replicates=10, seed=3)
    assert len(report.tables["summary"]) == 4
    assert len(report.tables["shape"]) == 8
    assert len(report.tables["covariances"]) == 12
    covariances = report.tables["covariances"]
    assert np.all(covariances["predicted"][covariances["i"] == covariances["j"]] > 0)


def test_mixed_membership_small_run():
    report = run_mixed_membership(n=300, seed=2)
    assert len(report.tables["embedding"]) == 300
    assert 0.0 <= report.parameters["r2_ptr"] <= 1.0
    assert report.parameters["B"] == [[3.0, 2.0, 1.0], [2.0, 2.0, 1.0], [1.0, 1.0, 1.0]]


def test_graph_comparison(normal_spec):
    a = sample_matrix(normal_spec, 9)
    report = run_graph_comparison(a, normal_spec.membership.labels, max_d=10, kmeans_runs=5, seed=1)
    comparison = report.tables["comparison"]
    assert comparison["representation"].tolist() == [0, 1]
    assert np.all(comparison["d"] >= 1)
    assert report.pass_flags["ptr_not_worse"].passed
    with pytest.raises(ArgumentError):
        run_graph_comparison(a, [1, 2], kmeans_runs=1)


def test_experiment_registry():
    assert set(EXPERIMENTS) == {
        "contaminated-normal",
        "pareto",
        "overlay",
        "are-curves",
        "contour-ratio",
        "trace-bound",
        "normality",
        "rank-deficiency",
        "mixed-membership",
        "graph-comparison",
    }


@pytest.mark.slow
def test_contaminated_normal_full_scale():
    report = run_contaminated_normal()
    assert report.passed, report.summary()


@pytest.mark.slow
def test_contaminated_normal_without_contamination():
    report = run_contaminated_normal(epsilon=0.0, replicates=20)
    assert report.pass_flags["raw_succeeds"].passed


@pytest.mark.slow
def test_pareto_full_scale():
    report = run_pareto()
    assert report.pass_flags["ptr_perfect_clustering"].passed
    assert report.pass_flags["rank_mean_limit"].passed


@pytest.mark.slow
def test_overlay_full_scale():
    report = run_overlay()
    assert report.pass_flags["aligned_discrepancy"].passed


@pytest.mark.slow
def test_are_curves_full_grid():
    report = run_are_curves()
    assert report.passed, report.summary()


@pytest.mark.slow
def test_trace_bound_full_scale():
    assert run_trace_bound().passed
    assert run_trace_bound(n=40, K=2, replicates=200).pass_flags["bound_holds"].passed


@pytest.mark.slow
def test_verify_moments_three_families():
    spec = BlockModelSpec(
        Membership.from_block_sizes([10, 10]),
        {(1, 1): Uniform(0.0, 1.0), (1, 2): Exponential(1.0), (2, 2): Normal(0.0, 1.0)},
    )
    report = verify_moments(spec, replicates=50000, seed=11)
    assert report.passed, report.summary()


@pytest.mark.slow
def test_contour_ratio_sign_pattern():
    report = run_contour_ratio(epsilons=(0.01, 0.3), taus=(1.0, 10000.0), n=250, replicates=30, seed=1)
    assert report.passed, report.summary()


@pytest.mark.slow
def test_normality_full_scale():
    report = run_normality_check()
    assert report.pass_flags["covariance_error_decreases"].passed
