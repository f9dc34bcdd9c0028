import numpy as np

from crsos.distributions import HeightDistribution
from crsos.report import compare_report, multinomial_envelope, write_svg


def test_identical_inputs_pass():
    p = HeightDistribution(np.array([0.2, 0.5, 0.3]), 1.0)
    report = compare_report(p, p, p, {"meanfield_exact": 0.0})
    assert all(v == 0.0 for v in report.distances.values())
    assert report.passed


def test_disjoint_point_masses_fail():
    a = HeightDistribution.delta(0, 3)
    b = HeightDistribution.delta(2, 3)
    report = compare_report(a, b, b, {"kmc_exact": 0.01, "meanfield_exact": 0.5})
    assert report.distances["kmc_exact"] == 1.0 and report.distances["meanfield_exact"] == 1.0
    assert not report.passed


def test_unequal_supports_are_padded():
    a = HeightDistribution(np.array([0.5, 0.5]))
    b = HeightDistribution(np.array([0.5, 0.25, 0.25]))
    report = compare_report(a, b)
    assert report.distances["kmc_exact"] == 0.25
    np.testing.assert_array_equal(report.differences["kmc_exact"], [0.0, -0.25, 0.25])


def test_envelope_widens_threshold():
    p = np.array([0.25, 0.5, 0.25])
    env = multinomial_envelope(p, 100)
    assert env == 0.5 * (2 * np.sqrt(0.25 * 0.75 / 100) + np.sqrt(0.25 / 100))
    report = compare_report(p, p, replicas=100)
    assert report.thresholds["kmc_exact"] == 3 * env
    report = compare_report(p, p, replicas=10 ** 8)
    assert report.thresholds["kmc_exact"] == 0.01


def test_envelope_covers_sampling_noise():
    """Draw N-sample histograms from a known law; the 3x envelope should almost never be exceeded."""
    rng = np.random.default_rng(0)
    p = np.array([0.1, 0.6, 0.25, 0.05])
    n = 10_000
    env = multinomial_envelope(p, n)
    tv = [0.5 * np.abs(rng.multinomial(n, p) / n - p).sum() for _ in range(500)]
    assert np.mean(np.array(tv) > 3 * env) < 0.01
    assert 0.5 * env < np.mean(tv) < 1.2 * env


def test_svg_is_byte_stable_and_carries_provenance(tmp_path):
    p = HeightDistribution(np.array([0.2, 0.5, 0.3]), 1.0)
    q = HeightDistribution(np.array([0.25, 0.45, 0.3]), 1.0)
    report = compare_report(p, q, q)
    a = write_svg(report, tmp_path / "a.svg", provenance="run 7")
    b = write_svg(report, tmp_path / "b.svg", provenance="run 7")
    assert a == b == (tmp_path / "a.svg").read_text()
    assert "<!-- run 7 -->" in a and "<svg" in a
    # self-contained: nothing fetched from elsewhere
    assert 'href="http' not in a and "<image" not in a and "url(http" not in a


def test_report_serializations():
    p = HeightDistribution(np.array([0.2, 0.8]), 2.0)
    report = compare_report(p, p, p)
    doc = report.to_dict()
    assert doc["time"] == 2.0 and doc["passed"] is True
    assert report.to_csv().splitlines() == ["k,exact,kmc,meanfield", "0,0.2,0.2,0.2", "1,0.8,0.8,0.8"]
