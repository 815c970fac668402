import numpy as np
import pytest

ACCEPTANCE_CRITERIA = {
    1: "Cutoff table exactness (exact binomial tails)",
    2: "Closed-form determinacy vs Monte Carlo RFS",
    3: "Homogeneous collapse of HRFS onto RFS",
    4: "Null calibration of the heterogeneity test",
    5: "Direction of the main result (HRFS gain at sigma=.5)",
    6: "Monotone decrease of score-based RFS determinacy in sigma",
    7: "Parameter-based gain bounds the score-based gain",
    8: "Rotation correctness (Procrustes + Varimax oracles)",
    9: "Simulate CLI determinism across worker counts",
    10: "Loading delta/candidate/acceptance hand fidelity",
}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion."""
    outcomes = {}
    order = {"PASS": 0, "XFAIL (documented)": 1, "FAIL": 2}
    for status, label in (
        ("passed", "PASS"),
        ("xfailed", "XFAIL (documented)"),
        ("failed", "FAIL"),
        ("error", "FAIL"),
        ("xpassed", "FAIL"),
    ):
        for report in terminalreporter.stats.get(status, ""):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid:
                continue
            number = int(nodeid.split("test_criterion_")[1].split("_")[0])
            current = outcomes.get(number)
            if current is None or order[label] > order[current]:
                outcomes[number] = label
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(outcomes):
        title = ACCEPTANCE_CRITERIA.get(number, "")
        terminalreporter.write_line(f"criterion {number:>2}: {outcomes[number]:<18} {title}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_orthogonal(q, rng):
    """Haar-ish random orthogonal matrix via QR with positive diagonal."""
    m = rng.standard_normal((q, q))
    qmat, r = np.linalg.qr(m)
    return qmat * np.sign(np.diag(r))


def random_loadings(p, q, rng, low=0.3, high=0.85):
    """Random orthogonal-model loadings with row communalities below one."""
    lam = rng.uniform(low, high, size=(p, q)) * rng.choice([-1.0, 1.0], size=(p, q))
    comm = np.sum(lam * lam, axis=1)
    over = comm > 0.95
    lam[over] *= np.sqrt(0.95 / comm[over])[:, None]
    return lam


def simulate_homogeneous(lam, n, rng):
    """Draw n rows from the orthogonal factor model with loadings lam and
    unit variable variances; returns (data values, true factor scores)."""
    lam = np.atleast_2d(lam)
    if lam.shape[1] > lam.shape[0]:
        lam = lam.T
    p, q = lam.shape
    psi = np.sqrt(1.0 - np.sum(lam * lam, axis=1))
    xi = rng.standard_normal((n, q))
    eps = rng.standard_normal((n, p))
    return xi @ lam.T + eps * psi, xi
