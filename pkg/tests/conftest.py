import numpy as np
import pytest

from esarl.filters import filter_sequence

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


def steady_amplitude(signal: np.ndarray, omega: float, dt: float, periods: int = 5) -> float:
    """Amplitude of the ``omega`` component over the last whole ``periods`` of ``signal``."""
    per = 2 * np.pi / (omega * dt)
    n = int(round(periods * per))
    k = np.arange(len(signal))[-n:]
    A = np.column_stack([np.sin(omega * k * dt), np.cos(omega * k * dt), np.ones(n)])
    coef, *_ = np.linalg.lstsq(A, signal[-n:], rcond=None)
    return float(np.hypot(coef[0], coef[1]))


@pytest.fixture
def amplitude():
    return steady_amplitude


def sine_response(f, omega, dt, n):
    k = np.arange(n)
    return filter_sequence(f, np.sin(omega * k * dt))


def finite_diff_check(f, arrays, grads, h=1e-5, samples=None, rng=None):
    """Max relative error between analytic ``grads`` and central differences of ``f``."""
    worst = 0.0
    for arr, g in zip(arrays, grads):
        idx = list(np.ndindex(arr.shape))
        if samples is not None and len(idx) > samples:
            pick = rng.choice(len(idx), samples, replace=False)
            idx = [idx[i] for i in pick]
        for i in idx:
            old = arr[i]
            arr[i] = old + h
            fp = f()
            arr[i] = old - h
            fm = f()
            arr[i] = old
            num = (fp - fm) / (2 * h)
            err = abs(num - g[i]) / max(1.0, abs(num), abs(g[i]))
            worst = max(worst, err)
    return worst
