import warnings

import numpy as np
import pytest

from sicdd.linkmodel import LinkConfig, TruncationWarning, derive_taps, TapSet
from sicdd.auxmodel import AuxChannel, ReceiverFrame, aux_noise_free, truncate_taps


def pytest_configure(config):
    warnings.filterwarnings("ignore", category=TruncationWarning)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def sinc_taps():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return derive_taps(LinkConfig(alpha=0.0, taps_half=31))


def random_instance(rng, alphabet, n, K, sigma=0.7, scale=0.8, differential=None):
    """Random receiver frame with random complex taps, drawn from the
    auxiliary model itself."""
    M = alphabet.M
    psi = rng.normal(size=2 * K + 1) + 1j * rng.normal(size=2 * K + 1)
    aux = AuxChannel(TapSet(psi=psi), mu=rng.normal(size=2) * 0.1,
                     var=np.array([sigma ** 2, sigma ** 2]) * rng.uniform(0.6, 1.4, 2))
    pts = scale * alphabet.points
    s0 = pts[rng.integers(M, size=K)]
    tail = pts[rng.integers(M, size=K)]
    if differential is None:
        differential = alphabet.kind != "PAM" and bool(rng.integers(2))
    u = rng.integers(M, size=n)
    rx = ReceiverFrame(y=np.zeros(2 * (n + K)), s0=s0, tail=tail, n=n, points=pts,
                       x_ref=s0[-1] if K else pts[0], differential=differential,
                       nphase=alphabet.nphase, u_idx=u, labels=alphabet.labels, m=alphabet.m)
    z = aux_noise_free(aux, rx, pts[u])
    par = np.arange(z.size) % 2
    rx.y = z + aux.mu[par] + np.sqrt(aux.var[par]) * rng.standard_normal(z.size)
    return rx, aux


_REPORT = []


@pytest.fixture
def report():
    def add(line):
        print(line)
        _REPORT.append(line)
    return add


def pytest_terminal_summary(terminalreporter):
    if _REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_REPORT, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
