import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("default")

DATA = Path(__file__).parent / "data"

# criterion -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda s: int(s.split()[0])):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


@pytest.fixture
def data_dir():
    return DATA


# -- brute-force oracles -----------------------------------------------------
def naive_conv1d(x, w, b=None, dilation=1, padding="same"):
    """Explicit loop over (batch, out, time, in, tap) in float64."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    B, Ci, T = x.shape
    Co, _, K = w.shape
    pad = (K - 1) * dilation // 2 if padding == "same" else 0
    To = T + 2 * pad - (K - 1) * dilation
    out = np.zeros((B, Co, To))
    for bb in range(B):
        for o in range(Co):
            for t in range(To):
                acc = 0.0 if b is None else float(b[o])
                for i in range(Ci):
                    for k in range(K):
                        s = t + k * dilation - pad
                        if 0 <= s < T:
                            acc += w[o, i, k] * x[bb, i, s]
                out[bb, o, t] = acc
    return out


def _sig(v):
    return 1.0 / (1.0 + math.exp(-v))


def naive_lvc(x, wf, wg, bf, bg, dilation, hop):
    """Per output sample: pick kernel set t // hop and sum the dilated taps explicitly.

    Shapes: x (B, Ci, T); wf/wg (B, F, Co, Ci, K); bf/bg (B, F, Co).
    """
    x = np.asarray(x, dtype=np.float64)
    B, Ci, T = x.shape
    _, F, Co, _, K = wf.shape
    half = (K - 1) // 2
    out = np.zeros((B, Co, T))
    for bb in range(B):
        for t in range(T):
            i = t // hop
            for o in range(Co):
                a = float(bf[bb, i, o])
                g = float(bg[bb, i, o])
                for c in range(Ci):
                    for k in range(K):
                        s = t + (k - half) * dilation
                        if 0 <= s < T:
                            a += float(wf[bb, i, o, c, k]) * x[bb, c, s]
                            g += float(wg[bb, i, o, c, k]) * x[bb, c, s]
                out[bb, o, t] = math.tanh(a) * _sig(g)
    return out


def probe_radius(forward, T: int, t: int, seed: int = 0) -> int:
    """Delta probe: largest |t - s| with nonzero d out[t] / d noise[s].

    ``forward`` maps a (1, 1, T) noise Tensor to a (1, 1, T) output Tensor.
    """
    from lvcnet.numerics import Tensor, backward, tsum

    noise = Tensor(np.random.default_rng(seed).standard_normal((1, 1, T)), requires_grad=True)
    y = forward(noise)
    mask = np.zeros(y.shape)
    mask[..., t] = 1.0
    backward(tsum(y * mask))
    hit = np.nonzero(noise.grad[0, 0])[0]
    return int(np.abs(hit - t).max())
