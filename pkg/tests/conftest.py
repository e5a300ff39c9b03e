import numpy as np
import pytest

from harkit.tensor import numeric_gradient, relative_error

GRAD_EPS = 1e-5
GRAD_TOL = 1e-4
SEEDS = [0, 1, 2, 3, 4]


def check_layer_gradients(layer, x, training=False, dropout_seed=None, max_checks=None, seed=0):
    """Compare a layer's analytic backward against central differences of
    ``sum(forward(x) * R)`` for a fixed random ``R``. Returns the worst
    relative error over the input and every parameter."""
    gen = np.random.default_rng(seed + 1000)

    def run(inp):
        rng = np.random.default_rng(dropout_seed) if dropout_seed is not None else None
        if hasattr(layer, "state") and layer.state:
            saved = {k: v.copy() for k, v in layer.state.items()}
            out, cache = layer.forward(inp, training, rng)
            for k, v in saved.items():
                layer.state[k][...] = v
        else:
            out, cache = layer.forward(inp, training, rng)
        return out, cache

    out, cache = run(x)
    upstream = gen.normal(size=out.shape)
    dx, grads = layer.backward(cache, upstream)

    def loss(_):
        return float(np.sum(run(x)[0] * upstream))

    worst = {}
    targets = [("input", x, dx)] + [(k, layer.params[k], grads[k]) for k in layer.params]
    for name, arr, analytic in targets:
        if analytic is None:
            continue
        if max_checks is not None and arr.size > max_checks:
            idx = gen.choice(arr.size, size=max_checks, replace=False)
            flat = arr.reshape(-1)
            num = np.empty(max_checks)
            for j, i in enumerate(idx):
                orig = flat[i]
                flat[i] = orig + GRAD_EPS
                fp = loss(None)
                flat[i] = orig - GRAD_EPS
                fm = loss(None)
                flat[i] = orig
                num[j] = (fp - fm) / (2 * GRAD_EPS)
            worst[name] = relative_error(analytic.reshape(-1)[idx], num)
        else:
            worst[name] = relative_error(analytic, numeric_gradient(loss, arr, GRAD_EPS))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one (name, status, detail) row per acceptance criterion, printed at the end of the run
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{status:4s}  {name}: {detail}")
