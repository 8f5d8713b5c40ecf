import numpy as np
import pytest
import torch

from turbmit import turbsim as ts

# collected by the acceptance tests; printed in the terminal summary so the
# per-criterion PASS/FAIL lines survive pytest's output capture
ACCEPTANCE_LINES = []


def record_acceptance(line):
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


# ---------------------------------------------------------------------------
# gradient-check helpers (the finite-difference side is the oracle)
# ---------------------------------------------------------------------------

def rel_err(a, b):
    denom = max(float(a.norm()), float(b.norm()), 1e-12)
    return float((a - b).norm()) / denom


def _pick_coords(n, n_coords, seed):
    if n_coords is None or n_coords >= n:
        return list(range(n))
    rng = np.random.default_rng(seed)
    return sorted(rng.choice(n, size=n_coords, replace=False).tolist())


def fd_input_grad(fn, x, coords, eps=1e-5):
    """Central finite differences of scalar fn w.r.t. selected coords of x."""
    flat = x.detach().clone().reshape(-1)
    grads = torch.zeros(len(coords), dtype=torch.float64)
    for k, i in enumerate(coords):
        orig = float(flat[i])
        flat[i] = orig + eps
        fp = float(fn(flat.reshape(x.shape)))
        flat[i] = orig - eps
        fm = float(fn(flat.reshape(x.shape)))
        flat[i] = orig
        grads[k] = (fp - fm) / (2.0 * eps)
    return grads


def check_input_grad(fn, x, n_coords=None, eps=1e-5, seed=0):
    """Relative error between autograd and central differences w.r.t. x."""
    xg = x.detach().clone().requires_grad_(True)
    fn(xg).backward()
    analytic = xg.grad.detach().reshape(-1)
    coords = _pick_coords(analytic.numel(), n_coords, seed)
    fd = fd_input_grad(fn, x, coords, eps=eps)
    return rel_err(analytic[coords].double(), fd)


def check_param_grad(fn, module, n_coords_per_tensor=6, eps=1e-5, seed=0):
    """Relative error between autograd and FD over a parameter subset."""
    for p in module.parameters():
        p.grad = None
    fn().backward()
    analytic_sel, fd_sel = [], []
    rng = np.random.default_rng(seed)
    with torch.no_grad():
        for p in module.parameters():
            if p.grad is None:
                continue
            flat = p.reshape(-1)
            ga = p.grad.reshape(-1)
            coords = _pick_coords(flat.numel(),
                                  min(n_coords_per_tensor, flat.numel()),
                                  rng.integers(1 << 30))
            for i in coords:
                orig = float(flat[i])
                flat[i] = orig + eps
                fp = float(fn())
                flat[i] = orig - eps
                fm = float(fn())
                flat[i] = orig
                analytic_sel.append(float(ga[i]))
                fd_sel.append((fp - fm) / (2.0 * eps))
    return rel_err(torch.tensor(analytic_sel, dtype=torch.float64),
                   torch.tensor(fd_sel, dtype=torch.float64))


# ---------------------------------------------------------------------------
# small shared datasets (session-scoped; trainer and CLI tests reuse them)
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def clean_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("clean")
    ts.synth_clean_images(str(d), 14, size=32, seed=5)
    return str(d)


@pytest.fixture(scope="session")
def synthetic_dataset(tmp_path_factory, clean_dir):
    d = tmp_path_factory.mktemp("synres")
    ts.build_dataset(clean_dir, str(d), 12, "synthetic", seed=7)
    return str(d)


@pytest.fixture(scope="session")
def proxy_dataset(tmp_path_factory, clean_dir):
    d = tmp_path_factory.mktemp("proxyres")
    ts.build_dataset(clean_dir, str(d), 10, "proxy_real", seed=9)
    return str(d)
