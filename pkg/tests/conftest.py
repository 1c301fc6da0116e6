import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from flowembed import _backend, field as fld, kernel as krn, matrix as mtx  # noqa: E402

BACKENDS = [name for name in ("compiled", "python") if name in _backend.available()]


@pytest.fixture(params=BACKENDS, scope="module")
def backend(request):
    return request.param


def build(name, dims, shape="box", L=10, params=None, **cfg):
    """Run steps 1-4: returns (domain, field, row-normalized P)."""
    domain = fld.default_domain(name, dims)
    field = fld.make_analytic(name, params, domain)
    backend = cfg.pop("backend", None)
    acfg = mtx.AssemblyConfig(kernel=krn.make_kernel(shape, L), **cfg)
    P = mtx.assemble_probability_matrix(field, domain, acfg, backend=backend)
    return domain, field, mtx.normalize_rows(P)


def build_laplacian(name, dims, shape="box", L=10, **cfg):
    domain, field, P = build(name, dims, shape, L, **cfg)
    H = mtx.mixture_matrix(mtx.normalize_cols(P))
    return domain, P, H, mtx.laplacian(H)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)
