"""The compiled kernel, the pure-Python kernel and the object-level loop must agree."""
import numpy as np
import pytest

from qtrack import backend
from qtrack.harness import paper_config, run_trial
from qtrack.model import NoiseModel, OmegaSet, QuantizerSpec

BACKENDS = sorted(backend.KERNELS) + ["reference"]

CONFIGS = {
    "paper": paper_config(horizon=1500),
    "signed_box": paper_config(horizon=1500, omega=OmegaSet.signed_box(1, 3.0, 6.5, 2.0)),
    "logistic": paper_config(horizon=800, noise=NoiseModel("logistic", 0.6)),
    "uniform": paper_config(horizon=800, noise=NoiseModel("uniform", 1.5)),
    "five_levels": paper_config(horizon=800, quantizer=QuantizerSpec([-3, -1, 1, 3], [9, 4, 0, -4, -9])),
}


@pytest.mark.parametrize("name", sorted(CONFIGS))
@pytest.mark.parametrize("trial", [0, 5])
def test_backends_agree(name, trial):
    cfg = CONFIGS[name]
    records = {b: run_trial(cfg, trial, b) for b in BACKENDS}
    base = records[BACKENDS[0]]
    for b, rec in records.items():
        assert np.array_equal(rec.s, base.s), b
        np.testing.assert_allclose(rec.theta_hat, base.theta_hat, rtol=0, atol=1e-12, err_msg=b)
        np.testing.assert_allclose(rec.u, base.u, rtol=1e-12, atol=1e-12, err_msg=b)


def test_compiled_backend_available():
    # the extension is optional, but the default install builds it
    if "compiled" not in backend.KERNELS:
        pytest.skip("compiled kernel not built")
    assert backend.BACKEND in ("compiled", "python")


def test_env_override(monkeypatch):
    monkeypatch.setenv("QTRACK_BACKEND", "python")
    assert backend.default_backend() == "python"
    monkeypatch.setenv("QTRACK_BACKEND", "fortran")
    with pytest.raises(RuntimeError):
        backend.default_backend()
