import numpy as np
import pytest

from gpsteer.gp import (
    ModelFormatError,
    SvgpModel,
    VariationalParams,
    model_load,
    model_save,
    svgp_predict,
)
from gpsteer.kernels import KernelParams


def small_model(seed=0):
    rng = np.random.default_rng(seed)
    kernels, variational = [], []
    for _ in range(2):
        kernels.append(KernelParams(
            float(rng.normal()), rng.normal(size=3), float(rng.normal())
        ))
        C = np.tril(rng.normal(size=(4, 4)))
        C[np.diag_indices(4)] = np.exp(rng.normal(size=4))
        variational.append(VariationalParams(
            rng.normal(size=(4, 3)), rng.normal(size=4), C
        ))
    return SvgpModel(3, kernels, variational)


def test_save_load_save_is_byte_identical(tmp_path):
    model = small_model()
    p1 = tmp_path / "a.model"
    p2 = tmp_path / "b.model"
    model_save(model, p1)
    loaded = model_load(p1)
    model_save(loaded, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_round_trip_preserves_all_floats(tmp_path):
    model = small_model(3)
    path = tmp_path / "m.model"
    model_save(model, path)
    loaded = model_load(path)
    for d in range(2):
        assert loaded.kernels[d].log_signal_variance == \
            model.kernels[d].log_signal_variance
        assert np.array_equal(loaded.kernels[d].log_lengthscales,
                              model.kernels[d].log_lengthscales)
        assert np.array_equal(loaded.variational[d].inducing,
                              model.variational[d].inducing)
        assert np.array_equal(loaded.variational[d].cov_factor,
                              model.variational[d].cov_factor)
    rng = np.random.default_rng(1)
    x = rng.normal(size=3)
    m0, v0 = svgp_predict(model, x)
    m1, v1 = svgp_predict(loaded, x)
    assert np.array_equal(m0, m1) and np.array_equal(v0, v1)


def test_negative_inducing_count_rejected(tmp_path):
    model = small_model()
    path = tmp_path / "m.model"
    model_save(model, path)
    text = path.read_text()
    path.write_text(text.replace("M 4", "M -4", 1))
    with pytest.raises(ModelFormatError, match="'M'"):
        model_load(path)


def test_missing_field_is_named(tmp_path):
    model = small_model()
    path = tmp_path / "m.model"
    model_save(model, path)
    lines = path.read_text().splitlines()
    del lines[5]  # the first "M ..." line
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ModelFormatError, match="expected field 'M'"):
        model_load(path)


def test_wrong_header_rejected(tmp_path):
    path = tmp_path / "m.model"
    path.write_text("something-else\n")
    with pytest.raises(ModelFormatError, match="header"):
        model_load(path)


def test_externally_written_file_reproduces_predictions(tmp_path):
    # one output, one inducing point, hand-written per the documented schema
    kp = KernelParams(0.25, np.array([-0.5, 0.125]), -2.0)
    C = np.array([[1.5]])
    vp = VariationalParams(np.array([[0.5, -1.0]]), np.array([2.0]), C)
    reference = SvgpModel(2, [kp], [vp])

    lines = [
        "gpsteer-model-v1",
        "n 2",
        "D 1",
        f"jitter_scale {(1e-6).hex()}",
        "output 0",
        "M 1",
        f"log_signal_variance {(0.25).hex()}",
        f"log_lengthscales {(-0.5).hex()} {(0.125).hex()}",
        f"log_noise_variance {(-2.0).hex()}",
        f"Z {(0.5).hex()} {(-1.0).hex()}",
        f"m {(2.0).hex()}",
        f"C {(1.5).hex()}",
    ]
    path = tmp_path / "hand.model"
    path.write_text("\n".join(lines) + "\n")
    loaded = model_load(path)
    x = np.array([0.2, 0.3])
    m0, v0 = svgp_predict(reference, x)
    m1, v1 = svgp_predict(loaded, x)
    assert np.array_equal(m0, m1) and np.array_equal(v0, v1)
