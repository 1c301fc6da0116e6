import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowembed import field as fld, matrix as mtx, render
from flowembed.errors import FormatError, PreconditionError
from flowembed.spectral import SelectedEmbedding

from conftest import build


def test_noise_deterministic():
    dom = fld.Domain((32, 16))
    a = render.binary_noise(dom, 7)
    b = render.binary_noise(dom, 7)
    assert np.array_equal(a.samples, b.samples)
    assert set(np.unique(a.samples)) <= {0.0, 1.0}
    assert a.samples.shape == (16, 32)
    assert not np.array_equal(a.samples, render.binary_noise(dom, 8).samples)


def test_noise_mean_256():
    dom = fld.Domain((256, 256))
    for seed in range(5):
        assert 0.46 <= render.binary_noise(dom, seed).samples.mean() <= 0.54


def test_noise_single_cell():
    v = render.binary_noise(fld.Domain((1, 1)), 3).samples
    assert v.shape == (1, 1) and v[0, 0] in (0.0, 1.0)


def test_lic_identity_is_noise():
    dom = fld.Domain((9, 7))
    noise = render.binary_noise(dom, 1)
    out = render.lic_image(mtx.identity(63), noise)
    assert np.array_equal(out.samples, noise.samples)


def test_lic_of_ones():
    dom, _, P = build("stuart_vortex", (24, 16), "gaussian", 10)
    out = render.lic_image(P, np.ones(dom.shape))
    assert np.abs(out.samples - 1).max() <= 1e-12


def test_lic_anisotropy():
    dom, _, P = build("constant", (128, 128), "box", 10, params={"value": (1.0, 0.0)})
    img = render.lic_image(P, render.binary_noise(dom, 0)).samples
    c = img - img.mean()
    along = (c[:, 1:] * c[:, :-1]).mean() / c.var()
    across = (c[1:, :] * c[:-1, :]).mean() / c.var()
    assert along >= 0.8
    assert abs(across) <= 0.15


def test_lic_size_mismatch():
    with pytest.raises(PreconditionError):
        render.lic_image(mtx.identity(4), np.zeros(5))


def test_equalize_examples():
    const = render.RenderImage(np.full((4, 4), 0.3))
    assert render.histogram_equalize(const) is const
    two = render.RenderImage(np.r_[np.full(8, 0.2), np.full(8, 0.8)].reshape(4, 4))
    out = render.histogram_equalize(two).samples
    assert set(np.unique(out)) == {0.5, 1.0}
    assert np.all(out[two.samples == 0.2] == 0.5)


def test_equalize_uniform_histogram():
    v = (np.arange(256) + 0.5) / 256
    out = render.histogram_equalize(render.RenderImage(v.reshape(16, 16))).samples.ravel()
    assert np.abs(out - v).max() <= 1 / 256


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_equalize_preserves_order(seed):
    v = np.random.default_rng(seed).random((8, 8))
    out = render.histogram_equalize(render.RenderImage(v)).samples.ravel()
    order = np.argsort(v.ravel())
    assert np.all(np.diff(out[order]) >= 0)
    assert out.min() >= 0 and out.max() <= 1


def test_viridis_reference_points():
    assert render.viridis(0.0) == pytest.approx([0.267, 0.005, 0.329], abs=1e-3)
    assert render.viridis(1.0) == pytest.approx([0.993, 0.906, 0.144], abs=1e-3)
    mid = render.viridis(0.5)
    T = render.VIRIDIS_TABLE
    assert mid == pytest.approx((T[127] + T[128]) / 2, abs=1e-12)
    assert mid == pytest.approx(T[128], abs=5e-3)
    assert render.viridis(128 / 255) == pytest.approx(T[128], abs=1e-12)


def test_viridis_monotone_luminance():
    lum = render.viridis(np.linspace(0, 1, 1001)).sum(axis=1)
    assert np.all(np.diff(lum) >= 0)


def test_transfer_coefficients():
    assert np.array_equal(render.TransferFunction((2, 1, 1)).coefficients(), [0.5, 0.25, 0.25])
    with pytest.raises(PreconditionError):
        render.TransferFunction((0, 0))
    with pytest.raises(PreconditionError):
        render.TransferFunction((1, -1))


def test_composite_examples():
    rng = np.random.default_rng(0)
    v1, v2 = rng.normal(size=(2, 20))
    one = render.composite_transfer([v1], render.TransferFunction((1.0,)))
    assert np.array_equal(one.samples, render.viridis(render.rescale(v1)))
    two = render.composite_transfer([v1, v2], render.TransferFunction((0.7, 0.7)))
    assert np.allclose(two.samples, render.viridis(render.rescale((v1 + v2) / 2)), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), scale=st.floats(1e-6, 1e6))
def test_composite_invariant_to_weight_scale(seed, scale):
    rng = np.random.default_rng(seed)
    vecs = rng.normal(size=(3, 30))
    w = rng.uniform(0.1, 2.0, 3)
    sel = [SelectedEmbedding(i + 1, 0.0, v, a) for i, (v, a) in enumerate(zip(vecs, w))]
    a = render.composite_transfer(sel, render.TransferFunction(tuple(w)), (5, 6))
    b = render.composite_transfer(sel, render.TransferFunction(tuple(w * scale)), (5, 6))
    assert a.samples.tobytes() == b.samples.tobytes()


def test_modulate():
    rgb = render.RenderImage(np.ones((2, 2, 3)), rgb=True)
    out = render.modulate(rgb, np.array([[0.0, 1.0], [0.5, 1.0]]))
    assert np.allclose(out.samples[..., 0], [[0.5, 1.0], [0.75, 1.0]])


def test_segmentation():
    v = np.array([0.0, 0.1, 0.2, 5.0, 5.1, 9.0])
    assert render.segment_by_gaps(v, 2).tolist() == [0, 0, 0, 1, 1, 2]
    assert render.segment_by_gaps(np.ones(4), 3).tolist() == [0, 0, 0, 0]


def test_pgm_bytes(tmp_path):
    path = render.export_image(render.RenderImage(np.array([[0.0, 1.0], [0.5, 0.25]])),
                               tmp_path / "a.pgm")
    raw = path.read_bytes()
    assert raw == b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64])
    assert len(raw) == 15
    assert np.array_equal(render.read_image(path), [[0, 255], [128, 64]])


def test_ppm_round_trip(tmp_path):
    rgb = render.viridis(np.linspace(0, 1, 12)).reshape(3, 4, 3)
    path = render.export_image(render.RenderImage(rgb, rgb=True), tmp_path / "a.ppm")
    assert path.read_bytes()[:11] == b"P6\n4 3\n255\n"
    assert np.array_equal(render.read_image(path), np.round(rgb * 255).astype(np.uint8))


def test_bad_rasters():
    with pytest.raises(PreconditionError):
        render.RenderImage(np.array([[1.5]]))
    with pytest.raises(PreconditionError):
        render.RenderImage(np.array([[np.nan]]))
    with pytest.raises(PreconditionError):
        render.RenderImage(np.zeros((2, 2, 2)), rgb=True)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), rgb=st.booleans(),
       shape=st.tuples(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5)))
def test_volume_round_trip(tmp_path_factory, seed, rgb, shape):
    vol = np.random.default_rng(seed).random(shape + ((3,) if rgb else ())).astype(np.float32)
    path = tmp_path_factory.mktemp("v") / "a.vol"
    written = render.export_volume(vol, path)
    assert len(written) == 4 and all(p.exists() for p in written)
    back = render.read_volume(path)
    assert back.dtype == np.float32
    assert back.tobytes() == vol.tobytes()


def test_volume_size_128(tmp_path):
    vol = np.zeros((128, 128, 128), dtype=np.float32)
    path = tmp_path / "big.vol"
    render.export_volume(vol, path, slices=False)
    header = b"VOL1 128 128 128 1\n"
    assert path.stat().st_size == len(header) + 128 ** 3 * 4
    assert path.read_bytes()[: len(header)] == header


def test_volume_truncated(tmp_path):
    path = tmp_path / "a.vol"
    render.export_volume(np.zeros((2, 2, 2)), path, slices=False)
    path.write_bytes(path.read_bytes()[:-2])
    with pytest.raises(FormatError):
        render.read_volume(path)
