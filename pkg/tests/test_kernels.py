import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from casmlab import _kernels
from casmlab._kernels import pure
from oracles import flood_fill_components

BACKENDS = _kernels.backends()


def test_compiled_backend_is_built():
    # The package is installed with its extension; the fallback must be opt-in.
    assert "compiled" in BACKENDS


def test_pure_fallback_selected_by_environment():
    code = "from casmlab import _kernels; print(_kernels.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env={**os.environ, "CASMLAB_PURE": "1"},
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "pure"


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_im2col_col2im_adjoint(name, rng):
    k = BACKENDS[name]
    x = rng.normal(size=(2, 3, 7, 8))
    cols = k.im2col(x, 3, 3, 2)
    g = rng.normal(size=cols.shape)
    back = k.col2im(g, 7, 8, 2)
    # <im2col(x), g> == <x, col2im(g)>
    assert np.isclose((cols * g).sum(), (x * back).sum(), rtol=1e-12)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_im2col_windows(name, rng):
    x = rng.normal(size=(1, 2, 5, 5))
    cols = BACKENDS[name].im2col(x, 2, 3, 1)
    assert cols.shape == (1, 4, 3, 2, 2, 3)
    np.testing.assert_array_equal(cols[0, 2, 1], x[0, :, 2:4, 1:4])


binary_maps = arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12)), elements=st.integers(0, 1))


@given(binary_maps, st.sampled_from([4, 8]))
def test_labels_match_flood_fill(b, conn):
    comps = flood_fill_components(b, conn)
    for k in BACKENDS.values():
        labels, count = k.label_components(b.astype(bool), conn)
        assert count == len(comps)
        for n, comp in enumerate(comps, start=1):
            assert {tuple(p) for p in np.argwhere(labels == n)} == comp


def test_backends_bit_identical():
    if len(BACKENDS) < 2:
        pytest.skip("only one backend available")
    fast = BACKENDS["compiled"]
    rng = np.random.default_rng(7)
    for trial in range(30):
        h, w = (int(v) for v in rng.integers(3, 20, size=2))
        x = rng.normal(size=(2, 3, h, w))
        stride = int(rng.integers(1, 3))
        a, b = pure.im2col(x, 3, 3, stride), fast.im2col(x, 3, 3, stride)
        assert a.tobytes() == b.tobytes()
        g = rng.normal(size=a.shape)
        assert pure.col2im(g, h, w, stride).tobytes() == fast.col2im(g, h, w, stride).tobytes()

        binary = rng.random((h, w)) < 0.5
        for conn in (4, 8):
            la, na = pure.label_components(binary, conn)
            lb, nb = fast.label_components(binary, conn)
            assert na == nb and la.tobytes() == lb.tobytes()

        img = rng.random((3, h, w))
        mask = (rng.random((h, w)) < 0.4).astype(np.uint8)
        for radius in (1, 3):
            oa, da = pure.telea_inpaint(img, mask, radius)
            ob, db = fast.telea_inpaint(img, mask, radius)
            assert da == db and oa.tobytes() == ob.tobytes()
