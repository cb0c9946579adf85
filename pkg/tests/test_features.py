import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prostmri.errors import ConfigError, ContractError, IngestionError, SchemaError
from prostmri.features import (HogParams, hog, load_embeddings, saliency_map, write_embeddings)
from prostmri.linear import LinearModel

from conftest import make_sampleset


def naive_hog(img, p):
    """Loop-by-loop reference descriptor."""
    h, w = len(img), len(img[0])

    def px(r, c):
        return img[min(max(r, 0), h - 1)][min(max(c, 0), w - 1)]

    n = p.n_cells
    hist = [[[0.0] * p.n_bins for _ in range(n)] for _ in range(n)]
    for r in range(h):
        for c in range(w):
            gx = px(r, c + 1) - px(r, c - 1)
            gy = px(r + 1, c) - px(r - 1, c)
            mag = math.hypot(gx, gy)
            ang = math.degrees(math.atan2(gy, gx)) % 180.0
            pos = ang * p.n_bins / 180.0
            k = math.floor(pos)
            f = pos - k
            cell = hist[r // p.cell_px][c // p.cell_px]
            cell[k % p.n_bins] += mag * (1 - f)
            cell[(k + 1) % p.n_bins] += mag * f
    out = []
    b = p.block_cells
    for by in range(p.n_blocks):
        for bx in range(p.n_blocks):
            v = [x for cy in range(b) for cx in range(b) for x in hist[by + cy][bx + cx]]
            norm = math.sqrt(sum(x * x for x in v) + p.epsilon ** 2)
            v = [min(x / norm, p.clip) for x in v]
            norm = math.sqrt(sum(x * x for x in v) + p.epsilon ** 2)
            out += [x / norm for x in v]
    return np.array(out)


def test_default_dim():
    p = HogParams()
    assert p.dim == 26244
    assert hog(np.random.default_rng(0).random((224, 224))).shape == (26244,)


@pytest.mark.parametrize("cell", [8, 16, 28, 32])
@pytest.mark.parametrize("block", [1, 2, 3])
def test_dim_formula(cell, block):
    p = HogParams(cell_px=cell, block_cells=block)
    expected = (224 // cell - block + 1) ** 2 * block ** 2 * 9
    assert p.dim == expected == hog(np.random.default_rng(cell).random((224, 224)), p).size


def test_invalid_params():
    with pytest.raises(ConfigError):
        HogParams(cell_px=9)
    with pytest.raises(ConfigError):
        HogParams(n_bins=1)
    with pytest.raises(ConfigError):
        HogParams(clip=0)


def test_matches_naive_oracle():
    p = HogParams(image_size=32, cell_px=8, block_cells=2, n_bins=9)
    img = np.random.default_rng(1).random((32, 32))
    np.testing.assert_allclose(hog(img, p), naive_hog(img.tolist(), p), rtol=0, atol=1e-12)


def test_constant_image_zero():
    assert not np.any(hog(np.full((224, 224), 0.3)))


def test_vertical_step_edge_energy():
    img = np.zeros((224, 224))
    img[:, 112:] = 1.0
    v = hog(img).reshape(-1, 9)
    energy = (v ** 2).sum(axis=0)
    # horizontal gradient (0 degrees) falls in bin 0
    assert energy.argmax() == 0
    assert energy[0] / energy.sum() >= 0.95


def test_deterministic_and_bounded():
    img = np.random.default_rng(2).random((224, 224))
    a, b = hog(img), hog(img)
    assert a.tobytes() == b.tobytes()
    assert np.all(np.isfinite(a)) and a.min() >= 0 and a.max() <= 1


def _model(weights, p, seed=0):
    rng = np.random.default_rng(seed)
    return LinearModel("svm", weights, 0.7, rng.random(p.dim) * 0.1, rng.random(p.dim) + 0.1, 1.0,
                       source="hog", hog_params=p.to_dict())


def test_saliency_conservation_random():
    p = HogParams()
    gen = np.random.default_rng(3)
    for seed in range(5):
        m = _model(gen.normal(size=p.dim), p, seed)
        img = gen.random((224, 224))
        hm = saliency_map(m, img)
        target = float(m.decision(hog(img, p))[0] - m.bias)
        assert hm.total == pytest.approx(target, rel=1e-9)
        z = m.standardize(hog(img, p))
        assert hm.total == pytest.approx(float(np.dot(m.weights, z)), rel=1e-9)
        assert hm.rendering.min() >= 0 and hm.rendering.max() <= 1


def test_saliency_zero_weights_and_locality():
    p = HogParams()
    img = np.random.default_rng(4).random((224, 224))
    hm = saliency_map(_model(np.zeros(p.dim), p), img)
    assert not np.any(hm.cells) and not np.any(hm.rendering)
    w = np.zeros(p.dim)
    per_block = 4 * 9
    blk = 5 * p.n_blocks + 7                    # block at row 5, col 7
    w[blk * per_block:(blk + 1) * per_block] = 1.0
    cells = saliency_map(_model(w, p), img).cells
    nz = set(zip(*np.nonzero(cells)))
    assert nz <= {(5, 7), (5, 8), (6, 7), (6, 8)} and nz


def test_saliency_dim_mismatch():
    p = HogParams()
    m = _model(np.zeros(10), HogParams(cell_px=16, block_cells=1, n_bins=2, image_size=32))
    with pytest.raises(ContractError):
        saliency_map(m, np.zeros((224, 224)), p)


def test_embeddings_roundtrip_and_errors(tmp_path):
    s = make_sampleset(102, 60)
    rng = np.random.default_rng(5)
    vecs = {i: rng.normal(size=512) for i in s.ids}
    write_embeddings(tmp_path / "e.csv", vecs)
    got = load_embeddings(tmp_path / "e.csv", s)
    assert len(got) == 162 and all(v.shape == (512,) for v in got.values())
    assert all(np.array_equal(got[i], vecs[i]) for i in s.ids)

    del vecs[s.ids[3]]
    write_embeddings(tmp_path / "m.csv", vecs)
    with pytest.raises(IngestionError, match=s.ids[3]):
        load_embeddings(tmp_path / "m.csv", s)

    (tmp_path / "d.csv").write_text("# dim=2\nid,v1,v2\na,1,2\nb,1,2,3\n")
    with pytest.raises(SchemaError, match=":4:"):
        load_embeddings(tmp_path / "d.csv", make_sampleset(1, 1, prefix="x"))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_hog_components_bounded(seed):
    p = HogParams(image_size=64, cell_px=8)
    img = np.random.default_rng(seed).random((64, 64))
    v = hog(img, p)
    assert np.all(np.isfinite(v)) and v.min() >= 0 and v.max() <= 1
