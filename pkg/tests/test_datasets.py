import filecmp
import json
from pathlib import Path

import numpy as np
import pytest

from cannlab.datasets import (
    MalformedRow,
    MissingFile,
    NonMonotoneParams,
    NoTestSamples,
    RUBBER_MODES,
    generate_synthetic,
    invariant_plane_eval,
    load_dataset,
    reference_model,
    train_test_split,
    write_dataset,
)
from cannlab.mechanics import LoadingMode
from cannlab.model import mooney_rivlin, neo_hookean
from cannlab.training import fit_metrics, predict_curve

DATA = Path(__file__).parent / "data"


def test_load_rubber_fixture():
    ds = load_dataset(DATA / "rubber" / "manifest.json")
    assert ds.modes == RUBBER_MODES
    assert [len(s) for s in ds.samples] == [15, 15, 15]
    assert ds.unit == "MPa"
    assert reference_model(ds).fingerprint == mooney_rivlin().fingerprint


def test_load_brain_fixture():
    ds = load_dataset(DATA / "brain" / "manifest.json")
    assert len(ds.modes) == 3
    assert all(len(s) == 17 for s in ds.samples)
    assert LoadingMode.SIMPLE_SHEAR in ds.modes


def _write(tmp_path, rows, header="param,stress"):
    (tmp_path / "manifest.json").write_text(json.dumps(
        {"name": "x", "unit": "kPa", "modes": [{"mode": "pure_shear", "csv": "ps.csv"}]}))
    (tmp_path / "ps.csv").write_text(header + "\n" + "\n".join(rows) + "\n")
    return tmp_path / "manifest.json"


def test_malformed_row_reports_line(tmp_path):
    with pytest.raises(MalformedRow) as err:
        load_dataset(_write(tmp_path, ["1.0,0.0", "abc,1.0"]))
    assert err.value.line == 3
    assert "abc,1.0" in str(err.value)


def test_bad_header_and_split_tag(tmp_path):
    with pytest.raises(MalformedRow):
        load_dataset(_write(tmp_path, ["1.0,0.0"], header="x,y"))
    with pytest.raises(MalformedRow):
        load_dataset(_write(tmp_path, ["1.0,0.0,holdout"], header="param,stress,split"))


def test_comments_and_blank_lines(tmp_path):
    ds = load_dataset(_write(tmp_path, ["# a comment", "", "1.0,0.0", "1.2,0.3"]))
    np.testing.assert_array_equal(ds["pure_shear"].params, [1.0, 1.2])


def test_non_monotone(tmp_path):
    with pytest.raises(NonMonotoneParams):
        load_dataset(_write(tmp_path, ["1.2,0.3", "1.1,0.2"]))


def test_missing_files(tmp_path):
    with pytest.raises(MissingFile):
        load_dataset(tmp_path / "nope.json")
    manifest = _write(tmp_path, ["1.0,0.0"])
    (tmp_path / "ps.csv").unlink()
    with pytest.raises(MissingFile):
        load_dataset(manifest)


def test_synthetic_self_consistent():
    mr = mooney_rivlin()
    params = np.linspace(1.1, 3.0, 15)
    ds = generate_synthetic(mr, modes=[LoadingMode.UNIAXIAL_TENSION], params=params)
    r2, mse = fit_metrics(predict_curve(mr, "uniaxial_tension", params), ds.samples[0].stress)
    assert r2 == 1.0 and mse == 0.0
    at_one = generate_synthetic(mr, modes=["uniaxial_tension"], params=[1.0, 1.5])
    assert abs(at_one.samples[0].stress[0]) <= 1e-15


def test_regenerate_identical_files(tmp_path):
    for d in ("a", "b"):
        write_dataset(generate_synthetic(mooney_rivlin(), n=15, name="mr"), tmp_path / d)
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert not cmp.diff_files and not cmp.left_only
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_write_load_roundtrip_exact(tmp_path):
    ds = generate_synthetic(neo_hookean(), modes=tuple(LoadingMode), n=9)
    back = load_dataset(write_dataset(ds, tmp_path))
    for a, b in zip(ds.samples, back.samples):
        np.testing.assert_array_equal(a.params, b.params)
        np.testing.assert_array_equal(a.stress, b.stress)


def test_train_test_split():
    ds = load_dataset(DATA / "rubber" / "manifest.json")
    train, test = train_test_split(ds, require_test=True)
    assert [len(s) for s in train.samples] == [12, 12, 12]
    assert [len(s) for s in test.samples] == [3, 3, 3]
    assert np.all(np.diff(test.samples[0].params) > 0)
    brain = load_dataset(DATA / "brain" / "manifest.json")
    _, empty = train_test_split(brain)
    assert all(len(s) == 0 for s in empty.samples)
    with pytest.raises(NoTestSamples):
        train_test_split(brain, require_test=True)


def test_plane_eval_self_is_zero():
    plane = invariant_plane_eval(mooney_rivlin(), mooney_rivlin(), 3.0, 40)
    assert plane.max_rel_err == 0.0
    assert plane.pred.shape == (40, 40)


def test_plane_csv_shape_and_corners(tmp_path):
    plane = invariant_plane_eval(neo_hookean(0.4), mooney_rivlin(), 3.0, 12)
    path = plane.to_csv(tmp_path / "plane.csv")
    lines = path.read_text().splitlines()
    assert len(lines) == 12 * 12 + 1
    # a = -1/2 column is uniaxial tension, a = 1 column is equibiaxial
    np.testing.assert_allclose(plane.pred[:, 0], predict_curve(neo_hookean(0.4), "uniaxial_tension", plane.lam1),
                               rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(plane.truth[:, -1], predict_curve(mooney_rivlin(), "equibiaxial", plane.lam1),
                               rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(plane.I1[0], 3.0)


def test_plane_eval_argument_checks():
    with pytest.raises(ValueError):
        invariant_plane_eval(neo_hookean(), neo_hookean(), 1.0, 10)


def test_summary_lists_modes():
    text = load_dataset(DATA / "rubber" / "manifest.json").summary()
    assert "pure_shear: 15 points" in text
