import os

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from vsad import formats
from vsad.codebook import build_codebook
from vsad.core import PatchManifest
from vsad.errors import BadMagic, InvariantViolation, NonFinite, ParseError, TruncatedFile, UnsupportedVersion

HC = [HealthCheck.function_scoped_fixture]


def worked_codebook():
    f = np.array([[0.0], [1.0], [3.0]])
    p = np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]])
    return build_codebook(f, p)


def test_bundle_round_trip_float32(tmp_path):
    rng = np.random.default_rng(0)
    desc = rng.normal(size=(3, 2))
    prob = rng.dirichlet(np.ones(4), size=3)
    path = tmp_path / "b.vsbn"
    formats.write_bundle(desc, prob, path)
    d2, p2 = formats.read_bundle(path)
    np.testing.assert_array_equal(d2, desc.astype(np.float32))
    np.testing.assert_array_equal(p2, prob.astype(np.float32))


def test_bundle_sizes(tmp_path):
    path = tmp_path / "one.vsbn"
    formats.write_bundle(np.array([[1.0]]), np.array([[1.0]]), path)
    assert os.path.getsize(path) == 32
    formats.write_bundle(np.zeros((0, 3)), np.zeros((0, 2)), path)
    assert os.path.getsize(path) == 24
    assert formats.read_bundle(path)[0].shape == (0, 3)


def test_bundle_header_is_little_endian():
    raw = formats.bundle_bytes(np.ones((2, 3)), np.ones((2, 1)))
    assert raw[:4] == b"VSBN"
    assert raw[4:8] == (1).to_bytes(4, "little")
    assert raw[8:16] == (2).to_bytes(8, "little")
    assert raw[16:20] == (3).to_bytes(4, "little")
    assert raw[20:24] == (1).to_bytes(4, "little")


def test_bundle_corruption():
    raw = formats.bundle_bytes(np.ones((2, 2)), np.full((2, 2), 0.5))
    with pytest.raises(BadMagic):
        formats.parse_bundle(b"XXXX" + raw[4:])
    with pytest.raises(TruncatedFile):
        formats.parse_bundle(raw[:-4])
    with pytest.raises(TruncatedFile):
        formats.parse_bundle(raw[:10])
    with pytest.raises(UnsupportedVersion):
        formats.parse_bundle(raw[:4] + (2).to_bytes(4, "little") + raw[8:])


def test_non_finite_is_rejected_before_writing(tmp_path):
    path = tmp_path / "x.vsbn"
    with pytest.raises(NonFinite):
        formats.write_bundle(np.array([[np.inf]]), np.array([[1.0]]), path)
    assert not path.exists()


def test_codebook_round_trip(tmp_path):
    cb = worked_codebook()
    formats.write_codebook(cb, tmp_path / "cb.json")
    back = formats.read_codebook(tmp_path / "cb.json")
    for name in ("pi", "mu", "sigma", "mass"):
        np.testing.assert_allclose(getattr(back, name), getattr(cb, name), rtol=0, atol=1e-15)
    np.testing.assert_array_equal(back.active, cb.active)


def test_codebook_invariants():
    doc = formats.codebook_dict(worked_codebook())
    bad = dict(doc, pi=[0.7, 0.7])
    with pytest.raises(InvariantViolation):
        formats.codebook_from_dict(formats._jsonable(bad))
    bad = dict(doc, sigma=[[0.0], [1.0]])
    with pytest.raises(InvariantViolation):
        formats.codebook_from_dict(formats._jsonable(bad), variance_floor=1e-5)
    with pytest.raises(ParseError):
        formats.codebook_from_dict({"format": "something-else"})


def test_manifest_text_round_trip():
    man = PatchManifest.from_counts(["a", "b c"], [3, 0], [1, None])
    assert formats.parse_manifest(formats.manifest_text(man)) == man
    with pytest.raises(ParseError):
        formats.parse_manifest("a\t0\n")


ids = st.text(st.characters(blacklist_categories=("Cs", "Cc")), min_size=1, max_size=8)


@settings(max_examples=100, deadline=None, suppress_health_check=HC)
@given(n=st.integers(0, 12), d=st.integers(1, 5), k=st.integers(0, 5), seed=st.integers(0, 2**31))
def test_bundle_round_trip_property(tmp_path, n, d, k, seed):
    rng = np.random.default_rng(seed)
    desc = rng.normal(scale=100, size=(n, d)).astype(np.float32)
    prob = rng.random((n, k)).astype(np.float32)
    path = tmp_path / "p.vsbn"
    formats.write_bundle(desc, prob, path)
    d2, p2 = formats.read_bundle(path)
    np.testing.assert_array_equal(d2, desc)
    np.testing.assert_array_equal(p2, prob)


@settings(max_examples=100, deadline=None, suppress_health_check=HC)
@given(n=st.integers(3, 40), d=st.integers(1, 4), k=st.integers(1, 6), seed=st.integers(0, 2**31))
def test_codebook_round_trip_property(tmp_path, n, d, k, seed):
    rng = np.random.default_rng(seed)
    cb = build_codebook(rng.normal(size=(n, d)), rng.dirichlet(np.ones(k), size=n))
    formats.write_codebook(cb, tmp_path / "c.json")
    back = formats.read_codebook(tmp_path / "c.json")
    for name in ("pi", "mu", "sigma", "mass"):
        np.testing.assert_array_equal(getattr(back, name), getattr(cb, name))


@settings(max_examples=100, deadline=None, suppress_health_check=HC)
@given(st.lists(st.tuples(ids, st.integers(0, 5), st.one_of(st.none(), st.integers(0, 9))),
                max_size=10, unique_by=lambda t: t[0]))
def test_manifest_round_trip_property(tmp_path, rows):
    rows = [r for r in rows if "\t" not in r[0] and r[0].strip() == r[0] and "\n" not in r[0]
            and "\r" not in r[0] and r[0] != ""]
    man = PatchManifest.from_counts([r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows])
    formats.write_manifest(man, tmp_path / "m.tsv")
    assert formats.read_manifest(tmp_path / "m.tsv") == man


def test_features_and_selection_files(tmp_path):
    x = np.arange(6, dtype=float).reshape(2, 3)
    formats.write_features(["a", "b"], x, tmp_path / "f.vsbn", [0, 1])
    man, back = formats.read_features(tmp_path / "f.vsbn")
    np.testing.assert_array_equal(back, x)
    assert man.image_ids == ("a", "b")
    formats.write_selection([3, 0, 7], tmp_path / "s.txt")
    assert (tmp_path / "s.txt").read_text() == "3\n0\n7\n"
    assert formats.read_selection(tmp_path / "s.txt") == (3, 0, 7)


def test_json_is_deterministic():
    doc = {"b": np.float64(0.1), "a": np.arange(3)}
    assert formats.dumps(doc) == formats.dumps(dict(reversed(list(doc.items()))))
