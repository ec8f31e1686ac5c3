import os

import numpy as np
import pytest

from megaquant.archive import (load_basis, load_dataset, load_model,
                               read_container, save_basis, save_dataset,
                               save_model, write_container)
from megaquant.errors import ArchiveError, ChecksumError, VersionError
from megaquant.synthesis import LabelledDataset, SynthesisConfig, generate_dataset


@pytest.fixture()
def dataset(small_basis):
    return generate_dataset(small_basis,
                            SynthesisConfig(n_samples=5, master_seed=2, sobol_skip=1))


def test_container_round_trip(tmp_path, rng):
    path = os.fspath(tmp_path / "x.mqd")
    sections = [("a", rng.random((3, 4))), ("b", rng.random(7))]
    write_container(path, {"kind": "test"}, sections)
    manifest, arrays = read_container(path)
    assert manifest["kind"] == "test"
    for name, arr in sections:
        assert np.array_equal(arrays[name], arr)


def test_write_twice_is_bit_identical(tmp_path, dataset):
    p1, p2 = (os.fspath(tmp_path / n) for n in ("a.mqd", "b.mqd"))
    save_dataset(p1, dataset, stamp={"seed": 1})
    save_dataset(p2, dataset, stamp={"seed": 1})
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_dataset_round_trip(tmp_path, dataset):
    path = os.fspath(tmp_path / "d.mqd")
    save_dataset(path, dataset)
    loaded, manifest = load_dataset(path)
    assert manifest["kind"] == "dataset"
    assert loaded.metabolites == dataset.metabolites
    assert loaded.config == dataset.config
    for a, b in zip(dataset, loaded):
        assert np.array_equal(a.acquisitions.off.values, b.acquisitions.off.values)
        assert np.array_equal(a.clean_acquisitions.diff.values,
                              b.clean_acquisitions.diff.values)
        assert np.array_equal(a.target.values, b.target.values)
        assert a.meta == b.meta


def test_empty_dataset_archive(tmp_path, small_basis):
    path = os.fspath(tmp_path / "e.mqd")
    empty = LabelledDataset([], small_basis.metabolites, small_basis.axis,
                            SynthesisConfig(n_samples=0))
    save_dataset(path, empty)
    loaded, _ = load_dataset(path)
    assert len(loaded) == 0


def test_flipped_payload_byte_detected(tmp_path, dataset):
    path = os.fspath(tmp_path / "d.mqd")
    save_dataset(path, dataset)
    blob = bytearray(open(path, "rb").read())
    blob[-100] ^= 0xFF
    open(path, "wb").write(bytes(blob))
    with pytest.raises(ChecksumError):
        load_dataset(path)


def test_unknown_version_rejected(tmp_path, rng):
    path = os.fspath(tmp_path / "v.mqd")
    write_container(path, {"kind": "test"}, [("a", rng.random(3))])
    blob = open(path, "rb").read()
    patched = blob.replace(b'"format_version":1', b'"format_version":9')
    length = int.from_bytes(blob[4:12], "little") - (len(blob) - len(patched))
    open(path, "wb").write(patched[:4] + length.to_bytes(8, "little") + patched[12:])
    with pytest.raises(VersionError):
        read_container(path)


def test_not_an_archive(tmp_path):
    path = os.fspath(tmp_path / "junk.bin")
    open(path, "wb").write(b"definitely not an archive")
    with pytest.raises(ArchiveError):
        read_container(path)


def test_wrong_kind_rejected(tmp_path, dataset):
    path = os.fspath(tmp_path / "d.mqd")
    save_dataset(path, dataset)
    with pytest.raises(ArchiveError):
        load_basis(path)


def test_basis_round_trip(tmp_path, small_basis):
    path = os.fspath(tmp_path / "b.mqd")
    save_basis(path, small_basis, stamp={"seed": 0})
    loaded, manifest = load_basis(path)
    assert loaded.metabolites == small_basis.metabolites
    assert loaded.intrinsic_fwhm == small_basis.intrinsic_fwhm
    for name in small_basis.metabolites:
        for acq in ("OFF", "ON"):
            assert np.array_equal(loaded.fids[name][acq].samples,
                                  small_basis.fids[name][acq].samples)


def test_model_round_trip(tmp_path, rng):
    path = os.fspath(tmp_path / "m.mqck")
    params = [rng.random((4, 3)), rng.random(3)]
    log = [{"epoch": 0, "train_loss": 0.5}]
    save_model(path, "yae", {"type": "yae"}, params, log, seed=11)
    manifest, loaded = load_model(path)
    assert manifest["arch"] == "yae"
    assert manifest["seed"] == 11
    assert manifest["training_log"] == log
    assert all(np.array_equal(a, b) for a, b in zip(params, loaded))
