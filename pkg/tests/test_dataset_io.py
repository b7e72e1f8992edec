"""
Tests for the packed and per-frame dataset layouts
"""

import numpy as np
import pytest

from src.data.dataset_io import GSQ_MAGIC, dataset_io, decode_gsq, encode_gsq, load_dataset, save_dataset
from src.data.silhouette import GaitDataset
from src.utils.exceptions import ConfigurationError, DatasetError


@pytest.mark.parametrize("fmt", ['gsq', 'pgm'])
def test_save_then_load(tiny_dataset, tmp_path, fmt):
    save_dataset(tiny_dataset, tmp_path / fmt, fmt)
    loaded = load_dataset(tmp_path / fmt)
    assert sorted(s.key for s in loaded) == sorted(s.key for s in tiny_dataset)
    originals = {s.key: s.frames for s in tiny_dataset}
    for seq in loaded:
        np.testing.assert_array_equal(seq.frames, originals[seq.key])


def test_pgm_layout(tiny_dataset, tmp_path):
    save_dataset(GaitDataset(tiny_dataset.sequences[:1]), tmp_path, 'pgm')
    seq = tiny_dataset[0]
    frames = sorted((tmp_path / seq.subject_id / seq.condition_label / seq.view_label).glob('*.pgm'))
    assert [f.name for f in frames] == [f"{i:03d}.pgm" for i in range(len(seq))]


def test_gsq_header():
    payload = encode_gsq(np.zeros((3, 4, 5), dtype=np.uint8))
    assert payload.startswith(GSQ_MAGIC)
    assert len(payload) == len(GSQ_MAGIC) + 6 + 60
    assert decode_gsq(payload).shape == (3, 4, 5)


@pytest.mark.parametrize("payload", [
    b"NOPE!\0" + bytes(6),
    GSQ_MAGIC + b"\x01",
    GSQ_MAGIC + bytes(6),
])
def test_malformed_gsq(payload):
    with pytest.raises(DatasetError):
        decode_gsq(payload)


def test_truncated_gsq_payload():
    with pytest.raises(DatasetError):
        decode_gsq(encode_gsq(np.zeros((2, 3, 3), dtype=np.uint8))[:-1])


def test_encode_requires_uint8():
    with pytest.raises(DatasetError):
        encode_gsq(np.zeros((2, 3, 3), dtype=np.float32))


def test_empty_root(tmp_path):
    assert len(load_dataset(tmp_path)) == 0
    with pytest.raises(DatasetError):
        load_dataset(tmp_path / 'missing')


def test_malformed_file_reported(tmp_path):
    (tmp_path / '001' / 'nm-01').mkdir(parents=True)
    (tmp_path / '001' / 'nm-01' / '090.gsq').write_bytes(b"garbage")
    with pytest.raises(DatasetError):
        load_dataset(tmp_path)


def test_dispatch(tiny_dataset, tmp_path):
    assert dataset_io('save', tmp_path, tiny_dataset) is tiny_dataset
    assert len(dataset_io('load', tmp_path)) == len(tiny_dataset)
    with pytest.raises(ConfigurationError):
        dataset_io('delete', tmp_path)
    with pytest.raises(ConfigurationError):
        dataset_io('save', tmp_path)
    with pytest.raises(ConfigurationError):
        save_dataset(tiny_dataset, tmp_path, 'png')
