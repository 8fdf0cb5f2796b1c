import io
import struct

import numpy as np
import pytest

from approxtopk.dataset_io import (
    HEADER_SIZE,
    BadMagicError,
    DatasetFormatError,
    NaNPayloadError,
    TruncatedError,
    VectorDataset,
    parse_csv,
    read_csv,
    read_dataset,
    synth_distinct,
    synth_gaussian,
    write_csv,
    write_dataset,
)


def dump(ds):
    buf = io.BytesIO()
    write_dataset(ds, buf)
    return buf.getvalue()


def test_round_trip_bits(tmp_path):
    data = np.array([[0.0, -0.0, np.inf], [-np.inf, 1e-45, 3.4e38]], dtype=np.float32)
    path = tmp_path / "x.atkv"
    write_dataset(VectorDataset(data), path)
    back = read_dataset(path)
    np.testing.assert_array_equal(back.data.view(np.uint32), data.view(np.uint32))


def test_header_layout():
    raw = dump(VectorDataset(np.ones((2, 3), np.float32)))
    assert raw[:4] == b"ATKV" and raw[4] == 1
    assert struct.unpack("<QQ", raw[5:21]) == (2, 3)
    assert len(raw) == 21 + 2 * 3 * 4
    assert np.frombuffer(raw[21:], "<f4").tolist() == [1.0] * 6


def test_empty_is_header_only():
    raw = dump(VectorDataset(np.zeros((0, 5), np.float32)))
    assert len(raw) == HEADER_SIZE == 21
    assert read_dataset(io.BytesIO(raw)).data.shape == (0, 5)


def test_bad_magic():
    raw = bytearray(dump(synth_gaussian(2, 2)))
    raw[0:4] = b"ATKX"
    with pytest.raises(BadMagicError):
        read_dataset(io.BytesIO(bytes(raw)))


def test_bad_version():
    raw = bytearray(dump(synth_gaussian(2, 2)))
    raw[4] = 2
    with pytest.raises(DatasetFormatError):
        read_dataset(io.BytesIO(bytes(raw)))


@pytest.mark.parametrize("cut", [6, 20, 21 + 3, 21 + 15])
def test_truncated(cut):
    raw = dump(synth_gaussian(2, 2))
    with pytest.raises(TruncatedError):
        read_dataset(io.BytesIO(raw[:cut]))


def test_nan_payload():
    raw = bytearray(dump(synth_gaussian(2, 2)))
    raw[21:25] = np.array([np.nan], "<f4").tobytes()
    with pytest.raises(NaNPayloadError):
        read_dataset(io.BytesIO(bytes(raw)))
    with pytest.raises(NaNPayloadError):
        VectorDataset(np.array([[np.nan]]))


def test_dataset_shape():
    with pytest.raises(ValueError):
        VectorDataset(np.zeros(3))


class TestSynthDistinct:
    def test_permutation(self):
        ds = synth_distinct(1, 5, seed=11)
        assert sorted(ds.data[0].tolist()) == [1, 2, 3, 4, 5]

    def test_rows_distinct(self):
        ds = synth_distinct(8, 4096, seed=2)
        for row in ds.data:
            assert np.unique(row).size == 4096
            assert row.min() == 1 and row.max() == 4096

    def test_deterministic_and_chunkable(self):
        a = synth_distinct(6, 100, seed=3).data
        np.testing.assert_array_equal(a, synth_distinct(6, 100, seed=3).data)
        tail = synth_distinct(2, 100, seed=3, first_row=4).data
        np.testing.assert_array_equal(a[4:], tail)
        assert not np.array_equal(a, synth_distinct(6, 100, seed=4).data)

    def test_limits(self):
        with pytest.raises(ValueError):
            synth_distinct(1, 2**24 + 1)
        with pytest.raises(ValueError):
            synth_distinct(1, 0)


class TestCsv:
    def test_round_trip(self, tmp_path):
        recs = [("a=1;b=2", "recall", 0.1 + 0.2, None), ("c", "x", 1 / 3, 1e-17), ("d", "n", 2048, None)]
        text = write_csv(recs)
        assert text.splitlines()[0] == "config,metric,value,stderr"
        back = parse_csv(text)
        assert back == [(c, m, float(v), e) for c, m, v, e in recs]
        path = tmp_path / "r.csv"
        write_csv(recs, path)
        assert read_csv(path) == back

    def test_bad_header(self):
        with pytest.raises(DatasetFormatError):
            parse_csv("a,b\n1,2\n")
