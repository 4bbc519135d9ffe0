import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from psrt.container import (
    MAGIC,
    Container,
    ContainerError,
    dataset_from_container,
    dataset_to_container,
    decode,
    encode,
    image_from_container,
    read_container,
    write_container,
)
from psrt.simulator import PhantomSpec, SamplingSpec, simulate


def test_empty_roundtrip(tmp_path):
    p = tmp_path / "e.psrc"
    write_container(p, {}, {})
    assert p.read_bytes() == MAGIC + struct.pack("<HHH", 1, 0, 0)
    c = read_container(p)
    assert c.arrays == {} and c.metadata == {}


def test_complex_2x3_layout_and_roundtrip(tmp_path):
    a = np.arange(6).reshape(2, 3) + 1j * (np.arange(6).reshape(2, 3) - 0.5)
    buf = encode({"a": a}, {"k": "v"})
    # hand-assembled reference bytes
    ref = MAGIC + struct.pack("<HH", 1, 1) + b"\x01a" + bytes([0, 2]) + struct.pack("<QQ", 2, 3)
    ref += b"".join(struct.pack("<dd", z.real, z.imag) for z in a.ravel())
    ref += struct.pack("<H", 1) + struct.pack("<H", 1) + b"k" + struct.pack("<H", 1) + b"v"
    assert buf == ref
    p = tmp_path / "a.psrc"
    write_container(p, {"a": a}, {"k": "v"})
    b = read_container(p)["a"]
    assert b.dtype == np.complex128 and b.tobytes() == a.tobytes()


def test_bool_and_float_codes():
    buf = encode({"m": np.array([True, False]), "f": np.array([1.5])})
    c = decode(buf)
    assert c["m"].dtype == bool and list(c["m"]) == [True, False]
    assert c["f"].dtype == np.float64 and c["f"][0] == 1.5


@settings(max_examples=40, deadline=None)
@given(
    arr=st.one_of(
        hnp.arrays(np.complex128, hnp.array_shapes(min_dims=0, max_dims=3, max_side=4)),
        hnp.arrays(np.float64, hnp.array_shapes(min_dims=0, max_dims=3, max_side=4)),
        hnp.arrays(np.bool_, hnp.array_shapes(min_dims=0, max_dims=3, max_side=4)),
    ),
    meta=st.dictionaries(st.text(max_size=8), st.text(max_size=16), max_size=3),
)
def test_roundtrip_is_bit_exact(arr, meta):
    c = decode(encode({"x": arr}, meta))
    assert c["x"].shape == arr.shape and c["x"].dtype == arr.dtype
    assert c["x"].tobytes() == arr.tobytes()  # NaN payloads included
    assert c.metadata == meta


def test_truncated_payload_reports_counts():
    buf = encode({"a": np.zeros((4, 4), complex)})
    with pytest.raises(ContainerError) as info:
        decode(buf[:40])
    msg = str(info.value)
    assert "expected 256 bytes" in msg and "found" in msg
    assert info.value.offset == 4 + 4 + 2 + 2 + 16


def test_bad_magic_and_version():
    with pytest.raises(ContainerError, match="bad magic") as info:
        decode(b"NOPE\x01\x00\x00\x00\x00\x00")
    assert info.value.offset == 0
    with pytest.raises(ContainerError, match="unsupported version"):
        decode(MAGIC + struct.pack("<HHH", 7, 0, 0))
    with pytest.raises(ContainerError, match="truncated"):
        decode(MAGIC[:2])


def test_duplicate_names_and_trailing_bytes():
    one = encode({"a": np.zeros(1)})
    body = one[8:-2]
    dup = MAGIC + struct.pack("<HH", 1, 2) + body + body + struct.pack("<H", 0)
    with pytest.raises(ContainerError, match="duplicate"):
        decode(dup)
    with pytest.raises(ContainerError, match="trailing"):
        decode(one + b"\x00")


def test_unknown_dtype_code():
    buf = bytearray(encode({"a": np.zeros(1)}))
    buf[8 + 2] = 9
    with pytest.raises(ContainerError, match="dtype code 9"):
        decode(bytes(buf))


def test_dataset_roundtrip(tmp_path):
    ds = simulate(PhantomSpec(nx=16, ny=16, seed=0), SamplingSpec(nkspc=3), coils=3, sigma2=1e-4)
    c = dataset_to_container(ds)
    write_container(tmp_path / "d.psrc", c.arrays, c.metadata)
    back = dataset_from_container(read_container(tmp_path / "d.psrc"))
    assert np.array_equal(back.kspace, ds.kspace)
    assert np.array_equal(back.mask, ds.mask)
    assert np.array_equal(back.nav.data, ds.nav.data)
    assert np.array_equal(back.nav.frame_map, ds.nav.frame_map)
    assert np.array_equal(back.schedule, ds.schedule)
    assert back.sigma2 == ds.sigma2 and back.meta["nkspc"] == 3.0
    img, shape = image_from_container(c)
    assert shape == (16, 16) and img is c["truth"]


def test_missing_arrays_rejected():
    with pytest.raises(ValueError, match="kspace"):
        dataset_from_container(Container())
    with pytest.raises(ValueError, match="neither"):
        image_from_container(Container())
