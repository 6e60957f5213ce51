import struct

import numpy as np
import pytest

from dlad import checkpoint
from dlad.errors import FormatError
from dlad.rng import stream
from dlad.tensor import ModelSpec, init_params


@pytest.fixture
def model():
    spec = ModelSpec(5, ((4, "relu"), (3, "tanh")), 2)
    return spec, init_params(spec, stream(3))


def test_round_trip_is_bit_exact(model, tmp_path):
    spec, params = model
    checkpoint.save(tmp_path / "m.ckpt", spec, params, {"client": 3})
    spec2, params2, meta = checkpoint.load(tmp_path / "m.ckpt")
    assert spec2 == spec
    assert meta == {"client": 3}
    assert params2.digest() == params.digest()
    for a, b in zip(params.arrays(), params2.arrays()):
        np.testing.assert_array_equal(a, b)


def test_equal_models_equal_bytes(model):
    spec, params = model
    assert checkpoint.dumps(spec, params, {"b": 1, "a": 2}) == checkpoint.dumps(spec, params.copy(), {"a": 2, "b": 1})


def test_sigmoid_head_survives(tmp_path):
    spec = ModelSpec(3, ((2, "relu"),), 1, "sigmoid")
    params = init_params(spec, stream(0))
    spec2, _, _ = checkpoint.loads(checkpoint.dumps(spec, params))
    assert spec2.head == "sigmoid"


def test_bad_magic(model):
    raw = checkpoint.dumps(*model)
    with pytest.raises(FormatError, match="magic"):
        checkpoint.loads(b"NOTACKPT" + raw[8:])


def test_bad_version(model):
    raw = checkpoint.dumps(*model)
    bumped = raw[:8] + struct.pack("<I", 99) + raw[12:]
    with pytest.raises(FormatError, match="version 99"):
        checkpoint.loads(bumped)


def test_truncated_and_trailing(model):
    raw = checkpoint.dumps(*model)
    with pytest.raises(FormatError, match="truncated"):
        checkpoint.loads(raw[:-8])
    with pytest.raises(FormatError, match="trailing"):
        checkpoint.loads(raw + b"\0" * 8)
