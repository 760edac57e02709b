import numpy as np
import pytest

from koopspec.textio import FormatError, dumps, loads


def test_round_trip_exact():
    tensors = {"a": np.array(np.pi), "b": np.arange(6.0).reshape(2, 3) / 7, "c": np.zeros((0,))}
    text = dumps({"kind": "demo", "n": 3}, tensors)
    assert text.startswith("# koopspec v1\n@kind demo\n@n 3\n") and text.endswith("\n")
    meta, back = loads(text)
    assert meta == {"kind": "demo", "n": "3"}
    for k, v in tensors.items():
        assert back[k].shape == v.shape
        np.testing.assert_array_equal(back[k], v)


def test_errors():
    with pytest.raises(FormatError, match="header"):
        loads("nope\n")
    with pytest.raises(FormatError, match="expects 4 values"):
        loads("# koopspec v1\nx 2,2 1.0 2.0\n")
    with pytest.raises(FormatError, match="invalid key"):
        dumps({}, {"a b": np.zeros(1)})
    with pytest.raises(FormatError, match="newline"):
        dumps({"k": "a\nb"}, {})
