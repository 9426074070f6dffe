import itertools

import pytest

from rate_region.errors import ConfigInfeasibleError, InvalidParametersError
from storage_sim.erasure_code import MDSCode

MESSAGE = bytes(range(256)) * 3 + b"tail"


def test_any_k_shares_recover_the_message():
    code = MDSCode(6, 3)
    shares = code.encode(MESSAGE)
    assert len(shares) == 6
    assert all(len(share) == code.share_length(len(MESSAGE)) for share in shares)
    for chosen in itertools.combinations(range(6), 3):
        assert code.decode({i: shares[i] for i in chosen}, len(MESSAGE)) == MESSAGE


def test_code_is_systematic():
    code = MDSCode(4, 2)
    shares = code.encode(b"abcdef")
    assert shares[0] + shares[1] == b"abcdef"


def test_single_parity_is_the_xor_of_the_data():
    shares = MDSCode(3, 2).encode(b"\x01\x02\xf0\x0f")
    assert shares[2] == bytes([0x01 ^ 0xf0, 0x02 ^ 0x0f])


def test_repetition_code():
    shares = MDSCode(3, 1).encode(b"hello")
    assert shares == [b"hello"] * 3


@pytest.mark.parametrize("n, k, lost", [(6, 3, 4), (3, 2, 0), (2, 1, 1), (5, 4, 2)])
def test_rebuild_share(n, k, lost):
    code = MDSCode(n, k)
    shares = code.encode(MESSAGE)
    survivors = {i: share for i, share in enumerate(shares) if i != lost}
    assert code.rebuild_share(survivors, lost, len(MESSAGE)) == shares[lost]


def test_empty_message():
    code = MDSCode(3, 2)
    shares = code.encode(b"")
    assert shares == [b"", b"", b""]
    assert code.decode({1: b"", 2: b""}, 0) == b""


def test_decode_errors():
    code = MDSCode(4, 2)
    shares = code.encode(MESSAGE)
    with pytest.raises(InvalidParametersError):
        code.decode({0: shares[0]}, len(MESSAGE))
    with pytest.raises(InvalidParametersError):
        code.decode({0: shares[0], 7: shares[1]}, len(MESSAGE))
    with pytest.raises(InvalidParametersError):
        code.decode({0: shares[0], 1: shares[1][:-1]}, len(MESSAGE))
    with pytest.raises(InvalidParametersError):
        code.decode({0: shares[0], 1: shares[1]}, 10 * len(MESSAGE))


@pytest.mark.parametrize("n, k", [(3, 0), (2, 3), (256, 2)])
def test_invalid_code_dimensions(n, k):
    with pytest.raises(ConfigInfeasibleError):
        MDSCode(n, k)
