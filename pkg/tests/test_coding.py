import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from overfit_codec.arm import ArmNet, laplace_rate_bits
from overfit_codec.coding.bitstream import (
    MAGIC,
    BitstreamError,
    BitstreamHeader,
    NetworkEntry,
    header_size,
    parse,
    serialize,
)
from overfit_codec.coding.entropy import (
    LATENT_ALPHABET,
    WEIGHT_ALPHABET,
    decode_value,
    encode_value,
    laplace_table,
)
from overfit_codec.coding.latents import decode_latents, encode_latents, encode_level
from overfit_codec.coding.rangecoder import (
    TOTAL,
    DecodeError,
    RangeDecoder,
    RangeEncoder,
    check_cdf,
    rc_decode,
    rc_encode,
)
from overfit_codec.coding.weights import (
    Q_CANDIDATES,
    QuantizedWeights,
    code_network,
    decode_network,
    quantize_network,
    quantize_weights,
    scale_to_fixed,
    weight_rate_bits,
)
from overfit_codec.latent import LatentPyramid, level_shapes


def random_cdf(rng, n):
    freq = rng.integers(1, 1000, size=n).astype(float)
    freq = np.maximum(1, np.floor(freq / freq.sum() * (TOTAL - n))).astype(np.int64)
    freq[0] += TOTAL - freq.sum()
    return np.concatenate([[0], np.cumsum(freq)])


# -- range coder ----------------------------------------------------------------


def test_range_coder_round_trip(rng):
    cdfs = [random_cdf(rng, int(rng.integers(2, 40))) for _ in range(2000)]
    symbols = [int(rng.integers(0, len(c) - 1)) for c in cdfs]
    data = rc_encode(symbols, cdfs)
    assert rc_decode(data, cdfs) == symbols
    ideal = -sum(math.log2((c[s + 1] - c[s]) / TOTAL) for s, c in zip(symbols, cdfs))
    assert len(data) <= ideal / 8 * 1.01 + 8


def test_range_coder_carry_propagation():
    # many near-certain symbols at the top of the range force carries
    cdf = np.array([0, 1, TOTAL])
    symbols = [1] * 5000 + [0] + [1] * 5000
    cdfs = [cdf] * len(symbols)
    assert rc_decode(rc_encode(symbols, cdfs), cdfs) == symbols


def test_range_coder_empty_stream_is_four_bytes():
    assert len(rc_encode([], [])) == 4
    assert rc_decode(rc_encode([], []), []) == []


def test_range_decoder_truncated():
    cdf = np.array([0, 100, TOTAL])
    cdfs = [cdf] * 200
    data = rc_encode([0] * 200, cdfs)
    with pytest.raises(DecodeError):
        rc_decode(data[:-3], cdfs)
    with pytest.raises(DecodeError):
        rc_decode(data + b"\x00", cdfs)


def test_check_cdf():
    check_cdf([0, 10, TOTAL])
    for bad in ([1, TOTAL], [0, 5, 5, TOTAL], [0, 100]):
        with pytest.raises(ValueError):
            check_cdf(bad)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 2**32 - 1)), min_size=1, max_size=300))
def test_range_coder_property(items):
    cdfs, symbols = [], []
    for s, seed in items:
        cdf = random_cdf(np.random.default_rng(seed), 6)
        cdfs.append(cdf)
        symbols.append(s)
    assert rc_decode(rc_encode(symbols, cdfs), cdfs) == symbols


# -- Laplace tables ---------------------------------------------------------------


@pytest.mark.parametrize("mu,b", [(0.0, 1.0), (3.3, 0.01), (-100.2, 40.0), (0.5, 1e-3), (250.0, 3.0), (0.0, 5000.0)])
def test_table_is_valid(mu, b):
    lo, hi = LATENT_ALPHABET
    t = laplace_table(mu, b, lo, hi)
    check_cdf(t.cum)
    assert lo <= t.kmin and t.kmax <= hi
    assert t.escape_freq >= 1


def test_table_follows_distribution():
    t = laplace_table(0.2, 2.0, *LATENT_ALPHABET)
    for k in range(-5, 6):
        cum, freq = t.interval(k)
        p = math.exp(-laplace_rate_bits(k, (0.2, 2.0)) * math.log(2))
        assert abs(freq / TOTAL - p) < 3 / TOTAL


def test_table_rejects_bad_parameters():
    with pytest.raises(ValueError):
        laplace_table(float("nan"), 1.0, *LATENT_ALPHABET)
    with pytest.raises(ValueError):
        laplace_table(0.0, 0.0, *LATENT_ALPHABET)


def test_escape_round_trip():
    t = laplace_table(0.0, 0.5, *WEIGHT_ALPHABET)
    values = [0, 1, -1, 200, -32768, 32767, 5]
    enc = RangeEncoder()
    for v in values:
        encode_value(enc, t, v)
    dec = RangeDecoder(enc.finish())
    assert [decode_value(dec, t) for _ in values] == values
    assert dec.exhausted()


def test_escape_out_of_range():
    t = laplace_table(0.0, 0.5, *WEIGHT_ALPHABET)
    with pytest.raises(ValueError):
        encode_value(RangeEncoder(), t, 40000)


@settings(max_examples=80, deadline=None)
@given(st.floats(-300, 300), st.floats(1e-3, 1e4), st.integers(-256, 255))
def test_any_value_round_trips(mu, b, v):
    t = laplace_table(mu, b, *LATENT_ALPHABET)
    enc = RangeEncoder()
    encode_value(enc, t, v)
    dec = RangeDecoder(enc.finish())
    assert decode_value(dec, t) == v


# -- weights ----------------------------------------------------------------------


def test_quantize_weights_step_and_scale(rng):
    w = rng.normal(scale=0.1, size=50)
    qw = quantize_weights(w, 8)
    assert qw.step == 2**-8
    assert np.all(np.abs(qw.dequantize() - w) <= 2**-9 + 1e-15)
    assert qw.scale_fp == scale_to_fixed(qw.ints)
    assert qw.scale_fp == max(1, round(np.mean(np.abs(qw.ints)) * 16))
    with pytest.raises(ValueError):
        quantize_weights(w, 20)


def test_scale_fixed_point_clamps():
    assert scale_to_fixed(np.zeros(4, dtype=np.int64)) == 1
    assert scale_to_fixed(np.full(3, 30000)) == 65535


def test_quantize_network_matches_exhaustive_sweep(rng):
    w = rng.normal(scale=0.2, size=40)
    target = rng.normal(scale=0.2, size=40)
    lam, n_pixels = 5e-3, 64

    def evaluate(v):
        return float(np.mean((v - target) ** 2))

    best_q, best_cost = None, math.inf
    for q in Q_CANDIDATES:
        qw = quantize_weights(w, q)
        cost = evaluate(qw.dequantize()) + lam * weight_rate_bits(qw) / n_pixels
        if cost < best_cost:
            best_q, best_cost = q, cost
    assert quantize_network(w, evaluate, lam, n_pixels).q == best_q


def test_quantize_network_tie_keeps_coarse_step(rng):
    w = rng.normal(size=10)
    assert quantize_network(w, lambda v: 0.0, 0.0, 1).q == Q_CANDIDATES[0]


def test_quantize_network_prefers_fine_step_without_rate_cost(rng):
    w = rng.normal(size=30)
    chosen = quantize_network(w, lambda v: float(np.sum((v - w) ** 2)), 0.0, 1)
    assert chosen.q == Q_CANDIDATES[-1]


def test_network_stream_round_trip(rng):
    qw = quantize_weights(rng.normal(scale=0.3, size=300), 10)
    data = code_network(qw)
    back = decode_network(data, 300, qw.q, qw.scale_fp)
    assert back == qw
    assert len(data) <= 1.02 * weight_rate_bits(qw) / 8 + 40
    with pytest.raises(DecodeError):
        decode_network(data, 299, qw.q, qw.scale_fp)


def test_empty_network():
    qw = QuantizedWeights(6, np.zeros(0, dtype=np.int64), 1)
    assert decode_network(code_network(qw), 0, 6, 1) == qw


# -- latents ----------------------------------------------------------------------


def trained_like_arm(context_size, rng):
    net = ArmNet(context_size, rng)
    last = net.layers[-1]
    last.weight.value[...] = rng.normal(scale=0.05, size=last.weight.value.shape)
    last.weight.value[0, :] = 0.0
    return net


def test_latent_round_trip_and_rate(rng):
    net = trained_like_arm(24, rng)
    shapes = level_shapes(20, 13, 4)
    pyr = LatentPyramid([np.round(rng.laplace(scale=1.5, size=s)) for s in shapes])
    pyr.levels[3][...] = 0
    streams, zero = encode_latents(pyr, net)
    assert zero == [False, False, False, True] and streams[3] == b""
    back = decode_latents(streams, net, shapes, zero)
    assert back == pyr


def test_latent_level_rejects_fractional(rng):
    with pytest.raises(ValueError):
        encode_level(np.full((2, 2), 0.5), ArmNet(12))


def test_latent_truncation_reports_level(rng):
    net = ArmNet(12)
    pyr = LatentPyramid([np.round(rng.normal(scale=3, size=(8, 8)))])
    streams, zero = encode_latents(pyr, net)
    with pytest.raises(DecodeError, match="level 0"):
        decode_latents([streams[0][:-2]], net, [(8, 8)], zero)
    with pytest.raises(DecodeError):
        decode_latents([b"\x00\x00"], net, [(8, 8)], [True])


# -- container --------------------------------------------------------------------


def make_header(n_levels=7, lengths=None):
    lengths = lengths or [3] * n_levels
    return BitstreamHeader(
        height=40,
        width=24,
        config_id=1,
        n_levels=n_levels,
        networks=[NetworkEntry(8, 20, 2), NetworkEntry(6, 16, 1), NetworkEntry(12, 1, 5)],
        level_zero=[n == 0 for n in lengths],
        level_lengths=lengths,
    )


def test_header_size():
    assert header_size(7) == 61
    assert header_size(9) == 4 + 7 + 21 + 2 + 36


def test_container_round_trip():
    lengths = [4, 0, 2, 1, 0, 3, 5]
    h = make_header(lengths=lengths)
    streams = [b"ab", b"c", b"defgh"] + [bytes([i]) * n for i, n in enumerate(lengths)]
    data = serialize(h, streams)
    assert data[:4] == MAGIC
    assert len(data) == header_size(7) + sum(len(s) for s in streams)
    h2, s2 = parse(data)
    assert h2 == h and s2 == streams


def test_container_errors():
    h = make_header(n_levels=2)
    streams = [b"ab", b"c", b"defgh", b"xyz", b"uvw"]
    data = serialize(h, streams)
    with pytest.raises(BitstreamError, match="magic"):
        parse(b"XXXX" + data[4:])
    with pytest.raises(BitstreamError, match="version"):
        parse(data[:4] + b"\x09" + data[5:])
    with pytest.raises(BitstreamError):
        parse(data[:10])
    with pytest.raises(BitstreamError):
        parse(data[:-1])
    with pytest.raises(BitstreamError):
        parse(data + b"\x00")
    with pytest.raises(BitstreamError):
        serialize(h, streams[:-1] + [b"toolong"])
    bad = make_header(n_levels=2)
    bad.level_zero = [True, False]
    with pytest.raises(BitstreamError):
        serialize(bad, streams)
