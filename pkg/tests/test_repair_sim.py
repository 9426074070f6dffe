import itertools
from dataclasses import replace

import numpy as np
import pytest

from rate_region.errors import ConfigInfeasibleError, InvalidParametersError
from rate_region.models import ChannelParams, DistortionSpec, LayerParams
from storage_sim.erasure_code import MDSCode
from storage_sim.repair_sim import (DISTORTION_MARGIN, LENGTH_BYTES, SimConfig, SimReport, decode_subset,
                                    draw_source, encode_block, information_rates, measured_noise_correlation,
                                    repair_node, run_experiment, run_trial, subset_distortions, subset_errors)


@pytest.fixture(scope="module")
def three_node_config():
    return SimConfig.from_spec(3, DistortionSpec(0.3, 0.15), block_len=64, seed=7)


def test_equal_targets_store_identical_copies():
    cfg = SimConfig.from_spec(3, DistortionSpec(0.3, 0.3), block_len=20_000, seed=1)
    source = draw_source(cfg, 0)
    nodes = encode_block(source, cfg)
    assert nodes[0].common == nodes[1].common == nodes[2].common
    assert all(node.private == b"" and node.top_share == b"" and node.repair_share == b"" for node in nodes)
    distortions = subset_distortions(nodes, source, cfg)
    assert distortions[1] == pytest.approx(cfg.expected_distortion(1), rel=0.05)
    assert distortions[2] == pytest.approx(distortions[1])
    assert distortions[1] <= cfg.distortion_ceiling(1)
    assert run_trial(cfg, 0).exact


def test_three_node_repair_is_exact_over_many_blocks(three_node_config):
    report = run_experiment(three_node_config, trials=1000)
    assert report.repair_exact_rate == 1.0
    assert len(report.repair_exact) == 1000


@pytest.mark.parametrize("n, d1, d2", [(2, 0.7, 0.3), (3, 0.3, 0.15)])
def test_repair_is_exact_at_full_block_length(n, d1, d2):
    cfg = SimConfig.from_spec(n, DistortionSpec(d1, d2), block_len=10_000, seed=5)
    for block in range(1000):
        nodes = encode_block(draw_source(cfg, block), cfg, block_index=block)
        for failed in range(n):
            survivors = [node for node in nodes if node.node_id != failed]
            assert repair_node(survivors, failed, cfg).to_bytes() == nodes[failed].to_bytes()
    source = draw_source(cfg, 0)
    nodes = encode_block(source, cfg)
    repaired = repair_node(nodes[1:], 0, cfg)
    assert subset_distortions([repaired] + nodes[1:], source, cfg) == subset_distortions(nodes, source, cfg)


@pytest.mark.parametrize("d1, d2", [(0.7, 0.3), (0.3, 0.25)])
def test_two_node_repair_is_exact(d1, d2):
    cfg = SimConfig.from_spec(2, DistortionSpec(d1, d2), block_len=128, seed=3)
    for block in range(20):
        source = draw_source(cfg, block)
        nodes = encode_block(source, cfg, block_index=block)
        for failed in range(2):
            survivors = [node for node in nodes if node.node_id != failed]
            assert repair_node(survivors, failed, cfg) == nodes[failed]


def test_repair_shares_hold_the_parity_of_the_private_streams(three_node_config):
    cfg = three_node_config
    nodes = encode_block(draw_source(cfg, 5), cfg, block_index=5)
    share_len = len(nodes[0].repair_share)
    parity = MDSCode(3, 2).decode({0: nodes[0].repair_share, 2: nodes[2].repair_share}, 2 * share_len)
    expected = np.zeros(len(parity), dtype=np.uint8)
    for node in nodes:
        payload = len(node.private).to_bytes(LENGTH_BYTES, "big") + node.private
        expected[:len(payload)] ^= np.frombuffer(payload, dtype=np.uint8)
    assert parity == expected.tobytes()
    assert share_len == -(-(LENGTH_BYTES + max(len(node.private) for node in nodes)) // 2)


def test_repair_rejects_a_corrupt_parity(three_node_config):
    cfg = three_node_config
    nodes = encode_block(draw_source(cfg, 0), cfg)
    broken = [replace(nodes[0], repair_share=b"\xff" * len(nodes[0].repair_share)), nodes[1]]
    with pytest.raises(InvalidParametersError):
        repair_node(broken, 2, cfg)


@pytest.mark.parametrize("n, d1, d2", [(3, 0.3, 0.15), (2, 0.3, 0.15), (2, 0.7, 0.3)])
def test_empirical_distortions_track_the_model(n, d1, d2):
    cfg = SimConfig.from_spec(n, DistortionSpec(d1, d2), block_len=100_000, seed=11)
    source = draw_source(cfg, 0)
    nodes = encode_block(source, cfg)
    distortions = subset_distortions(nodes, source, cfg)
    for m in (1, 2):
        assert distortions[m] == pytest.approx(cfg.expected_distortion(m), rel=0.03)
        assert cfg.expected_distortion(m) <= DISTORTION_MARGIN * cfg.distortion_ceiling(m) + 1e-12
        assert distortions[m] <= cfg.distortion_ceiling(m)
    rho = measured_noise_correlation(nodes, source, cfg)
    assert rho == pytest.approx(cfg.layer.rho, abs=0.05)


@pytest.mark.parametrize("n, d1, d2", [(3, 0.3, 0.15), (2, 0.7, 0.3)])
def test_every_subset_of_a_size_sees_the_same_distortion(n, d1, d2):
    cfg = SimConfig.from_spec(n, DistortionSpec(d1, d2), block_len=100_000, seed=13)
    source = draw_source(cfg, 0)
    errors = subset_errors(encode_block(source, cfg), source, cfg)
    assert sorted(errors) == [ids for m in (1, 2) for ids in itertools.combinations(range(n), m)]
    for m in (1, 2):
        same_size = [err for ids, err in errors.items() if len(ids) == m]
        for a, b in itertools.combinations(same_size, 2):
            se = np.sqrt(a.var() / a.size + b.var() / b.size)
            assert abs(a.mean() - b.mean()) <= 3 * se


@pytest.mark.parametrize("n, d1, d2, info_rate", [
    (3, 0.3, 0.15, 1.051),
    (2, 0.3, 0.25, 1.000),
    (3, 0.3, 0.2, 0.959),
    (2, 0.7, 0.3, 0.868),
])
def test_storage_covers_the_information_rate(n, d1, d2, info_rate):
    cfg = SimConfig.from_spec(n, DistortionSpec(d1, d2), block_len=10_000, seed=7)
    report = run_experiment(cfg, trials=2)
    assert report.info_rate == pytest.approx(information_rates(cfg).r_total)
    assert report.info_rate == pytest.approx(info_rate, abs=2e-3)
    assert report.bits_per_sample >= report.info_rate - 0.05
    assert report.bits_per_sample <= report.info_rate + cfg.quantizer_overhead_bits + 0.1


def test_expected_rates_fit_the_budget(three_node_config):
    cfg = three_node_config
    assert {"private", "repair"} <= set(cfg.expected_rates) <= set(cfg.rate_budget)
    for piece, bits in cfg.expected_rates.items():
        assert 0 < bits <= cfg.rate_budget[piece]
    assert 1.0 <= cfg.noise_inflation <= 2 ** (2 * cfg.quantizer_overhead_bits)


def test_rate_budget_without_overhead_is_insufficient():
    with pytest.raises(ConfigInfeasibleError, match="rate budget insufficient"):
        SimConfig.from_spec(3, DistortionSpec(0.3, 0.15), block_len=64, seed=7, quantizer_overhead_bits=0.0)


def test_experiments_are_reproducible(three_node_config):
    first = run_experiment(three_node_config, trials=6)
    assert run_experiment(three_node_config, trials=6).to_dict() == first.to_dict()
    assert run_experiment(three_node_config, trials=6, workers=2).to_dict() == first.to_dict()


def test_report_json_round_trip(three_node_config):
    report = run_experiment(three_node_config, trials=2)
    assert SimReport.from_json(report.to_json()) == report
    with pytest.raises(InvalidParametersError):
        SimReport.from_json('{"trials": 2}')
    with pytest.raises(InvalidParametersError):
        SimReport.from_json("not json")


def test_decoder_input_checks(three_node_config):
    cfg = three_node_config
    nodes = encode_block(draw_source(cfg, 0), cfg)
    other = encode_block(draw_source(cfg, 1), cfg, block_index=1)
    with pytest.raises(InvalidParametersError):
        decode_subset([], cfg)
    with pytest.raises(InvalidParametersError):
        decode_subset([nodes[0], nodes[0]], cfg)
    with pytest.raises(InvalidParametersError):
        decode_subset([nodes[0], other[1]], cfg)
    with pytest.raises(InvalidParametersError):
        repair_node(nodes[:1], 2, cfg)
    with pytest.raises(InvalidParametersError):
        repair_node(nodes[:2], 1, cfg)
    with pytest.raises(InvalidParametersError):
        encode_block(np.zeros(10), cfg)
    with pytest.raises(InvalidParametersError):
        run_experiment(cfg, trials=0)


def test_decoders_read_at_most_the_access_size(three_node_config):
    cfg = three_node_config
    nodes = encode_block(draw_source(cfg, 0), cfg)
    assert cfg.max_access == 2
    assert decode_subset(nodes[:2], cfg).shape == (cfg.block_len,)
    with pytest.raises(InvalidParametersError, match="at most 2 of 3"):
        decode_subset(nodes, cfg)
    two_node = SimConfig.from_spec(2, DistortionSpec(0.7, 0.3), block_len=64, seed=7)
    assert two_node.max_access == 2
    assert decode_subset(encode_block(draw_source(two_node, 0), two_node), two_node).shape == (64,)


PRIVATE = (LayerParams(sigma_q_sq=1.0, rho=0.2),)


@pytest.mark.parametrize("kwargs", [
    {"n": 4, "params": ChannelParams(n=4, layers=PRIVATE)},
    {"n": 3, "params": ChannelParams(n=2, layers=PRIVATE)},
    {"n": 3, "params": ChannelParams(n=3, layers=PRIVATE * 2)},
    {"n": 3, "params": ChannelParams(n=3, layers=PRIVATE, top_sigma_sq=1.0, top_codewords=2)},
    {"n": 2, "params": ChannelParams(n=2, layers=(LayerParams(),))},
    {"n": 2, "params": ChannelParams(n=2, layers=(LayerParams(sigma_q_sq=1.0, rho=1.0),))},
    {"n": 2, "params": ChannelParams(n=2, layers=PRIVATE), "block_len": 0},
    {"n": 2, "params": ChannelParams(n=2, layers=PRIVATE), "seed": -1},
    {"n": 2, "params": ChannelParams(n=2, layers=PRIVATE), "quantizer_overhead_bits": -0.5},
])
def test_infeasible_configs(kwargs):
    settings = {"spec": DistortionSpec(0.3, 0.15), "block_len": 16, "seed": 0, **kwargs}
    with pytest.raises(ConfigInfeasibleError):
        SimConfig(**settings)


def test_from_spec_rejects_unsupported_node_counts():
    with pytest.raises(ConfigInfeasibleError):
        SimConfig.from_spec(1, DistortionSpec(0.3, 0.15), block_len=16, seed=0)
