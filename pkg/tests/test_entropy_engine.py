import itertools
import math

import numpy as np
import pytest

from rate_region.closed_form import (three_node_distortions, three_node_no_repair_rate, three_node_rates,
                                     tight_top_variance, two_node_distortions, two_node_optimal, two_node_rates)
from rate_region.constants import LOG2_2PIE
from rate_region.entropy_engine import (CovarianceModel, VariableSet, build_covariance, common_label, cond_entropy,
                                        distortion_profile, distributed_repair_rates, gaussian_entropy_bits,
                                        lmmse_weights, mmse_distortion, modified_prp_rate, mutual_information,
                                        private_label, rate_breakdown, repair_node_rates, subset_distortion,
                                        top_decoding_size, top_labels, variables)
from rate_region.errors import DegenerateConditioningError, InvalidParametersError
from rate_region.models import INF, ChannelParams, DistortionSpec, LayerParams, Scheme


def random_single_layer(rng, n, with_top=True):
    sigma_u = float(rng.choice([INF, rng.uniform(0.2, 5.0)]))
    rho_lo = -1.0 / (n - 1) + 0.05
    layer = LayerParams(sigma_u_sq=sigma_u, sigma_q_sq=float(rng.uniform(0.1, 3.0)), rho=float(rng.uniform(rho_lo, 0.9)))
    top = float(rng.uniform(0.2, 5.0)) if with_top else INF
    return ChannelParams(n=n, layers=(layer,), top_sigma_sq=top)


def test_build_covariance_layout():
    params = ChannelParams(n=2, layers=(LayerParams(sigma_u_sq=2.0, sigma_q_sq=1.0, rho=0.5),), top_sigma_sq=4.0)
    model = build_covariance(params)
    assert model.labels == ("X", "U1", "Y1_1", "Y1_2", "Y2")
    expected = np.array([[1, 1, 1, 1, 1],
                         [1, 3, 1, 1, 1],
                         [1, 1, 2, 1.5, 1],
                         [1, 1, 1.5, 2, 1],
                         [1, 1, 1, 1, 5]], dtype=float)
    np.testing.assert_allclose(model.matrix, expected)
    assert "Y2" in model and "U2" not in model


def test_absent_codewords_are_left_out():
    model = build_covariance(ChannelParams(n=3, layers=(LayerParams(sigma_q_sq=1.0),)))
    assert model.labels == ("X", "Y1_1", "Y1_2", "Y1_3")


def test_source_entropy_and_common_information():
    model = build_covariance(ChannelParams(n=2, layers=(LayerParams(sigma_u_sq=0.6),)))
    assert cond_entropy(model, variables("X")) == pytest.approx(0.5 * LOG2_2PIE)
    assert cond_entropy(model, variables("X")) == pytest.approx(gaussian_entropy_bits(1.0))
    assert mutual_information(model, variables("X"), variables("U1")) == pytest.approx(0.5 * math.log2(1 + 1 / 0.6))
    assert mutual_information(model, variables("X"), VariableSet()) == 0.0


def test_cond_entropy_argument_errors():
    model = build_covariance(ChannelParams(n=2, layers=(LayerParams(sigma_u_sq=1.0),)))
    with pytest.raises(InvalidParametersError):
        cond_entropy(model, VariableSet())
    with pytest.raises(InvalidParametersError):
        cond_entropy(model, variables("X", "U1"), variables("U1"))
    with pytest.raises(InvalidParametersError):
        cond_entropy(model, variables("Y7"))
    with pytest.raises(InvalidParametersError):
        variables("X", "X")


def test_singular_conditioning_is_reported():
    model = CovarianceModel(("A", "B"), np.ones((2, 2)))
    with pytest.raises(DegenerateConditioningError):
        cond_entropy(model, variables("A"), variables("B"))


def test_covariance_model_validation():
    with pytest.raises(InvalidParametersError):
        CovarianceModel(("A", "B"), np.array([[1.0, 0.5], [0.4, 1.0]]))
    with pytest.raises(InvalidParametersError):
        CovarianceModel(("A", "B"), np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_mmse_and_lmmse_weights_for_common_codeword():
    model = build_covariance(ChannelParams(n=2, layers=(LayerParams(sigma_u_sq=0.5),)))
    assert mmse_distortion(model, variables("U1")) == pytest.approx(0.5 / 1.5)
    np.testing.assert_allclose(lmmse_weights(model, variables("U1")), [1 / 1.5])
    with pytest.raises(InvalidParametersError):
        mmse_distortion(model, VariableSet())


@pytest.mark.parametrize("d1, d2, r, r_repair", [
    (0.3, 0.25, 0.868483, 0.131576),
    (0.3, 0.15, 0.879890, 0.488589),
    (0.7, 0.3, 0.434241, 0.434241),
])
def test_repair_node_rates_reproduce_two_node_optimum(d1, d2, r, r_repair):
    params = two_node_optimal(DistortionSpec(d1, d2)).params
    point = repair_node_rates(params)
    assert point.r == pytest.approx(r, abs=1e-6)
    assert point.r_repair == pytest.approx(r_repair, abs=1e-6)
    assert distortion_profile(params, Scheme.REPAIR_NODE)[1] == pytest.approx(d1, abs=1e-9)
    assert distortion_profile(params, Scheme.REPAIR_NODE)[2] == pytest.approx(d2, abs=1e-9)


def test_repair_node_rates_match_two_node_transcription(rng):
    for _ in range(25):
        params = random_single_layer(rng, 2)
        engine, closed = repair_node_rates(params), two_node_rates(params)
        assert engine.r == pytest.approx(closed.r, abs=1e-9)
        assert engine.r_repair == pytest.approx(closed.r_repair, abs=1e-9)
        assert (subset_distortion(params, 1, Scheme.REPAIR_NODE), subset_distortion(params, 2, Scheme.REPAIR_NODE)) \
            == pytest.approx(two_node_distortions(params), abs=1e-12)


def test_distributed_rates_match_three_node_transcription(rng):
    for _ in range(25):
        params = random_single_layer(rng, 3)
        engine, closed = distributed_repair_rates(params), three_node_rates(params)
        assert engine.r == pytest.approx(closed.r, abs=1e-9)
        assert engine.r_repair == pytest.approx(closed.r_repair, abs=1e-9)
        assert (subset_distortion(params, 1), subset_distortion(params, 2)) \
            == pytest.approx(three_node_distortions(params), abs=1e-12)


def test_modified_and_plain_prp_rates_match_closed_forms():
    spec, rho = DistortionSpec(0.3, 0.15), 0.2
    s = spec.d1 / (1 - spec.d1)
    base = ChannelParams(n=3, layers=(LayerParams(sigma_q_sq=s, rho=rho),))
    top = tight_top_variance(spec.d2, subset_distortion(base, 2))
    assert math.isfinite(top)

    modified = ChannelParams(n=3, layers=base.layers, top_sigma_sq=top)
    assert subset_distortion(modified, 2) == pytest.approx(spec.d2)
    assert modified_prp_rate(modified) == pytest.approx(three_node_no_repair_rate(spec, rho, modified=True), abs=1e-9)

    plain = ChannelParams(n=3, layers=base.layers, top_sigma_sq=2 * top, top_codewords=2)
    assert subset_distortion(plain, 2) == pytest.approx(spec.d2)
    assert modified_prp_rate(plain) == pytest.approx(three_node_no_repair_rate(spec, rho, modified=False), abs=1e-9)
    assert modified_prp_rate(modified) < modified_prp_rate(plain)


def test_rate_breakdown_terms(rng):
    for _ in range(10):
        params = random_single_layer(rng, 3)
        breakdown = rate_breakdown(params, Scheme.DISTRIBUTED)
        (terms,) = breakdown.layers
        assert terms.common_codebook_rate == pytest.approx(terms.common_rate, abs=1e-9)
        assert terms.private_codebook_rate >= terms.private_rate - 1e-12
        assert breakdown.r == pytest.approx(terms.common_rate + terms.private_rate + breakdown.top_rate, abs=1e-12)
        assert breakdown.r_repair == pytest.approx(max(terms.repair_term, 0.0) / 2, abs=1e-12)


def test_highly_correlated_private_layer_needs_no_repair_information():
    params = ChannelParams(n=3, layers=(LayerParams(sigma_q_sq=1.0, rho=0.9),))
    (terms,) = rate_breakdown(params, Scheme.DISTRIBUTED).layers
    assert terms.repair_free
    assert distributed_repair_rates(params).r_repair == 0.0


def test_top_only_configuration():
    params = ChannelParams(n=2, layers=(LayerParams(),), top_sigma_sq=1.0)
    breakdown = rate_breakdown(params, Scheme.REPAIR_NODE)
    assert breakdown.top_rate == pytest.approx(0.25)
    assert breakdown.r == pytest.approx(0.25)
    assert breakdown.r_repair == pytest.approx(0.25)
    assert subset_distortion(params, 1, Scheme.REPAIR_NODE) == 1.0
    assert subset_distortion(params, 2, Scheme.REPAIR_NODE) == pytest.approx(0.5)


@pytest.mark.parametrize("params, scheme", [
    (ChannelParams(n=2, layers=(LayerParams(sigma_q_sq=1.0),)), Scheme.DISTRIBUTED),
    (ChannelParams(n=3, layers=(LayerParams(sigma_q_sq=1.0), LayerParams(sigma_q_sq=1.0))), Scheme.DISTRIBUTED),
    (ChannelParams(n=3, layers=(LayerParams(sigma_u_sq=1.0, sigma_q_sq=1.0),)), Scheme.MODIFIED_PRP),
])
def test_rate_breakdown_rejects_mismatched_schemes(params, scheme):
    with pytest.raises(InvalidParametersError):
        rate_breakdown(params, scheme)


def test_subset_distortion_range():
    params = ChannelParams(n=3, layers=(LayerParams(sigma_q_sq=1.0),))
    with pytest.raises(InvalidParametersError):
        subset_distortion(params, 0)
    assert subset_distortion(params, 3) < subset_distortion(params, 2) < subset_distortion(params, 1)


def test_chain_rule_and_conditioning(rng):
    for _ in range(50):
        layer = LayerParams(sigma_u_sq=float(rng.uniform(0.2, 5.0)), sigma_q_sq=float(rng.uniform(0.1, 3.0)),
                            rho=float(rng.uniform(-0.45, 0.9)))
        model = build_covariance(ChannelParams(n=3, layers=(layer,), top_sigma_sq=float(rng.uniform(0.2, 5.0))))
        a, b = variables("Y1_1", "X"), variables("U1", "Y2")
        joint = variables("Y1_1", "X", "U1", "Y2")
        assert cond_entropy(model, joint) == pytest.approx(cond_entropy(model, b) + cond_entropy(model, a, b), abs=1e-9)
        assert cond_entropy(model, variables("Y1_1"), variables("U1", "Y1_2")) \
            <= cond_entropy(model, variables("Y1_1"), variables("U1")) + 1e-9
        assert mutual_information(model, variables("X"), variables("Y1_1", "Y1_2")) >= 0.0


def test_chain_rule_on_random_disjoint_sets(rng):
    for _ in range(200):
        n = int(rng.integers(2, 5))
        model = build_covariance(random_single_layer(rng, n, with_top=bool(rng.integers(2))))
        labels = list(rng.permutation(model.labels))
        size = int(rng.integers(2, len(labels) + 1))
        split = int(rng.integers(1, size))
        a, b = VariableSet(tuple(labels[:split])), VariableSet(tuple(labels[split:size]))
        joint = VariableSet(a.labels + b.labels)
        assert cond_entropy(model, joint) == pytest.approx(cond_entropy(model, b) + cond_entropy(model, a, b),
                                                           abs=1e-9)
        assert mutual_information(model, a, b) >= 0.0


def relabeled_terms(params, order, decoders):
    """Repair term, top-codeword term and subset distortions computed with nodes taken in `order`."""
    model = build_covariance(params)
    common = list(model.present([common_label(1)]))
    private = [private_label(1, node) for node in order]
    top = list(model.present(top_labels(params)))
    repair = cond_entropy(model, variables(private[-1]), variables(*common, *private[:-1]))
    top_term = cond_entropy(model, VariableSet(tuple(top)), variables(*common, *private[:decoders])) if top else 0.0
    distortions = [mmse_distortion(model, variables(*common, *private[:m], *(top if m >= decoders else [])))
                   for m in range(1, params.n + 1)]
    return [repair, top_term] + distortions


@pytest.mark.parametrize("n, scheme", [(2, Scheme.REPAIR_NODE), (3, Scheme.DISTRIBUTED), (3, Scheme.MODIFIED_PRP)])
def test_rates_are_symmetric_under_node_permutation(rng, n, scheme):
    for _ in range(10):
        params = random_single_layer(rng, n)
        if scheme is Scheme.MODIFIED_PRP:
            params = ChannelParams(n=n, layers=(LayerParams(sigma_q_sq=params.layers[0].sigma_q_sq,
                                                            rho=params.layers[0].rho),),
                                   top_sigma_sq=params.top_sigma_sq)
        decoders = top_decoding_size(params, scheme)
        reference = relabeled_terms(params, range(1, n + 1), decoders)
        for order in itertools.permutations(range(1, n + 1)):
            assert relabeled_terms(params, order, decoders) == pytest.approx(reference, abs=1e-10)
        breakdown = rate_breakdown(params, scheme)
        assert [subset_distortion(params, m, scheme) for m in range(1, n + 1)] \
            == pytest.approx(reference[2:], abs=1e-12)
        if scheme is not Scheme.MODIFIED_PRP:
            model = build_covariance(params)
            own = variables(*(private_label(1, i) for i in range(1, n + 1)))
            h_joint = cond_entropy(model, own, model.present(["X", common_label(1)]))
            assert breakdown.layers[0].repair_term == pytest.approx(reference[0] - h_joint / n, abs=1e-9)


@pytest.mark.parametrize("n, scheme, sizes", [
    (2, Scheme.REPAIR_NODE, [1, 2]),
    (3, Scheme.REPAIR_NODE, [1, 2, 3]),
    (3, Scheme.DISTRIBUTED, [1, 2]),
    (4, Scheme.DISTRIBUTED, [1, 2, 3]),
    (4, Scheme.MODIFIED_PRP, [1, 2, 3]),
])
def test_distortion_profile_runs_up_to_the_top_decoding_size(n, scheme, sizes):
    params = ChannelParams(n=n, layers=(LayerParams(sigma_q_sq=1.0, rho=0.2),), top_sigma_sq=2.0)
    profile = distortion_profile(params, scheme)
    assert sorted(profile) == sizes
    assert profile[sizes[-1]] == subset_distortion(params, sizes[-1], scheme)
    assert all(profile[m + 1] < profile[m] for m in sizes[:-1])
