import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from prefopt import HeatmapPolicy, PreferenceModel, generate_uniform, implied_reward_diff, make_labels, pair_weight, po_loss_pairwise, po_loss_pl, sample_tours
from prefopt.errors import InvalidArgument, WrongModel
from prefopt.policy import SampleBatch
from prefopt.preference import po_loss
from prefopt.trainer import ascent_direction

from oracles import (
    central_difference,
    chain_rule_log_prob,
    max_rel_err,
    normal_cdf,
    normal_pdf,
    reference_pairwise_loss,
    reference_pl_loss,
    sigmoid,
)

PAIRWISE = ["bradley_terry", "thurstone", "exponential"]


def fake_batch(log_probs, rewards, n_nodes=6):
    log_probs = np.asarray(log_probs, dtype=float)
    n = log_probs.shape[0]
    return SampleBatch(
        perms=np.tile(np.arange(n_nodes), (n, 1)),
        log_probs=log_probs,
        step_entropies=np.zeros((n, n_nodes - 1)),
        lengths=-np.asarray(rewards, dtype=float),
    )


lengths_st = st.lists(st.integers(1, 400).map(lambda v: v / 37.0), min_size=2, max_size=12)


def test_labels_basic():
    assert make_labels([-3.0, -5.0]).wins.tolist() == [[0, 1], [0, 0]]
    assert make_labels([-4.0, -4.0]).wins.tolist() == [[0, 0], [0, 0]]


def test_labels_tie_tolerance():
    assert make_labels([-1.0, -1.0 - 1e-13]).wins.sum() == 0
    assert make_labels([-1.0, -1.0 - 1e-9]).wins.tolist() == [[0, 1], [0, 0]]


@settings(max_examples=200, deadline=None)
@given(lengths=lengths_st)
def test_labels_are_a_strict_order(lengths):
    y = make_labels(-np.array(lengths)).wins.astype(bool)
    assert not np.any(y & y.T)
    assert not np.any(np.diag(y))
    # transitivity: y[a,b] and y[b,c] imply y[a,c]
    assert np.all(~(y[:, :, None] & y[None, :, :]) | y[:, None, :])


@settings(max_examples=200, deadline=None)
@given(lengths=lengths_st, k=st.sampled_from([0.5, 2.0, 3.0, 7.25]), b=st.sampled_from([-10.0, 0.0, 5.0, 123.5]))
def test_labels_affine_invariant(lengths, k, b):
    r = -np.array(lengths)
    assert np.array_equal(make_labels(k * r + b).wins, make_labels(r).wins)


def test_implied_reward_diff():
    assert implied_reward_diff(0.05, -2.0, -2.0) == 0.0
    assert implied_reward_diff(0.05, -1.0, -3.0) == pytest.approx(0.1, abs=1e-15)
    assert implied_reward_diff(0.3, -1.0 + 17.0, -3.0 + 17.0) == pytest.approx(implied_reward_diff(0.3, -1.0, -3.0), abs=1e-12)
    with pytest.raises(InvalidArgument):
        implied_reward_diff(0.0, -1.0, -2.0)


def test_pair_weight_values():
    assert pair_weight(PreferenceModel("bt"), 0.0) == 0.5
    for z in (-50.0, -1.0, 0.0, 3.0, 80.0):
        assert pair_weight(PreferenceModel("exp"), z) == 1.0
    assert pair_weight(PreferenceModel("thurstone"), 0.0) == pytest.approx(math.sqrt(2 / math.pi), abs=1e-12)
    assert pair_weight(PreferenceModel("thurstone"), 0.0) == pytest.approx(0.7979, abs=1e-4)
    for z in (-3.0, -0.4, 1.2, 5.0):
        assert pair_weight(PreferenceModel("thurstone"), z) == pytest.approx(normal_pdf(z) / normal_cdf(z), rel=1e-10)
        assert pair_weight(PreferenceModel("bt"), z) == pytest.approx(sigmoid(-z), rel=1e-12)


def test_pair_weight_margin_shifts_argument():
    m = PreferenceModel("bt", margin=0.7)
    assert pair_weight(m, 1.0) == pytest.approx(sigmoid(-0.3), rel=1e-12)


@pytest.mark.parametrize("z", [-30.0, -100.0, -1e4, 40.0, 1e4])
def test_thurstone_weight_finite_in_tails(z):
    w = pair_weight(PreferenceModel("thurstone"), z)
    assert math.isfinite(w) and w >= 0
    if z < 0:
        # phi/Phi ~ -z for large negative z
        assert w == pytest.approx(-z, rel=0.01)


def test_unknown_model_and_wrong_model():
    with pytest.raises(InvalidArgument):
        PreferenceModel("logit")
    batch = fake_batch([-1.0, -2.0], [-1.0, -2.0])
    with pytest.raises(WrongModel):
        po_loss_pairwise(PreferenceModel("pl"), 0.1, batch, make_labels(batch.rewards))
    with pytest.raises(InvalidArgument):
        po_loss_pairwise(PreferenceModel("bt"), 0.1, batch, make_labels([-1.0, -2.0, -3.0]))


def test_bt_two_tour_example():
    batch = fake_batch([-1.0, -3.0], [-4.0, -5.0])
    loss, adv = po_loss_pairwise(PreferenceModel("bt"), 0.05, batch, make_labels(batch.rewards))
    assert loss == pytest.approx(-0.25 * math.log(sigmoid(0.1)), abs=1e-15)
    assert adv[0] == pytest.approx(0.025 * sigmoid(-0.1), abs=1e-15)
    assert adv[1] == pytest.approx(-0.025 * sigmoid(-0.1), abs=1e-15)
    # advantages are -N * dloss/dlogprob, checked by finite differences of the reference loss
    fd = central_difference(lambda lp: reference_pairwise_loss("bradley_terry", 0.05, list(lp), [-4.0, -5.0]), np.array([-1.0, -3.0]))
    assert np.allclose(adv, -2 * fd, atol=1e-10)


def test_exponential_advantage_is_win_minus_loss():
    lengths = [3.0, 1.0, 4.0, 1.5, 9.0]
    rng = np.random.default_rng(0)
    batch = fake_batch(rng.normal(size=5), [-v for v in lengths])
    _, adv = po_loss_pairwise(PreferenceModel("exp"), 0.3, batch, make_labels(batch.rewards))
    ranks = np.argsort(np.argsort(lengths))  # 0 = shortest
    wins = 4 - ranks
    losses = ranks
    assert np.array_equal(adv, 0.3 * (wins - losses) / 5)
    assert adv[1] == pytest.approx(0.3 * 4 / 5)


def test_all_equal_rewards_give_nothing():
    batch = fake_batch([-1.0, -2.0, -5.0], [-3.0, -3.0, -3.0])
    for kind in PAIRWISE:
        loss, adv = po_loss_pairwise(PreferenceModel(kind), 0.1, batch, make_labels(batch.rewards))
        assert loss == 0.0
        assert np.all(adv == 0.0)


@settings(max_examples=100, deadline=None)
@given(lengths=lengths_st, seed=st.integers(0, 2**32 - 1), kind=st.sampled_from(PAIRWISE), alpha=st.sampled_from([0.01, 0.05, 0.5, 2.0]))
def test_pairwise_loss_matches_reference_and_fd(lengths, seed, kind, alpha):
    lp = np.random.default_rng(seed).normal(scale=3.0, size=len(lengths))
    r = [-v for v in lengths]
    batch = fake_batch(lp, r)
    loss, adv = po_loss_pairwise(PreferenceModel(kind), alpha, batch, make_labels(batch.rewards))
    assert loss == pytest.approx(reference_pairwise_loss(kind, alpha, lp.tolist(), r), rel=1e-10, abs=1e-14)
    fd = central_difference(lambda x: reference_pairwise_loss(kind, alpha, list(x), r), lp, h=1e-6)
    assert np.allclose(adv, -len(r) * fd, atol=1e-7)


@settings(max_examples=100, deadline=None)
@given(lengths=lengths_st, seed=st.integers(0, 2**32 - 1), kind=st.sampled_from(PAIRWISE + ["plackett_luce"]), shift=st.floats(-50, 50))
def test_log_prob_shift_invariance(lengths, seed, kind, shift):
    lp = np.random.default_rng(seed).normal(scale=3.0, size=len(lengths))
    r = [-v for v in lengths]
    m = PreferenceModel(kind)
    l0, a0 = po_loss(m, 0.2, fake_batch(lp, r))
    l1, a1 = po_loss(m, 0.2, fake_batch(lp + shift, r))
    assert abs(l0 - l1) <= 1e-12 * max(1.0, abs(l0))
    assert np.allclose(a0, a1, atol=1e-12, rtol=0)


@settings(max_examples=100, deadline=None)
@given(lengths=lengths_st, seed=st.integers(0, 2**32 - 1), kind=st.sampled_from(PAIRWISE), h=st.sampled_from([-7.5, -1.0, 0.25, 3.0, 1000.0]))
def test_reward_shift_leaves_po_bit_identical(lengths, seed, kind, h):
    lp = np.random.default_rng(seed).normal(scale=3.0, size=len(lengths))
    r = -np.array(lengths)
    m = PreferenceModel(kind)
    l0, a0 = po_loss(m, 0.1, fake_batch(lp, r), rewards=r)
    l1, a1 = po_loss(m, 0.1, fake_batch(lp, r), rewards=r - h)
    assert np.array_equal(make_labels(r).wins, make_labels(r - h).wins)
    assert l0 == l1
    assert np.array_equal(a0, a1)


@settings(max_examples=100, deadline=None)
@given(lengths=lengths_st, seed=st.integers(0, 2**32 - 1))
def test_sign_consistency(lengths, seed):
    assume(len(set(lengths)) == len(lengths))
    lp = np.random.default_rng(seed).normal(scale=3.0, size=len(lengths))
    r = -np.array(lengths)
    batch = fake_batch(lp, r)
    labels = make_labels(r)
    _, adv = po_loss_pairwise(PreferenceModel("exp"), 0.1, batch, labels)
    order = np.argsort(-r)
    assert np.all(np.diff(adv[order]) < 0)
    assert math.fsum(adv) == 0.0
    for kind in ("bradley_terry", "thurstone"):
        m = PreferenceModel(kind)
        z = 0.1 * (lp[:, None] - lp[None, :])
        contrib = labels.wins * pair_weight(m, z)
        assert np.all(contrib[labels.wins.astype(bool)] > 0)


@settings(max_examples=100, deadline=None)
@given(lengths=lengths_st, seed=st.integers(0, 2**32 - 1), alpha=st.sampled_from([0.005, 0.05, 1.0]))
def test_exponential_matches_mean_over_pairs_form(lengths, seed, alpha):
    lp = np.random.default_rng(seed).normal(scale=3.0, size=len(lengths))
    r = -np.array(lengths)
    loss, _ = po_loss_pairwise(PreferenceModel("exp"), alpha, fake_batch(lp, r), make_labels(r))
    preference = r[:, None] > r[None, :]
    pair = lp[:, None] - lp[None, :]
    pairs_form = -np.mean(alpha * pair * preference)
    assert abs(loss - pairs_form) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(lengths=lengths_st, seed=st.integers(0, 2**32 - 1), kind=st.sampled_from(PAIRWISE), margin=st.sampled_from([0.0, 0.5]))
def test_length_control_equals_alpha_rescaling(lengths, seed, kind, margin):
    n_nodes = 9
    lp = np.random.default_rng(seed).normal(scale=3.0, size=len(lengths))
    batch = fake_batch(lp, [-v for v in lengths], n_nodes=n_nodes)
    labels = make_labels(batch.rewards)
    a = po_loss_pairwise(PreferenceModel(kind, margin, length_control=True), 0.4, batch, labels)
    b = po_loss_pairwise(PreferenceModel(kind, margin), 0.4 / (n_nodes - 1), batch, labels)
    assert a[0] == b[0]
    assert np.array_equal(a[1], b[1])


def test_length_control_with_varying_step_counts():
    from prefopt.preference import _effective_inputs

    class Ragged(SampleBatch):
        @property
        def n_steps(self):
            return np.array([4, 8])

    batch = Ragged(np.zeros((2, 3), int), np.array([-2.0, -4.0]), np.zeros((2, 2)), np.array([1.0, 2.0]))
    m = PreferenceModel("bt", length_control=True)
    loss, adv = po_loss_pairwise(m, 1.0, batch, make_labels(batch.rewards))
    assert loss == pytest.approx(-0.25 * math.log(sigmoid(-2.0 / 4 + 4.0 / 8)))
    alpha, scores, scale = _effective_inputs(m, 1.0, batch)
    assert np.allclose(scores, [-0.5, -0.5]) and np.allclose(scale, [0.25, 0.125])


def test_pl_two_tours_equals_scaled_bt():
    batch = fake_batch([-1.0, -3.0], [-4.0, -5.0])
    bt_loss, bt_adv = po_loss_pairwise(PreferenceModel("bt"), 0.05, batch, make_labels(batch.rewards))
    pl_loss, pl_adv = po_loss_pl(0.05, batch)
    assert pl_loss == pytest.approx(4 * bt_loss, rel=1e-12)
    assert np.allclose(pl_adv, 4 * bt_adv, rtol=1e-12)


def test_pl_uniform_log_probs():
    batch = fake_batch([-2.0, -2.0, -2.0], [-1.0, -3.0, -2.0])
    loss, _ = po_loss_pl(0.7, batch)
    assert loss == pytest.approx(math.log(3) + math.log(2), abs=1e-12)


def test_pl_needs_two():
    with pytest.raises(InvalidArgument):
        po_loss_pl(0.1, fake_batch([-1.0], [-1.0]))


@settings(max_examples=60, deadline=None)
@given(lengths=lengths_st, seed=st.integers(0, 2**32 - 1), alpha=st.sampled_from([0.05, 0.5, 2.0]))
def test_pl_matches_reference_and_fd(lengths, seed, alpha):
    lp = np.random.default_rng(seed).normal(scale=3.0, size=len(lengths))
    r = [-v for v in lengths]
    loss, adv = po_loss_pl(alpha, fake_batch(lp, r))
    assert loss == pytest.approx(reference_pl_loss(alpha, lp.tolist(), r), rel=1e-10, abs=1e-12)
    fd = central_difference(lambda x: reference_pl_loss(alpha, list(x), r), lp, h=1e-6)
    assert np.allclose(adv, -len(r) * fd, atol=1e-6)


@pytest.mark.parametrize("kind", PAIRWISE + ["plackett_luce"])
def test_theta_gradient_of_loss(kind):
    g = np.random.default_rng(5)
    n = 6
    inst = generate_uniform(n, 1, seed=5)[0]
    theta = g.normal(size=(n, n))
    policy = HeatmapPolicy(theta)
    batch = sample_tours(policy, inst, 4, g)
    rewards = batch.rewards.tolist()
    perms = [p.tolist() for p in batch.perms]
    model = PreferenceModel(kind)
    _, adv = po_loss(model, 0.5, batch)
    analytic = -ascent_direction(policy, batch, adv)

    def loss_of(t):
        lps = [chain_rule_log_prob(t.tolist(), p) for p in perms]
        if kind == "plackett_luce":
            return reference_pl_loss(0.5, lps, rewards)
        return reference_pairwise_loss(kind, 0.5, lps, rewards)

    assert max_rel_err(analytic, central_difference(loss_of, theta)) <= 1e-4
