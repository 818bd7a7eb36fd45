from fractions import Fraction as Q

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsnbounds.curves import (
    INFINITY,
    CappedArrival,
    Impulse,
    RateLatency,
    TokenBucket,
    UnboundedError,
    backlog_bound,
    deconvolve_affine,
    delay_bound,
    evaluate,
    output_burst,
    upper_pseudo_inverse,
)

US = Q(1, 10**6)
MB = 10**6


def grid(end, steps):
    return [end * k / steps for k in range(steps + 1)]


def sampled_delay(arrival, service, end, steps=2000):
    """sup over sampled s of the time the service curve needs to catch alpha(s)."""
    best = Q(0)
    for s in grid(end, steps):
        a = evaluate(arrival, s)
        # smallest t with beta(t) >= a, solved on the rate-latency curve directly
        t = service.latency + a / service.rate
        best = max(best, t - s)
    return best


def sampled_backlog(arrival, service, end, steps=2000):
    return max(evaluate(arrival, s) - evaluate(service, s) for s in grid(end, steps))


# --------------------------------------------------------------------------- evaluate


def test_token_bucket_at_zero_is_burst():
    assert evaluate(TokenBucket(20 * MB, 3000), 0) == 3000


def test_rate_latency_zero_at_latency():
    assert evaluate(RateLatency(40 * MB, 80 * US), 80 * US) == 0


def test_capped_arrival_takes_smaller_branch():
    alpha = CappedArrival(100 * MB, 2000, TokenBucket(40 * MB, 6200))
    assert evaluate(alpha, 50 * US) == 7000


def test_impulse_is_zero_then_infinite():
    d = Impulse(130 * US)
    assert evaluate(d, 130 * US) == 0
    assert evaluate(d, 131 * US) is INFINITY
    assert INFINITY > 10**30


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        evaluate(TokenBucket(1, 1), -1)


def test_floats_rejected():
    with pytest.raises(TypeError):
        TokenBucket(0.5, 1)


def test_shape_invariants():
    with pytest.raises(ValueError):
        TokenBucket(-1, 0)
    with pytest.raises(ValueError):
        RateLatency(0, 1)
    with pytest.raises(ValueError):
        Impulse(-1)
    with pytest.raises(ValueError):
        CappedArrival(10, 0, TokenBucket(10, 5))


# --------------------------------------------------------------------------- deviations


def test_delay_token_bucket_rate_latency():
    tb, rl = TokenBucket(20 * MB, 3000), RateLatency(40 * MB, 80 * US)
    assert delay_bound(tb, rl) == 155 * US
    assert sampled_delay(tb, rl, 500 * US) == 155 * US


def test_delay_zero_burst_is_latency():
    assert delay_bound(TokenBucket(5, 0), RateLatency(7, 3)) == 3


def test_delay_equal_rates_boundary():
    tb, rl = TokenBucket(40 * MB, 3000), RateLatency(40 * MB, 80 * US)
    assert delay_bound(tb, rl) == 155 * US
    assert sampled_delay(tb, rl, 500 * US) == 155 * US


def test_delay_unbounded_when_service_too_slow():
    with pytest.raises(UnboundedError):
        delay_bound(TokenBucket(50, 1), RateLatency(40, 0))


def test_backlog_capped_arrival_against_impulse():
    alpha = CappedArrival(100 * MB, 1000, TokenBucket(40 * MB, 6200))
    assert backlog_bound(alpha, Impulse(130 * US)) == 11400


def test_backlog_impulse_zero_is_burst():
    assert backlog_bound(TokenBucket(9, 17), Impulse(0)) == 17


def test_backlog_token_bucket_rate_latency():
    tb, rl = TokenBucket(40 * MB, 3000), RateLatency(40 * MB, 80 * US)
    assert backlog_bound(tb, rl) == 6200
    assert sampled_backlog(tb, rl, 400 * US) == 6200


def test_backlog_unbounded():
    with pytest.raises(UnboundedError):
        backlog_bound(TokenBucket(50, 1), RateLatency(40, 0))


def test_deconvolution_examples():
    assert deconvolve_affine(TokenBucket(20 * MB, 4000), RateLatency(100 * MB, 20 * US)) == TokenBucket(20 * MB, 4400)
    assert deconvolve_affine(TokenBucket(3, 4), RateLatency(5, 0)) == TokenBucket(3, 4)
    assert deconvolve_affine(TokenBucket(0, 4), RateLatency(5, 9)) == TokenBucket(0, 4)


def test_pseudo_inverse_examples():
    assert upper_pseudo_inverse(RateLatency(40 * MB, 80 * US), 2000) == 130 * US
    assert upper_pseudo_inverse(RateLatency(3, 7), 0) == 7
    assert upper_pseudo_inverse(RateLatency(100 * MB, 0), 1000) == 10 * US
    with pytest.raises(ValueError):
        upper_pseudo_inverse(RateLatency(1, 1), -1)


def test_output_burst_examples():
    rl = RateLatency(40 * MB, 80 * US)
    assert output_burst(TokenBucket(40 * MB, 3000), 0, rl) == 6200
    assert output_burst(TokenBucket(5, 11), 0, RateLatency(7, 0)) == 11
    assert output_burst(TokenBucket(20 * MB, 1000), 2000, rl) == 3600


# --------------------------------------------------------------------------- properties

rates = st.integers(1, 10**4).map(Q)
bursts = st.integers(0, 10**4).map(Q)
latencies = st.fractions(0, 10, max_denominator=1000)


@st.composite
def bucket_and_server(draw):
    r = draw(rates)
    R = r + draw(st.integers(0, 10**4))
    return TokenBucket(r, draw(bursts)), RateLatency(R, draw(latencies))


@given(bucket_and_server())
def test_delay_is_pseudo_inverse_of_burst(pair):
    tb, rl = pair
    assert delay_bound(tb, rl) == upper_pseudo_inverse(rl, tb.burst)


@st.composite
def capped(draw):
    tb = TokenBucket(draw(rates), draw(bursts))
    line = tb.rate + draw(st.integers(1, 10**4))
    return CappedArrival(line, draw(bursts), tb)


@given(st.one_of(capped(), st.builds(TokenBucket, rates, bursts)), latencies)
def test_backlog_against_impulse_is_value_at_delay(alpha, d):
    assert backlog_bound(alpha, Impulse(d)) == evaluate(alpha, d)


@given(bucket_and_server(), st.integers(0, 100), st.integers(0, 100))
def test_monotone_in_burst_and_rate(pair, extra_burst, rate_cut):
    tb, rl = pair
    bigger = TokenBucket(tb.rate, tb.burst + extra_burst)
    slower = RateLatency(max(tb.rate, rl.rate - rate_cut), rl.latency)
    assert delay_bound(bigger, rl) >= delay_bound(tb, rl)
    assert backlog_bound(bigger, rl) >= backlog_bound(tb, rl)
    assert delay_bound(tb, slower) >= delay_bound(tb, rl)
    assert backlog_bound(tb, slower) >= backlog_bound(tb, rl)


@settings(max_examples=40)
@given(capped(), st.integers(1, 10**4), latencies)
def test_capped_deviations_match_sampling(alpha, extra, latency):
    rl = RateLatency(alpha.rate + extra, latency)
    # the kinks of both curves lie inside the sampled window and on the grid
    end = 4 * (max(alpha.crossing(), latency) + 1)
    pts = sorted(set(grid(end, 400)) | {alpha.crossing(), latency})
    worst_backlog = max(evaluate(alpha, s) - evaluate(rl, s) for s in pts)
    worst_delay = max(rl.latency + evaluate(alpha, s) / rl.rate - s for s in pts)
    assert backlog_bound(alpha, rl) == worst_backlog
    assert delay_bound(alpha, rl) == worst_delay


@settings(max_examples=30)
@given(bucket_and_server(), st.integers(0, 20))
def test_deconvolution_matches_brute_force(pair, k):
    tb, rl = pair
    out = deconvolve_affine(tb, rl)
    t = Q(k, 4)
    # sup_u alpha(t+u) - beta(u): the bucket grows slower than the server, so
    # the sup sits at u <= T; sample that range finely and include T itself
    us = grid(rl.latency, 200) + [rl.latency]
    brute = max(evaluate(tb, t + u) - evaluate(rl, u) for u in us)
    assert brute == evaluate(out, t)
