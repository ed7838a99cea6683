#include <cmath>

#include "costeer/rng.hpp"
#include "costeer/steering.hpp"
#include "doctest.h"

using namespace costeer;

namespace {

Policy random_policy(Rng& rng, std::size_t n) {
  std::vector<double> logits(n);
  for (double& x : logits) x = 2.0 * rng.normal();
  return normalize(logits);
}

Policy uniform_policy(std::size_t n) { return normalize(std::vector<double>(n, 0.0)); }

}  // namespace

TEST_CASE("compute_delta") {
  const Policy base = normalize(std::vector<double>{std::log(0.5), std::log(0.5)});
  const Policy pers = normalize(std::vector<double>{std::log(0.8), std::log(0.2)});
  const DeltaSignal d = compute_delta(pers, base);
  CHECK(d.delta[0] == doctest::Approx(0.47000362924573563).epsilon(1e-9));
  CHECK(d.delta[1] == doctest::Approx(-0.916290731874155).epsilon(1e-9));
  const DeltaSignal z = compute_delta(base, base);
  CHECK(z.delta[0] == 0.0);
  CHECK(z.delta[1] == 0.0);
  CHECK_THROWS_AS(compute_delta(base, uniform_policy(3)), Error);
}

TEST_CASE("utility_step") {
  SteerParams params;  // alpha=2, beta=1
  const Policy base = uniform_policy(3);
  const DeltaSignal zero = DeltaSignal::zeros(3);
  const auto u0 = utility_step(base, base, zero, params);
  for (double x : u0) CHECK(x == 0.0);

  Rng rng(3);
  const Policy cur = random_policy(rng, 3);
  DeltaSignal d;
  d.delta = {0.3, -0.1, 0.7};
  const auto u = utility_step(cur, base, d, params);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(u[i] ==
          doctest::Approx(2.0 * (cur[i] - base[i]) + 1.0 * d.delta[i]).epsilon(1e-12));

  // With pi_current == pi_base and beta=1 the utility is exactly delta.
  const auto u2 = utility_step(base, base, d, params);
  for (std::size_t i = 0; i < 3; ++i) CHECK(u2[i] == doctest::Approx(d.delta[i]).epsilon(1e-15));
}

TEST_CASE("ftrl_update hand instance") {
  // pi_0 uniform over 3, delta from uniform -> (0.6, 0.3, 0.1), defaults.
  const Policy pi0 = uniform_policy(3);
  const Policy pers =
      normalize(std::vector<double>{std::log(0.6), std::log(0.3), std::log(0.1)});
  const DeltaSignal delta = compute_delta(pers, pi0);
  SteerParams params;
  params.iterations = 1;

  UtilityAccumulator acc = UtilityAccumulator::start(pi0);
  acc.accumulate(utility_step(acc.pi_prev, acc.pi_0, delta, params));
  const Policy pi1 = ftrl_update(acc, params);
  CHECK(std::exp(pi1[0]) == doctest::Approx(0.466219).epsilon(1e-4));
  CHECK(std::exp(pi1[1]) == doctest::Approx(0.335152).epsilon(1e-4));
  CHECK(std::exp(pi1[2]) == doctest::Approx(0.198629).epsilon(1e-4));

  // The same instance agrees with the independent maximizer.
  const Policy oracle = oracle_maximize(acc, params);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(std::exp(oracle[i]) == doctest::Approx(std::exp(pi1[i])).epsilon(1e-4));

  // Scaling coefficient at the defaults.
  CHECK(1.0 / (1.0 * params.lambda + 1.0 / params.eta) == doctest::Approx(1.0 / 2.1).epsilon(1e-15));
}

TEST_CASE("ftrl_update fixed point") {
  const Policy pi0 = uniform_policy(4);
  SteerParams params;
  UtilityAccumulator acc = UtilityAccumulator::start(pi0);
  acc.accumulate(std::vector<double>(4, 0.0));
  const Policy pi1 = ftrl_update(acc, params);
  for (std::size_t i = 0; i < 4; ++i) CHECK(pi1[i] == doctest::Approx(pi0[i]).epsilon(1e-12));
}

TEST_CASE("steer zero-delta fixed point") {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = static_cast<std::size_t>(rng.uniform_int(2, 9));
    SteerParams params;
    params.alpha = rng.uniform(0.0, 3.0);
    params.beta = rng.uniform(0.0, 2.0);
    params.lambda = rng.uniform(0.1, 4.0);
    params.eta = rng.uniform(1.0, 20.0);
    params.iterations = static_cast<int>(rng.uniform_int(1, 100));
    const Policy pi = random_policy(rng, n);
    const Policy out = steer(pi, DeltaSignal::zeros(n), params);
    for (std::size_t a = 0; a < n; ++a)
      CHECK(std::exp(out[a]) == doctest::Approx(std::exp(pi[a])).epsilon(1e-9));
  }
}

TEST_CASE("steer T=1 equals light_steer") {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = static_cast<std::size_t>(rng.uniform_int(2, 8));
    SteerParams params;
    params.alpha = rng.uniform(0.5, 3.0);
    params.beta = rng.uniform(0.3, 2.0);
    params.lambda = rng.uniform(0.5, 4.0);
    params.eta = rng.uniform(2.0, 20.0);
    params.iterations = 1;
    const Policy pi = random_policy(rng, n);
    const DeltaSignal d = compute_delta(random_policy(rng, n), random_policy(rng, n));
    const Policy full = steer(pi, d, params);
    const Policy light = light_steer(pi, d, params.beta_star());
    for (std::size_t a = 0; a < n; ++a) CHECK(full[a] == doctest::Approx(light[a]).epsilon(1e-12));
  }
  SteerParams defaults;
  CHECK(defaults.beta_star() == doctest::Approx(1.0 / 2.1).epsilon(1e-15));
}

TEST_CASE("light_steer hand values") {
  const Policy base = normalize(std::vector<double>{std::log(0.5), std::log(0.5)});
  DeltaSignal d;
  d.delta = {std::log(1.6), std::log(0.4)};
  const Policy out = light_steer(base, d, 1.0);
  CHECK(std::exp(out[0]) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(std::exp(out[1]) == doctest::Approx(0.2).epsilon(1e-12));
  const Policy same = light_steer(base, d, 0.0);
  CHECK(same[0] == doctest::Approx(base[0]).epsilon(1e-15));
}

TEST_CASE("steering gradient matches finite differences") {
  // The oracle trusts this gradient, so pin it to the objective numerically.
  Rng rng(6);
  for (int i = 0; i < 20; ++i) {
    const std::size_t n = static_cast<std::size_t>(rng.uniform_int(2, 6));
    SteerParams params;
    params.lambda = rng.uniform(0.5, 4.0);
    params.eta = rng.uniform(2.0, 20.0);
    UtilityAccumulator acc = UtilityAccumulator::start(random_policy(rng, n));
    std::vector<double> u(n);
    for (double& x : u) x = rng.normal();
    acc.accumulate(u);
    acc.advance(random_policy(rng, n));
    acc.accumulate(u);

    const Policy at = random_policy(rng, n);
    const std::vector<double> grad = steering_gradient(at.log_probs(), acc, params);
    const double h = 1e-6;
    for (std::size_t a = 0; a < n; ++a) {
      // Perturb p(a) directly; the objective is a function of the full
      // (unnormalized) coordinates, matching the Lagrangian's partials.
      std::vector<double> up = at.log_probs(), dn = at.log_probs();
      const double p = std::exp(at[a]);
      up[a] = std::log(p + h);
      dn[a] = std::log(p - h);
      const double fd =
          (steering_objective(up, acc, params) - steering_objective(dn, acc, params)) / (2 * h);
      CHECK(grad[a] == doctest::Approx(fd).epsilon(1e-4));
    }
  }
}

TEST_CASE("oracle_maximize basics") {
  const Policy pi0 = uniform_policy(4);
  SteerParams params;
  UtilityAccumulator acc = UtilityAccumulator::start(pi0);
  acc.accumulate(std::vector<double>(4, 0.0));
  const Policy p = oracle_maximize(acc, params);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(std::exp(p[i]) == doctest::Approx(std::exp(pi0[i])).epsilon(1e-6));

  // The maximizer beats random simplex points.
  Rng rng(7);
  UtilityAccumulator acc2 = UtilityAccumulator::start(random_policy(rng, 4));
  std::vector<double> u(4);
  for (double& x : u) x = 2.0 * rng.normal();
  acc2.accumulate(u);
  const Policy star = oracle_maximize(acc2, params);
  const double best = steering_objective(star.log_probs(), acc2, params);
  for (int i = 0; i < 1000; ++i) {
    const Policy probe = random_policy(rng, 4);
    CHECK(best >= steering_objective(probe.log_probs(), acc2, params) - 1e-9);
  }

  CHECK_THROWS_AS(oracle_maximize(UtilityAccumulator::start(uniform_policy(9)), params), Error);
}

TEST_CASE("ftrl denominator skew is caught by the oracle") {
  Rng rng(8);
  SteerParams params;
  params.iterations = 3;
  const Policy pi0 = random_policy(rng, 4);
  const DeltaSignal d = compute_delta(random_policy(rng, 4), random_policy(rng, 4));

  internal::set_ftrl_denominator_skew(0.25);
  UtilityAccumulator acc = UtilityAccumulator::start(pi0);
  bool detected = false;
  for (int t = 1; t <= 3; ++t) {
    acc.accumulate(utility_step(acc.pi_prev, acc.pi_0, d, params));
    const Policy closed = ftrl_update(acc, params);
    const Policy oracle = oracle_maximize(acc, params);
    double tv = 0.0;
    for (std::size_t i = 0; i < 4; ++i) tv += std::abs(std::exp(closed[i]) - std::exp(oracle[i]));
    if (0.5 * tv > 1e-4) detected = true;
    acc.advance(closed);
  }
  internal::set_ftrl_denominator_skew(0.0);
  CHECK(detected);
}

TEST_CASE("la_adjust") {
  const Policy plain = normalize(std::vector<double>{std::log(0.5), std::log(0.5)});
  const Policy ctx = normalize(std::vector<double>{std::log(0.8), std::log(0.2)});
  const Policy s1 = la_adjust(ctx, plain, 1.0);
  for (std::size_t i = 0; i < 2; ++i) CHECK(s1[i] == doctest::Approx(ctx[i]).epsilon(1e-12));
  const Policy s0 = la_adjust(ctx, plain, 0.0);
  for (std::size_t i = 0; i < 2; ++i) CHECK(s0[i] == doctest::Approx(plain[i]).epsilon(1e-12));
  const Policy s2 = la_adjust(ctx, plain, 2.0);
  CHECK(std::exp(s2[0]) == doctest::Approx(16.0 / 17.0).epsilon(1e-9));
  CHECK(std::exp(s2[1]) == doctest::Approx(1.0 / 17.0).epsilon(1e-9));
}

TEST_CASE("proxy_combine") {
  const std::vector<double> llm{0.0, 0.0};
  const std::vector<double> expert{std::log(4.0), 0.0};
  const std::vector<double> base{std::log(2.0), 0.0};
  const Policy p = proxy_combine(llm, expert, base);
  CHECK(std::exp(p[0]) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(std::exp(p[1]) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  // expert == base cancels exactly.
  const Policy q = proxy_combine(std::vector<double>{0.3, -0.7}, base, base);
  const Policy want = normalize(std::vector<double>{0.3, -0.7});
  for (std::size_t i = 0; i < 2; ++i) CHECK(q[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("steer params validation") {
  SteerParams p;
  p.lambda = 0.0;
  CHECK_THROWS_AS(p.validate(), Error);
  p.lambda = 2.0;
  p.eta = -1.0;
  CHECK_THROWS_AS(p.validate(), Error);
  p.eta = 10.0;
  p.iterations = 0;
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("steer shift invariance end to end") {
  // Shifting all raw logits of every input model leaves the result unchanged.
  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    const std::size_t n = static_cast<std::size_t>(rng.uniform_int(2, 6));
    std::vector<double> llm(n), sb(n), sp(n);
    for (std::size_t j = 0; j < n; ++j) {
      llm[j] = 2.0 * rng.normal();
      sb[j] = 2.0 * rng.normal();
      sp[j] = 2.0 * rng.normal();
    }
    SteerParams params;
    const Policy out1 =
        steer(normalize(llm), compute_delta(normalize(sp), normalize(sb)), params);
    const double c = rng.uniform(-30.0, 30.0);
    for (std::size_t j = 0; j < n; ++j) {
      llm[j] += c;
      sb[j] += c * 0.5;
      sp[j] += c * 0.25;
    }
    const Policy out2 =
        steer(normalize(llm), compute_delta(normalize(sp), normalize(sb)), params);
    for (std::size_t j = 0; j < n; ++j)
      CHECK(out1[j] == doctest::Approx(out2[j]).epsilon(1e-12));
  }
}
