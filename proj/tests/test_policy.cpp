#include <cmath>
#include <limits>

#include "costeer/policy.hpp"
#include "costeer/rng.hpp"
#include "doctest.h"

using namespace costeer;

namespace {

Policy random_policy(Rng& rng, std::size_t n) {
  std::vector<double> logits(n);
  for (double& x : logits) x = 2.0 * rng.normal();
  return normalize(logits);
}

}  // namespace

TEST_CASE("normalize basics") {
  const Policy p = normalize(std::vector<double>{0.0, 0.0});
  CHECK(std::exp(p[0]) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::exp(p[1]) == doctest::Approx(0.5).epsilon(1e-12));

  const Policy q = normalize(std::vector<double>{std::log(2.0), 0.0, 0.0});
  CHECK(std::exp(q[0]) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::exp(q[1]) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(std::exp(q[2]) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("normalize shift invariance") {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = static_cast<std::size_t>(rng.uniform_int(2, 12));
    std::vector<double> v(n), shifted(n);
    const double c = rng.uniform(-50.0, 50.0);
    for (std::size_t j = 0; j < n; ++j) {
      v[j] = 3.0 * rng.normal();
      shifted[j] = v[j] + c;
    }
    const Policy a = normalize(v), b = normalize(shifted);
    for (std::size_t j = 0; j < n; ++j) CHECK(a[j] == doctest::Approx(b[j]).epsilon(1e-12));
  }
}

TEST_CASE("normalize clamps -inf and stays a distribution") {
  const double inf = std::numeric_limits<double>::infinity();
  const Policy p = normalize(std::vector<double>{0.0, -inf, 1.0});
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += std::exp(p[i]);
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(p[1] >= std::log(kEpsFloor) - 1e-9);
}

TEST_CASE("normalize errors") {
  CHECK_THROWS_AS(normalize(std::vector<double>{}), Error);
  CHECK_THROWS_AS(normalize(std::vector<double>{0.0, std::nan("")}), Error);
  CHECK_THROWS_AS(normalize(std::vector<double>{0.0, std::numeric_limits<double>::infinity()}),
                  Error);
  const double ninf = -std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(normalize(std::vector<double>{ninf, ninf}), Error);
  try {
    normalize(std::vector<double>{});
  } catch (const Error& e) {
    CHECK(e.code() == Err::kEmptyVector);
  }
}

TEST_CASE("kl divergence") {
  const Policy u2 = normalize(std::vector<double>{0.0, 0.0});
  const Policy p = normalize(std::vector<double>{std::log(0.8), std::log(0.2)});
  CHECK(kl_divergence(u2, u2) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(kl_divergence(u2, p) == doctest::Approx(0.22314355131).epsilon(1e-9));
  CHECK_THROWS_AS(kl_divergence(u2, normalize(std::vector<double>{0.0, 0.0, 0.0})), Error);

  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = static_cast<std::size_t>(rng.uniform_int(2, 10));
    const Policy a = random_policy(rng, n), b = random_policy(rng, n);
    CHECK(kl_divergence(a, b) >= -1e-12);
    CHECK(kl_divergence(a, a) == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("argmax and confidence") {
  const Policy p = normalize(std::vector<double>{std::log(0.2), std::log(0.5), std::log(0.3)});
  CHECK(argmax_token(p) == 1);
  const Policy tie = normalize(std::vector<double>{std::log(0.4), std::log(0.4), std::log(0.2)});
  CHECK(argmax_token(tie) == 0);
  const Policy unif = normalize(std::vector<double>(5, 0.0));
  CHECK(argmax_token(unif) == 0);
  CHECK(confidence(unif) == doctest::Approx(0.2).epsilon(1e-12));
  const Policy q = normalize(std::vector<double>{std::log(0.7), std::log(0.3)});
  CHECK(confidence(q) == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("vocabulary and prompt validation") {
  Vocabulary v;
  v.token_bytes = {"a"};
  v.eos_id = 0;
  CHECK_THROWS_AS(v.validate(), Error);
  v.token_bytes = {"a", ""};
  CHECK_THROWS_AS(v.validate(), Error);
  v.token_bytes = {"a", "b"};
  v.eos_id = 2;
  CHECK_THROWS_AS(v.validate(), Error);
  v.eos_id = 1;
  CHECK_NOTHROW(v.validate());

  PromptPair p;
  CHECK_THROWS_AS(p.validate(), Error);
  p.base_query = {0};
  CHECK_NOTHROW(p.validate());
}

TEST_CASE("recording provider captures prompts") {
  Vocabulary v;
  v.token_bytes = {"a", "b", "\n"};
  v.eos_id = 2;
  struct Uniform : PolicyProvider {
    Vocabulary vb;
    const Vocabulary& vocab() const override { return vb; }
    std::vector<double> raw_logits(std::span<const TokenId>,
                                   std::span<const TokenId>) const override {
      return {0.0, 0.0, 0.0};
    }
  } inner;
  inner.vb = v;
  RecordingProvider rec(inner);
  (void)rec.raw_logits(std::vector<TokenId>{0, 1}, std::vector<TokenId>{1});
  CHECK(rec.calls().size() == 1);
  CHECK(rec.calls()[0].first == std::vector<TokenId>{0, 1});
}
