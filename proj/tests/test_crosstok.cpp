#include <cmath>

#include "costeer/crosstok.hpp"
#include "costeer/fixtures.hpp"
#include "costeer/rng.hpp"
#include "costeer/synthmodels.hpp"
#include "doctest.h"

using namespace costeer;

namespace {

Vocabulary vocab_of(std::vector<std::string> tokens, TokenId eos) {
  Vocabulary v;
  v.token_bytes = std::move(tokens);
  v.eos_id = eos;
  return v;
}

}  // namespace

TEST_CASE("build_intersection") {
  const Vocabulary a = vocab_of({"he", "llo", "hello", "x"}, 3);
  const Vocabulary b = vocab_of({"hello", "he", "y"}, 2);
  const IntersectionMap map = build_intersection(a, b);
  REQUIRE(map.shared_size() == 2);
  // byte-lexicographic order: "he" < "hello"
  CHECK(a.token_bytes[map.llm_ids[0]] == "he");
  CHECK(b.token_bytes[map.slm_ids[0]] == "he");
  CHECK(a.token_bytes[map.llm_ids[1]] == "hello");
  CHECK(b.token_bytes[map.slm_ids[1]] == "hello");

  const Vocabulary same = vocab_of({"a", "b", "c"}, 2);
  const IntersectionMap id_map = build_intersection(same, same);
  CHECK(id_map.shared_size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(id_map.llm_ids[i] == id_map.slm_ids[i]);

  const Vocabulary disjoint = vocab_of({"q", "r"}, 1);
  CHECK_THROWS_AS(build_intersection(same, disjoint), Error);
}

TEST_CASE("project_to_shared") {
  const Vocabulary same = vocab_of({"a", "b", "c"}, 2);  // lex order == id order
  const IntersectionMap id_map = build_intersection(same, same);
  const std::vector<double> logits{1.0, 2.0, 3.0};
  CHECK(project_to_shared(logits, id_map, MapSide::kLlm) == logits);

  IntersectionMap gather;
  gather.llm_ids = {3, 0};
  gather.slm_ids = {0, 1};
  const std::vector<double> v{10, 11, 12, 13, 14};
  const auto out = project_to_shared(v, gather, MapSide::kLlm);
  CHECK(out == std::vector<double>{13, 10});
  CHECK_THROWS_AS(project_to_shared(std::vector<double>{1.0}, gather, MapSide::kLlm), Error);
}

TEST_CASE("steer_in_shared_space remaps to equal byte strings") {
  Rng rng(21);
  SteerParams params;
  for (int i = 0; i < 200; ++i) {
    const Vocabulary va = fixtures::random_prefix_closed_vocab(rng, 3, 5);
    const Vocabulary vb = fixtures::random_prefix_closed_vocab(rng, 3, 5);
    const IntersectionMap map = build_intersection(va, vb);
    std::vector<double> la(va.size()), lb(vb.size()), lc(vb.size());
    for (double& x : la) x = 2.0 * rng.normal();
    for (double& x : lb) x = 2.0 * rng.normal();
    for (double& x : lc) x = 2.0 * rng.normal();
    const SharedStepResult r = steer_in_shared_space(la, lb, lc, map, params);
    CHECK(va.token_bytes[r.llm_id] == vb.token_bytes[r.slm_id]);
  }
}

TEST_CASE("byte_project hand examples") {
  const Vocabulary v = vocab_of({"a", "ab", "b"}, 2);
  const Policy p = normalize(std::vector<double>{std::log(0.5), std::log(0.3), std::log(0.2)});

  BytePrefixState fresh = BytePrefixState::fresh({&v});
  const ByteDistribution bd = byte_project(p, fresh, 0, v);
  CHECK(std::exp(bd.log_mass['a']) == doctest::Approx(0.8).epsilon(1e-9));
  CHECK(std::exp(bd.log_mass['b']) == doctest::Approx(0.2).epsilon(1e-9));
  CHECK_FALSE(bd.present(kCommitDim));  // no empty token

  const BytePrefixState after_a = refine_candidates(fresh, 'a');
  CHECK(after_a.candidates[0] == std::vector<TokenId>{0, 1});
  const ByteDistribution bd2 = byte_project(p, after_a, 0, v);
  CHECK(std::exp(bd2.log_mass[kCommitDim]) == doctest::Approx(0.625).epsilon(1e-9));
  CHECK(std::exp(bd2.log_mass['b']) == doctest::Approx(0.375).epsilon(1e-9));
}

TEST_CASE("single byte vocab: byte distribution equals token distribution") {
  const Vocabulary v = vocab_of({"a", "b", "c"}, 2);
  Rng rng(22);
  std::vector<double> logits{rng.normal(), rng.normal(), rng.normal()};
  const Policy p = normalize(logits);
  BytePrefixState fresh = BytePrefixState::fresh({&v});
  const ByteDistribution bd = byte_project(p, fresh, 0, v);
  CHECK(std::exp(bd.log_mass['a']) == doctest::Approx(std::exp(p[0])).epsilon(1e-12));
  CHECK(std::exp(bd.log_mass['b']) == doctest::Approx(std::exp(p[1])).epsilon(1e-12));
  CHECK(std::exp(bd.log_mass['c']) == doctest::Approx(std::exp(p[2])).epsilon(1e-12));
  CHECK_FALSE(bd.present(kCommitDim));

  // after one byte the only candidate commits with probability 1
  const BytePrefixState after = refine_candidates(fresh, 'b');
  const ByteDistribution bd2 = byte_project(p, after, 0, v);
  CHECK(std::exp(bd2.log_mass[kCommitDim]) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("byte_fuse_step zero delta returns the llm distribution") {
  const Vocabulary v = vocab_of({"a", "ab", "b"}, 2);
  const Policy llm = normalize(std::vector<double>{std::log(0.5), std::log(0.3), std::log(0.2)});
  const Policy slm = normalize(std::vector<double>{std::log(0.2), std::log(0.5), std::log(0.3)});
  BytePrefixState fresh = BytePrefixState::fresh({&v, &v});
  const ByteDistribution llm_bd = byte_project(llm, fresh, 0, v);
  const ByteDistribution slm_bd = byte_project(slm, fresh, 1, v);
  SteerParams params;
  const ByteDistribution fused = byte_fuse_step(llm_bd, slm_bd, slm_bd, params);
  for (std::size_t i = 0; i < kByteDims; ++i) {
    if (!llm_bd.present(i)) {
      CHECK_FALSE(fused.present(i));
      continue;
    }
    CHECK(std::exp(fused.log_mass[i]) ==
          doctest::Approx(std::exp(llm_bd.log_mass[i])).epsilon(1e-7));
  }
}

TEST_CASE("commit_resolve") {
  const Vocabulary v = vocab_of({"a", "ab", "b"}, 2);
  const Policy p = normalize(std::vector<double>{std::log(0.5), std::log(0.3), std::log(0.2)});
  BytePrefixState st = BytePrefixState::fresh({&v});
  st = refine_candidates(st, 'a');
  st = refine_candidates(st, 'b');
  CHECK(st.prefix == "ab");
  CHECK(commit_resolve(st, 0, p, v) == 1);

  // no exact candidate: prefix "a" extended by 'b' leaves only "ab"; ask at
  // a state whose prefix has no exact token
  BytePrefixState no_exact = BytePrefixState::fresh({&v});
  no_exact.prefix = "zz";
  no_exact.candidates[0] = {0};
  CHECK_THROWS_AS(commit_resolve(no_exact, 0, p, v), Error);
}

TEST_CASE("refine_candidates error on uncovered byte") {
  const Vocabulary v = vocab_of({"a", "ab", "b"}, 2);
  BytePrefixState st = BytePrefixState::fresh({&v});
  st = refine_candidates(st, 'a');
  CHECK_THROWS_AS(refine_candidates(st, 'z'), Error);
  const BytePrefixState ab = refine_candidates(st, 'b');
  CHECK(ab.candidates[0] == std::vector<TokenId>{1});
}

TEST_CASE("chain rule telescopes to the token probability") {
  Rng rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const Vocabulary v = fixtures::random_prefix_closed_vocab(rng, 3, 6);
    std::vector<double> logits(v.size());
    for (double& x : logits) x = 2.0 * rng.normal();
    const Policy p = normalize(logits);
    for (std::size_t id = 0; id < v.size(); ++id) {
      BytePrefixState st = BytePrefixState::fresh({&v});
      double log_prod = 0.0;
      for (char c : v.token_bytes[id]) {
        const ByteDistribution bd = byte_project(p, st, 0, v);
        log_prod += bd.log_mass[static_cast<unsigned char>(c)];
        st = refine_candidates(st, static_cast<std::uint8_t>(c));
      }
      log_prod += byte_project(p, st, 0, v).log_mass[kCommitDim];
      CHECK(std::exp(log_prod) == doctest::Approx(std::exp(p[id])).epsilon(1e-9));
    }
  }
}

TEST_CASE("fused generation decodes identically on both sides") {
  Rng rng(24);
  for (int trial = 0; trial < 20; ++trial) {
    const Vocabulary va = fixtures::random_prefix_closed_vocab(rng, 3, 6);
    const Vocabulary vb = fixtures::random_prefix_closed_vocab(rng, 3, 6);
    TableProvider llm(fixtures::random_table_model(rng, va, false), -1);
    TableProvider slm(fixtures::random_table_model(rng, vb, true), 0);
    GenConfig cfg;
    cfg.max_tokens = 5;
    const ByteFusedResult res =
        generate_byte_fused(llm, PromptPair{{0}, {}}, slm, PromptPair{{1}, {0}}, cfg);
    ToyTokenizer ta(va), tb(vb);
    CHECK(ta.decode(res.llm_tokens) == res.bytes);
    CHECK(tb.decode(res.slm_tokens) == res.bytes);
    CHECK(res.llm_tokens.size() == res.slm_tokens.size());
    CHECK(res.llm_tokens.size() <= 5);
  }
}
