#include <cmath>
#include <filesystem>

#include "costeer/fixtures.hpp"
#include "costeer/rng.hpp"
#include "costeer/synthmodels.hpp"
#include "doctest.h"

using namespace costeer;

namespace {
const std::filesystem::path kFixtures = COSTEER_FIXTURES_DIR;
}

TEST_CASE("table_eval rule matching") {
  TableModel m;
  m.vocabulary.token_bytes = {"a", "b", "\n"};
  m.vocabulary.eos_id = 2;
  m.default_probs = {0.6, 0.3, 0.1};
  TableRule r;
  r.with_context = true;
  r.prefix = {1};
  r.probs = {0.1, 0.8, 0.1};
  m.rules.push_back(r);
  m.validate();

  const std::vector<TokenId> unmatched{0};
  Policy p = table_eval(m, false, unmatched);
  CHECK(std::exp(p[0]) == doctest::Approx(0.6).epsilon(1e-9));

  const std::vector<TokenId> matched{1};
  p = table_eval(m, true, matched);
  CHECK(std::exp(p[1]) == doctest::Approx(0.8).epsilon(1e-9));
  // flag mismatch falls back to the default
  p = table_eval(m, false, matched);
  CHECK(std::exp(p[0]) == doctest::Approx(0.6).epsilon(1e-9));
}

TEST_CASE("table model json round trip with escapes") {
  TableModel m;
  m.vocabulary.token_bytes = {"a", std::string("\x01\xffZ", 3), "\n"};
  m.vocabulary.eos_id = 2;
  m.default_probs = {0.5, 0.25, 0.25};
  const std::string js = m.to_json();
  const TableModel back = TableModel::parse_json(js);
  CHECK(back.vocabulary.token_bytes == m.vocabulary.token_bytes);
  CHECK(back.vocabulary.eos_id == 2);
  CHECK(back.default_probs == m.default_probs);
}

TEST_CASE("escape round trip") {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    std::string raw;
    const int len = static_cast<int>(rng.uniform_int(1, 12));
    for (int j = 0; j < len; ++j) raw.push_back(static_cast<char>(rng.uniform_int(0, 255)));
    CHECK(unescape_token_bytes(escape_token_bytes(raw)) == raw);
  }
}

TEST_CASE("ngram add-one counts") {
  // corpus "abab" as ids over {a=0, b=1}
  const std::vector<std::vector<TokenId>> corpus{{0, 1, 0, 1}};
  const NGramModel m = ngram_train(corpus, 2, 2);
  const std::vector<TokenId> ctx_a{0};
  const auto lp = m.log_probs(ctx_a);
  CHECK(std::exp(lp[1]) == doctest::Approx(3.0 / 4.0).epsilon(1e-12));  // (2+1)/(2+2)
  CHECK(std::exp(lp[0]) == doctest::Approx(1.0 / 4.0).epsilon(1e-12));

  // unseen context is uniform
  const std::vector<TokenId> unseen{1, 1};
  const auto lp2 = ngram_train(corpus, 3, 2).log_probs(unseen);
  CHECK(std::exp(lp2[0]) == doctest::Approx(0.5).epsilon(1e-12));

  // determinism
  const NGramModel m2 = ngram_train(corpus, 2, 2);
  CHECK(m.log_probs(ctx_a) == m2.log_probs(ctx_a));

  CHECK_THROWS_AS(ngram_train({}, 2, 2), Error);
}

TEST_CASE("personal pair switches on the marker") {
  const std::vector<std::vector<TokenId>> generic{{0, 1, 0, 1, 2}};
  const std::vector<std::vector<TokenId>> user{{2, 2, 2, 0, 2}};
  Vocabulary v;
  v.token_bytes = {"a", "b", "c", "\n", "#"};
  v.eos_id = 3;
  auto pair = make_personal_pair(generic, user, 2, v, 4);

  const std::vector<TokenId> plain_prompt{0};
  const std::vector<TokenId> marked_prompt{0, 4};
  const std::vector<TokenId> gen{};

  const auto base = pair->raw_logits(plain_prompt, gen);
  const auto generic_model = ngram_train(generic, 2, v.size());
  const auto want = generic_model.log_probs(plain_prompt);
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(base[i] == doctest::Approx(want[i]));

  // identical corpora -> marker makes no difference
  auto same = make_personal_pair(generic, generic, 2, v, 4);
  const auto a = same->raw_logits(plain_prompt, gen);
  const auto b = same->raw_logits(marked_prompt, gen);
  // contexts differ (the marker extends the context) so compare on a longer
  // shared suffix instead: condition both on the same last token.
  const std::vector<TokenId> gen2{1};
  const auto a2 = same->raw_logits(plain_prompt, gen2);
  const auto b2 = same->raw_logits(marked_prompt, gen2);
  for (std::size_t i = 0; i < a2.size(); ++i) CHECK(a2[i] == doctest::Approx(b2[i]).epsilon(1e-12));
  (void)a;
  (void)b;

  // disjoint corpora shift the conditional somewhere
  const auto pers = pair->raw_logits(marked_prompt, gen2);
  const auto plain = pair->raw_logits(plain_prompt, gen2);
  double diff = 0.0;
  for (std::size_t i = 0; i < pers.size(); ++i) diff += std::abs(pers[i] - plain[i]);
  CHECK(diff > 1e-6);
}

TEST_CASE("toy tokenizer greedy longest match") {
  Vocabulary v;
  v.token_bytes = {"a", "b", "ab", "\n"};
  v.eos_id = 3;
  ToyTokenizer tok(v);
  CHECK(tok.encode("ab") == std::vector<TokenId>{2});
  CHECK(tok.encode("ba") == std::vector<TokenId>{1, 0});
  CHECK_THROWS_AS(tok.encode("az"), Error);

  Rng rng(12);
  for (int i = 0; i < 1000; ++i) {
    std::string s;
    const int len = static_cast<int>(rng.uniform_int(1, 16));
    for (int j = 0; j < len; ++j) s.push_back(rng.uniform() < 0.5 ? 'a' : 'b');
    CHECK(tok.decode(tok.encode(s)) == s);
  }
}

TEST_CASE("tokenizer json round trip") {
  Vocabulary v;
  v.token_bytes = {"a", "xy", "\n"};
  v.eos_id = 2;
  ToyTokenizer tok(v);
  const ToyTokenizer back = ToyTokenizer::parse_json(tok.to_json());
  CHECK(back.vocab().token_bytes == v.token_bytes);
  CHECK(back.vocab().eos_id == v.eos_id);
}

TEST_CASE("fixture corpora load and steer direction fixture exists") {
  const auto fx = fixtures::load_ngram_fixture(kFixtures / "generic_corpus.txt",
                                               kFixtures / "user_corpus.txt");
  CHECK(fx.vocab.size() == 8);
  const PromptPair p = fixtures::seeded_prompt(0);
  CHECK(p.base_query.size() == 2);
  CHECK(p.personal_context.size() == 4);
  CHECK(p.personal_context[0] == fixtures::kLettersMarker);
  // provider sanity: both calls produce proper policies
  const Policy base = fx.slm->policy(p.base_query, {});
  const Policy pers = fx.slm->policy(p.combined(), {});
  CHECK(base.size() == 8);
  CHECK(pers.size() == 8);
}

TEST_CASE("corpus tokenization appends eos per line") {
  ToyTokenizer tok(fixtures::letters_vocab());
  const auto seqs = tokenize_corpus_lines("ab\ncd\n", tok, fixtures::kLettersEos);
  CHECK(seqs.size() == 2);
  CHECK(seqs[0] == std::vector<TokenId>{0, 1, fixtures::kLettersEos});
  CHECK(seqs[1] == std::vector<TokenId>{2, 3, fixtures::kLettersEos});
  CHECK_THROWS_AS(tokenize_corpus_lines("\n\n", tok, fixtures::kLettersEos), Error);
}
