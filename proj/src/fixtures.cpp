#include "costeer/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace costeer::fixtures {

Vocabulary letters_vocab() {
  Vocabulary v;
  v.token_bytes = {"a", "b", "c", "d", "e", "f", "\n", "#"};
  v.eos_id = kLettersEos;
  return v;
}

NgramFixture load_ngram_fixture(const std::filesystem::path& generic_file,
                                const std::filesystem::path& user_file) {
  NgramFixture fx;
  fx.vocab = letters_vocab();
  ToyTokenizer tok(fx.vocab);
  const auto generic =
      tokenize_corpus_lines(read_text_file(generic_file), tok, fx.vocab.eos_id);
  const auto user = tokenize_corpus_lines(read_text_file(user_file), tok, fx.vocab.eos_id);

  fx.llm = std::make_unique<NGramProvider>(ngram_train(generic, 3, fx.vocab.size()), fx.vocab);
  fx.slm = make_personal_pair(generic, user, 2, fx.vocab, kLettersMarker);
  return fx;
}

PromptPair seeded_prompt(std::uint64_t seed) {
  Rng rng(seed * 2654435761u + 17);
  PromptPair p;
  for (int i = 0; i < 2; ++i) p.base_query.push_back(static_cast<TokenId>(rng.uniform_int(0, 5)));
  p.personal_context.push_back(kLettersMarker);
  for (int i = 0; i < 3; ++i)
    p.personal_context.push_back(static_cast<TokenId>(rng.uniform_int(0, 5)));
  return p;
}

namespace {

std::vector<double> random_distribution(Rng& rng, std::size_t n, double eos_mass, TokenId eos) {
  std::vector<double> probs(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    probs[i] = 0.05 + rng.uniform();
    sum += probs[i];
  }
  const double scale = (1.0 - eos_mass) / (sum - probs[eos]);
  for (std::size_t i = 0; i < n; ++i) probs[i] *= scale;
  probs[eos] = eos_mass;
  double total = 0.0;
  for (double p : probs) total += p;
  for (double& p : probs) p /= total;
  return probs;
}

}  // namespace

TablePair random_table_pair(Rng& rng, std::size_t n_letters) {
  Vocabulary v;
  for (std::size_t i = 0; i < n_letters; ++i)
    v.token_bytes.push_back(std::string(1, static_cast<char>('a' + i)));
  v.token_bytes.push_back("#");   // marker
  v.token_bytes.push_back("\n");  // eos
  v.eos_id = static_cast<TokenId>(v.token_bytes.size() - 1);
  const TokenId marker = static_cast<TokenId>(v.token_bytes.size() - 2);

  const double eos_mass = rng.uniform(0.03, 0.10);
  TablePair pair;
  pair.marker = marker;
  pair.llm.vocabulary = v;
  pair.llm.default_probs = random_distribution(rng, v.size(), eos_mass, v.eos_id);
  pair.slm.vocabulary = v;
  pair.slm.default_probs = random_distribution(rng, v.size(), eos_mass, v.eos_id);

  // A handful of exact-prefix rules; the with-context copies are resampled so
  // the personal delta is nonzero on those steps.
  const int n_rules = static_cast<int>(rng.uniform_int(2, 5));
  for (int i = 0; i < n_rules; ++i) {
    TableRule r;
    const int plen = static_cast<int>(rng.uniform_int(0, 2));
    for (int j = 0; j < plen; ++j)
      r.prefix.push_back(static_cast<TokenId>(rng.uniform_int(0, n_letters - 1)));
    r.with_context = false;
    r.probs = random_distribution(rng, v.size(), eos_mass, v.eos_id);
    pair.slm.rules.push_back(r);
    r.with_context = true;
    r.probs = random_distribution(rng, v.size(), eos_mass, v.eos_id);
    pair.slm.rules.push_back(r);
  }
  pair.llm.validate();
  pair.slm.validate();
  return pair;
}

PromptPair random_prompt(Rng& rng, const TablePair& pair) {
  const std::size_t n_letters = pair.llm.vocabulary.size() - 2;
  PromptPair p;
  const int base_len = static_cast<int>(rng.uniform_int(1, 3));
  for (int i = 0; i < base_len; ++i)
    p.base_query.push_back(static_cast<TokenId>(rng.uniform_int(0, n_letters - 1)));
  p.personal_context.push_back(pair.marker);
  const int pers_len = static_cast<int>(rng.uniform_int(1, 2));
  for (int i = 0; i < pers_len; ++i)
    p.personal_context.push_back(static_cast<TokenId>(rng.uniform_int(0, n_letters - 1)));
  return p;
}

Vocabulary random_prefix_closed_vocab(Rng& rng, int alphabet_size, int extra_tokens,
                                      int max_token_len) {
  std::set<std::string> tokens;
  for (int i = 0; i < alphabet_size; ++i) tokens.insert(std::string(1, static_cast<char>('a' + i)));
  std::vector<std::string> pool(tokens.begin(), tokens.end());
  int attempts = 0;
  int added = 0;
  while (added < extra_tokens && attempts < extra_tokens * 8) {
    ++attempts;
    const std::string& stem = pool[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))];
    if (static_cast<int>(stem.size()) >= max_token_len) continue;
    std::string cand = stem + static_cast<char>('a' + rng.uniform_int(0, alphabet_size - 1));
    if (tokens.insert(cand).second) {
      pool.push_back(cand);
      ++added;
    }
  }
  tokens.insert("\n");
  Vocabulary v;
  v.token_bytes.assign(tokens.begin(), tokens.end());
  for (std::size_t i = 0; i < v.token_bytes.size(); ++i)
    if (v.token_bytes[i] == "\n") v.eos_id = static_cast<TokenId>(i);
  return v;
}

TableModel random_table_model(Rng& rng, Vocabulary vocab, bool with_context_rules) {
  TableModel m;
  m.vocabulary = std::move(vocab);
  const double eos_mass = rng.uniform(0.05, 0.15);
  m.default_probs = random_distribution(rng, m.vocabulary.size(), eos_mass, m.vocabulary.eos_id);
  const int n_rules = static_cast<int>(rng.uniform_int(1, 3));
  for (int i = 0; i < n_rules; ++i) {
    TableRule r;
    const int plen = static_cast<int>(rng.uniform_int(1, 2));
    for (int j = 0; j < plen; ++j)
      r.prefix.push_back(
          static_cast<TokenId>(rng.uniform_int(0, static_cast<std::int64_t>(m.vocabulary.size()) - 1)));
    r.with_context = false;
    r.probs = random_distribution(rng, m.vocabulary.size(), eos_mass, m.vocabulary.eos_id);
    m.rules.push_back(r);
    if (with_context_rules) {
      r.with_context = true;
      r.probs = random_distribution(rng, m.vocabulary.size(), eos_mass, m.vocabulary.eos_id);
      m.rules.push_back(r);
    }
  }
  m.validate();
  return m;
}

ScriptedConfidenceProvider::ScriptedConfidenceProvider(Vocabulary vocab,
                                                       std::vector<double> confidences)
    : vocab_(std::move(vocab)), confidences_(std::move(confidences)) {
  vocab_.validate();
  for (double c : confidences_) {
    if (!(c > 0.0 && c < 1.0)) fail(Err::kInvalidArgument, "confidence must be in (0,1)");
  }
}

std::vector<double> ScriptedConfidenceProvider::raw_logits(
    std::span<const TokenId>, std::span<const TokenId> generated) const {
  const std::size_t step = generated.size();
  const double conf =
      step < confidences_.size() ? confidences_[step] : confidences_.back();
  const std::size_t n = vocab_.size();
  std::vector<double> logits(n, std::log((1.0 - conf) / static_cast<double>(n - 1)));
  logits[0] = std::log(conf);
  return logits;
}

}  // namespace costeer::fixtures
