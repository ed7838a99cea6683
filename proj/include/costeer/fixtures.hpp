#pragma once

#include <filesystem>
#include <memory>

#include "costeer/policy.hpp"
#include "costeer/rng.hpp"
#include "costeer/synthmodels.hpp"

namespace costeer::fixtures {

// Character vocabulary of the shipped n-gram corpora: letters a..f, newline
// as EOS, '#' as the personal-context marker.
Vocabulary letters_vocab();
inline constexpr TokenId kLettersEos = 6;
inline constexpr TokenId kLettersMarker = 7;

struct NgramFixture {
  Vocabulary vocab;
  std::unique_ptr<PolicyProvider> llm;  // trigram over the generic corpus
  std::unique_ptr<PolicyProvider> slm;  // bigram personal pair
};

NgramFixture load_ngram_fixture(const std::filesystem::path& generic_file,
                                const std::filesystem::path& user_file);

// Seeded session prompt on the letters vocabulary: a short base query plus a
// marker-led personal context.
PromptPair seeded_prompt(std::uint64_t seed);

// Random scripted pair over a shared single-char vocabulary (last two ids are
// marker and EOS). The SLM carries with-context rules so deltas are nonzero.
struct TablePair {
  TableModel llm;
  TableModel slm;
  TokenId marker;
};
TablePair random_table_pair(Rng& rng, std::size_t n_letters);

PromptPair random_prompt(Rng& rng, const TablePair& pair);

// Random prefix-closed vocabulary over alphabet {a..alphabet_size letters}
// plus a newline EOS: every token's proper prefixes are tokens too, so fused
// byte decoding always has a commit available.
Vocabulary random_prefix_closed_vocab(Rng& rng, int alphabet_size, int extra_tokens,
                                      int max_token_len = 3);

// Random table model over an arbitrary vocabulary: smooth default vector plus
// a few exact-prefix rules; EOS mass kept moderate.
TableModel random_table_model(Rng& rng, Vocabulary vocab, bool with_context_rules);

// Provider whose policy depends only on the number of generated tokens: the
// argmax token keeps the scripted confidence, the rest share the remainder.
class ScriptedConfidenceProvider : public PolicyProvider {
 public:
  ScriptedConfidenceProvider(Vocabulary vocab, std::vector<double> confidences);

  const Vocabulary& vocab() const override { return vocab_; }
  std::vector<double> raw_logits(std::span<const TokenId> prompt,
                                 std::span<const TokenId> generated) const override;

 private:
  Vocabulary vocab_;
  std::vector<double> confidences_;
};

}  // namespace costeer::fixtures
