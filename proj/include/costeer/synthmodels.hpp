#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "costeer/policy.hpp"

namespace costeer {

// ---------------------------------------------------------------------------
// Scripted table models: explicit per-prefix distributions with a fallback.
// ---------------------------------------------------------------------------

struct TableRule {
  bool with_context = false;
  std::vector<TokenId> prefix;
  std::vector<double> probs;
};

struct TableModel {
  Vocabulary vocabulary;
  std::vector<TableRule> rules;
  std::vector<double> default_probs;

  void validate() const;

  static TableModel load_json(const std::filesystem::path& file);
  static TableModel parse_json(const std::string& text);
  std::string to_json() const;
};

// Exact rule match on (context flag, generated prefix); otherwise the default
// vector. Result is normalized and floor-clamped.
Policy table_eval(const TableModel& model, bool with_context, std::span<const TokenId> prefix);

// Provider view over a table model. The context flag is derived from the
// prompt: true iff the prompt contains `marker_id` (pass -1 for never).
class TableProvider : public PolicyProvider {
 public:
  TableProvider(TableModel model, TokenId marker_id = -1)
      : model_(std::move(model)), marker_(marker_id) {
    model_.validate();
  }

  const Vocabulary& vocab() const override { return model_.vocabulary; }
  std::vector<double> raw_logits(std::span<const TokenId> prompt,
                                 std::span<const TokenId> generated) const override;

  const TableModel& model() const { return model_; }

 private:
  TableModel model_;
  TokenId marker_;
};

// ---------------------------------------------------------------------------
// Smoothed n-gram models.
// ---------------------------------------------------------------------------

class NGramModel {
 public:
  NGramModel() = default;

  int order() const { return order_; }
  std::size_t vocab_size() const { return vocab_size_; }

  // P(a | ctx) = (count + smoothing) / (total + smoothing * V); contexts are
  // exactly (order-1)-grams, shorter histories fall back to the unseen case.
  std::vector<double> log_probs(std::span<const TokenId> context) const;

  friend NGramModel ngram_train(const std::vector<std::vector<TokenId>>& corpus, int order,
                                std::size_t vocab_size, double smoothing);

 private:
  int order_ = 1;
  std::size_t vocab_size_ = 0;
  double smoothing_ = 1.0;
  std::map<std::vector<TokenId>, std::vector<std::uint32_t>> counts_;
};

NGramModel ngram_train(const std::vector<std::vector<TokenId>>& corpus, int order,
                       std::size_t vocab_size, double smoothing = 1.0);

class NGramProvider : public PolicyProvider {
 public:
  NGramProvider(NGramModel model, Vocabulary vocab)
      : model_(std::move(model)), vocab_(std::move(vocab)) {
    vocab_.validate();
  }

  const Vocabulary& vocab() const override { return vocab_; }
  std::vector<double> raw_logits(std::span<const TokenId> prompt,
                                 std::span<const TokenId> generated) const override;

 private:
  NGramModel model_;
  Vocabulary vocab_;
};

// Context-aware pair built from two corpora: answers with the generic model
// unless the prompt contains `marker_id`, in which case the conditional is the
// 0.8/0.2 user/generic probability mixture.
class PersonalPairProvider : public PolicyProvider {
 public:
  PersonalPairProvider(NGramModel generic, NGramModel user, Vocabulary vocab, TokenId marker_id,
                       double user_weight = 0.8)
      : generic_(std::move(generic)),
        user_(std::move(user)),
        vocab_(std::move(vocab)),
        marker_(marker_id),
        user_weight_(user_weight) {
    vocab_.validate();
  }

  const Vocabulary& vocab() const override { return vocab_; }
  std::vector<double> raw_logits(std::span<const TokenId> prompt,
                                 std::span<const TokenId> generated) const override;

 private:
  NGramModel generic_;
  NGramModel user_;
  Vocabulary vocab_;
  TokenId marker_;
  double user_weight_;
};

std::unique_ptr<PersonalPairProvider> make_personal_pair(
    const std::vector<std::vector<TokenId>>& generic_corpus,
    const std::vector<std::vector<TokenId>>& user_corpus, int order, Vocabulary vocab,
    TokenId marker_id, double user_weight = 0.8, double smoothing = 1.0);

// ---------------------------------------------------------------------------
// Toy tokenizers: explicit token byte strings, greedy longest match.
// ---------------------------------------------------------------------------

class ToyTokenizer {
 public:
  explicit ToyTokenizer(Vocabulary vocab) : vocab_(std::move(vocab)) { vocab_.validate(); }

  const Vocabulary& vocab() const { return vocab_; }

  std::vector<TokenId> encode(std::string_view bytes) const;  // toy_tokenize
  std::string decode(std::span<const TokenId> ids) const;

  static ToyTokenizer load_json(const std::filesystem::path& file);
  static ToyTokenizer parse_json(const std::string& text);
  std::string to_json() const;
};

inline std::vector<TokenId> toy_tokenize(const ToyTokenizer& tok, std::string_view bytes) {
  return tok.encode(bytes);
}

// ---------------------------------------------------------------------------
// Corpus I/O: one sequence per line, one single-byte token per character,
// with the vocabulary's EOS appended to each line.
// ---------------------------------------------------------------------------

std::vector<std::vector<TokenId>> tokenize_corpus_lines(const std::string& text,
                                                        const ToyTokenizer& tok, TokenId eos_id);
std::string read_text_file(const std::filesystem::path& file);

// Token strings round-trip through JSON as text with \xNN escapes for bytes
// outside printable ASCII.
std::string escape_token_bytes(const std::string& raw);
std::string unescape_token_bytes(const std::string& escaped);

}  // namespace costeer
