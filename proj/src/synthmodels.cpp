#include "costeer/synthmodels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace costeer {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Table models
// ---------------------------------------------------------------------------

namespace {

void check_distribution(const std::vector<double>& probs, std::size_t vocab_size,
                        const char* what) {
  if (probs.size() != vocab_size)
    fail(Err::kLengthMismatch, std::string(what) + " has wrong length");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) fail(Err::kInvalidArgument, std::string(what) + " has negative entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    fail(Err::kInvalidArgument, std::string(what) + " does not sum to 1");
}

}  // namespace

void TableModel::validate() const {
  vocabulary.validate();
  check_distribution(default_probs, vocabulary.size(), "default vector");
  for (const TableRule& r : rules) {
    check_distribution(r.probs, vocabulary.size(), "rule vector");
    for (TokenId id : r.prefix) {
      if (id < 0 || static_cast<std::size_t>(id) >= vocabulary.size())
        fail(Err::kInvalidArgument, "rule prefix token out of range");
    }
  }
}

Policy table_eval(const TableModel& model, bool with_context, std::span<const TokenId> prefix) {
  const std::vector<double>* probs = &model.default_probs;
  for (const TableRule& r : model.rules) {
    if (r.with_context == with_context && r.prefix.size() == prefix.size() &&
        std::equal(r.prefix.begin(), r.prefix.end(), prefix.begin())) {
      probs = &r.probs;
      break;
    }
  }
  std::vector<double> logits(probs->size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    logits[i] = (*probs)[i] > 0.0 ? std::log((*probs)[i])
                                  : -std::numeric_limits<double>::infinity();
  return normalize(logits);
}

std::vector<double> TableProvider::raw_logits(std::span<const TokenId> prompt,
                                              std::span<const TokenId> generated) const {
  bool with_context = false;
  if (marker_ >= 0)
    with_context = std::find(prompt.begin(), prompt.end(), marker_) != prompt.end();
  return table_eval(model_, with_context, generated).log_probs();
}

std::string escape_token_bytes(const std::string& raw) {
  std::string out;
  for (unsigned char c : raw) {
    if (c >= 0x20 && c <= 0x7e && c != '\\') {
      out.push_back(static_cast<char>(c));
    } else {
      char buf[8];
      std::snprintf(buf, sizeof(buf), "\\x%02x", c);
      out += buf;
    }
  }
  return out;
}

std::string unescape_token_bytes(const std::string& escaped) {
  std::string out;
  for (std::size_t i = 0; i < escaped.size();) {
    if (escaped[i] == '\\' && i + 3 < escaped.size() && escaped[i + 1] == 'x') {
      auto hex = [&](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        fail(Err::kMalformed, "bad \\x escape in token string");
      };
      out.push_back(static_cast<char>(hex(escaped[i + 2]) * 16 + hex(escaped[i + 3])));
      i += 4;
    } else {
      out.push_back(escaped[i]);
      ++i;
    }
  }
  return out;
}

TableModel TableModel::parse_json(const std::string& text) {
  json j = json::parse(text);
  TableModel m;
  for (const auto& tok : j.at("vocab"))
    m.vocabulary.token_bytes.push_back(unescape_token_bytes(tok.get<std::string>()));
  m.vocabulary.eos_id = j.at("eos").get<TokenId>();
  m.default_probs = j.at("default").get<std::vector<double>>();
  if (j.contains("rules")) {
    for (const auto& jr : j.at("rules")) {
      TableRule r;
      r.with_context = jr.at("with_context").get<bool>();
      r.prefix = jr.at("prefix").get<std::vector<TokenId>>();
      r.probs = jr.at("probs").get<std::vector<double>>();
      m.rules.push_back(std::move(r));
    }
  }
  m.validate();
  return m;
}

TableModel TableModel::load_json(const std::filesystem::path& file) {
  return parse_json(read_text_file(file));
}

std::string TableModel::to_json() const {
  json j;
  j["vocab"] = json::array();
  for (const std::string& t : vocabulary.token_bytes) j["vocab"].push_back(escape_token_bytes(t));
  j["eos"] = vocabulary.eos_id;
  j["default"] = default_probs;
  j["rules"] = json::array();
  for (const TableRule& r : rules)
    j["rules"].push_back({{"with_context", r.with_context}, {"prefix", r.prefix}, {"probs", r.probs}});
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// N-gram models
// ---------------------------------------------------------------------------

NGramModel ngram_train(const std::vector<std::vector<TokenId>>& corpus, int order,
                       std::size_t vocab_size, double smoothing) {
  if (order < 1) fail(Err::kInvalidArgument, "order must be >= 1");
  if (corpus.empty()) fail(Err::kEmptyCorpus, "ngram_train on empty corpus");
  NGramModel m;
  m.order_ = order;
  m.vocab_size_ = vocab_size;
  m.smoothing_ = smoothing;
  const std::size_t ctx_len = static_cast<std::size_t>(order - 1);
  for (const auto& seq : corpus) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (i < ctx_len) continue;  // only full-length contexts are counted
      std::vector<TokenId> ctx(seq.begin() + (i - ctx_len), seq.begin() + i);
      auto& row = m.counts_[ctx];
      if (row.empty()) row.assign(vocab_size, 0);
      const TokenId next = seq[i];
      if (next < 0 || static_cast<std::size_t>(next) >= vocab_size)
        fail(Err::kInvalidArgument, "corpus token out of vocab range");
      ++row[next];
    }
  }
  return m;
}

std::vector<double> NGramModel::log_probs(std::span<const TokenId> context) const {
  const std::size_t ctx_len = static_cast<std::size_t>(order_ - 1);
  const std::vector<std::uint32_t>* row = nullptr;
  if (context.size() >= ctx_len) {
    std::vector<TokenId> ctx(context.end() - ctx_len, context.end());
    auto it = counts_.find(ctx);
    if (it != counts_.end()) row = &it->second;
  }
  std::vector<double> out(vocab_size_);
  double total = 0.0;
  if (row)
    for (std::uint32_t c : *row) total += c;
  const double denom = total + smoothing_ * static_cast<double>(vocab_size_);
  for (std::size_t a = 0; a < vocab_size_; ++a) {
    const double count = row ? (*row)[a] : 0.0;
    out[a] = std::log((count + smoothing_) / denom);
  }
  return out;
}

std::vector<double> NGramProvider::raw_logits(std::span<const TokenId> prompt,
                                              std::span<const TokenId> generated) const {
  std::vector<TokenId> ctx(prompt.begin(), prompt.end());
  ctx.insert(ctx.end(), generated.begin(), generated.end());
  return model_.log_probs(ctx);
}

std::vector<double> PersonalPairProvider::raw_logits(std::span<const TokenId> prompt,
                                                     std::span<const TokenId> generated) const {
  std::vector<TokenId> ctx(prompt.begin(), prompt.end());
  ctx.insert(ctx.end(), generated.begin(), generated.end());
  const bool with_context = std::find(prompt.begin(), prompt.end(), marker_) != prompt.end();
  std::vector<double> lg = generic_.log_probs(ctx);
  if (!with_context) return lg;
  std::vector<double> lu = user_.log_probs(ctx);
  std::vector<double> out(lg.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::log(user_weight_ * std::exp(lu[i]) + (1.0 - user_weight_) * std::exp(lg[i]));
  return out;
}

std::unique_ptr<PersonalPairProvider> make_personal_pair(
    const std::vector<std::vector<TokenId>>& generic_corpus,
    const std::vector<std::vector<TokenId>>& user_corpus, int order, Vocabulary vocab,
    TokenId marker_id, double user_weight, double smoothing) {
  if (generic_corpus.empty() || user_corpus.empty())
    fail(Err::kEmptyCorpus, "make_personal_pair needs both corpora");
  NGramModel generic = ngram_train(generic_corpus, order, vocab.size(), smoothing);
  NGramModel user = ngram_train(user_corpus, order, vocab.size(), smoothing);
  return std::make_unique<PersonalPairProvider>(std::move(generic), std::move(user),
                                                std::move(vocab), marker_id, user_weight);
}

// ---------------------------------------------------------------------------
// Toy tokenizers
// ---------------------------------------------------------------------------

std::vector<TokenId> ToyTokenizer::encode(std::string_view bytes) const {
  std::vector<TokenId> out;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    TokenId best = -1;
    std::size_t best_len = 0;
    for (std::size_t id = 0; id < vocab_.size(); ++id) {
      const std::string& tok = vocab_.token_bytes[id];
      if (tok.size() > best_len && tok.size() <= bytes.size() - pos &&
          bytes.compare(pos, tok.size(), tok) == 0) {
        best = static_cast<TokenId>(id);
        best_len = tok.size();
      }
    }
    if (best < 0)
      fail(Err::kUncoveredByte,
           "no token covers byte 0x" + [&] {
             char buf[4];
             std::snprintf(buf, sizeof(buf), "%02x", static_cast<unsigned char>(bytes[pos]));
             return std::string(buf);
           }() + " at offset " + std::to_string(pos));
    out.push_back(best);
    pos += best_len;
  }
  return out;
}

std::string ToyTokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size())
      fail(Err::kInvalidArgument, "token id out of range in decode");
    out += vocab_.token_bytes[id];
  }
  return out;
}

ToyTokenizer ToyTokenizer::parse_json(const std::string& text) {
  json j = json::parse(text);
  Vocabulary v;
  for (const auto& tok : j.at("tokens"))
    v.token_bytes.push_back(unescape_token_bytes(tok.get<std::string>()));
  v.eos_id = j.at("eos").get<TokenId>();
  return ToyTokenizer(std::move(v));
}

ToyTokenizer ToyTokenizer::load_json(const std::filesystem::path& file) {
  return parse_json(read_text_file(file));
}

std::string ToyTokenizer::to_json() const {
  json j;
  j["tokens"] = json::array();
  for (const std::string& t : vocab_.token_bytes) j["tokens"].push_back(escape_token_bytes(t));
  j["eos"] = vocab_.eos_id;
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Corpus I/O
// ---------------------------------------------------------------------------

std::string read_text_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) fail(Err::kInvalidArgument, "cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<TokenId>> tokenize_corpus_lines(const std::string& text,
                                                        const ToyTokenizer& tok, TokenId eos_id) {
  std::vector<std::vector<TokenId>> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<TokenId> seq = tok.encode(line);
    seq.push_back(eos_id);
    out.push_back(std::move(seq));
  }
  if (out.empty()) fail(Err::kEmptyCorpus, "corpus has no non-empty lines");
  return out;
}

}  // namespace costeer
