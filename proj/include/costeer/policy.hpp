#pragma once

#include <cstdint>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "costeer/error.hpp"

namespace costeer {

using TokenId = std::int32_t;

// Probability floor applied when policies are constructed. Log ratios in the
// steering math are undefined at exact zeros, so no constructed policy carries
// a probability below this.
inline constexpr double kEpsFloor = 1e-10;

struct Vocabulary {
  std::vector<std::string> token_bytes;  // token id -> byte sequence
  TokenId eos_id = 0;

  std::size_t size() const { return token_bytes.size(); }
  void validate() const;
};

// A normalized distribution over a vocabulary, kept in log space. Entries sum
// to 1 (within 1e-9) and stay >= log(kEpsFloor) up to renormalization slack.
class Policy {
 public:
  Policy() = default;

  static Policy from_log_probs_unchecked(std::vector<double> log_probs);

  std::size_t size() const { return log_probs_.size(); }
  double operator[](std::size_t i) const { return log_probs_[i]; }
  const std::vector<double>& log_probs() const { return log_probs_; }
  std::vector<double> probs() const;

 private:
  std::vector<double> log_probs_;
};

struct PromptPair {
  std::vector<TokenId> base_query;        // p_base, never empty
  std::vector<TokenId> personal_context;  // p_pers, may be empty

  void validate() const;
  std::vector<TokenId> combined() const;  // p_base followed by p_pers
};

struct SequenceState {
  std::vector<TokenId> tokens;
  std::size_t step() const { return tokens.size(); }
};

// Log-softmax with floor clamping. Accepts -inf entries (zero mass) but
// rejects NaN/+inf; the output satisfies the Policy invariants.
Policy normalize(std::span<const double> raw_logits, double eps_floor = kEpsFloor);
inline Policy normalize(const std::vector<double>& v, double eps_floor = kEpsFloor) {
  return normalize(std::span<const double>(v), eps_floor);
}

// KL(p || q) = sum_a exp(p[a]) * (p[a] - q[a])
double kl_divergence(const Policy& p, const Policy& q);

// Smallest token id attaining the max log-prob.
TokenId argmax_token(const Policy& p);

// exp(max log-prob): probability of the greedy token.
double confidence(const Policy& p);

// Deterministic map (prompt, generated) -> raw logits. Implementations are
// read-only after construction and usable from concurrent sessions.
class PolicyProvider {
 public:
  virtual ~PolicyProvider() = default;

  virtual const Vocabulary& vocab() const = 0;
  virtual std::vector<double> raw_logits(std::span<const TokenId> prompt,
                                         std::span<const TokenId> generated) const = 0;

  Policy policy(std::span<const TokenId> prompt, std::span<const TokenId> generated) const {
    return normalize(raw_logits(prompt, generated));
  }
};

// Wraps a provider and records every (prompt, generated) it is asked about.
// Used to verify that personal context never reaches the LLM side.
class RecordingProvider : public PolicyProvider {
 public:
  explicit RecordingProvider(const PolicyProvider& inner) : inner_(inner) {}

  const Vocabulary& vocab() const override { return inner_.vocab(); }

  std::vector<double> raw_logits(std::span<const TokenId> prompt,
                                 std::span<const TokenId> generated) const override {
    {
      std::lock_guard<std::mutex> lock(mu_);
      calls_.emplace_back(std::vector<TokenId>(prompt.begin(), prompt.end()),
                          std::vector<TokenId>(generated.begin(), generated.end()));
    }
    return inner_.raw_logits(prompt, generated);
  }

  std::vector<std::pair<std::vector<TokenId>, std::vector<TokenId>>> calls() const {
    std::lock_guard<std::mutex> lock(mu_);
    return calls_;
  }

 private:
  const PolicyProvider& inner_;
  mutable std::mutex mu_;
  mutable std::vector<std::pair<std::vector<TokenId>, std::vector<TokenId>>> calls_;
};

}  // namespace costeer
