#include "costeer/policy.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

namespace costeer {

const char* err_name(Err code) {
  switch (code) {
    case Err::kEmptyVector: return "EMPTY_VECTOR";
    case Err::kNonFinite: return "NON_FINITE";
    case Err::kLengthMismatch: return "LENGTH_MISMATCH";
    case Err::kNonPositiveDenominator: return "NON_POSITIVE_DENOMINATOR";
    case Err::kNoConvergence: return "NO_CONVERGENCE";
    case Err::kVocabMismatch: return "VOCAB_MISMATCH";
    case Err::kEmptySequence: return "EMPTY_SEQUENCE";
    case Err::kEmptyIntersection: return "EMPTY_INTERSECTION";
    case Err::kEmptyCandidates: return "EMPTY_CANDIDATES";
    case Err::kNoExactCandidate: return "NO_EXACT_CANDIDATE";
    case Err::kMalformed: return "MALFORMED";
    case Err::kUnknownType: return "UNKNOWN_TYPE";
    case Err::kTruncated: return "TRUNCATED";
    case Err::kConnectionLost: return "CONNECTION_LOST";
    case Err::kUncoveredByte: return "UNCOVERED_BYTE";
    case Err::kEmptyCorpus: return "EMPTY_CORPUS";
    case Err::kMissingTimestamps: return "MISSING_TIMESTAMPS";
    case Err::kServerError: return "SERVER_ERROR";
    case Err::kInvalidArgument: return "INVALID_ARGUMENT";
  }
  return "UNKNOWN";
}

void Vocabulary::validate() const {
  if (token_bytes.size() < 2) fail(Err::kInvalidArgument, "vocabulary needs at least 2 tokens");
  for (std::size_t i = 0; i < token_bytes.size(); ++i) {
    if (token_bytes[i].empty())
      fail(Err::kInvalidArgument, "token " + std::to_string(i) + " has empty byte sequence");
  }
  if (eos_id < 0 || static_cast<std::size_t>(eos_id) >= token_bytes.size())
    fail(Err::kInvalidArgument, "eos_id out of range");
}

void PromptPair::validate() const {
  if (base_query.empty()) fail(Err::kInvalidArgument, "base_query must be non-empty");
}

std::vector<TokenId> PromptPair::combined() const {
  std::vector<TokenId> out = base_query;
  out.insert(out.end(), personal_context.begin(), personal_context.end());
  return out;
}

Policy Policy::from_log_probs_unchecked(std::vector<double> log_probs) {
  Policy p;
  p.log_probs_ = std::move(log_probs);
#ifndef NDEBUG
  double sum = 0.0;
  for (double lp : p.log_probs_) sum += std::exp(lp);
  assert(std::abs(sum - 1.0) < 1e-9 && "policy must sum to 1");
#endif
  return p;
}

std::vector<double> Policy::probs() const {
  std::vector<double> out(log_probs_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(log_probs_[i]);
  return out;
}

namespace {

// One stable log-softmax pass over `v`, written into `v`.
void log_softmax_inplace(std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  double z = 0.0;
  for (double x : v) z += std::exp(x - m);
  const double log_z = m + std::log(z);
  for (double& x : v) x -= log_z;
}

}  // namespace

Policy normalize(std::span<const double> raw_logits, double eps_floor) {
  if (raw_logits.empty()) fail(Err::kEmptyVector, "normalize of empty vector");
  bool any_finite = false;
  for (double x : raw_logits) {
    if (std::isnan(x) || x == std::numeric_limits<double>::infinity())
      fail(Err::kNonFinite, "normalize input contains NaN or +inf");
    if (std::isfinite(x)) any_finite = true;
  }
  if (!any_finite) fail(Err::kNonFinite, "normalize input is all -inf");

  std::vector<double> v(raw_logits.begin(), raw_logits.end());
  log_softmax_inplace(v);
  const double floor_log = std::log(eps_floor);
  bool clamped = false;
  for (double& x : v) {
    if (x < floor_log) {
      x = floor_log;
      clamped = true;
    }
  }
  if (clamped) log_softmax_inplace(v);
  return Policy::from_log_probs_unchecked(std::move(v));
}

double kl_divergence(const Policy& p, const Policy& q) {
  if (p.size() != q.size()) fail(Err::kLengthMismatch, "kl_divergence on unequal lengths");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::exp(p[i]) * (p[i] - q[i]);
  return acc;
}

TokenId argmax_token(const Policy& p) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i) {
    if (p[i] > p[best]) best = i;  // strict: ties keep the lowest id
  }
  return static_cast<TokenId>(best);
}

double confidence(const Policy& p) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.size(); ++i) m = std::max(m, p[i]);
  return std::exp(m);
}

}  // namespace costeer
