#pragma once

#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "costeer/policy.hpp"
#include "costeer/steering.hpp"

namespace costeer {

enum class Mode {
  kCosteer,
  kLight,
  kAda,
  kLlmOnly,
  kSlmOnly,
  kLaBaseline,
  kProxyBaseline,
};

const char* mode_name(Mode m);
std::optional<Mode> mode_from_name(const std::string& name);

// Confidence gate: steering stops after the LLM's greedy confidence exceeds
// tau for k consecutive steps.
struct AdaParams {
  double tau = 0.9;
  int k = 5;

  void validate() const;
};

struct GenConfig {
  int max_tokens = 512;
  std::uint64_t seed = 0;  // reserved; greedy decoding ignores it
  SteerParams steer;
  std::optional<AdaParams> ada;
  Mode mode = Mode::kCosteer;
  double la_scale = 2.0;     // scale for the la_baseline mode
  TokenId eos_override = -1; // -1: use the vocabulary's eos_id

  void validate() const;
};

struct StepRecord {
  int step = 0;
  TokenId chosen = -1;
  TokenId llm_argmax = -1;
  double llm_conf = 0.0;
  TokenId slm_base_argmax = -1;   // -1 when the SLM was not consulted
  TokenId slm_pers_argmax = -1;
  TokenId steered_argmax = -1;
  double kl_to_pers = std::nan("");       // KL(steered || pi*_pers)
  double kl_base_to_pers = std::nan("");  // KL(pi_base || pi*_pers)
  bool steering_active = true;
  // Measured windows, seconds.
  double llm_seconds = 0.0;    // provider call / server turnaround
  double slm_seconds = 0.0;    // both on-device model calls
  double steer_seconds = 0.0;  // optimization only
  double wire_seconds = 0.0;   // serialization + socket transfer (wire mode)
};

struct GenerationSession {
  PromptPair prompt;
  SequenceState state;
  bool steering_active = true;
  int confidence_streak = 0;
  std::vector<StepRecord> transcript;
};

// The Algorithm-1 loop over one LLM and one SLM sharing a vocabulary. The LLM
// is only ever asked about the base query; the personal context goes to the
// SLM alone.
std::pair<std::vector<TokenId>, GenerationSession> generate_steered(const PolicyProvider& llm,
                                                                    const PolicyProvider& slm,
                                                                    const PromptPair& prompt,
                                                                    const GenConfig& cfg);

// Streak bookkeeping; returns the new steering_active state. Deactivation is
// one-way within a session.
bool ada_update(GenerationSession& sess, double llm_confidence, const AdaParams& ada);

// exp(mean NLL) of `tokens` under `reference` conditioned on the combined
// prompt (base query followed by personal context).
double perplexity_under(const PolicyProvider& reference, std::span<const TokenId> tokens,
                        const PromptPair& prompt);

// One JSON object per step, newline delimited.
void write_transcript_jsonl(std::ostream& out, const GenerationSession& sess);

namespace detail {
// Mode dispatch shared by the in-process loop and the wire edge client: maps
// the three per-step policies (plus raw logits for the proxy baseline) to the
// policy tokens are drawn from. steer_seconds receives the optimization window.
Policy steered_policy(Mode mode, const Policy& pi_base, const Policy& slm_base,
                      const Policy& slm_pers, std::span<const double> llm_raw,
                      std::span<const double> slm_base_raw, std::span<const double> slm_pers_raw,
                      const GenConfig& cfg, double* steer_seconds);
}  // namespace detail

}  // namespace costeer
