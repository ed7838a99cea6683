#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "costeer/generation.hpp"
#include "costeer/policy.hpp"
#include "costeer/steering.hpp"

namespace costeer {

// ---------------------------------------------------------------------------
// Vocabulary-intersection mapping: steering restricted to token byte strings
// present in both vocabularies, aligned in byte-lexicographic order.
// ---------------------------------------------------------------------------

struct IntersectionMap {
  std::vector<TokenId> llm_ids;  // shared index -> LLM token id
  std::vector<TokenId> slm_ids;  // shared index -> SLM token id

  std::size_t shared_size() const { return llm_ids.size(); }
};

enum class MapSide { kLlm, kSlm };

// Duplicate byte strings within one vocabulary collapse to their lowest id.
IntersectionMap build_intersection(const Vocabulary& vocab_a, const Vocabulary& vocab_b);

std::vector<double> project_to_shared(std::span<const double> raw_logits,
                                      const IntersectionMap& map, MapSide side);

struct SharedStepResult {
  std::size_t shared_index;
  TokenId llm_id;
  TokenId slm_id;
};

// Projects all three logit vectors into the shared space, steers there, and
// remaps the greedy choice to each side's native id.
SharedStepResult steer_in_shared_space(std::span<const double> llm_logits,
                                       std::span<const double> slm_base_logits,
                                       std::span<const double> slm_pers_logits,
                                       const IntersectionMap& map, const SteerParams& params);

// ---------------------------------------------------------------------------
// Byte-level fusion: 256 next-byte dimensions plus one commit dimension.
// ---------------------------------------------------------------------------

inline constexpr std::size_t kByteDims = 257;
inline constexpr std::size_t kCommitDim = 256;

// Log-mass over the byte space. Absent entries are -inf; present entries are
// exact conditionals over the candidate set (they sum to 1).
struct ByteDistribution {
  std::array<double, kByteDims> log_mass;

  static ByteDistribution all_floor();
  bool present(std::size_t i) const;
  std::size_t argmax() const;  // lowest index on ties
};

// In-progress token state shared by the participating models. candidates[m]
// lists model m's token ids consistent with the current byte prefix. The
// vocabularies are referenced, not owned; they must outlive the state.
struct BytePrefixState {
  std::string prefix;
  std::vector<const Vocabulary*> vocabs;
  std::vector<std::vector<TokenId>> candidates;

  static BytePrefixState fresh(std::vector<const Vocabulary*> vocabs);
};

// Exact byte conditional of `policy` given the prefix, over model_slot's
// candidate set. log_mass[b] aggregates candidates with byte b at position
// |prefix|; the commit entry carries the exact-prefix candidates' mass.
ByteDistribution byte_project(const Policy& policy, const BytePrefixState& state,
                              std::size_t model_slot, const Vocabulary& vocab);

// Steering in byte space: delta = pers - base in log space, base = the LLM
// distribution. Support is the intersection of the three inputs' supports;
// everything else stays at the floor.
ByteDistribution byte_fuse_step(const ByteDistribution& llm_bd, const ByteDistribution& slm_base_bd,
                                const ByteDistribution& slm_pers_bd, const SteerParams& params);

// Highest-probability candidate of model_slot whose bytes equal the prefix
// exactly; ties break to the lowest id.
TokenId commit_resolve(const BytePrefixState& state, std::size_t model_slot, const Policy& policy,
                       const Vocabulary& vocab);

BytePrefixState refine_candidates(const BytePrefixState& state, std::uint8_t byte);

// ---------------------------------------------------------------------------
// Fused generation across two tokenizers.
// ---------------------------------------------------------------------------

struct ByteStepTrace {
  std::string prefix;       // before this byte decision
  std::size_t fused_index;  // chosen byte value, or kCommitDim
  TokenId llm_committed = -1;
  TokenId slm_committed = -1;
};

struct ByteFusedResult {
  std::vector<TokenId> llm_tokens;
  std::vector<TokenId> slm_tokens;
  std::string bytes;  // committed byte string
  std::vector<ByteStepTrace> trace;
};

// Runs greedy byte-fused decoding: the LLM sees only its base query, the SLM
// additionally sees the personal context, both tokenized in their own spaces.
ByteFusedResult generate_byte_fused(const PolicyProvider& llm, const PromptPair& llm_prompt,
                                    const PolicyProvider& slm, const PromptPair& slm_prompt,
                                    const GenConfig& cfg);

}  // namespace costeer
