#include "costeer/crosstok.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace costeer {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Lowest token id per distinct byte string.
std::map<std::string, TokenId> canonical_ids(const Vocabulary& vocab) {
  std::map<std::string, TokenId> out;
  for (std::size_t id = 0; id < vocab.size(); ++id)
    out.emplace(vocab.token_bytes[id], static_cast<TokenId>(id));  // keeps the first (lowest) id
  return out;
}

double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

IntersectionMap build_intersection(const Vocabulary& vocab_a, const Vocabulary& vocab_b) {
  vocab_a.validate();
  vocab_b.validate();
  const auto ids_a = canonical_ids(vocab_a);
  const auto ids_b = canonical_ids(vocab_b);
  IntersectionMap map;
  // std::map iterates byte strings in lexicographic order already.
  for (const auto& [bytes, id_a] : ids_a) {
    auto it = ids_b.find(bytes);
    if (it == ids_b.end()) continue;
    map.llm_ids.push_back(id_a);
    map.slm_ids.push_back(it->second);
  }
  if (map.llm_ids.empty()) fail(Err::kEmptyIntersection, "no shared token byte string");
  return map;
}

std::vector<double> project_to_shared(std::span<const double> raw_logits,
                                      const IntersectionMap& map, MapSide side) {
  const std::vector<TokenId>& ids = side == MapSide::kLlm ? map.llm_ids : map.slm_ids;
  std::vector<double> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (static_cast<std::size_t>(ids[i]) >= raw_logits.size())
      fail(Err::kLengthMismatch, "logit vector shorter than mapped id");
    out[i] = raw_logits[ids[i]];
  }
  return out;
}

SharedStepResult steer_in_shared_space(std::span<const double> llm_logits,
                                       std::span<const double> slm_base_logits,
                                       std::span<const double> slm_pers_logits,
                                       const IntersectionMap& map, const SteerParams& params) {
  Policy base = normalize(project_to_shared(llm_logits, map, MapSide::kLlm));
  Policy slm_base = normalize(project_to_shared(slm_base_logits, map, MapSide::kSlm));
  Policy slm_pers = normalize(project_to_shared(slm_pers_logits, map, MapSide::kSlm));
  Policy steered = steer(base, compute_delta(slm_pers, slm_base), params);
  const std::size_t idx = static_cast<std::size_t>(argmax_token(steered));
  return SharedStepResult{idx, map.llm_ids[idx], map.slm_ids[idx]};
}

ByteDistribution ByteDistribution::all_floor() {
  ByteDistribution bd;
  bd.log_mass.fill(kNegInf);
  return bd;
}

bool ByteDistribution::present(std::size_t i) const { return std::isfinite(log_mass[i]); }

std::size_t ByteDistribution::argmax() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < kByteDims; ++i)
    if (log_mass[i] > log_mass[best]) best = i;
  return best;
}

BytePrefixState BytePrefixState::fresh(std::vector<const Vocabulary*> vocabs) {
  BytePrefixState st;
  st.vocabs = std::move(vocabs);
  st.candidates.resize(st.vocabs.size());
  for (std::size_t m = 0; m < st.vocabs.size(); ++m) {
    st.candidates[m].resize(st.vocabs[m]->size());
    for (std::size_t id = 0; id < st.vocabs[m]->size(); ++id)
      st.candidates[m][id] = static_cast<TokenId>(id);
  }
  return st;
}

ByteDistribution byte_project(const Policy& policy, const BytePrefixState& state,
                              std::size_t model_slot, const Vocabulary& vocab) {
  if (model_slot >= state.candidates.size())
    fail(Err::kInvalidArgument, "model slot out of range");
  const std::vector<TokenId>& cands = state.candidates[model_slot];
  if (cands.empty()) fail(Err::kEmptyCandidates, "byte_project with empty candidate set");
  if (policy.size() != vocab.size()) fail(Err::kLengthMismatch, "policy/vocab size mismatch");

  ByteDistribution bd = ByteDistribution::all_floor();
  const std::size_t pos = state.prefix.size();
  double total = kNegInf;
  for (TokenId id : cands) {
    const std::string& bytes = vocab.token_bytes[id];
    const double lp = policy[id];
    total = log_sum_exp(total, lp);
    if (bytes.size() == pos) {
      bd.log_mass[kCommitDim] = log_sum_exp(bd.log_mass[kCommitDim], lp);
    } else {
      const auto b = static_cast<unsigned char>(bytes[pos]);
      bd.log_mass[b] = log_sum_exp(bd.log_mass[b], lp);
    }
  }
  // Condition on the candidate set.
  for (double& x : bd.log_mass)
    if (x != kNegInf) x -= total;
  return bd;
}

ByteDistribution byte_fuse_step(const ByteDistribution& llm_bd, const ByteDistribution& slm_base_bd,
                                const ByteDistribution& slm_pers_bd, const SteerParams& params) {
  // Fused support: bytes reachable in every input.
  std::array<bool, kByteDims> support;
  bool any = false;
  for (std::size_t i = 0; i < kByteDims; ++i) {
    support[i] = llm_bd.present(i) && slm_base_bd.present(i) && slm_pers_bd.present(i);
    any = any || support[i];
  }
  if (!any) fail(Err::kEmptyCandidates, "fused byte support is empty");

  // The steering math needs proper finite policies; clamp the floors, steer,
  // then push everything outside the support back down and renormalize.
  auto as_policy = [](const ByteDistribution& bd) {
    std::vector<double> v(bd.log_mass.begin(), bd.log_mass.end());
    return normalize(v);
  };
  Policy base = as_policy(llm_bd);
  Policy pers = as_policy(slm_pers_bd);
  Policy plain = as_policy(slm_base_bd);
  Policy fused = steer(base, compute_delta(pers, plain), params);

  ByteDistribution out = ByteDistribution::all_floor();
  double total = kNegInf;
  for (std::size_t i = 0; i < kByteDims; ++i) {
    if (!support[i]) continue;
    out.log_mass[i] = fused[i];
    total = log_sum_exp(total, fused[i]);
  }
  for (double& x : out.log_mass)
    if (x != kNegInf) x -= total;
  return out;
}

TokenId commit_resolve(const BytePrefixState& state, std::size_t model_slot, const Policy& policy,
                       const Vocabulary& vocab) {
  if (model_slot >= state.candidates.size())
    fail(Err::kInvalidArgument, "model slot out of range");
  TokenId best = -1;
  for (TokenId id : state.candidates[model_slot]) {
    if (vocab.token_bytes[id] != state.prefix) continue;
    if (best < 0 || policy[id] > policy[best]) best = id;  // ties keep the lowest id
  }
  if (best < 0)
    fail(Err::kNoExactCandidate, "no candidate token equals the current byte prefix");
  return best;
}

BytePrefixState refine_candidates(const BytePrefixState& state, std::uint8_t byte) {
  BytePrefixState next;
  next.prefix = state.prefix;
  next.prefix.push_back(static_cast<char>(byte));
  next.vocabs = state.vocabs;
  next.candidates.resize(state.candidates.size());
  for (std::size_t m = 0; m < state.candidates.size(); ++m) {
    for (TokenId id : state.candidates[m]) {
      const std::string& bytes = state.vocabs[m]->token_bytes[id];
      if (bytes.size() >= next.prefix.size() &&
          bytes.compare(0, next.prefix.size(), next.prefix) == 0)
        next.candidates[m].push_back(id);
    }
    if (next.candidates[m].empty())
      fail(Err::kEmptyCandidates,
           "model " + std::to_string(m) + " has no token extending the prefix");
  }
  return next;
}

ByteFusedResult generate_byte_fused(const PolicyProvider& llm, const PromptPair& llm_prompt,
                                    const PolicyProvider& slm, const PromptPair& slm_prompt,
                                    const GenConfig& cfg) {
  cfg.validate();
  llm_prompt.validate();
  slm_prompt.validate();
  const Vocabulary& lv = llm.vocab();
  const Vocabulary& sv = slm.vocab();
  const std::vector<const Vocabulary*> vocabs{&lv, &sv};

  ByteFusedResult res;
  const std::vector<TokenId> slm_combined = slm_prompt.combined();

  while (static_cast<int>(res.llm_tokens.size()) < cfg.max_tokens) {
    BytePrefixState state = BytePrefixState::fresh(vocabs);
    // Token-level policies are fixed for the whole byte walk of this token.
    Policy pi_llm = llm.policy(llm_prompt.base_query, res.llm_tokens);
    Policy pi_slm_base = slm.policy(slm_prompt.base_query, res.slm_tokens);
    Policy pi_slm_pers = slm.policy(slm_combined, res.slm_tokens);

    bool committed = false;
    bool eos = false;
    while (!committed) {
      ByteDistribution bd_llm = byte_project(pi_llm, state, 0, lv);
      ByteDistribution bd_base = byte_project(pi_slm_base, state, 1, sv);
      ByteDistribution bd_pers = byte_project(pi_slm_pers, state, 1, sv);
      ByteDistribution fused = byte_fuse_step(bd_llm, bd_base, bd_pers, cfg.steer);

      ByteStepTrace tr;
      tr.prefix = state.prefix;
      tr.fused_index = fused.argmax();

      if (tr.fused_index == kCommitDim) {
        tr.llm_committed = commit_resolve(state, 0, pi_llm, lv);
        tr.slm_committed = commit_resolve(state, 1, pi_slm_pers, sv);
        res.llm_tokens.push_back(tr.llm_committed);
        res.slm_tokens.push_back(tr.slm_committed);
        res.bytes += state.prefix;
        eos = tr.llm_committed == lv.eos_id || tr.slm_committed == sv.eos_id;
        committed = true;
      } else {
        state = refine_candidates(state, static_cast<std::uint8_t>(tr.fused_index));
      }
      res.trace.push_back(std::move(tr));
    }
    if (eos) break;
  }
  return res;
}

}  // namespace costeer
