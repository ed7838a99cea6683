#include "costeer/generation.hpp"

#include <chrono>

#include "json.hpp"

namespace costeer {

using nlohmann::json;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::kCosteer: return "costeer";
    case Mode::kLight: return "light";
    case Mode::kAda: return "ada";
    case Mode::kLlmOnly: return "llm_only";
    case Mode::kSlmOnly: return "slm_only";
    case Mode::kLaBaseline: return "la_baseline";
    case Mode::kProxyBaseline: return "proxy_baseline";
  }
  return "?";
}

std::optional<Mode> mode_from_name(const std::string& name) {
  for (Mode m : {Mode::kCosteer, Mode::kLight, Mode::kAda, Mode::kLlmOnly, Mode::kSlmOnly,
                 Mode::kLaBaseline, Mode::kProxyBaseline}) {
    if (name == mode_name(m)) return m;
  }
  return std::nullopt;
}

void AdaParams::validate() const {
  if (!(tau > 0.0 && tau < 1.0)) fail(Err::kInvalidArgument, "tau must be in (0, 1)");
  if (k < 1) fail(Err::kInvalidArgument, "k must be >= 1");
}

void GenConfig::validate() const {
  if (max_tokens < 1) fail(Err::kInvalidArgument, "max_tokens must be >= 1");
  steer.validate();
  if (ada) ada->validate();
  if (mode == Mode::kAda && !ada) fail(Err::kInvalidArgument, "ada mode needs ada params");
  if (la_scale < 0.0) fail(Err::kInvalidArgument, "la_scale must be >= 0");
}

bool ada_update(GenerationSession& sess, double llm_confidence, const AdaParams& ada) {
  if (llm_confidence > ada.tau) {
    ++sess.confidence_streak;
  } else {
    sess.confidence_streak = 0;
  }
  if (sess.confidence_streak >= ada.k) {
    sess.steering_active = false;
    return false;
  }
  return true;
}

namespace detail {

Policy steered_policy(Mode mode, const Policy& pi_base, const Policy& slm_base,
                      const Policy& slm_pers, std::span<const double> llm_raw,
                      std::span<const double> slm_base_raw, std::span<const double> slm_pers_raw,
                      const GenConfig& cfg, double* steer_seconds) {
  const double t0 = now_seconds();
  Policy out;
  switch (mode) {
    case Mode::kCosteer:
    case Mode::kAda:
      out = steer(pi_base, compute_delta(slm_pers, slm_base), cfg.steer);
      break;
    case Mode::kLight:
      out = light_steer(pi_base, compute_delta(slm_pers, slm_base), cfg.steer.beta_star());
      break;
    case Mode::kLlmOnly:
      out = pi_base;
      break;
    case Mode::kSlmOnly:
      out = slm_pers;
      break;
    case Mode::kLaBaseline:
      out = la_adjust(slm_pers, slm_base, cfg.la_scale);
      break;
    case Mode::kProxyBaseline:
      out = proxy_combine(llm_raw, slm_pers_raw, slm_base_raw);
      break;
  }
  if (steer_seconds) *steer_seconds = now_seconds() - t0;
  return out;
}

}  // namespace detail

std::pair<std::vector<TokenId>, GenerationSession> generate_steered(const PolicyProvider& llm,
                                                                    const PolicyProvider& slm,
                                                                    const PromptPair& prompt,
                                                                    const GenConfig& cfg) {
  cfg.validate();
  prompt.validate();
  const Vocabulary& lv = llm.vocab();
  const Vocabulary& sv = slm.vocab();
  if (lv.size() != sv.size() || lv.token_bytes != sv.token_bytes)
    fail(Err::kVocabMismatch, "generate_steered requires identical vocabularies");

  GenerationSession sess;
  sess.prompt = prompt;
  const std::vector<TokenId> combined = prompt.combined();
  const bool wants_slm = cfg.mode != Mode::kLlmOnly;
  const TokenId eos = cfg.eos_override >= 0 ? cfg.eos_override : lv.eos_id;

  for (int step = 0; static_cast<int>(sess.state.tokens.size()) < cfg.max_tokens; ++step) {
    StepRecord rec;
    rec.step = step;

    double t0 = now_seconds();
    std::vector<double> llm_raw = llm.raw_logits(prompt.base_query, sess.state.tokens);
    rec.llm_seconds = now_seconds() - t0;
    Policy pi_base = normalize(llm_raw);
    rec.llm_argmax = argmax_token(pi_base);
    rec.llm_conf = confidence(pi_base);

    // In ada mode the gate is evaluated on this step's LLM confidence; the
    // deactivation step itself is still steered, later steps are vanilla.
    const bool steer_this_step = sess.steering_active && cfg.mode != Mode::kLlmOnly;
    if (cfg.mode == Mode::kAda && sess.steering_active)
      ada_update(sess, rec.llm_conf, *cfg.ada);
    rec.steering_active = steer_this_step;

    Policy chosen_policy;
    if (steer_this_step && wants_slm) {
      t0 = now_seconds();
      std::vector<double> slm_base_raw = slm.raw_logits(prompt.base_query, sess.state.tokens);
      std::vector<double> slm_pers_raw = slm.raw_logits(combined, sess.state.tokens);
      rec.slm_seconds = now_seconds() - t0;
      Policy slm_base = normalize(slm_base_raw);
      Policy slm_pers = normalize(slm_pers_raw);
      rec.slm_base_argmax = argmax_token(slm_base);
      rec.slm_pers_argmax = argmax_token(slm_pers);
      chosen_policy = detail::steered_policy(cfg.mode, pi_base, slm_base, slm_pers, llm_raw,
                                             slm_base_raw, slm_pers_raw, cfg, &rec.steer_seconds);
      rec.kl_to_pers = kl_divergence(chosen_policy, slm_pers);
      rec.kl_base_to_pers = kl_divergence(pi_base, slm_pers);
    } else {
      chosen_policy = pi_base;
    }
    rec.steered_argmax = argmax_token(chosen_policy);
    rec.chosen = rec.steered_argmax;  // greedy decoding
    sess.state.tokens.push_back(rec.chosen);
    sess.transcript.push_back(rec);

    if (rec.chosen == eos) break;
  }
  return {sess.state.tokens, std::move(sess)};
}

double perplexity_under(const PolicyProvider& reference, std::span<const TokenId> tokens,
                        const PromptPair& prompt) {
  if (tokens.empty()) fail(Err::kEmptySequence, "perplexity of empty sequence");
  const std::vector<TokenId> combined = prompt.combined();
  std::vector<TokenId> prefix;
  double nll = 0.0;
  for (TokenId tok : tokens) {
    Policy p = reference.policy(combined, prefix);
    if (tok < 0 || static_cast<std::size_t>(tok) >= p.size())
      fail(Err::kInvalidArgument, "token out of range in perplexity_under");
    nll -= p[tok];
    prefix.push_back(tok);
  }
  return std::exp(nll / static_cast<double>(tokens.size()));
}

void write_transcript_jsonl(std::ostream& out, const GenerationSession& sess) {
  for (const StepRecord& r : sess.transcript) {
    json j;
    j["step"] = r.step;
    j["chosen"] = r.chosen;
    j["llm_argmax"] = r.llm_argmax;
    j["llm_conf"] = r.llm_conf;
    j["slm_base_argmax"] = r.slm_base_argmax >= 0 ? json(r.slm_base_argmax) : json(nullptr);
    j["slm_pers_argmax"] = r.slm_pers_argmax >= 0 ? json(r.slm_pers_argmax) : json(nullptr);
    j["steered_argmax"] = r.steered_argmax;
    j["kl_to_pers"] = std::isnan(r.kl_to_pers) ? json(nullptr) : json(r.kl_to_pers);
    j["steering_active"] = r.steering_active;
    out << j.dump() << "\n";
  }
}

}  // namespace costeer
