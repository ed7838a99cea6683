#pragma once

#include <span>
#include <vector>

#include "costeer/policy.hpp"

namespace costeer {

// Steering hyperparameters. Defaults are the shipped configuration:
// T=20, alpha=2.0, beta=1.0, lambda=2, eta=10.
struct SteerParams {
  double alpha = 2.0;   // weight of the LLM policy contrast term
  double beta = 1.0;    // weight of the SLM delta term
  double lambda = 2.0;  // KL-to-initial-policy weight, > 0
  double eta = 10.0;    // proximal learning rate, > 0
  int iterations = 20;  // T >= 1

  void validate() const;

  // The single-step reduction folds (beta, lambda, eta) into one scale.
  // Derived on demand, never stored.
  double beta_star() const { return beta / (lambda + 1.0 / eta); }
};

// Per-token steering direction: delta[a] = log pi*_pers(a) - log pi*_base(a),
// both policies floor-clamped so every entry is finite.
struct DeltaSignal {
  std::vector<double> delta;

  std::size_t size() const { return delta.size(); }
  static DeltaSignal zeros(std::size_t n) { return DeltaSignal{std::vector<double>(n, 0.0)}; }
};

DeltaSignal compute_delta(const Policy& pers_policy, const Policy& base_policy);

// u(a) = alpha * (log pi_current(a) - log pi_base(a)) + beta * delta(a)
std::vector<double> utility_step(const Policy& pi_current, const Policy& pi_base,
                                 const DeltaSignal& delta, const SteerParams& params);

// Running state of the iterative update: sum of utilities u_0..u_{t-1}, the
// iteration counter t, the previous policy and the initial policy.
struct UtilityAccumulator {
  std::vector<double> sum_u;
  int t = 0;
  Policy pi_prev;
  Policy pi_0;

  static UtilityAccumulator start(const Policy& pi0) {
    UtilityAccumulator acc;
    acc.sum_u.assign(pi0.size(), 0.0);
    acc.pi_prev = pi0;
    acc.pi_0 = pi0;
    return acc;
  }

  // Fold in the utility computed from pi_prev; bumps t to the index of the
  // policy the next ftrl_update call will produce.
  void accumulate(std::span<const double> u);

  // Record pi_t as the new previous policy.
  void advance(Policy pi_t) { pi_prev = std::move(pi_t); }
};

// Closed-form maximizer of the accumulated objective:
//   pi_t(a) ∝ exp( (sum_u(a) + t*lambda*log pi_0(a) + (1/eta)*log pi_{t-1}(a))
//                  / (t*lambda + 1/eta) )
Policy ftrl_update(const UtilityAccumulator& acc, const SteerParams& params);

// Runs the full T-iteration update starting from pi_0 = pi_base and returns
// pi_T. steer_trace returns every intermediate policy pi_1..pi_T.
Policy steer(const Policy& pi_base, const DeltaSignal& delta, const SteerParams& params);
std::vector<Policy> steer_trace(const Policy& pi_base, const DeltaSignal& delta,
                                const SteerParams& params);

// Single-step variant: normalize(log pi_base + beta_star * delta).
Policy light_steer(const Policy& pi_base, const DeltaSignal& delta, double beta_star);

// The constrained objective the closed form solves, evaluated directly from
// its four terms (utility inner product, KL to pi_0, KL to pi_prev; the
// simplex constraint is handled by the caller). Exposed for oracle and tests.
double steering_objective(std::span<const double> log_p, const UtilityAccumulator& acc,
                          const SteerParams& params);
// d(objective)/d p(a), holding the simplex constraint aside.
std::vector<double> steering_gradient(std::span<const double> log_p,
                                      const UtilityAccumulator& acc, const SteerParams& params);

// Brute-force maximizer of the same objective over the probability simplex,
// by entropic mirror ascent on steering_gradient. Verification-scale only
// (vocab <= 8); used as an independent check of ftrl_update.
Policy oracle_maximize(const UtilityAccumulator& acc, const SteerParams& params);

// Baseline: normalize(log pi_plain + scale * (log pi_context - log pi_plain)).
// The context-scaling knob here is unrelated to SteerParams::lambda.
Policy la_adjust(const Policy& pi_context, const Policy& pi_plain, double scale);

// Baseline: normalize(llm_logits + expert_logits - base_logits).
Policy proxy_combine(std::span<const double> llm_logits, std::span<const double> expert_logits,
                     std::span<const double> base_logits);

namespace internal {
// Self-test hook: adds `skew` to the ftrl_update denominator so the verify
// suite can prove the oracle comparison actually detects a broken update.
void set_ftrl_denominator_skew(double skew);
double ftrl_denominator_skew();
}  // namespace internal

}  // namespace costeer
