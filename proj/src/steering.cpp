#include "costeer/steering.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

namespace costeer {

namespace {

constexpr double kOracleFloor = 1e-12;
constexpr int kOracleMaxIters = 50000;
constexpr double kOracleTol = 1e-8;

std::atomic<double> g_denominator_skew{0.0};

}  // namespace

namespace internal {
void set_ftrl_denominator_skew(double skew) { g_denominator_skew.store(skew); }
double ftrl_denominator_skew() { return g_denominator_skew.load(); }
}  // namespace internal

void SteerParams::validate() const {
  if (!(lambda > 0.0)) fail(Err::kInvalidArgument, "lambda must be > 0");
  if (!(eta > 0.0)) fail(Err::kInvalidArgument, "eta must be > 0");
  if (alpha < 0.0) fail(Err::kInvalidArgument, "alpha must be >= 0");
  if (beta < 0.0) fail(Err::kInvalidArgument, "beta must be >= 0");
  if (iterations < 1) fail(Err::kInvalidArgument, "iterations must be >= 1");
}

DeltaSignal compute_delta(const Policy& pers_policy, const Policy& base_policy) {
  if (pers_policy.size() != base_policy.size())
    fail(Err::kLengthMismatch, "compute_delta on unequal vocab sizes");
  DeltaSignal d;
  d.delta.resize(pers_policy.size());
  for (std::size_t i = 0; i < d.delta.size(); ++i) d.delta[i] = pers_policy[i] - base_policy[i];
  return d;
}

std::vector<double> utility_step(const Policy& pi_current, const Policy& pi_base,
                                 const DeltaSignal& delta, const SteerParams& params) {
  if (pi_current.size() != pi_base.size() || pi_current.size() != delta.size())
    fail(Err::kLengthMismatch, "utility_step on unequal lengths");
  std::vector<double> u(pi_current.size());
  for (std::size_t i = 0; i < u.size(); ++i)
    u[i] = params.alpha * (pi_current[i] - pi_base[i]) + params.beta * delta.delta[i];
  return u;
}

void UtilityAccumulator::accumulate(std::span<const double> u) {
  if (u.size() != sum_u.size()) fail(Err::kLengthMismatch, "utility length mismatch");
  for (std::size_t i = 0; i < u.size(); ++i) sum_u[i] += u[i];
  ++t;
}

Policy ftrl_update(const UtilityAccumulator& acc, const SteerParams& params) {
  const double denom =
      acc.t * params.lambda + 1.0 / params.eta + internal::ftrl_denominator_skew();
  if (!(denom > 0.0)) fail(Err::kNonPositiveDenominator, "t*lambda + 1/eta must be > 0");
  std::vector<double> exponent(acc.sum_u.size());
  for (std::size_t i = 0; i < exponent.size(); ++i) {
    exponent[i] =
        (acc.sum_u[i] + acc.t * params.lambda * acc.pi_0[i] + (1.0 / params.eta) * acc.pi_prev[i]) /
        denom;
  }
  return normalize(exponent);
}

std::vector<Policy> steer_trace(const Policy& pi_base, const DeltaSignal& delta,
                                const SteerParams& params) {
  params.validate();
  if (pi_base.size() != delta.size()) fail(Err::kLengthMismatch, "steer on unequal lengths");
  std::vector<Policy> trace;
  trace.reserve(params.iterations);
  UtilityAccumulator acc = UtilityAccumulator::start(pi_base);
  for (int t = 1; t <= params.iterations; ++t) {
    acc.accumulate(utility_step(acc.pi_prev, acc.pi_0, delta, params));
    Policy pi_t = ftrl_update(acc, params);
    trace.push_back(pi_t);
    acc.advance(std::move(pi_t));
  }
  return trace;
}

Policy steer(const Policy& pi_base, const DeltaSignal& delta, const SteerParams& params) {
  return steer_trace(pi_base, delta, params).back();
}

Policy light_steer(const Policy& pi_base, const DeltaSignal& delta, double beta_star) {
  if (pi_base.size() != delta.size()) fail(Err::kLengthMismatch, "light_steer on unequal lengths");
  if (beta_star < 0.0) fail(Err::kInvalidArgument, "beta_star must be >= 0");
  std::vector<double> v(pi_base.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = pi_base[i] + beta_star * delta.delta[i];
  return normalize(v);
}

double steering_objective(std::span<const double> log_p, const UtilityAccumulator& acc,
                          const SteerParams& params) {
  const double tl = acc.t * params.lambda;
  double obj = 0.0;
  for (std::size_t i = 0; i < log_p.size(); ++i) {
    const double p = std::exp(log_p[i]);
    obj += p * acc.sum_u[i];                       // accumulated utility
    obj -= tl * p * (log_p[i] - acc.pi_0[i]);      // KL to the initial policy
    obj -= (1.0 / params.eta) * p * (log_p[i] - acc.pi_prev[i]);  // proximal KL
  }
  return obj;
}

std::vector<double> steering_gradient(std::span<const double> log_p,
                                      const UtilityAccumulator& acc, const SteerParams& params) {
  const double tl = acc.t * params.lambda;
  std::vector<double> g(log_p.size());
  for (std::size_t i = 0; i < log_p.size(); ++i) {
    g[i] = acc.sum_u[i] - tl * (log_p[i] - acc.pi_0[i] + 1.0) -
           (1.0 / params.eta) * (log_p[i] - acc.pi_prev[i] + 1.0);
  }
  return g;
}

namespace {

// Renormalize a log vector and clamp entries at the oracle floor.
void renorm_floor(std::vector<double>& lp) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : lp) m = std::max(m, x);
  double z = 0.0;
  for (double x : lp) z += std::exp(x - m);
  const double log_z = m + std::log(z);
  for (double& x : lp) x -= log_z;
  const double floor_log = std::log(kOracleFloor);
  bool clamped = false;
  for (double& x : lp) {
    if (x < floor_log) {
      x = floor_log;
      clamped = true;
    }
  }
  if (clamped) {
    m = -std::numeric_limits<double>::infinity();
    for (double x : lp) m = std::max(m, x);
    z = 0.0;
    for (double x : lp) z += std::exp(x - m);
    const double log_z2 = m + std::log(z);
    for (double& x : lp) x -= log_z2;
  }
}

}  // namespace

Policy oracle_maximize(const UtilityAccumulator& acc, const SteerParams& params) {
  params.validate();
  if (acc.sum_u.size() > 8)
    fail(Err::kInvalidArgument, "oracle_maximize is verification-scale only (vocab <= 8)");
  const std::size_t n = acc.sum_u.size();
  const double denom = acc.t * params.lambda + 1.0 / params.eta;

  // Ascend in the mirror (log) space: multiplicative steps keep the iterate
  // on the simplex and stay stable where the Euclidean curvature 1/p blows
  // up. Step scale under-relaxes against the objective's entropy curvature.
  std::vector<double> lp(acc.pi_prev.log_probs());
  renorm_floor(lp);
  const double step0 = 0.4 / denom;

  for (int it = 0; it < kOracleMaxIters; ++it) {
    std::vector<double> g = steering_gradient(lp, acc, params);

    // KKT residual: at the maximum the gradient is constant on the support
    // and no floored entry wants to grow.
    double g_mean = 0.0;
    int active = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (std::exp(lp[i]) > 1.5 * kOracleFloor) {
        g_mean += g[i];
        ++active;
      }
    }
    g_mean /= std::max(active, 1);
    double res_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = (std::exp(lp[i]) > 1.5 * kOracleFloor) ? g[i] - g_mean
                                                              : std::max(g[i] - g_mean, 0.0);
      res_sq += r * r;
    }
    if (std::sqrt(res_sq) <= kOracleTol) return Policy::from_log_probs_unchecked(std::move(lp));

    const double f0 = steering_objective(lp, acc, params);
    double step = step0;
    bool improved = false;
    while (step > 1e-18) {
      std::vector<double> cand(n);
      for (std::size_t i = 0; i < n; ++i) cand[i] = lp[i] + step * g[i];
      renorm_floor(cand);
      if (steering_objective(cand, acc, params) > f0) {
        lp = std::move(cand);
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) {
      // No ascent direction at float resolution; accept if the residual is
      // already loose-tolerance small, otherwise report failure below.
      break;
    }
  }

  // Re-check the residual once more before giving up.
  std::vector<double> g = steering_gradient(lp, acc, params);
  double g_mean = 0.0;
  int active = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::exp(lp[i]) > 1.5 * kOracleFloor) {
      g_mean += g[i];
      ++active;
    }
  }
  g_mean /= std::max(active, 1);
  double res_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r =
        (std::exp(lp[i]) > 1.5 * kOracleFloor) ? g[i] - g_mean : std::max(g[i] - g_mean, 0.0);
    res_sq += r * r;
  }
  if (std::sqrt(res_sq) <= kOracleTol) return Policy::from_log_probs_unchecked(std::move(lp));
  fail(Err::kNoConvergence, "oracle ascent did not reach gradient norm 1e-8");
}

Policy la_adjust(const Policy& pi_context, const Policy& pi_plain, double scale) {
  if (pi_context.size() != pi_plain.size())
    fail(Err::kLengthMismatch, "la_adjust on unequal lengths");
  if (scale < 0.0) fail(Err::kInvalidArgument, "scale must be >= 0");
  std::vector<double> v(pi_plain.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = pi_plain[i] + scale * (pi_context[i] - pi_plain[i]);
  return normalize(v);
}

Policy proxy_combine(std::span<const double> llm_logits, std::span<const double> expert_logits,
                     std::span<const double> base_logits) {
  if (llm_logits.size() != expert_logits.size() || llm_logits.size() != base_logits.size())
    fail(Err::kLengthMismatch, "proxy_combine on unequal lengths");
  std::vector<double> v(llm_logits.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = llm_logits[i] + expert_logits[i] - base_logits[i];
  return normalize(v);
}

}  // namespace costeer
