#pragma once

#include <string>
#include <vector>

#include "costeer/generation.hpp"
#include "costeer/wire.hpp"

namespace costeer {

struct ModelProfile {
  double param_count = 0;  // P
  double n_layers = 0;
  double d_model = 0;
  std::string label;

  void validate() const;
};

// Totals in FLOPs for the three deployment arms at a given context length C,
// query length q and generation length g.
struct CostReport {
  double llm_without = 0;     // LLM over q+g tokens
  double llm_with = 0;        // LLM over q+C+g tokens
  double costeer = 0;         // LLM over q+g, SLM over q+g and over q+C+g
  double costeer_llm_side = 0;  // the LLM share of the costeer arm (C-free)
  double context_len = 0;
  double query_len = 0;
  double gen_len = 0;

  double ratio_with_over_costeer() const { return llm_with / costeer; }
  std::string to_json() const;
};

// First-order transformer cost: each processed token costs
// 2P + 4 * n_layers * d_model * (its context length), prefill and decode
// treated uniformly.
CostReport flops_estimate(const ModelProfile& llm, const ModelProfile& slm, double context_len,
                          double query_len, double gen_len);

// Shipped reference profiles for the default comparison.
ModelProfile default_llm_profile();  // 7B-class
ModelProfile default_slm_profile();  // 1.5B-class

// Per-token latency attribution: L (server/LLM compute), T (frame transfer +
// serialization), C (edge compute, with the optimization window split out).
struct LatencyBreakdown {
  std::vector<double> llm_seconds;        // L
  std::vector<double> transmission_seconds;  // T
  std::vector<double> edge_seconds;       // C = SLM inference + optimization
  std::vector<double> optimize_seconds;   // optimization only
  double total_llm = 0;
  double total_transmission = 0;
  double total_edge = 0;
  double wall_seconds = 0;
  double tokens_per_second = 0;
  std::size_t frames_down = 0;
  std::size_t frames_up = 0;

  double median_optimize() const;
  std::string to_json() const;
};

LatencyBreakdown latency_report(const SessionTranscript& transcript,
                                const GenerationSession& session);

}  // namespace costeer
