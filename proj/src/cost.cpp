#include "costeer/cost.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace costeer {

void ModelProfile::validate() const {
  if (!(param_count > 0 && n_layers > 0 && d_model > 0))
    fail(Err::kInvalidArgument, "model profile fields must be positive");
}

namespace {

// Sum over tokens 1..len of (2P + 4*n_layers*d_model*position).
double sequence_flops(const ModelProfile& m, double len) {
  if (len <= 0) return 0.0;
  return 2.0 * m.param_count * len + 2.0 * m.n_layers * m.d_model * len * (len + 1.0);
}

}  // namespace

CostReport flops_estimate(const ModelProfile& llm, const ModelProfile& slm, double context_len,
                          double query_len, double gen_len) {
  llm.validate();
  slm.validate();
  if (context_len < 0 || query_len < 0 || gen_len < 0)
    fail(Err::kInvalidArgument, "lengths must be >= 0");
  CostReport r;
  r.context_len = context_len;
  r.query_len = query_len;
  r.gen_len = gen_len;
  r.llm_without = sequence_flops(llm, query_len + gen_len);
  r.llm_with = sequence_flops(llm, query_len + context_len + gen_len);
  r.costeer_llm_side = sequence_flops(llm, query_len + gen_len);
  r.costeer = r.costeer_llm_side + sequence_flops(slm, query_len + gen_len) +
              sequence_flops(slm, query_len + context_len + gen_len);
  return r;
}

std::string CostReport::to_json() const {
  nlohmann::json j;
  j["context_len"] = context_len;
  j["query_len"] = query_len;
  j["gen_len"] = gen_len;
  j["llm_without_flops"] = llm_without;
  j["llm_with_flops"] = llm_with;
  j["costeer_flops"] = costeer;
  j["costeer_llm_side_flops"] = costeer_llm_side;
  j["ratio_llm_with_over_costeer"] = ratio_with_over_costeer();
  return j.dump(2);
}

ModelProfile default_llm_profile() { return ModelProfile{7e9, 28, 3584, "llm-7b"}; }
ModelProfile default_slm_profile() { return ModelProfile{1.5e9, 28, 1536, "slm-1.5b"}; }

double LatencyBreakdown::median_optimize() const {
  if (optimize_seconds.empty()) return 0.0;
  std::vector<double> v = optimize_seconds;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string LatencyBreakdown::to_json() const {
  nlohmann::json j;
  j["tokens"] = llm_seconds.size();
  j["total_llm_seconds"] = total_llm;
  j["total_transmission_seconds"] = total_transmission;
  j["total_edge_seconds"] = total_edge;
  j["median_optimize_seconds"] = median_optimize();
  j["wall_seconds"] = wall_seconds;
  j["tokens_per_second"] = tokens_per_second;
  j["frames_down"] = frames_down;
  j["frames_up"] = frames_up;
  return j.dump(2);
}

LatencyBreakdown latency_report(const SessionTranscript& transcript,
                                const GenerationSession& session) {
  LatencyBreakdown b;
  for (const StepRecord& r : session.transcript) {
    if (std::isnan(r.llm_seconds) || std::isnan(r.slm_seconds) || std::isnan(r.steer_seconds) ||
        r.llm_seconds < 0 || r.slm_seconds < 0 || r.steer_seconds < 0 || r.wire_seconds < 0)
      fail(Err::kMissingTimestamps, "step record lacks usable timings");
    b.llm_seconds.push_back(r.llm_seconds);
    b.transmission_seconds.push_back(r.wire_seconds);
    b.edge_seconds.push_back(r.slm_seconds + r.steer_seconds);
    b.optimize_seconds.push_back(r.steer_seconds);
    b.total_llm += r.llm_seconds;
    b.total_transmission += r.wire_seconds;
    b.total_edge += r.slm_seconds + r.steer_seconds;
  }
  for (const FrameEvent& f : transcript.frames) {
    if (f.outbound)
      ++b.frames_up;
    else
      ++b.frames_down;
  }
  if (!transcript.frames.empty()) {
    b.wall_seconds = transcript.frames.back().t_mono - transcript.frames.front().t_mono +
                     transcript.frames.front().io_seconds;
  } else {
    b.wall_seconds = b.total_llm + b.total_transmission + b.total_edge;
  }
  if (!session.transcript.empty() && b.wall_seconds > 0)
    b.tokens_per_second = static_cast<double>(session.transcript.size()) / b.wall_seconds;
  return b;
}

}  // namespace costeer
