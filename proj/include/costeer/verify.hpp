#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace costeer::verify {

struct SuiteResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

// The property suites behind `costeer verify`, one per shipped guarantee.
// fixtures_dir must contain the committed corpora (generic_corpus.txt,
// user_corpus.txt).
std::vector<SuiteResult> run_verify_suites(const std::filesystem::path& fixtures_dir);

SuiteResult check_closed_form_vs_oracle();   // 1
SuiteResult check_zero_delta_identity();     // 2
SuiteResult check_t1_reduction();            // 3
SuiteResult check_t1_log_gap();              // 4
SuiteResult check_delta_direction(const std::filesystem::path& fixtures_dir);  // 5
SuiteResult check_byte_fusion();             // 6
SuiteResult check_intersection_mapping();    // 7
SuiteResult check_wire();                    // 8
SuiteResult check_ada_gating();              // 9
SuiteResult check_cost_model();              // 10
SuiteResult check_latency_ordering(const std::filesystem::path& fixtures_dir);  // 11

}  // namespace costeer::verify
