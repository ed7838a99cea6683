#pragma once

#include <stdexcept>
#include <string>

namespace costeer {

enum class Err {
  kEmptyVector,
  kNonFinite,
  kLengthMismatch,
  kNonPositiveDenominator,
  kNoConvergence,
  kVocabMismatch,
  kEmptySequence,
  kEmptyIntersection,
  kEmptyCandidates,
  kNoExactCandidate,
  kMalformed,
  kUnknownType,
  kTruncated,
  kConnectionLost,
  kUncoveredByte,
  kEmptyCorpus,
  kMissingTimestamps,
  kServerError,
  kInvalidArgument,
};

const char* err_name(Err code);

class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& what)
      : std::runtime_error(std::string(err_name(code)) + ": " + what), code_(code) {}

  Err code() const { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& what) { throw Error(code, what); }

}  // namespace costeer
