#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "costeer/generation.hpp"
#include "costeer/policy.hpp"

namespace costeer {

// Frame layout, little-endian throughout:
//
//   +-------------+----------+------------------+
//   | length: u32 | type: u8 | payload bytes... |
//   +-------------+----------+------------------+
//
// length counts the type byte plus the payload.
enum class MsgType : std::uint8_t {
  kHello = 0x01,    // u32 version(=1), u32 vocab_size, u32 n, n x u32 query ids
  kLogits = 0x02,   // u32 step, vocab_size x f32 logits
  kToken = 0x03,    // u32 step, u32 token id
  kHandoff = 0x04,  // empty
  kTokenOut = 0x05, // u32 token id
  kDone = 0x06,     // u32 total tokens
  kError = 0x07,    // u16 code, utf-8 message
};

inline constexpr std::uint32_t kProtocolVersion = 1;

// Server error codes carried in ERROR frames.
inline constexpr std::uint16_t kErrProtocol = 1;
inline constexpr std::uint16_t kErrVocabMismatch = 2;
inline constexpr std::uint16_t kErrStepMismatch = 3;

struct HelloMsg {
  std::uint32_t version = kProtocolVersion;
  std::uint32_t vocab_size = 0;
  std::vector<std::uint32_t> base_query;
  bool operator==(const HelloMsg&) const = default;
};
struct LogitsMsg {
  std::uint32_t step = 0;
  std::vector<float> logits;
  bool operator==(const LogitsMsg&) const = default;
};
struct TokenMsg {
  std::uint32_t step = 0;
  std::uint32_t token = 0;
  bool operator==(const TokenMsg&) const = default;
};
struct HandoffMsg {
  bool operator==(const HandoffMsg&) const = default;
};
struct TokenOutMsg {
  std::uint32_t token = 0;
  bool operator==(const TokenOutMsg&) const = default;
};
struct DoneMsg {
  std::uint32_t total_tokens = 0;
  bool operator==(const DoneMsg&) const = default;
};
struct ErrorMsg {
  std::uint16_t code = 0;
  std::string message;
  bool operator==(const ErrorMsg&) const = default;
};

using WireMsg = std::variant<HelloMsg, LogitsMsg, TokenMsg, HandoffMsg, TokenOutMsg, DoneMsg,
                             ErrorMsg>;

MsgType msg_type(const WireMsg& msg);

// Complete frame bytes including the length prefix; decode is its inverse and
// round-trips bit-exactly.
std::vector<std::uint8_t> encode_frame(const WireMsg& msg);
WireMsg decode_frame(std::span<const std::uint8_t> frame);

// Captured frame with direction and arrival/departure time (monotonic clock).
struct FrameEvent {
  bool outbound = false;  // true: edge -> cloud
  MsgType type = MsgType::kError;
  std::uint32_t byte_count = 0;
  double t_mono = 0.0;
  double header_wait = 0.0;  // inbound: blocking wait before the first byte
  double io_seconds = 0.0;   // socket transfer + (de)serialization window
  std::vector<std::uint8_t> raw;
};

struct SessionTranscript {
  std::vector<FrameEvent> frames;

  std::size_t count(MsgType type, bool outbound) const;
  std::vector<std::uint8_t> concatenated_bytes() const;
  // Occurrences of `needle` in the concatenated capture.
  std::size_t scan(std::span<const std::uint8_t> needle) const;
  void write_capture(const std::string& path) const;
  void write_jsonl(std::ostream& out) const;
};

struct ServeOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;    // 0: ephemeral, see bound_port()
  int max_tokens = 512;      // server-side generation budget
  TokenId eos_override = -1; // -1: use the provider vocabulary's eos_id
};

// Serves per-step logits for the base query; never sees personal context.
class WireServer {
 public:
  WireServer(const PolicyProvider& llm, ServeOptions options);
  ~WireServer();

  WireServer(const WireServer&) = delete;
  WireServer& operator=(const WireServer&) = delete;

  void start();
  void stop();
  std::uint16_t bound_port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct EdgeResult {
  std::vector<TokenId> tokens;
  SessionTranscript transcript;
  GenerationSession session;
};

// Drives the protocol against a running server: HELLO with the base query
// only, one TOKEN per LOGITS, HANDOFF on ada deactivation.
EdgeResult edge_run(const PolicyProvider& slm, const PromptPair& prompt, const GenConfig& cfg,
                    const std::string& host, std::uint16_t port);

}  // namespace costeer
