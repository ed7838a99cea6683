#include "costeer/wire.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <thread>

#include "json.hpp"

namespace costeer {

namespace {

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
  b.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<std::uint8_t>& b, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(b, bits);
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(data_[pos_]) |
                      static_cast<std::uint16_t>(data_[pos_ + 1]) << 8;
    pos_ += 2;
    return v;
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  std::string rest() {
    std::string s(reinterpret_cast<const char*>(data_.data()) + pos_, data_.size() - pos_);
    pos_ = data_.size();
    return s;
  }

  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) {
    if (pos_ + n > data_.size()) fail(Err::kTruncated, "payload shorter than declared layout");
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace

MsgType msg_type(const WireMsg& msg) {
  return std::visit(
      [](const auto& m) -> MsgType {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, HelloMsg>) return MsgType::kHello;
        if constexpr (std::is_same_v<T, LogitsMsg>) return MsgType::kLogits;
        if constexpr (std::is_same_v<T, TokenMsg>) return MsgType::kToken;
        if constexpr (std::is_same_v<T, HandoffMsg>) return MsgType::kHandoff;
        if constexpr (std::is_same_v<T, TokenOutMsg>) return MsgType::kTokenOut;
        if constexpr (std::is_same_v<T, DoneMsg>) return MsgType::kDone;
        return MsgType::kError;
      },
      msg);
}

std::vector<std::uint8_t> encode_frame(const WireMsg& msg) {
  std::vector<std::uint8_t> payload;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, HelloMsg>) {
          put_u32(payload, m.version);
          put_u32(payload, m.vocab_size);
          put_u32(payload, static_cast<std::uint32_t>(m.base_query.size()));
          for (std::uint32_t id : m.base_query) put_u32(payload, id);
        } else if constexpr (std::is_same_v<T, LogitsMsg>) {
          put_u32(payload, m.step);
          for (float f : m.logits) put_f32(payload, f);
        } else if constexpr (std::is_same_v<T, TokenMsg>) {
          put_u32(payload, m.step);
          put_u32(payload, m.token);
        } else if constexpr (std::is_same_v<T, HandoffMsg>) {
          (void)m;
        } else if constexpr (std::is_same_v<T, TokenOutMsg>) {
          put_u32(payload, m.token);
        } else if constexpr (std::is_same_v<T, DoneMsg>) {
          put_u32(payload, m.total_tokens);
        } else if constexpr (std::is_same_v<T, ErrorMsg>) {
          put_u16(payload, m.code);
          for (char c : m.message) payload.push_back(static_cast<std::uint8_t>(c));
        }
      },
      msg);

  std::vector<std::uint8_t> frame;
  frame.reserve(5 + payload.size());
  put_u32(frame, static_cast<std::uint32_t>(1 + payload.size()));
  frame.push_back(static_cast<std::uint8_t>(msg_type(msg)));
  frame.insert(frame.end(), payload.begin(), payload.end());
  return frame;
}

WireMsg decode_frame(std::span<const std::uint8_t> frame) {
  if (frame.size() < 5) fail(Err::kTruncated, "frame shorter than header");
  Reader hdr(frame.subspan(0, 4));
  const std::uint32_t length = hdr.u32();
  if (length < 1) fail(Err::kMalformed, "length must cover the type byte");
  if (frame.size() < 4 + static_cast<std::size_t>(length))
    fail(Err::kTruncated, "frame shorter than declared length");
  if (frame.size() > 4 + static_cast<std::size_t>(length))
    fail(Err::kMalformed, "trailing bytes after frame");

  const std::uint8_t type = frame[4];
  Reader r(frame.subspan(5, length - 1));
  switch (static_cast<MsgType>(type)) {
    case MsgType::kHello: {
      HelloMsg m;
      m.version = r.u32();
      m.vocab_size = r.u32();
      const std::uint32_t n = r.u32();
      if (r.remaining() != static_cast<std::size_t>(n) * 4)
        fail(Err::kMalformed, "hello id count disagrees with payload size");
      m.base_query.resize(n);
      for (std::uint32_t i = 0; i < n; ++i) m.base_query[i] = r.u32();
      return m;
    }
    case MsgType::kLogits: {
      LogitsMsg m;
      m.step = r.u32();
      if (r.remaining() % 4 != 0) fail(Err::kMalformed, "logits payload not float-aligned");
      m.logits.resize(r.remaining() / 4);
      for (float& f : m.logits) f = r.f32();
      return m;
    }
    case MsgType::kToken: {
      TokenMsg m;
      m.step = r.u32();
      m.token = r.u32();
      if (r.remaining() != 0) fail(Err::kMalformed, "token payload has trailing bytes");
      return m;
    }
    case MsgType::kHandoff: {
      if (r.remaining() != 0) fail(Err::kMalformed, "handoff payload must be empty");
      return HandoffMsg{};
    }
    case MsgType::kTokenOut: {
      TokenOutMsg m;
      m.token = r.u32();
      if (r.remaining() != 0) fail(Err::kMalformed, "token_out payload has trailing bytes");
      return m;
    }
    case MsgType::kDone: {
      DoneMsg m;
      m.total_tokens = r.u32();
      if (r.remaining() != 0) fail(Err::kMalformed, "done payload has trailing bytes");
      return m;
    }
    case MsgType::kError: {
      ErrorMsg m;
      m.code = r.u16();
      m.message = r.rest();
      return m;
    }
  }
  fail(Err::kUnknownType, "unknown msg_type 0x" + std::to_string(type));
}

std::size_t SessionTranscript::count(MsgType type, bool outbound) const {
  std::size_t n = 0;
  for (const FrameEvent& f : frames)
    if (f.type == type && f.outbound == outbound) ++n;
  return n;
}

std::vector<std::uint8_t> SessionTranscript::concatenated_bytes() const {
  std::vector<std::uint8_t> out;
  for (const FrameEvent& f : frames) out.insert(out.end(), f.raw.begin(), f.raw.end());
  return out;
}

std::size_t SessionTranscript::scan(std::span<const std::uint8_t> needle) const {
  if (needle.empty()) return 0;
  const std::vector<std::uint8_t> hay = concatenated_bytes();
  std::size_t hits = 0;
  if (hay.size() < needle.size()) return 0;
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i) {
    if (std::memcmp(hay.data() + i, needle.data(), needle.size()) == 0) ++hits;
  }
  return hits;
}

void SessionTranscript::write_capture(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Err::kInvalidArgument, "cannot open " + path);
  const std::vector<std::uint8_t> bytes = concatenated_bytes();
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

void SessionTranscript::write_jsonl(std::ostream& out) const {
  for (const FrameEvent& f : frames) {
    nlohmann::json j;
    j["dir"] = f.outbound ? "up" : "down";
    j["type"] = static_cast<int>(f.type);
    j["bytes"] = f.byte_count;
    j["t_mono"] = f.t_mono;
    out << j.dump() << "\n";
  }
}

// ---------------------------------------------------------------------------
// Sockets
// ---------------------------------------------------------------------------

namespace {

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket() { close_fd(); }
  Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close_fd();
      fd_ = o.fd_;
      o.fd_ = -1;
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void close_fd() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  int fd_ = -1;
};

void write_all(int fd, const std::uint8_t* data, std::size_t n) {
  std::size_t off = 0;
  while (off < n) {
    const ssize_t w = ::send(fd, data + off, n - off, MSG_NOSIGNAL);
    if (w <= 0) fail(Err::kConnectionLost, "send failed");
    off += static_cast<std::size_t>(w);
  }
}

// Returns false on clean EOF at a frame boundary (only when allow_eof).
bool read_exact(int fd, std::uint8_t* data, std::size_t n, bool allow_eof) {
  std::size_t off = 0;
  while (off < n) {
    const ssize_t r = ::recv(fd, data + off, n - off, 0);
    if (r == 0) {
      if (allow_eof && off == 0) return false;
      fail(Err::kConnectionLost, "connection closed mid-frame");
    }
    if (r < 0) fail(Err::kConnectionLost, "recv failed");
    off += static_cast<std::size_t>(r);
  }
  return true;
}

struct ReadTiming {
  double header_wait = 0.0;
  double io_seconds = 0.0;
};

// Reads one frame; returns nullopt on clean EOF. Timing splits the wait for
// the first header byte (server compute window) from the body transfer.
std::optional<std::pair<WireMsg, std::vector<std::uint8_t>>> read_frame(int fd,
                                                                        ReadTiming* timing) {
  const double t0 = now_seconds();
  std::uint8_t hdr[4];
  if (!read_exact(fd, hdr, 4, /*allow_eof=*/true)) return std::nullopt;
  const double t1 = now_seconds();
  std::uint32_t length = 0;
  for (int i = 0; i < 4; ++i) length |= static_cast<std::uint32_t>(hdr[i]) << (8 * i);
  if (length < 1 || length > (64u << 20))
    fail(Err::kMalformed, "frame length out of bounds");
  std::vector<std::uint8_t> frame(4 + length);
  std::memcpy(frame.data(), hdr, 4);
  read_exact(fd, frame.data() + 4, length, /*allow_eof=*/false);
  WireMsg msg = decode_frame(frame);
  const double t2 = now_seconds();
  if (timing) {
    timing->header_wait = t1 - t0;
    timing->io_seconds = t2 - t1;
  }
  return std::make_pair(std::move(msg), std::move(frame));
}

void set_timeout(int fd, int seconds) {
  timeval tv{};
  tv.tv_sec = seconds;
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
}

}  // namespace

// ---------------------------------------------------------------------------
// Server
// ---------------------------------------------------------------------------

struct WireServer::Impl {
  const PolicyProvider& llm;
  ServeOptions options;
  Socket listener;
  std::uint16_t port = 0;
  std::thread accept_thread;
  std::atomic<bool> running{false};
  std::mutex mu;
  std::vector<std::thread> workers;

  Impl(const PolicyProvider& llm_in, ServeOptions opt) : llm(llm_in), options(std::move(opt)) {}

  void send(int fd, const WireMsg& msg) {
    const std::vector<std::uint8_t> frame = encode_frame(msg);
    write_all(fd, frame.data(), frame.size());
  }

  void send_error(int fd, std::uint16_t code, const std::string& text) {
    try {
      send(fd, ErrorMsg{code, text});
    } catch (const Error&) {
      // peer already gone
    }
  }

  void handle(Socket conn) {
    const int fd = conn.fd();
    set_timeout(fd, 30);
    try {
      auto first = read_frame(fd, nullptr);
      if (!first) return;
      const auto* hello = std::get_if<HelloMsg>(&first->first);
      if (!hello || hello->version != kProtocolVersion) {
        send_error(fd, kErrProtocol, "expected HELLO v1");
        return;
      }
      if (hello->vocab_size != llm.vocab().size()) {
        send_error(fd, kErrVocabMismatch, "vocab size mismatch");
        return;
      }
      std::vector<TokenId> base(hello->base_query.begin(), hello->base_query.end());
      const TokenId eos =
          options.eos_override >= 0 ? options.eos_override : llm.vocab().eos_id;
      std::vector<TokenId> seq;
      std::uint32_t step = 0;

      while (true) {
        const std::vector<double> raw = llm.raw_logits(base, seq);
        LogitsMsg lm;
        lm.step = step;
        lm.logits.assign(raw.begin(), raw.end());
        send(fd, lm);

        auto next = read_frame(fd, nullptr);
        if (!next) return;  // client went away
        if (const auto* tok = std::get_if<TokenMsg>(&next->first)) {
          if (tok->step != step) {
            send_error(fd, kErrStepMismatch, "token step does not match last logits");
            return;
          }
          seq.push_back(static_cast<TokenId>(tok->token));
          ++step;
          if (seq.back() == eos || static_cast<int>(seq.size()) >= options.max_tokens) {
            send(fd, DoneMsg{static_cast<std::uint32_t>(seq.size())});
            return;
          }
        } else if (std::holds_alternative<HandoffMsg>(next->first)) {
          while (static_cast<int>(seq.size()) < options.max_tokens &&
                 (seq.empty() || seq.back() != eos)) {
            const Policy p = llm.policy(base, seq);
            const TokenId a = argmax_token(p);
            seq.push_back(a);
            send(fd, TokenOutMsg{static_cast<std::uint32_t>(a)});
            if (a == eos) break;
          }
          send(fd, DoneMsg{static_cast<std::uint32_t>(seq.size())});
          return;
        } else {
          send_error(fd, kErrProtocol, "expected TOKEN or HANDOFF");
          return;
        }
      }
    } catch (const Error&) {
      // connection-level failure; nothing to clean up beyond the socket
    }
  }
};

WireServer::WireServer(const PolicyProvider& llm, ServeOptions options)
    : impl_(std::make_unique<Impl>(llm, std::move(options))) {}

WireServer::~WireServer() { stop(); }

void WireServer::start() {
  Impl& s = *impl_;
  Socket listener(::socket(AF_INET, SOCK_STREAM, 0));
  if (!listener.valid()) fail(Err::kConnectionLost, "socket() failed");
  int one = 1;
  ::setsockopt(listener.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(s.options.port);
  if (::inet_pton(AF_INET, s.options.host.c_str(), &addr.sin_addr) != 1)
    fail(Err::kInvalidArgument, "bad host " + s.options.host);
  if (::bind(listener.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
    fail(Err::kConnectionLost, "bind failed on " + s.options.host);
  if (::listen(listener.fd(), 16) != 0) fail(Err::kConnectionLost, "listen failed");

  sockaddr_in bound{};
  socklen_t blen = sizeof(bound);
  ::getsockname(listener.fd(), reinterpret_cast<sockaddr*>(&bound), &blen);
  s.port = ntohs(bound.sin_port);

  s.listener = std::move(listener);
  s.running.store(true);
  s.accept_thread = std::thread([&s] {
    while (s.running.load()) {
      const int cfd = ::accept(s.listener.fd(), nullptr, nullptr);
      if (cfd < 0) {
        if (!s.running.load()) break;
        continue;
      }
      std::lock_guard<std::mutex> lock(s.mu);
      s.workers.emplace_back([&s, cfd] { s.handle(Socket(cfd)); });
    }
  });
}

void WireServer::stop() {
  Impl& s = *impl_;
  if (!s.running.exchange(false)) return;
  ::shutdown(s.listener.fd(), SHUT_RDWR);
  s.listener.close_fd();
  if (s.accept_thread.joinable()) s.accept_thread.join();
  std::lock_guard<std::mutex> lock(s.mu);
  for (std::thread& w : s.workers)
    if (w.joinable()) w.join();
  s.workers.clear();
}

std::uint16_t WireServer::bound_port() const { return impl_->port; }

// ---------------------------------------------------------------------------
// Edge client
// ---------------------------------------------------------------------------

namespace {

class RecordingChannel {
 public:
  explicit RecordingChannel(int fd) : fd_(fd) {}

  void send(const WireMsg& msg, SessionTranscript& transcript) {
    const double t0 = now_seconds();
    std::vector<std::uint8_t> frame = encode_frame(msg);
    write_all(fd_, frame.data(), frame.size());
    FrameEvent ev;
    ev.outbound = true;
    ev.type = msg_type(msg);
    ev.byte_count = static_cast<std::uint32_t>(frame.size());
    ev.t_mono = now_seconds();
    ev.io_seconds = ev.t_mono - t0;
    ev.raw = std::move(frame);
    transcript.frames.push_back(std::move(ev));
  }

  WireMsg recv(SessionTranscript& transcript, double* header_wait = nullptr) {
    ReadTiming timing;
    auto got = read_frame(fd_, &timing);
    if (!got) fail(Err::kConnectionLost, "server closed the connection");
    FrameEvent ev;
    ev.outbound = false;
    ev.type = msg_type(got->first);
    ev.byte_count = static_cast<std::uint32_t>(got->second.size());
    ev.t_mono = now_seconds();
    ev.header_wait = timing.header_wait;
    ev.io_seconds = timing.io_seconds;
    ev.raw = std::move(got->second);
    transcript.frames.push_back(std::move(ev));
    if (header_wait) *header_wait = timing.header_wait;
    return got->first;
  }

 private:
  int fd_;
};

}  // namespace

EdgeResult edge_run(const PolicyProvider& slm, const PromptPair& prompt, const GenConfig& cfg,
                    const std::string& host, std::uint16_t port) {
  cfg.validate();
  prompt.validate();
  if (cfg.mode == Mode::kSlmOnly || cfg.mode == Mode::kLaBaseline)
    fail(Err::kInvalidArgument, "mode runs fully on-device; use generate instead");

  Socket sock(::socket(AF_INET, SOCK_STREAM, 0));
  if (!sock.valid()) fail(Err::kConnectionLost, "socket() failed");
  set_timeout(sock.fd(), 30);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
    fail(Err::kInvalidArgument, "bad host " + host);
  if (::connect(sock.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
    fail(Err::kConnectionLost, "cannot connect to " + host + ":" + std::to_string(port));
  int one = 1;
  ::setsockopt(sock.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));

  EdgeResult res;
  res.session.prompt = prompt;
  RecordingChannel chan(sock.fd());

  HelloMsg hello;
  hello.vocab_size = static_cast<std::uint32_t>(slm.vocab().size());
  hello.base_query.assign(prompt.base_query.begin(), prompt.base_query.end());
  chan.send(hello, res.transcript);

  const std::vector<TokenId> combined = prompt.combined();
  const TokenId eos = cfg.eos_override >= 0 ? cfg.eos_override : slm.vocab().eos_id;
  GenerationSession& sess = res.session;
  bool handoff_sent = false;

  while (true) {
    double header_wait = 0.0;
    WireMsg msg = chan.recv(res.transcript, &header_wait);

    if (const auto* lm = std::get_if<LogitsMsg>(&msg)) {
      StepRecord rec;
      rec.step = static_cast<int>(lm->step);
      rec.llm_seconds = header_wait;
      rec.wire_seconds = res.transcript.frames.back().io_seconds;

      std::vector<double> llm_raw(lm->logits.begin(), lm->logits.end());
      Policy pi_base = normalize(llm_raw);
      rec.llm_argmax = argmax_token(pi_base);
      rec.llm_conf = confidence(pi_base);

      const bool steer_this_step = sess.steering_active && cfg.mode != Mode::kLlmOnly;
      if (cfg.mode == Mode::kAda && sess.steering_active)
        ada_update(sess, rec.llm_conf, *cfg.ada);
      rec.steering_active = steer_this_step;

      Policy chosen_policy;
      if (steer_this_step) {
        const double t0 = now_seconds();
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
      rec.chosen = rec.steered_argmax;
      sess.state.tokens.push_back(rec.chosen);
      sess.transcript.push_back(rec);

      chan.send(TokenMsg{lm->step, static_cast<std::uint32_t>(rec.chosen)}, res.transcript);

      const bool ended = rec.chosen == eos ||
                         static_cast<int>(sess.state.tokens.size()) >= cfg.max_tokens;
      if (!ended && cfg.mode == Mode::kAda && !sess.steering_active && !handoff_sent) {
        chan.send(HandoffMsg{}, res.transcript);
        handoff_sent = true;
      }
    } else if (const auto* out = std::get_if<TokenOutMsg>(&msg)) {
      StepRecord rec;
      rec.step = static_cast<int>(sess.state.tokens.size());
      rec.chosen = static_cast<TokenId>(out->token);
      rec.steered_argmax = rec.chosen;
      rec.steering_active = false;
      rec.wire_seconds = res.transcript.frames.back().io_seconds;
      rec.llm_seconds = header_wait;
      sess.state.tokens.push_back(rec.chosen);
      sess.transcript.push_back(rec);
    } else if (const auto* done = std::get_if<DoneMsg>(&msg)) {
      if (done->total_tokens != sess.state.tokens.size())
        fail(Err::kMalformed, "server token count disagrees with local sequence");
      break;
    } else if (const auto* err = std::get_if<ErrorMsg>(&msg)) {
      fail(Err::kServerError,
           "server error " + std::to_string(err->code) + ": " + err->message);
    } else {
      fail(Err::kMalformed, "unexpected frame from server");
    }
  }

  res.tokens = sess.state.tokens;
  return res;
}

}  // namespace costeer
