#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <thread>

#include "CLI11.hpp"
#include "costeer/cost.hpp"
#include "costeer/crosstok.hpp"
#include "costeer/fixtures.hpp"
#include "costeer/generation.hpp"
#include "costeer/steering.hpp"
#include "costeer/synthmodels.hpp"
#include "costeer/verify.hpp"
#include "costeer/wire.hpp"

namespace fs = std::filesystem;
using namespace costeer;

#ifndef COSTEER_FIXTURES_DIR
#define COSTEER_FIXTURES_DIR "fixtures"
#endif

namespace {

struct RunConfig {
  // steer
  double alpha = 2.0, beta = 1.0, lambda = 2.0, eta = 10.0;
  int iterations = 20;
  // ada
  bool ada_enabled = false;
  double tau = 0.9;
  int k = 5;
  // gen
  int max_tokens = 512;
  double la_scale = 2.0;
  TokenId eos_id = -1;  // -1: vocabulary default
  // wire
  std::string host = "127.0.0.1";
  std::uint16_t port = 47311;
  // models
  std::string kind = "ngram";  // table | ngram
  std::string llm_spec;
  std::string slm_spec;
  // io
  std::string query_file;
  std::string context_file;
  std::string out_dir = "out";
  std::string fixtures = COSTEER_FIXTURES_DIR;

  GenConfig gen_config(Mode mode) const {
    GenConfig cfg;
    cfg.max_tokens = max_tokens;
    cfg.steer = SteerParams{alpha, beta, lambda, eta, iterations};
    cfg.mode = mode;
    cfg.la_scale = la_scale;
    cfg.eos_override = eos_id;
    if (ada_enabled || mode == Mode::kAda) cfg.ada = AdaParams{tau, k};
    return cfg;
  }
};

// Sectioned key=value config: `[steer]` / `[ada]` / `[gen]` / `[wire]` /
// `[models]` / `[io]` headers, `#` comments, whitespace-insensitive. Flags
// given on the command line override file values.
void load_config_file(const std::string& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) fail(Err::kInvalidArgument, "cannot open config " + path);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(Err::kMalformed, path + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string qualified = section.empty() ? key : section + "." + key;

    auto as_bool = [&] { return value == "true" || value == "1" || value == "yes"; };
    if (qualified == "steer.alpha") cfg.alpha = std::stod(value);
    else if (qualified == "steer.beta") cfg.beta = std::stod(value);
    else if (qualified == "steer.lambda") cfg.lambda = std::stod(value);
    else if (qualified == "steer.eta") cfg.eta = std::stod(value);
    else if (qualified == "steer.T") cfg.iterations = std::stoi(value);
    else if (qualified == "ada.enabled") cfg.ada_enabled = as_bool();
    else if (qualified == "ada.tau") cfg.tau = std::stod(value);
    else if (qualified == "ada.k") cfg.k = std::stoi(value);
    else if (qualified == "gen.max_tokens") cfg.max_tokens = std::stoi(value);
    else if (qualified == "gen.eos_id") cfg.eos_id = std::stoi(value);
    else if (qualified == "gen.la_scale") cfg.la_scale = std::stod(value);
    else if (qualified == "wire.host") cfg.host = value;
    else if (qualified == "wire.port") cfg.port = static_cast<std::uint16_t>(std::stoi(value));
    else if (qualified == "models.kind") cfg.kind = value;
    else if (qualified == "models.llm_spec") cfg.llm_spec = value;
    else if (qualified == "models.slm_spec") cfg.slm_spec = value;
    else if (qualified == "io.query_file") cfg.query_file = value;
    else if (qualified == "io.context_file") cfg.context_file = value;
    else if (qualified == "io.transcript_out") cfg.out_dir = value;
    else
      fail(Err::kMalformed, path + ": unknown key " + qualified);
  }
}

void add_common_options(CLI::App* cmd, RunConfig& cfg, std::string& config_path) {
  cmd->add_option("--config", config_path,
                  "sectioned key=value config file; flags override file values");
  cmd->add_option("--alpha", cfg.alpha, "LLM contrast weight")->group("steer");
  cmd->add_option("--beta", cfg.beta, "SLM delta weight")->group("steer");
  cmd->add_option("--lambda", cfg.lambda, "KL-to-initial weight")->group("steer");
  cmd->add_option("--eta", cfg.eta, "proximal learning rate")->group("steer");
  cmd->add_option("--iterations,-T", cfg.iterations, "FTRL iterations T")->group("steer");
  cmd->add_flag("--ada", cfg.ada_enabled, "enable confidence gating")->group("ada");
  cmd->add_option("--tau", cfg.tau, "confidence threshold")->group("ada");
  cmd->add_option("--k", cfg.k, "consecutive steps before deactivation")->group("ada");
  cmd->add_option("--max-tokens,-M", cfg.max_tokens, "generation budget")->group("gen");
  cmd->add_option("--la-scale", cfg.la_scale, "scale for the la_baseline mode")->group("gen");
  cmd->add_option("--eos-id", cfg.eos_id, "override the vocabulary EOS id")->group("gen");
  cmd->add_option("--host", cfg.host, "server host")->group("wire")->envname("COSTEER_HOST");
  cmd->add_option("--port", cfg.port, "server port")->group("wire")->envname("COSTEER_PORT");
  cmd->add_option("--kind", cfg.kind, "model kind: table | ngram")->group("models");
  cmd->add_option("--llm", cfg.llm_spec, "LLM spec (table json / generic corpus)")->group("models");
  cmd->add_option("--slm", cfg.slm_spec, "SLM spec (table json / user corpus)")->group("models");
  cmd->add_option("--query", cfg.query_file, "base query text file")->group("io");
  cmd->add_option("--context", cfg.context_file, "personal context text file")->group("io");
  cmd->add_option("--out", cfg.out_dir, "output directory")->group("io");
  cmd->add_option("--fixtures", cfg.fixtures, "fixtures directory")
      ->envname("COSTEER_FIXTURES");
}

struct LoadedModels {
  std::unique_ptr<PolicyProvider> llm;
  std::unique_ptr<PolicyProvider> slm;
  Vocabulary vocab;
  TokenId marker = -1;
};

LoadedModels load_models(const RunConfig& cfg) {
  LoadedModels m;
  if (cfg.kind == "table") {
    if (cfg.llm_spec.empty() || cfg.slm_spec.empty())
      fail(Err::kInvalidArgument, "--llm/--slm table json paths required for kind=table");
    TableModel lt = TableModel::load_json(cfg.llm_spec);
    TableModel st = TableModel::load_json(cfg.slm_spec);
    m.vocab = lt.vocabulary;
    for (std::size_t i = 0; i < m.vocab.size(); ++i)
      if (m.vocab.token_bytes[i] == "#") m.marker = static_cast<TokenId>(i);
    m.llm = std::make_unique<TableProvider>(std::move(lt), -1);
    m.slm = std::make_unique<TableProvider>(std::move(st), m.marker);
  } else if (cfg.kind == "ngram") {
    const fs::path generic = cfg.llm_spec.empty()
                                 ? fs::path(cfg.fixtures) / "generic_corpus.txt"
                                 : fs::path(cfg.llm_spec);
    const fs::path user =
        cfg.slm_spec.empty() ? fs::path(cfg.fixtures) / "user_corpus.txt" : fs::path(cfg.slm_spec);
    auto fx = fixtures::load_ngram_fixture(generic, user);
    m.vocab = fx.vocab;
    m.marker = fixtures::kLettersMarker;
    m.llm = std::move(fx.llm);
    m.slm = std::move(fx.slm);
  } else {
    fail(Err::kInvalidArgument, "unknown model kind " + cfg.kind);
  }
  return m;
}

std::vector<TokenId> tokenize_file_or(const std::string& path, const Vocabulary& vocab,
                                      const std::vector<TokenId>& fallback) {
  if (path.empty()) return fallback;
  std::string text = read_text_file(path);
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  if (text.empty()) return {};
  return ToyTokenizer(vocab).encode(text);
}

PromptPair load_prompt(const RunConfig& cfg, const LoadedModels& m) {
  PromptPair p;
  p.base_query = tokenize_file_or(cfg.query_file, m.vocab, {0, 1});
  p.personal_context = tokenize_file_or(cfg.context_file, m.vocab, {});
  // The personal pair switches on the marker token; prepend it when a real
  // context is given without one.
  if (!p.personal_context.empty() && m.marker >= 0 &&
      std::find(p.personal_context.begin(), p.personal_context.end(), m.marker) ==
          p.personal_context.end())
    p.personal_context.insert(p.personal_context.begin(), m.marker);
  return p;
}

std::string decode_tokens(const Vocabulary& vocab, std::span<const TokenId> ids) {
  std::string out;
  for (TokenId id : ids)
    if (id >= 0 && static_cast<std::size_t>(id) < vocab.size()) out += vocab.token_bytes[id];
  return out;
}

int cmd_generate(const RunConfig& cfg, const std::vector<std::string>& mode_names) {
  const LoadedModels m = load_models(cfg);
  const PromptPair prompt = load_prompt(cfg, m);
  fs::create_directories(cfg.out_dir);

  std::vector<Mode> modes;
  for (const std::string& name : mode_names) {
    if (name == "all") {
      modes = {Mode::kCosteer, Mode::kLight, Mode::kAda,        Mode::kLlmOnly,
               Mode::kSlmOnly, Mode::kLaBaseline, Mode::kProxyBaseline};
      break;
    }
    const auto mode = mode_from_name(name);
    if (!mode) {
      std::cerr << "unknown mode: " << name << "\n";
      return 2;
    }
    modes.push_back(*mode);
  }

  std::cout << std::left << std::setw(16) << "mode" << std::setw(9) << "tokens" << std::setw(14)
            << "mean_kl_pers" << std::setw(14) << "pers_ppl"
            << "text\n";
  for (Mode mode : modes) {
    const GenConfig gen = cfg.gen_config(mode);
    auto [tokens, sess] = generate_steered(*m.llm, *m.slm, prompt, gen);

    const fs::path jsonl = fs::path(cfg.out_dir) / (std::string(mode_name(mode)) + ".jsonl");
    std::ofstream out(jsonl);
    write_transcript_jsonl(out, sess);
    const fs::path txt = fs::path(cfg.out_dir) / (std::string(mode_name(mode)) + ".txt");
    std::ofstream(txt) << decode_tokens(m.vocab, tokens) << "\n";

    double kl = 0.0;
    int counted = 0;
    for (const StepRecord& r : sess.transcript) {
      if (!std::isnan(r.kl_to_pers)) {
        kl += r.kl_to_pers;
        ++counted;
      }
    }
    const double ppl = tokens.empty() ? 0.0 : perplexity_under(*m.slm, tokens, prompt);
    std::cout << std::left << std::setw(16) << mode_name(mode) << std::setw(9) << tokens.size()
              << std::setw(14) << (counted ? kl / counted : 0.0) << std::setw(14) << ppl
              << decode_tokens(m.vocab, tokens).substr(0, 32) << "\n";
  }
  return 0;
}

int cmd_serve(const RunConfig& cfg) {
  const LoadedModels m = load_models(cfg);
  WireServer server(*m.llm, ServeOptions{cfg.host, cfg.port, cfg.max_tokens, cfg.eos_id});
  server.start();
  std::cout << "serving " << cfg.kind << " llm on " << cfg.host << ":" << server.bound_port()
            << " (vocab " << m.vocab.size() << ", M=" << cfg.max_tokens << ")\n";
  std::cout << "press ctrl-c to stop\n";
  static std::atomic<bool> stop_flag{false};
  std::signal(SIGINT, [](int) { stop_flag.store(true); });
  std::signal(SIGTERM, [](int) { stop_flag.store(true); });
  while (!stop_flag.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  return 0;
}

int cmd_edge(const RunConfig& cfg, const std::string& mode_name_in,
             const std::string& scan_sentinel) {
  const LoadedModels m = load_models(cfg);
  const PromptPair prompt = load_prompt(cfg, m);
  const auto mode = mode_from_name(mode_name_in);
  if (!mode) {
    std::cerr << "unknown mode: " << mode_name_in << "\n";
    return 2;
  }
  const GenConfig gen = cfg.gen_config(*mode);
  const EdgeResult res = edge_run(*m.slm, prompt, gen, cfg.host, cfg.port);

  fs::create_directories(cfg.out_dir);
  res.transcript.write_capture((fs::path(cfg.out_dir) / "wire_capture.bin").string());
  {
    std::ofstream out(fs::path(cfg.out_dir) / "wire_frames.jsonl");
    res.transcript.write_jsonl(out);
  }
  {
    std::ofstream out(fs::path(cfg.out_dir) / "edge_transcript.jsonl");
    write_transcript_jsonl(out, res.session);
  }
  std::cout << "tokens: " << res.tokens.size() << "  text: " << decode_tokens(m.vocab, res.tokens)
            << "\n";
  const LatencyBreakdown lat = latency_report(res.transcript, res.session);
  std::cout << lat.to_json() << "\n";

  if (!scan_sentinel.empty()) {
    const std::size_t hits = res.transcript.scan(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(scan_sentinel.data()), scan_sentinel.size()));
    std::cout << "sentinel scan: " << hits << " matches\n";
    if (hits != 0) return 3;
  }
  return 0;
}

int cmd_verify(const RunConfig& cfg) {
  const auto results = verify::run_verify_suites(cfg.fixtures);
  bool all = true;
  double total = 0.0;
  std::cout << std::left << std::setw(34) << "suite" << std::setw(8) << "result" << std::setw(9)
            << "seconds"
            << "detail\n";
  for (const auto& r : results) {
    all = all && r.pass;
    total += r.seconds;
    std::cout << std::left << std::setw(34) << r.name << std::setw(8)
              << (r.pass ? "PASS" : "FAIL") << std::setw(9) << std::fixed
              << std::setprecision(2) << r.seconds << r.detail << "\n";
  }
  std::cout << (all ? "all suites passed" : "FAILURES PRESENT") << " in " << std::fixed
            << std::setprecision(1) << total << "s\n";
  return all ? 0 : 1;
}

int cmd_bench_cost(double llm_p, double llm_layers, double llm_d, double slm_p, double slm_layers,
                   double slm_d, double C, double q, double g, bool table) {
  const ModelProfile llm{llm_p, llm_layers, llm_d, "llm"};
  const ModelProfile slm{slm_p, slm_layers, slm_d, "slm"};
  if (table) {
    std::cout << std::left << std::setw(10) << "C" << std::setw(16) << "llm_w/o(TF)"
              << std::setw(16) << "llm_w/(TF)" << std::setw(16) << "costeer(TF)"
              << "ratio\n";
    for (double c : {10.0, 100.0, 1000.0}) {
      const CostReport r = flops_estimate(llm, slm, c, q, g);
      std::cout << std::left << std::setw(10) << c << std::setw(16) << r.llm_without / 1e12
                << std::setw(16) << r.llm_with / 1e12 << std::setw(16) << r.costeer / 1e12
                << r.ratio_with_over_costeer() << "\n";
    }
    return 0;
  }
  std::cout << flops_estimate(llm, slm, C, q, g).to_json() << "\n";
  return 0;
}

int cmd_demo_bytefuse(const RunConfig& cfg) {
  // Two deliberately different toy tokenizers over the same alphabet.
  Vocabulary va;
  va.token_bytes = {"a", "b", "c", "ab", "bc", "\n"};
  va.eos_id = 5;
  Vocabulary vb;
  vb.token_bytes = {"a", "b", "c", "ca", "abc", "ab", "\n"};
  vb.eos_id = 6;

  TableModel ma;
  ma.vocabulary = va;
  ma.default_probs = {0.30, 0.15, 0.10, 0.25, 0.15, 0.05};
  TableModel mb;
  mb.vocabulary = vb;
  mb.default_probs = {0.10, 0.10, 0.05, 0.05, 0.30, 0.35, 0.05};
  TableRule ctx;
  ctx.with_context = true;
  ctx.prefix = {};
  ctx.probs = {0.05, 0.05, 0.30, 0.25, 0.15, 0.15, 0.05};
  mb.rules.push_back(ctx);

  TableProvider llm(ma, -1);
  TableProvider slm(mb, 0);  // token "a" doubles as the demo marker
  PromptPair llm_prompt{{0}, {}};
  PromptPair slm_prompt{{1}, {0}};
  GenConfig gen = cfg.gen_config(Mode::kCosteer);
  gen.max_tokens = std::min(gen.max_tokens, 8);

  const ByteFusedResult res = generate_byte_fused(llm, llm_prompt, slm, slm_prompt, gen);
  std::cout << "byte-fused decoding trace:\n";
  for (const ByteStepTrace& t : res.trace) {
    std::cout << "  prefix='" << escape_token_bytes(t.prefix) << "' -> ";
    if (t.fused_index == kCommitDim) {
      std::cout << "COMMIT llm_id=" << t.llm_committed << " slm_id=" << t.slm_committed << "\n";
    } else {
      std::cout << "byte '" << escape_token_bytes(std::string(1, static_cast<char>(t.fused_index)))
                << "'\n";
    }
  }
  ToyTokenizer ta(va), tb(vb);
  std::cout << "llm tokens: " << res.llm_tokens.size()
            << " decode='" << escape_token_bytes(ta.decode(res.llm_tokens)) << "'\n";
  std::cout << "slm tokens: " << res.slm_tokens.size()
            << " decode='" << escape_token_bytes(tb.decode(res.slm_tokens)) << "'\n";
  std::cout << "fused bytes: '" << escape_token_bytes(res.bytes) << "'\n";
  return 0;
}

int cmd_sweep(const RunConfig& cfg, const std::string& sweep_spec, int n_seeds,
              const std::string& out_csv) {
  const auto eq = sweep_spec.find('=');
  if (eq == std::string::npos) {
    std::cerr << "--sweep expects name=v1,v2,... (e.g. T=1,5,10,20,50,100)\n";
    return 2;
  }
  const std::string param = sweep_spec.substr(0, eq);
  std::vector<double> values;
  std::stringstream ss(sweep_spec.substr(eq + 1));
  for (std::string item; std::getline(ss, item, ',');) values.push_back(std::stod(item));
  if (values.empty()) {
    std::cerr << "no sweep values\n";
    return 2;
  }

  const LoadedModels m = load_models(cfg);
  std::ostringstream csv;
  csv << "param,value,mean_kl_steered,mean_kl_base,pers_ppl_steered,pers_ppl_llm_only\n";
  for (double v : values) {
    RunConfig swept = cfg;
    if (param == "T")
      swept.iterations = static_cast<int>(v);
    else if (param == "alpha")
      swept.alpha = v;
    else if (param == "beta")
      swept.beta = v;
    else if (param == "lambda")
      swept.lambda = v;
    else if (param == "eta")
      swept.eta = v;
    else {
      std::cerr << "unknown sweep parameter " << param << "\n";
      return 2;
    }
    double kl_s = 0, kl_b = 0, ppl_s = 0, ppl_l = 0;
    int counted = 0;
    for (int seed = 0; seed < n_seeds; ++seed) {
      const PromptPair prompt = fixtures::seeded_prompt(static_cast<std::uint64_t>(seed));
      GenConfig gen = swept.gen_config(Mode::kCosteer);
      gen.max_tokens = std::min(gen.max_tokens, 24);
      auto [tokens, sess] = generate_steered(*m.llm, *m.slm, prompt, gen);
      gen = swept.gen_config(Mode::kLlmOnly);
      gen.max_tokens = std::min(gen.max_tokens, 24);
      auto [llm_tokens, sess2] = generate_steered(*m.llm, *m.slm, prompt, gen);
      for (const StepRecord& r : sess.transcript) {
        if (!std::isnan(r.kl_to_pers)) {
          kl_s += r.kl_to_pers;
          kl_b += r.kl_base_to_pers;
          ++counted;
        }
      }
      if (!tokens.empty()) ppl_s += perplexity_under(*m.slm, tokens, prompt);
      if (!llm_tokens.empty()) ppl_l += perplexity_under(*m.slm, llm_tokens, prompt);
    }
    csv << param << "," << v << "," << (counted ? kl_s / counted : 0.0) << ","
        << (counted ? kl_b / counted : 0.0) << "," << ppl_s / n_seeds << "," << ppl_l / n_seeds
        << "\n";
  }
  if (out_csv.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream(out_csv) << csv.str();
    std::cout << "wrote " << out_csv << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"costeer: decoding-time personalization via local delta steering"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_path;

  // File values load first so explicit flags can override them.
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) config_path = argv[i + 1];
    if (a.rfind("--config=", 0) == 0) config_path = a.substr(9);
  }
  if (!config_path.empty()) {
    try {
      load_config_file(config_path, cfg);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }

  auto* generate = app.add_subcommand("generate", "in-process decoding across modes");
  std::vector<std::string> modes{"costeer", "llm_only"};
  generate->add_option("--mode,--modes", modes, "modes to run (or 'all')");
  add_common_options(generate, cfg, config_path);

  auto* serve = app.add_subcommand("serve", "run the cloud-side logits server");
  add_common_options(serve, cfg, config_path);

  auto* edge = app.add_subcommand("edge", "run the edge client against a server");
  std::string edge_mode = "costeer";
  std::string scan_sentinel;
  edge->add_option("--mode", edge_mode, "costeer | light | ada | llm_only");
  edge->add_option("--scan-sentinel", scan_sentinel, "bytes to scan the capture for");
  add_common_options(edge, cfg, config_path);

  auto* verify_cmd = app.add_subcommand("verify", "run the full property suites");
  add_common_options(verify_cmd, cfg, config_path);

  auto* bench = app.add_subcommand("bench-cost", "analytical FLOPs comparison");
  double llm_p = 7e9, llm_layers = 28, llm_d = 3584;
  double slm_p = 1.5e9, slm_layers = 28, slm_d = 1536;
  double bc_context = 1000, bc_query = 50, bc_gen = 60;
  bool bc_table = false;
  bench->add_option("--llm-params", llm_p);
  bench->add_option("--llm-layers", llm_layers);
  bench->add_option("--llm-dmodel", llm_d);
  bench->add_option("--slm-params", slm_p);
  bench->add_option("--slm-layers", slm_layers);
  bench->add_option("--slm-dmodel", slm_d);
  bench->add_option("--context,-C", bc_context, "context length");
  bench->add_option("--query,-q", bc_query, "query length");
  bench->add_option("--gen,-g", bc_gen, "generation length");
  bench->add_flag("--table", bc_table, "print the C in {10,100,1000} table");

  auto* demo = app.add_subcommand("demo-bytefuse", "byte-level fusion across two tokenizers");
  add_common_options(demo, cfg, config_path);

  auto* sweep = app.add_subcommand("sweep", "hyperparameter sweep to CSV");
  std::string sweep_spec = "T=1,5,10,20,50,100";
  int sweep_seeds = 20;
  std::string sweep_out;
  sweep->add_option("--sweep", sweep_spec, "name=v1,v2,... over T/alpha/beta/lambda/eta");
  sweep->add_option("--seeds", sweep_seeds, "sessions per value");
  sweep->add_option("--csv", sweep_out, "output CSV path (default stdout)");
  add_common_options(sweep, cfg, config_path);

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) return cmd_generate(cfg, modes);
    if (serve->parsed()) return cmd_serve(cfg);
    if (edge->parsed()) return cmd_edge(cfg, edge_mode, scan_sentinel);
    if (verify_cmd->parsed()) return cmd_verify(cfg);
    if (bench->parsed())
      return cmd_bench_cost(llm_p, llm_layers, llm_d, slm_p, slm_layers, slm_d, bc_context,
                            bc_query, bc_gen, bc_table);
    if (demo->parsed()) return cmd_demo_bytefuse(cfg);
    if (sweep->parsed()) return cmd_sweep(cfg, sweep_spec, sweep_seeds, sweep_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
