#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "superpose/superpose.hpp"

using namespace superpose;

namespace {

enum Exit { kPass = 0, kFail = 1, kConstructionFailed = 2 };

struct Config {
  double alpha = 2.0;
  double beta = 1.0;
  double gamma = 8.0;
  double zeta = 0.0;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::size_t max_restarts = 10;
  std::size_t vmax = 0;
  bool checked = true;
  bool exhaustive = false;
  std::size_t budget = 10000;
  std::size_t threads = 1;
  std::string out;
  std::string report;
  std::string strategy = "auto";
  double copy_c = 8.0;
};

void add_params(CLI::App* cmd, Config& cfg) {
  cmd->add_option("--alpha", cfg.alpha, "neuron constant");
  cmd->add_option("--beta", cfg.beta, "density constant");
  cmd->add_option("--gamma", cfg.gamma, "super-heavy density constant");
  cmd->add_option("--zeta", cfg.zeta, "cutoff magnitude (0 = twice the hidden width)");
  cmd->add_option("--max-restarts", cfg.max_restarts, "construction attempts per stage");
  cmd->add_option("--vmax", cfg.vmax, "override the circuit's vmax");
  cmd->add_option("--strategy", cfg.strategy, "auto | partition | high-influence");
  cmd->add_option("--copies", cfg.copy_c, "copy scheme constant");
}

void add_seed(CLI::App* cmd, Config& cfg) {
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&cfg](std::uint64_t s) { cfg.seed = s, cfg.seed_given = true; }, "PRNG seed (else SUPERPOSE_SEED)");
}

void add_verify(CLI::App* cmd, Config& cfg) {
  cmd->add_flag("--checked,!--unchecked", cfg.checked, "treat values in [1/4, 3/4] as failures");
  cmd->add_flag("--exhaustive", cfg.exhaustive, "check every input with at most vmax actives");
  cmd->add_option("--budget", cfg.budget, "sampled pairs / subsets");
  cmd->add_option("--threads", cfg.threads, "worker threads");
}

std::uint64_t resolve_seed(const Config& cfg) {
  if (cfg.seed_given) return cfg.seed;
  if (const char* env = std::getenv("SUPERPOSE_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw Error(ErrorKind::InvalidParams, std::string("SUPERPOSE_SEED is not an integer: ") + env);
    }
  }
  return 0;
}

Strategy parse_strategy(const std::string& s) {
  if (s == "auto") return Strategy::Auto;
  if (s == "partition") return Strategy::Partition;
  if (s == "high-influence") return Strategy::HighInfluenceOnly;
  throw Error(ErrorKind::InvalidParams, "unknown strategy '" + s + "'");
}

VerifyOptions verify_options(const Config& cfg, std::uint64_t seed) {
  VerifyOptions v;
  v.mode = cfg.exhaustive ? VerifyMode::Exhaustive : VerifyMode::Sampled;
  v.budget = cfg.budget;
  v.seed = seed;
  v.threads = cfg.threads;
  v.checked = cfg.checked;
  return v;
}

CompileOptions compile_options(const Config& cfg) {
  CompileOptions opt;
  const auto seed = resolve_seed(cfg);
  opt.params.alpha = cfg.alpha;
  opt.params.beta = cfg.beta;
  opt.params.gamma = cfg.gamma;
  opt.params.zeta = cfg.zeta;
  opt.params.seed = seed;
  opt.params.validate();
  opt.strategy = parse_strategy(cfg.strategy);
  opt.max_restarts = cfg.max_restarts;
  opt.copy_c = cfg.copy_c;
  if (cfg.vmax) opt.v_max = cfg.vmax;
  opt.verify = verify_options(cfg, seed);
  return opt;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::IoError, "cannot write " + path);
  f << text;
  if (!f) throw Error(ErrorKind::IoError, "write failed for " + path);
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_text(path, text);
  }
}

std::vector<FeatureCircuit> read_circuits(const std::string& path) { return parse_chain(read_file(path)); }

int cmd_compile(const std::string& circuit_path, const Config& cfg) {
  const auto chain = read_circuits(circuit_path);
  auto opt = compile_options(cfg);
  const auto result = try_construct(chain, opt);
  const std::string net_path = cfg.out.empty() ? "network.spn" : cfg.out;
  const std::string report_path = cfg.report.empty() ? net_path + ".report.json" : cfg.report;
  write_text(report_path, to_json(result).dump(2) + "\n");
  if (!result.ok) {
    std::cerr << "construction failed: " << result.error << "\n";
    return kConstructionFailed;
  }
  save(result.network, net_path);
  std::cout << "wrote " << net_path << " (" << result.network.layers.size() << " layers, " << result.attempts()
            << " attempts)\n";
  return kPass;
}

std::vector<std::size_t> parse_line(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::size_t> out;
  std::string tok;
  while (in >> tok) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(tok, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != tok.size() || tok.front() == '-') throw Error(ErrorKind::SyntaxError, "bad index '" + tok + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

int cmd_run(const std::string& net_path) {
  const auto net = load(net_path);
  const ForwardEngine engine(net);
  std::string line;
  bool any_error = false;
  while (std::getline(std::cin, line)) {
    try {
      const auto active = parse_line(line);
      for (const auto j : active) {
        if (j >= net.m) throw Error(ErrorKind::IndexOutOfRange, "input " + std::to_string(j) + " out of range");
      }
      const auto r = engine.run(active);
      std::string out;
      for (std::size_t i = 0; i < r.ones.size(); ++i) out += (i ? " " : "") + std::to_string(r.ones[i]);
      if (!r.ambiguous.empty()) {
        out += out.empty() ? "?" : " ?";
        for (const auto a : r.ambiguous) out += " " + std::to_string(a);
      }
      std::cout << out << "\n";
    } catch (const Error& e) {
      std::cout << "error: " << e.what() << "\n";
      any_error = true;
    }
  }
  return any_error ? kFail : kPass;
}

int cmd_verify(const std::string& net_path, const Config& cfg) {
  const auto net = load(net_path);
  const auto report = verify_network(net, verify_options(cfg, resolve_seed(cfg)));
  emit(cfg.out, to_json(report).dump(2) + "\n");
  std::cerr << (report.pass ? "pass" : "fail") << ": " << report.inputs_checked << " inputs, " << report.failure_count
            << " failures\n";
  return report.pass ? kPass : kFail;
}

int cmd_profile(const std::string& net_path, const Config& cfg) {
  const auto net = load(net_path);
  const auto opt = verify_options(cfg, resolve_seed(cfg));
  const auto inputs = enumerate_inputs(net.circuits.front(), net.v_max, opt);
  const auto report = profile_noise(net, inputs, cfg.threads);
  emit(cfg.out, to_json(report).dump(2) + "\n");
  return report.within_margins() ? kPass : kFail;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

CircuitGenerator generator_for(const std::string& cls) {
  if (cls == "single-use") return [](std::size_t mp, std::uint64_t s) { return generate_single_use(mp, s); };
  if (cls == "high-influence") return [](std::size_t mp, std::uint64_t s) { return generate_high_influence(mp, 0, s); };
  if (cls == "mixed") return [](std::size_t mp, std::uint64_t s) { return generate_mixed(mp, s); };
  throw Error(ErrorKind::InvalidParams, "unknown circuit class '" + cls + "'");
}

int cmd_sweep(const std::string& cls, const std::string& mprimes, const std::string& alphas, std::size_t seeds,
              const Config& cfg) {
  std::vector<std::size_t> mp;
  for (const auto& t : split_csv(mprimes)) mp.push_back(std::stoul(t));
  std::vector<double> al;
  for (const auto& t : split_csv(alphas)) al.push_back(std::stod(t));
  const auto rows = sweep(generator_for(cls), mp, al, seeds, compile_options(cfg));
  std::ostringstream csv;
  write_sweep_csv(csv, rows);
  emit(cfg.out, csv.str());
  return kPass;
}

int cmd_generate(const std::string& cls, std::size_t mprime, std::size_t m, std::size_t k, std::size_t depth,
                 const Config& cfg) {
  const auto seed = resolve_seed(cfg);
  std::string text;
  if (cls == "single-use") {
    text = to_text(generate_single_use(mprime, seed));
  } else if (cls == "high-influence") {
    text = to_text(generate_high_influence(mprime, m, seed));
  } else if (cls == "mixed") {
    text = to_text(generate_mixed(mprime, seed));
  } else if (cls == "k-and") {
    text = to_text(generate_k_and(m, mprime, k, cfg.vmax ? cfg.vmax : k, seed));
  } else if (cls == "chain") {
    text = to_text(generate_chain(m, depth, seed));
  } else {
    throw Error(ErrorKind::InvalidParams, "unknown circuit class '" + cls + "'");
  }
  emit(cfg.out, text);
  return kPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compile feature circuits into superposed ReLU networks and check them"};
  app.require_subcommand(1);
  Config cfg;
  std::string path;

  auto* compile = app.add_subcommand("compile", "build and verify a network from a circuit file");
  compile->add_option("circuit", path, "circuit file (chains separated by ---)")->required();
  add_params(compile, cfg);
  add_seed(compile, cfg);
  add_verify(compile, cfg);
  compile->add_option("--out", cfg.out, "network file");
  compile->add_option("--report", cfg.report, "report file (default <out>.report.json)");

  auto* run = app.add_subcommand("run", "decode outputs for active sets read from stdin");
  run->add_option("network", path)->required();

  auto* verify = app.add_subcommand("verify", "re-verify a network against its embedded circuits");
  verify->add_option("network", path)->required();
  add_seed(verify, cfg);
  add_verify(verify, cfg);
  verify->add_option("--out", cfg.out, "report file (default stdout)");

  auto* profile = app.add_subcommand("profile", "noise margins at both ReLU boundaries");
  profile->add_option("network", path)->required();
  add_seed(profile, cfg);
  add_verify(profile, cfg);
  profile->add_option("--out", cfg.out, "report file (default stdout)");

  std::string cls = "single-use";
  std::string mprimes = "256,1024";
  std::string alphas = "0.5,1,2,4";
  std::size_t seeds = 5;
  auto* sw = app.add_subcommand("sweep", "pass rate and margins over a grid of m' and alpha");
  sw->add_option("--class", cls, "single-use | high-influence | mixed");
  sw->add_option("--mprimes", mprimes, "comma-separated m' values");
  sw->add_option("--alphas", alphas, "comma-separated alpha values");
  sw->add_option("--seeds", seeds, "seeds per cell");
  add_params(sw, cfg);
  add_seed(sw, cfg);
  add_verify(sw, cfg);
  sw->add_option("--out", cfg.out, "CSV file (default stdout)");

  std::size_t mprime = 16;
  std::size_t m = 0;
  std::size_t k = 2;
  std::size_t depth = 3;
  auto* gen = app.add_subcommand("generate", "write a random circuit of a given class");
  gen->add_option("class", cls, "single-use | high-influence | mixed | k-and | chain")->required();
  gen->add_option("--mprime", mprime, "number of outputs");
  gen->add_option("--m", m, "number of inputs (high-influence: 0 = largest feasible)");
  gen->add_option("--k", k, "AND arity (k-and)");
  gen->add_option("--depth", depth, "layers (chain)");
  gen->add_option("--vmax", cfg.vmax, "vmax written into the circuit (k-and)");
  add_seed(gen, cfg);
  gen->add_option("--out", cfg.out, "circuit file (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*compile) return cmd_compile(path, cfg);
    if (*run) return cmd_run(path);
    if (*verify) return cmd_verify(path, cfg);
    if (*profile) return cmd_profile(path, cfg);
    if (*sw) return cmd_sweep(cls, mprimes, alphas, seeds, cfg);
    if (*gen) return cmd_generate(cls, mprime, m, k, depth, cfg);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::ConstructionFailed ? kConstructionFailed : kFail;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFail;
  }
  return kFail;
}
