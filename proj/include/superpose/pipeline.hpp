#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "superpose/circuit.hpp"
#include "superpose/codec.hpp"
#include "superpose/compiler.hpp"
#include "superpose/error.hpp"
#include "superpose/extensions.hpp"
#include "superpose/rng.hpp"
#include "superpose/runtime.hpp"
#include "superpose/verify.hpp"

namespace superpose {

struct CompileOptions {
  CodecParams params;  // alpha, beta, gamma, zeta, epsilon and seed are read; n and p are filled in
  Strategy strategy = Strategy::Auto;
  std::size_t max_restarts = 10;
  double copy_c = 8.0;
  std::optional<std::size_t> v_max;  // overrides the first circuit's vmax
  VerifyOptions verify;
  bool final_report = true;  // re-verify the finished network and attach the report
  // Keep the last attempt of a stage that never passed and carry on, so a
  // failed build still yields a network to profile. The result stays !ok.
  bool keep_failed = false;
};

struct AttemptRecord {
  std::size_t stage = 0;
  std::size_t attempt = 0;
  bool pass = false;
  std::string outcome;
};

/// Layers built and verified together; restarts resample all of them.
struct StagePlan {
  std::vector<LayerPlan> layers;
};

struct NetworkPlan {
  std::vector<FeatureCircuit> circuits;
  std::size_t m = 0;
  std::size_t m_out = 0;
  std::size_t v_max = 2;
  std::vector<StagePlan> stages;
  std::vector<std::optional<CopyScheme>> schemes;  // per circuit

  std::size_t layer_count() const {
    std::size_t n = 0;
    for (const auto& s : stages) n += s.layers.size();
    return n;
  }
};

struct BuildResult {
  bool ok = false;
  Network network;
  VerificationReport report;
  std::vector<AttemptRecord> transcript;
  std::string error;           // set when !ok
  ActiveSet last_failing_input;

  std::size_t attempts() const { return transcript.size(); }
};

/// Turns a chain of circuits into stages. A circuit with vmax <= 2 gives one
/// stage per tree level; a circuit with vmax > 2 gives a single stage holding
/// its copies, tree levels and combine layer.
inline NetworkPlan plan_network(const std::vector<FeatureCircuit>& chain, const CompileOptions& opt) {
  if (chain.empty()) throw Error(ErrorKind::InvalidParams, "empty circuit chain");
  opt.params.validate();
  NetworkPlan plan;
  plan.circuits = chain;
  if (opt.v_max) plan.circuits.front().v_max = *opt.v_max;
  plan.m = plan.circuits.front().m;
  plan.m_out = plan.circuits.back().m_prime();
  plan.v_max = plan.circuits.front().v_max;
  for (std::size_t ci = 0; ci < plan.circuits.size(); ++ci) {
    const auto& c = plan.circuits[ci];
    c.validate();
    if (ci > 0 && c.m != plan.circuits[ci - 1].m_prime()) {
      throw Error(ErrorKind::DimensionMismatch, "circuit " + std::to_string(ci) + " does not read the previous outputs");
    }
    const auto tree = lower_k_and(c);
    std::optional<CopyScheme> scheme;
    if (c.v_max > 2) {
      std::string last;
      for (std::size_t a = 0; a < std::max<std::size_t>(1, opt.max_restarts) && !scheme; ++a) {
        try {
          scheme = plan_copies(c, c.v_max, opt.copy_c,
                               Rng::derive(opt.params.seed, "circuit" + std::to_string(ci) + "/copies" + std::to_string(a)).next());
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::CoverageFailure) throw;
          last = e.what();
        }
      }
      if (!scheme) throw Error(ErrorKind::ConstructionFailed, "no copy scheme covers every output: " + last);
    }
    auto layers = plan_tree_layers(tree, scheme ? &*scheme : nullptr, opt.params, opt.strategy);
    if (scheme) {
      plan.stages.push_back({std::move(layers)});
    } else {
      for (auto& l : layers) plan.stages.push_back({{std::move(l)}});
    }
    plan.schemes.push_back(std::move(scheme));
  }
  return plan;
}

namespace detail {

inline std::string describe(const ActiveSet& s) {
  std::string out = "{";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "}";
}

inline bool retryable(ErrorKind k) {
  return k == ErrorKind::EmptyColumn || k == ErrorKind::EmptyOverlap;
}

// Ideal OR of the encoding columns of `features`.
inline std::vector<double> ideal_state(const SparseMatrix& enc_t, std::size_t rows, const std::vector<std::size_t>& features) {
  std::vector<double> x(rows, 0.0);
  for (const auto f : features) {
    for (const auto r : enc_t.row_cols(f)) x[r] = 1.0;
  }
  return x;
}

}  // namespace detail

/// Builds every stage with restarts: an attempt resamples the stage's
/// matrices and the encoding of its output, and is kept only if every
/// checked input reproduces the intended state exactly at each layer.
inline BuildResult try_construct(const std::vector<FeatureCircuit>& chain, const CompileOptions& opt) {
  BuildResult result;
  const auto plan = plan_network(chain, opt);
  auto& net = result.network;
  net.m = plan.m;
  net.m_out = plan.m_out;
  net.v_max = plan.v_max;
  net.circuits = plan.circuits;
  net.params = opt.params;
  net.strategy = std::string(to_string(opt.strategy));
  net.copy_c = 0.0;
  for (const auto& s : plan.schemes) {
    if (s) net.copy_c = opt.copy_c;
  }

  const auto inputs = enumerate_inputs(plan.circuits.front(), plan.v_max, opt.verify);
  // Distinct feature sets entering the current stage.
  std::set<ActiveSet> stage_inputs(inputs.begin(), inputs.end());

  const std::size_t restarts = std::max<std::size_t>(1, opt.max_restarts);
  std::optional<InputEncoding> carried;  // encoding produced by the previous stage
  std::size_t layer_index = 0;

  for (std::size_t s = 0; s < plan.stages.size(); ++s) {
    const auto& stage = plan.stages[s];
    const bool last_stage = s + 1 == plan.stages.size();
    bool built = false;
    std::vector<CompiledLayer> last_layers;
    std::optional<InputEncoding> last_in;
    std::optional<InputEncoding> last_out;
    for (std::size_t a = 0; a < restarts && !built; ++a) {
      const std::string tag = "stage" + std::to_string(s) + "/attempt" + std::to_string(a);
      AttemptRecord rec{s, a, false, {}};
      try {
        InputEncoding in_enc = carried ? *carried
                                       : build_input_encoding(stage.layers.front().encoding, plan.m, opt.params.seed,
                                                              tag + "/input");
        std::vector<CompiledLayer> layers;
        std::vector<InputEncoding> outs;
        outs.reserve(stage.layers.size());
        const InputEncoding* cur = &in_enc;
        for (std::size_t l = 0; l < stage.layers.size(); ++l) {
          const auto& lp = stage.layers[l];
          std::vector<EncodingBlockSpec> layout;
          if (l + 1 < stage.layers.size()) {
            layout = stage.layers[l + 1].encoding;
          } else if (!last_stage) {
            layout = plan.stages[s + 1].layers.front().encoding;
          } else {
            layout = lp.producer_partition();
          }
          const std::string ltag = tag + "/layer" + std::to_string(layer_index + l);
          outs.push_back(build_input_encoding(layout, lp.m_out, opt.params.seed, ltag + "/out"));
          layers.push_back(assemble_layer(lp, *cur, outs.back().matrix, opt.params, opt.params.seed, ltag));
          layers.back().meta.attempt = a;
          cur = &outs.back();
        }

        if (opt.keep_failed) {
          last_layers = layers;
          last_in = in_enc;
          last_out = outs.back();
        }

        // Verify on ideal stage inputs.
        std::vector<LayerKernel> kernels;
        std::vector<SparseMatrix> out_t;
        for (const auto& layer : layers) {
          kernels.emplace_back(layer);
          out_t.push_back(layer.c1.matrix.transpose());
        }
        const auto in_t = in_enc.matrix.matrix.transpose();
        std::optional<ChannelMatrix> final_decoder;
        if (last_stage) final_decoder = readout_decoder(layers.back().c1);

        std::string failure;
        for (const auto& features : stage_inputs) {
          auto x = detail::ideal_state(in_t, in_enc.matrix.rows(), features);
          auto cur_features = features;
          for (std::size_t l = 0; l < layers.size() && failure.empty(); ++l) {
            LayerTrace trace;
            x = kernels[l].step(x, ClipMode::Unchecked, &trace);
            cur_features = layer_ideal(layers[l], cur_features);
            if (opt.verify.checked && (has_mid_range(trace.hidden) || has_mid_range(trace.output))) {
              failure = "mid-range value in layer " + std::to_string(layer_index + l);
            } else if (x != detail::ideal_state(out_t[l], layers[l].output_dim(), cur_features)) {
              failure = "layer " + std::to_string(layer_index + l) + " state differs from the intended encoding";
            }
          }
          if (failure.empty() && final_decoder) {
            const auto got = threshold(decode({x, {}}, *final_decoder));
            if (!got.equals(cur_features)) failure = "final readout differs from the intended outputs";
          }
          if (!failure.empty()) {
            result.last_failing_input = features;
            rec.outcome = failure + " on stage input " + detail::describe(features);
            break;
          }
        }
        if (failure.empty()) {
          built = true;
          rec.pass = true;
          rec.outcome = "pass";
          if (s == 0) net.input_encoding = in_enc.matrix;
          std::set<ActiveSet> next;
          for (const auto& features : stage_inputs) {
            auto f = features;
            for (const auto& layer : layers) f = layer_ideal(layer, f);
            next.insert(std::move(f));
          }
          stage_inputs = std::move(next);
          carried = outs.back();
          for (auto& layer : layers) net.layers.push_back(std::move(layer));
        }
      } catch (const Error& e) {
        if (!detail::retryable(e.kind())) throw;
        rec.outcome = e.what();
      }
      result.transcript.push_back(std::move(rec));
    }
    if (!built) {
      result.ok = false;
      result.error = "stage " + std::to_string(s) + " failed " + std::to_string(restarts) +
                     " attempts; last: " + result.transcript.back().outcome;
      result.report.attempts = result.transcript.size();
      if (!opt.keep_failed || last_layers.empty()) return result;
      if (s == 0) net.input_encoding = last_in->matrix;
      std::set<ActiveSet> next;
      for (const auto& features : stage_inputs) {
        auto f = features;
        for (const auto& layer : last_layers) f = layer_ideal(layer, f);
        next.insert(std::move(f));
      }
      stage_inputs = std::move(next);
      carried = std::move(last_out);
      for (auto& layer : last_layers) net.layers.push_back(std::move(layer));
    }
    layer_index += stage.layers.size();
  }

  net.output_decoding = readout_decoder(net.layers.back().c1);
  net.output_decoding.kind = ChannelKind::OutputDecompression;
  net.params.n = net.layers.front().hidden_dim();
  net.params.p = CodecParams::density_for(plan.circuits.front().m_prime(), plan.stages.front().layers.front().n_sub,
                                          opt.params.beta);
  result.ok = result.error.empty();
  if (!result.ok) return result;
  if (opt.final_report) {
    result.report = verify_inputs(net, net.circuits, inputs, opt.verify);
    result.ok = result.report.pass;
    if (!result.ok) result.error = "final verification failed";
  } else {
    result.report.pass = true;
    result.report.mode = opt.verify.mode;
  }
  result.report.attempts = result.transcript.size();
  return result;
}

inline BuildResult compile_network(const std::vector<FeatureCircuit>& chain, const CompileOptions& opt) {
  auto result = try_construct(chain, opt);
  if (!result.ok) {
    throw Error(ErrorKind::ConstructionFailed,
                result.error + "; last failing input " + detail::describe(result.last_failing_input));
  }
  return result;
}

/// Single-circuit entry point with explicit seed and restart budget.
inline BuildResult construct_with_retries(const FeatureCircuit& circuit, CodecParams params, std::uint64_t seed,
                                          std::size_t max_restarts, VerifyOptions verify = {}) {
  if (max_restarts < 1) throw Error(ErrorKind::InvalidParams, "max_restarts must be at least 1");
  CompileOptions opt;
  params.seed = seed;
  opt.params = params;
  opt.max_restarts = max_restarts;
  opt.verify = verify;
  return compile_network({circuit}, opt);
}

inline nlohmann::json to_json(const BuildResult& r) {
  nlohmann::json transcript = nlohmann::json::array();
  for (const auto& a : r.transcript) {
    transcript.push_back({{"stage", a.stage}, {"attempt", a.attempt}, {"pass", a.pass}, {"outcome", a.outcome}});
  }
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : r.network.layers) {
    layers.push_back({{"kind", to_string(l.meta.kind)},
                      {"input_dim", l.input_dim()},
                      {"hidden_dim", l.hidden_dim()},
                      {"output_dim", l.output_dim()},
                      {"m_in", l.meta.m_in},
                      {"m_out", l.meta.m_out},
                      {"blocks", l.meta.blocks.size()},
                      {"guards", l.meta.guards.size()},
                      {"attempt", l.meta.attempt}});
  }
  return {{"ok", r.ok},
          {"error", r.error},
          {"digest", digest(r.network.circuits)},
          {"params", detail::params_json(r.network.params)},
          {"strategy", r.network.strategy},
          {"v_max", r.network.v_max},
          {"layers", layers},
          {"transcript", transcript},
          {"verification", to_json(r.report)}};
}

}  // namespace superpose
