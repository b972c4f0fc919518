#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "superpose/circuit.hpp"
#include "superpose/codec.hpp"
#include "superpose/compiler.hpp"
#include "superpose/rng.hpp"
#include "superpose/runtime.hpp"

namespace superpose {

using ActiveSet = std::vector<std::size_t>;

/// Exact monosemantic evaluation: output i is on iff every one of its
/// inputs is active.
inline std::vector<std::size_t> oracle_eval(const FeatureCircuit& c, const ActiveSet& active) {
  std::vector<char> on(c.m, 0);
  for (const auto j : active) {
    if (j < c.m) on[j] = 1;
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < c.outputs.size(); ++i) {
    const auto& ins = c.outputs[i].inputs;
    if (std::all_of(ins.begin(), ins.end(), [&](std::size_t j) { return on[j] != 0; })) out.push_back(i);
  }
  return out;
}

inline std::vector<std::size_t> oracle_eval(const std::vector<FeatureCircuit>& chain, ActiveSet active) {
  for (const auto& c : chain) active = oracle_eval(c, active);
  return active;
}

enum class VerifyMode { Exhaustive, Sampled };

inline std::string_view to_string(VerifyMode m) { return m == VerifyMode::Exhaustive ? "exhaustive" : "sampled"; }

struct VerifyOptions {
  VerifyMode mode = VerifyMode::Sampled;
  std::size_t budget = 10000;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::size_t max_failures = 64;  // failures kept in the report; all are counted
  bool checked = true;            // a value in [1/4, 3/4] at any boundary is a failure
  bool stop_at_first = false;
};

inline double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

namespace detail {

inline void subsets_of_size(std::size_t m, std::size_t k, std::vector<ActiveSet>& out) {
  if (k > m) return;
  ActiveSet s(k);
  for (std::size_t i = 0; i < k; ++i) s[i] = i;
  while (true) {
    out.push_back(s);
    std::size_t i = k;
    while (i > 0 && s[i - 1] == m - k + i - 1) --i;
    if (i == 0) return;
    ++s[i - 1];
    for (std::size_t q = i; q < k; ++q) s[q] = s[q - 1] + 1;
  }
}

}  // namespace detail

/// Input sets checked by verification.
///
/// Exhaustive: the empty set, all singletons and all pairs; when v > 2 and
/// the number of subsets of size <= v fits in the budget, all of those.
/// Sampled: the empty set, all singletons, every pair that lies inside some
/// output, and `budget` random other pairs; when v > 2 also every output's
/// input set (if it has at most v inputs) and `budget` random subsets of
/// size 3..v.
inline std::vector<ActiveSet> enumerate_inputs(const FeatureCircuit& c, std::size_t v, const VerifyOptions& opt) {
  const std::size_t m = c.m;
  std::vector<ActiveSet> sets;
  sets.push_back({});
  if (v >= 1) detail::subsets_of_size(m, 1, sets);
  if (opt.mode == VerifyMode::Exhaustive) {
    if (v >= 2) detail::subsets_of_size(m, 2, sets);
    if (v > 2) {
      double total = 0.0;
      for (std::size_t k = 0; k <= v; ++k) total += binomial(m, k);
      if (total <= static_cast<double>(opt.budget)) {
        for (std::size_t k = 3; k <= v; ++k) detail::subsets_of_size(m, k, sets);
      }
    }
    return sets;
  }
  if (v < 2) return sets;
  std::set<ActiveSet> internal;
  for (const auto& o : c.outputs) {
    auto ins = o.inputs;
    std::sort(ins.begin(), ins.end());
    for (std::size_t a = 0; a < ins.size(); ++a) {
      for (std::size_t b = a + 1; b < ins.size(); ++b) internal.insert({ins[a], ins[b]});
    }
  }
  sets.insert(sets.end(), internal.begin(), internal.end());
  const double others = binomial(m, 2) - static_cast<double>(internal.size());
  auto rng = Rng::derive(opt.seed, "verify/pairs");
  if (others <= static_cast<double>(opt.budget)) {
    std::vector<ActiveSet> all;
    detail::subsets_of_size(m, 2, all);
    for (auto& s : all) {
      if (!internal.count(s)) sets.push_back(std::move(s));
    }
  } else {
    std::set<ActiveSet> drawn;
    while (drawn.size() < opt.budget) {
      auto s = rng.sample_distinct(m, 2);
      if (!internal.count(s)) drawn.insert(std::move(s));
    }
    sets.insert(sets.end(), drawn.begin(), drawn.end());
  }
  if (v > 2) {
    std::set<ActiveSet> seen(sets.begin(), sets.end());
    for (const auto& o : c.outputs) {
      auto ins = o.inputs;
      std::sort(ins.begin(), ins.end());
      if (ins.size() > 2 && ins.size() <= v && seen.insert(ins).second) sets.push_back(ins);
    }
    const std::size_t top = std::min(v, m);
    if (top >= 3) {
      for (std::size_t t = 0; t < opt.budget; ++t) {
        const auto k = 3 + static_cast<std::size_t>(rng.below(top - 2));
        auto s = rng.sample_distinct(m, k);
        if (seen.insert(s).second) sets.push_back(std::move(s));
      }
    }
  }
  return sets;
}

struct Failure {
  ActiveSet active;
  std::vector<std::size_t> expected;
  std::vector<std::size_t> got;
  std::vector<std::size_t> ambiguous;
  std::string reason;
};

struct VerificationReport {
  VerifyMode mode = VerifyMode::Sampled;
  std::size_t inputs_checked = 0;
  std::size_t failure_count = 0;
  std::vector<Failure> failures;  // first max_failures, in enumeration order
  std::size_t attempts = 0;
  bool pass = false;
  // Per layer: inputs whose state after that layer differs from the ideal
  // encoding of the layer's intended outputs.
  std::vector<std::size_t> layer_mismatches;
};

// ---------------------------------------------------------------------------
// Ideal states

/// Features a layer should output given its active input features.
inline std::vector<std::size_t> layer_ideal(const CompiledLayer& layer, const std::vector<std::size_t>& active) {
  std::vector<char> mask(layer.meta.m_in, 0);
  for (const auto j : active) mask[j] = 1;
  return evaluate_rules(layer.meta.rules, layer.meta.guards, mask);
}

/// Intended features after each layer for one network input.
inline std::vector<std::vector<std::size_t>> ideal_trajectory(const Network& net, const ActiveSet& active) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur = active;
  for (const auto& layer : net.layers) {
    cur = layer_ideal(layer, cur);
    out.push_back(cur);
  }
  return out;
}

inline bool has_mid_range(const std::vector<double>& v) {
  return std::any_of(v.begin(), v.end(), [](double x) { return is_mid_range(x); });
}

namespace detail {

template <typename Fn>
void parallel_chunks(std::size_t count, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    fn(std::size_t{0}, count, std::size_t{0});
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (count + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t lo = std::min(count, t * chunk);
    const std::size_t hi = std::min(count, lo + chunk);
    pool.emplace_back([&, lo, hi, t] { fn(lo, hi, t); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// Checks threshold(decode(forward(encode(S)))) against the oracle of
/// `chain` for every S in `inputs`, and counts per-layer state mismatches.
inline VerificationReport verify_inputs(const Network& net, const std::vector<FeatureCircuit>& chain,
                                        const std::vector<ActiveSet>& inputs, const VerifyOptions& opt) {
  const ForwardEngine engine(net);
  const std::size_t layers = net.layers.size();
  std::vector<SparseMatrix> c1t;
  for (const auto& layer : net.layers) c1t.push_back(layer.c1.matrix.transpose());

  struct Partial {
    std::size_t failures = 0;
    std::vector<Failure> kept;
    std::vector<std::size_t> mismatches;
    std::size_t checked = 0;
  };
  const std::size_t threads = std::max<std::size_t>(1, opt.threads);
  std::vector<Partial> parts(threads);

  detail::parallel_chunks(inputs.size(), threads, [&](std::size_t lo, std::size_t hi, std::size_t t) {
    auto& part = parts[t];
    part.mismatches.assign(layers, 0);
    std::vector<double> ideal;
    for (std::size_t s = lo; s < hi; ++s) {
      if (opt.stop_at_first && part.failures > 0) break;
      const auto& active = inputs[s];
      ++part.checked;
      const auto expected = oracle_eval(chain, active);
      const auto trajectory = ideal_trajectory(net, active);
      std::string reason;
      std::vector<double> x = encode_input(active, net).values;
      for (std::size_t l = 0; l < layers; ++l) {
        LayerTrace trace;
        x = engine.step(l, x, ClipMode::Unchecked, &trace);
        if (opt.checked && reason.empty() && (has_mid_range(trace.hidden) || has_mid_range(trace.output))) {
          reason = "mid-range value in layer " + std::to_string(l);
        }
        ideal.assign(x.size(), 0.0);
        for (const auto f : trajectory[l]) {
          for (const auto r : c1t[l].row_cols(f)) ideal[r] = 1.0;
        }
        if (ideal != x) ++part.mismatches[l];
      }
      const auto got = engine.readout({x, {}});
      if (!got.equals(expected) && reason.empty()) reason = "decoded outputs differ from the oracle";
      if (!reason.empty()) {
        ++part.failures;
        if (part.kept.size() < opt.max_failures) part.kept.push_back({active, expected, got.ones, got.ambiguous, reason});
      }
    }
  });

  VerificationReport report;
  report.mode = opt.mode;
  report.layer_mismatches.assign(layers, 0);
  for (auto& part : parts) {
    report.inputs_checked += part.checked;
    report.failure_count += part.failures;
    for (auto& f : part.kept) {
      if (report.failures.size() < opt.max_failures) report.failures.push_back(std::move(f));
    }
    for (std::size_t l = 0; l < part.mismatches.size(); ++l) report.layer_mismatches[l] += part.mismatches[l];
  }
  report.pass = report.failure_count == 0;
  return report;
}

inline VerificationReport verify_network(const Network& net, const std::vector<FeatureCircuit>& chain,
                                         const VerifyOptions& opt) {
  if (chain.empty()) throw Error(ErrorKind::InvalidParams, "no circuit to verify against");
  if (chain.front().m != net.m || chain.back().m_prime() != net.m_out) {
    throw Error(ErrorKind::DimensionMismatch, "circuit dimensions differ from the network");
  }
  return verify_inputs(net, chain, enumerate_inputs(chain.front(), net.v_max, opt), opt);
}

inline VerificationReport verify_network(const Network& net, const VerifyOptions& opt) {
  return verify_network(net, net.circuits, opt);
}

// ---------------------------------------------------------------------------
// Noise profiling

struct NoiseSample {
  double value = 0.0;
  ActiveSet active;
  std::size_t layer = 0;
  std::size_t row = 0;
};

struct NoiseReport {
  std::size_t inputs = 0;
  double max_type_a = -std::numeric_limits<double>::infinity();  // intended-zero, first boundary
  double max_type_b = -std::numeric_limits<double>::infinity();  // intended-zero, second boundary
  double min_one_hidden = std::numeric_limits<double>::infinity();
  double min_one_output = std::numeric_limits<double>::infinity();
  std::vector<NoiseSample> worst_a;
  std::vector<NoiseSample> worst_b;

  double min_intended_one() const { return std::min(min_one_hidden, min_one_output); }
  bool within_margins(double eps = 0.25) const {
    return max_type_a < eps && max_type_b < eps && min_intended_one() > 1.0 - eps;
  }
};

namespace detail {

inline void keep_worst(std::vector<NoiseSample>& v, NoiseSample s, std::size_t cap) {
  v.push_back(std::move(s));
  std::sort(v.begin(), v.end(), [](const NoiseSample& a, const NoiseSample& b) { return a.value > b.value; });
  if (v.size() > cap) v.resize(cap);
}

inline void merge_noise(NoiseReport& into, const NoiseReport& from, std::size_t cap) {
  into.inputs += from.inputs;
  into.max_type_a = std::max(into.max_type_a, from.max_type_a);
  into.max_type_b = std::max(into.max_type_b, from.max_type_b);
  into.min_one_hidden = std::min(into.min_one_hidden, from.min_one_hidden);
  into.min_one_output = std::min(into.min_one_output, from.min_one_output);
  for (const auto& s : from.worst_a) keep_worst(into.worst_a, s, cap);
  for (const auto& s : from.worst_b) keep_worst(into.worst_b, s, cap);
}

}  // namespace detail

/// Pre-clip values at both boundaries of every layer, split into intended
/// ones and intended zeros. A hidden row is an intended one when the
/// noise-free value C0·(ideal decoded input) + b reaches 1; an output row is
/// an intended one when it lies in the encoding of an intended output.
inline NoiseReport profile_noise(const Network& net, const std::vector<ActiveSet>& inputs, std::size_t threads = 1,
                                 std::size_t worst = 8) {
  const ForwardEngine engine(net);
  const std::size_t layers = net.layers.size();
  std::vector<SparseMatrix> c1t;
  for (const auto& layer : net.layers) c1t.push_back(layer.c1.matrix.transpose());
  threads = std::max<std::size_t>(1, threads);
  std::vector<NoiseReport> parts(threads);

  detail::parallel_chunks(inputs.size(), threads, [&](std::size_t lo, std::size_t hi, std::size_t t) {
    auto& rep = parts[t];
    for (std::size_t s = lo; s < hi; ++s) {
      const auto& active = inputs[s];
      ++rep.inputs;
      std::vector<std::size_t> in_features = active;
      std::vector<double> x = encode_input(active, net).values;
      double worst_a = -std::numeric_limits<double>::infinity();
      double worst_b = worst_a;
      NoiseSample sa{worst_a, active, 0, 0};
      NoiseSample sb = sa;
      for (std::size_t l = 0; l < layers; ++l) {
        const auto& layer = net.layers[l];
        LayerTrace trace;
        x = engine.step(l, x, ClipMode::Unchecked, &trace);

        std::vector<double> dec(layer.d0.rows(), 0.0);
        std::vector<char> on(layer.meta.m_in, 0);
        for (const auto f : in_features) on[f] = 1;
        for (std::size_t q = 0; q < dec.size(); ++q) dec[q] = on[layer.meta.decoded_feature[q]] ? 1.0 : 0.0;
        auto ideal_h = layer.c0.matrix.multiply(dec);
        for (std::size_t r = 0; r < ideal_h.size(); ++r) {
          const bool one = ideal_h[r] + layer.bias[r] >= 1.0;
          const double h = trace.hidden[r];
          if (one) {
            rep.min_one_hidden = std::min(rep.min_one_hidden, h);
          } else if (h > worst_a) {
            worst_a = h;
            sa = {h, active, l, r};
          }
        }

        const auto out_features = layer_ideal(layer, in_features);
        std::vector<char> support(layer.output_dim(), 0);
        for (const auto f : out_features) {
          for (const auto r : c1t[l].row_cols(f)) support[r] = 1;
        }
        for (std::size_t r = 0; r < trace.output.size(); ++r) {
          const double z = trace.output[r];
          if (support[r]) {
            rep.min_one_output = std::min(rep.min_one_output, z);
          } else if (z > worst_b) {
            worst_b = z;
            sb = {z, active, l, r};
          }
        }
        in_features = out_features;
      }
      rep.max_type_a = std::max(rep.max_type_a, worst_a);
      rep.max_type_b = std::max(rep.max_type_b, worst_b);
      if (sa.value > -std::numeric_limits<double>::infinity()) detail::keep_worst(rep.worst_a, sa, worst);
      if (sb.value > -std::numeric_limits<double>::infinity()) detail::keep_worst(rep.worst_b, sb, worst);
    }
  });

  NoiseReport report;
  for (const auto& p : parts) detail::merge_noise(report, p, worst);
  return report;
}

// ---------------------------------------------------------------------------
// JSON views

inline nlohmann::json to_json(const VerificationReport& r) {
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : r.failures) {
    failures.push_back({{"active", f.active},
                        {"expected", f.expected},
                        {"got", f.got},
                        {"ambiguous", f.ambiguous},
                        {"reason", f.reason}});
  }
  return {{"mode", to_string(r.mode)},
          {"inputs_checked", r.inputs_checked},
          {"failure_count", r.failure_count},
          {"failures", failures},
          {"attempts", r.attempts},
          {"pass", r.pass},
          {"layer_mismatches", r.layer_mismatches}};
}

inline nlohmann::json to_json(const NoiseReport& r) {
  auto samples = [](const std::vector<NoiseSample>& v) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& s : v) out.push_back({{"value", s.value}, {"active", s.active}, {"layer", s.layer}, {"row", s.row}});
    return out;
  };
  auto finite = [](double x) -> nlohmann::json {
    if (std::isfinite(x)) return x;
    return nullptr;
  };
  return {{"inputs", r.inputs},
          {"max_type_a", finite(r.max_type_a)},
          {"max_type_b", finite(r.max_type_b)},
          {"min_one_hidden", finite(r.min_one_hidden)},
          {"min_one_output", finite(r.min_one_output)},
          {"min_intended_one", finite(r.min_intended_one())},
          {"within_margins", r.within_margins()},
          {"worst_type_a", samples(r.worst_a)},
          {"worst_type_b", samples(r.worst_b)}};
}

}  // namespace superpose
