#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "superpose/circuit.hpp"
#include "superpose/compiler.hpp"
#include "superpose/error.hpp"
#include "superpose/rng.hpp"

namespace superpose {

// ---------------------------------------------------------------------------
// Copies scheme

/// Random copies of the circuit. Pair t holds copies 2t and 2t+1 and every
/// input lands in exactly one of them.
struct CopyScheme {
  std::size_t v = 3;
  std::size_t m = 0;
  double c = 8.0;
  std::size_t num_pairs = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<std::uint8_t>> assignment;  // [pair][input] -> side

  std::size_t copies() const { return 2 * num_pairs; }

  bool contains(std::size_t copy, std::size_t input) const { return assignment[copy / 2][input] == copy % 2; }

  bool contains_all(std::size_t copy, const std::vector<std::size_t>& inputs) const {
    return std::all_of(inputs.begin(), inputs.end(), [&](std::size_t j) { return contains(copy, j); });
  }

  /// Some copy holds every input of `group` and no other input of `active`.
  bool isolates(const std::vector<std::size_t>& group, const std::vector<std::size_t>& active) const {
    for (std::size_t k = 0; k < copies(); ++k) {
      if (!contains_all(k, group)) continue;
      bool clean = true;
      for (const auto j : active) {
        if (contains(k, j) && std::find(group.begin(), group.end(), j) == group.end()) {
          clean = false;
          break;
        }
      }
      if (clean) return true;
    }
    return false;
  }
};

inline std::size_t copy_pairs_for(std::size_t v, std::size_t m, double c) {
  const double pairs = std::ceil(c * static_cast<double>(v) * std::ldexp(1.0, static_cast<int>(v)) *
                                 std::log2(static_cast<double>(m) + 1.0));
  return pairs < 1.0 ? 1 : static_cast<std::size_t>(pairs);
}

/// Draws the copy assignment and checks that every AND output is computed
/// in at least one copy.
inline CopyScheme plan_copies(const FeatureCircuit& circuit, std::size_t v, double c, std::uint64_t seed) {
  if (!(c > 0.0)) throw Error(ErrorKind::InvalidParams, "copy constant c must be > 0");
  if (v < 1 || v > 20) throw Error(ErrorKind::InvalidParams, "copies need 1 <= v <= 20");
  CopyScheme s;
  s.v = v;
  s.m = circuit.m;
  s.c = c;
  s.seed = seed;
  s.num_pairs = copy_pairs_for(v, circuit.m, c);
  auto rng = Rng::derive(seed, "copies");
  s.assignment.assign(s.num_pairs, std::vector<std::uint8_t>(circuit.m, 0));
  for (auto& pair : s.assignment) {
    for (auto& side : pair) side = static_cast<std::uint8_t>(rng.next() & 1U);
  }
  for (std::size_t i = 0; i < circuit.outputs.size(); ++i) {
    const auto& o = circuit.outputs[i];
    if (o.op != GateOp::And) continue;
    bool covered = false;
    for (std::size_t k = 0; k < s.copies() && !covered; ++k) covered = s.contains_all(k, o.inputs);
    if (!covered) throw Error(ErrorKind::CoverageFailure, "output " + std::to_string(i) + " is computed in no copy");
  }
  return s;
}

struct CoverageAudit {
  std::size_t sets_checked = 0;
  std::size_t pairs_checked = 0;
  std::size_t pairs_isolated = 0;

  bool all_isolated() const { return pairs_checked == pairs_isolated; }
};

/// Samples `samples` random v-sets and checks that each of their internal
/// pairs sits alone in some copy.
inline CoverageAudit audit_coverage(const CopyScheme& s, std::size_t samples, std::uint64_t seed) {
  CoverageAudit audit;
  auto rng = Rng::derive(seed, "coverage-audit");
  const std::size_t v = std::min(s.v, s.m);
  for (std::size_t t = 0; t < samples; ++t) {
    const auto set = rng.sample_distinct(s.m, v);
    ++audit.sets_checked;
    for (std::size_t a = 0; a < set.size(); ++a) {
      for (std::size_t b = a + 1; b < set.size(); ++b) {
        ++audit.pairs_checked;
        if (s.isolates({set[a], set[b]}, set)) ++audit.pairs_isolated;
      }
    }
  }
  return audit;
}

// ---------------------------------------------------------------------------
// k-AND lowering

/// Binary-tree lowering of a k-AND circuit into cascaded 2-AND circuits.
/// Level l reads the features of level l-1 (level 0 = original inputs); the
/// last level's outputs are the original outputs, in order.
struct AndTreePlan {
  FeatureCircuit source;
  std::vector<FeatureCircuit> levels;

  std::size_t depth() const { return levels.size(); }
};

inline std::size_t tree_depth(std::size_t k) {
  std::size_t d = 0;
  while ((std::size_t{1} << d) < k) ++d;
  return d;
}

inline AndTreePlan lower_k_and(const FeatureCircuit& circuit) {
  circuit.validate();
  AndTreePlan plan;
  plan.source = circuit;
  const std::size_t depth = std::max<std::size_t>(1, tree_depth(circuit.arity()));

  // Pending node lists per output, as feature ids of the current level.
  std::vector<std::vector<std::size_t>> pending;
  for (const auto& o : circuit.outputs) {
    auto ins = o.inputs;
    std::sort(ins.begin(), ins.end());
    pending.push_back(std::move(ins));
  }
  std::size_t width = circuit.m;
  for (std::size_t level = 0; level < depth; ++level) {
    FeatureCircuit next;
    next.m = width;
    next.v_max = circuit.v_max;
    const bool last = level + 1 == depth;
    std::map<std::pair<GateOp, std::vector<std::size_t>>, std::size_t> ids;
    auto node = [&](GateOp op, std::vector<std::size_t> ins) {
      auto [it, fresh] = ids.try_emplace({op, ins}, next.outputs.size());
      if (fresh) next.outputs.push_back({op, std::move(ins)});
      return it->second;
    };
    for (std::size_t i = 0; i < pending.size(); ++i) {
      auto& list = pending[i];
      if (last) {
        // The root level keeps one output per original output.
        const auto op = list.size() == 1 ? GateOp::Pass : GateOp::And;
        next.outputs.push_back({op, list});
        list = {i};
        continue;
      }
      std::vector<std::size_t> reduced;
      for (std::size_t q = 0; q + 1 < list.size(); q += 2) reduced.push_back(node(GateOp::And, {list[q], list[q + 1]}));
      if (list.size() % 2 == 1) reduced.push_back(node(GateOp::Pass, {list.back()}));
      list = std::move(reduced);
    }
    width = next.outputs.size();
    plan.levels.push_back(std::move(next));
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Layer planning for trees, with or without copies

/// Lays out the layers that compute `tree`. Without a scheme every level is
/// one plain layer. With a scheme each copy computes the tree of the outputs
/// it holds, the first level carries one guard row per copy, and a final
/// combine layer ORs the copies of every output.
inline std::vector<LayerPlan> plan_tree_layers(const AndTreePlan& tree, const CopyScheme* scheme,
                                               const CodecParams& params, Strategy strategy) {
  const auto& src = tree.source;
  const std::size_t m_prime = src.m_prime();
  if (m_prime == 0) throw Error(ErrorKind::InvalidParams, "circuit has no outputs");
  const std::size_t n_sub = CodecParams::neurons_for(m_prime, params.alpha);
  const double out_density = CodecParams::density_for(m_prime, n_sub, params.beta);
  const std::size_t depth = tree.depth();
  const std::size_t fire_at = std::max<std::size_t>(3, src.arity() + 1);

  // Groups: one per copy plus an unguarded group for wires, or a single
  // unguarded group holding everything.
  struct Group {
    std::vector<std::size_t> roots;
    bool guarded = false;
  };
  std::vector<Group> groups;
  if (scheme) {
    for (std::size_t k = 0; k < scheme->copies(); ++k) {
      Group g;
      g.guarded = true;
      for (std::size_t i = 0; i < m_prime; ++i) {
        if (src.outputs[i].op == GateOp::And && scheme->contains_all(k, src.outputs[i].inputs)) g.roots.push_back(i);
      }
      if (!g.roots.empty()) groups.push_back(std::move(g));
    }
    Group wires;
    for (std::size_t i = 0; i < m_prime; ++i) {
      if (src.outputs[i].op == GateOp::Pass) wires.roots.push_back(i);
    }
    if (!wires.roots.empty()) groups.push_back(std::move(wires));
  } else {
    Group all;
    for (std::size_t i = 0; i < m_prime; ++i) all.roots.push_back(i);
    groups.push_back(std::move(all));
  }

  // needed[g][l]: sorted node ids of level l (0-based) used by group g.
  std::vector<std::vector<std::vector<std::size_t>>> needed(groups.size(), std::vector<std::vector<std::size_t>>(depth));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    needed[g][depth - 1] = groups[g].roots;
    for (std::size_t l = depth - 1; l > 0; --l) {
      auto& below = needed[g][l - 1];
      for (const auto node : needed[g][l]) {
        const auto& ins = tree.levels[l].outputs[node].inputs;
        below.insert(below.end(), ins.begin(), ins.end());
      }
      std::sort(below.begin(), below.end());
      below.erase(std::unique(below.begin(), below.end()), below.end());
    }
  }

  // Feature ids of (group, node) per level.
  std::vector<std::vector<std::map<std::size_t, std::size_t>>> fid(groups.size(),
                                                                   std::vector<std::map<std::size_t, std::size_t>>(depth));
  std::vector<std::size_t> width(depth, 0);
  for (std::size_t l = 0; l < depth; ++l) {
    for (std::size_t g = 0; g < groups.size(); ++g) {
      for (const auto node : needed[g][l]) fid[g][l][node] = width[l]++;
    }
  }

  std::vector<LayerPlan> layers;
  for (std::size_t l = 0; l < depth; ++l) {
    LayerPlan plan;
    plan.kind = (scheme && l == 0) ? LayerKind::Copies : LayerKind::Plain;
    plan.m_in = l == 0 ? src.m : width[l - 1];
    plan.m_out = width[l];
    plan.v = src.v_max;
    plan.n_sub = n_sub;
    plan.out_density = out_density;
    plan.rules.resize(width[l]);
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (needed[g][l].empty()) continue;
      FeatureCircuit sub;
      sub.m = plan.m_in;
      sub.v_max = src.v_max;
      std::vector<std::size_t> ids;
      for (const auto node : needed[g][l]) {
        auto spec = tree.levels[l].outputs[node];
        if (l > 0) {
          for (auto& j : spec.inputs) j = fid[g][l - 1].at(j);
        }
        std::sort(spec.inputs.begin(), spec.inputs.end());
        sub.outputs.push_back(spec);
        ids.push_back(fid[g][l].at(node));
      }
      std::vector<std::size_t> all(sub.outputs.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      const std::size_t first_block = plan.blocks.size();
      for (auto& b : plan_blocks(sub, all, ids, n_sub, m_prime, params, strategy, width[l])) plan.blocks.push_back(std::move(b));

      std::int64_t guard = -1;
      if (groups[g].guarded && l == 0) {
        Guard gd;
        gd.fire_at = fire_at;
        for (std::size_t b = first_block; b < plan.blocks.size(); ++b) {
          gd.blocks.push_back(b);
          gd.inputs.insert(gd.inputs.end(), plan.blocks[b].inputs.begin(), plan.blocks[b].inputs.end());
        }
        std::sort(gd.inputs.begin(), gd.inputs.end());
        gd.inputs.erase(std::unique(gd.inputs.begin(), gd.inputs.end()), gd.inputs.end());
        guard = static_cast<std::int64_t>(plan.guards.size());
        plan.guards.push_back(std::move(gd));
      }
      for (std::size_t i = 0; i < sub.outputs.size(); ++i) {
        const auto& o = sub.outputs[i];
        plan.rules[ids[i]] = {o.op == GateOp::And ? RuleOp::And : RuleOp::Or, o.inputs, guard};
      }
    }
    for (std::size_t b = 0; b < plan.blocks.size(); ++b) {
      plan.encoding.push_back(routed_encoding(plan.blocks[b], out_density));
      plan.block_encodings.push_back({b});
    }
    layers.push_back(std::move(plan));
  }

  if (scheme) {
    LayerPlan combine;
    combine.kind = LayerKind::Combine;
    combine.m_in = width[depth - 1];
    combine.m_out = m_prime;
    combine.v = src.v_max;
    combine.n_sub = n_sub;
    combine.out_density = out_density;
    combine.encoding = layers.back().producer_partition();
    SubproblemPlan sub;
    sub.kind = SubproblemKind::Disjunction;
    sub.n_sub = n_sub;
    sub.density = out_density;
    for (std::size_t i = 0; i < m_prime; ++i) {
      std::vector<std::size_t> sources;
      for (std::size_t g = 0; g < groups.size(); ++g) {
        if (auto it = fid[g][depth - 1].find(i); it != fid[g][depth - 1].end()) sources.push_back(it->second);
      }
      if (sources.empty()) throw Error(ErrorKind::CoverageFailure, "output " + std::to_string(i) + " is computed in no copy");
      sub.outputs.push_back(i);
      sub.output_inputs.push_back(sources);
      sub.inputs.insert(sub.inputs.end(), sources.begin(), sources.end());
      combine.rules.push_back({RuleOp::Or, sources, -1});
    }
    std::sort(sub.inputs.begin(), sub.inputs.end());
    combine.blocks.push_back(std::move(sub));
    std::vector<std::size_t> all_blocks(combine.encoding.size());
    for (std::size_t b = 0; b < all_blocks.size(); ++b) all_blocks[b] = b;
    combine.block_encodings.push_back(std::move(all_blocks));
    layers.push_back(std::move(combine));
  }
  return layers;
}

}  // namespace superpose
