#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "superpose/circuit.hpp"
#include "superpose/codec.hpp"
#include "superpose/error.hpp"
#include "superpose/rng.hpp"
#include "superpose/sparse.hpp"

namespace superpose {

enum class SubproblemKind {
  LowInfluence,
  HighInfluence,
  MixedRegular,
  MixedSuper,
  // OR of one or more inputs per output: passthrough wires and copy combining.
  Disjunction,
};

inline std::string_view to_string(SubproblemKind k) {
  switch (k) {
    case SubproblemKind::LowInfluence: return "low-influence";
    case SubproblemKind::HighInfluence: return "high-influence";
    case SubproblemKind::MixedRegular: return "mixed-regular";
    case SubproblemKind::MixedSuper: return "mixed-super";
    case SubproblemKind::Disjunction: return "disjunction";
  }
  return "?";
}

inline SubproblemKind subproblem_kind_from_string(std::string_view s) {
  for (auto k : {SubproblemKind::LowInfluence, SubproblemKind::HighInfluence, SubproblemKind::MixedRegular,
                 SubproblemKind::MixedSuper, SubproblemKind::Disjunction}) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorKind::MalformedFile, "unknown subproblem kind '" + std::string(s) + "'");
}

/// One block of a layer: the outputs it computes, the inputs routed into it
/// and the channel densities it draws with.
struct SubproblemPlan {
  SubproblemKind kind = SubproblemKind::LowInfluence;
  std::vector<std::size_t> outputs;                     // layer output feature ids
  std::vector<std::vector<std::size_t>> output_inputs;  // input feature ids, per output
  std::vector<std::size_t> inputs;                      // sorted union of output_inputs
  std::vector<std::size_t> heavy;                       // inputs drawn as input channels
  std::size_t n_sub = 0;
  double density = 0.0;        // spec / heavy column density
  double light_density = 0.0;  // mixed blocks: light column density
  double gamma = 0.0;          // mixed-super only
  double zeta = 0.0;           // mixed-super only; cutoff magnitude
  std::size_t light_threshold = 0;
  std::size_t super_threshold = 0;

  std::size_t position(std::size_t input) const {
    const auto it = std::lower_bound(inputs.begin(), inputs.end(), input);
    return static_cast<std::size_t>(it - inputs.begin());
  }
  bool is_heavy(std::size_t input) const { return std::binary_search(heavy.begin(), heavy.end(), input); }
};

/// Construction output of one sub-compiler, in block-local coordinates:
/// C0 columns are positions in `inputs`, D1 rows are positions in `outputs`.
struct PartialLayer {
  std::size_t rows = 0;
  std::vector<Triplet> c0;
  std::vector<Triplet> d1;
  std::vector<double> bias;
  std::vector<ColumnSpec> specs;
  std::vector<std::vector<std::uint32_t>> columns;  // C0 support per input position
};

namespace detail {

inline std::vector<std::uint32_t> intersect(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  std::vector<std::uint32_t> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline std::vector<std::uint32_t> unite(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  std::vector<std::uint32_t> out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline void emit_columns(PartialLayer& part) {
  for (std::size_t q = 0; q < part.columns.size(); ++q) {
    for (const auto r : part.columns[q]) part.c0.push_back({r, static_cast<std::uint32_t>(q), 1.0});
  }
}

inline void emit_normalized_row(PartialLayer& part, std::size_t out_pos, const std::vector<std::uint32_t>& support) {
  const double w = 1.0 / static_cast<double>(support.size());
  for (const auto r : support) part.d1.push_back({static_cast<std::uint32_t>(out_pos), r, w});
}

// D1 rows read the rows where both inputs of an output carry a 1.
inline void emit_overlap_rows(PartialLayer& part, const SubproblemPlan& sub) {
  for (std::size_t r = 0; r < sub.outputs.size(); ++r) {
    const auto& ins = sub.output_inputs[r];
    auto overlap = part.columns[sub.position(ins[0])];
    for (std::size_t k = 1; k < ins.size(); ++k) overlap = intersect(overlap, part.columns[sub.position(ins[k])]);
    if (overlap.empty()) {
      throw Error(ErrorKind::EmptyOverlap, "output " + std::to_string(sub.outputs[r]) + " has no shared channel rows");
    }
    emit_normalized_row(part, r, overlap);
  }
}

inline void require_pairs(const SubproblemPlan& sub) {
  for (const auto& ins : sub.output_inputs) {
    if (ins.size() != 2) throw Error(ErrorKind::ArityError, "2-AND sub-compilers need arity-2 outputs");
  }
}

}  // namespace detail

/// Entries of one light column: row k may be 1 (with probability `density`)
/// only where some partner heavy column has a 1.
inline std::vector<std::uint32_t> conditioned_column(Rng& rng, std::size_t rows,
                                                     const std::vector<const std::vector<std::uint32_t>*>& partners,
                                                     double density) {
  std::vector<char> allowed(rows, 0);
  for (const auto* p : partners) {
    for (const auto r : *p) allowed[r] = 1;
  }
  std::vector<std::uint32_t> out;
  for (std::size_t r = 0; r < rows; ++r) {
    if (allowed[r] && rng.bernoulli(density)) out.push_back(static_cast<std::uint32_t>(r));
  }
  return out;
}

/// Output channels: every output gets a random column specification s_i and
/// an input's C0 column is the OR of the specs of the outputs it feeds.
inline PartialLayer compile_low_influence(const SubproblemPlan& sub, Rng& rng) {
  detail::require_pairs(sub);
  std::vector<std::size_t> uses(sub.inputs.size(), 0);
  for (const auto& ins : sub.output_inputs) {
    for (const auto j : ins) ++uses[sub.position(j)];
  }
  for (std::size_t q = 0; q < uses.size(); ++q) {
    if (uses[q] > sub.light_threshold) {
      throw Error(ErrorKind::InfluenceViolation, "input " + std::to_string(sub.inputs[q]) + " feeds " +
                                                     std::to_string(uses[q]) + " outputs of a low-influence block");
    }
  }
  PartialLayer part;
  part.rows = sub.n_sub;
  part.bias.assign(sub.n_sub, -1.0);
  part.columns.resize(sub.inputs.size());
  for (std::size_t r = 0; r < sub.outputs.size(); ++r) {
    part.specs.push_back(build_column_spec(rng, sub.n_sub, sub.density, sub.outputs[r]));
    for (const auto j : sub.output_inputs[r]) {
      auto& col = part.columns[sub.position(j)];
      col = detail::unite(col, part.specs.back().support);
    }
    detail::emit_normalized_row(part, r, part.specs.back().support);
  }
  detail::emit_columns(part);
  return part;
}

/// Input channels: each input gets an i.i.d. column of density 1/ceil(m'^(1/4))
/// and an output reads the overlap of its two inputs' columns.
inline PartialLayer compile_high_influence(const SubproblemPlan& sub, Rng& rng) {
  detail::require_pairs(sub);
  PartialLayer part;
  part.rows = sub.n_sub;
  part.bias.assign(sub.n_sub, -1.0);
  for (std::size_t q = 0; q < sub.inputs.size(); ++q) {
    part.columns.push_back(sample_column(rng, sub.n_sub, sub.density, "high-influence column"));
  }
  detail::emit_overlap_rows(part, sub);
  detail::emit_columns(part);
  return part;
}

/// Heavy inputs use input channels; a light input's column is drawn only
/// inside the channels of the heavy inputs it is paired with.
inline PartialLayer compile_mixed_regular(const SubproblemPlan& sub, Rng& rng) {
  detail::require_pairs(sub);
  PartialLayer part;
  part.rows = sub.n_sub;
  part.bias.assign(sub.n_sub, -1.0);
  part.columns.resize(sub.inputs.size());
  for (std::size_t q = 0; q < sub.inputs.size(); ++q) {
    if (sub.is_heavy(sub.inputs[q])) {
      part.columns[q] = sample_column(rng, sub.n_sub, sub.density, "mixed heavy column");
    }
  }
  for (std::size_t q = 0; q < sub.inputs.size(); ++q) {
    const auto j = sub.inputs[q];
    if (sub.is_heavy(j)) continue;
    std::vector<const std::vector<std::uint32_t>*> partners;
    for (const auto& ins : sub.output_inputs) {
      if (ins[0] == j && sub.is_heavy(ins[1])) partners.push_back(&part.columns[sub.position(ins[1])]);
      if (ins[1] == j && sub.is_heavy(ins[0])) partners.push_back(&part.columns[sub.position(ins[0])]);
    }
    part.columns[q] = conditioned_column(rng, sub.n_sub, partners, sub.light_density);
  }
  detail::emit_overlap_rows(part, sub);
  detail::emit_columns(part);
  return part;
}

/// Super-heavy inputs get dense (1/gamma) columns, lights sparse
/// (2 gamma / sqrt(m')) ones, plus a cutoff row that fires when two
/// super-heavy inputs are active and pushes every output of the block down by Z.
inline PartialLayer compile_mixed_super(const SubproblemPlan& sub, Rng& rng) {
  detail::require_pairs(sub);
  if (sub.heavy.size() > sub.super_threshold) {
    throw Error(ErrorKind::TooManySuperHeavies, std::to_string(sub.heavy.size()) + " super-heavy inputs exceed " +
                                                    std::to_string(sub.super_threshold));
  }
  PartialLayer part;
  part.rows = sub.n_sub + 1;
  part.bias.assign(part.rows, -1.0);
  for (std::size_t q = 0; q < sub.inputs.size(); ++q) {
    const bool heavy = sub.is_heavy(sub.inputs[q]);
    part.columns.push_back(sample_column(rng, sub.n_sub, heavy ? sub.density : sub.light_density,
                                         heavy ? "super-heavy column" : "mixed light column"));
  }
  detail::emit_overlap_rows(part, sub);
  detail::emit_columns(part);
  const auto cutoff = static_cast<std::uint32_t>(sub.n_sub);
  for (std::size_t q = 0; q < sub.inputs.size(); ++q) {
    if (sub.is_heavy(sub.inputs[q])) part.c0.push_back({cutoff, static_cast<std::uint32_t>(q), 1.0});
  }
  for (std::size_t r = 0; r < sub.outputs.size(); ++r) {
    part.d1.push_back({static_cast<std::uint32_t>(r), cutoff, -sub.zeta});
  }
  return part;
}

/// OR outputs (passthrough wires, copy combining): like output channels but
/// with zero bias, so a single active input already fills the channel.
inline PartialLayer compile_disjunction(const SubproblemPlan& sub, Rng& rng) {
  PartialLayer part;
  part.rows = sub.n_sub;
  part.bias.assign(sub.n_sub, 0.0);
  part.columns.resize(sub.inputs.size());
  for (std::size_t r = 0; r < sub.outputs.size(); ++r) {
    part.specs.push_back(build_column_spec(rng, sub.n_sub, sub.density, sub.outputs[r]));
    for (const auto j : sub.output_inputs[r]) {
      auto& col = part.columns[sub.position(j)];
      col = detail::unite(col, part.specs.back().support);
    }
    detail::emit_normalized_row(part, r, part.specs.back().support);
  }
  detail::emit_columns(part);
  return part;
}

inline PartialLayer compile_subproblem(const SubproblemPlan& sub, Rng& rng) {
  switch (sub.kind) {
    case SubproblemKind::LowInfluence: return compile_low_influence(sub, rng);
    case SubproblemKind::HighInfluence: return compile_high_influence(sub, rng);
    case SubproblemKind::MixedRegular: return compile_mixed_regular(sub, rng);
    case SubproblemKind::MixedSuper: return compile_mixed_super(sub, rng);
    case SubproblemKind::Disjunction: return compile_disjunction(sub, rng);
  }
  throw Error(ErrorKind::InvalidParams, "unknown subproblem kind");
}

// ---------------------------------------------------------------------------
// Input encodings

/// Layout of one block of a layer's input state.
struct EncodingBlockSpec {
  std::size_t rows = 0;
  double density = 0.0;
  std::vector<std::size_t> features;   // sorted
  std::vector<std::size_t> exclusive;  // sorted subset given private rows
};

struct EncodingBlock {
  std::size_t row_offset = 0;
  std::size_t rows = 0;
  std::size_t decode_offset = 0;
  std::vector<std::size_t> features;

  friend bool operator==(const EncodingBlock&, const EncodingBlock&) = default;
};

/// A layer's input encoding: the compression matrix that writes features
/// into the state, and a block-wise decoder that recovers one copy of each
/// feature per block it is routed to.
struct InputEncoding {
  ChannelMatrix matrix;   // rows x features
  ChannelMatrix decoder;  // decoded copies x rows
  std::vector<EncodingBlock> blocks;
  std::vector<std::size_t> decoded_feature;  // feature id of each decoded copy

  std::optional<std::size_t> decoded_index(std::size_t block, std::size_t feature) const {
    const auto& b = blocks[block];
    const auto it = std::lower_bound(b.features.begin(), b.features.end(), feature);
    if (it == b.features.end() || *it != feature) return std::nullopt;
    return b.decode_offset + static_cast<std::size_t>(it - b.features.begin());
  }
};

inline InputEncoding build_input_encoding(const std::vector<EncodingBlockSpec>& spec, std::size_t m_features,
                                          std::uint64_t seed, const std::string& tag) {
  InputEncoding enc;
  std::vector<Triplet> entries;
  std::vector<Triplet> dec_entries;
  std::size_t row_offset = 0;
  std::size_t decode_offset = 0;
  for (std::size_t b = 0; b < spec.size(); ++b) {
    const auto& s = spec[b];
    auto rng = Rng::derive(seed, tag + "/block" + std::to_string(b));
    const auto per_exclusive =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(s.density * static_cast<double>(s.rows))));
    const std::size_t exclusive_rows = per_exclusive * s.exclusive.size();
    const bool has_shared = s.features.size() > s.exclusive.size();
    if (exclusive_rows > s.rows || (has_shared && exclusive_rows >= s.rows)) {
      throw Error(ErrorKind::TooManySuperHeavies, "private rows for " + std::to_string(s.exclusive.size()) +
                                                      " inputs do not fit in a block of " + std::to_string(s.rows));
    }
    const std::size_t shared_rows = s.rows - exclusive_rows;
    std::size_t next_private = 0;
    for (std::size_t q = 0; q < s.features.size(); ++q) {
      const auto f = s.features[q];
      if (f >= m_features) throw Error(ErrorKind::IndexOutOfRange, "encoded feature out of range");
      std::vector<std::uint32_t> local;
      if (std::binary_search(s.exclusive.begin(), s.exclusive.end(), f)) {
        for (std::size_t k = 0; k < per_exclusive; ++k) local.push_back(static_cast<std::uint32_t>(next_private++));
      } else {
        for (auto r : sample_column(rng, shared_rows, s.density, tag)) {
          local.push_back(static_cast<std::uint32_t>(r + exclusive_rows));
        }
      }
      const double w = 1.0 / static_cast<double>(local.size());
      for (const auto r : local) {
        entries.push_back({static_cast<std::uint32_t>(row_offset + r), static_cast<std::uint32_t>(f), 1.0});
        dec_entries.push_back({static_cast<std::uint32_t>(decode_offset + q), static_cast<std::uint32_t>(row_offset + r), w});
      }
      enc.decoded_feature.push_back(f);
    }
    enc.blocks.push_back({row_offset, s.rows, decode_offset, s.features});
    row_offset += s.rows;
    decode_offset += s.features.size();
  }
  enc.matrix = {SparseMatrix::from_triplets(row_offset, m_features, std::move(entries)), ChannelKind::Compression, tag};
  enc.decoder = {SparseMatrix::from_triplets(decode_offset, row_offset, std::move(dec_entries)),
                 ChannelKind::Decompression, tag + "/decode"};
  return enc;
}

/// Whole-column decoder of an encoding; features with an empty column
/// decode to a zero row.
inline ChannelMatrix readout_decoder(const ChannelMatrix& encoding) {
  const auto t = encoding.matrix.transpose();
  std::vector<Triplet> entries;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    const auto cols = t.row_cols(i);
    for (const auto c : cols) {
      entries.push_back({static_cast<std::uint32_t>(i), c, 1.0 / static_cast<double>(cols.size())});
    }
  }
  return {SparseMatrix::from_triplets(t.rows(), t.cols(), std::move(entries)), ChannelKind::Decompression,
          encoding.seed_tag + "/decode"};
}

// ---------------------------------------------------------------------------
// Layer plans and compiled layers

enum class LayerKind { Plain, Copies, Combine };

inline std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Plain: return "plain";
    case LayerKind::Copies: return "copies";
    case LayerKind::Combine: return "combine";
  }
  return "?";
}

inline LayerKind layer_kind_from_string(std::string_view s) {
  if (s == "plain") return LayerKind::Plain;
  if (s == "copies") return LayerKind::Copies;
  if (s == "combine") return LayerKind::Combine;
  throw Error(ErrorKind::MalformedFile, "unknown layer kind '" + std::string(s) + "'");
}

enum class RuleOp { And, Or };

/// Monosemantic meaning of one output feature of a layer.
struct OutputRule {
  RuleOp op = RuleOp::And;
  std::vector<std::size_t> inputs;
  std::int64_t guard = -1;  // index into guards; the output is forced to 0 when the guard fires

  friend bool operator==(const OutputRule&, const OutputRule&) = default;
};

/// Detector row that counts the active inputs of a group of blocks and
/// suppresses all of their outputs once `fire_at` are active.
struct Guard {
  std::vector<std::size_t> blocks;
  std::vector<std::size_t> inputs;
  std::size_t fire_at = 3;

  friend bool operator==(const Guard&, const Guard&) = default;
};

/// Evaluates a layer's rules on a set of active input features.
inline std::vector<std::size_t> evaluate_rules(const std::vector<OutputRule>& rules, const std::vector<Guard>& guards,
                                               const std::vector<char>& active) {
  std::vector<char> fired(guards.size(), 0);
  for (std::size_t g = 0; g < guards.size(); ++g) {
    std::size_t count = 0;
    for (const auto j : guards[g].inputs) count += active[j] ? 1 : 0;
    fired[g] = count >= guards[g].fire_at;
  }
  std::vector<std::size_t> on;
  for (std::size_t i = 0; i < rules.size(); ++i) {
    const auto& rule = rules[i];
    bool value = rule.op == RuleOp::And;
    for (const auto j : rule.inputs) {
      if (rule.op == RuleOp::And) {
        value = value && active[j];
      } else {
        value = value || active[j];
      }
    }
    if (rule.guard >= 0 && fired[static_cast<std::size_t>(rule.guard)]) value = false;
    if (value) on.push_back(i);
  }
  return on;
}

struct LayerPlan {
  LayerKind kind = LayerKind::Plain;
  std::size_t m_in = 0;
  std::size_t m_out = 0;
  std::size_t v = 2;
  std::size_t n_sub = 0;
  double out_density = 0.0;
  std::vector<EncodingBlockSpec> encoding;
  std::vector<SubproblemPlan> blocks;
  std::vector<std::vector<std::size_t>> block_encodings;  // encoding blocks holding each block's inputs
  std::vector<Guard> guards;
  std::vector<OutputRule> rules;

  /// Output features grouped by the block that produces them; used to lay
  /// out the input of a combine layer and the network's final encoding.
  std::vector<EncodingBlockSpec> producer_partition() const {
    std::vector<EncodingBlockSpec> out;
    for (const auto& b : blocks) {
      EncodingBlockSpec s;
      s.rows = b.n_sub;
      s.density = out_density;
      s.features = b.outputs;
      std::sort(s.features.begin(), s.features.end());
      out.push_back(std::move(s));
    }
    return out;
  }
};

struct BlockMeta {
  SubproblemKind kind = SubproblemKind::LowInfluence;
  std::size_t hidden_offset = 0;
  std::size_t hidden_rows = 0;
  std::vector<std::size_t> outputs;
  std::vector<std::size_t> inputs;
  std::vector<std::size_t> encoding_blocks;
  double density = 0.0;
  double light_density = 0.0;

  friend bool operator==(const BlockMeta&, const BlockMeta&) = default;
};

struct LayerMeta {
  LayerKind kind = LayerKind::Plain;
  std::size_t m_in = 0;
  std::size_t m_out = 0;
  std::size_t v = 2;
  std::size_t n_sub = 0;
  std::uint64_t seed = 0;
  std::size_t attempt = 0;
  double zeta = 0.0;
  std::size_t guard_offset = 0;
  std::vector<BlockMeta> blocks;
  std::vector<EncodingBlock> input_blocks;
  std::vector<std::size_t> decoded_feature;
  std::vector<OutputRule> rules;
  std::vector<Guard> guards;

  friend bool operator==(const LayerMeta&, const LayerMeta&) = default;
};

/// One folded layer, x -> clip(w2 · clip(w1 · x + bias)), together with the
/// construction matrices it was folded from (w1 = c0·d0, w2 = c1·d1).
struct CompiledLayer {
  ChannelMatrix d0;
  ChannelMatrix c0;
  ChannelMatrix d1;
  ChannelMatrix c1;  // encoding of this layer's outputs in the next state
  SparseMatrix w1;
  SparseMatrix w2;
  std::vector<double> bias;
  LayerMeta meta;

  std::size_t input_dim() const { return w1.cols(); }
  std::size_t hidden_dim() const { return w1.rows(); }
  std::size_t output_dim() const { return w2.rows(); }

  friend bool operator==(const CompiledLayer&, const CompiledLayer&) = default;
};

/// Runs every sub-compiler of `plan`, places the blocks on disjoint hidden
/// rows, appends guard rows, and folds the result.
inline CompiledLayer assemble_layer(const LayerPlan& plan, const InputEncoding& input, const ChannelMatrix& output,
                                    const CodecParams& params, std::uint64_t seed, const std::string& tag) {
  if (output.cols() != plan.m_out) throw Error(ErrorKind::DimensionMismatch, "output encoding width differs from m'");
  CompiledLayer layer;
  auto& meta = layer.meta;
  meta.kind = plan.kind;
  meta.m_in = plan.m_in;
  meta.m_out = plan.m_out;
  meta.v = plan.v;
  meta.n_sub = plan.n_sub;
  meta.seed = seed;
  meta.input_blocks = input.blocks;
  meta.decoded_feature = input.decoded_feature;
  meta.rules = plan.rules;
  meta.guards = plan.guards;

  std::size_t hidden = 0;
  for (const auto& b : plan.blocks) hidden += b.n_sub + (b.kind == SubproblemKind::MixedSuper ? 1 : 0);
  meta.guard_offset = hidden;
  hidden += plan.guards.size();
  const double zeta = params.zeta > 0.0 ? params.zeta : 2.0 * static_cast<double>(hidden);
  meta.zeta = zeta;

  const std::size_t decoded = input.decoder.rows();
  std::vector<Triplet> c0;
  std::vector<Triplet> d1;
  layer.bias.assign(hidden, 0.0);

  auto lookup = [&](const std::vector<std::size_t>& enc_blocks, std::size_t feature) {
    for (const auto eb : enc_blocks) {
      if (auto idx = input.decoded_index(eb, feature)) return static_cast<std::uint32_t>(*idx);
    }
    throw Error(ErrorKind::DimensionMismatch, "input " + std::to_string(feature) + " is not routed to its block");
  };

  std::size_t offset = 0;
  for (std::size_t b = 0; b < plan.blocks.size(); ++b) {
    auto sub = plan.blocks[b];
    if (sub.kind == SubproblemKind::MixedSuper) sub.zeta = zeta;
    auto rng = Rng::derive(seed, tag + "/block" + std::to_string(b));
    const auto part = compile_subproblem(sub, rng);
    for (const auto& t : part.c0) {
      c0.push_back({static_cast<std::uint32_t>(offset + t.row), lookup(plan.block_encodings[b], sub.inputs[t.col]), t.value});
    }
    for (const auto& t : part.d1) {
      d1.push_back({static_cast<std::uint32_t>(sub.outputs[t.row]), static_cast<std::uint32_t>(offset + t.col), t.value});
    }
    std::copy(part.bias.begin(), part.bias.end(), layer.bias.begin() + static_cast<std::ptrdiff_t>(offset));
    meta.blocks.push_back({sub.kind, offset, part.rows, sub.outputs, sub.inputs, plan.block_encodings[b], sub.density,
                           sub.light_density});
    offset += part.rows;
  }

  for (std::size_t g = 0; g < plan.guards.size(); ++g) {
    const auto& guard = plan.guards[g];
    const auto row = static_cast<std::uint32_t>(meta.guard_offset + g);
    std::vector<std::size_t> enc_blocks;
    for (const auto b : guard.blocks) {
      enc_blocks.insert(enc_blocks.end(), plan.block_encodings[b].begin(), plan.block_encodings[b].end());
    }
    // Weight 2: one active short of firing reads -1, firing reads +1.
    for (const auto j : guard.inputs) c0.push_back({row, lookup(enc_blocks, j), 2.0});
    layer.bias[row] = -static_cast<double>(2 * guard.fire_at - 1);
    for (const auto b : guard.blocks) {
      for (const auto out : plan.blocks[b].outputs) d1.push_back({static_cast<std::uint32_t>(out), row, -zeta});
    }
  }

  layer.d0 = input.decoder;
  layer.c0 = {SparseMatrix::from_triplets(hidden, decoded, std::move(c0)), ChannelKind::ColumnSpecCompression,
              tag + "/c0"};
  layer.d1 = {SparseMatrix::from_triplets(plan.m_out, hidden, std::move(d1)), ChannelKind::Derived, tag + "/d1"};
  layer.c1 = output;
  layer.w1 = layer.c0.matrix.multiply(layer.d0.matrix);
  layer.w2 = layer.c1.matrix.multiply(layer.d1.matrix);
  return layer;
}

// ---------------------------------------------------------------------------
// Planning a plain 2-AND layer from a circuit

enum class Strategy {
  // High-Influence-AND for the whole circuit when the mean influence exceeds
  // ceil(m'^(1/4)), otherwise the four-way partition.
  Auto,
  Partition,
  HighInfluenceOnly,
};

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Auto: return "auto";
    case Strategy::Partition: return "partition";
    case Strategy::HighInfluenceOnly: return "high-influence";
  }
  return "?";
}

namespace detail {

inline SubproblemPlan make_block(SubproblemKind kind, const FeatureCircuit& c, const std::vector<std::size_t>& outs,
                                 const std::vector<std::size_t>& feature_ids, const InfluenceProfile& profile,
                                 std::size_t n_sub, std::size_t reference_mprime, const CodecParams& params) {
  SubproblemPlan sub;
  sub.kind = kind;
  sub.n_sub = n_sub;
  sub.light_threshold = profile.light_threshold;
  sub.super_threshold = profile.super_threshold;
  sub.gamma = params.gamma;
  for (const auto i : outs) {
    sub.outputs.push_back(feature_ids[i]);
    sub.output_inputs.push_back(c.outputs[i].inputs);
    sub.inputs.insert(sub.inputs.end(), c.outputs[i].inputs.begin(), c.outputs[i].inputs.end());
  }
  std::sort(sub.inputs.begin(), sub.inputs.end());
  sub.inputs.erase(std::unique(sub.inputs.begin(), sub.inputs.end()), sub.inputs.end());
  const double t = static_cast<double>(std::max<std::size_t>(1, profile.light_threshold));
  const double ref = static_cast<double>(std::max<std::size_t>(1, reference_mprime));
  switch (kind) {
    case SubproblemKind::LowInfluence:
    case SubproblemKind::Disjunction:
      sub.density = CodecParams::density_for(reference_mprime, n_sub, params.beta);
      break;
    case SubproblemKind::HighInfluence:
      sub.heavy = sub.inputs;
      sub.density = 1.0 / t;
      break;
    case SubproblemKind::MixedRegular:
      for (const auto j : sub.inputs) {
        if (profile.is_heavy(j)) sub.heavy.push_back(j);
      }
      sub.density = 1.0 / t;
      sub.light_density = 1.0 / t;
      break;
    case SubproblemKind::MixedSuper:
      for (const auto j : sub.inputs) {
        if (profile.labels[j] == InputClass::SuperHeavy) sub.heavy.push_back(j);
      }
      sub.density = std::min(1.0, 1.0 / params.gamma);
      sub.light_density = std::min(1.0, 2.0 * params.gamma / std::sqrt(ref));
      break;
  }
  return sub;
}

}  // namespace detail

/// Splits a circuit's outputs into blocks. `feature_ids` renames outputs
/// (identity for a plain layer, copy-local ids inside a copies layer).
/// `class_mprime` sets the light/heavy thresholds when `c` is one slice of a
/// wider layer.
inline std::vector<SubproblemPlan> plan_blocks(const FeatureCircuit& c, const std::vector<std::size_t>& outs_subset,
                                               const std::vector<std::size_t>& feature_ids, std::size_t n_sub,
                                               std::size_t reference_mprime, const CodecParams& params,
                                               Strategy strategy, std::size_t class_mprime = 0) {
  FeatureCircuit sub;
  sub.m = c.m;
  sub.v_max = c.v_max;
  for (const auto i : outs_subset) sub.outputs.push_back(c.outputs[i]);
  const auto profile = classify(sub, class_mprime);
  const auto part = partition_outputs(sub, profile);

  std::vector<std::size_t> sub_ids;
  for (const auto i : outs_subset) sub_ids.push_back(feature_ids[i]);

  std::vector<SubproblemPlan> blocks;
  auto add = [&](SubproblemKind kind, const std::vector<std::size_t>& outs) {
    if (!outs.empty()) {
      blocks.push_back(detail::make_block(kind, sub, outs, sub_ids, profile, n_sub, reference_mprime, params));
    }
  };
  const bool all_high =
      strategy == Strategy::HighInfluenceOnly ||
      (strategy == Strategy::Auto && profile.t_bar > static_cast<double>(profile.light_threshold));
  if (all_high) {
    std::vector<std::size_t> ands;
    for (std::size_t i = 0; i < sub.outputs.size(); ++i) {
      if (sub.outputs[i].op == GateOp::And) ands.push_back(i);
    }
    add(SubproblemKind::HighInfluence, ands);
  } else {
    add(SubproblemKind::LowInfluence, part.double_light);
    add(SubproblemKind::HighInfluence, part.double_heavy);
    add(SubproblemKind::MixedRegular, part.mixed_regular);
    add(SubproblemKind::MixedSuper, part.mixed_super);
  }
  add(SubproblemKind::Disjunction, part.passthrough);
  return blocks;
}

/// Every block encodes its routed inputs in its own rows; super-heavy inputs
/// of a mixed-super block get private rows.
inline EncodingBlockSpec routed_encoding(const SubproblemPlan& sub, double density) {
  EncodingBlockSpec s;
  s.rows = sub.n_sub;
  s.density = density;
  s.features = sub.inputs;
  if (sub.kind == SubproblemKind::MixedSuper) s.exclusive = sub.heavy;
  return s;
}

inline LayerPlan plan_plain_layer(const FeatureCircuit& c, const CodecParams& params, Strategy strategy,
                                  std::size_t v) {
  c.validate();
  if (c.outputs.empty()) throw Error(ErrorKind::InvalidParams, "circuit has no outputs");
  LayerPlan plan;
  plan.kind = LayerKind::Plain;
  plan.m_in = c.m;
  plan.m_out = c.m_prime();
  plan.v = v;
  plan.n_sub = CodecParams::neurons_for(c.m_prime(), params.alpha);
  plan.out_density = CodecParams::density_for(c.m_prime(), plan.n_sub, params.beta);
  std::vector<std::size_t> all(c.m_prime());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  plan.blocks = plan_blocks(c, all, all, plan.n_sub, c.m_prime(), params, strategy);
  for (std::size_t b = 0; b < plan.blocks.size(); ++b) {
    plan.encoding.push_back(routed_encoding(plan.blocks[b], plan.out_density));
    plan.block_encodings.push_back({b});
  }
  for (const auto& o : c.outputs) {
    plan.rules.push_back({o.op == GateOp::And ? RuleOp::And : RuleOp::Or, o.inputs, -1});
  }
  return plan;
}

}  // namespace superpose
