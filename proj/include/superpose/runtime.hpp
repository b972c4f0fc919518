#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include <zlib.h>

#include "json.hpp"
#include "superpose/circuit.hpp"
#include "superpose/codec.hpp"
#include "superpose/compiler.hpp"
#include "superpose/error.hpp"
#include "superpose/sparse.hpp"

namespace superpose {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::string_view kMagic = "SUPERPOSE-NET\n";

/// A chain of compiled layers together with the encoding of its input
/// features and the decoder of its final state.
struct Network {
  std::uint32_t format_version = kFormatVersion;
  std::size_t m = 0;
  std::size_t m_out = 0;
  std::size_t v_max = 2;
  std::vector<FeatureCircuit> circuits;
  CodecParams params;
  std::string strategy = "auto";
  double copy_c = 0.0;  // 0 when no copies layer is present
  ChannelMatrix input_encoding;
  ChannelMatrix output_decoding;
  std::vector<CompiledLayer> layers;

  std::string digest() const { return superpose::digest(circuits); }
  std::size_t state_dim() const { return input_encoding.rows(); }

  friend bool operator==(const Network&, const Network&) = default;
};

inline SuperposedState encode_input(std::span<const std::size_t> active, const Network& net) {
  std::vector<std::size_t> sorted(active.begin(), active.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  if (sorted.size() > net.v_max) {
    throw Error(ErrorKind::TooManyActive,
                std::to_string(sorted.size()) + " active inputs exceed vmax=" + std::to_string(net.v_max));
  }
  return encode_columns(net.input_encoding, sorted);
}

/// Pre-clip values seen at the two ReLU boundaries of one layer.
struct LayerTrace {
  std::vector<double> hidden;  // w1·x + b
  std::vector<double> output;  // w2·y
};

/// Column-gather evaluator for one layer: the cost is the nonzeros in the
/// columns of the active state entries, not n².
class LayerKernel {
 public:
  explicit LayerKernel(const CompiledLayer& layer)
      : layer_(&layer), w1t_(layer.w1.transpose()), w2t_(layer.w2.transpose()) {}

  const CompiledLayer& layer() const { return *layer_; }

  std::vector<double> step(std::span<const double> x, ClipMode mode, LayerTrace* trace = nullptr) const {
    if (x.size() != layer_->input_dim()) throw Error(ErrorKind::DimensionMismatch, "state length differs from layer input");
    std::vector<double> h = layer_->bias;
    gather(w1t_, x, h);
    if (trace) trace->hidden = h;
    clip_in_place(h, mode);
    std::vector<double> z(layer_->output_dim(), 0.0);
    gather(w2t_, h, z);
    if (trace) trace->output = z;
    clip_in_place(z, mode);
    return z;
  }

 private:
  static void gather(const SparseMatrix& t, std::span<const double> x, std::vector<double>& acc) {
    for (std::size_t c = 0; c < x.size(); ++c) {
      const double xc = x[c];
      if (xc == 0.0) continue;
      const auto rows = t.row_cols(c);
      const auto vals = t.row_values(c);
      for (std::size_t k = 0; k < rows.size(); ++k) acc[rows[k]] += vals[k] * xc;
    }
  }

  const CompiledLayer* layer_;
  SparseMatrix w1t_;
  SparseMatrix w2t_;
};

class ForwardEngine {
 public:
  explicit ForwardEngine(const Network& net) : net_(&net) {
    for (const auto& layer : net.layers) kernels_.emplace_back(layer);
  }

  const Network& network() const { return *net_; }

  std::vector<double> step(std::size_t l, std::span<const double> x, ClipMode mode, LayerTrace* trace = nullptr) const {
    return kernels_[l].step(x, mode, trace);
  }

  SuperposedState forward(const SuperposedState& x0, ClipMode mode, std::vector<LayerTrace>* trace = nullptr) const {
    std::vector<double> x = x0.values;
    if (trace) trace->assign(net_->layers.size(), {});
    for (std::size_t l = 0; l < kernels_.size(); ++l) x = step(l, x, mode, trace ? &(*trace)[l] : nullptr);
    return {std::move(x), net_->layers.empty() ? x0.encoding : net_->layers.back().c1.seed_tag};
  }

  Readout readout(const SuperposedState& x) const { return threshold(decode(x, net_->output_decoding)); }

  /// encode -> forward -> decode -> threshold.
  Readout run(std::span<const std::size_t> active, ClipMode mode = ClipMode::Unchecked) const {
    return readout(forward(encode_input(active, *net_), mode));
  }

 private:
  const Network* net_;
  std::vector<LayerKernel> kernels_;
};

inline SuperposedState forward(const Network& net, const SuperposedState& x0, ClipMode mode = ClipMode::Unchecked) {
  return ForwardEngine(net).forward(x0, mode);
}

/// Reference path with dense folded matrices.
inline SuperposedState forward_dense(const Network& net, const SuperposedState& x0, ClipMode mode = ClipMode::Unchecked) {
  std::vector<double> x = x0.values;
  for (const auto& layer : net.layers) {
    auto h = dense_multiply(layer.w1.to_dense(), layer.w1.rows(), layer.w1.cols(), x);
    for (std::size_t r = 0; r < h.size(); ++r) h[r] += layer.bias[r];
    clip_in_place(h, mode);
    x = dense_multiply(layer.w2.to_dense(), layer.w2.rows(), layer.w2.cols(), h);
    clip_in_place(x, mode);
  }
  return {std::move(x), x0.encoding};
}

/// One layer evaluated from its unfolded factors: C1'·(D1·clip(C0·(D0·x) + b)).
inline std::vector<double> step_unfolded(const CompiledLayer& layer, std::span<const double> x, ClipMode mode,
                                         LayerTrace* trace = nullptr) {
  auto h = layer.c0.matrix.multiply(layer.d0.matrix.multiply(x));
  for (std::size_t r = 0; r < h.size(); ++r) h[r] += layer.bias[r];
  if (trace) trace->hidden = h;
  clip_in_place(h, mode);
  auto z = layer.c1.matrix.multiply(layer.d1.matrix.multiply(h));
  if (trace) trace->output = z;
  clip_in_place(z, mode);
  return z;
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

using nlohmann::json;

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(std::string_view data, std::size_t pos) : data_(data), pos_(pos) {}
  std::uint64_t read(int bytes) {
    if (pos_ + static_cast<std::size_t>(bytes) > data_.size()) throw Error(ErrorKind::MalformedFile, "truncated payload");
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_++])) << (8 * i);
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(read(4)); }
  std::uint64_t u64() { return read(8); }
  double f64() { return std::bit_cast<double>(read(8)); }
  std::size_t pos() const { return pos_; }

 private:
  std::string_view data_;
  std::size_t pos_;
};

inline std::uint32_t crc_of(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

inline json params_json(const CodecParams& p) {
  return {{"n", p.n},         {"p", p.p},         {"alpha", p.alpha},     {"beta", p.beta},
          {"gamma", p.gamma}, {"zeta", p.zeta},   {"epsilon", p.epsilon}, {"seed", p.seed}};
}

inline CodecParams params_from(const json& j) {
  CodecParams p;
  p.n = j.at("n").get<std::size_t>();
  p.p = j.at("p").get<double>();
  p.alpha = j.at("alpha").get<double>();
  p.beta = j.at("beta").get<double>();
  p.gamma = j.at("gamma").get<double>();
  p.zeta = j.at("zeta").get<double>();
  p.epsilon = j.at("epsilon").get<double>();
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

inline json meta_json(const LayerMeta& m) {
  json blocks = json::array();
  for (const auto& b : m.blocks) {
    blocks.push_back({{"kind", to_string(b.kind)},
                      {"hidden_offset", b.hidden_offset},
                      {"hidden_rows", b.hidden_rows},
                      {"outputs", b.outputs},
                      {"inputs", b.inputs},
                      {"encoding_blocks", b.encoding_blocks},
                      {"density", b.density},
                      {"light_density", b.light_density}});
  }
  json enc = json::array();
  for (const auto& b : m.input_blocks) {
    enc.push_back({{"row_offset", b.row_offset}, {"rows", b.rows}, {"decode_offset", b.decode_offset}, {"features", b.features}});
  }
  json rules = json::array();
  for (const auto& r : m.rules) {
    rules.push_back({{"op", r.op == RuleOp::And ? "and" : "or"}, {"inputs", r.inputs}, {"guard", r.guard}});
  }
  json guards = json::array();
  for (const auto& g : m.guards) guards.push_back({{"blocks", g.blocks}, {"inputs", g.inputs}, {"fire_at", g.fire_at}});
  return {{"kind", to_string(m.kind)},
          {"m_in", m.m_in},
          {"m_out", m.m_out},
          {"v", m.v},
          {"n_sub", m.n_sub},
          {"seed", m.seed},
          {"attempt", m.attempt},
          {"zeta", m.zeta},
          {"guard_offset", m.guard_offset},
          {"blocks", blocks},
          {"input_blocks", enc},
          {"decoded_feature", m.decoded_feature},
          {"rules", rules},
          {"guards", guards}};
}

inline LayerMeta meta_from(const json& j) {
  LayerMeta m;
  m.kind = layer_kind_from_string(j.at("kind").get<std::string>());
  m.m_in = j.at("m_in").get<std::size_t>();
  m.m_out = j.at("m_out").get<std::size_t>();
  m.v = j.at("v").get<std::size_t>();
  m.n_sub = j.at("n_sub").get<std::size_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.attempt = j.at("attempt").get<std::size_t>();
  m.zeta = j.at("zeta").get<double>();
  m.guard_offset = j.at("guard_offset").get<std::size_t>();
  for (const auto& b : j.at("blocks")) {
    m.blocks.push_back({subproblem_kind_from_string(b.at("kind").get<std::string>()),
                        b.at("hidden_offset").get<std::size_t>(), b.at("hidden_rows").get<std::size_t>(),
                        b.at("outputs").get<std::vector<std::size_t>>(), b.at("inputs").get<std::vector<std::size_t>>(),
                        b.at("encoding_blocks").get<std::vector<std::size_t>>(), b.at("density").get<double>(),
                        b.at("light_density").get<double>()});
  }
  for (const auto& b : j.at("input_blocks")) {
    m.input_blocks.push_back({b.at("row_offset").get<std::size_t>(), b.at("rows").get<std::size_t>(),
                              b.at("decode_offset").get<std::size_t>(), b.at("features").get<std::vector<std::size_t>>()});
  }
  m.decoded_feature = j.at("decoded_feature").get<std::vector<std::size_t>>();
  for (const auto& r : j.at("rules")) {
    const auto op = r.at("op").get<std::string>();
    if (op != "and" && op != "or") throw Error(ErrorKind::MalformedFile, "unknown rule op '" + op + "'");
    m.rules.push_back({op == "and" ? RuleOp::And : RuleOp::Or, r.at("inputs").get<std::vector<std::size_t>>(),
                       r.at("guard").get<std::int64_t>()});
  }
  for (const auto& g : j.at("guards")) {
    m.guards.push_back({g.at("blocks").get<std::vector<std::size_t>>(), g.at("inputs").get<std::vector<std::size_t>>(),
                        g.at("fire_at").get<std::size_t>()});
  }
  return m;
}

inline ChannelMatrix bias_matrix(const CompiledLayer& layer, const std::string& tag) {
  std::vector<Triplet> t;
  for (std::size_t r = 0; r < layer.bias.size(); ++r) {
    if (layer.bias[r] != 0.0) t.push_back({static_cast<std::uint32_t>(r), 0, layer.bias[r]});
  }
  return {SparseMatrix::from_triplets(layer.bias.size(), 1, std::move(t)), ChannelKind::Derived, tag};
}

}  // namespace detail

/// Byte image of a network: magic line, u64 header length, JSON header,
/// binary matrix section, CRC-32 of everything before it.
inline std::string serialize(const Network& net) {
  using detail::json;
  struct Entry {
    std::string name;
    const SparseMatrix* matrix;
    ChannelKind kind;
    std::string tag;
  };
  std::vector<Entry> entries;
  std::vector<ChannelMatrix> biases;
  biases.reserve(net.layers.size());
  entries.push_back({"input_encoding", &net.input_encoding.matrix, net.input_encoding.kind, net.input_encoding.seed_tag});
  entries.push_back({"output_decoding", &net.output_decoding.matrix, net.output_decoding.kind, net.output_decoding.seed_tag});
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    const auto p = "layer" + std::to_string(l) + "/";
    biases.push_back(detail::bias_matrix(layer, p + "bias"));
    entries.push_back({p + "d0", &layer.d0.matrix, layer.d0.kind, layer.d0.seed_tag});
    entries.push_back({p + "c0", &layer.c0.matrix, layer.c0.kind, layer.c0.seed_tag});
    entries.push_back({p + "d1", &layer.d1.matrix, layer.d1.kind, layer.d1.seed_tag});
    entries.push_back({p + "c1", &layer.c1.matrix, layer.c1.kind, layer.c1.seed_tag});
    entries.push_back({p + "w1", &layer.w1, ChannelKind::Derived, p + "w1"});
    entries.push_back({p + "w2", &layer.w2, ChannelKind::Derived, p + "w2"});
    entries.push_back({p + "bias", &biases.back().matrix, ChannelKind::Derived, p + "bias"});
  }

  json header;
  header["format_version"] = net.format_version;
  header["m"] = net.m;
  header["m_out"] = net.m_out;
  header["v_max"] = net.v_max;
  header["digest"] = net.digest();
  header["strategy"] = net.strategy;
  header["copy_c"] = net.copy_c;
  header["params"] = detail::params_json(net.params);
  json circuits = json::array();
  for (const auto& c : net.circuits) circuits.push_back(to_text(c));
  header["circuits"] = circuits;
  json dir = json::array();
  for (const auto& e : entries) {
    dir.push_back({{"name", e.name},
                   {"kind", to_string(e.kind)},
                   {"seed_tag", e.tag},
                   {"rows", e.matrix->rows()},
                   {"cols", e.matrix->cols()},
                   {"nnz", e.matrix->nnz()}});
  }
  header["matrices"] = dir;
  json layers = json::array();
  for (const auto& layer : net.layers) layers.push_back(detail::meta_json(layer.meta));
  header["layers"] = layers;

  const auto text = header.dump();
  std::string out(kMagic);
  detail::put_u64(out, text.size());
  out += text;
  for (const auto& e : entries) {
    detail::put_u32(out, static_cast<std::uint32_t>(e.matrix->rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(e.matrix->cols()));
    detail::put_u64(out, e.matrix->nnz());
    for (const auto& t : e.matrix->triplets()) {
      detail::put_u32(out, t.row);
      detail::put_u32(out, t.col);
      detail::put_u64(out, std::bit_cast<std::uint64_t>(t.value));
    }
  }
  detail::put_u32(out, detail::crc_of(out));
  return out;
}

inline Network deserialize(std::string_view bytes) {
  using detail::json;
  if (bytes.size() < kMagic.size() + 12) throw Error(ErrorKind::MalformedFile, "file too short");
  const auto body = bytes.substr(0, bytes.size() - 4);
  detail::Reader tail(bytes, bytes.size() - 4);
  if (tail.u32() != detail::crc_of(body)) throw Error(ErrorKind::ChecksumMismatch, "stored checksum does not match contents");
  if (body.substr(0, kMagic.size()) != kMagic) throw Error(ErrorKind::MalformedFile, "bad magic line");

  detail::Reader reader(body, kMagic.size());
  const auto header_len = reader.u64();
  if (header_len > body.size() - reader.pos()) throw Error(ErrorKind::MalformedFile, "header length exceeds file");
  json header;
  try {
    header = json::parse(body.substr(reader.pos(), header_len));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedFile, std::string("header is not valid JSON: ") + e.what());
  }
  if (!header.is_object() || !header.contains("format_version") || !header["format_version"].is_number_unsigned()) {
    throw Error(ErrorKind::MalformedFile, "header lacks format_version");
  }
  const auto version = header["format_version"].get<std::uint32_t>();
  if (version != kFormatVersion) {
    throw Error(ErrorKind::VersionMismatch, "file has format_version " + std::to_string(version) + ", this build reads " +
                                                std::to_string(kFormatVersion));
  }

  Network net;
  detail::Reader payload(body, reader.pos() + header_len);
  try {
    net.m = header.at("m").get<std::size_t>();
    net.m_out = header.at("m_out").get<std::size_t>();
    net.v_max = header.at("v_max").get<std::size_t>();
    net.strategy = header.at("strategy").get<std::string>();
    net.copy_c = header.at("copy_c").get<double>();
    net.params = detail::params_from(header.at("params"));
    for (const auto& c : header.at("circuits")) net.circuits.push_back(parse_circuit(c.get<std::string>()));

    const auto& dir = header.at("matrices");
    const auto& metas = header.at("layers");
    if (dir.size() != 2 + 7 * metas.size()) throw Error(ErrorKind::MalformedFile, "matrix directory size mismatch");
    auto next = [&](std::size_t index, std::string_view name) {
      const auto& e = dir.at(index);
      if (e.at("name").get<std::string>() != name) throw Error(ErrorKind::MalformedFile, "unexpected matrix " + std::string(name));
      const std::size_t rows = payload.u32();
      const std::size_t cols = payload.u32();
      const std::size_t nnz = payload.u64();
      if (rows != e.at("rows").get<std::size_t>() || cols != e.at("cols").get<std::size_t>() ||
          nnz != e.at("nnz").get<std::size_t>()) {
        throw Error(ErrorKind::MalformedFile, "dimensions of " + std::string(name) + " disagree with the directory");
      }
      std::vector<Triplet> t(nnz);
      for (auto& x : t) {
        x.row = payload.u32();
        x.col = payload.u32();
        x.value = payload.f64();
      }
      auto matrix = SparseMatrix::from_triplets(rows, cols, std::move(t));
      if (matrix.nnz() != nnz) throw Error(ErrorKind::MalformedFile, std::string(name) + " has duplicate or zero entries");
      return ChannelMatrix{std::move(matrix), channel_kind_from_string(e.at("kind").get<std::string>()),
                           e.at("seed_tag").get<std::string>()};
    };
    net.input_encoding = next(0, "input_encoding");
    net.output_decoding = next(1, "output_decoding");
    for (std::size_t l = 0; l < metas.size(); ++l) {
      const auto p = "layer" + std::to_string(l) + "/";
      const std::size_t base = 2 + 7 * l;
      CompiledLayer layer;
      layer.d0 = next(base, p + "d0");
      layer.c0 = next(base + 1, p + "c0");
      layer.d1 = next(base + 2, p + "d1");
      layer.c1 = next(base + 3, p + "c1");
      layer.w1 = next(base + 4, p + "w1").matrix;
      layer.w2 = next(base + 5, p + "w2").matrix;
      const auto bias = next(base + 6, p + "bias").matrix;
      if (bias.cols() != 1) throw Error(ErrorKind::MalformedFile, "bias must be a column");
      layer.bias.assign(bias.rows(), 0.0);
      for (const auto& t : bias.triplets()) layer.bias[t.row] = t.value;
      layer.meta = detail::meta_from(metas.at(l));
      net.layers.push_back(std::move(layer));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedFile, std::string("header field error: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::MalformedFile) throw;
    throw Error(ErrorKind::MalformedFile, e.what());
  }
  if (payload.pos() != body.size()) throw Error(ErrorKind::MalformedFile, "trailing bytes after matrices");

  // Structural checks.
  std::size_t dim = net.input_encoding.rows();
  if (net.input_encoding.cols() != net.m) throw Error(ErrorKind::MalformedFile, "input encoding width differs from m");
  for (const auto& layer : net.layers) {
    if (layer.w1.cols() != dim || layer.w1.rows() != layer.bias.size() || layer.w2.cols() != layer.w1.rows()) {
      throw Error(ErrorKind::MalformedFile, "layer dimensions do not chain");
    }
    dim = layer.w2.rows();
  }
  if (net.output_decoding.cols() != dim || net.output_decoding.rows() != net.m_out) {
    throw Error(ErrorKind::MalformedFile, "output decoding does not match the final state");
  }
  return net;
}

inline void save(const Network& net, const std::string& path) {
  const auto bytes = serialize(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::IoError, "write to '" + path + "' failed");
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Network load(const std::string& path) { return deserialize(read_file(path)); }

}  // namespace superpose
