#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "superpose/error.hpp"
#include "superpose/rng.hpp"
#include "superpose/sparse.hpp"

namespace superpose {

enum class ChannelKind {
  Compression,
  Decompression,
  ColumnSpecCompression,
  OutputDecompression,
  // Weighted construction matrices (C1'·D1 style products, cutoff columns).
  Derived,
};

inline std::string_view to_string(ChannelKind k) {
  switch (k) {
    case ChannelKind::Compression: return "compression";
    case ChannelKind::Decompression: return "decompression";
    case ChannelKind::ColumnSpecCompression: return "column-spec-compression";
    case ChannelKind::OutputDecompression: return "output-decompression";
    case ChannelKind::Derived: return "derived";
  }
  return "?";
}

inline ChannelKind channel_kind_from_string(std::string_view s) {
  if (s == "compression") return ChannelKind::Compression;
  if (s == "decompression") return ChannelKind::Decompression;
  if (s == "column-spec-compression") return ChannelKind::ColumnSpecCompression;
  if (s == "output-decompression") return ChannelKind::OutputDecompression;
  if (s == "derived") return ChannelKind::Derived;
  throw Error(ErrorKind::MalformedFile, "unknown channel kind '" + std::string(s) + "'");
}

/// A construction matrix tagged with its role and the PRNG label it came from.
struct ChannelMatrix {
  SparseMatrix matrix;
  ChannelKind kind = ChannelKind::Compression;
  std::string seed_tag;

  std::size_t rows() const { return matrix.rows(); }
  std::size_t cols() const { return matrix.cols(); }

  friend bool operator==(const ChannelMatrix&, const ChannelMatrix&) = default;
};

/// Sparse binary n-vector used as the channel of one output.
struct ColumnSpec {
  std::vector<std::uint32_t> support;  // sorted row indices holding a 1
  std::size_t output_index = 0;
};

struct SuperposedState {
  std::vector<double> values;
  std::string encoding;  // seed_tag of the matrix that defines the decode

  std::size_t size() const { return values.size(); }
};

/// Size and density knobs. The O(.) constants are explicit: n =
/// ceil(alpha * sqrt(m') * log2(m'+1)) and p = beta * log2(m'+1) / n.
struct CodecParams {
  std::size_t n = 1;
  double p = 1.0;
  double alpha = 2.0;
  double beta = 1.0;
  double gamma = 8.0;
  double zeta = 0.0;  // cutoff magnitude; 0 selects 2n
  double epsilon = 0.25;
  std::uint64_t seed = 0;

  static std::size_t neurons_for(std::size_t m_prime, double alpha) {
    const double mp = static_cast<double>(m_prime);
    const double n = std::ceil(alpha * std::sqrt(mp) * std::log2(mp + 1.0));
    return n < 1.0 ? 1 : static_cast<std::size_t>(n);
  }

  static double density_for(std::size_t m_prime, std::size_t n, double beta) {
    const double p = beta * std::log2(static_cast<double>(m_prime) + 1.0) / static_cast<double>(n);
    return std::clamp(p, 0.0, 1.0);
  }

  static CodecParams for_features(std::size_t m_prime, double alpha = 2.0, double beta = 1.0,
                                  std::uint64_t seed = 0) {
    CodecParams params;
    params.alpha = alpha;
    params.beta = beta;
    params.seed = seed;
    params.n = neurons_for(m_prime, alpha);
    params.p = density_for(m_prime, params.n, beta);
    return params;
  }

  friend bool operator==(const CodecParams&, const CodecParams&) = default;

  /// Checks the user-facing constants; a zero density is allowed and simply
  /// makes every construction attempt fail.
  void validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0)) throw Error(ErrorKind::InvalidParams, "alpha and beta must be >= 0");
    if (!(gamma > 0.0)) throw Error(ErrorKind::InvalidParams, "gamma must be > 0");
    if (!(zeta >= 0.0)) throw Error(ErrorKind::InvalidParams, "zeta must be >= 0");
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::InvalidParams, "p must lie in [0, 1]");
    if (!(epsilon > 0.0 && epsilon < 0.5)) throw Error(ErrorKind::InvalidParams, "epsilon must lie in (0, 1/2)");
    if (n < 1) throw Error(ErrorKind::InvalidParams, "n must be at least 1");
  }
};

inline constexpr int kMaxResamples = 64;

/// One Bernoulli(p) column over `rows` rows; all-zero draws are redrawn up
/// to 64 times before giving up.
inline std::vector<std::uint32_t> sample_column(Rng& rng, std::size_t rows, double p, std::string_view what) {
  std::vector<std::uint32_t> support;
  for (int attempt = 0; attempt < kMaxResamples; ++attempt) {
    support.clear();
    if (p >= 1.0) {
      for (std::size_t r = 0; r < rows; ++r) support.push_back(static_cast<std::uint32_t>(r));
    } else if (p > 0.0) {
      // Geometric gaps between successive ones.
      const double log_q = std::log1p(-p);
      double r = -1.0;
      while (true) {
        r += 1.0 + std::floor(std::log(1.0 - rng.uniform()) / log_q);
        if (r >= static_cast<double>(rows)) break;
        support.push_back(static_cast<std::uint32_t>(r));
      }
    }
    if (!support.empty()) return support;
  }
  throw Error(ErrorKind::EmptyColumn, std::string(what) + ": column still empty after 64 resamples");
}

inline ColumnSpec build_column_spec(Rng& rng, std::size_t rows, double p, std::size_t output_index) {
  return {sample_column(rng, rows, p, "column specification"), output_index};
}

/// n x m_cols binary matrix with i.i.d. Bernoulli(p) entries, a pure
/// function of (params.seed, tag, n, p).
inline ChannelMatrix build_compression(std::size_t m_cols, const CodecParams& params, std::string_view tag) {
  auto rng = Rng::derive(params.seed, tag);
  std::vector<Triplet> entries;
  for (std::size_t j = 0; j < m_cols; ++j) {
    for (const auto r : sample_column(rng, params.n, params.p, tag)) {
      entries.push_back({r, static_cast<std::uint32_t>(j), 1.0});
    }
  }
  return {SparseMatrix::from_triplets(params.n, m_cols, std::move(entries)), ChannelKind::Compression,
          std::string(tag)};
}

/// Approximate left inverse: the transpose of c with each row's ones
/// replaced by 1/(row support size).
inline ChannelMatrix build_decompression(const ChannelMatrix& c) {
  if (c.kind != ChannelKind::Compression && c.kind != ChannelKind::ColumnSpecCompression) {
    throw Error(ErrorKind::DimensionMismatch, "decompression needs a compression matrix");
  }
  const auto t = c.matrix.transpose();
  std::vector<Triplet> entries;
  entries.reserve(t.nnz());
  for (std::size_t i = 0; i < t.rows(); ++i) {
    const auto cols = t.row_cols(i);
    if (cols.empty()) throw Error(ErrorKind::EmptyColumn, "column " + std::to_string(i) + " has no ones");
    const double w = 1.0 / static_cast<double>(cols.size());
    for (const auto col : cols) entries.push_back({static_cast<std::uint32_t>(i), col, w});
  }
  return {SparseMatrix::from_triplets(t.rows(), t.cols(), std::move(entries)),
          c.kind == ChannelKind::Compression ? ChannelKind::Decompression : ChannelKind::OutputDecompression,
          c.seed_tag + "/decode"};
}

// ---------------------------------------------------------------------------
// Clipped ReLU: g(relu(x - 1/4)) with g(z) = 1 - relu(-2z + 1).

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

inline double clipped_relu(double x) { return 1.0 - relu(-2.0 * relu(x - 0.25) + 1.0); }

inline bool is_mid_range(double x) { return x >= 0.25 && x <= 0.75; }

enum class ClipMode { Unchecked, Checked };

inline void clip_in_place(std::span<double> values, ClipMode mode) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (mode == ClipMode::Checked && is_mid_range(values[i])) {
      throw Error(ErrorKind::MidRangeValue,
                  "entry " + std::to_string(i) + " = " + std::to_string(values[i]) + " lies in [1/4, 3/4]");
    }
    values[i] = clipped_relu(values[i]);
  }
}

inline SuperposedState clipped_relu(SuperposedState x, ClipMode mode = ClipMode::Checked) {
  clip_in_place(x.values, mode);
  return x;
}

// ---------------------------------------------------------------------------
// Compress / decode

inline SuperposedState compress(std::span<const double> y, const ChannelMatrix& c) {
  if (y.size() != c.cols()) throw Error(ErrorKind::DimensionMismatch, "monosemantic vector length differs from m");
  return {c.matrix.multiply(y), c.seed_tag};
}

inline std::vector<double> decode(const SuperposedState& x, const ChannelMatrix& d) {
  if (x.size() != d.cols()) throw Error(ErrorKind::DimensionMismatch, "state length differs from decoder columns");
  return d.matrix.multiply(x.values);
}

/// Thresholded view of a decoded vector: >= 3/4 reads as 1, <= 1/4 as 0,
/// anything in between is reported as ambiguous.
struct Readout {
  std::vector<std::size_t> ones;
  std::vector<std::size_t> ambiguous;

  bool clean() const { return ambiguous.empty(); }
  /// True when the view is unambiguous and its ones are exactly `expected` (sorted).
  bool equals(std::span<const std::size_t> expected) const {
    return clean() && std::equal(ones.begin(), ones.end(), expected.begin(), expected.end());
  }
};

inline Readout threshold(std::span<const double> decoded) {
  Readout r;
  for (std::size_t i = 0; i < decoded.size(); ++i) {
    if (decoded[i] >= 0.75) {
      r.ones.push_back(i);
    } else if (decoded[i] > 0.25) {
      r.ambiguous.push_back(i);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Permutation in superposition: x' = clip(C' P D x), folded into one n x n matrix.

struct PermutationLayer {
  ChannelMatrix fresh;  // C'
  ChannelMatrix fresh_decoder;
  SparseMatrix folded;  // C' P D
};

/// `perm[j]` is the destination of feature j.
inline PermutationLayer build_permutation_layer(const ChannelMatrix& decoder, std::span<const std::size_t> perm,
                                                const CodecParams& params, std::string_view tag) {
  const std::size_t m = decoder.rows();
  if (perm.size() != m) throw Error(ErrorKind::DimensionMismatch, "permutation length differs from m");
  std::vector<char> hit(m, 0);
  std::vector<Triplet> p_entries;
  for (std::size_t j = 0; j < m; ++j) {
    if (perm[j] >= m || hit[perm[j]]) throw Error(ErrorKind::InvalidParams, "not a permutation");
    hit[perm[j]] = 1;
    p_entries.push_back({static_cast<std::uint32_t>(perm[j]), static_cast<std::uint32_t>(j), 1.0});
  }
  PermutationLayer layer;
  layer.fresh = build_compression(m, params, tag);
  layer.fresh_decoder = build_decompression(layer.fresh);
  const auto p = SparseMatrix::from_triplets(m, m, std::move(p_entries));
  layer.folded = layer.fresh.matrix.multiply(p.multiply(decoder.matrix));
  return layer;
}

inline SuperposedState permute_in_superposition(const SuperposedState& x, const PermutationLayer& layer,
                                                ClipMode mode = ClipMode::Checked) {
  if (x.size() != layer.folded.cols()) throw Error(ErrorKind::DimensionMismatch, "state length differs from n");
  SuperposedState out{layer.folded.multiply(x.values), layer.fresh.seed_tag};
  clip_in_place(out.values, mode);
  return out;
}

/// Binary OR of the columns of `c` selected by `active`.
inline SuperposedState encode_columns(const ChannelMatrix& c, std::span<const std::size_t> active) {
  std::vector<double> y(c.cols(), 0.0);
  for (const auto j : active) {
    if (j >= c.cols()) throw Error(ErrorKind::IndexOutOfRange, "feature " + std::to_string(j) + " out of range");
    y[j] = 1.0;
  }
  auto x = compress(y, c);
  for (auto& v : x.values) v = v > 0.0 ? 1.0 : 0.0;
  return x;
}

}  // namespace superpose
