#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstddef>
#include <cstdint>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

#include "json.hpp"
#include "superpose/error.hpp"

namespace superpose {

enum class GateOp {
  And,
  // Wire copy of a single input; only produced by k-AND lowering.
  Pass,
};

struct OutputSpec {
  GateOp op = GateOp::And;
  std::vector<std::size_t> inputs;

  friend bool operator==(const OutputSpec&, const OutputSpec&) = default;
};

/// A monosemantic feature circuit: m Boolean inputs, one conjunction per output.
struct FeatureCircuit {
  std::size_t m = 0;
  std::vector<OutputSpec> outputs;
  std::size_t v_max = 2;

  std::size_t m_prime() const { return outputs.size(); }

  /// Largest AND arity, 0 if there are no AND outputs.
  std::size_t arity() const {
    std::size_t k = 0;
    for (const auto& o : outputs) {
      if (o.op == GateOp::And) k = std::max(k, o.inputs.size());
    }
    return k;
  }

  void validate() const {
    if (v_max < 1) throw Error(ErrorKind::InvalidParams, "vmax must be at least 1");
    std::set<std::pair<GateOp, std::vector<std::size_t>>> seen;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      const auto& o = outputs[i];
      if (o.op == GateOp::And && o.inputs.size() < 2) {
        throw Error(ErrorKind::ArityError, "output " + std::to_string(i) + " has fewer than two inputs");
      }
      if (o.op == GateOp::Pass && o.inputs.size() != 1) {
        throw Error(ErrorKind::ArityError, "passthrough output " + std::to_string(i) + " needs exactly one input");
      }
      for (const auto j : o.inputs) {
        if (j >= m) {
          throw Error(ErrorKind::IndexOutOfRange,
                      "output " + std::to_string(i) + " uses input " + std::to_string(j) + " but m=" + std::to_string(m));
        }
      }
      auto sorted = o.inputs;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw Error(ErrorKind::DuplicateIndex, "output " + std::to_string(i) + " repeats an input index");
      }
      if (!seen.insert({o.op, sorted}).second) {
        throw Error(ErrorKind::DuplicateOutput, "output " + std::to_string(i) + " duplicates an earlier output");
      }
    }
  }

  friend bool operator==(const FeatureCircuit&, const FeatureCircuit&) = default;
};

inline FeatureCircuit make_circuit(std::size_t m, std::vector<std::vector<std::size_t>> and_outputs,
                                   std::size_t v_max = 2) {
  FeatureCircuit c;
  c.m = m;
  c.v_max = v_max;
  for (auto& ins : and_outputs) c.outputs.push_back({GateOp::And, std::move(ins)});
  c.validate();
  return c;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::size_t parse_index(std::string_view token, std::size_t line) {
  std::size_t value = 0;
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorKind::SyntaxError, "line " + std::to_string(line) + ": expected a non-negative integer, got '" +
                                            std::string(token) + "'");
  }
  return value;
}

inline bool parse_assignment(std::string_view stmt, std::string_view key, std::size_t line, std::size_t& value) {
  if (stmt.substr(0, key.size()) != key) return false;
  auto rest = trim(stmt.substr(key.size()));
  if (rest.empty() || rest.front() != '=') return false;
  value = parse_index(trim(rest.substr(1)), line);
  return true;
}

inline FeatureCircuit parse_structured(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SyntaxError, std::string("structured document: ") + e.what());
  }
  FeatureCircuit c;
  try {
    c.m = doc.at("m").get<std::size_t>();
    c.v_max = doc.value("vmax", std::size_t{2});
    for (const auto& o : doc.at("outputs")) {
      OutputSpec spec;
      if (o.is_object()) {
        spec.op = o.value("op", std::string("and")) == "passthrough" ? GateOp::Pass : GateOp::And;
        spec.inputs = o.at("inputs").get<std::vector<std::size_t>>();
      } else {
        spec.inputs = o.get<std::vector<std::size_t>>();
      }
      c.outputs.push_back(std::move(spec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SyntaxError, std::string("structured document: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace detail

/// Parses the line grammar (`m=`, optional `vmax=`, then `and ...` /
/// `passthrough ...` lines; `;` also separates statements, `#` starts a
/// comment) or, when the document starts with `{`, the equivalent JSON object.
inline FeatureCircuit parse_circuit(std::string_view text) {
  if (const auto body = detail::trim(text); !body.empty() && body.front() == '{') {
    return detail::parse_structured(body);
  }
  FeatureCircuit c;
  bool have_m = false;
  bool have_outputs = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    auto line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);

    std::size_t sp = 0;
    while (sp <= line.size()) {
      auto semi = line.find(';', sp);
      if (semi == std::string_view::npos) semi = line.size();
      const auto stmt = detail::trim(line.substr(sp, semi - sp));
      sp = semi + 1;
      if (stmt.empty()) continue;

      std::size_t value = 0;
      if (!have_m) {
        if (!detail::parse_assignment(stmt, "m", line_no, value)) {
          throw Error(ErrorKind::SyntaxError, "line " + std::to_string(line_no) + ": expected header 'm=<int>'");
        }
        c.m = value;
        have_m = true;
        continue;
      }
      if (!have_outputs && detail::parse_assignment(stmt, "vmax", line_no, value)) {
        c.v_max = value;
        continue;
      }
      const auto tokens = detail::split_ws(stmt);
      OutputSpec spec;
      if (tokens.front() == "and") {
        spec.op = GateOp::And;
      } else if (tokens.front() == "passthrough") {
        spec.op = GateOp::Pass;
      } else {
        throw Error(ErrorKind::SyntaxError,
                    "line " + std::to_string(line_no) + ": unknown statement '" + std::string(tokens.front()) + "'");
      }
      for (std::size_t t = 1; t < tokens.size(); ++t) spec.inputs.push_back(detail::parse_index(tokens[t], line_no));
      c.outputs.push_back(std::move(spec));
      have_outputs = true;
    }
  }
  if (!have_m) throw Error(ErrorKind::SyntaxError, "line 1: missing header 'm=<int>'");
  c.validate();
  return c;
}

/// Canonical line-grammar form; parse_circuit(to_text(c)) == c.
inline std::string to_text(const FeatureCircuit& c) {
  std::ostringstream out;
  out << "m=" << c.m << "\n";
  out << "vmax=" << c.v_max << "\n";
  for (const auto& o : c.outputs) {
    out << (o.op == GateOp::And ? "and" : "passthrough");
    for (const auto j : o.inputs) out << ' ' << j;
    out << "\n";
  }
  return out.str();
}

/// CRC-32 of the canonical text, as 8 hex digits.
inline std::string digest(const FeatureCircuit& c) {
  const auto text = to_text(c);
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(text.data()), static_cast<uInt>(text.size()));
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

/// A cascade of circuits: documents separated by lines holding only `---`.
/// Circuit l+1 reads the outputs of circuit l as its inputs.
inline std::vector<FeatureCircuit> parse_chain(std::string_view text) {
  std::vector<FeatureCircuit> chain;
  std::size_t start = 0;
  std::size_t pos = 0;
  while (true) {
    auto eol = text.find('\n', pos);
    const bool end = eol == std::string_view::npos;
    if (end) eol = text.size();
    const bool separator = detail::trim(text.substr(pos, eol - pos)) == "---";
    if (separator || end) {
      const auto doc = text.substr(start, (separator ? pos : eol) - start);
      if (!detail::trim(doc).empty() || chain.empty()) chain.push_back(parse_circuit(doc));
      start = eol + 1;
    }
    if (end) break;
    pos = eol + 1;
  }
  for (std::size_t l = 1; l < chain.size(); ++l) {
    if (chain[l].m != chain[l - 1].m_prime()) {
      throw Error(ErrorKind::DimensionMismatch, "circuit " + std::to_string(l) + " has m=" + std::to_string(chain[l].m) +
                                                    " but the previous circuit has " +
                                                    std::to_string(chain[l - 1].m_prime()) + " outputs");
    }
  }
  return chain;
}

inline std::string to_text(const std::vector<FeatureCircuit>& chain) {
  std::string out;
  for (std::size_t l = 0; l < chain.size(); ++l) {
    if (l) out += "---\n";
    out += to_text(chain[l]);
  }
  return out;
}

inline std::string digest(const std::vector<FeatureCircuit>& chain) {
  if (chain.size() == 1) return digest(chain.front());
  const auto text = to_text(chain);
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(text.data()), static_cast<uInt>(text.size()));
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

// ---------------------------------------------------------------------------
// Influence analysis

enum class InputClass { Light, Heavy, SuperHeavy };

inline std::string_view to_string(InputClass c) {
  switch (c) {
    case InputClass::Light: return "light";
    case InputClass::Heavy: return "heavy";
    case InputClass::SuperHeavy: return "super-heavy";
  }
  return "?";
}

/// Smallest integer r with r^4 >= x, i.e. the ceiling of the real fourth root.
inline std::size_t ceil_fourth_root(std::size_t x) {
  std::size_t r = 0;
  while (r * r * r * r < x) ++r;
  return r;
}

/// Smallest integer r with r^2 >= x.
inline std::size_t ceil_sqrt(std::size_t x) {
  std::size_t r = 0;
  while (r * r < x) ++r;
  return r;
}

struct InfluenceProfile {
  std::vector<std::size_t> influence;
  std::size_t t_max = 0;
  // Mean over inputs that appear in at least one output.
  double t_bar = 0.0;
  std::size_t light_threshold = 0;  // ceil(m'^(1/4))
  std::size_t super_threshold = 0;  // ceil(m'^(1/2))
  std::vector<InputClass> labels;

  bool is_heavy(std::size_t j) const { return labels[j] != InputClass::Light; }
};

/// Counts AND outputs only; passthrough wires never share a channel with
/// AND outputs, so they do not change an input's class. A nonzero
/// `reference_mprime` sets the thresholds when `c` is a slice of a larger
/// layer.
inline InfluenceProfile classify(const FeatureCircuit& c, std::size_t reference_mprime = 0) {
  InfluenceProfile p;
  p.influence.assign(c.m, 0);
  std::size_t and_count = 0;
  for (const auto& o : c.outputs) {
    if (o.op != GateOp::And) continue;
    ++and_count;
    for (const auto j : o.inputs) ++p.influence[j];
  }
  const auto ref = std::max(and_count, reference_mprime);
  p.light_threshold = ceil_fourth_root(ref);
  p.super_threshold = ceil_sqrt(ref);
  std::size_t used = 0;
  std::size_t total = 0;
  p.labels.resize(c.m);
  for (std::size_t j = 0; j < c.m; ++j) {
    const auto t = p.influence[j];
    p.t_max = std::max(p.t_max, t);
    if (t > 0) {
      ++used;
      total += t;
    }
    if (t > p.super_threshold) {
      p.labels[j] = InputClass::SuperHeavy;
    } else if (t > p.light_threshold) {
      p.labels[j] = InputClass::Heavy;
    } else {
      p.labels[j] = InputClass::Light;
    }
  }
  p.t_bar = used ? static_cast<double>(total) / static_cast<double>(used) : 0.0;
  return p;
}

struct OutputPartition {
  std::vector<std::size_t> double_light;
  std::vector<std::size_t> double_heavy;
  std::vector<std::size_t> mixed_regular;
  std::vector<std::size_t> mixed_super;
  // Wire copies from k-AND lowering; compiled in their own block.
  std::vector<std::size_t> passthrough;
};

inline OutputPartition partition_outputs(const FeatureCircuit& c, const InfluenceProfile& profile) {
  OutputPartition part;
  for (std::size_t i = 0; i < c.outputs.size(); ++i) {
    const auto& o = c.outputs[i];
    if (o.op == GateOp::Pass) {
      part.passthrough.push_back(i);
      continue;
    }
    if (o.inputs.size() != 2) {
      throw Error(ErrorKind::ArityError,
                  "output " + std::to_string(i) + " has arity " + std::to_string(o.inputs.size()) + "; lower it first");
    }
    const auto a = profile.labels[o.inputs[0]];
    const auto b = profile.labels[o.inputs[1]];
    const bool a_heavy = a != InputClass::Light;
    const bool b_heavy = b != InputClass::Light;
    if (!a_heavy && !b_heavy) {
      part.double_light.push_back(i);
    } else if (a_heavy && b_heavy) {
      part.double_heavy.push_back(i);
    } else if (a == InputClass::SuperHeavy || b == InputClass::SuperHeavy) {
      part.mixed_super.push_back(i);
    } else {
      part.mixed_regular.push_back(i);
    }
  }
  return part;
}

}  // namespace superpose
