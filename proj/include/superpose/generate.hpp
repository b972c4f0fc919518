#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "superpose/circuit.hpp"
#include "superpose/error.hpp"
#include "superpose/rng.hpp"
#include "superpose/verify.hpp"

namespace superpose {

/// m = 2m' inputs, each used by exactly one output.
inline FeatureCircuit generate_single_use(std::size_t m_prime, std::uint64_t seed) {
  if (m_prime < 1) throw Error(ErrorKind::InfeasibleSizes, "single-use needs m' >= 1");
  auto rng = Rng::derive(seed, "generate/single-use");
  std::vector<std::size_t> ids(2 * m_prime);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  rng.shuffle(ids);
  FeatureCircuit c;
  c.m = 2 * m_prime;
  for (std::size_t i = 0; i < m_prime; ++i) c.outputs.push_back({GateOp::And, {ids[2 * i], ids[2 * i + 1]}});
  c.validate();
  return c;
}

namespace detail {

inline std::vector<std::vector<std::size_t>> distinct_sets(Rng& rng, std::size_t m, std::size_t count, std::size_t k) {
  std::set<std::vector<std::size_t>> seen;
  std::vector<std::vector<std::size_t>> out;
  while (out.size() < count) {
    auto s = rng.sample_distinct(m, k);
    if (seen.insert(s).second) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace detail

/// Largest m with m < 2m'/ceil(m'^(1/4)) and m <= 2 m'^(3/4).
inline std::size_t high_influence_inputs(std::size_t m_prime) {
  const auto t = ceil_fourth_root(m_prime);
  const double by_mean = 2.0 * static_cast<double>(m_prime) / static_cast<double>(t);
  std::size_t m = static_cast<std::size_t>(std::ceil(by_mean)) - 1;
  m = std::min(m, static_cast<std::size_t>(std::floor(2.0 * std::pow(static_cast<double>(m_prime), 0.75))));
  return m;
}

/// m' random distinct pairs over m inputs, dense enough that the mean
/// influence exceeds ceil(m'^(1/4)). m = 0 picks the largest feasible m.
inline FeatureCircuit generate_high_influence(std::size_t m_prime, std::size_t m, std::uint64_t seed) {
  if (m == 0) m = high_influence_inputs(m_prime);
  const auto t = ceil_fourth_root(m_prime);
  if (m_prime < 1 || m < 2 || binomial(m, 2) < static_cast<double>(m_prime) ||
      static_cast<double>(m) * static_cast<double>(t) >= 2.0 * static_cast<double>(m_prime) ||
      static_cast<double>(m) > 2.0 * std::pow(static_cast<double>(m_prime), 0.75)) {
    throw Error(ErrorKind::InfeasibleSizes, "high-influence needs m < 2m'/ceil(m'^(1/4)) and m <= 2m'^(3/4); got m=" +
                                                std::to_string(m) + ", m'=" + std::to_string(m_prime));
  }
  auto rng = Rng::derive(seed, "generate/high-influence");
  FeatureCircuit c;
  c.m = m;
  for (auto& s : detail::distinct_sets(rng, m, m_prime, 2)) c.outputs.push_back({GateOp::And, std::move(s)});
  c.validate();
  const auto profile = classify(c);
  if (!(profile.t_bar > static_cast<double>(profile.light_threshold))) {
    throw Error(ErrorKind::InfeasibleSizes, "generated circuit has mean influence " + std::to_string(profile.t_bar) +
                                                " <= " + std::to_string(profile.light_threshold));
  }
  return c;
}

/// Two super-heavy inputs (each in ceil(sqrt m') mixed outputs plus their
/// shared output), two heavy inputs (each in ceil(m'^(1/4))+1 mixed outputs
/// plus their shared output), and single-use double-light outputs for the
/// rest. Every light input is used once.
inline FeatureCircuit generate_mixed(std::size_t m_prime, std::uint64_t seed) {
  const auto t = ceil_fourth_root(m_prime);
  const auto r = ceil_sqrt(m_prime);
  if (m_prime < 2 * r + 2 * t + 5 || t + 2 > r) {
    throw Error(ErrorKind::InfeasibleSizes, "mixed needs m' - 2ceil(sqrt m') - 2ceil(m'^(1/4)) - 4 >= 1; m'=" +
                                                std::to_string(m_prime));
  }
  const std::size_t rest = m_prime - 2 * r - 2 * t - 4;
  const std::size_t m = 4 + 2 * r + 2 * (t + 1) + 2 * rest;
  auto rng = Rng::derive(seed, "generate/mixed");
  std::vector<std::size_t> ids(m);
  for (std::size_t i = 0; i < m; ++i) ids[i] = i;
  rng.shuffle(ids);
  std::size_t next = 0;
  auto fresh = [&] { return ids[next++]; };
  const std::size_t s1 = fresh(), s2 = fresh(), h1 = fresh(), h2 = fresh();
  FeatureCircuit c;
  c.m = m;
  auto add = [&](std::size_t a, std::size_t b) { c.outputs.push_back({GateOp::And, {std::min(a, b), std::max(a, b)}}); };
  for (const auto s : {s1, s2}) {
    for (std::size_t k = 0; k < r; ++k) add(s, fresh());
  }
  add(s1, s2);
  for (const auto h : {h1, h2}) {
    for (std::size_t k = 0; k < t + 1; ++k) add(h, fresh());
  }
  add(h1, h2);
  for (std::size_t k = 0; k < rest; ++k) {
    const auto a = fresh();
    add(a, fresh());
  }
  rng.shuffle(c.outputs);
  c.validate();
  return c;
}

/// m' random distinct k-sets over m inputs.
inline FeatureCircuit generate_k_and(std::size_t m, std::size_t m_prime, std::size_t k, std::size_t v_max,
                                     std::uint64_t seed) {
  if (k < 2 || k > m || binomial(m, k) < static_cast<double>(m_prime)) {
    throw Error(ErrorKind::InfeasibleSizes, "cannot draw " + std::to_string(m_prime) + " distinct " + std::to_string(k) +
                                                "-sets from " + std::to_string(m) + " inputs");
  }
  auto rng = Rng::derive(seed, "generate/k-and");
  FeatureCircuit c;
  c.m = m;
  c.v_max = v_max;
  for (auto& s : detail::distinct_sets(rng, m, m_prime, k)) c.outputs.push_back({GateOp::And, std::move(s)});
  c.validate();
  return c;
}

/// `depth` chained circuits. Each keeps every input alive through a
/// passthrough wire and adds m_l/2 disjoint random pairs, so actives
/// propagate and every input stays light.
inline std::vector<FeatureCircuit> generate_chain(std::size_t m, std::size_t depth, std::uint64_t seed) {
  if (m < 4 || depth < 1) throw Error(ErrorKind::InfeasibleSizes, "chain needs m >= 4 and depth >= 1");
  std::vector<FeatureCircuit> chain;
  std::size_t width = m;
  for (std::size_t l = 0; l < depth; ++l) {
    auto rng = Rng::derive(seed, "generate/chain/" + std::to_string(l));
    FeatureCircuit c;
    c.m = width;
    for (std::size_t j = 0; j < width; ++j) c.outputs.push_back({GateOp::Pass, {j}});
    std::vector<std::size_t> ids(width);
    for (std::size_t j = 0; j < width; ++j) ids[j] = j;
    rng.shuffle(ids);
    for (std::size_t q = 0; q + 1 < width; q += 2) {
      c.outputs.push_back({GateOp::And, {std::min(ids[q], ids[q + 1]), std::max(ids[q], ids[q + 1])}});
    }
    c.validate();
    width = c.m_prime();
    chain.push_back(std::move(c));
  }
  return chain;
}

}  // namespace superpose
