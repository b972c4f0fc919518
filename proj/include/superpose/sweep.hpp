#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "superpose/pipeline.hpp"

namespace superpose {

inline constexpr std::string_view kSweepHeader = "mprime,alpha,n,seeds,passes,mean_restarts,max_type_a,max_type_b,min_one";

/// One (m', alpha) cell. Margins are taken over every build that produced a
/// network, failed ones included; NaN when none did.
struct SweepRow {
  std::size_t mprime = 0;
  double alpha = 0.0;
  std::size_t n = 0;
  std::size_t seeds = 0;
  std::size_t passes = 0;
  double mean_restarts = 0.0;
  double max_type_a = std::numeric_limits<double>::quiet_NaN();
  double max_type_b = std::numeric_limits<double>::quiet_NaN();
  double min_one = std::numeric_limits<double>::quiet_NaN();

  double pass_rate() const { return seeds ? static_cast<double>(passes) / static_cast<double>(seeds) : 0.0; }
};

using CircuitGenerator = std::function<FeatureCircuit(std::size_t m_prime, std::uint64_t seed)>;

/// Seeds run 0..seeds-1 offset by base.params.seed. Each build verifies with
/// `base.verify` and profiles noise on the same inputs.
inline std::vector<SweepRow> sweep(const CircuitGenerator& generate, const std::vector<std::size_t>& mprimes,
                                   const std::vector<double>& alphas, std::size_t seeds, CompileOptions base) {
  std::vector<SweepRow> rows;
  base.final_report = false;
  base.keep_failed = true;
  for (const auto mp : mprimes) {
    for (const auto alpha : alphas) {
      SweepRow row;
      row.mprime = mp;
      row.alpha = alpha;
      row.n = CodecParams::neurons_for(mp, alpha);
      row.seeds = seeds;
      double restarts = 0.0;
      double a = -std::numeric_limits<double>::infinity();
      double b = a;
      double one = std::numeric_limits<double>::infinity();
      bool profiled = false;
      for (std::size_t s = 0; s < seeds; ++s) {
        const std::uint64_t seed = base.params.seed + s;
        const auto circuit = generate(mp, seed);
        auto opt = base;
        opt.params.alpha = alpha;
        opt.params.seed = seed;
        opt.verify.seed = seed;
        BuildResult r;
        try {
          r = try_construct({circuit}, opt);
        } catch (const Error&) {
          restarts += static_cast<double>(opt.max_restarts);
          continue;
        }
        restarts += static_cast<double>(r.attempts());
        if (r.ok) ++row.passes;
        if (r.network.layers.empty()) continue;
        const auto inputs = enumerate_inputs(circuit, r.network.v_max, opt.verify);
        const auto noise = profile_noise(r.network, inputs, opt.verify.threads);
        a = std::max(a, noise.max_type_a);
        b = std::max(b, noise.max_type_b);
        one = std::min(one, noise.min_intended_one());
        profiled = true;
      }
      row.mean_restarts = seeds ? restarts / static_cast<double>(seeds) : 0.0;
      if (profiled) {
        row.max_type_a = a;
        row.max_type_b = b;
        row.min_one = one;
      }
      rows.push_back(row);
    }
  }
  return rows;
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << kSweepHeader << "\n";
  auto num = [](double x) {
    if (std::isnan(x)) return std::string("nan");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    out << r.mprime << ',' << num(r.alpha) << ',' << r.n << ',' << r.seeds << ',' << r.passes << ','
        << num(r.mean_restarts) << ',' << num(r.max_type_a) << ',' << num(r.max_type_b) << ',' << num(r.min_one)
        << "\n";
  }
}

}  // namespace superpose
