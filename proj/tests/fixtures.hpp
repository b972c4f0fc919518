#pragma once

#include "superpose/superpose.hpp"

namespace fixtures {

inline superpose::CompileOptions wide_options(std::uint64_t seed = 1) {
  superpose::CompileOptions opt;
  opt.params.alpha = 256.0;
  opt.params.beta = 4.0;
  opt.params.seed = seed;
  opt.verify.seed = seed;
  return opt;
}

inline const superpose::FeatureCircuit& small_circuit() {
  static const auto c = superpose::parse_circuit("m=6\nand 0 1\nand 2 3\nand 4 5\n");
  return c;
}

// Built once per process.
inline const superpose::BuildResult& small_build() {
  static const auto r = superpose::try_construct({small_circuit()}, wide_options());
  return r;
}

}  // namespace fixtures
