#pragma once

#include "superpose/circuit.hpp"
#include "superpose/codec.hpp"
#include "superpose/compiler.hpp"
#include "superpose/error.hpp"
#include "superpose/extensions.hpp"
#include "superpose/generate.hpp"
#include "superpose/pipeline.hpp"
#include "superpose/rng.hpp"
#include "superpose/runtime.hpp"
#include "superpose/sparse.hpp"
#include "superpose/sweep.hpp"
#include "superpose/verify.hpp"
