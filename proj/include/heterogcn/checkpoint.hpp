#pragma once

#include <string>

#include "heterogcn/config.hpp"
#include "heterogcn/nn.hpp"

namespace heterogcn {

// A checkpoint is a pair of files: <stem>.json holds the run config and a
// name-sorted parameter manifest (name + shape), <stem>.bin holds the raw
// values as little-endian float64 in manifest order.
void save_checkpoint(const std::string& stem, const RunConfig& cfg, const nn::ParamStore& params);

struct Checkpoint {
  RunConfig config;
  nn::ParamStore params;
};

// Validates shapes against the manifest and the binary length.
Checkpoint load_checkpoint(const std::string& stem);

}  // namespace heterogcn
