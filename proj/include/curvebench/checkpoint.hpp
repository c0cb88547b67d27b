#pragma once

#include <string>

#include "curvebench/model.hpp"

namespace curvebench {

// CBNET1 checkpoint: magic, length-prefixed architecture descriptor, then
// each parameter tensor's values as little-endian doubles in declaration
// order. Round trips are bit-exact.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace curvebench
