#pragma once

#include <string>

#include "gcnet/net.hpp"

namespace gcnet {

// Named-tensor archive: magic line "GCN1", a text index (name, frozen flag,
// dims), then the concatenated row-major little-endian float64 payload in
// index order. Stores parameter values, frozen flags, and the optimizer step
// count; gradients and moments restart empty on load.
void save_params(const std::string& path, const ParamStore& store);
ParamStore load_params(const std::string& path);

}  // namespace gcnet
