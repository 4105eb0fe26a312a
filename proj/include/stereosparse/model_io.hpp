#pragma once

#include <string>
#include <utility>

#include "stereosparse/network.hpp"

namespace stereosparse {

// Model files: magic "SSM1", u32 little-endian JSON header length, the
// header (variant, geometry, LCA settings, per-layer flags), then each
// layer's weights and bias as concatenated STEN blobs.

void save_model(const std::string& path, const NetworkSpec& spec, const NetworkParams& params);
std::pair<NetworkSpec, NetworkParams> load_model(const std::string& path);

}  // namespace stereosparse
