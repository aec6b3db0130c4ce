#pragma once

#include <map>
#include <string>

#include "sider/nn.hpp"

namespace sider {

// Checkpoint container: versioned header (magic, format version, JSON meta,
// shape table) followed by raw little-endian float32 parameter blocks.
// Parameters are computed in double precision but stored as f32.
namespace checkpoint {

constexpr const char* kMagic = "SIDRCKPT";
constexpr uint32_t kVersion = 1;

// meta is a small JSON object, e.g. {"kind":"denoiser","epochs_trained":40}
void save(const std::string& path, const ParamList& params, const std::string& meta_json);

// Loads into the already-constructed tensors of `params`; shape table must
// match exactly. Returns the meta JSON string.
std::string load(const std::string& path, const ParamList& params);

// Header peek without loading blocks (for tooling / missing-key checks).
std::string read_meta(const std::string& path);

int64_t total_params(const ParamList& params);

}  // namespace checkpoint
}  // namespace sider
