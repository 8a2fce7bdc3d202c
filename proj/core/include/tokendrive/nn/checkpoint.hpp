#pragma once

#include <string>
#include <vector>

#include "tokendrive/nn/params.hpp"

namespace tokendrive::nn {

// Versioned binary checkpoint: magic, tensor count, then per tensor a name,
// a shape tag and little-endian float64 data. Layout in docs/formats.md.
void save_checkpoint(const std::string& path, const std::vector<ParamRef>& refs);

// Loads into existing refs; names and shapes must match exactly.
void load_checkpoint(const std::string& path, const std::vector<ParamRef>& refs);

bool checkpoint_exists(const std::string& path);

}  // namespace tokendrive::nn
