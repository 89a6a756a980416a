#pragma once

// Versioned JSON encoding of trained models.

#include <string>
#include <string_view>

#include "wdl/scgmm.hpp"

namespace wdl {

inline constexpr int kModelSchemaVersion = 1;

std::string serialize(const ScgmmModel& model);

// Throws DecodeError on malformed documents, unknown schema versions and
// structurally invalid models.
ScgmmModel deserialize(std::string_view text);

ScgmmModel load_model(const std::string& path);
void save_model(const ScgmmModel& model, const std::string& path);

}  // namespace wdl
