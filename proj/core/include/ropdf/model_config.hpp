#pragma once

#include <string>
#include <string_view>

#include "ropdf/models.hpp"

namespace ropdf {

/// JSON text with name, dim, params, initial, qoi and closure-term labels.
std::string model_to_json(const ModelSpec& model);

/// Builds a built-in model from a JSON object `{"name": ..., "params": {...},
/// "qoi": <index or component name>}`. The derived fields written by
/// `model_to_json` are accepted when they match the rebuilt model; other keys
/// are rejected.
ModelSpec model_from_json(std::string_view json_text);

}  // namespace ropdf
