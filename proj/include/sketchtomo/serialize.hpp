#pragma once

// JSON encodings of states, coefficient trains, sketch families and reports.
// Sites in JSON and observable labels are 1-based.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "sketchtomo/mps.hpp"
#include "sketchtomo/pauli_tt.hpp"
#include "sketchtomo/sketch.hpp"

namespace sketchtomo {

using json = nlohmann::json;

/// {"n", "bonds", "components": per site nested [re, im] in (left, physical, right) order}.
json mps_to_json(const MPS& psi);
/// Extra keys are ignored. Throws std::runtime_error on malformed input.
MPS mps_from_json(const json& j);

/// {"n", "ranks", "components": per site nested reals in (left, pauli, right) order}.
json tt_to_json(const TTCoeff& c);
TTCoeff tt_from_json(const json& j);

/// Each observable is a list of {"coefficient", "string": {site: label}}.
json family_to_json(const SketchFamily& f);
SketchFamily family_from_json(const json& j);

json pauli_sum_to_json(const PauliSum& obs);
PauliSum pauli_sum_from_json(const json& j);

json report_to_json(const TomographyReport& r);
TomographyReport report_from_json(const json& j);

json read_json_file(const std::filesystem::path& path);
/// Writes j.dump(1) plus a trailing newline.
void write_json_file(const std::filesystem::path& path, const json& j);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace sketchtomo
