#pragma once

#include "dfrot/massive.hpp"
#include "dfrot/optimizer.hpp"
#include "dfrot/quantizer.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>

namespace dfrot::report {

// {"mean_sq_error", "massive_mean_sq_error", "bulk_mean_sq_error", "per_token": [...]}
nlohmann::json to_json(const ErrorReport& r);
// Header "token_index,is_massive,sq_error", one line per token.
std::string to_csv(const ErrorReport& r);

// {"tokens", "flagged": [indices], "tau_rel", "tau_abs", "median_linf", "fraction"}
nlohmann::json to_json(const MassiveMask& m);
MassiveMask mask_from_json(const nlohmann::json& j);
MassiveMask read_mask(const std::filesystem::path& path);

// One JSON object per line per iteration record.
std::string trace_jsonl(const OptimizerTrace& trace);
std::string trace_csv(const OptimizerTrace& trace);

// gamma as a JSON value; infinity is written as the string "inf".
nlohmann::json gamma_json(double gamma);

// Scatter of per-token squared error (log y axis) against token index.
// Massive tokens are drawn as red marks. Output bytes depend only on inputs.
std::string scatter_svg(const ErrorReport& r, const MassiveMask* mask);
void emit_scatter_svg(const ErrorReport& r, const MassiveMask* mask, const std::filesystem::path& path);

// Pretty-printed JSON with a trailing newline.
std::string dump(const nlohmann::json& j);

}  // namespace dfrot::report
