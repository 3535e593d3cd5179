#pragma once

#include <string>

#include "json.hpp"

namespace persist {

// Insertion-ordered documents keep report layout deterministic.
using Json = nlohmann::ordered_json;

// 17 significant digits: enough to round-trip any double exactly.
std::string format_double(double v);

// Serializer used for every report and model file the toolkit writes.
// Differs from Json::dump only in number formatting: floating-point values
// are emitted with format_double so repeat runs are byte-identical and
// parseable back to the same bits. Non-finite numbers are rejected.
std::string dump_json(const Json& j, int indent = 2);

Json parse_json(const std::string& text, const std::string& what);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace persist
