#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace ctok {

// Request schemas served under /schema (JSON Schema draft-04).
std::vector<std::string> schema_names();
const nlohmann::json& request_schema(std::string_view name);

// Parses `body` and checks it against the named schema. Malformed JSON and
// schema violations both raise SchemaViolation with the offending pointer.
nlohmann::json parse_request(std::string_view name, std::string_view body);
void validate_request(std::string_view name, const nlohmann::json& doc);

}  // namespace ctok
