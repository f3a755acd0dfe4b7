#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

namespace medbridge::jsonl {

// Reads a JSON-lines file, invoking `fn(record, line_no)` per non-blank line.
// Throws IoError if the file cannot be opened and SchemaError (with the line
// number) on invalid JSON or a non-object record.
void for_each_record(const std::string& path,
                     const std::function<void(const nlohmann::json&, int)>& fn);

// Writes one compact JSON object per line. Overwrites the file.
void write_records(const std::string& path, const std::vector<nlohmann::json>& records);

// Field accessors that turn missing/mistyped fields into SchemaError with
// the offending line number.
std::string require_string(const nlohmann::json& rec, const std::string& key, int line);
double require_number(const nlohmann::json& rec, const std::string& key, int line);
const nlohmann::json& require_field(const nlohmann::json& rec, const std::string& key, int line);

std::string get_string_or(const nlohmann::json& rec, const std::string& key,
                          const std::string& fallback);

}  // namespace medbridge::jsonl
