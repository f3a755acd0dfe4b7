#include "medbridge/jsonl.hpp"

#include <fstream>

#include "medbridge/common.hpp"

namespace medbridge::jsonl {

void for_each_record(const std::string& path,
                     const std::function<void(const nlohmann::json&, int)>& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
        if (rec.is_discarded()) throw SchemaError("invalid JSON", line_no);
        if (!rec.is_object()) throw SchemaError("record is not a JSON object", line_no);
        fn(rec, line_no);
    }
}

void write_records(const std::string& path, const std::vector<nlohmann::json>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open file for writing: " + path);
    for (const auto& rec : records) out << rec.dump() << '\n';
    if (!out) throw IoError("write failed: " + path);
}

const nlohmann::json& require_field(const nlohmann::json& rec, const std::string& key, int line) {
    auto it = rec.find(key);
    if (it == rec.end()) throw SchemaError("missing field '" + key + "'", line);
    return *it;
}

std::string require_string(const nlohmann::json& rec, const std::string& key, int line) {
    const auto& v = require_field(rec, key, line);
    if (!v.is_string()) throw SchemaError("field '" + key + "' must be a string", line);
    return v.get<std::string>();
}

double require_number(const nlohmann::json& rec, const std::string& key, int line) {
    const auto& v = require_field(rec, key, line);
    if (!v.is_number()) throw SchemaError("field '" + key + "' must be a number", line);
    return v.get<double>();
}

std::string get_string_or(const nlohmann::json& rec, const std::string& key,
                          const std::string& fallback) {
    auto it = rec.find(key);
    if (it == rec.end() || !it->is_string()) return fallback;
    return it->get<std::string>();
}

}  // namespace medbridge::jsonl
