#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace intentkit {

enum class FieldKind { scalar, boolean, integer, string_list, map_list };

struct Field {
    std::string key;  // as written in the prompt, e.g. "Keep Examples"
    FieldKind kind = FieldKind::scalar;
    bool required = true;
    std::vector<Field> children;  // item fields of a map_list
};

enum class Dialect { yaml, json };

struct Schema {
    Dialect dialect = Dialect::yaml;
    std::vector<Field> fields;
    // Boolean key through which the model declares its own answer valid ("Valid", "Worth_Adding").
    // When it reads False, other required keys may be absent.
    std::optional<std::string> validity_key;
};

struct Structured {
    nlohmann::json payload;  // object keyed by Field::key
    bool self_valid = true;
};

// Parses a model answer against a schema. YAML answers are read line by line, recognizing only
// the schema's keys (case, '_' vs ' ' and markdown emphasis are ignored); prose before the first
// key and code fences are skipped. JSON answers use the first balanced {...} object.
// Throws ParseError(missing_key | bad_enum | malformed).
Structured parse_structured(std::string_view text, const Schema& schema);

// Strips one layer of matching quotes and one layer of [] or () around a scalar.
std::string strip_scalar(std::string_view value);

}  // namespace intentkit
