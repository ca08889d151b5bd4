#include "intentkit/structured.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

#include "intentkit/error.hpp"

namespace intentkit {

using nlohmann::json;

namespace {

struct Line {
    int indent = 0;
    std::string text;  // without leading/trailing whitespace
    bool blank() const { return text.empty(); }
};

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::vector<Line> split_lines(std::string_view text) {
    std::vector<Line> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        auto raw = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        Line line;
        std::size_t i = 0;
        for (; i < raw.size() && (raw[i] == ' ' || raw[i] == '\t'); ++i) line.indent += raw[i] == '\t' ? 4 : 1;
        line.text = std::string(trim(raw.substr(i)));
        if (line.text.rfind("```", 0) == 0) continue;
        out.push_back(std::move(line));
    }
    return out;
}

std::string key_form(std::string_view key) {
    std::string out;
    for (char c : key) {
        char x = c == '_' ? ' ' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (x == ' ' && (out.empty() || out.back() == ' ')) continue;
        out.push_back(x);
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

struct KeyMatch {
    std::size_t field;
    std::string value;
};

std::optional<KeyMatch> match_key(std::string_view content, const std::vector<Field>& fields) {
    while (!content.empty() && (content.front() == '*' || content.front() == '#' || content.front() == '`' ||
                                content.front() == ' ' || content.front() == '"'))
        content.remove_prefix(1);
    auto colon = content.find(':');
    if (colon == std::string_view::npos) return std::nullopt;
    auto key = content.substr(0, colon);
    while (!key.empty() && (key.back() == '*' || key.back() == ' ' || key.back() == '`' || key.back() == '"'))
        key.remove_suffix(1);
    const auto form = key_form(key);
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (key_form(fields[i].key) != form) continue;
        auto value = content.substr(colon + 1);
        while (!value.empty() && (value.front() == '*' || value.front() == ' ')) value.remove_prefix(1);
        return KeyMatch{i, std::string(trim(value))};
    }
    return std::nullopt;
}

bool is_item_line(const Line& l) { return !l.text.empty() && l.text[0] == '-'; }

std::string item_text(const Line& l) { return std::string(trim(std::string_view(l.text).substr(1))); }

std::vector<std::string> split_inline_list(std::string_view value) {
    auto body = trim(value);
    if (body.size() >= 2 && ((body.front() == '[' && body.back() == ']') || (body.front() == '(' && body.back() == ')'))) {
        body = trim(body.substr(1, body.size() - 2));
    }
    std::vector<std::string> out;
    std::string cur;
    char quote = 0;
    for (char c : body) {
        if (quote) {
            if (c == quote) quote = 0;
            cur.push_back(c);
        } else if (c == '"' || c == '\'') {
            if (trim(cur).empty()) quote = c;
            cur.push_back(c);
        } else if (c == ',') {
            out.push_back(strip_scalar(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(strip_scalar(cur));
    out.erase(std::remove_if(out.begin(), out.end(), [](const std::string& s) { return s.empty(); }), out.end());
    return out;
}

struct Section {
    std::size_t field;
    std::string inline_value;
    std::vector<Line> body;
};

bool parse_bool(std::string_view raw, const std::string& key) {
    auto v = strip_scalar(raw);
    while (!v.empty() && (v.back() == '.' || v.back() == '*')) v.pop_back();
    std::string lower;
    for (char c : v) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (lower == "true") return true;
    if (lower == "false") return false;
    throw ParseError(ParseError::Kind::bad_enum, "key '" + key + "' must be True or False, got '" + std::string(raw) + "'");
}

int parse_int(std::string_view raw, const std::string& key) {
    static const std::regex int_re(R"(-?\d+)");
    std::match_results<std::string_view::const_iterator> m;
    if (!std::regex_search(raw.begin(), raw.end(), m, int_re))
        throw ParseError(ParseError::Kind::malformed, "key '" + key + "' must hold an integer, got '" + std::string(raw) + "'");
    try {
        return std::stoi(m.str());
    } catch (const std::out_of_range&) {
        throw ParseError(ParseError::Kind::malformed, "key '" + key + "' integer out of range");
    }
}

// First non-blank token of a one-line value: the inline value or else the first body line.
std::string first_value(const Section& s) {
    if (!s.inline_value.empty()) return s.inline_value;
    for (const auto& l : s.body)
        if (!l.blank()) return l.text;
    return {};
}

json parse_mapping(const std::vector<Line>& lines, const std::vector<Field>& fields, const std::string& where,
                   const std::optional<std::string>& validity_key, bool* self_valid);

json convert(const Section& s, const Field& f, const std::string& where) {
    const auto path = where.empty() ? f.key : where + "." + f.key;
    switch (f.kind) {
        case FieldKind::scalar: {
            std::string joined = s.inline_value;
            bool seen_blank = false;
            for (const auto& l : s.body) {
                if (l.blank()) {
                    seen_blank = !joined.empty();
                    continue;
                }
                if (seen_blank) break;
                joined += (joined.empty() ? "" : " ") + l.text;
            }
            return strip_scalar(joined);
        }
        case FieldKind::boolean: return parse_bool(first_value(s), path);
        case FieldKind::integer: return parse_int(first_value(s), path);
        case FieldKind::string_list: {
            std::vector<std::string> items;
            if (!s.inline_value.empty()) items = split_inline_list(s.inline_value);
            bool after_blank = false;
            bool last_was_item = false;
            for (const auto& l : s.body) {
                if (l.blank()) {
                    after_blank = true;
                    last_was_item = false;
                    continue;
                }
                if (is_item_line(l)) {
                    auto item = strip_scalar(item_text(l));
                    if (!item.empty()) items.push_back(item);
                    after_blank = false;
                    last_was_item = !item.empty();
                } else if (!after_blank && last_was_item) {
                    // Wrapped item: re-strip the joined text so a closing quote on this line balances.
                    items.back() += " " + strip_scalar(l.text);
                } else {
                    break;
                }
            }
            return items;
        }
        case FieldKind::map_list: {
            json out = json::array();
            int item_indent = -1;
            std::vector<std::vector<Line>> blocks;
            for (const auto& l : s.body) {
                bool starts = false;
                if (is_item_line(l) && (item_indent < 0 || l.indent <= item_indent)) {
                    auto rest = item_text(l);
                    starts = match_key(rest, f.children).has_value();
                }
                if (starts) {
                    if (item_indent < 0) item_indent = l.indent;
                    auto offset = l.text.size() - item_text(l).size();
                    blocks.push_back({Line{l.indent + static_cast<int>(offset), item_text(l)}});
                } else if (!blocks.empty()) {
                    blocks.back().push_back(l);
                }
            }
            for (std::size_t i = 0; i < blocks.size(); ++i)
                out.push_back(parse_mapping(blocks[i], f.children, path + "[" + std::to_string(i) + "]", std::nullopt,
                                            nullptr));
            return out;
        }
    }
    return nullptr;
}

json parse_mapping(const std::vector<Line>& lines, const std::vector<Field>& fields, const std::string& where,
                   const std::optional<std::string>& validity_key, bool* self_valid) {
    std::vector<Section> sections;
    std::vector<bool> seen(fields.size(), false);
    int base_indent = -1;
    for (const auto& l : lines) {
        if (!l.blank() && !is_item_line(l) && (base_indent < 0 || l.indent <= base_indent)) {
            if (auto m = match_key(l.text, fields); m && !seen[m->field]) {
                if (base_indent < 0) base_indent = l.indent;
                seen[m->field] = true;
                sections.push_back({m->field, m->value, {}});
                continue;
            }
        }
        if (!sections.empty()) sections.back().body.push_back(l);
    }

    bool valid = true;
    if (validity_key) {
        auto vf = std::find_if(fields.begin(), fields.end(), [&](const Field& f) { return f.key == *validity_key; });
        auto vs = std::find_if(sections.begin(), sections.end(),
                               [&](const Section& s) { return fields[s.field].key == *validity_key; });
        if (vf == fields.end() || vs == sections.end())
            throw ParseError(ParseError::Kind::missing_key, "missing key '" + *validity_key + "'");
        valid = parse_bool(first_value(*vs), *validity_key);
        if (self_valid) *self_valid = valid;
    }

    json out = json::object();
    for (const auto& s : sections) {
        const auto& f = fields[s.field];
        try {
            out[f.key] = convert(s, f, where);
        } catch (const ParseError&) {
            if (valid) throw;
        }
    }
    if (valid) {
        for (const auto& f : fields)
            if (f.required && !out.contains(f.key))
                throw ParseError(ParseError::Kind::missing_key,
                                 "missing key '" + (where.empty() ? f.key : where + "." + f.key) + "'");
    }
    return out;
}

std::string_view first_json_object(std::string_view text) {
    auto start = text.find('{');
    if (start == std::string_view::npos) throw ParseError(ParseError::Kind::malformed, "no JSON object in response");
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
        char c = text[i];
        if (in_string) {
            if (escaped)
                escaped = false;
            else if (c == '\\')
                escaped = true;
            else if (c == '"')
                in_string = false;
            continue;
        }
        if (c == '"')
            in_string = true;
        else if (c == '{')
            ++depth;
        else if (c == '}' && --depth == 0)
            return text.substr(start, i - start + 1);
    }
    throw ParseError(ParseError::Kind::malformed, "unbalanced JSON object in response");
}

json check_json_value(const json& v, const Field& f, const std::string& path) {
    switch (f.kind) {
        case FieldKind::scalar:
            if (!v.is_string()) throw ParseError(ParseError::Kind::malformed, "key '" + path + "' must be a string");
            return v;
        case FieldKind::boolean:
            if (v.is_boolean()) return v;
            if (v.is_string()) return parse_bool(v.get<std::string>(), path);
            throw ParseError(ParseError::Kind::bad_enum, "key '" + path + "' must be True or False");
        case FieldKind::integer:
            if (v.is_number_integer()) return v;
            if (v.is_string()) return parse_int(v.get<std::string>(), path);
            throw ParseError(ParseError::Kind::malformed, "key '" + path + "' must be an integer");
        case FieldKind::string_list:
            if (!v.is_array()) throw ParseError(ParseError::Kind::malformed, "key '" + path + "' must be a list");
            for (const auto& x : v)
                if (!x.is_string()) throw ParseError(ParseError::Kind::malformed, "key '" + path + "' must hold strings");
            return v;
        case FieldKind::map_list: {
            if (!v.is_array()) throw ParseError(ParseError::Kind::malformed, "key '" + path + "' must be a list");
            json out = json::array();
            for (std::size_t i = 0; i < v.size(); ++i) {
                const auto item_path = path + "[" + std::to_string(i) + "]";
                if (!v[i].is_object()) throw ParseError(ParseError::Kind::malformed, item_path + " must be an object");
                json item = json::object();
                for (const auto& c : f.children) {
                    auto it = v[i].find(c.key);
                    if (it == v[i].end()) {
                        if (c.required)
                            throw ParseError(ParseError::Kind::missing_key, "missing key '" + item_path + "." + c.key + "'");
                        continue;
                    }
                    item[c.key] = check_json_value(*it, c, item_path + "." + c.key);
                }
                out.push_back(std::move(item));
            }
            return out;
        }
    }
    return nullptr;
}

Structured parse_json(std::string_view text, const Schema& schema) {
    json j;
    try {
        j = json::parse(first_json_object(text));
    } catch (const json::parse_error& e) {
        throw ParseError(ParseError::Kind::malformed, std::string("invalid JSON: ") + e.what());
    }
    Structured out;
    out.payload = json::object();
    if (schema.validity_key) {
        auto it = j.find(*schema.validity_key);
        if (it == j.end()) throw ParseError(ParseError::Kind::missing_key, "missing key '" + *schema.validity_key + "'");
        out.self_valid = check_json_value(*it, Field{*schema.validity_key, FieldKind::boolean, true, {}}, *schema.validity_key)
                             .get<bool>();
    }
    for (const auto& f : schema.fields) {
        auto it = j.find(f.key);
        if (it == j.end()) {
            if (f.required && out.self_valid) throw ParseError(ParseError::Kind::missing_key, "missing key '" + f.key + "'");
            continue;
        }
        try {
            out.payload[f.key] = check_json_value(*it, f, f.key);
        } catch (const ParseError&) {
            if (out.self_valid) throw;
        }
    }
    return out;
}

}  // namespace

std::string strip_scalar(std::string_view value) {
    auto v = trim(value);
    auto strip_quotes = [](std::string_view s) {
        if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\'')))
            return trim(s.substr(1, s.size() - 2));
        return s;
    };
    v = strip_quotes(v);
    if (v.size() >= 2 && ((v.front() == '[' && v.back() == ']') || (v.front() == '(' && v.back() == ')')))
        v = strip_quotes(trim(v.substr(1, v.size() - 2)));
    return std::string(v);
}

Structured parse_structured(std::string_view text, const Schema& schema) {
    if (schema.dialect == Dialect::json) return parse_json(text, schema);
    Structured out;
    out.payload = parse_mapping(split_lines(text), schema.fields, "", schema.validity_key, &out.self_valid);
    return out;
}

}  // namespace intentkit
