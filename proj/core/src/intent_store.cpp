#include "intentkit/intent_store.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "intentkit/error.hpp"

namespace intentkit {

using nlohmann::json;

namespace {

constexpr const char* kFormatName = "intentkit-intent-set";

json intent_to_json(const Intent& intent) {
    return {
        {"topic", intent.topic},
        {"topic_description", intent.topic_description},
        {"subtopic", intent.subtopic},
        {"subtopic_description", intent.subtopic_description},
        {"examples", intent.examples},
        {"relevance", intent.relevance},
        {"provenance", to_string(intent.provenance)},
        {"status", to_string(intent.status)},
    };
}

template <typename T>
T required(const json& j, const char* key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end())
        throw ParseError(ParseError::Kind::missing_key, where + ": missing key '" + key + "'");
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw ParseError(ParseError::Kind::malformed, where + ": key '" + key + "' has the wrong type");
    }
}

Intent intent_from_json(const json& j, const std::string& where) {
    if (!j.is_object()) throw ParseError(ParseError::Kind::malformed, where + ": expected an object");
    Intent intent;
    intent.topic = required<std::string>(j, "topic", where);
    intent.topic_description = required<std::string>(j, "topic_description", where);
    intent.subtopic = required<std::string>(j, "subtopic", where);
    intent.subtopic_description = required<std::string>(j, "subtopic_description", where);
    intent.examples = required<std::vector<std::string>>(j, "examples", where);
    intent.relevance = required<int>(j, "relevance", where);
    try {
        intent.provenance = provenance_from_string(required<std::string>(j, "provenance", where));
        intent.status = status_from_string(required<std::string>(j, "status", where));
    } catch (const ParseError& e) {
        throw ParseError(e.kind(), where + ": " + e.what());
    }
    return intent;
}

}  // namespace

std::string serialize_intent_set(const IntentSet& set) {
    json header = {
        {"format", kFormatName},
        {"schema_version", kIntentSetSchemaVersion},
        {"version", set.version()},
        {"history", set.history()},
        {"annotations", set.annotations()},
        {"intent_count", set.size()},
    };
    std::string out = header.dump() + "\n";
    for (const auto& [key, intent] : set.intents()) out += intent_to_json(intent).dump() + "\n";
    return out;
}

IntentSet parse_intent_set(const std::string& text, const std::string& source_name) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::optional<json> header;
    std::vector<Intent> intents;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto where = source_name + ":" + std::to_string(line_no);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(ParseError::Kind::malformed, where + ": " + e.what());
        }
        if (!header) {
            if (!j.is_object() || j.value("format", "") != kFormatName)
                throw ParseError(ParseError::Kind::malformed, where + ": not an intent-set header");
            auto schema = required<int>(j, "schema_version", where);
            if (schema != kIntentSetSchemaVersion)
                throw ParseError(ParseError::Kind::malformed,
                                 where + ": unsupported schema_version " + std::to_string(schema));
            header = std::move(j);
            continue;
        }
        intents.push_back(intent_from_json(j, where));
    }
    if (!header) throw ParseError(ParseError::Kind::malformed, source_name + ": empty intent-set file");
    const auto where = source_name + ":1";
    auto count = required<std::size_t>(*header, "intent_count", where);
    if (count != intents.size())
        throw InvariantViolation("intent_count", source_name + ": header declares " + std::to_string(count) +
                                                     " intents, file holds " + std::to_string(intents.size()));
    return IntentSet::from_parts(std::move(intents), required<std::uint64_t>(*header, "version", where),
                                 required<std::vector<std::string>>(*header, "history", where),
                                 required<std::map<std::string, std::string>>(*header, "annotations", where));
}

void save_intent_set(const IntentSet& set, const std::string& path) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write intent set to " + path);
    out << serialize_intent_set(set);
    if (!out) throw IoError("write failed for " + path);
}

IntentSet load_intent_set(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read intent set " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_intent_set(buf.str(), path);
}

IntentSetDiff diff_intent_sets(const IntentSet& a, const IntentSet& b) {
    IntentSetDiff diff;
    std::set<IntentKey> keys;
    for (const auto& [k, _] : a.intents()) keys.insert(k);
    for (const auto& [k, _] : b.intents()) keys.insert(k);
    for (const auto& key : keys) {
        const auto* before = a.find(key);
        const auto* after = b.find(key);
        const bool was_active = before && before->active();
        const bool is_active = after && after->active();
        if (before && after && *before == *after) continue;
        if (!was_active && is_active) {
            diff.added.push_back(*after);
        } else if (was_active && !is_active) {
            diff.removed.push_back({key, after ? std::optional<Intent>(*after) : std::nullopt});
        } else if (before && after) {
            diff.modified.push_back({*before, *after});
        } else if (after) {
            // Retired intent that did not exist in a.
            diff.modified.push_back({Intent{}, *after});
        } else {
            diff.removed.push_back({key, std::nullopt});
        }
    }
    return diff;
}

IntentSet apply_diff(const IntentSet& a, const IntentSetDiff& diff, const std::string& action_id) {
    std::map<IntentKey, Intent> intents = a.intents();
    for (const auto& intent : diff.added) intents[intent.key()] = intent;
    for (const auto& m : diff.modified) intents[m.after.key()] = m.after;
    for (const auto& r : diff.removed) {
        if (r.retired_as)
            intents[r.key] = *r.retired_as;
        else
            intents.erase(r.key);
    }
    std::vector<Intent> list;
    for (auto& [k, intent] : intents) list.push_back(std::move(intent));
    auto history = a.history();
    history.push_back(action_id);
    return IntentSet::from_parts(std::move(list), a.version() + 1, std::move(history), a.annotations());
}

std::string render_diff(const IntentSetDiff& diff) {
    std::ostringstream os;
    for (const auto& i : diff.added) os << "+ " << i.key().str() << " (" << i.examples.size() << " examples)\n";
    for (const auto& r : diff.removed)
        os << "- " << r.key.str() << (r.retired_as ? " (retired)" : "") << "\n";
    for (const auto& m : diff.modified) {
        os << "~ " << m.after.key().str();
        if (m.before.examples != m.after.examples)
            os << " examples " << m.before.examples.size() << " -> " << m.after.examples.size();
        if (m.before.provenance != m.after.provenance)
            os << " provenance " << to_string(m.before.provenance) << " -> " << to_string(m.after.provenance);
        os << "\n";
    }
    return os.str();
}

}  // namespace intentkit
