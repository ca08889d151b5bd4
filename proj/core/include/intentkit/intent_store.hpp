#pragma once

#include <optional>
#include <string>
#include <vector>

#include "intentkit/model.hpp"

namespace intentkit {

// Intent-set file: line-delimited JSON. The first line is a header record carrying the format
// name, schema version, set version, history and annotations; each following line is one intent.
// Keys are emitted in sorted order so the file is stable and diffable.
inline constexpr int kIntentSetSchemaVersion = 1;

std::string serialize_intent_set(const IntentSet& set);
IntentSet parse_intent_set(const std::string& text, const std::string& source_name = "<memory>");

void save_intent_set(const IntentSet& set, const std::string& path);
IntentSet load_intent_set(const std::string& path);

struct IntentRemoval {
    IntentKey key;
    // Present when the intent still exists in the target set, retired.
    std::optional<Intent> retired_as;
};

struct IntentModification {
    Intent before;
    Intent after;
};

struct IntentSetDiff {
    std::vector<Intent> added;
    std::vector<IntentRemoval> removed;
    std::vector<IntentModification> modified;

    bool empty() const { return added.empty() && removed.empty() && modified.empty(); }
};

// "Removed" means the intent is no longer active in b (retired or gone); "added" means it became
// active; "modified" covers any other content change.
IntentSetDiff diff_intent_sets(const IntentSet& a, const IntentSet& b);

// Applies a diff to a's intent collection; the result's intents equal b's.
IntentSet apply_diff(const IntentSet& a, const IntentSetDiff& diff, const std::string& action_id);

std::string render_diff(const IntentSetDiff& diff);

}  // namespace intentkit
