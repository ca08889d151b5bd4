#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace intentkit {

enum class Provenance { seed, generated, merged, proposed, enriched };
enum class IntentStatus { active, retired };

std::string_view to_string(Provenance p);
std::string_view to_string(IntentStatus s);
Provenance provenance_from_string(std::string_view s);
IntentStatus status_from_string(std::string_view s);

// Intents are identified by their (topic, subtopic) labels, rendered as "topic.subtopic".
struct IntentKey {
    std::string topic;
    std::string subtopic;

    std::string str() const { return topic + "." + subtopic; }
    // Splits on the first '.'; nullopt when either side is empty.
    static std::optional<IntentKey> parse(std::string_view dotted);

    auto operator<=>(const IntentKey&) const = default;
    bool operator==(const IntentKey&) const = default;
};

struct Intent {
    std::string topic;
    std::string topic_description;
    std::string subtopic;
    std::string subtopic_description;
    std::vector<std::string> examples;
    int relevance = 0;
    Provenance provenance = Provenance::seed;
    IntentStatus status = IntentStatus::active;

    IntentKey key() const { return {topic, subtopic}; }
    bool active() const { return status == IntentStatus::active; }

    bool operator==(const Intent&) const = default;
};

// Throws InvariantViolation if a single intent is malformed.
void check_intent(const Intent& intent);

// The evolving taxonomy. Every mutation bumps the version and appends the action id to history.
class IntentSet {
  public:
    IntentSet() = default;

    // Rebuilds a set from persisted parts, verifying every invariant.
    static IntentSet from_parts(std::vector<Intent> intents, std::uint64_t version,
                                std::vector<std::string> history,
                                std::map<std::string, std::string> annotations);

    const std::map<IntentKey, Intent>& intents() const { return intents_; }
    std::uint64_t version() const { return version_; }
    const std::vector<std::string>& history() const { return history_; }

    // Free-form metadata carried through persistence (e.g. config digest). Not versioned.
    std::map<std::string, std::string>& annotations() { return annotations_; }
    const std::map<std::string, std::string>& annotations() const { return annotations_; }

    const Intent* find(const IntentKey& key) const;
    const Intent* find_active(const IntentKey& key) const;
    bool contains(const IntentKey& key) const { return find(key) != nullptr; }

    std::vector<const Intent*> active() const;
    std::size_t active_count() const;
    std::size_t size() const { return intents_.size(); }
    bool empty() const { return intents_.empty(); }

    void add(Intent intent, const std::string& action_id);
    // Replaces an existing intent with the same key.
    void update(Intent intent, const std::string& action_id);
    void retire(const IntentKey& key, const std::string& action_id);

    bool operator==(const IntentSet&) const = default;

  private:
    void bump(const std::string& action_id);

    std::map<IntentKey, Intent> intents_;
    std::uint64_t version_ = 0;
    std::vector<std::string> history_;
    std::map<std::string, std::string> annotations_;
};

enum class QuerySource { proxy_labeled, unlabeled, synthetic };

std::string_view to_string(QuerySource s);
QuerySource query_source_from_string(std::string_view s);

struct Query {
    std::string raw;
    std::string normalized;
    QuerySource source = QuerySource::unlabeled;
    std::optional<std::string> label;
    std::string id;

    bool operator==(const Query&) const = default;
};

// Stable id of a normalized utterance.
std::string query_id(std::string_view normalized);

class Corpus {
  public:
    Corpus() = default;

    // Returns false (and drops the query) if its id is already present.
    bool add(Query query);

    const std::vector<Query>& queries() const { return queries_; }
    std::size_t size() const { return queries_.size(); }
    bool empty() const { return queries_.empty(); }
    bool contains_id(const std::string& id) const { return index_.count(id) != 0; }
    const Query* find_id(const std::string& id) const;
    const Query* find_normalized(std::string_view normalized) const;

    auto begin() const { return queries_.begin(); }
    auto end() const { return queries_.end(); }

  private:
    std::vector<Query> queries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// ---- agent actions -------------------------------------------------------------------------

enum class ActionKind { generate, merge, propose, judge, refine, add_examples };
std::string_view to_string(ActionKind k);

enum class RejectReason { self_invalid, unknown_intent, fabricated_example, structural, parse_error };
std::string_view to_string(RejectReason r);

struct Verdict {
    bool accepted = false;
    RejectReason reason = RejectReason::structural;
    std::string detail;

    static Verdict accept() { return {true, RejectReason::structural, {}}; }
    static Verdict reject(RejectReason reason, std::string detail) {
        return {false, reason, std::move(detail)};
    }
    std::string str() const;
};

struct GeneratedSubtopic {
    std::string name;
    std::string description;
    std::vector<std::string> examples;
    int relevance = 0;
};

struct GeneratePayload {
    std::string topic;
    std::string topic_description;
    std::vector<GeneratedSubtopic> subtopics;
};

struct MergePayload {
    std::vector<std::string> pair;
    std::string keep;
    std::string eliminate;
    std::vector<std::string> keep_examples;
    std::vector<std::string> eliminate_examples;
};

struct ProposedItem {
    std::string example;
    std::string proposed_intent;
};

struct ProposePayload {
    std::vector<ProposedItem> items;
};

// Shared shape of the judge, refiner and examples-adder answers.
struct IntentEchoPayload {
    std::string intent;  // "topic.subtopic"
    std::string topic_description;
    std::string subtopic_description;
    std::vector<std::string> examples;
    int relevance = 0;
};

using ActionPayload =
    std::variant<std::monostate, GeneratePayload, MergePayload, ProposePayload, IntentEchoPayload>;

struct AgentAction {
    std::string id;
    ActionKind kind = ActionKind::generate;
    std::string raw_response;
    ActionPayload parsed;
    bool self_valid = false;
    Verdict verdict;
};

// ---- audit trail ---------------------------------------------------------------------------

struct AuditRecord {
    std::uint64_t seq = 0;
    std::string timestamp;
    std::string agent;
    std::string prompt_digest;
    std::uint64_t seed = 0;
    std::string model;
    int attempts = 0;
    std::string outcome;  // "ok" or the error class
    std::string verdict;
    std::uint64_t version_before = 0;
    std::uint64_t version_after = 0;
};

// Append-only log. A record is opened when an LLM call starts and written once closed; records
// still open when the log is destroyed are written with verdict "unclosed".
class AuditLog {
  public:
    using Clock = std::function<std::string()>;

    AuditLog();
    explicit AuditLog(std::string path, Clock clock = {});
    ~AuditLog();

    AuditLog(const AuditLog&) = delete;
    AuditLog& operator=(const AuditLog&) = delete;

    std::uint64_t open(AuditRecord record);
    void close(std::uint64_t seq, const std::string& verdict, std::uint64_t version_after);
    // Convenience for records that are complete at creation.
    void append(AuditRecord record);

    std::vector<AuditRecord> records() const;
    std::size_t size() const;

    static Clock wall_clock();
    static Clock logical_clock();

  private:
    void write_line(const AuditRecord& record);

    mutable std::mutex mutex_;
    std::string path_;
    Clock clock_;
    std::uint64_t next_seq_ = 1;
    std::map<std::uint64_t, AuditRecord> open_;
    std::vector<AuditRecord> closed_;
};

std::string audit_record_to_json(const AuditRecord& record);

}  // namespace intentkit
