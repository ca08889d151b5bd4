#include "intentkit/model.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include <nlohmann/json.hpp>

#include "intentkit/error.hpp"
#include "intentkit/rng.hpp"

namespace intentkit {

std::string_view to_string(Provenance p) {
    switch (p) {
        case Provenance::seed: return "seed";
        case Provenance::generated: return "generated";
        case Provenance::merged: return "merged";
        case Provenance::proposed: return "proposed";
        case Provenance::enriched: return "enriched";
    }
    return "seed";
}

std::string_view to_string(IntentStatus s) {
    return s == IntentStatus::active ? "active" : "retired";
}

Provenance provenance_from_string(std::string_view s) {
    if (s == "seed") return Provenance::seed;
    if (s == "generated") return Provenance::generated;
    if (s == "merged") return Provenance::merged;
    if (s == "proposed") return Provenance::proposed;
    if (s == "enriched") return Provenance::enriched;
    throw ParseError(ParseError::Kind::bad_enum, "unknown provenance: " + std::string(s));
}

IntentStatus status_from_string(std::string_view s) {
    if (s == "active") return IntentStatus::active;
    if (s == "retired") return IntentStatus::retired;
    throw ParseError(ParseError::Kind::bad_enum, "unknown status: " + std::string(s));
}

std::optional<IntentKey> IntentKey::parse(std::string_view dotted) {
    auto dot = dotted.find('.');
    if (dot == std::string_view::npos || dot == 0 || dot + 1 == dotted.size()) return std::nullopt;
    return IntentKey{std::string(dotted.substr(0, dot)), std::string(dotted.substr(dot + 1))};
}

void check_intent(const Intent& intent) {
    const auto name = intent.topic + "." + intent.subtopic;
    if (intent.topic.empty() || intent.subtopic.empty())
        throw InvariantViolation("non_empty_labels", "intent has an empty topic or subtopic: '" + name + "'");
    if (intent.topic.find('.') != std::string::npos)
        throw InvariantViolation("topic_without_dot", "topic label contains '.': '" + intent.topic + "'");
    if (intent.relevance < 0 || intent.relevance > 100)
        throw InvariantViolation("relevance_range", "relevance " + std::to_string(intent.relevance) +
                                                        " outside [0, 100] for " + name);
    if (intent.active() &&
        (intent.provenance == Provenance::generated || intent.provenance == Provenance::merged) &&
        intent.examples.size() < 2)
        throw InvariantViolation("min_examples", name + " is " + std::string(to_string(intent.provenance)) +
                                                     " but holds fewer than 2 examples");
}

IntentSet IntentSet::from_parts(std::vector<Intent> intents, std::uint64_t version,
                                std::vector<std::string> history,
                                std::map<std::string, std::string> annotations) {
    IntentSet set;
    for (auto& intent : intents) {
        check_intent(intent);
        auto key = intent.key();
        if (!set.intents_.emplace(key, std::move(intent)).second)
            throw InvariantViolation("key_uniqueness", "duplicate intent " + key.str());
    }
    set.version_ = version;
    set.history_ = std::move(history);
    set.annotations_ = std::move(annotations);
    return set;
}

const Intent* IntentSet::find(const IntentKey& key) const {
    auto it = intents_.find(key);
    return it == intents_.end() ? nullptr : &it->second;
}

const Intent* IntentSet::find_active(const IntentKey& key) const {
    const auto* intent = find(key);
    return intent && intent->active() ? intent : nullptr;
}

std::vector<const Intent*> IntentSet::active() const {
    std::vector<const Intent*> out;
    for (const auto& [key, intent] : intents_)
        if (intent.active()) out.push_back(&intent);
    return out;
}

std::size_t IntentSet::active_count() const {
    std::size_t n = 0;
    for (const auto& [key, intent] : intents_) n += intent.active() ? 1 : 0;
    return n;
}

void IntentSet::add(Intent intent, const std::string& action_id) {
    check_intent(intent);
    auto key = intent.key();
    if (intents_.count(key)) throw InvariantViolation("key_uniqueness", "duplicate intent " + key.str());
    intents_.emplace(key, std::move(intent));
    bump(action_id);
}

void IntentSet::update(Intent intent, const std::string& action_id) {
    check_intent(intent);
    auto it = intents_.find(intent.key());
    if (it == intents_.end()) throw InvariantViolation("exists", "no intent " + intent.key().str() + " to update");
    // Retired intents keep their examples.
    if (!it->second.active()) {
        for (const auto& ex : it->second.examples)
            if (std::find(intent.examples.begin(), intent.examples.end(), ex) == intent.examples.end())
                throw InvariantViolation("retired_examples_preserved",
                                         "update would drop examples of retired " + intent.key().str());
    }
    it->second = std::move(intent);
    bump(action_id);
}

void IntentSet::retire(const IntentKey& key, const std::string& action_id) {
    auto it = intents_.find(key);
    if (it == intents_.end()) throw InvariantViolation("exists", "no intent " + key.str() + " to retire");
    it->second.status = IntentStatus::retired;
    bump(action_id);
}

void IntentSet::bump(const std::string& action_id) {
    ++version_;
    history_.push_back(action_id);
}

std::string_view to_string(QuerySource s) {
    switch (s) {
        case QuerySource::proxy_labeled: return "proxy_labeled";
        case QuerySource::unlabeled: return "unlabeled";
        case QuerySource::synthetic: return "synthetic";
    }
    return "unlabeled";
}

QuerySource query_source_from_string(std::string_view s) {
    if (s == "proxy_labeled") return QuerySource::proxy_labeled;
    if (s == "unlabeled") return QuerySource::unlabeled;
    if (s == "synthetic") return QuerySource::synthetic;
    throw ParseError(ParseError::Kind::bad_enum, "unknown query source: " + std::string(s));
}

std::string query_id(std::string_view normalized) { return to_hex(fnv1a64(normalized)); }

bool Corpus::add(Query query) {
    if (query.id.empty()) query.id = query_id(query.normalized);
    auto it = index_.find(query.id);
    if (it != index_.end()) {
        if (queries_[it->second].normalized != query.normalized)
            throw InvariantViolation("id_collision", "query id collision between '" +
                                                         queries_[it->second].normalized + "' and '" +
                                                         query.normalized + "'");
        return false;
    }
    index_.emplace(query.id, queries_.size());
    queries_.push_back(std::move(query));
    return true;
}

const Query* Corpus::find_id(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &queries_[it->second];
}

const Query* Corpus::find_normalized(std::string_view normalized) const {
    const auto* q = find_id(query_id(normalized));
    return q && q->normalized == normalized ? q : nullptr;
}

std::string_view to_string(ActionKind k) {
    switch (k) {
        case ActionKind::generate: return "generate";
        case ActionKind::merge: return "merge";
        case ActionKind::propose: return "propose";
        case ActionKind::judge: return "judge";
        case ActionKind::refine: return "refine";
        case ActionKind::add_examples: return "add_examples";
    }
    return "generate";
}

std::string_view to_string(RejectReason r) {
    switch (r) {
        case RejectReason::self_invalid: return "self_invalid";
        case RejectReason::unknown_intent: return "unknown_intent";
        case RejectReason::fabricated_example: return "fabricated_example";
        case RejectReason::structural: return "structural";
        case RejectReason::parse_error: return "parse_error";
    }
    return "structural";
}

std::string Verdict::str() const {
    if (accepted) return "accepted";
    std::string out = "rejected(" + std::string(to_string(reason)) + ")";
    if (!detail.empty()) out += ": " + detail;
    return out;
}

// ---- audit ---------------------------------------------------------------------------------

std::string audit_record_to_json(const AuditRecord& r) {
    nlohmann::json j = {
        {"seq", r.seq},
        {"timestamp", r.timestamp},
        {"agent", r.agent},
        {"prompt_digest", r.prompt_digest},
        {"seed", r.seed},
        {"model", r.model},
        {"attempts", r.attempts},
        {"outcome", r.outcome},
        {"verdict", r.verdict},
        {"version_before", r.version_before},
        {"version_after", r.version_after},
    };
    return j.dump();
}

AuditLog::AuditLog() : clock_(wall_clock()) {}

AuditLog::AuditLog(std::string path, Clock clock)
    : path_(std::move(path)), clock_(clock ? std::move(clock) : wall_clock()) {}

AuditLog::~AuditLog() {
    std::lock_guard lock(mutex_);
    for (auto& [seq, record] : open_) {
        record.verdict = "unclosed";
        record.version_after = record.version_before;
        try {
            write_line(record);
        } catch (...) {
        }
        closed_.push_back(record);
    }
    open_.clear();
}

std::uint64_t AuditLog::open(AuditRecord record) {
    std::lock_guard lock(mutex_);
    record.seq = next_seq_++;
    if (record.timestamp.empty()) record.timestamp = clock_();
    auto seq = record.seq;
    open_.emplace(seq, std::move(record));
    return seq;
}

void AuditLog::close(std::uint64_t seq, const std::string& verdict, std::uint64_t version_after) {
    std::lock_guard lock(mutex_);
    auto it = open_.find(seq);
    if (it == open_.end()) return;
    it->second.verdict = verdict;
    it->second.version_after = version_after;
    write_line(it->second);
    closed_.push_back(std::move(it->second));
    open_.erase(it);
}

void AuditLog::append(AuditRecord record) {
    auto seq = open(record);
    std::lock_guard lock(mutex_);
    auto it = open_.find(seq);
    write_line(it->second);
    closed_.push_back(std::move(it->second));
    open_.erase(it);
}

std::vector<AuditRecord> AuditLog::records() const {
    std::lock_guard lock(mutex_);
    return closed_;
}

std::size_t AuditLog::size() const {
    std::lock_guard lock(mutex_);
    return closed_.size() + open_.size();
}

void AuditLog::write_line(const AuditRecord& record) {
    if (path_.empty()) return;
    std::ofstream out(path_, std::ios::app);
    if (!out) throw IoError("cannot append to audit log " + path_);
    out << audit_record_to_json(record) << '\n';
}

AuditLog::Clock AuditLog::wall_clock() {
    return [] {
        auto now = std::chrono::system_clock::now();
        auto t = std::chrono::system_clock::to_time_t(now);
        std::tm tm{};
        gmtime_r(&t, &tm);
        std::ostringstream os;
        os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
        return os.str();
    };
}

AuditLog::Clock AuditLog::logical_clock() {
    auto counter = std::make_shared<std::uint64_t>(0);
    return [counter] {
        std::ostringstream os;
        os << "tick-" << std::setw(8) << std::setfill('0') << ++*counter;
        return os.str();
    };
}

}  // namespace intentkit
