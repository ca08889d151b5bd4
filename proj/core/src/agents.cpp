#include "intentkit/agents.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "intentkit/dataset.hpp"
#include "intentkit/error.hpp"
#include "intentkit/preprocess.hpp"
#include "intentkit/rng.hpp"

namespace intentkit {

using nlohmann::json;
using FK = FieldKind;

void AgentConfig::validate() const {
    if (max_consecutive_failures < 1) throw ConfigError("max_consecutive_failures must be >= 1");
    if (max_merger_calls < 1) throw ConfigError("max_merger_calls must be >= 1");
    if (sample_size < 1) throw ConfigError("sample_size must be >= 1");
    if (generator_budget < 1 || proposer_budget < 1 || judge_budget < 1 || refiner_budget < 1 || adder_budget < 1)
        throw ConfigError("agent retry budgets must be >= 1");
}

std::string_view to_string(AgentKind k) {
    switch (k) {
        case AgentKind::generator: return "generator";
        case AgentKind::merger: return "merger";
        case AgentKind::proposer: return "proposer";
        case AgentKind::judge: return "judge";
        case AgentKind::refiner: return "refiner";
        case AgentKind::examples_adder: return "examples_adder";
    }
    return "generator";
}

ActionKind action_kind(AgentKind k) {
    switch (k) {
        case AgentKind::generator: return ActionKind::generate;
        case AgentKind::merger: return ActionKind::merge;
        case AgentKind::proposer: return ActionKind::propose;
        case AgentKind::judge: return ActionKind::judge;
        case AgentKind::refiner: return ActionKind::refine;
        case AgentKind::examples_adder: return ActionKind::add_examples;
    }
    return ActionKind::generate;
}

std::string_view to_string(ProposalState s) {
    switch (s) {
        case ProposalState::proposed: return "proposed";
        case ProposalState::judged_ok: return "judged_ok";
        case ProposalState::refined: return "refined";
        case ProposalState::rejected: return "rejected";
    }
    return "proposed";
}

AgentRuntime::AgentRuntime(LlmClient& client, const PromptLibrary& prompts, AgentConfig config, WarningSink warn)
    : client_(client), prompts_(prompts), config_(std::move(config)), sink_(std::move(warn)) {
    config_.validate();
}

std::uint64_t AgentRuntime::next_call_index(AgentKind kind) { return counters_[static_cast<int>(kind)]++; }

std::string AgentRuntime::next_action_id(AgentKind kind) {
    std::ostringstream os;
    os << to_string(action_kind(kind)) << "-" << std::setw(6) << std::setfill('0') << ++action_counter_;
    return os.str();
}

void AgentRuntime::warn(const std::string& message) {
    warnings_.push_back(message);
    if (sink_) sink_(message);
}

// ---- rendering -----------------------------------------------------------------------------

namespace {

void render_intent(std::ostringstream& os, const Intent& i) {
    os << i.key().str() << "\n";
    if (!i.subtopic_description.empty()) os << "  description: " << i.subtopic_description << "\n";
    os << "  examples:\n";
    for (const auto& ex : i.examples) os << "  - " << ex << "\n";
}

}  // namespace

std::string render_intents(const std::vector<const Intent*>& intents) {
    std::ostringstream os;
    for (const auto* i : intents) render_intent(os, *i);
    return os.str();
}

std::string render_intent_set(const IntentSet& set, std::uint64_t seed) {
    std::map<std::string, std::vector<const Intent*>> by_topic;
    for (const auto* i : set.active()) by_topic[i->topic].push_back(i);
    std::vector<std::string> topics;
    for (const auto& [t, _] : by_topic) topics.push_back(t);
    Rng rng(seed);
    rng.shuffle(topics);
    std::ostringstream os;
    for (std::size_t k = 0; k < topics.size(); ++k) {
        if (k) os << "\n";
        for (const auto* i : by_topic[topics[k]]) render_intent(os, *i);
    }
    return os.str();
}

PromptPair render_agent_prompt(const PromptLibrary& prompts, AgentKind kind, Slots slots, const std::string& institution) {
    slots["institution"] = institution;
    return {prompts.render("agent_system", slots), prompts.render(std::string(to_string(kind)), slots)};
}

// ---- exact match ---------------------------------------------------------------------------

ExampleIndex::ExampleIndex(const std::vector<std::string>& texts) {
    for (const auto& t : texts) add(t);
}

void ExampleIndex::add(const std::string& text) { map_.emplace(normalize(text), text); }

std::optional<std::string> ExampleIndex::resolve(const std::string& cited) const {
    auto it = map_.find(normalize(cited));
    if (it == map_.end()) return std::nullopt;
    return it->second;
}

// ---- schemas and payloads ------------------------------------------------------------------

const Schema& generator_schema() {
    static const Schema s{Dialect::yaml,
                          {{"data_reasoning", FK::scalar, false, {}},
                           {"overall_topic", FK::scalar, true, {}},
                           {"overall_topic_description", FK::scalar, true, {}},
                           {"sub_topics", FK::map_list, true,
                            {{"sub_topic", FK::scalar, true, {}},
                             {"description", FK::scalar, true, {}},
                             {"examples", FK::string_list, true, {}},
                             {"relevance", FK::integer, true, {}}}}},
                          std::nullopt};
    return s;
}

const Schema& merger_schema() {
    static const Schema s{Dialect::yaml,
                          {{"Reasoning_across_topics", FK::scalar, false, {}},
                           {"Reasoning_within_topics", FK::scalar, false, {}},
                           {"Pair", FK::string_list, true, {}},
                           {"Keep", FK::scalar, true, {}},
                           {"Keep Examples", FK::string_list, true, {}},
                           {"Eliminate", FK::scalar, true, {}},
                           {"Eliminate Examples", FK::string_list, true, {}},
                           {"Valid", FK::boolean, true, {}}},
                          std::string("Valid")};
    return s;
}

const Schema& proposer_schema() {
    static const Schema s{Dialect::yaml,
                          {{"Reasoning", FK::scalar, false, {}},
                           {"Examples", FK::map_list, true,
                            {{"example", FK::scalar, true, {}}, {"proposed_intent", FK::scalar, true, {}}}},
                           {"Valid", FK::boolean, true, {}}},
                          std::string("Valid")};
    return s;
}

const Schema& echo_schema() {
    static const Schema s{Dialect::yaml,
                          {{"Reasoning", FK::scalar, false, {}},
                           {"Topic", FK::scalar, true, {}},
                           {"Topic_description", FK::scalar, true, {}},
                           {"Sub_topic_description", FK::scalar, true, {}},
                           {"Topic_Examples", FK::string_list, true, {}},
                           {"Relevance", FK::integer, true, {}},
                           {"Worth_Adding", FK::boolean, true, {}}},
                          std::string("Worth_Adding")};
    return s;
}

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    auto it = j.find(key);
    return it == j.end() ? fallback : it->get<T>();
}

}  // namespace

GeneratePayload to_generate_payload(const json& j) {
    GeneratePayload p;
    p.topic = get_or<std::string>(j, "overall_topic", "");
    p.topic_description = get_or<std::string>(j, "overall_topic_description", "");
    for (const auto& s : j.value("sub_topics", json::array())) {
        GeneratedSubtopic g;
        g.name = get_or<std::string>(s, "sub_topic", "");
        g.description = get_or<std::string>(s, "description", "");
        g.examples = get_or<std::vector<std::string>>(s, "examples", {});
        g.relevance = get_or<int>(s, "relevance", 0);
        p.subtopics.push_back(std::move(g));
    }
    return p;
}

MergePayload to_merge_payload(const json& j) {
    MergePayload p;
    p.pair = get_or<std::vector<std::string>>(j, "Pair", {});
    p.keep = get_or<std::string>(j, "Keep", "");
    p.eliminate = get_or<std::string>(j, "Eliminate", "");
    p.keep_examples = get_or<std::vector<std::string>>(j, "Keep Examples", {});
    p.eliminate_examples = get_or<std::vector<std::string>>(j, "Eliminate Examples", {});
    return p;
}

ProposePayload to_propose_payload(const json& j) {
    ProposePayload p;
    for (const auto& item : j.value("Examples", json::array()))
        p.items.push_back({get_or<std::string>(item, "example", ""), get_or<std::string>(item, "proposed_intent", "")});
    return p;
}

IntentEchoPayload to_echo_payload(const json& j) {
    IntentEchoPayload p;
    p.intent = get_or<std::string>(j, "Topic", "");
    p.topic_description = get_or<std::string>(j, "Topic_description", "");
    p.subtopic_description = get_or<std::string>(j, "Sub_topic_description", "");
    p.examples = get_or<std::vector<std::string>>(j, "Topic_Examples", {});
    p.relevance = get_or<int>(j, "Relevance", 0);
    return p;
}

// ---- validation ----------------------------------------------------------------------------

namespace {

std::optional<IntentKey> parse_key(const std::string& s) {
    // generated subtopic names keep their spaces, so keys may contain them
    return IntentKey::parse(strip_scalar(s));
}

Verdict fabricated(const std::string& ex) { return Verdict::reject(RejectReason::fabricated_example, "'" + ex + "'"); }

bool in_range(int relevance) { return relevance >= 0 && relevance <= 100; }

}  // namespace

Verdict validate_generate(const GeneratePayload& p, bool self_valid, const SeedTopic& topic, const ExampleIndex& given) {
    if (!self_valid) return Verdict::reject(RejectReason::self_invalid, "");
    if (p.topic != topic.name)
        return Verdict::reject(RejectReason::structural, "overall_topic '" + p.topic + "' is not '" + topic.name + "'");
    if (p.subtopics.empty()) return Verdict::reject(RejectReason::structural, "no subtopics");
    std::set<std::string> names;
    std::set<std::string> used;
    for (const auto& s : p.subtopics) {
        if (s.name.empty() || s.name.find('.') != std::string::npos)
            return Verdict::reject(RejectReason::structural, "bad subtopic name '" + s.name + "'");
        if (!names.insert(s.name).second)
            return Verdict::reject(RejectReason::structural, "duplicate subtopic '" + s.name + "'");
        if (!in_range(s.relevance)) return Verdict::reject(RejectReason::structural, "relevance out of range");
        std::set<std::string> mine;
        for (const auto& ex : s.examples) {
            auto canon = given.resolve(ex);
            if (!canon) return fabricated(ex);
            if (mine.insert(*canon).second && !used.insert(*canon).second)
                return Verdict::reject(RejectReason::structural, "example in two subtopics: '" + ex + "'");
        }
        if (mine.size() < 2)
            return Verdict::reject(RejectReason::structural, "subtopic '" + s.name + "' has fewer than 2 examples");
    }
    return Verdict::accept();
}

std::vector<Intent> intents_from_generate(const GeneratePayload& p, const SeedTopic& topic, const ExampleIndex& given) {
    std::vector<Intent> out;
    for (const auto& s : p.subtopics) {
        Intent i;
        i.topic = topic.name;
        i.topic_description = p.topic_description.empty() ? topic.description : p.topic_description;
        i.subtopic = s.name;
        i.subtopic_description = s.description;
        for (const auto& ex : s.examples) {
            auto canon = *given.resolve(ex);
            if (std::find(i.examples.begin(), i.examples.end(), canon) == i.examples.end()) i.examples.push_back(canon);
        }
        i.relevance = s.relevance;
        i.provenance = Provenance::generated;
        out.push_back(std::move(i));
    }
    return out;
}

Verdict validate_merge(const MergePayload& p, bool self_valid, const IntentSet& set,
                       const std::vector<MergeAction>& accepted) {
    if (!self_valid) return Verdict::reject(RejectReason::self_invalid, "");
    if (p.pair.size() != 2) return Verdict::reject(RejectReason::structural, "pair must name two intents");
    auto a = parse_key(p.pair[0]);
    auto b = parse_key(p.pair[1]);
    auto keep = parse_key(p.keep);
    auto elim = parse_key(p.eliminate);
    if (!a || !b || !keep || !elim) return Verdict::reject(RejectReason::structural, "malformed topic.subtopic");
    if (*a == *b) return Verdict::reject(RejectReason::structural, "pair names the same intent twice");
    if (*keep == *elim) return Verdict::reject(RejectReason::structural, "keep equals eliminate");
    if (!((*keep == *a && *elim == *b) || (*keep == *b && *elim == *a)))
        return Verdict::reject(RejectReason::structural, "keep/eliminate do not match the pair");
    const auto* ki = set.find_active(*keep);
    const auto* ei = set.find_active(*elim);
    if (!ki) return Verdict::reject(RejectReason::unknown_intent, keep->str());
    if (!ei) return Verdict::reject(RejectReason::unknown_intent, elim->str());
    if (p.keep_examples.empty() || p.eliminate_examples.empty())
        return Verdict::reject(RejectReason::structural, "empty example list");
    ExampleIndex kx(ki->examples), exx(ei->examples);
    for (const auto& ex : p.keep_examples)
        if (!kx.contains(ex)) return fabricated(ex);
    for (const auto& ex : p.eliminate_examples)
        if (!exx.contains(ex)) return fabricated(ex);
    for (const auto& m : accepted)
        if ((m.keep == *keep && m.eliminate == *elim) || (m.keep == *elim && m.eliminate == *keep))
            return Verdict::reject(RejectReason::structural, "duplicate of an accepted merge");
    return Verdict::accept();
}

Verdict validate_proposal(const ProposePayload& p, bool self_valid, const IntentSet& working, const ExampleIndex& sample) {
    if (!self_valid) return Verdict::reject(RejectReason::self_invalid, "");
    if (p.items.empty()) return Verdict::reject(RejectReason::structural, "Valid is True but no examples given");
    std::map<std::string, IntentKey> seen;
    for (const auto& item : p.items) {
        auto key = parse_key(item.proposed_intent);
        if (!key) return Verdict::reject(RejectReason::structural, "malformed proposed_intent '" + item.proposed_intent + "'");
        if (working.contains(*key)) return Verdict::reject(RejectReason::structural, key->str() + " already exists");
        auto canon = sample.resolve(item.example);
        if (!canon) return fabricated(item.example);
        auto [it, fresh] = seen.emplace(*canon, *key);
        if (!fresh && it->second != *key)
            return Verdict::reject(RejectReason::structural, "example proposed for two intents: '" + item.example + "'");
    }
    return Verdict::accept();
}

Verdict validate_judge(const IntentEchoPayload& p, bool self_valid, const Proposal& proposal) {
    if (!self_valid) return Verdict::reject(RejectReason::self_invalid, "");
    auto key = parse_key(p.intent);
    if (!key || *key != proposal.key)
        return Verdict::reject(RejectReason::unknown_intent, "'" + p.intent + "' is not " + proposal.key.str());
    if (p.examples.empty()) return Verdict::reject(RejectReason::structural, "no examples echoed");
    ExampleIndex px(proposal.examples);
    for (const auto& ex : p.examples)
        if (!px.contains(ex)) return fabricated(ex);
    if (!in_range(p.relevance)) return Verdict::reject(RejectReason::structural, "relevance out of range");
    return Verdict::accept();
}

Verdict validate_refine(const IntentEchoPayload& p, bool self_valid, const IntentSet& set, const Proposal& proposal) {
    if (!self_valid) return Verdict::reject(RejectReason::self_invalid, "");
    auto key = parse_key(p.intent);
    if (!key) return Verdict::reject(RejectReason::structural, "malformed topic.subtopic '" + p.intent + "'");
    if (set.contains(*key)) return Verdict::reject(RejectReason::structural, key->str() + " already exists");
    if (p.examples.empty()) return Verdict::reject(RejectReason::structural, "no examples echoed");
    ExampleIndex px(proposal.examples);
    for (const auto& ex : p.examples)
        if (!px.contains(ex)) return fabricated(ex);
    if (!in_range(p.relevance)) return Verdict::reject(RejectReason::structural, "relevance out of range");
    return Verdict::accept();
}

Verdict validate_add_examples(const IntentEchoPayload& p, bool self_valid, const IntentSet& set,
                              const ExampleIndex& sample, std::size_t under_exampled_below) {
    if (!self_valid) return Verdict::reject(RejectReason::self_invalid, "");
    auto key = parse_key(p.intent);
    if (!key) return Verdict::reject(RejectReason::structural, "malformed topic.subtopic '" + p.intent + "'");
    const auto* target = set.find_active(*key);
    if (!target) return Verdict::reject(RejectReason::unknown_intent, key->str());
    if (target->examples.size() >= under_exampled_below)
        return Verdict::reject(RejectReason::structural, key->str() + " already has enough examples");
    if (p.examples.empty()) return Verdict::reject(RejectReason::structural, "no examples given");
    std::set<std::string> taken;
    for (const auto& [k, i] : set.intents())
        if (k != *key)
            for (const auto& ex : i.examples) taken.insert(normalize(ex));
    ExampleIndex own(target->examples);
    bool any_new = false;
    for (const auto& ex : p.examples) {
        auto canon = sample.resolve(ex);
        if (!canon) return fabricated(ex);
        if (taken.count(normalize(*canon)))
            return Verdict::reject(RejectReason::structural, "example already belongs to another intent: '" + ex + "'");
        any_new = any_new || !own.contains(*canon);
    }
    if (!any_new) return Verdict::reject(RejectReason::structural, "no new examples");
    return Verdict::accept();
}

// ---- calls ---------------------------------------------------------------------------------

namespace {

struct Ask {
    AgentAction action;
    Completion completion;
    std::optional<Structured> parsed;
    std::uint64_t seed = 0;
};

Ask ask(AgentRuntime& rt, AgentKind kind, Slots slots, const Schema& schema, std::uint64_t version, std::uint64_t seed) {
    Ask a;
    a.seed = seed;
    a.action.id = rt.next_action_id(kind);
    a.action.kind = action_kind(kind);
    auto prompt = render_agent_prompt(rt.prompts(), kind, std::move(slots), rt.config().institution);
    ChatRequest req;
    req.system_prompt = prompt.system;
    req.user_prompt = prompt.user;
    req.temperature = rt.config().temperature;
    req.max_output_tokens = rt.config().max_output_tokens;
    req.request_tag = std::string(to_string(kind));
    a.completion = rt.client().complete(req, {std::string(to_string(kind)), seed, version});
    a.action.raw_response = a.completion.response.text;
    try {
        a.parsed = parse_structured(a.action.raw_response, schema);
        a.action.self_valid = a.parsed->self_valid;
    } catch (const ParseError& e) {
        a.action.self_valid = false;
        a.action.verdict = Verdict::reject(RejectReason::parse_error, std::string(to_string(e.kind())) + ": " + e.what());
    }
    return a;
}

// Converts the parsed payload; a type mismatch becomes a parse_error verdict.
template <typename Fn>
bool convert_payload(Ask& a, Fn&& fn) {
    if (!a.parsed) return false;
    try {
        a.action.parsed = fn(a.parsed->payload);
        return true;
    } catch (const json::exception& e) {
        a.action.verdict = Verdict::reject(RejectReason::parse_error, std::string("malformed: ") + e.what());
        return false;
    }
}

void finish(AgentRuntime& rt, Ask& a, std::uint64_t version_after) {
    rt.client().close(a.completion, a.action.verdict.str(), version_after);
    rt.record(a.action);
}

std::uint64_t call_seed(AgentRuntime& rt, AgentKind kind) {
    return derive_seed(rt.config().shuffle_seed, to_string(kind), rt.next_call_index(kind));
}

}  // namespace

GeneratorResult run_intent_generator(AgentRuntime& rt, const SeedTopic& topic, const std::vector<std::string>& queries,
                                     std::uint64_t set_version) {
    if (queries.empty()) throw DataError("empty_topic", "no queries for topic " + topic.name);
    ExampleIndex given(queries);
    GeneratorResult result;
    for (int attempt = 1; attempt <= rt.config().generator_budget; ++attempt) {
        result.attempts = attempt;
        auto seed = call_seed(rt, AgentKind::generator);
        Slots slots{{"given_examples", bullet_list(queries)}, {"intent", topic.name}, {"intent_description", topic.description}};
        auto a = ask(rt, AgentKind::generator, std::move(slots), generator_schema(), set_version, seed);
        if (convert_payload(a, to_generate_payload)) {
            // The generator prompt has no validity field; a parsed answer counts as self-valid.
            const auto& p = std::get<GeneratePayload>(a.action.parsed);
            a.action.verdict = validate_generate(p, a.action.self_valid, topic, given);
            if (a.action.verdict.accepted) result.intents = intents_from_generate(p, topic, given);
        }
        finish(rt, a, set_version);
        if (a.action.verdict.accepted) {
            result.expanded = true;
            return result;
        }
    }
    throw BudgetExhausted("generator budget exhausted for topic " + topic.name, result.attempts);
}

MergerResult run_intent_merger(AgentRuntime& rt, const IntentSet& set) {
    MergerResult result;
    int consecutive = 0;
    const auto& cfg = rt.config();
    while (consecutive < cfg.max_consecutive_failures && result.calls < cfg.max_merger_calls) {
        ++result.calls;
        auto seed = call_seed(rt, AgentKind::merger);
        auto a = ask(rt, AgentKind::merger, {{"intent_set", render_intent_set(set, seed)}}, merger_schema(), set.version(),
                     seed);
        if (convert_payload(a, to_merge_payload)) {
            const auto& p = std::get<MergePayload>(a.action.parsed);
            a.action.verdict = validate_merge(p, a.action.self_valid, set, result.merges);
            if (a.action.verdict.accepted) {
                MergeAction m;
                m.id = a.action.id;
                m.keep = *parse_key(p.keep);
                m.eliminate = *parse_key(p.eliminate);
                ExampleIndex kx(set.find(m.keep)->examples), ex(set.find(m.eliminate)->examples);
                for (const auto& e : p.keep_examples) m.keep_examples.push_back(*kx.resolve(e));
                for (const auto& e : p.eliminate_examples) m.eliminate_examples.push_back(*ex.resolve(e));
                for (const auto& prev : result.merges)
                    if (prev.keep == m.keep || prev.keep == m.eliminate || prev.eliminate == m.keep ||
                        prev.eliminate == m.eliminate)
                        m.conflicting = true;
                result.merges.push_back(std::move(m));
            }
        }
        finish(rt, a, set.version());
        consecutive = a.action.verdict.accepted ? 0 : consecutive + 1;
    }
    if (result.calls >= cfg.max_merger_calls && consecutive < cfg.max_consecutive_failures)
        rt.warn("merger stopped at the call cap of " + std::to_string(cfg.max_merger_calls));
    return result;
}

void apply_merge(IntentSet& set, const MergeAction& merge) {
    const auto* keep = set.find(merge.keep);
    const auto* elim = set.find(merge.eliminate);
    if (!keep || !elim) throw ConflictingMerge(merge.id + ": intent missing from the set");
    if (!elim->active()) throw ConflictingMerge(merge.id + ": " + merge.eliminate.str() + " is already retired");
    if (!keep->active()) throw ConflictingMerge(merge.id + ": " + merge.keep.str() + " is retired");
    Intent merged = *keep;
    for (const auto& list : {keep->examples, merge.keep_examples, elim->examples, merge.eliminate_examples})
        for (const auto& ex : list)
            if (std::find(merged.examples.begin(), merged.examples.end(), ex) == merged.examples.end())
                merged.examples.push_back(ex);
    merged.provenance = Provenance::merged;
    auto key = merge.eliminate;
    set.update(std::move(merged), merge.id);
    set.retire(key, merge.id);
}

std::vector<MergeAction> review_merges(IntentSet& set, const std::vector<MergeAction>& merges,
                                       const ReviewDecision& decision) {
    std::vector<MergeAction> chosen;
    for (std::size_t i = 0; i < merges.size(); ++i) {
        bool take = decision.accept_prefix ? i < *decision.accept_prefix
                                           : (i < decision.verdicts.size() && decision.verdicts[i]);
        if (take) chosen.push_back(merges[i]);
    }
    IntentSet copy = set;
    for (const auto& m : chosen) apply_merge(copy, m);
    set = std::move(copy);
    return chosen;
}

std::vector<std::vector<std::string>> sample_blocks(const std::vector<std::string>& corpus, std::size_t sample_size,
                                                    std::uint64_t seed) {
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<std::vector<std::string>> blocks;
    for (std::size_t i = 0; i < order.size(); i += sample_size) {
        std::vector<std::string> block;
        for (std::size_t k = i; k < std::min(order.size(), i + sample_size); ++k) block.push_back(corpus[order[k]]);
        blocks.push_back(std::move(block));
    }
    return blocks;
}

namespace {

Intent temporary_intent(const Proposal& p) {
    Intent i;
    i.topic = p.key.topic;
    i.subtopic = p.key.subtopic;
    i.topic_description = p.topic_description;
    i.subtopic_description = p.subtopic_description;
    i.examples = p.examples;
    i.relevance = p.relevance;
    i.provenance = Provenance::proposed;
    return i;
}

std::string render_proposal(const Proposal& p) {
    std::string out = p.key.str() + "\nExamples:\n";
    for (const auto& ex : p.examples) out += "- " + ex + "\n";
    return out;
}

}  // namespace

std::vector<Proposal> run_intent_proposer(AgentRuntime& rt, IntentSet& working, const std::vector<std::string>& sample) {
    ExampleIndex index(sample);
    for (int attempt = 1; attempt <= rt.config().proposer_budget; ++attempt) {
        auto seed = call_seed(rt, AgentKind::proposer);
        Slots slots{{"intent_set", render_intent_set(working, seed)}, {"unlabelled_examples", bullet_list(sample)}};
        auto a = ask(rt, AgentKind::proposer, std::move(slots), proposer_schema(), working.version(), seed);
        std::vector<Proposal> out;
        if (convert_payload(a, to_propose_payload)) {
            const auto& p = std::get<ProposePayload>(a.action.parsed);
            a.action.verdict = validate_proposal(p, a.action.self_valid, working, index);
            if (a.action.verdict.accepted) {
                for (const auto& item : p.items) {
                    auto key = *parse_key(item.proposed_intent);
                    auto canon = *index.resolve(item.example);
                    auto it = std::find_if(out.begin(), out.end(), [&](const Proposal& x) { return x.key == key; });
                    if (it == out.end()) {
                        out.push_back({key, {}, ProposalState::proposed, "", "", 0, std::nullopt});
                        it = std::prev(out.end());
                    }
                    if (std::find(it->examples.begin(), it->examples.end(), canon) == it->examples.end())
                        it->examples.push_back(canon);
                }
                for (const auto& prop : out) working.add(temporary_intent(prop), a.action.id);
            }
        }
        finish(rt, a, working.version());
        if (a.action.verdict.accepted) return out;
        // Declining to propose is the default outcome, not a failure to retry.
        if (a.action.verdict.reason == RejectReason::self_invalid) return {};
    }
    rt.warn("proposer budget exhausted; sample of " + std::to_string(sample.size()) + " skipped");
    return {};
}

void run_intent_judge(AgentRuntime& rt, const IntentSet& context, Proposal& proposal) {
    for (int attempt = 1; attempt <= rt.config().judge_budget; ++attempt) {
        auto seed = call_seed(rt, AgentKind::judge);
        Slots slots{{"intent_set", render_intent_set(context, seed)}, {"proposed_intent", render_proposal(proposal)}};
        auto a = ask(rt, AgentKind::judge, std::move(slots), echo_schema(), context.version(), seed);
        if (convert_payload(a, to_echo_payload)) {
            const auto& p = std::get<IntentEchoPayload>(a.action.parsed);
            a.action.verdict = validate_judge(p, a.action.self_valid, proposal);
            if (a.action.verdict.accepted) {
                proposal.state = ProposalState::judged_ok;
                proposal.topic_description = p.topic_description;
                proposal.subtopic_description = p.subtopic_description;
                proposal.relevance = p.relevance;
            }
        }
        finish(rt, a, context.version());
        if (a.action.verdict.accepted) return;
        if (a.action.verdict.reason == RejectReason::self_invalid) break;
    }
    proposal.state = ProposalState::rejected;
}

std::optional<Intent> run_intent_refiner(AgentRuntime& rt, IntentSet& set, const IntentSet& context, Proposal& proposal) {
    for (int attempt = 1; attempt <= rt.config().refiner_budget; ++attempt) {
        auto seed = call_seed(rt, AgentKind::refiner);
        Slots slots{{"intent_set", render_intent_set(context, seed)}, {"proposed_intent", render_proposal(proposal)}};
        auto a = ask(rt, AgentKind::refiner, std::move(slots), echo_schema(), set.version(), seed);
        std::optional<Intent> added;
        if (convert_payload(a, to_echo_payload)) {
            const auto& p = std::get<IntentEchoPayload>(a.action.parsed);
            a.action.verdict = validate_refine(p, a.action.self_valid, set, proposal);
            if (a.action.verdict.accepted) {
                ExampleIndex px(proposal.examples);
                Intent i;
                auto key = *parse_key(p.intent);
                i.topic = key.topic;
                i.subtopic = key.subtopic;
                i.topic_description = p.topic_description;
                i.subtopic_description = p.subtopic_description;
                for (const auto& ex : p.examples) {
                    auto canon = *px.resolve(ex);
                    if (std::find(i.examples.begin(), i.examples.end(), canon) == i.examples.end()) i.examples.push_back(canon);
                }
                i.relevance = p.relevance;
                i.provenance = Provenance::proposed;
                set.add(i, a.action.id);
                proposal.state = ProposalState::refined;
                proposal.refined_as = key;
                added = std::move(i);
            }
        }
        finish(rt, a, set.version());
        if (added) return added;
        if (a.action.verdict.reason == RejectReason::self_invalid) break;
    }
    proposal.state = ProposalState::rejected;
    return std::nullopt;
}

std::optional<IntentKey> run_examples_adder(AgentRuntime& rt, IntentSet& set, const std::vector<std::string>& sample) {
    const auto threshold = rt.config().under_exampled_below;
    std::vector<const Intent*> under;
    for (const auto* i : set.active())
        if (i->examples.size() < threshold) under.push_back(i);
    if (under.empty()) return std::nullopt;
    ExampleIndex index(sample);
    for (int attempt = 1; attempt <= rt.config().adder_budget; ++attempt) {
        auto seed = call_seed(rt, AgentKind::examples_adder);
        Slots slots{{"example_subset", bullet_list(sample)},
                    {"intent_set", render_intent_set(set, seed)},
                    {"relevant_intents", render_intents(under)}};
        auto a = ask(rt, AgentKind::examples_adder, std::move(slots), echo_schema(), set.version(), seed);
        std::optional<IntentKey> updated;
        if (convert_payload(a, to_echo_payload)) {
            const auto& p = std::get<IntentEchoPayload>(a.action.parsed);
            a.action.verdict = validate_add_examples(p, a.action.self_valid, set, index, threshold);
            if (a.action.verdict.accepted) {
                auto key = *parse_key(p.intent);
                Intent i = *set.find(key);
                for (const auto& ex : p.examples) {
                    auto canon = *index.resolve(ex);
                    if (std::find(i.examples.begin(), i.examples.end(), canon) == i.examples.end()) i.examples.push_back(canon);
                }
                i.provenance = Provenance::enriched;
                set.update(std::move(i), a.action.id);
                updated = key;
            }
        }
        finish(rt, a, set.version());
        if (updated) return updated;
        if (a.action.verdict.reason == RejectReason::self_invalid) break;
    }
    return std::nullopt;
}

// ---- pipelines -----------------------------------------------------------------------------

HteResult hte_pipeline(AgentRuntime& rt, const std::vector<SeedTopic>& topics, const Corpus& proxy_corpus) {
    HteResult result;
    for (const auto& topic : topics) {
        std::vector<std::string> queries;
        for (const auto& q : proxy_corpus)
            if (q.label && *q.label == topic.name) queries.push_back(q.normalized);
        if (queries.empty()) {
            rt.warn("topic " + topic.name + " has no proxy-labeled queries; skipped");
            result.skipped_topics.push_back(topic.name);
            continue;
        }
        try {
            auto gen = run_intent_generator(rt, topic, queries, result.set.version());
            const auto id = rt.actions().back().id;
            for (auto& intent : gen.intents) result.set.add(std::move(intent), id);
        } catch (const BudgetExhausted& e) {
            rt.warn(std::string(e.what()) + "; kept unexpanded");
            result.unexpanded_topics.push_back(topic.name);
            Intent seed;
            seed.topic = topic.name;
            seed.subtopic = topic.name;
            seed.topic_description = topic.description;
            seed.subtopic_description = topic.description;
            seed.provenance = Provenance::seed;
            if (!result.set.contains(seed.key())) result.set.add(std::move(seed), "seed-" + topic.name);
        }
    }
    if (result.set.active_count() >= 2) result.merges = run_intent_merger(rt, result.set).merges;
    return result;
}

TgbResult tgb_pipeline(AgentRuntime& rt, const IntentSet& set, const Corpus& unlabeled) {
    TgbResult result;
    result.set = set;
    std::vector<std::string> texts;
    for (const auto& q : unlabeled) texts.push_back(q.normalized);
    const auto& cfg = rt.config();

    IntentSet working = set;
    for (const auto& block : sample_blocks(texts, cfg.sample_size, derive_seed(cfg.shuffle_seed, "tgb.proposer.blocks"))) {
        auto props = run_intent_proposer(rt, working, block);
        result.proposals.insert(result.proposals.end(), props.begin(), props.end());
    }

    IntentSet judge_context = set;
    for (auto& p : result.proposals) {
        run_intent_judge(rt, judge_context, p);
        if (p.state == ProposalState::judged_ok && !judge_context.contains(p.key))
            judge_context.add(temporary_intent(p), rt.actions().back().id);
    }

    for (std::size_t k = 0; k < result.proposals.size(); ++k) {
        auto& p = result.proposals[k];
        if (p.state != ProposalState::judged_ok) continue;
        IntentSet context = result.set;
        for (std::size_t j = k + 1; j < result.proposals.size(); ++j) {
            const auto& other = result.proposals[j];
            if (other.state == ProposalState::judged_ok && !context.contains(other.key))
                context.add(temporary_intent(other), "pending");
        }
        if (run_intent_refiner(rt, result.set, context, p)) ++result.discovered;
    }

    for (const auto& block : sample_blocks(texts, cfg.sample_size, derive_seed(cfg.shuffle_seed, "tgb.adder.blocks")))
        if (run_examples_adder(rt, result.set, block)) ++result.enriched_updates;
    return result;
}

// ---- persistence ---------------------------------------------------------------------------

std::string merge_to_json(const MergeAction& m) {
    json j = {{"id", m.id},
              {"keep", m.keep.str()},
              {"eliminate", m.eliminate.str()},
              {"keep_examples", m.keep_examples},
              {"eliminate_examples", m.eliminate_examples},
              {"conflicting", m.conflicting}};
    return j.dump();
}

MergeAction merge_from_json(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
        MergeAction m;
        m.id = j.at("id").get<std::string>();
        auto keep = IntentKey::parse(j.at("keep").get<std::string>());
        auto elim = IntentKey::parse(j.at("eliminate").get<std::string>());
        if (!keep || !elim) throw ParseError(ParseError::Kind::malformed, "merge record with malformed intent key");
        m.keep = *keep;
        m.eliminate = *elim;
        m.keep_examples = j.at("keep_examples").get<std::vector<std::string>>();
        m.eliminate_examples = j.at("eliminate_examples").get<std::vector<std::string>>();
        m.conflicting = j.value("conflicting", false);
        return m;
    } catch (const json::out_of_range& e) {
        throw ParseError(ParseError::Kind::missing_key, std::string("merge record: ") + e.what());
    } catch (const json::exception& e) {
        throw ParseError(ParseError::Kind::malformed, std::string("merge record: ") + e.what());
    }
}

void save_merges(const std::vector<MergeAction>& merges, const std::string& path) {
    std::string out;
    for (const auto& m : merges) out += merge_to_json(m) + "\n";
    write_file(path, out);
}

std::vector<MergeAction> load_merges(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::vector<MergeAction> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(merge_from_json(line));
    return out;
}

std::string action_to_json(const AgentAction& a) {
    json j = {{"id", a.id},
              {"kind", to_string(a.kind)},
              {"self_valid", a.self_valid},
              {"accepted", a.verdict.accepted},
              {"verdict", a.verdict.str()},
              {"raw_response", a.raw_response}};
    return j.dump();
}

std::string proposal_to_json(const Proposal& p) {
    json j = {{"intent", p.key.str()},
              {"examples", p.examples},
              {"state", to_string(p.state)},
              {"refined_as", p.refined_as ? p.refined_as->str() : ""}};
    return j.dump();
}

}  // namespace intentkit
