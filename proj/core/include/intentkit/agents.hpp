#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "intentkit/llm.hpp"
#include "intentkit/model.hpp"
#include "intentkit/prompts.hpp"
#include "intentkit/structured.hpp"

namespace intentkit {

struct AgentConfig {
    int max_consecutive_failures = 1000;
    // Hard ceiling on merger calls regardless of acceptances.
    int max_merger_calls = 20000;
    std::size_t sample_size = 200;
    std::uint64_t shuffle_seed = 0;
    std::string institution = "the bank";
    int generator_budget = 5;
    int proposer_budget = 3;
    int judge_budget = 3;
    int refiner_budget = 3;
    int adder_budget = 3;
    std::size_t under_exampled_below = 3;
    double temperature = 0.0;
    int max_output_tokens = 4096;

    void validate() const;  // throws ConfigError
};

enum class AgentKind { generator, merger, proposer, judge, refiner, examples_adder };
std::string_view to_string(AgentKind k);
ActionKind action_kind(AgentKind k);

// Shared machinery for the agents: LLM access, templates, counters and the action log.
class AgentRuntime {
  public:
    using WarningSink = std::function<void(const std::string&)>;

    AgentRuntime(LlmClient& client, const PromptLibrary& prompts, AgentConfig config, WarningSink warn = {});

    LlmClient& client() { return client_; }
    const PromptLibrary& prompts() const { return prompts_; }
    const AgentConfig& config() const { return config_; }

    // Per-kind call counter, used to derive shuffle seeds.
    std::uint64_t next_call_index(AgentKind kind);
    std::string next_action_id(AgentKind kind);
    void warn(const std::string& message);

    void record(AgentAction action) { actions_.push_back(std::move(action)); }
    const std::vector<AgentAction>& actions() const { return actions_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

  private:
    LlmClient& client_;
    const PromptLibrary& prompts_;
    AgentConfig config_;
    WarningSink sink_;
    std::uint64_t counters_[6] = {};
    std::uint64_t action_counter_ = 0;
    std::vector<AgentAction> actions_;
    std::vector<std::string> warnings_;
};

// ---- prompt rendering ----------------------------------------------------------------------

// Active intents grouped by topic, topics in a seeded random order, subtopics sorted.
std::string render_intent_set(const IntentSet& set, std::uint64_t seed);
std::string render_intents(const std::vector<const Intent*>& intents);

struct PromptPair {
    std::string system;
    std::string user;
};

// Renders the named agent template with the institution slot filled in.
PromptPair render_agent_prompt(const PromptLibrary& prompts, AgentKind kind, Slots slots, const std::string& institution);

// ---- exact-match support -------------------------------------------------------------------

// Normalized utterances that an agent may cite, mapping to the canonical corpus text.
class ExampleIndex {
  public:
    ExampleIndex() = default;
    explicit ExampleIndex(const std::vector<std::string>& texts);

    void add(const std::string& text);
    // Canonical text for a cited example, or nullopt if it does not occur.
    std::optional<std::string> resolve(const std::string& cited) const;
    bool contains(const std::string& cited) const { return resolve(cited).has_value(); }
    std::size_t size() const { return map_.size(); }

  private:
    std::map<std::string, std::string> map_;
};

// ---- generator -----------------------------------------------------------------------------

struct SeedTopic {
    std::string name;
    std::string description;
};

const Schema& generator_schema();
const Schema& merger_schema();
const Schema& proposer_schema();
const Schema& echo_schema();  // judge, refiner, examples adder

GeneratePayload to_generate_payload(const nlohmann::json& payload);
MergePayload to_merge_payload(const nlohmann::json& payload);
ProposePayload to_propose_payload(const nlohmann::json& payload);
IntentEchoPayload to_echo_payload(const nlohmann::json& payload);

Verdict validate_generate(const GeneratePayload& p, bool self_valid, const SeedTopic& topic, const ExampleIndex& given);

// Returns the intents of an accepted generator answer (examples canonicalized).
std::vector<Intent> intents_from_generate(const GeneratePayload& p, const SeedTopic& topic, const ExampleIndex& given);

struct GeneratorResult {
    std::vector<Intent> intents;
    int attempts = 0;
    bool expanded = false;  // false when the budget ran out
};

// Throws BudgetExhausted when no attempt within the budget is accepted.
GeneratorResult run_intent_generator(AgentRuntime& rt, const SeedTopic& topic, const std::vector<std::string>& queries,
                                     std::uint64_t set_version = 0);

// ---- merger --------------------------------------------------------------------------------

struct MergeAction {
    std::string id;
    IntentKey keep;
    IntentKey eliminate;
    std::vector<std::string> keep_examples;
    std::vector<std::string> eliminate_examples;
    // Touches an intent already involved in an earlier accepted merge.
    bool conflicting = false;
};

Verdict validate_merge(const MergePayload& p, bool self_valid, const IntentSet& set,
                       const std::vector<MergeAction>& accepted);

struct MergerResult {
    std::vector<MergeAction> merges;
    int calls = 0;
};

MergerResult run_intent_merger(AgentRuntime& rt, const IntentSet& set);

// Retires eliminate and folds its examples into keep. Throws ConflictingMerge.
void apply_merge(IntentSet& set, const MergeAction& merge);

struct ReviewDecision {
    std::optional<std::size_t> accept_prefix;
    std::vector<bool> verdicts;  // used when accept_prefix is empty; missing entries mean skip

    static ReviewDecision prefix(std::size_t k) { return {k, {}}; }
    static ReviewDecision per_item(std::vector<bool> v) { return {std::nullopt, std::move(v)}; }
};

// Applies the accepted merges in order. All-or-nothing: throws ConflictingMerge without touching set.
std::vector<MergeAction> review_merges(IntentSet& set, const std::vector<MergeAction>& merges,
                                       const ReviewDecision& decision);

// ---- topic gap bridging --------------------------------------------------------------------

enum class ProposalState { proposed, judged_ok, refined, rejected };
std::string_view to_string(ProposalState s);

struct Proposal {
    IntentKey key;
    std::vector<std::string> examples;
    ProposalState state = ProposalState::proposed;
    std::string topic_description;
    std::string subtopic_description;
    int relevance = 0;
    std::optional<IntentKey> refined_as;
};

Verdict validate_proposal(const ProposePayload& p, bool self_valid, const IntentSet& working, const ExampleIndex& sample);
Verdict validate_judge(const IntentEchoPayload& p, bool self_valid, const Proposal& proposal);
Verdict validate_refine(const IntentEchoPayload& p, bool self_valid, const IntentSet& set, const Proposal& proposal);
Verdict validate_add_examples(const IntentEchoPayload& p, bool self_valid, const IntentSet& set,
                              const ExampleIndex& sample, std::size_t under_exampled_below);

// Seeded traversal of the corpus in blocks of sample_size without replacement.
std::vector<std::vector<std::string>> sample_blocks(const std::vector<std::string>& corpus, std::size_t sample_size,
                                                    std::uint64_t seed);

// Proposals from one block; working receives the accepted proposals as temporary intents.
std::vector<Proposal> run_intent_proposer(AgentRuntime& rt, IntentSet& working, const std::vector<std::string>& sample);
// Sets proposal.state to judged_ok or rejected.
void run_intent_judge(AgentRuntime& rt, const IntentSet& context, Proposal& proposal);
// On acceptance adds the refined intent to set and returns it.
std::optional<Intent> run_intent_refiner(AgentRuntime& rt, IntentSet& set, const IntentSet& context, Proposal& proposal);
// At most one intent updated. Returns the updated key when a change was applied.
std::optional<IntentKey> run_examples_adder(AgentRuntime& rt, IntentSet& set, const std::vector<std::string>& sample);

// ---- pipelines -----------------------------------------------------------------------------

struct HteResult {
    IntentSet set;
    std::vector<MergeAction> merges;
    std::vector<std::string> unexpanded_topics;
    std::vector<std::string> skipped_topics;
};

// Generator over every seed topic (in the given order), then the merger loop. Merges are returned
// for review, not applied.
HteResult hte_pipeline(AgentRuntime& rt, const std::vector<SeedTopic>& topics, const Corpus& proxy_corpus);

struct TgbResult {
    IntentSet set;
    std::vector<Proposal> proposals;
    std::size_t discovered = 0;
    std::size_t enriched_updates = 0;
};

TgbResult tgb_pipeline(AgentRuntime& rt, const IntentSet& set, const Corpus& unlabeled);

// Persistence of merge lists (one JSON object per line).
std::string merge_to_json(const MergeAction& m);
MergeAction merge_from_json(const std::string& line);
void save_merges(const std::vector<MergeAction>& merges, const std::string& path);
std::vector<MergeAction> load_merges(const std::string& path);

std::string action_to_json(const AgentAction& a);
std::string proposal_to_json(const Proposal& p);

}  // namespace intentkit
