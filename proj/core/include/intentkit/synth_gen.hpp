#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "intentkit/dataset.hpp"
#include "intentkit/error.hpp"
#include "intentkit/llm.hpp"
#include "intentkit/prompts.hpp"

namespace intentkit {

class DuplicateInBatch : public DataError {
  public:
    explicit DuplicateInBatch(const std::string& what) : DataError("duplicate_in_batch", what) {}
};

enum class DescriptionSource { human, synthetic };
std::string_view to_string(DescriptionSource s);
DescriptionSource description_source_from_string(std::string_view s);

// One arm of the 2x2 experiment.
struct Cell {
    bool in_class_shots = false;
    DescriptionSource source = DescriptionSource::human;

    // "inclass_human", "noinclass_synthetic", ...
    std::string id() const;
    static Cell parse(std::string_view id);
    static std::vector<Cell> all();

    auto operator<=>(const Cell&) const = default;
};

struct GenSpec {
    std::string label;
    Cell cell;
    int cross_class_shots = 10;
    int in_class_shots = 10;
    int batch_size = 5;
    int total = 100;
    double temperature = 0.7;
    int max_output_tokens = 4096;
    int batch_budget = 3;  // attempts per batch
    std::uint64_t seed = 0;
    std::string institution = "the bank";

    void validate() const;  // throws ConfigError
    int batches() const { return total / batch_size; }
};

struct GeneratedUtterance {
    std::string label;
    std::string utterance;
    std::string reasoning;
    std::string explanation;
    std::string cell;
    int batch_id = 0;
    int position_in_batch = 0;

    bool operator==(const GeneratedUtterance&) const = default;
};

nlohmann::json to_json(const GeneratedUtterance& u);
GeneratedUtterance generated_from_json(const nlohmann::json& j);

struct LabelDescription {
    std::string label;
    std::string description;
    std::vector<std::string> keywords;
    std::string customer_need;
    std::string reflection;
    std::string explanation;
    DescriptionSource source = DescriptionSource::human;

    // Text placed in the utterance prompt's description slot; keywords are appended.
    std::string prompt_text() const;
};

nlohmann::json to_json(const LabelDescription& d);
LabelDescription description_from_json(const nlohmann::json& j);

// JSON object keyed by label. A value is either the description string or an object with
// "description" and optional "keywords".
std::map<std::string, LabelDescription> parse_human_descriptions(const std::string& text);
std::map<std::string, LabelDescription> load_human_descriptions(const std::string& path);

// "openCheckingAccount" / "open_checking-account" -> "open checking account".
std::string display_label(std::string_view label);

struct DescriptionConfig {
    std::string institution = "the bank";
    int budget = 3;
    std::size_t max_queries = 20;
    std::size_t max_exemplars = 10;
    int max_output_tokens = 2048;
    std::uint64_t seed = 0;
};

// Temperature 0. Throws DataError without real examples and BudgetExhausted when no attempt parses
// with non-empty keywords.
LabelDescription generate_label_description(const std::string& label, const std::vector<std::string>& real_examples,
                                            const std::vector<LabelDescription>& exemplars, LlmClient& client,
                                            const PromptLibrary& prompts, const DescriptionConfig& cfg = {});

enum class ShotScope { cross_class, in_class };

struct FewShots {
    LabeledSet examples;
    bool short_supply = false;
};

// Seeded sampling without replacement. in_class draws only rows labelled `label`.
FewShots sample_few_shots(const LabeledSet& train, std::size_t k, std::uint64_t seed, ShotScope scope,
                          const std::string& label = "");

// `Label: "x"` / `User Utterance: "y"` pairs, one blank line apart.
std::string render_shots(const LabeledSet& shots);

struct BatchShots {
    LabeledSet cross_class;
    LabeledSet in_class;
};

std::string render_utterance_prompt(const PromptLibrary& prompts, const GenSpec& spec, const LabelDescription& desc,
                                    const BatchShots& shots);

// One call per attempt; the batch must hold exactly spec.batch_size distinct utterances with
// non-empty reasoning and explanation. Throws BudgetExhausted after spec.batch_budget attempts.
std::vector<GeneratedUtterance> generate_batch(const GenSpec& spec, const LabelDescription& desc,
                                               const BatchShots& shots, LlmClient& client, const PromptLibrary& prompts,
                                               int batch_id, int* attempts = nullptr);

struct CellLabelStats {
    int batches_ok = 0;
    int batches_skipped = 0;
    int attempts = 0;
    std::size_t utterances = 0;
    std::size_t duplicates = 0;  // repeats of an earlier batch's utterance (normalized)
    bool short_cross_shots = false;
    bool short_in_class_shots = false;

    double duplicate_rate() const { return utterances ? static_cast<double>(duplicates) / utterances : 0.0; }
};

struct GenerationConfig {
    std::vector<Cell> cells = Cell::all();
    GenSpec base;  // label and cell are filled per run
    DescriptionConfig description;
    unsigned threads = 1;
    // Used instead of generating a synthetic description for these labels.
    std::map<std::string, LabelDescription> synthetic_descriptions;
};

struct GenerationRun {
    // cell id -> label -> utterances ordered by batch, position
    std::map<std::string, std::map<std::string, std::vector<GeneratedUtterance>>> output;
    std::map<std::string, std::map<std::string, CellLabelStats>> stats;
    std::map<std::string, LabelDescription> synthetic_descriptions;
    std::set<std::string> exclusion;  // raw texts of every few-shot example used
    std::vector<std::string> warnings;

    nlohmann::json summary() const;
};

// One description per label; failures are skipped and reported through `warnings`.
std::map<std::string, LabelDescription> generate_synthetic_descriptions(
    const LabeledSet& train, const std::vector<std::string>& labels,
    const std::map<std::string, LabelDescription>& human_descriptions, LlmClient& client, const PromptLibrary& prompts,
    const DescriptionConfig& cfg, std::vector<std::string>* warnings = nullptr);

// Human descriptions are required for every label when a human-source cell is requested.
GenerationRun run_generation(const LabeledSet& train, const std::vector<std::string>& labels,
                             const std::map<std::string, LabelDescription>& human_descriptions, LlmClient& client,
                             const PromptLibrary& prompts, const GenerationConfig& cfg);

// Writes <dir>/<cell>/<label>.jsonl, <dir>/descriptions.json, <dir>/exclusion.txt, <dir>/summary.json.
void save_generation(const GenerationRun& run, const std::string& dir);

// All records of one cell directory, or of one .jsonl file.
std::vector<GeneratedUtterance> load_synthetic(const std::string& path);

}  // namespace intentkit
