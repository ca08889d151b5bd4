#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "intentkit/error.hpp"
#include "intentkit/llm.hpp"
#include "intentkit/model.hpp"
#include "intentkit/preprocess.hpp"
#include "intentkit/prompts.hpp"

namespace intentkit {

class UnknownWord : public DataError {
  public:
    explicit UnknownWord(const std::string& word)
        : DataError("unknown_word", "word never occurs in the reference corpus: '" + word + "'") {}
};

class InsufficientWords : public DataError {
  public:
    explicit InsufficientWords(const std::string& what) : DataError("insufficient_words", what) {}
};

class UnparsableRating : public DataError {
  public:
    explicit UnparsableRating(const std::string& what) : DataError("unparsable_rating", what) {}
};

class NoValidIntruder : public DataError {
  public:
    explicit NoValidIntruder(const std::string& what) : DataError("no_valid_intruder", what) {}
};

using Ranked = std::vector<std::pair<std::string, std::size_t>>;

// Sorts by descending count, ties by ascending string.
Ranked rank_counts(const std::map<std::string, std::size_t>& counts);

struct TopicDocs {
    std::string topic;
    std::vector<std::string> utterances;            // distinct, in first-seen order
    std::vector<std::vector<std::string>> documents;  // tokenized utterances
    Ranked top_words;                                // token frequency over documents
    Ranked top_utterances;                           // occurrence count over the input multiset

    // `utterances` may repeat; repeats count towards top_utterances only.
    static TopicDocs build(std::string topic, const std::vector<std::string>& utterances,
                           const TokenFilterConfig& filter = {});
};

// Sliding-window occurrence counts. Windows stay inside one document; a document no longer than
// the window is a single window.
class WindowStats {
  public:
    static WindowStats build(const std::vector<std::vector<std::string>>& documents, int window = 10);

    std::size_t windows() const { return windows_; }
    std::size_t count(const std::string& word) const;
    std::size_t joint(const std::string& a, const std::string& b) const;
    bool has(const std::string& word) const { return postings_.count(word) != 0; }
    int window() const { return window_; }

  private:
    std::size_t windows_ = 0;
    int window_ = 10;
    std::unordered_map<std::string, std::vector<std::uint32_t>> postings_;
};

// -1 when the words never share a window, 1 for identical words or when both occur in every
// window. Throws UnknownWord.
double npmi_pair(const std::string& wi, const std::string& wj, const WindowStats& stats);
double npmi_pair(const std::string& wi, const std::string& wj,
                 const std::vector<std::vector<std::string>>& documents, int window = 10);

// First min(top_k, available) ranked words. Throws InsufficientWords below two.
std::vector<std::string> top_k_words(const TopicDocs& topic, int top_k);

double topic_npmi(const TopicDocs& topic, const WindowStats& stats, int top_k = 10);

struct CvResult {
    double value = 0.0;
    std::vector<std::string> degenerate_words;  // all-zero NPMI vectors, scored 0
};

CvResult c_v(const TopicDocs& topic, const WindowStats& stats, int top_k = 10);

enum class EvalLevel { word, document };
std::string_view to_string(EvalLevel level);

struct JudgeConfig {
    std::string institution = "the";
    double temperature = 0.0;
    int max_output_tokens = 1024;
    std::size_t rating_items = 10;
    std::size_t intruder_pool = 50;
    std::size_t intruder_sample = 5;
    std::uint64_t set_version = 0;  // recorded in audit records
};

// Items shown to the judge at a level: ranked words or ranked utterances.
std::vector<std::string> ranked_items(const TopicDocs& topic, EvalLevel level, std::size_t n);

// Last integer on the last non-empty line, which must be 1, 2 or 3.
int parse_rating(const std::string& response);
// Last non-empty line with quotes, brackets and emphasis stripped, then normalized.
std::string parse_intruder_answer(const std::string& response);

struct RatingOutcome {
    int rating = 0;
    std::vector<std::string> items;  // in prompt order
    bool few_items = false;
};

RatingOutcome rating_task(EvalLevel level, const TopicDocs& topic, LlmClient& judge, const PromptLibrary& prompts,
                          std::uint64_t seed, const JudgeConfig& cfg = {});

struct IntruderTrial {
    std::vector<std::string> items;
    std::string intruder;
    std::string source_topic;
    std::string answer;
    bool correct = false;
};

struct IntruderOutcome {
    double accuracy = 0.0;
    int correct = 0;
    std::vector<IntruderTrial> trials;
    std::vector<std::string> skipped_topics;  // other topics with no item outside our pool
};

// Throws NoValidIntruder when no other topic can supply an intruder and InsufficientWords when the
// topic has fewer than cfg.intruder_sample items.
IntruderOutcome intruder_task(EvalLevel level, std::size_t topic_index, const std::vector<TopicDocs>& all_topics,
                              LlmClient& judge, const PromptLibrary& prompts, int trials, std::uint64_t seed,
                              const JudgeConfig& cfg = {});

struct TopicEvalConfig {
    int window = 10;
    int top_k = 10;
    int rating_trials = 10;
    int intruder_trials = 10;
    std::uint64_t seed = 0;
    bool run_judge = true;
    JudgeConfig judge;
    TokenFilterConfig filter;
    unsigned threads = 0;  // 0 = hardware concurrency
};

struct MetricSummary {
    double mean = 0.0;
    double std = 0.0;  // population
    std::size_t n = 0;
};

MetricSummary summarize(const std::vector<double>& values);

struct TopicScores {
    std::string topic;
    std::size_t documents = 0;
    std::optional<double> npmi;
    std::optional<double> cv;
    std::vector<std::string> cv_degenerate;
    std::optional<double> intruder_word;
    std::optional<double> intruder_doc;
    std::optional<double> rating_word;
    std::optional<double> rating_doc;
    int rating_word_discarded = 0;
    int rating_doc_discarded = 0;
};

inline constexpr const char* kMetricNames[] = {"npmi", "cv", "intruder_word", "intruder_doc", "rating_word",
                                               "rating_doc"};

struct CoherenceReport {
    std::string name;
    std::uint64_t set_version = 0;
    std::vector<TopicScores> topics;
    std::map<std::string, MetricSummary> aggregate;
    std::vector<std::string> annotations;
    TopicEvalConfig config;
    std::string stopwords_id;
    std::string stopwords_hash;
    std::string judge_model;

    nlohmann::json to_json() const;
    static CoherenceReport from_json(const nlohmann::json& j);
    // Recomputes `aggregate` from the per-topic cells.
    void recompute_aggregate();
};

// Documents for one intent: its examples plus corpus queries labelled with its key ("topic.subtopic"),
// or with the bare topic for seed intents.
std::vector<std::string> intent_documents(const Intent& intent, const Corpus& corpus);

// `judge` may be null when cfg.run_judge is false.
CoherenceReport evaluate_topic_set(const IntentSet& set, const Corpus& corpus, LlmClient* judge,
                                   const PromptLibrary& prompts, const TopicEvalConfig& cfg, std::string name = "");

// One row per report, columns as in the usual topic-set comparison table.
std::string render_coherence_table(const std::vector<CoherenceReport>& reports);

}  // namespace intentkit
