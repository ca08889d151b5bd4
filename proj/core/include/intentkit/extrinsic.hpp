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

namespace intentkit {

class InsufficientSynthetic : public DataError {
  public:
    explicit InsufficientSynthetic(const std::string& what) : DataError("insufficient_synthetic", what) {}
};
class MissingLabelInSynth : public DataError {
  public:
    explicit MissingLabelInSynth(const std::string& what) : DataError("missing_label_in_synth", what) {}
};
class DegenerateData : public DataError {
  public:
    explicit DegenerateData(const std::string& what) : DataError("degenerate_data", what) {}
};
class LengthMismatch : public DataError {
  public:
    explicit LengthMismatch(const std::string& what) : DataError("length_mismatch", what) {}
};
class InsufficientSamples : public DataError {
  public:
    explicit InsufficientSamples(const std::string& what) : DataError("insufficient_samples", what) {}
};

enum class Approach { baseline, approach1, approach2 };
std::string_view to_string(Approach a);
Approach approach_from_string(std::string_view s);

using SyntheticPool = std::map<std::string, std::vector<std::string>>;  // label -> utterances

struct AssemblyPlan {
    Approach approach = Approach::baseline;
    double replace_fraction = 0.25;
    std::size_t per_label_cap = 100;  // approach2
    std::uint64_t seed = 0;
    std::set<std::string> excluded;  // raw texts of few-shot examples
};

struct Assembly {
    Approach approach = Approach::baseline;
    std::string cell;  // empty for the baseline
    LabeledSet rows;
    std::vector<bool> synthetic;  // parallel to rows
    std::vector<std::string> replaced_labels;  // approach2
    std::size_t excluded_removed = 0;

    std::string id() const;  // "baseline" or "<cell>.<approach>"
    std::size_t synthetic_rows() const;
};

// approach1: round(f * N) rows replaced, allotted per label by largest remainder so every label's
// count is preserved. approach2: round(f * L) labels (at least one) drawn by seed, each replaced by
// exactly per_label_cap synthetic rows. Excluded texts leave the real portion first.
Assembly assemble(const LabeledSet& train, const SyntheticPool& synth, const AssemblyPlan& plan,
                  const std::string& cell = "");

struct ClassifierConfig {
    bool bigrams = true;
    double l2 = 1e-4;  // on the class-weighted mean loss
    bool class_weighting = true;
    int max_iterations = 500;
    double function_tolerance = 1e-10;
    double gradient_tolerance = 1e-8;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
};

// Unigram (+ bigram) features of whitespace tokens of normalized text, smoothed IDF, L2 norm.
class TfidfVectorizer {
  public:
    using SparseRow = std::vector<std::pair<std::size_t, double>>;

    static TfidfVectorizer fit(const std::vector<std::string>& texts, bool bigrams);
    SparseRow transform(const std::string& text) const;
    std::size_t dimension() const { return idf_.size(); }

  private:
    std::vector<std::string> features(const std::string& text) const;
    bool bigrams_ = true;
    std::map<std::string, std::size_t> index_;
    std::vector<double> idf_;
};

struct TrainingSummary {
    int iterations = 0;
    bool converged = false;
    double final_loss = 0.0;
};

class Classifier {
  public:
    // Multinomial logistic regression, inverse-frequency class weights. Throws DegenerateData with
    // fewer than two labels or a label with fewer than two rows.
    static Classifier train(const LabeledSet& data, const ClassifierConfig& cfg = {});

    std::string predict(const std::string& text) const;
    std::vector<std::string> predict(const std::vector<std::string>& texts) const;
    const std::vector<std::string>& labels() const { return labels_; }
    const TrainingSummary& summary() const { return summary_; }

  private:
    TfidfVectorizer vectorizer_;
    std::vector<std::string> labels_;
    std::vector<double> weights_;  // labels x (dimension + 1), bias last
    TrainingSummary summary_;
};

struct F1Result {
    double macro = 0.0;
    std::map<std::string, double> per_class;
    std::vector<std::string> undefined;  // classes whose precision had no predictions
};

// Classes are those of the gold labels; undefined precision or recall counts as 0.
F1Result macro_f1(const std::vector<std::string>& predictions, const std::vector<std::string>& golds);

struct TTestResult {
    std::string comparison;
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
    bool degenerate = false;  // both samples have zero variance
    std::size_t n_a = 0;
    std::size_t n_b = 0;

    nlohmann::json to_json() const;
};

// Welch's two-sample two-tailed test.
TTestResult welch_ttest(const std::vector<double>& a, const std::vector<double>& b);

inline constexpr int kReportSchemaVersion = 1;

struct ExtrinsicReport {
    std::string approach;
    std::string cell;
    std::string classifier = "tfidf-logreg";
    double macro_f1 = 0.0;
    std::map<std::string, double> per_class_f1;
    std::vector<std::string> undefined_classes;
    std::string config_digest;
    std::size_t train_size = 0;
    std::size_t synthetic_rows = 0;
    std::size_t test_size = 0;
    std::vector<std::string> replaced_labels;
    std::optional<TrainingSummary> training;
    std::vector<TTestResult> ttests;

    nlohmann::json to_json() const;
    static ExtrinsicReport from_json(const nlohmann::json& j);
};

// Structural check mirroring schemas/extrinsic_report.schema.json. Returns the problems found.
std::vector<std::string> validate_report_json(const nlohmann::json& j);

struct ExtrinsicConfig {
    ClassifierConfig classifier;
    double replace_fraction = 0.25;
    std::size_t per_label_cap = 100;
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

struct ExtrinsicRun {
    ExtrinsicReport baseline;
    std::map<std::string, std::map<std::string, ExtrinsicReport>> cells;  // cell -> approach -> report
    std::vector<Assembly> assemblies;  // baseline first
    std::vector<std::string> annotations;

    nlohmann::json to_json() const;
    std::string render_table() const;
};

// Baseline, then approach1 and approach2 for every cell (seeded per cell).
std::vector<Assembly> build_assemblies(const LabeledSet& train, const std::map<std::string, SyntheticPool>& cells,
                                       const std::set<std::string>& excluded, const ExtrinsicConfig& cfg,
                                       std::vector<std::optional<AssemblyPlan>>* plans = nullptr);

// Fails with DataError when a test text also occurs in train. Excluded texts are removed from every
// synthetic-bearing training set.
ExtrinsicRun run_extrinsic(const LabeledSet& train, const LabeledSet& test,
                           const std::map<std::string, SyntheticPool>& cells, const std::set<std::string>& excluded,
                           const ExtrinsicConfig& cfg = {});

// JSONL records {"text","label","split","approach"}: one <id>.jsonl per assembly, test.jsonl and
// manifest.json.
void export_datasets(const std::vector<Assembly>& assemblies, const LabeledSet& test, const std::string& dir);

SyntheticPool pool_from_labeled(const LabeledSet& rows);

}  // namespace intentkit
