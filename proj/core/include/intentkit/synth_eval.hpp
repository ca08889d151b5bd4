#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "intentkit/error.hpp"
#include "intentkit/llm.hpp"
#include "intentkit/prompts.hpp"

namespace intentkit {

class EmptyDataset : public DataError {
  public:
    explicit EmptyDataset(const std::string& what) : DataError("empty_dataset", what) {}
};

class InsufficientData : public DataError {
  public:
    explicit InsufficientData(const std::string& what) : DataError("insufficient_data", what) {}
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // population
};

// Character counts are UTF-8 code points of the raw utterance.
MeanStd seq_length_stats(const std::vector<std::string>& dataset);

// Word n-grams within each utterance (whitespace tokens of the normalized text), pooled over the
// dataset; mean over n = 1..max_n of unique/total, skipping n with no n-grams.
double distinct_n(const std::vector<std::string>& dataset, int max_n = 4);

// Raw DEFLATE (no zlib/gzip header), level 9.
inline constexpr int kDeflateLevel = 9;
std::string deflate_raw(std::string_view bytes, int level = kDeflateLevel);
double compression_ratio_bytes(std::string_view bytes);
// Utterances joined with '\n'.
double compression_ratio(const std::vector<std::string>& dataset);

enum class PosTag { noun, verb, adj, adv, pron, det, adp, num, conj, prt, punct, other };
std::string_view to_string(PosTag tag);
std::optional<PosTag> pos_tag_from_string(std::string_view s);

class PosTagger {
  public:
    enum class Kind { bundled_rule_tagger, external_pretagged };

    // Closed-class lexicon plus suffix rules; unknown words default to NOUN.
    static const PosTagger& bundled();
    static PosTagger from_lexicon(std::string_view lexicon_text, std::string identifier);
    // Reads "token/TAG" items; the tag after the last '/' is used, unknown tags map to X.
    static PosTagger pretagged();

    Kind kind() const { return kind_; }
    const std::string& identifier() const { return identifier_; }

    std::vector<PosTag> tag(std::string_view text) const;
    PosTag tag_word(const std::string& word) const;

  private:
    Kind kind_ = Kind::bundled_rule_tagger;
    std::string identifier_;
    std::unordered_map<std::string, PosTag> lexicon_;
};

// Words (letters, digits, inner apostrophes) and single punctuation characters of the normalized text.
std::vector<std::string> pos_tokens(std::string_view text);
std::vector<PosTag> pos_tag(std::string_view text, const PosTagger& tagger = PosTagger::bundled());

// Space-joined tag names per utterance, newline-joined, then compressed.
std::string pos_stream(const std::vector<std::string>& dataset, const PosTagger& tagger);
double cr_pos(const std::vector<std::string>& dataset, const PosTagger& tagger = PosTagger::bundled());

enum class QmsMode { vocabulary, token };

// IDF(t) = ln(N / df(t)) with utterances as documents and whitespace tokens of the normalized text
// as terms. vocabulary: mean/std over distinct terms; token: over every token occurrence.
MeanStd qms(const std::vector<std::string>& dataset, QmsMode mode = QmsMode::vocabulary);

struct DiscriminationConfig {
    int trials = 100;
    std::size_t few_shot = 10;
    std::uint64_t seed = 0;
    double temperature = 0.0;
    int max_output_tokens = 1024;
};

struct DiscriminationTrial {
    std::string real;
    std::string synthetic;
    int synthetic_slot = 1;  // 1 or 2
    std::optional<int> answer;
    bool correct = false;
};

struct DiscriminationResult {
    double accuracy = 0.0;
    int correct = 0;
    int unparsable = 0;
    bool with_replacement = false;
    std::vector<DiscriminationTrial> trials;
};

// Last "Answer: 1|2" in the response (brackets and emphasis allowed).
std::optional<int> parse_discrimination_answer(const std::string& response);

DiscriminationResult discrimination_accuracy(const std::vector<std::string>& real, const std::vector<std::string>& synth,
                                             LlmClient& judge, const PromptLibrary& prompts,
                                             const DiscriminationConfig& cfg = {});

struct IntrinsicRow {
    std::string dataset;
    std::size_t size = 0;
    MeanStd seq_length;
    double distinct_n = 0.0;
    double cr = 0.0;
    double cr_pos = 0.0;
    MeanStd qms;
    std::optional<double> discrimination;  // absent for the real baseline
    std::vector<std::string> annotations;
};

struct IntrinsicConfig {
    int max_n = 4;
    QmsMode qms_mode = QmsMode::vocabulary;
    bool run_discrimination = true;
    DiscriminationConfig discrimination;
};

struct IntrinsicReport {
    std::vector<IntrinsicRow> rows;  // baseline first, then cells in key order
    std::string tagger;
    std::string qms_mode;

    nlohmann::json to_json() const;
    std::string render_table() const;
};

IntrinsicRow intrinsic_row(const std::string& name, const std::vector<std::string>& dataset, const IntrinsicConfig& cfg,
                          const PosTagger& tagger = PosTagger::bundled());

// `judge` may be null; discrimination is then skipped and annotated.
IntrinsicReport intrinsic_report(const std::map<std::string, std::vector<std::string>>& cells,
                                 const std::vector<std::string>& real_baseline, LlmClient* judge,
                                 const PromptLibrary& prompts, const IntrinsicConfig& cfg = {},
                                 const PosTagger& tagger = PosTagger::bundled());

}  // namespace intentkit
