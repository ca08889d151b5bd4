#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "intentkit/model.hpp"

namespace intentkit {

enum class DigitScramble { per_digit_random, fixed_permutation };
enum class EmailNoise { perturb_local_part };

struct ScrubConfig {
    std::uint64_t seed = 0;
    DigitScramble digit_scramble = DigitScramble::fixed_permutation;
    EmailNoise email_noise = EmailNoise::perturb_local_part;
    // Overrides the seeded permutation: digit_map[d] replaces digit d.
    std::optional<std::array<char, 10>> digit_map;
};

// Seeded permutation of '0'..'9' used by fixed_permutation scrambling.
std::array<char, 10> digit_permutation(std::uint64_t seed);
// Seeded letter substitution with no fixed points (a single cycle), so every letter changes.
std::array<char, 26> letter_derangement(std::uint64_t seed);

// Scrambles digits and perturbs e-mail local parts. Pure in (text, cfg); not idempotent.
std::string scrub(std::string_view text, const ScrubConfig& cfg);

// Lowercases ASCII, trims, collapses whitespace runs to one space.
std::string normalize(std::string_view text);

// Replaces invalid UTF-8 sequences with U+FFFD.
std::string sanitize_utf8(std::string_view text);

Query make_query(std::string raw, QuerySource source, std::optional<std::string> label = std::nullopt,
                 const ScrubConfig* scrub_cfg = nullptr);

// Keeps the first occurrence of each normalized utterance, preserving order.
Corpus dedupe(const std::vector<Query>& queries);

struct StopwordList {
    std::string identifier;
    std::unordered_set<std::string> words;
    std::string hash;  // fnv1a64 of the source bytes, recorded in reports

    static const StopwordList& bundled_english();
    static StopwordList from_file(const std::string& path);
    static StopwordList from_text(std::string identifier, std::string_view text);
};

struct TokenFilterConfig {
    const StopwordList* stopwords = &StopwordList::bundled_english();
    int min_letters = 3;
    bool drop_numeric_only = true;
};

// Word tokens for coherence metrics: split on every non-alphanumeric byte, then drop stopwords,
// tokens with fewer than min_letters letters and numeric-only tokens.
std::vector<std::string> tokenize_for_eval(std::string_view text, const TokenFilterConfig& cfg = {});

std::vector<std::string> whitespace_tokens(std::string_view text);

// Corpus file: one JSON object per line with id, raw, normalized, source and optional label.
void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

}  // namespace intentkit
