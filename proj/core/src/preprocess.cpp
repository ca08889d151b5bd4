#include "intentkit/preprocess.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "intentkit/assets.hpp"
#include "intentkit/dataset.hpp"
#include "intentkit/error.hpp"
#include "intentkit/rng.hpp"

namespace intentkit {

namespace {

bool is_ascii_alpha(unsigned char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_ascii_digit(unsigned char c) { return c >= '0' && c <= '9'; }
bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_email_local_char(unsigned char c) {
    return is_ascii_alpha(c) || is_ascii_digit(c) || c == '.' || c == '_' || c == '%' || c == '+' || c == '-';
}

bool is_domain_char(unsigned char c) { return is_ascii_alpha(c) || is_ascii_digit(c) || c == '.' || c == '-'; }

// Token bytes for the eval tokenizer: ASCII alphanumerics and any non-ASCII byte (keeps UTF-8
// words in one piece).
bool is_word_byte(unsigned char c) { return is_ascii_alpha(c) || is_ascii_digit(c) || c >= 0x80; }

struct EmailSpan {
    std::size_t local_begin;
    std::size_t at;
};

std::vector<EmailSpan> find_emails(std::string_view text) {
    std::vector<EmailSpan> spans;
    for (std::size_t at = text.find('@'); at != std::string_view::npos; at = text.find('@', at + 1)) {
        std::size_t lb = at;
        while (lb > 0 && is_email_local_char(static_cast<unsigned char>(text[lb - 1]))) --lb;
        std::size_t de = at + 1;
        while (de < text.size() && is_domain_char(static_cast<unsigned char>(text[de]))) ++de;
        auto domain = text.substr(at + 1, de - at - 1);
        while (!domain.empty() && domain.back() == '.') domain.remove_suffix(1);
        auto dot = domain.rfind('.');
        if (lb == at || dot == std::string_view::npos || dot == 0) continue;
        auto tld = domain.substr(dot + 1);
        if (tld.size() < 2 || !std::all_of(tld.begin(), tld.end(), [](char c) {
                return is_ascii_alpha(static_cast<unsigned char>(c));
            }))
            continue;
        spans.push_back({lb, at});
    }
    return spans;
}

}  // namespace

std::array<char, 10> digit_permutation(std::uint64_t seed) {
    std::vector<char> digits(10);
    std::iota(digits.begin(), digits.end(), '0');
    Rng rng(derive_seed(seed, "scrub.digits"));
    rng.shuffle(digits);
    std::array<char, 10> out{};
    std::copy(digits.begin(), digits.end(), out.begin());
    return out;
}

std::array<char, 26> letter_derangement(std::uint64_t seed) {
    std::array<char, 26> table{};
    std::iota(table.begin(), table.end(), 'a');
    // Sattolo's algorithm yields a uniformly random cyclic permutation.
    Rng rng(derive_seed(seed, "scrub.email"));
    for (std::size_t i = table.size() - 1; i > 0; --i) {
        auto j = static_cast<std::size_t>(rng.uniform(i));
        std::swap(table[i], table[j]);
    }
    return table;
}

std::string scrub(std::string_view text, const ScrubConfig& cfg) {
    std::string out(text);

    const auto letters = letter_derangement(cfg.seed);
    for (const auto& span : find_emails(text)) {
        for (std::size_t i = span.local_begin; i < span.at; ++i) {
            auto c = static_cast<unsigned char>(out[i]);
            if (c >= 'a' && c <= 'z')
                out[i] = letters[c - 'a'];
            else if (c >= 'A' && c <= 'Z')
                out[i] = static_cast<char>(letters[c - 'A'] - 'a' + 'A');
        }
    }

    if (cfg.digit_scramble == DigitScramble::fixed_permutation || cfg.digit_map) {
        const auto map = cfg.digit_map ? *cfg.digit_map : digit_permutation(cfg.seed);
        for (auto& c : out)
            if (is_ascii_digit(static_cast<unsigned char>(c))) c = map[static_cast<std::size_t>(c - '0')];
    } else {
        Rng rng(derive_seed(cfg.seed ^ fnv1a64(text), "scrub.per_digit"));
        for (auto& c : out)
            if (is_ascii_digit(static_cast<unsigned char>(c))) c = static_cast<char>('0' + rng.uniform(10));
    }
    return out;
}

std::string normalize(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (unsigned char c : text) {
        if (is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c));
    }
    return out;
}

std::string sanitize_utf8(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    const auto replacement = std::string_view("\xEF\xBF\xBD");
    std::size_t i = 0;
    while (i < text.size()) {
        auto c = static_cast<unsigned char>(text[i]);
        std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 0;
        bool ok = len > 0 && i + len <= text.size();
        for (std::size_t k = 1; ok && k < len; ++k)
            ok = (static_cast<unsigned char>(text[i + k]) >> 6) == 0x2;
        if (ok && len == 2) ok = c >= 0xC2;
        if (ok) {
            out.append(text.substr(i, len));
            i += len;
        } else {
            out.append(replacement);
            ++i;
        }
    }
    return out;
}

Query make_query(std::string raw, QuerySource source, std::optional<std::string> label,
                 const ScrubConfig* scrub_cfg) {
    Query q;
    q.raw = sanitize_utf8(raw);
    q.normalized = normalize(scrub_cfg ? scrub(q.raw, *scrub_cfg) : q.raw);
    q.source = source;
    q.label = std::move(label);
    q.id = query_id(q.normalized);
    return q;
}

Corpus dedupe(const std::vector<Query>& queries) {
    Corpus out;
    for (const auto& q : queries) out.add(q);
    return out;
}

const StopwordList& StopwordList::bundled_english() {
    static const StopwordList list = from_text("nltk-english-179", *find_asset("stopwords_en.txt"));
    return list;
}

StopwordList StopwordList::from_text(std::string identifier, std::string_view text) {
    StopwordList list;
    list.identifier = std::move(identifier);
    list.hash = to_hex(fnv1a64(text));
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        auto word = normalize(line);
        if (!word.empty() && word[0] != '#') list.words.insert(word);
    }
    return list;
}

StopwordList StopwordList::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read stopword file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_text(path, buf.str());
}

std::vector<std::string> tokenize_for_eval(std::string_view text, const TokenFilterConfig& cfg) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && !is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t start = i;
        while (i < text.size() && is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
        if (start == i) break;
        std::string token(text.substr(start, i - start));
        int letters = 0;
        bool numeric = true;
        for (unsigned char c : token) {
            letters += (is_ascii_alpha(c) || c >= 0x80) ? 1 : 0;
            numeric = numeric && is_ascii_digit(c);
        }
        if (cfg.drop_numeric_only && numeric) continue;
        if (letters < cfg.min_letters) continue;
        if (cfg.stopwords && cfg.stopwords->words.count(token)) continue;
        out.push_back(std::move(token));
    }
    return out;
}

std::vector<std::string> whitespace_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t start = i;
        while (i < text.size() && !is_space(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) out.emplace_back(text.substr(start, i - start));
    }
    return out;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
    std::string out;
    for (const auto& q : corpus) {
        nlohmann::json j = {{"id", q.id}, {"raw", q.raw}, {"normalized", q.normalized}, {"source", to_string(q.source)}};
        if (q.label) j["label"] = *q.label;
        out += j.dump() + "\n";
    }
    write_file(path, out);
}

Corpus load_corpus(const std::string& path) {
    std::istringstream in(read_file(path));
    Corpus corpus;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            Query q;
            q.raw = j.at("raw").get<std::string>();
            q.normalized = j.at("normalized").get<std::string>();
            q.source = query_source_from_string(j.at("source").get<std::string>());
            if (j.contains("label")) q.label = j.at("label").get<std::string>();
            q.id = j.at("id").get<std::string>();
            corpus.add(std::move(q));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(ParseError::Kind::malformed, path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return corpus;
}

}  // namespace intentkit
