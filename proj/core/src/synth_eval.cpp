#include "intentkit/synth_eval.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <regex>
#include <set>
#include <sstream>
#include <unordered_set>

#include "intentkit/assets.hpp"
#include "intentkit/preprocess.hpp"
#include "intentkit/rng.hpp"

namespace intentkit {

using nlohmann::json;

namespace {

void require_nonempty(const std::vector<std::string>& dataset, const char* op) {
    if (dataset.empty()) throw EmptyDataset(std::string(op) + ": dataset is empty");
}

MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd out;
    if (xs.empty()) return out;
    for (double x : xs) out.mean += x;
    out.mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(var / static_cast<double>(xs.size()));
    return out;
}

std::size_t code_points(std::string_view s) {
    std::size_t n = 0;
    for (unsigned char c : s) n += (c & 0xC0) != 0x80 ? 1 : 0;
    return n;
}

std::string join_lines(const std::vector<std::string>& lines) {
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i) out.push_back('\n');
        out += lines[i];
    }
    return out;
}

bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

}  // namespace

MeanStd seq_length_stats(const std::vector<std::string>& dataset) {
    require_nonempty(dataset, "seq_length_stats");
    std::vector<double> lengths;
    lengths.reserve(dataset.size());
    for (const auto& u : dataset) lengths.push_back(static_cast<double>(code_points(u)));
    return mean_std(lengths);
}

double distinct_n(const std::vector<std::string>& dataset, int max_n) {
    require_nonempty(dataset, "distinct_n");
    if (max_n < 1) throw ConfigError("distinct_n: max_n must be at least 1");
    std::vector<std::vector<std::string>> tokens;
    tokens.reserve(dataset.size());
    for (const auto& u : dataset) tokens.push_back(whitespace_tokens(normalize(u)));

    double sum = 0.0;
    int counted = 0;
    for (int n = 1; n <= max_n; ++n) {
        std::unordered_set<std::string> unique;
        std::size_t total = 0;
        for (const auto& toks : tokens) {
            if (toks.size() < static_cast<std::size_t>(n)) continue;
            for (std::size_t i = 0; i + n <= toks.size(); ++i) {
                std::string gram = toks[i];
                // \x1f cannot occur inside a whitespace token of normalized text
                for (int k = 1; k < n; ++k) gram += '\x1f' + toks[i + k];
                unique.insert(std::move(gram));
                ++total;
            }
        }
        if (total == 0) continue;
        sum += static_cast<double>(unique.size()) / static_cast<double>(total);
        ++counted;
    }
    if (counted == 0) throw EmptyDataset("distinct_n: dataset has no tokens");
    return sum / counted;
}

std::string deflate_raw(std::string_view bytes, int level) {
    z_stream zs{};
    if (deflateInit2(&zs, level, Z_DEFLATED, -15, 8, Z_DEFAULT_STRATEGY) != Z_OK)
        throw Error(ErrorCategory::config, "deflateInit2 failed");
    std::string out(deflateBound(&zs, static_cast<uLong>(bytes.size())), '\0');
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(bytes.data()));
    zs.avail_in = static_cast<uInt>(bytes.size());
    zs.next_out = reinterpret_cast<Bytef*>(out.data());
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = deflate(&zs, Z_FINISH);
    const auto produced = zs.total_out;
    deflateEnd(&zs);
    if (rc != Z_STREAM_END) throw Error(ErrorCategory::data, "deflate did not finish");
    out.resize(produced);
    return out;
}

double compression_ratio_bytes(std::string_view bytes) {
    if (bytes.empty()) throw EmptyDataset("compression_ratio: no bytes");
    return static_cast<double>(deflate_raw(bytes).size()) / static_cast<double>(bytes.size());
}

double compression_ratio(const std::vector<std::string>& dataset) {
    require_nonempty(dataset, "compression_ratio");
    return compression_ratio_bytes(join_lines(dataset));
}

// ---- POS ---------------------------------------------------------------------------------------

std::string_view to_string(PosTag tag) {
    switch (tag) {
        case PosTag::noun: return "noun";
        case PosTag::verb: return "verb";
        case PosTag::adj: return "adj";
        case PosTag::adv: return "adv";
        case PosTag::pron: return "pron";
        case PosTag::det: return "det";
        case PosTag::adp: return "adp";
        case PosTag::num: return "num";
        case PosTag::conj: return "conj";
        case PosTag::prt: return "part";
        case PosTag::punct: return "punct";
        case PosTag::other: return "other";
    }
    return "other";
}

std::optional<PosTag> pos_tag_from_string(std::string_view s) {
    std::string lower(s);
    for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    static const std::unordered_map<std::string, PosTag> names = {
        {"noun", PosTag::noun},   {"verb", PosTag::verb},   {"adj", PosTag::adj},     {"adv", PosTag::adv},
        {"pron", PosTag::pron},   {"det", PosTag::det},     {"adp", PosTag::adp},     {"num", PosTag::num},
        {"conj", PosTag::conj},   {"part", PosTag::prt},    {"prt", PosTag::prt},     {"punct", PosTag::punct},
        {".", PosTag::punct},     {"other", PosTag::other}, {"x", PosTag::other},     {"propn", PosTag::noun},
        {"aux", PosTag::verb},    {"cconj", PosTag::conj},  {"sconj", PosTag::conj},  {"sym", PosTag::other},
        {"intj", PosTag::other}};
    auto it = names.find(lower);
    if (it == names.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> pos_tokens(std::string_view text) {
    const auto norm = normalize(text);
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < norm.size()) {
        const auto c = static_cast<unsigned char>(norm[i]);
        if (c == ' ') {
            ++i;
        } else if (word_byte(c)) {
            std::size_t j = i;
            while (j < norm.size()) {
                const auto d = static_cast<unsigned char>(norm[j]);
                if (word_byte(d)) {
                    ++j;
                } else if (d == '\'' && j + 1 < norm.size() && word_byte(static_cast<unsigned char>(norm[j + 1]))) {
                    j += 2;
                } else {
                    break;
                }
            }
            out.push_back(norm.substr(i, j - i));
            i = j;
        } else {
            out.emplace_back(1, norm[i]);
            ++i;
        }
    }
    return out;
}

PosTagger PosTagger::from_lexicon(std::string_view lexicon_text, std::string identifier) {
    PosTagger t;
    t.kind_ = Kind::bundled_rule_tagger;
    t.identifier_ = std::move(identifier);
    std::istringstream in{std::string(lexicon_text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream fields(line);
        std::string word, tag_name;
        if (!(fields >> word >> tag_name))
            throw ParseError(ParseError::Kind::malformed, "pos lexicon line " + std::to_string(line_no));
        auto tag = pos_tag_from_string(tag_name);
        if (!tag) throw ParseError(ParseError::Kind::bad_enum, "pos lexicon line " + std::to_string(line_no) + ": " + tag_name);
        t.lexicon_.emplace(normalize(word), *tag);
    }
    return t;
}

const PosTagger& PosTagger::bundled() {
    static const PosTagger tagger = [] {
        auto text = find_asset("pos_lexicon.txt");
        if (!text) throw ConfigError("bundled pos lexicon missing");
        return from_lexicon(*text, "bundled-rule-tagger@" + to_hex(fnv1a64(*text)));
    }();
    return tagger;
}

PosTagger PosTagger::pretagged() {
    PosTagger t;
    t.kind_ = Kind::external_pretagged;
    t.identifier_ = "external-pretagged";
    return t;
}

PosTag PosTagger::tag_word(const std::string& word) const {
    if (kind_ == Kind::external_pretagged) {
        const auto slash = word.rfind('/');
        if (slash == std::string::npos) return PosTag::other;
        return pos_tag_from_string(word.substr(slash + 1)).value_or(PosTag::other);
    }
    if (word.empty()) return PosTag::other;
    if (auto it = lexicon_.find(word); it != lexicon_.end()) return it->second;
    const auto c0 = static_cast<unsigned char>(word[0]);
    if (word.size() == 1 && !word_byte(c0)) return PosTag::punct;
    if (std::isdigit(c0)) return PosTag::num;
    if (ends_with(word, "ly")) return PosTag::adv;
    for (auto s : {"ing", "ed", "ize", "ise", "ify"})
        if (ends_with(word, s)) return PosTag::verb;
    for (auto s : {"ous", "ful", "able", "ible", "ive", "less", "ish"})
        if (ends_with(word, s)) return PosTag::adj;
    return PosTag::noun;
}

std::vector<PosTag> PosTagger::tag(std::string_view text) const {
    std::vector<PosTag> out;
    if (kind_ == Kind::external_pretagged) {
        for (const auto& item : whitespace_tokens(text)) out.push_back(tag_word(item));
        return out;
    }
    for (const auto& tok : pos_tokens(text)) out.push_back(tag_word(tok));
    return out;
}

std::vector<PosTag> pos_tag(std::string_view text, const PosTagger& tagger) { return tagger.tag(text); }

std::string pos_stream(const std::vector<std::string>& dataset, const PosTagger& tagger) {
    std::vector<std::string> lines;
    lines.reserve(dataset.size());
    for (const auto& u : dataset) {
        std::string line;
        for (auto t : tagger.tag(u)) {
            if (!line.empty()) line.push_back(' ');
            line += to_string(t);
        }
        lines.push_back(std::move(line));
    }
    return join_lines(lines);
}

double cr_pos(const std::vector<std::string>& dataset, const PosTagger& tagger) {
    require_nonempty(dataset, "cr_pos");
    return compression_ratio_bytes(pos_stream(dataset, tagger));
}

MeanStd qms(const std::vector<std::string>& dataset, QmsMode mode) {
    require_nonempty(dataset, "qms");
    std::unordered_map<std::string, std::size_t> df;
    std::vector<std::vector<std::string>> docs;
    docs.reserve(dataset.size());
    for (const auto& u : dataset) {
        docs.push_back(whitespace_tokens(normalize(u)));
        for (const auto& t : std::set<std::string>(docs.back().begin(), docs.back().end())) ++df[t];
    }
    if (df.empty()) throw EmptyDataset("qms: dataset has no terms");
    const double n = static_cast<double>(dataset.size());
    auto idf = [&](const std::string& t) { return std::log(n / static_cast<double>(df.at(t))); };
    std::vector<double> values;
    if (mode == QmsMode::vocabulary) {
        // sorted so the floating-point sum is independent of hash order
        std::vector<std::string> vocab;
        for (const auto& [t, _] : df) vocab.push_back(t);
        std::sort(vocab.begin(), vocab.end());
        for (const auto& t : vocab) values.push_back(idf(t));
    } else {
        for (const auto& d : docs)
            for (const auto& t : d) values.push_back(idf(t));
    }
    return mean_std(values);
}

// ---- discrimination ----------------------------------------------------------------------------

std::optional<int> parse_discrimination_answer(const std::string& response) {
    static const std::regex answer_re(R"(answer\W{0,6}?([12])(?![0-9]))", std::regex::icase);
    std::optional<int> last;
    for (auto it = std::sregex_iterator(response.begin(), response.end(), answer_re); it != std::sregex_iterator(); ++it)
        last = (*it)[1].str() == "1" ? 1 : 2;
    if (last) return last;
    auto b = response.find_first_not_of(" \t\r\n*[\"'");
    auto e = response.find_last_not_of(" \t\r\n*].\"'");
    if (b != std::string::npos && e == b && (response[b] == '1' || response[b] == '2')) return response[b] - '0';
    return std::nullopt;
}

DiscriminationResult discrimination_accuracy(const std::vector<std::string>& real, const std::vector<std::string>& synth,
                                             LlmClient& judge, const PromptLibrary& prompts,
                                             const DiscriminationConfig& cfg) {
    if (cfg.trials < 1) throw ConfigError("discrimination: trials must be positive");
    if (synth.empty()) throw InsufficientData("discrimination: synthetic set is empty");
    if (real.size() < cfg.few_shot + 1)
        throw InsufficientData("discrimination: need at least " + std::to_string(cfg.few_shot + 1) +
                               " real utterances, have " + std::to_string(real.size()));

    const auto trials = static_cast<std::size_t>(cfg.trials);
    DiscriminationResult out;
    out.with_replacement = real.size() < trials || synth.size() < trials;

    // Candidates are drawn without replacement while the pools last, then the permutation wraps.
    Rng order_rng(derive_seed(cfg.seed, "discrimination.order"));
    auto real_order = order_rng.sample_indices(real.size(), real.size());
    auto synth_order = order_rng.sample_indices(synth.size(), synth.size());

    const auto system = prompts.get("discrimination_system");
    for (std::size_t t = 0; t < trials; ++t) {
        const auto trial_seed = derive_seed(cfg.seed, "discrimination.trial", t);
        Rng rng(trial_seed);
        DiscriminationTrial tr;
        const auto real_idx = real_order[t % real.size()];
        tr.real = real[real_idx];
        tr.synthetic = synth[synth_order[t % synth.size()]];

        std::vector<std::string> shots;
        for (auto i : rng.sample_indices(real.size() - 1, cfg.few_shot)) shots.push_back(real[i < real_idx ? i : i + 1]);
        tr.synthetic_slot = rng.uniform(2) == 0 ? 1 : 2;
        const auto& ex1 = tr.synthetic_slot == 1 ? tr.synthetic : tr.real;
        const auto& ex2 = tr.synthetic_slot == 1 ? tr.real : tr.synthetic;

        ChatRequest req;
        req.system_prompt = system;
        req.user_prompt = prompts.render(
            "discrimination_user", {{"real_examples", bullet_list(shots)}, {"example_1", ex1}, {"example_2", ex2}});
        req.temperature = cfg.temperature;
        req.max_output_tokens = cfg.max_output_tokens;
        req.request_tag = "discrimination";
        auto completion = judge.complete(req, {"discrimination", trial_seed, 0});
        tr.answer = parse_discrimination_answer(completion.response.text);
        tr.correct = tr.answer && *tr.answer == tr.synthetic_slot;
        if (!tr.answer) ++out.unparsable;
        if (tr.correct) ++out.correct;
        judge.close(completion,
                    tr.answer ? "answer=" + std::to_string(*tr.answer) + (tr.correct ? " correct" : " incorrect")
                              : "unparsable",
                    0);
        out.trials.push_back(std::move(tr));
    }
    out.accuracy = static_cast<double>(out.correct) / static_cast<double>(trials);
    return out;
}

// ---- report ------------------------------------------------------------------------------------

IntrinsicRow intrinsic_row(const std::string& name, const std::vector<std::string>& dataset, const IntrinsicConfig& cfg,
                           const PosTagger& tagger) {
    require_nonempty(dataset, ("intrinsic metrics for '" + name + "'").c_str());
    IntrinsicRow row;
    row.dataset = name;
    row.size = dataset.size();
    row.seq_length = seq_length_stats(dataset);
    row.distinct_n = distinct_n(dataset, cfg.max_n);
    row.cr = compression_ratio(dataset);
    row.cr_pos = cr_pos(dataset, tagger);
    row.qms = qms(dataset, cfg.qms_mode);
    return row;
}

IntrinsicReport intrinsic_report(const std::map<std::string, std::vector<std::string>>& cells,
                                 const std::vector<std::string>& real_baseline, LlmClient* judge,
                                 const PromptLibrary& prompts, const IntrinsicConfig& cfg, const PosTagger& tagger) {
    IntrinsicReport report;
    report.tagger = tagger.identifier();
    report.qms_mode = cfg.qms_mode == QmsMode::vocabulary ? "vocabulary" : "token";
    report.rows.push_back(intrinsic_row("real", real_baseline, cfg, tagger));

    std::size_t index = 0;
    for (const auto& [name, data] : cells) {
        IntrinsicRow row;
        row.dataset = name;
        row.size = data.size();
        try {
            row = intrinsic_row(name, data, cfg, tagger);
        } catch (const DataError& e) {
            row.annotations.push_back(e.what());
            report.rows.push_back(std::move(row));
            ++index;
            continue;
        }
        if (!cfg.run_discrimination) {
            // nothing to annotate
        } else if (!judge) {
            row.annotations.push_back("discrimination skipped: no judge configured");
        } else {
            auto dcfg = cfg.discrimination;
            dcfg.seed = derive_seed(cfg.discrimination.seed, "discrimination." + name, index);
            try {
                auto r = discrimination_accuracy(real_baseline, data, *judge, prompts, dcfg);
                row.discrimination = r.accuracy;
                if (r.unparsable)
                    row.annotations.push_back(std::to_string(r.unparsable) + " unparsable judge answers counted incorrect");
                if (r.with_replacement) row.annotations.push_back("discrimination candidates reused across trials");
            } catch (const DataError& e) {
                row.annotations.push_back(std::string("discrimination skipped: ") + e.what());
            } catch (const BackendError& e) {
                row.annotations.push_back(std::string("discrimination failed: ") + e.what());
            }
        }
        report.rows.push_back(std::move(row));
        ++index;
    }
    return report;
}

json IntrinsicReport::to_json() const {
    json rows_json = json::array();
    for (const auto& r : rows) {
        json j = {{"dataset", r.dataset},
                  {"size", r.size},
                  {"seq_length", {{"mean", r.seq_length.mean}, {"std", r.seq_length.std}}},
                  {"distinct_n", r.distinct_n},
                  {"cr", r.cr},
                  {"cr_pos", r.cr_pos},
                  {"qms", {{"mean", r.qms.mean}, {"std", r.qms.std}}},
                  {"discrimination", r.discrimination ? json(*r.discrimination) : json(nullptr)},
                  {"annotations", r.annotations}};
        rows_json.push_back(std::move(j));
    }
    return {{"tagger", tagger}, {"qms_mode", qms_mode}, {"rows", rows_json}};
}

std::string IntrinsicReport::render_table() const {
    const std::vector<std::string> header = {"Dataset", "Size", "Seq. Length", "Distinct-N",
                                             "CR",      "CR-POS", "QMS",       "Discr. Acc."};
    std::vector<std::vector<std::string>> table = {header};
    auto fixed = [](double v, int prec) {
        std::ostringstream os;
        os << std::fixed << std::setprecision(prec) << v;
        return os.str();
    };
    for (const auto& r : rows)
        table.push_back({r.dataset, std::to_string(r.size),
                         fixed(r.seq_length.mean, 1) + " ± " + fixed(r.seq_length.std, 1), fixed(r.distinct_n, 3),
                         fixed(r.cr, 3), fixed(r.cr_pos, 3), fixed(r.qms.mean, 3) + " ± " + fixed(r.qms.std, 3),
                         r.discrimination ? fixed(*r.discrimination * 100, 1) + "%" : "N/A"});

    std::vector<std::size_t> widths(header.size(), 0);
    for (const auto& row : table)
        for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], code_points(row[c]));
    std::ostringstream os;
    for (std::size_t r = 0; r < table.size(); ++r) {
        for (std::size_t c = 0; c < table[r].size(); ++c) {
            os << (c ? " | " : "") << table[r][c];
            if (c + 1 < table[r].size()) os << std::string(widths[c] - code_points(table[r][c]), ' ');
        }
        os << "\n";
        if (r == 0) {
            for (std::size_t c = 0; c < widths.size(); ++c) os << (c ? "-+-" : "") << std::string(widths[c], '-');
            os << "\n";
        }
    }
    return os.str();
}

}  // namespace intentkit
