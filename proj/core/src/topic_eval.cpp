#include "intentkit/topic_eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "intentkit/rng.hpp"

namespace intentkit {

using nlohmann::json;

Ranked rank_counts(const std::map<std::string, std::size_t>& counts) {
    Ranked out(counts.begin(), counts.end());
    // std::map is already in ascending key order, so a stable sort on count keeps ties lexicographic.
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    return out;
}

TopicDocs TopicDocs::build(std::string topic, const std::vector<std::string>& utterances,
                           const TokenFilterConfig& filter) {
    TopicDocs docs;
    docs.topic = std::move(topic);
    std::map<std::string, std::size_t> utterance_counts;
    std::map<std::string, std::size_t> word_counts;
    for (const auto& raw : utterances) {
        auto u = normalize(raw);
        if (u.empty()) continue;
        if (utterance_counts[u]++ > 0) continue;
        docs.utterances.push_back(u);
        auto tokens = tokenize_for_eval(u, filter);
        for (const auto& t : tokens) ++word_counts[t];
        docs.documents.push_back(std::move(tokens));
    }
    docs.top_words = rank_counts(word_counts);
    docs.top_utterances = rank_counts(utterance_counts);
    return docs;
}

// ---- windows and NPMI ------------------------------------------------------------------------

WindowStats WindowStats::build(const std::vector<std::vector<std::string>>& documents, int window) {
    if (window < 2) throw ConfigError("NPMI window must be at least 2");
    WindowStats stats;
    stats.window_ = window;
    const auto w = static_cast<std::size_t>(window);
    std::uint32_t next = 0;
    for (const auto& doc : documents) {
        if (doc.empty()) continue;
        const std::size_t n = doc.size() <= w ? 1 : doc.size() - w + 1;
        const std::size_t span = std::min(w, doc.size());
        for (std::size_t s = 0; s < n; ++s, ++next) {
            std::unordered_set<std::string_view> seen;
            for (std::size_t i = s; i < s + span; ++i)
                if (seen.insert(doc[i]).second) stats.postings_[doc[i]].push_back(next);
        }
    }
    stats.windows_ = next;
    return stats;
}

std::size_t WindowStats::count(const std::string& word) const {
    auto it = postings_.find(word);
    return it == postings_.end() ? 0 : it->second.size();
}

std::size_t WindowStats::joint(const std::string& a, const std::string& b) const {
    auto ia = postings_.find(a);
    auto ib = postings_.find(b);
    if (ia == postings_.end() || ib == postings_.end()) return 0;
    const auto& x = ia->second;
    const auto& y = ib->second;
    std::size_t n = 0, i = 0, j = 0;
    while (i < x.size() && j < y.size()) {
        if (x[i] < y[j])
            ++i;
        else if (y[j] < x[i])
            ++j;
        else {
            ++n;
            ++i;
            ++j;
        }
    }
    return n;
}

double npmi_pair(const std::string& wi, const std::string& wj, const WindowStats& stats) {
    const auto ci = stats.count(wi);
    const auto cj = stats.count(wj);
    if (ci == 0) throw UnknownWord(wi);
    if (cj == 0) throw UnknownWord(wj);
    if (wi == wj) return 1.0;
    const auto cij = stats.joint(wi, wj);
    if (cij == 0) return -1.0;
    const double n = static_cast<double>(stats.windows());
    const double pij = cij / n;
    if (cij == stats.windows()) return 1.0;
    const double pmi = std::log(pij / ((ci / n) * (cj / n)));
    return std::clamp(pmi / -std::log(pij), -1.0, 1.0);
}

double npmi_pair(const std::string& wi, const std::string& wj, const std::vector<std::vector<std::string>>& documents,
                 int window) {
    return npmi_pair(wi, wj, WindowStats::build(documents, window));
}

std::vector<std::string> top_k_words(const TopicDocs& topic, int top_k) {
    std::vector<std::string> words;
    for (const auto& [w, c] : topic.top_words) {
        if (static_cast<int>(words.size()) >= top_k) break;
        words.push_back(w);
    }
    if (words.size() < 2)
        throw InsufficientWords("topic '" + topic.topic + "' has " + std::to_string(words.size()) +
                                " distinct words; coherence needs 2");
    return words;
}

double topic_npmi(const TopicDocs& topic, const WindowStats& stats, int top_k) {
    const auto words = top_k_words(topic, top_k);
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < words.size(); ++i)
        for (std::size_t j = i + 1; j < words.size(); ++j, ++pairs) sum += npmi_pair(words[i], words[j], stats);
    return sum / static_cast<double>(pairs);
}

CvResult c_v(const TopicDocs& topic, const WindowStats& stats, int top_k) {
    const auto words = top_k_words(topic, top_k);
    const auto k = words.size();
    std::vector<std::vector<double>> v(k, std::vector<double>(k, 1.0));
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j) v[i][j] = v[j][i] = npmi_pair(words[i], words[j], stats);
    std::vector<double> total(k, 0.0);
    for (const auto& row : v)
        for (std::size_t j = 0; j < k; ++j) total[j] += row[j];
    double total_norm = 0.0;
    for (double x : total) total_norm += x * x;
    total_norm = std::sqrt(total_norm);

    CvResult result;
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        double dot = 0.0, norm = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            dot += v[i][j] * total[j];
            norm += v[i][j] * v[i][j];
        }
        // The diagonal is 1, so a zero vector cannot arise from v itself; guard anyway.
        if (norm == 0.0) {
            result.degenerate_words.push_back(words[i]);
            continue;
        }
        if (total_norm == 0.0) continue;
        sum += dot / (std::sqrt(norm) * total_norm);
    }
    result.value = sum / static_cast<double>(k);
    return result;
}

// ---- judge tasks -----------------------------------------------------------------------------

std::string_view to_string(EvalLevel level) { return level == EvalLevel::word ? "word" : "document"; }

std::vector<std::string> ranked_items(const TopicDocs& topic, EvalLevel level, std::size_t n) {
    const auto& ranked = level == EvalLevel::word ? topic.top_words : topic.top_utterances;
    std::vector<std::string> out;
    for (std::size_t i = 0; i < ranked.size() && i < n; ++i) out.push_back(ranked[i].first);
    return out;
}

namespace {

std::string last_nonempty_line(const std::string& text) {
    std::istringstream in(text);
    std::string line, last;
    while (std::getline(in, line)) {
        auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        auto e = line.find_last_not_of(" \t\r");
        last = line.substr(b, e - b + 1);
    }
    return last;
}

std::string keyword(EvalLevel level) { return level == EvalLevel::word ? "word" : "utterance"; }

Completion ask_judge(LlmClient& judge, const std::string& tag, const std::string& prompt, std::uint64_t seed,
                     const JudgeConfig& cfg) {
    ChatRequest req;
    req.user_prompt = prompt;
    req.temperature = cfg.temperature;
    req.max_output_tokens = cfg.max_output_tokens;
    req.request_tag = tag;
    return judge.complete(req, {tag, seed, cfg.set_version});
}

}  // namespace

int parse_rating(const std::string& response) {
    const auto line = last_nonempty_line(response);
    std::optional<long> last;
    for (std::size_t i = 0; i < line.size();) {
        if (std::isdigit(static_cast<unsigned char>(line[i]))) {
            std::size_t j = i;
            while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
            last = j - i > 3 ? 1000 : std::stol(line.substr(i, j - i));
            i = j;
        } else {
            ++i;
        }
    }
    if (!last || *last < 1 || *last > 3) throw UnparsableRating("no rating 1-3 on the last line: '" + line + "'");
    return static_cast<int>(*last);
}

std::string parse_intruder_answer(const std::string& response) {
    auto line = last_nonempty_line(response);
    const std::string strip = " \t'\"`*[]()";
    bool changed = true;
    while (changed && !line.empty()) {
        changed = false;
        while (!line.empty() && strip.find(line.front()) != std::string::npos) {
            line.erase(line.begin());
            changed = true;
        }
        while (!line.empty() && (strip.find(line.back()) != std::string::npos || line.back() == '.')) {
            line.pop_back();
            changed = true;
        }
    }
    return normalize(line);
}

RatingOutcome rating_task(EvalLevel level, const TopicDocs& topic, LlmClient& judge, const PromptLibrary& prompts,
                          std::uint64_t seed, const JudgeConfig& cfg) {
    RatingOutcome out;
    out.items = ranked_items(topic, level, cfg.rating_items);
    if (out.items.empty()) throw InsufficientWords("topic '" + topic.topic + "' has nothing to rate");
    out.few_items = out.items.size() < cfg.rating_items;
    Rng rng(seed);
    rng.shuffle(out.items);
    const auto prompt = prompts.render("rating", {{"keyword", keyword(level)}, {"words", quoted_list(out.items)}});
    auto completion = ask_judge(judge, "rating", prompt, seed, cfg);
    try {
        out.rating = parse_rating(completion.response.text);
    } catch (const UnparsableRating&) {
        judge.close(completion, "unparsable", cfg.set_version);
        throw;
    }
    judge.close(completion, "rating=" + std::to_string(out.rating), cfg.set_version);
    return out;
}

IntruderOutcome intruder_task(EvalLevel level, std::size_t topic_index, const std::vector<TopicDocs>& all_topics,
                              LlmClient& judge, const PromptLibrary& prompts, int trials, std::uint64_t seed,
                              const JudgeConfig& cfg) {
    if (topic_index >= all_topics.size()) throw ConfigError("intruder_task: topic index out of range");
    if (all_topics.size() < 2) throw NoValidIntruder("intruder task needs at least two topics");
    const auto& topic = all_topics[topic_index];
    const auto pool = ranked_items(topic, level, cfg.intruder_pool);
    if (pool.size() < cfg.intruder_sample)
        throw InsufficientWords("topic '" + topic.topic + "' has " + std::to_string(pool.size()) + " " +
                                keyword(level) + "s; intruder task needs " + std::to_string(cfg.intruder_sample));
    const std::set<std::string> own(pool.begin(), pool.end());

    IntruderOutcome out;
    std::vector<std::pair<std::size_t, std::vector<std::string>>> sources;
    for (std::size_t t = 0; t < all_topics.size(); ++t) {
        if (t == topic_index) continue;
        std::vector<std::string> candidates;
        for (const auto& item : ranked_items(all_topics[t], level, cfg.intruder_pool))
            if (!own.count(item)) candidates.push_back(item);
        if (candidates.empty())
            out.skipped_topics.push_back(all_topics[t].topic);
        else
            sources.emplace_back(t, std::move(candidates));
    }
    if (sources.empty()) throw NoValidIntruder("no other topic supplies an intruder for '" + topic.topic + "'");

    Rng rng(seed);
    for (int trial = 0; trial < trials; ++trial) {
        IntruderTrial tr;
        for (auto i : rng.sample_indices(pool.size(), cfg.intruder_sample)) tr.items.push_back(pool[i]);
        const auto& [src, candidates] = sources[rng.uniform(sources.size())];
        tr.intruder = candidates[rng.uniform(candidates.size())];
        tr.source_topic = all_topics[src].topic;
        tr.items.push_back(tr.intruder);
        rng.shuffle(tr.items);

        const auto prompt = prompts.render("intruder", {{"keyword", keyword(level)},
                                                        {"institution", cfg.institution},
                                                        {"words", quoted_list(tr.items)}});
        const auto call_seed = derive_seed(seed, "intruder.trial", static_cast<std::uint64_t>(trial));
        auto completion = ask_judge(judge, "intruder", prompt, call_seed, cfg);
        tr.answer = parse_intruder_answer(completion.response.text);
        tr.correct = !tr.answer.empty() && tr.answer == normalize(tr.intruder);
        judge.close(completion, tr.correct ? "correct" : tr.answer.empty() ? "unparsable" : "incorrect",
                    cfg.set_version);
        out.correct += tr.correct ? 1 : 0;
        out.trials.push_back(std::move(tr));
    }
    out.accuracy = trials > 0 ? static_cast<double>(out.correct) / trials : 0.0;
    return out;
}

// ---- report ----------------------------------------------------------------------------------

MetricSummary summarize(const std::vector<double>& values) {
    MetricSummary s;
    s.n = values.size();
    if (values.empty()) return s;
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(s.n);
    for (double v : values) s.std += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(s.std / static_cast<double>(s.n));
    return s;
}

namespace {

std::optional<double> TopicScores::*metric_field(std::string_view name) {
    if (name == "npmi") return &TopicScores::npmi;
    if (name == "cv") return &TopicScores::cv;
    if (name == "intruder_word") return &TopicScores::intruder_word;
    if (name == "intruder_doc") return &TopicScores::intruder_doc;
    if (name == "rating_word") return &TopicScores::rating_word;
    return &TopicScores::rating_doc;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<double>();
}

}  // namespace

void CoherenceReport::recompute_aggregate() {
    aggregate.clear();
    for (const char* name : kMetricNames) {
        std::vector<double> values;
        const auto field = metric_field(name);
        for (const auto& t : topics)
            if (t.*field) values.push_back(*(t.*field));
        aggregate[name] = summarize(values);
    }
}

json CoherenceReport::to_json() const {
    json per_topic = json::array();
    for (const auto& t : topics) {
        json row = {{"topic", t.topic}, {"documents", t.documents}, {"cv_degenerate", t.cv_degenerate},
                    {"rating_word_discarded", t.rating_word_discarded},
                    {"rating_doc_discarded", t.rating_doc_discarded}};
        for (const char* name : kMetricNames) row[name] = optional_json(t.*metric_field(name));
        per_topic.push_back(std::move(row));
    }
    json agg = json::object();
    for (const auto& [name, s] : aggregate) agg[name] = {{"mean", s.mean}, {"std", s.std}, {"n", s.n}};
    return {
        {"name", name},
        {"set_version", set_version},
        {"topic_count", topics.size()},
        {"config",
         {{"window", config.window},
          {"top_k", config.top_k},
          {"rating_trials", config.rating_trials},
          {"intruder_trials", config.intruder_trials},
          {"rating_items", config.judge.rating_items},
          {"intruder_pool", config.judge.intruder_pool},
          {"intruder_sample", config.judge.intruder_sample},
          {"seed", config.seed},
          {"judge", config.run_judge}}},
        {"stopwords", {{"id", stopwords_id}, {"hash", stopwords_hash}}},
        {"judge_model", judge_model},
        {"per_topic", per_topic},
        {"aggregate", agg},
        {"annotations", annotations},
    };
}

CoherenceReport CoherenceReport::from_json(const json& j) {
    CoherenceReport r;
    try {
        r.name = j.at("name").get<std::string>();
        r.set_version = j.at("set_version").get<std::uint64_t>();
        const auto& c = j.at("config");
        r.config.window = c.at("window").get<int>();
        r.config.top_k = c.at("top_k").get<int>();
        r.config.rating_trials = c.at("rating_trials").get<int>();
        r.config.intruder_trials = c.at("intruder_trials").get<int>();
        r.config.judge.rating_items = c.at("rating_items").get<std::size_t>();
        r.config.judge.intruder_pool = c.at("intruder_pool").get<std::size_t>();
        r.config.judge.intruder_sample = c.at("intruder_sample").get<std::size_t>();
        r.config.seed = c.at("seed").get<std::uint64_t>();
        r.config.run_judge = c.at("judge").get<bool>();
        r.stopwords_id = j.at("stopwords").at("id").get<std::string>();
        r.stopwords_hash = j.at("stopwords").at("hash").get<std::string>();
        r.judge_model = j.at("judge_model").get<std::string>();
        for (const auto& row : j.at("per_topic")) {
            TopicScores t;
            t.topic = row.at("topic").get<std::string>();
            t.documents = row.at("documents").get<std::size_t>();
            t.cv_degenerate = row.at("cv_degenerate").get<std::vector<std::string>>();
            t.rating_word_discarded = row.at("rating_word_discarded").get<int>();
            t.rating_doc_discarded = row.at("rating_doc_discarded").get<int>();
            for (const char* name : kMetricNames) t.*metric_field(name) = optional_from(row, name);
            r.topics.push_back(std::move(t));
        }
        for (const auto& [name, s] : j.at("aggregate").items())
            r.aggregate[name] = {s.at("mean").get<double>(), s.at("std").get<double>(), s.at("n").get<std::size_t>()};
        r.annotations = j.at("annotations").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw ParseError(ParseError::Kind::malformed, std::string("coherence report: ") + e.what());
    }
    return r;
}

std::vector<std::string> intent_documents(const Intent& intent, const Corpus& corpus) {
    std::vector<std::string> docs = intent.examples;
    const auto key = intent.key().str();
    for (const auto& q : corpus) {
        if (!q.label) continue;
        if (*q.label == key || (intent.provenance == Provenance::seed && *q.label == intent.topic))
            docs.push_back(q.normalized);
    }
    return docs;
}

namespace {

template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = next++; i < n; i = next++) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::uint64_t trial_index(std::size_t topic, int trial) {
    return (static_cast<std::uint64_t>(topic) << 20) | static_cast<std::uint64_t>(trial);
}

}  // namespace

CoherenceReport evaluate_topic_set(const IntentSet& set, const Corpus& corpus, LlmClient* judge,
                                   const PromptLibrary& prompts, const TopicEvalConfig& cfg, std::string name) {
    if (cfg.run_judge && !judge) throw ConfigError("evaluate_topic_set: judge tasks requested without a judge");
    CoherenceReport report;
    report.name = std::move(name);
    report.set_version = set.version();
    report.config = cfg;
    if (cfg.filter.stopwords) {
        report.stopwords_id = cfg.filter.stopwords->identifier;
        report.stopwords_hash = cfg.filter.stopwords->hash;
    }
    if (judge) report.judge_model = judge->model_id();

    const auto intents = set.active();
    std::vector<TopicDocs> topics(intents.size());
    parallel_for(intents.size(), cfg.threads, [&](std::size_t i) {
        topics[i] = TopicDocs::build(intents[i]->key().str(), intent_documents(*intents[i], corpus), cfg.filter);
    });

    // Reference corpus: every topic document plus every corpus query, each once.
    std::vector<std::vector<std::string>> reference;
    std::unordered_set<std::string> seen;
    for (const auto& t : topics)
        for (std::size_t d = 0; d < t.utterances.size(); ++d)
            if (seen.insert(t.utterances[d]).second) reference.push_back(t.documents[d]);
    for (const auto& q : corpus)
        if (seen.insert(q.normalized).second) reference.push_back(tokenize_for_eval(q.normalized, cfg.filter));
    const auto stats = WindowStats::build(reference, cfg.window);

    report.topics.resize(topics.size());
    std::vector<std::string> metric_notes(topics.size());
    parallel_for(topics.size(), cfg.threads, [&](std::size_t i) {
        auto& row = report.topics[i];
        row.topic = topics[i].topic;
        row.documents = topics[i].utterances.size();
        try {
            row.npmi = topic_npmi(topics[i], stats, cfg.top_k);
            auto cv = c_v(topics[i], stats, cfg.top_k);
            row.cv = cv.value;
            row.cv_degenerate = std::move(cv.degenerate_words);
        } catch (const DataError& e) {
            metric_notes[i] = row.topic + ": " + e.what();
        }
    });
    for (auto& note : metric_notes)
        if (!note.empty()) report.annotations.push_back(std::move(note));

    if (cfg.run_judge) {
        auto jcfg = cfg.judge;
        jcfg.set_version = set.version();
        if (topics.size() < 2) report.annotations.push_back("intruder tasks skipped: fewer than two topics");
        for (std::size_t i = 0; i < topics.size(); ++i) {
            auto& row = report.topics[i];
            for (auto level : {EvalLevel::word, EvalLevel::document}) {
                const auto lvl = std::string(to_string(level));
                std::vector<double> ratings;
                int discarded = 0;
                bool flagged = false;
                for (int trial = 0; trial < cfg.rating_trials; ++trial) {
                    try {
                        auto r = rating_task(level, topics[i], *judge, prompts,
                                             derive_seed(cfg.seed, "rating." + lvl, trial_index(i, trial)), jcfg);
                        ratings.push_back(r.rating);
                        flagged = flagged || r.few_items;
                    } catch (const UnparsableRating& e) {
                        ++discarded;
                        report.annotations.push_back(row.topic + ": " + lvl + " rating trial " +
                                                     std::to_string(trial) + " discarded: " + e.what());
                    } catch (const InsufficientWords& e) {
                        report.annotations.push_back(row.topic + ": " + e.what());
                        break;
                    }
                }
                if (flagged)
                    report.annotations.push_back(row.topic + ": " + lvl + " rating used fewer than " +
                                                 std::to_string(jcfg.rating_items) + " items");
                auto& rating = level == EvalLevel::word ? row.rating_word : row.rating_doc;
                (level == EvalLevel::word ? row.rating_word_discarded : row.rating_doc_discarded) = discarded;
                if (!ratings.empty()) rating = summarize(ratings).mean;

                if (topics.size() < 2) continue;
                try {
                    auto r = intruder_task(level, i, topics, *judge, prompts, cfg.intruder_trials,
                                           derive_seed(cfg.seed, "intruder." + lvl, i), jcfg);
                    (level == EvalLevel::word ? row.intruder_word : row.intruder_doc) = r.accuracy;
                    if (!r.skipped_topics.empty())
                        report.annotations.push_back(row.topic + ": " + lvl + " intruder skipped " +
                                                     std::to_string(r.skipped_topics.size()) + " source topics");
                } catch (const DataError& e) {
                    report.annotations.push_back(row.topic + ": " + lvl + " intruder: " + e.what());
                }
            }
        }
    }
    report.recompute_aggregate();
    return report;
}

std::string render_coherence_table(const std::vector<CoherenceReport>& reports) {
    const std::vector<std::string> header = {"Topic Set",     "# of Topics",  "NPMI",        "C_V",
                                             "Intruder Word", "Intruder Doc", "Rating Word", "Rating Doc"};
    std::vector<std::vector<std::string>> rows = {header};
    auto cell = [](const CoherenceReport& r, const char* metric, bool percent) -> std::string {
        auto it = r.aggregate.find(metric);
        if (it == r.aggregate.end() || it->second.n == 0) return "n/a";
        std::ostringstream os;
        os << std::fixed;
        if (percent)
            os << std::setprecision(1) << it->second.mean * 100 << "% ± " << it->second.std * 100 << "%";
        else
            os << std::setprecision(3) << it->second.mean << " ± " << it->second.std;
        return os.str();
    };
    for (const auto& r : reports)
        rows.push_back({r.name.empty() ? "-" : r.name, std::to_string(r.topics.size()), cell(r, "npmi", false),
                        cell(r, "cv", false), cell(r, "intruder_word", true), cell(r, "intruder_doc", true),
                        cell(r, "rating_word", false), cell(r, "rating_doc", false)});

    // "±" is two bytes but one column.
    auto width = [](const std::string& s) {
        std::size_t w = 0;
        for (unsigned char c : s) w += (c & 0xC0) != 0x80 ? 1 : 0;
        return w;
    };
    std::vector<std::size_t> widths(header.size(), 0);
    for (const auto& row : rows)
        for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], width(row[c]));
    std::ostringstream os;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            os << (c ? " | " : "") << rows[r][c];
            if (c + 1 < rows[r].size()) os << std::string(widths[c] - width(rows[r][c]), ' ');
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
