#include "intentkit/synth_gen.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "intentkit/preprocess.hpp"
#include "intentkit/rng.hpp"
#include "intentkit/structured.hpp"

namespace intentkit {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(DescriptionSource s) { return s == DescriptionSource::human ? "human" : "synthetic"; }

DescriptionSource description_source_from_string(std::string_view s) {
    if (s == "human") return DescriptionSource::human;
    if (s == "synthetic") return DescriptionSource::synthetic;
    throw ParseError(ParseError::Kind::bad_enum, "unknown description source: " + std::string(s));
}

std::string Cell::id() const {
    return std::string(in_class_shots ? "inclass_" : "noinclass_") + std::string(to_string(source));
}

Cell Cell::parse(std::string_view id) {
    for (const auto& c : all())
        if (c.id() == id) return c;
    throw ConfigError("unknown experiment cell '" + std::string(id) +
                      "' (want inclass_human, inclass_synthetic, noinclass_human or noinclass_synthetic)");
}

std::vector<Cell> Cell::all() {
    return {{true, DescriptionSource::human},
            {true, DescriptionSource::synthetic},
            {false, DescriptionSource::human},
            {false, DescriptionSource::synthetic}};
}

void GenSpec::validate() const {
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (total <= 0 || total % batch_size != 0)
        throw ConfigError("total (" + std::to_string(total) + ") must be a positive multiple of batch_size (" +
                          std::to_string(batch_size) + ")");
    if (cross_class_shots < 0 || in_class_shots < 0) throw ConfigError("shot counts must be non-negative");
    if (batch_budget < 1) throw ConfigError("batch_budget must be at least 1");
    if (!(temperature >= 0.0 && temperature <= 2.0)) throw ConfigError("temperature must be in [0, 2]");
}

json to_json(const GeneratedUtterance& u) {
    return {{"label", u.label},         {"utterance", u.utterance}, {"reasoning", u.reasoning},
            {"explanation", u.explanation}, {"cell", u.cell},     {"batch_id", u.batch_id},
            {"position", u.position_in_batch}};
}

GeneratedUtterance generated_from_json(const json& j) {
    try {
        return {j.at("label").get<std::string>(),     j.at("utterance").get<std::string>(),
                j.at("reasoning").get<std::string>(), j.at("explanation").get<std::string>(),
                j.at("cell").get<std::string>(),      j.at("batch_id").get<int>(),
                j.at("position").get<int>()};
    } catch (const json::exception& e) {
        throw ParseError(ParseError::Kind::malformed, std::string("synthetic record: ") + e.what());
    }
}

std::string LabelDescription::prompt_text() const {
    if (keywords.empty()) return description;
    std::string out = description + " Keywords: ";
    for (std::size_t i = 0; i < keywords.size(); ++i) out += (i ? ", " : "") + keywords[i];
    return out;
}

json to_json(const LabelDescription& d) {
    return {{"label", d.label},
            {"description", d.description},
            {"keywords", d.keywords},
            {"customer_need", d.customer_need},
            {"reflection", d.reflection},
            {"explanation", d.explanation},
            {"source", to_string(d.source)}};
}

LabelDescription description_from_json(const json& j) {
    try {
        LabelDescription d;
        d.label = j.at("label").get<std::string>();
        d.description = j.at("description").get<std::string>();
        d.keywords = j.value("keywords", std::vector<std::string>{});
        d.customer_need = j.value("customer_need", "");
        d.reflection = j.value("reflection", "");
        d.explanation = j.value("explanation", "");
        d.source = description_source_from_string(j.value("source", "synthetic"));
        return d;
    } catch (const json::exception& e) {
        throw ParseError(ParseError::Kind::malformed, std::string("label description: ") + e.what());
    }
}

std::map<std::string, LabelDescription> parse_human_descriptions(const std::string& text) {
    std::map<std::string, LabelDescription> out;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(ParseError::Kind::malformed, std::string("human descriptions: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(ParseError::Kind::malformed, "human descriptions: expected an object keyed by label");
    for (const auto& [label, v] : j.items()) {
        LabelDescription d;
        d.label = label;
        d.source = DescriptionSource::human;
        try {
            if (v.is_string()) {
                d.description = v.get<std::string>();
            } else {
                d.description = v.at("description").get<std::string>();
                if (v.contains("keywords")) d.keywords = v.at("keywords").get<std::vector<std::string>>();
            }
        } catch (const json::exception& e) {
            throw ParseError(ParseError::Kind::malformed, "human description for '" + label + "': " + e.what());
        }
        out.emplace(label, std::move(d));
    }
    return out;
}

std::map<std::string, LabelDescription> load_human_descriptions(const std::string& path) {
    return parse_human_descriptions(read_file(path));
}

std::string display_label(std::string_view label) {
    std::string out;
    char prev = 0;
    for (char c : label) {
        const bool upper = c >= 'A' && c <= 'Z';
        if (c == '_' || c == '-' || c == '.' || c == ' ') {
            if (!out.empty() && out.back() != ' ') out.push_back(' ');
        } else {
            if (upper && prev && !(prev >= 'A' && prev <= 'Z') && !out.empty() && out.back() != ' ') out.push_back(' ');
            out.push_back(upper ? static_cast<char>(c - 'A' + 'a') : c);
        }
        prev = c;
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

// ---- descriptions ----------------------------------------------------------------------------

namespace {

Schema description_schema() {
    return {Dialect::yaml,
            {{"customer_need", FieldKind::scalar, true, {}},
             {"reflection", FieldKind::scalar, true, {}},
             {"description", FieldKind::scalar, true, {}},
             {"keywords", FieldKind::string_list, true, {}},
             {"explanation", FieldKind::scalar, true, {}}},
            std::nullopt};
}

Schema batch_schema() {
    return {Dialect::json,
            {{"label", FieldKind::scalar, false, {}},
             {"reflection", FieldKind::scalar, false, {}},
             {"generated_utterances",
              FieldKind::map_list,
              true,
              {{"reasoning", FieldKind::scalar, true, {}},
               {"utterance", FieldKind::scalar, true, {}},
               {"explanation", FieldKind::scalar, true, {}}}}},
            std::nullopt};
}

std::string trimmed(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string render_description_examples(const std::vector<LabelDescription>& exemplars) {
    std::string out;
    for (const auto& d : exemplars) {
        if (!out.empty()) out += "\n\n";
        out += "Nav key: \"" + d.label + "\"\nKeywords: \"" + d.prompt_text() + "\"";
    }
    return out;
}

}  // namespace

LabelDescription generate_label_description(const std::string& label, const std::vector<std::string>& real_examples,
                                            const std::vector<LabelDescription>& exemplars, LlmClient& client,
                                            const PromptLibrary& prompts, const DescriptionConfig& cfg) {
    if (real_examples.empty()) throw DataError("no_examples", "label '" + label + "' has no real examples to describe");
    std::vector<std::string> queries(real_examples.begin(),
                                     real_examples.begin() + std::min(real_examples.size(), cfg.max_queries));
    std::vector<LabelDescription> shown = exemplars;
    if (shown.size() > cfg.max_exemplars) {
        Rng rng(derive_seed(cfg.seed, "description.exemplars." + label));
        std::vector<LabelDescription> pick;
        for (auto i : rng.sample_indices(shown.size(), cfg.max_exemplars)) pick.push_back(shown[i]);
        shown = std::move(pick);
    }
    ChatRequest req;
    req.system_prompt = prompts.render("description_system", {{"institution", cfg.institution}});
    req.user_prompt = prompts.render("description_user", {{"institution", cfg.institution},
                                                          {"description_examples", render_description_examples(shown)},
                                                          {"label", label},
                                                          {"display_label", display_label(label)},
                                                          {"user_queries", quoted_list(queries)}});
    req.temperature = 0.0;
    req.max_output_tokens = cfg.max_output_tokens;
    req.request_tag = "description";

    const auto seed = derive_seed(cfg.seed, "description." + label);
    std::string last_error;
    for (int attempt = 1; attempt <= cfg.budget; ++attempt) {
        auto completion = client.complete(req, {"description", seed, 0});
        try {
            auto parsed = parse_structured(completion.response.text, description_schema());
            LabelDescription d;
            d.label = label;
            d.source = DescriptionSource::synthetic;
            d.customer_need = parsed.payload.at("customer_need").get<std::string>();
            d.reflection = parsed.payload.at("reflection").get<std::string>();
            d.description = parsed.payload.at("description").get<std::string>();
            d.explanation = parsed.payload.at("explanation").get<std::string>();
            for (const auto& k : parsed.payload.at("keywords").get<std::vector<std::string>>())
                if (!trimmed(k).empty()) d.keywords.push_back(trimmed(k));
            if (d.keywords.empty()) throw ParseError(ParseError::Kind::missing_key, "keywords list is empty");
            if (trimmed(d.description).empty()) throw ParseError(ParseError::Kind::missing_key, "description is empty");
            client.close(completion, "accepted", 0);
            return d;
        } catch (const ParseError& e) {
            last_error = e.what();
            client.close(completion, "rejected(parse_error): " + last_error, 0);
        }
    }
    throw BudgetExhausted("description for '" + label + "' not produced in " + std::to_string(cfg.budget) +
                              " attempts: " + last_error,
                          cfg.budget);
}

// ---- few-shots and batches -------------------------------------------------------------------

FewShots sample_few_shots(const LabeledSet& train, std::size_t k, std::uint64_t seed, ShotScope scope,
                          const std::string& label) {
    if (train.empty()) throw DataError("empty_dataset", "few-shot sampling needs a non-empty training set");
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < train.size(); ++i) {
        const bool own = !label.empty() && train[i].label == label;
        if (scope == ShotScope::in_class ? own : !own) pool.push_back(i);
    }
    FewShots out;
    out.short_supply = pool.size() < k;
    Rng rng(seed);
    for (auto i : rng.sample_indices(pool.size(), k)) out.examples.push_back(train[pool[i]]);
    return out;
}

std::string render_shots(const LabeledSet& shots) {
    std::string out;
    for (const auto& s : shots) {
        if (!out.empty()) out += "\n\n";
        out += "Label: \"" + s.label + "\"\nUser Utterance: \"" + s.text + "\"";
    }
    return out;
}

std::string render_utterance_prompt(const PromptLibrary& prompts, const GenSpec& spec, const LabelDescription& desc,
                                    const BatchShots& shots) {
    std::string in_class;
    if (spec.cell.in_class_shots)
        in_class = prompts.render("utterance_in_class_block", {{"in_class_examples", render_shots(shots.in_class)}});
    return prompts.render("utterance_user", {{"institution", spec.institution},
                                             {"batch_size", std::to_string(spec.batch_size)},
                                             {"label", spec.label},
                                             {"description", desc.prompt_text()},
                                             {"cross_class_examples", render_shots(shots.cross_class)},
                                             {"in_class_block", in_class}});
}

std::vector<GeneratedUtterance> generate_batch(const GenSpec& spec, const LabelDescription& desc,
                                               const BatchShots& shots, LlmClient& client, const PromptLibrary& prompts,
                                               int batch_id, int* attempts) {
    if (desc.source != spec.cell.source)
        throw ConfigError("description source " + std::string(to_string(desc.source)) + " does not match cell " +
                          spec.cell.id());
    ChatRequest req;
    req.system_prompt = prompts.render("utterance_system", {{"institution", spec.institution}});
    req.user_prompt = render_utterance_prompt(prompts, spec, desc, shots);
    req.temperature = spec.temperature;
    req.max_output_tokens = spec.max_output_tokens;
    req.request_tag = "utterance";
    const auto seed = derive_seed(spec.seed, "gen." + spec.label + "." + spec.cell.id(), static_cast<std::uint64_t>(batch_id));

    std::string last_error;
    for (int attempt = 1; attempt <= spec.batch_budget; ++attempt) {
        if (attempts) *attempts = attempt;
        auto completion = client.complete(req, {"utterance", seed, 0});
        std::string verdict = "accepted";
        std::vector<GeneratedUtterance> batch;
        try {
            auto parsed = parse_structured(completion.response.text, batch_schema());
            const auto& items = parsed.payload.at("generated_utterances");
            if (static_cast<int>(items.size()) != spec.batch_size)
                throw ParseError(ParseError::Kind::malformed, "batch holds " + std::to_string(items.size()) +
                                                                  " utterances, expected " +
                                                                  std::to_string(spec.batch_size));
            std::unordered_set<std::string> seen;
            for (std::size_t i = 0; i < items.size(); ++i) {
                GeneratedUtterance u;
                u.label = spec.label;
                u.cell = spec.cell.id();
                u.batch_id = batch_id;
                u.position_in_batch = static_cast<int>(i);
                u.utterance = trimmed(items[i].at("utterance").get<std::string>());
                u.reasoning = trimmed(items[i].at("reasoning").get<std::string>());
                u.explanation = trimmed(items[i].at("explanation").get<std::string>());
                if (u.utterance.empty() || u.reasoning.empty() || u.explanation.empty())
                    throw ParseError(ParseError::Kind::missing_key,
                                     "utterance " + std::to_string(i) + " has an empty field");
                if (!seen.insert(normalize(u.utterance)).second)
                    throw DuplicateInBatch("utterance repeated within batch: '" + u.utterance + "'");
                batch.push_back(std::move(u));
            }
        } catch (const ParseError& e) {
            last_error = e.what();
            verdict = "rejected(parse_error): " + last_error;
        } catch (const DuplicateInBatch& e) {
            last_error = e.what();
            verdict = "rejected(duplicate_in_batch): " + last_error;
        }
        client.close(completion, verdict, 0);
        if (verdict == "accepted") return batch;
    }
    throw BudgetExhausted("batch " + std::to_string(batch_id) + " of " + spec.label + "/" + spec.cell.id() +
                              " failed " + std::to_string(spec.batch_budget) + " attempts: " + last_error,
                          spec.batch_budget);
}

// ---- experiment ------------------------------------------------------------------------------

json GenerationRun::summary() const {
    json cells = json::object();
    for (const auto& [cell, labels] : stats) {
        json per_label = json::object();
        std::size_t total = 0, dups = 0;
        for (const auto& [label, s] : labels) {
            per_label[label] = {{"batches_ok", s.batches_ok},
                                {"batches_skipped", s.batches_skipped},
                                {"attempts", s.attempts},
                                {"utterances", s.utterances},
                                {"duplicates", s.duplicates},
                                {"duplicate_rate", s.duplicate_rate()},
                                {"short_cross_shots", s.short_cross_shots},
                                {"short_in_class_shots", s.short_in_class_shots}};
            total += s.utterances;
            dups += s.duplicates;
        }
        cells[cell] = {{"labels", per_label},
                       {"utterances", total},
                       {"duplicates", dups},
                       {"duplicate_rate", total ? static_cast<double>(dups) / total : 0.0}};
    }
    return {{"cells", cells}, {"exclusion_size", exclusion.size()}, {"warnings", warnings}};
}

namespace {

template <typename Fn>
void run_parallel(std::size_t n, unsigned threads, Fn&& fn) {
    threads = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
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

struct BatchTask {
    std::string label;
    Cell cell;
    int batch_id = 0;
    std::vector<GeneratedUtterance> result;
    int attempts = 0;
    std::string error;
};

}  // namespace

std::map<std::string, LabelDescription> generate_synthetic_descriptions(
    const LabeledSet& train, const std::vector<std::string>& labels,
    const std::map<std::string, LabelDescription>& human_descriptions, LlmClient& client, const PromptLibrary& prompts,
    const DescriptionConfig& cfg, std::vector<std::string>* warnings) {
    std::map<std::string, LabelDescription> out;
    for (const auto& label : labels) {
        std::vector<std::string> real;
        for (const auto& r : train)
            if (r.label == label) real.push_back(r.text);
        std::vector<LabelDescription> exemplars;
        for (const auto& [other, d] : human_descriptions)
            if (other != label) exemplars.push_back(d);
        try {
            out.emplace(label, generate_label_description(label, real, exemplars, client, prompts, cfg));
        } catch (const BudgetExhausted& e) {
            if (warnings) warnings->push_back(e.what());
        } catch (const DataError& e) {
            if (warnings) warnings->push_back(e.what());
        }
    }
    return out;
}

GenerationRun run_generation(const LabeledSet& train, const std::vector<std::string>& labels,
                             const std::map<std::string, LabelDescription>& human_descriptions, LlmClient& client,
                             const PromptLibrary& prompts, const GenerationConfig& cfg) {
    cfg.base.validate();
    if (train.empty()) throw DataError("empty_dataset", "generation needs a labelled training set");
    const bool need_human = std::any_of(cfg.cells.begin(), cfg.cells.end(),
                                        [](const Cell& c) { return c.source == DescriptionSource::human; });
    const bool need_synthetic = std::any_of(cfg.cells.begin(), cfg.cells.end(),
                                            [](const Cell& c) { return c.source == DescriptionSource::synthetic; });
    if (need_human)
        for (const auto& label : labels)
            if (!human_descriptions.count(label))
                throw ConfigError("no human description for label '" + label + "' (required by human-source cells)");

    GenerationRun run;
    const auto seed = cfg.base.seed;

    if (need_synthetic) {
        std::vector<std::string> missing;
        for (const auto& label : labels) {
            if (auto it = cfg.synthetic_descriptions.find(label); it != cfg.synthetic_descriptions.end())
                run.synthetic_descriptions.emplace(label, it->second);
            else
                missing.push_back(label);
        }
        auto dcfg = cfg.description;
        dcfg.seed = seed;
        run.synthetic_descriptions.merge(
            generate_synthetic_descriptions(train, missing, human_descriptions, client, prompts, dcfg, &run.warnings));
    }

    std::map<std::string, BatchShots> shots;
    for (const auto& label : labels) {
        auto cross = sample_few_shots(train, static_cast<std::size_t>(cfg.base.cross_class_shots),
                                      derive_seed(seed, "shots.cross." + label), ShotScope::cross_class, label);
        auto own = sample_few_shots(train, static_cast<std::size_t>(cfg.base.in_class_shots),
                                    derive_seed(seed, "shots.in_class." + label), ShotScope::in_class, label);
        for (const auto& cell : cfg.cells) {
            auto& s = run.stats[cell.id()][label];
            s.short_cross_shots = cross.short_supply;
            s.short_in_class_shots = cell.in_class_shots && own.short_supply;
            for (const auto& r : cross.examples) run.exclusion.insert(r.text);
            if (cell.in_class_shots)
                for (const auto& r : own.examples) run.exclusion.insert(r.text);
        }
        shots[label] = {std::move(cross.examples), std::move(own.examples)};
    }

    std::vector<BatchTask> tasks;
    for (const auto& cell : cfg.cells)
        for (const auto& label : labels) {
            if (cell.source == DescriptionSource::synthetic && !run.synthetic_descriptions.count(label)) {
                run.warnings.push_back("skipping " + label + "/" + cell.id() + ": no synthetic description");
                run.stats[cell.id()][label].batches_skipped = cfg.base.batches();
                continue;
            }
            for (int b = 0; b < cfg.base.batches(); ++b) tasks.push_back({label, cell, b, {}, 0, ""});
        }

    run_parallel(tasks.size(), cfg.threads, [&](std::size_t i) {
        auto& t = tasks[i];
        auto spec = cfg.base;
        spec.label = t.label;
        spec.cell = t.cell;
        const auto& desc = t.cell.source == DescriptionSource::human ? human_descriptions.at(t.label)
                                                                      : run.synthetic_descriptions.at(t.label);
        try {
            t.result = generate_batch(spec, desc, shots.at(t.label), client, prompts, t.batch_id, &t.attempts);
        } catch (const BudgetExhausted& e) {
            t.error = e.what();
        } catch (const RetriesExhausted& e) {
            t.error = e.what();
        }
    });

    for (auto& t : tasks) {
        const auto cell = t.cell.id();
        auto& s = run.stats[cell][t.label];
        auto& out = run.output[cell][t.label];
        s.attempts += t.attempts;
        if (!t.error.empty()) {
            ++s.batches_skipped;
            run.warnings.push_back(t.error);
            continue;
        }
        ++s.batches_ok;
        std::unordered_set<std::string> earlier;
        for (const auto& u : out) earlier.insert(normalize(u.utterance));
        for (auto& u : t.result) {
            s.duplicates += earlier.count(normalize(u.utterance));
            ++s.utterances;
            out.push_back(std::move(u));
        }
    }
    return run;
}

namespace {

std::string file_safe(const std::string& label) {
    std::string out;
    for (char c : label) out.push_back((c == '/' || c == '\\' || c == ':' || c == ' ') ? '_' : c);
    return out;
}

}  // namespace

void save_generation(const GenerationRun& run, const std::string& dir) {
    for (const auto& [cell, labels] : run.output)
        for (const auto& [label, rows] : labels) {
            std::string out;
            for (const auto& u : rows) out += to_json(u).dump() + "\n";
            write_file((fs::path(dir) / cell / (file_safe(label) + ".jsonl")).string(), out);
        }
    json descriptions = json::object();
    for (const auto& [label, d] : run.synthetic_descriptions) descriptions[label] = to_json(d);
    write_file((fs::path(dir) / "descriptions.json").string(), descriptions.dump(2) + "\n");
    std::string exclusion;
    for (const auto& t : run.exclusion) exclusion += t + "\n";
    write_file((fs::path(dir) / "exclusion.txt").string(), exclusion);
    write_file((fs::path(dir) / "summary.json").string(), run.summary().dump(2) + "\n");
}

std::vector<GeneratedUtterance> load_synthetic(const std::string& path) {
    std::vector<std::string> files;
    if (fs::is_directory(path)) {
        for (const auto& e : fs::directory_iterator(path))
            if (e.path().extension() == ".jsonl") files.push_back(e.path().string());
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(path);
    }
    std::vector<GeneratedUtterance> out;
    for (const auto& f : files) {
        std::istringstream in(read_file(f));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            try {
                out.push_back(generated_from_json(json::parse(line)));
            } catch (const json::parse_error& e) {
                throw ParseError(ParseError::Kind::malformed, f + ": " + e.what());
            }
        }
    }
    return out;
}

}  // namespace intentkit
