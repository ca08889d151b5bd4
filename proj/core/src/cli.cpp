#include "intentkit/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "intentkit/agents.hpp"
#include "intentkit/dataset.hpp"
#include "intentkit/error.hpp"
#include "intentkit/extrinsic.hpp"
#include "intentkit/intent_store.hpp"
#include "intentkit/llm.hpp"
#include "intentkit/model.hpp"
#include "intentkit/preprocess.hpp"
#include "intentkit/rng.hpp"
#include "intentkit/synth_eval.hpp"
#include "intentkit/synth_gen.hpp"
#include "intentkit/topic_eval.hpp"

namespace intentkit {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- configuration -----------------------------------------------------------------------------

const nlohmann::json& RunConfig::defaults() {
    static const nlohmann::json d = [] {
        json cells = json::array();
        for (const auto& c : Cell::all()) cells.push_back(c.id());
        return json{
            {"seed", 0},
            {"institution", "the bank"},
            {"prompts_dir", ""},
            {"backend",
             {{"endpoint", ""},
              {"model", ""},
              {"credential_env", "INTENTKIT_API_KEY"},
              {"auth_style", "bearer"},
              {"timeout_ms", 120000},
              {"max_retries", 3},
              {"backoff_ms", 1000}}},
            {"inputs",
             {{"seeds", ""}, {"proxy", ""}, {"unlabeled", ""}, {"train", ""}, {"test", ""}, {"human_descriptions", ""}}},
            {"preprocess", {{"scrub", false}}},
            {"agents",
             {{"max_consecutive_failures", 1000},
              {"max_merger_calls", 20000},
              {"sample_size", 200},
              {"generator_budget", 5},
              {"proposer_budget", 3},
              {"judge_budget", 3},
              {"refiner_budget", 3},
              {"adder_budget", 3},
              {"under_exampled_below", 3},
              {"temperature", 0.0},
              {"max_output_tokens", 4096}}},
            {"generation",
             {{"cells", cells},
              {"labels", json::array()},
              {"cross_class_shots", 10},
              {"in_class_shots", 10},
              {"batch_size", 5},
              {"total", 100},
              {"temperature", 0.7},
              {"max_output_tokens", 4096},
              {"batch_budget", 3},
              {"description_budget", 3},
              {"threads", 1}}},
            {"topic_eval",
             {{"window", 10}, {"top_k", 10}, {"rating_trials", 10}, {"intruder_trials", 10}, {"run_judge", true}, {"threads", 1}}},
            {"intrinsic",
             {{"max_n", 4}, {"qms_mode", "vocabulary"}, {"run_discrimination", true}, {"trials", 100}, {"few_shot", 10}}},
            {"extrinsic",
             {{"replace_fraction", 0.25}, {"per_label_cap", 100}, {"l2", 1e-4}, {"max_iterations", 500}, {"threads", 1}}}};
    }();
    return d;
}

namespace {

bool same_kind(const json& a, const json& b) {
    if (a.is_number() && b.is_number()) return !(a.is_number_integer() && b.is_number_float());
    return a.type() == b.type();
}

void check_against(const json& user, const json& reference, const std::string& where) {
    for (const auto& [key, value] : user.items()) {
        const auto path = where.empty() ? key : where + "." + key;
        auto it = reference.find(key);
        if (it == reference.end()) throw ConfigError("unknown config key '" + path + "'");
        if (!same_kind(*it, value)) throw ConfigError("config key '" + path + "' has the wrong type");
        if (value.is_object()) check_against(value, *it, path);
    }
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& overrides) {
    if (!overrides.is_object()) throw ConfigError("config must be a JSON object");
    check_against(overrides, defaults(), "");
    RunConfig c;
    c.data_ = defaults();
    c.data_.merge_patch(overrides);
    // merge_patch drops nulls and replaces arrays wholesale, which is the intended behaviour
    if (c.data_["seed"].get<long long>() < 0) throw ConfigError("seed must be non-negative");
    return c;
}

std::string RunConfig::digest() const { return to_hex(fnv1a64(data_.dump())); }

// ---- run context -------------------------------------------------------------------------------

namespace {

struct Options {
    std::string run_dir;
    std::string config;
    std::string mock;
    std::optional<std::uint64_t> seed;
    std::string prompts_dir;
    std::string seeds, proxy, unlabeled, train, test, human_descriptions;
    std::vector<std::string> cells, labels;
    std::optional<std::size_t> accept_prefix;
    std::string decisions;
    bool no_judge = false;
    bool scrub = false;
    std::string intents;
};

class RunLock {
  public:
    explicit RunLock(const fs::path& path) : path_(path) {
        FILE* f = std::fopen(path.c_str(), "wx");
        if (!f) throw ConfigError("run directory is locked by another process (" + path.string() + ")");
        std::fclose(f);
    }
    ~RunLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

  private:
    fs::path path_;
};

class Context {
  public:
    Context(const Options& opt, std::string stage, std::ostream& out) : opt_(opt), stage_(std::move(stage)), out_(out) {
        run_ = fs::path(opt.run_dir);
        fs::create_directories(run_);
        lock_ = std::make_unique<RunLock>(run_ / ".lock");
        load_config();
        if (!opt.mock.empty()) network::deny(true);
        prompts_ = config_.data()["prompts_dir"].get<std::string>().empty()
                       ? PromptLibrary()
                       : PromptLibrary(config_.data()["prompts_dir"].get<std::string>());
    }

    const json& cfg() const { return config_.data(); }
    const RunConfig& config() const { return config_; }
    const PromptLibrary& prompts() const { return prompts_; }
    std::ostream& out() { return out_; }
    const Options& opt() const { return opt_; }
    std::uint64_t seed(std::string_view stage) const { return derive_seed(cfg()["seed"].get<std::uint64_t>(), stage); }

    std::string path(const std::string& rel) const { return (run_ / rel).string(); }
    bool exists(const std::string& rel) const { return fs::exists(run_ / rel); }

    std::string input(const char* key) const {
        const auto p = cfg()["inputs"][key].get<std::string>();
        if (p.empty())
            throw ConfigError(std::string("no ") + key + " input configured (set inputs." + key + " or pass --" + flag(key) + ")");
        return p;
    }

    LlmClient& client() {
        if (client_) return *client_;
        if (!opt_.mock.empty()) {
            backend_ = MockBackend::from_file(opt_.mock);
        } else {
            const auto& b = cfg()["backend"];
            BackendConfig bc;
            bc.endpoint = b["endpoint"].get<std::string>();
            bc.model = b["model"].get<std::string>();
            bc.credential_env = b["credential_env"].get<std::string>();
            const auto style = b["auth_style"].get<std::string>();
            if (style != "bearer" && style != "api_key_header") throw ConfigError("backend.auth_style must be bearer or api_key_header");
            bc.auth_style = style == "bearer" ? AuthStyle::bearer : AuthStyle::api_key_header;
            bc.timeout = std::chrono::milliseconds(b["timeout_ms"].get<long long>());
            bc.max_retries = b["max_retries"].get<int>();
            bc.backoff_base = std::chrono::milliseconds(b["backoff_ms"].get<long long>());
            backend_ = std::make_unique<HttpBackend>(bc);
        }
        const auto audit_path = path("audit/" + stage_ + ".jsonl");
        fs::create_directories(fs::path(audit_path).parent_path());
        fs::remove(audit_path);
        audit_ = std::make_unique<AuditLog>(audit_path, opt_.mock.empty() ? AuditLog::wall_clock() : AuditLog::logical_clock());
        RetryPolicy policy;
        policy.max_retries = cfg()["backend"]["max_retries"].get<int>();
        policy.backoff_base = std::chrono::milliseconds(cfg()["backend"]["backoff_ms"].get<long long>());
        LlmClient::Sleeper sleeper;
        if (!opt_.mock.empty()) sleeper = [](std::chrono::milliseconds) {};
        client_ = std::make_unique<LlmClient>(*backend_, audit_.get(), policy, sleeper);
        return *client_;
    }

    void write(const std::string& rel, const std::string& contents) {
        write_file(path(rel), contents);
        outputs_.push_back(rel);
    }
    void record_output(const std::string& rel) { outputs_.push_back(rel); }

    void mark(bool complete, const std::string& error = "") {
        json status = {{"stage", stage_}, {"complete", complete}, {"config_digest", config_.digest()}, {"outputs", outputs_}};
        if (client_) status["llm_calls"] = client_->calls();
        if (!error.empty()) status["error"] = error;
        write_file(path("status/" + stage_ + ".json"), status.dump(2) + "\n");
    }

    ~Context() {
        // flush and close the audit log before the lock goes
        client_.reset();
        audit_.reset();
        backend_.reset();
    }

  private:
    static std::string flag(const std::string& key) {
        std::string f = key;
        for (auto& c : f)
            if (c == '_') c = '-';
        return f;
    }

    void load_config() {
        json user = json::object();
        fs::path base = fs::current_path();
        if (!opt_.config.empty()) {
            user = parse_json_file(opt_.config);
            base = fs::absolute(opt_.config).parent_path();
        } else if (fs::exists(run_ / "config.json")) {
            user = parse_json_file((run_ / "config.json").string());
        }
        config_ = RunConfig::from_json(user);
        auto& j = config_.data();
        // paths in a config file are relative to that file, flags to the working directory
        for (auto& [key, v] : j["inputs"].items())
            if (!v.get<std::string>().empty()) v = (base / v.get<std::string>()).lexically_normal().string();
        if (!j["prompts_dir"].get<std::string>().empty())
            j["prompts_dir"] = (base / j["prompts_dir"].get<std::string>()).lexically_normal().string();
        if (opt_.seed) j["seed"] = *opt_.seed;
        if (!opt_.prompts_dir.empty()) j["prompts_dir"] = fs::absolute(opt_.prompts_dir).lexically_normal().string();
        auto set_input = [&](const char* key, const std::string& value) {
            if (!value.empty()) j["inputs"][key] = value;
            auto& v = j["inputs"][key];
            if (!v.get<std::string>().empty()) v = fs::absolute(v.get<std::string>()).lexically_normal().string();
        };
        set_input("seeds", opt_.seeds);
        set_input("proxy", opt_.proxy);
        set_input("unlabeled", opt_.unlabeled);
        set_input("train", opt_.train);
        set_input("test", opt_.test);
        set_input("human_descriptions", opt_.human_descriptions);
        if (opt_.scrub) j["preprocess"]["scrub"] = true;
        if (!opt_.cells.empty()) j["generation"]["cells"] = opt_.cells;
        if (!opt_.labels.empty()) j["generation"]["labels"] = opt_.labels;
        if (opt_.no_judge) {
            j["topic_eval"]["run_judge"] = false;
            j["intrinsic"]["run_discrimination"] = false;
        }
        config_ = RunConfig::from_json(j);
        write_file((run_ / "config.json").string(), config_.data().dump(2) + "\n");
    }

    static json parse_json_file(const std::string& p) {
        try {
            return json::parse(read_file(p));
        } catch (const json::parse_error& e) {
            throw ConfigError("config " + p + " is not valid JSON: " + e.what());
        }
    }

    const Options& opt_;
    std::string stage_;
    std::ostream& out_;
    fs::path run_;
    std::unique_ptr<RunLock> lock_;
    RunConfig config_;
    PromptLibrary prompts_;
    std::unique_ptr<Backend> backend_;
    std::unique_ptr<AuditLog> audit_;
    std::unique_ptr<LlmClient> client_;
    std::vector<std::string> outputs_;
};

// ---- shared loaders ----------------------------------------------------------------------------

bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<SeedTopic> load_seed_topics(const std::string& path) {
    std::vector<SeedTopic> topics;
    if (has_suffix(path, ".json")) {
        json j;
        try {
            j = json::parse(read_file(path));
        } catch (const json::parse_error& e) {
            throw ParseError(ParseError::Kind::malformed, path + ": " + e.what());
        }
        if (j.is_object()) {
            for (const auto& [name, d] : j.items()) topics.push_back({name, d.get<std::string>()});
        } else if (j.is_array()) {
            for (const auto& t : j) {
                if (!t.contains("name")) throw ParseError(ParseError::Kind::missing_key, path + ": seed topic needs a name");
                topics.push_back({t.at("name").get<std::string>(), t.value("description", "")});
            }
        } else {
            throw ParseError(ParseError::Kind::malformed, path + ": expected an array or object of seed topics");
        }
    } else {
        for (const auto& line : load_lines(path)) {
            auto tab = line.find('\t');
            topics.push_back({line.substr(0, tab), tab == std::string::npos ? "" : line.substr(tab + 1)});
        }
    }
    if (topics.empty()) throw DataError("empty_dataset", "no seed topics in " + path);
    return topics;
}

std::vector<std::string> load_texts(const std::string& path) {
    if (has_suffix(path, ".jsonl") || has_suffix(path, ".tsv") || has_suffix(path, ".csv")) {
        std::vector<std::string> out;
        for (const auto& r : load_labeled(path)) out.push_back(r.text);
        return out;
    }
    return load_lines(path);
}

std::vector<std::string> generation_labels(const Context& ctx, const LabeledSet& train) {
    auto labels = ctx.cfg()["generation"]["labels"].get<std::vector<std::string>>();
    return labels.empty() ? labels_of(train) : labels;
}

std::map<std::string, LabelDescription> human_descriptions(const Context& ctx, bool required) {
    const auto p = ctx.cfg()["inputs"]["human_descriptions"].get<std::string>();
    if (p.empty()) {
        if (required) throw ConfigError("human descriptions are required (set inputs.human_descriptions or --human-descriptions)");
        return {};
    }
    return load_human_descriptions(p);
}

// Every generated cell directory under gen/, keyed by cell id.
std::map<std::string, std::vector<GeneratedUtterance>> generated_cells(const Context& ctx) {
    std::map<std::string, std::vector<GeneratedUtterance>> out;
    for (const auto& c : Cell::all())
        if (ctx.exists("gen/" + c.id())) out[c.id()] = load_synthetic(ctx.path("gen/" + c.id()));
    return out;
}

std::set<std::string> exclusion_list(const Context& ctx) {
    if (!ctx.exists("gen/exclusion.txt")) return {};
    auto lines = load_lines(ctx.path("gen/exclusion.txt"));
    return {lines.begin(), lines.end()};
}

AgentConfig agent_config(const Context& ctx, std::string_view stage) {
    const auto& a = ctx.cfg()["agents"];
    AgentConfig c;
    c.max_consecutive_failures = a["max_consecutive_failures"].get<int>();
    c.max_merger_calls = a["max_merger_calls"].get<int>();
    c.sample_size = a["sample_size"].get<std::size_t>();
    c.generator_budget = a["generator_budget"].get<int>();
    c.proposer_budget = a["proposer_budget"].get<int>();
    c.judge_budget = a["judge_budget"].get<int>();
    c.refiner_budget = a["refiner_budget"].get<int>();
    c.adder_budget = a["adder_budget"].get<int>();
    c.under_exampled_below = a["under_exampled_below"].get<std::size_t>();
    c.temperature = a["temperature"].get<double>();
    c.max_output_tokens = a["max_output_tokens"].get<int>();
    c.institution = ctx.cfg()["institution"].get<std::string>();
    c.shuffle_seed = ctx.seed(stage);
    c.validate();
    return c;
}

std::string lines_of(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& i : items) out += i + "\n";
    return out;
}

void save_actions(Context& ctx, const std::string& rel, const AgentRuntime& rt) {
    std::string out;
    for (const auto& a : rt.actions()) out += action_to_json(a) + "\n";
    ctx.write(rel, out);
}

// ---- stages ------------------------------------------------------------------------------------

void stage_preprocess(Context& ctx) {
    std::optional<ScrubConfig> scrub;
    if (ctx.cfg()["preprocess"]["scrub"].get<bool>()) scrub = ScrubConfig{ctx.seed("preprocess.scrub")};
    const ScrubConfig* sc = scrub ? &*scrub : nullptr;
    json stats = json::object();

    const auto proxy_rows = load_labeled(ctx.input("proxy"));
    std::vector<Query> proxy;
    for (const auto& r : proxy_rows) proxy.push_back(make_query(r.text, QuerySource::proxy_labeled, r.label, sc));
    const auto proxy_corpus = dedupe(proxy);
    save_corpus(proxy_corpus, ctx.path("corpus/proxy.jsonl"));
    ctx.record_output("corpus/proxy.jsonl");
    stats["proxy"] = {{"read", proxy.size()}, {"kept", proxy_corpus.size()}};

    const auto unlabeled_path = ctx.cfg()["inputs"]["unlabeled"].get<std::string>();
    if (!unlabeled_path.empty()) {
        std::vector<Query> unlabeled;
        for (const auto& t : load_texts(unlabeled_path)) unlabeled.push_back(make_query(t, QuerySource::unlabeled, std::nullopt, sc));
        const auto corpus = dedupe(unlabeled);
        save_corpus(corpus, ctx.path("corpus/unlabeled.jsonl"));
        ctx.record_output("corpus/unlabeled.jsonl");
        stats["unlabeled"] = {{"read", unlabeled.size()}, {"kept", corpus.size()}};
    }
    stats["scrubbed"] = scrub.has_value();
    ctx.write("corpus/stats.json", stats.dump(2) + "\n");
    ctx.out() << "preprocess: " << proxy_corpus.size() << " proxy queries";
    if (stats.contains("unlabeled")) ctx.out() << ", " << stats["unlabeled"]["kept"] << " unlabeled";
    ctx.out() << "\n";
}

void stage_hte(Context& ctx) {
    const auto topics = load_seed_topics(ctx.input("seeds"));
    if (!ctx.exists("corpus/proxy.jsonl")) throw ConfigError("run preprocess first (corpus/proxy.jsonl missing)");
    const auto corpus = load_corpus(ctx.path("corpus/proxy.jsonl"));
    AgentRuntime rt(ctx.client(), ctx.prompts(), agent_config(ctx, "hte"));
    auto r = hte_pipeline(rt, topics, corpus);
    save_intent_set(r.set, ctx.path("hte/intents.jsonl"));
    ctx.record_output("hte/intents.jsonl");
    save_merges(r.merges, ctx.path("hte/merges.jsonl"));
    ctx.record_output("hte/merges.jsonl");
    save_actions(ctx, "hte/actions.jsonl", rt);
    json summary = {{"intents", r.set.active_count()},
                    {"proposed_merges", r.merges.size()},
                    {"unexpanded_topics", r.unexpanded_topics},
                    {"skipped_topics", r.skipped_topics},
                    {"warnings", rt.warnings()}};
    ctx.write("hte/summary.json", summary.dump(2) + "\n");
    ctx.out() << "hte: " << r.set.active_count() << " intents, " << r.merges.size() << " merges proposed for review\n";
}

void stage_review(Context& ctx) {
    const auto& opt = ctx.opt();
    if (!ctx.exists("hte/intents.jsonl")) throw ConfigError("run hte first (hte/intents.jsonl missing)");
    auto set = load_intent_set(ctx.path("hte/intents.jsonl"));
    const auto before = set;
    const auto merges = load_merges(ctx.path("hte/merges.jsonl"));
    ReviewDecision decision;
    if (opt.accept_prefix) {
        if (*opt.accept_prefix > merges.size())
            throw ConfigError("--accept-prefix " + std::to_string(*opt.accept_prefix) + " exceeds the " +
                              std::to_string(merges.size()) + " proposed merges");
        decision = ReviewDecision::prefix(*opt.accept_prefix);
    } else if (!opt.decisions.empty()) {
        std::vector<bool> verdicts;
        for (const auto& line : load_lines(opt.decisions)) {
            const auto v = normalize(line);
            if (v == "y" || v == "yes" || v == "accept")
                verdicts.push_back(true);
            else if (v == "n" || v == "no" || v == "skip" || v == "reject")
                verdicts.push_back(false);
            else
                throw ParseError(ParseError::Kind::bad_enum, opt.decisions + ": decision must be accept or skip, got '" + line + "'");
        }
        decision = ReviewDecision::per_item(std::move(verdicts));
    } else {
        std::ostringstream os;
        for (std::size_t i = 0; i < merges.size(); ++i)
            os << i + 1 << ". keep " << merges[i].keep.str() << ", eliminate " << merges[i].eliminate.str()
               << (merges[i].conflicting ? " (conflicting)" : "") << "\n";
        ctx.out() << os.str();
        throw ConfigError("review-merges needs --accept-prefix N or --decisions FILE");
    }
    const auto applied = review_merges(set, merges, decision);
    save_intent_set(set, ctx.path("review/intents.jsonl"));
    ctx.record_output("review/intents.jsonl");
    save_merges(applied, ctx.path("review/applied.jsonl"));
    ctx.record_output("review/applied.jsonl");
    ctx.write("review/diff.txt", render_diff(diff_intent_sets(before, set)));
    ctx.out() << "review-merges: applied " << applied.size() << " of " << merges.size() << " merges\n";
}

void stage_tgb(Context& ctx) {
    std::string source = ctx.opt().intents;
    if (source.empty()) {
        if (ctx.exists("review/intents.jsonl"))
            source = ctx.path("review/intents.jsonl");
        else if (ctx.exists("hte/intents.jsonl"))
            source = ctx.path("hte/intents.jsonl");
        else
            throw ConfigError("no intent set to extend (run hte and review-merges, or pass --intents)");
    }
    if (!ctx.exists("corpus/unlabeled.jsonl")) throw ConfigError("no unlabeled corpus (run preprocess with --unlabeled)");
    const auto set = load_intent_set(source);
    const auto corpus = load_corpus(ctx.path("corpus/unlabeled.jsonl"));
    AgentRuntime rt(ctx.client(), ctx.prompts(), agent_config(ctx, "tgb"));
    auto r = tgb_pipeline(rt, set, corpus);
    save_intent_set(r.set, ctx.path("tgb/intents.jsonl"));
    ctx.record_output("tgb/intents.jsonl");
    std::string proposals;
    for (const auto& p : r.proposals) proposals += proposal_to_json(p) + "\n";
    ctx.write("tgb/proposals.jsonl", proposals);
    save_actions(ctx, "tgb/actions.jsonl", rt);
    json summary = {{"intents_before", set.active_count()},
                    {"intents_after", r.set.active_count()},
                    {"discovered", r.discovered},
                    {"enriched_updates", r.enriched_updates},
                    {"warnings", rt.warnings()}};
    ctx.write("tgb/summary.json", summary.dump(2) + "\n");
    ctx.out() << "tgb: " << r.discovered << " intents discovered, " << r.set.active_count() << " active\n";
}

DescriptionConfig description_config(const Context& ctx) {
    DescriptionConfig d;
    d.institution = ctx.cfg()["institution"].get<std::string>();
    d.budget = ctx.cfg()["generation"]["description_budget"].get<int>();
    d.seed = ctx.seed("gen.descriptions");
    return d;
}

void stage_gen_descriptions(Context& ctx) {
    const auto train = load_labeled(ctx.input("train"));
    const auto labels = generation_labels(ctx, train);
    std::vector<std::string> warnings;
    const auto descriptions = generate_synthetic_descriptions(train, labels, human_descriptions(ctx, false), ctx.client(),
                                                              ctx.prompts(), description_config(ctx), &warnings);
    json j = json::object();
    for (const auto& [label, d] : descriptions) j[label] = to_json(d);
    ctx.write("gen/synthetic_descriptions.json", j.dump(2) + "\n");
    for (const auto& w : warnings) ctx.out() << "warning: " << w << "\n";
    ctx.out() << "gen-descriptions: " << descriptions.size() << " of " << labels.size() << " labels described\n";
}

void stage_gen_utterances(Context& ctx) {
    const auto train = load_labeled(ctx.input("train"));
    const auto labels = generation_labels(ctx, train);
    const auto& g = ctx.cfg()["generation"];
    GenerationConfig cfg;
    cfg.cells.clear();
    for (const auto& id : g["cells"]) cfg.cells.push_back(Cell::parse(id.get<std::string>()));
    const bool need_human = std::any_of(cfg.cells.begin(), cfg.cells.end(),
                                        [](const Cell& c) { return c.source == DescriptionSource::human; });
    cfg.base.cross_class_shots = g["cross_class_shots"].get<int>();
    cfg.base.in_class_shots = g["in_class_shots"].get<int>();
    cfg.base.batch_size = g["batch_size"].get<int>();
    cfg.base.total = g["total"].get<int>();
    cfg.base.temperature = g["temperature"].get<double>();
    cfg.base.max_output_tokens = g["max_output_tokens"].get<int>();
    cfg.base.batch_budget = g["batch_budget"].get<int>();
    cfg.base.seed = ctx.seed("gen.utterances");
    cfg.base.institution = ctx.cfg()["institution"].get<std::string>();
    cfg.description = description_config(ctx);
    cfg.threads = g["threads"].get<unsigned>();
    if (ctx.exists("gen/synthetic_descriptions.json")) {
        const auto saved = json::parse(read_file(ctx.path("gen/synthetic_descriptions.json")));
        for (const auto& [label, d] : saved.items()) cfg.synthetic_descriptions.emplace(label, description_from_json(d));
    }

    const auto run = run_generation(train, labels, human_descriptions(ctx, need_human), ctx.client(), ctx.prompts(), cfg);
    save_generation(run, ctx.path("gen"));
    for (const auto& c : cfg.cells) ctx.record_output("gen/" + c.id());
    for (auto f : {"gen/descriptions.json", "gen/exclusion.txt", "gen/summary.json"}) ctx.record_output(f);
    for (const auto& w : run.warnings) ctx.out() << "warning: " << w << "\n";
    std::size_t total = 0;
    for (const auto& [cell, by_label] : run.output)
        for (const auto& [label, rows] : by_label) total += rows.size();
    ctx.out() << "gen-utterances: " << total << " utterances over " << cfg.cells.size() << " cells and " << labels.size()
              << " labels\n";
}

void stage_eval_topics(Context& ctx) {
    Corpus corpus;
    for (auto rel : {"corpus/proxy.jsonl", "corpus/unlabeled.jsonl"})
        if (ctx.exists(rel))
            for (const auto& q : load_corpus(ctx.path(rel))) corpus.add(q);
    const auto& t = ctx.cfg()["topic_eval"];
    TopicEvalConfig cfg;
    cfg.window = t["window"].get<int>();
    cfg.top_k = t["top_k"].get<int>();
    cfg.rating_trials = t["rating_trials"].get<int>();
    cfg.intruder_trials = t["intruder_trials"].get<int>();
    cfg.run_judge = t["run_judge"].get<bool>();
    cfg.threads = t["threads"].get<unsigned>();
    cfg.seed = ctx.seed("eval.topics");
    cfg.judge.institution = ctx.cfg()["institution"].get<std::string>();

    std::vector<CoherenceReport> reports;
    for (auto [name, rel] : std::vector<std::pair<std::string, std::string>>{
             {"hte", "hte/intents.jsonl"}, {"reviewed", "review/intents.jsonl"}, {"tgb", "tgb/intents.jsonl"}}) {
        if (!ctx.exists(rel)) continue;
        reports.push_back(evaluate_topic_set(load_intent_set(ctx.path(rel)), corpus, cfg.run_judge ? &ctx.client() : nullptr,
                                             ctx.prompts(), cfg, name));
    }
    if (reports.empty()) throw ConfigError("no intent sets to evaluate (run hte first)");
    json j = {{"config_digest", ctx.config().digest()}, {"reports", json::array()}};
    for (const auto& r : reports) j["reports"].push_back(r.to_json());
    ctx.write("eval/topics.json", j.dump(2) + "\n");
    const auto table = render_coherence_table(reports);
    ctx.write("eval/topics.txt", table);
    ctx.out() << table;
}

void stage_eval_intrinsic(Context& ctx) {
    const auto real = load_texts(ctx.input("train"));
    std::map<std::string, std::vector<std::string>> cells;
    for (const auto& [cell, rows] : generated_cells(ctx))
        for (const auto& r : rows) cells[cell].push_back(r.utterance);
    const auto& c = ctx.cfg()["intrinsic"];
    IntrinsicConfig cfg;
    cfg.max_n = c["max_n"].get<int>();
    const auto mode = c["qms_mode"].get<std::string>();
    if (mode != "vocabulary" && mode != "token") throw ConfigError("intrinsic.qms_mode must be vocabulary or token");
    cfg.qms_mode = mode == "vocabulary" ? QmsMode::vocabulary : QmsMode::token;
    cfg.run_discrimination = c["run_discrimination"].get<bool>();
    cfg.discrimination.trials = c["trials"].get<int>();
    cfg.discrimination.few_shot = c["few_shot"].get<std::size_t>();
    cfg.discrimination.seed = ctx.seed("eval.intrinsic");
    LlmClient* judge = cfg.run_discrimination && !cells.empty() ? &ctx.client() : nullptr;
    const auto report = intrinsic_report(cells, real, judge, ctx.prompts(), cfg);
    auto j = report.to_json();
    j["config_digest"] = ctx.config().digest();
    ctx.write("eval/intrinsic.json", j.dump(2) + "\n");
    const auto table = report.render_table();
    ctx.write("eval/intrinsic.txt", table);
    ctx.out() << table;
}

ExtrinsicConfig extrinsic_config(const Context& ctx) {
    const auto& e = ctx.cfg()["extrinsic"];
    ExtrinsicConfig cfg;
    cfg.replace_fraction = e["replace_fraction"].get<double>();
    cfg.per_label_cap = e["per_label_cap"].get<std::size_t>();
    cfg.classifier.l2 = e["l2"].get<double>();
    cfg.classifier.max_iterations = e["max_iterations"].get<int>();
    cfg.classifier.seed = ctx.seed("eval.extrinsic.classifier");
    cfg.threads = e["threads"].get<unsigned>();
    cfg.seed = ctx.seed("eval.extrinsic");
    return cfg;
}

std::map<std::string, SyntheticPool> synthetic_pools(const Context& ctx) {
    std::map<std::string, SyntheticPool> pools;
    for (const auto& [cell, rows] : generated_cells(ctx))
        for (const auto& r : rows) pools[cell][r.label].push_back(r.utterance);
    return pools;
}

void stage_eval_extrinsic(Context& ctx) {
    const auto train = load_labeled(ctx.input("train"));
    const auto test = load_labeled(ctx.input("test"));
    const auto run = run_extrinsic(train, test, synthetic_pools(ctx), exclusion_list(ctx), extrinsic_config(ctx));
    auto j = run.to_json();
    j["config_digest"] = ctx.config().digest();
    ctx.write("eval/extrinsic.json", j.dump(2) + "\n");
    const auto table = run.render_table();
    ctx.write("eval/extrinsic.txt", table);
    for (const auto& a : run.annotations) ctx.out() << "note: " << a << "\n";
    ctx.out() << table;
}

void stage_export(Context& ctx) {
    const auto train = load_labeled(ctx.input("train"));
    const auto test = load_labeled(ctx.input("test"));
    const auto assemblies = build_assemblies(train, synthetic_pools(ctx), exclusion_list(ctx), extrinsic_config(ctx));
    export_datasets(assemblies, test, ctx.path("export"));
    for (const auto& a : assemblies) ctx.record_output("export/" + a.id() + ".jsonl");
    ctx.record_output("export/test.jsonl");
    ctx.record_output("export/manifest.json");
    ctx.out() << "export: " << assemblies.size() << " training sets and the test set written to " << ctx.path("export") << "\n";
}

void stage_report(Context& ctx) {
    std::ostringstream md;
    md << "# Run report\n\nConfig digest: `" << ctx.config().digest() << "`\n\n## Stages\n\n";
    for (auto stage : {"preprocess", "hte", "review-merges", "tgb", "gen-descriptions", "gen-utterances", "eval-topics",
                       "eval-intrinsic", "eval-extrinsic", "export"}) {
        const auto rel = std::string("status/") + stage + ".json";
        if (!ctx.exists(rel)) continue;
        const auto s = json::parse(read_file(ctx.path(rel)));
        md << "- " << stage << ": " << (s["complete"].get<bool>() ? "complete" : "INCOMPLETE")
           << (s["config_digest"] != ctx.config().digest() ? " (different config)" : "") << "\n";
    }
    for (auto [title, rel] : std::vector<std::pair<std::string, std::string>>{{"Topic coherence", "eval/topics.txt"},
                                                                               {"Intrinsic metrics", "eval/intrinsic.txt"},
                                                                               {"Extrinsic evaluation", "eval/extrinsic.txt"}}) {
        if (!ctx.exists(rel)) continue;
        md << "\n## " << title << "\n\n```\n" << read_file(ctx.path(rel)) << "```\n";
    }
    ctx.write("report.md", md.str());
    ctx.out() << md.str();
}

ExitCode exit_code_for(const Error& e) {
    switch (e.category()) {
        case ErrorCategory::io: return ExitCode::io;
        case ErrorCategory::config: return ExitCode::config;
        case ErrorCategory::data: return ExitCode::data;
        case ErrorCategory::backend: return ExitCode::backend;
        case ErrorCategory::validation: return ExitCode::validation;
    }
    return ExitCode::internal;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Intent taxonomy discovery, synthetic data generation and evaluation"};
    app.name(args.empty() ? "intentkit" : args[0]);
    app.require_subcommand(1);
    Options opt;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--run-dir", opt.run_dir, "Run directory (created if missing)")->required();
        sub->add_option("--config", opt.config, "Run configuration JSON (defaults to <run-dir>/config.json)");
        sub->add_option("--mock", opt.mock, "Scripted mock backend; disables all network access");
        sub->add_option("--seed", opt.seed, "Master seed");
        sub->add_option("--prompts-dir", opt.prompts_dir, "Directory of prompt template overrides");
        return sub;
    };
    using Stage = void (*)(Context&);
    std::vector<std::pair<CLI::App*, Stage>> stages;

    auto* pre = common(app.add_subcommand("preprocess", "Normalize, optionally scrub, and dedupe the corpora"));
    pre->add_option("--proxy", opt.proxy, "Labelled proxy corpus (.tsv, .csv or .jsonl)");
    pre->add_option("--unlabeled", opt.unlabeled, "Unlabelled queries (one per line, or a labelled file)");
    pre->add_flag("--scrub", opt.scrub, "Scramble digits and perturb e-mail addresses");
    stages.emplace_back(pre, stage_preprocess);

    auto* hte = common(app.add_subcommand("hte", "Expand seed topics into intents and propose merges"));
    hte->add_option("--seeds", opt.seeds, "Seed topics (.json or name<TAB>description lines)");
    stages.emplace_back(hte, stage_hte);

    auto* review = common(app.add_subcommand("review-merges", "Apply reviewed merges to the expanded intent set"));
    auto* prefix = review->add_option("--accept-prefix", opt.accept_prefix, "Accept the first N proposed merges");
    review->add_option("--decisions", opt.decisions, "One accept/skip line per proposed merge")->excludes(prefix);
    stages.emplace_back(review, stage_review);

    auto* tgb = common(app.add_subcommand("tgb", "Discover intents missing from the taxonomy"));
    tgb->add_option("--intents", opt.intents, "Intent set to extend (defaults to the reviewed set)");
    stages.emplace_back(tgb, stage_tgb);

    auto* gd = common(app.add_subcommand("gen-descriptions", "Write synthetic label descriptions"));
    gd->add_option("--train", opt.train, "Labelled training data");
    gd->add_option("--human-descriptions", opt.human_descriptions, "Human descriptions used as exemplars");
    gd->add_option("--labels", opt.labels, "Labels to describe (default: all)")->delimiter(',');
    stages.emplace_back(gd, stage_gen_descriptions);

    auto* gu = common(app.add_subcommand("gen-utterances", "Generate synthetic utterances per label and cell"));
    gu->add_option("--train", opt.train, "Labelled training data");
    gu->add_option("--human-descriptions", opt.human_descriptions, "Human label descriptions (JSON)");
    gu->add_option("--cells", opt.cells, "Comma-separated cells")->delimiter(',');
    gu->add_option("--labels", opt.labels, "Labels to generate (default: all)")->delimiter(',');
    stages.emplace_back(gu, stage_gen_utterances);

    auto* et = common(app.add_subcommand("eval-topics", "Coherence metrics and judge tasks for the intent sets"));
    et->add_flag("--no-judge", opt.no_judge, "Skip the LLM judge tasks");
    stages.emplace_back(et, stage_eval_topics);

    auto* ei = common(app.add_subcommand("eval-intrinsic", "Diversity metrics and discrimination for synthetic data"));
    ei->add_option("--train", opt.train, "Real baseline (labelled file or one utterance per line)");
    ei->add_flag("--no-judge", opt.no_judge, "Skip the discrimination task");
    stages.emplace_back(ei, stage_eval_intrinsic);

    auto* ee = common(app.add_subcommand("eval-extrinsic", "Train the proxy classifier on each data configuration"));
    ee->add_option("--train", opt.train, "Labelled real training data");
    ee->add_option("--test", opt.test, "Labelled real test data");
    stages.emplace_back(ee, stage_eval_extrinsic);

    auto* ex = common(app.add_subcommand("export", "Write the assembled training sets for external training"));
    ex->add_option("--train", opt.train, "Labelled real training data");
    ex->add_option("--test", opt.test, "Labelled real test data");
    stages.emplace_back(ex, stage_export);

    stages.emplace_back(common(app.add_subcommand("report", "Collect stage status and tables into report.md")), stage_report);

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : static_cast<int>(ExitCode::config);
    }

    for (const auto& [sub, fn] : stages) {
        if (!sub->parsed()) continue;
        struct GuardRestore {
            bool was = network::denied();
            ~GuardRestore() { network::deny(was); }
        } restore;
        std::unique_ptr<Context> ctx;
        try {
            ctx = std::make_unique<Context>(opt, sub->get_name(), out);
            ctx->mark(false);
            fn(*ctx);
            ctx->mark(true);
            return 0;
        } catch (const Error& e) {
            if (ctx) ctx->mark(false, e.what());
            err << "error: " << e.what() << "\n";
            return static_cast<int>(exit_code_for(e));
        } catch (const fs::filesystem_error& e) {
            if (ctx) ctx->mark(false, e.what());
            err << "error: " << e.what() << "\n";
            return static_cast<int>(ExitCode::io);
        } catch (const std::exception& e) {
            if (ctx) ctx->mark(false, e.what());
            err << "internal error: " << e.what() << "\n";
            return static_cast<int>(ExitCode::internal);
        }
    }
    return static_cast<int>(ExitCode::internal);
}

int run_cli(int argc, const char* const* argv) {
    std::vector<std::string> args(argv, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace intentkit
