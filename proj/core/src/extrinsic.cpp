#include "intentkit/extrinsic.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <boost/math/distributions/students_t.hpp>
#include <ceres/gradient_problem.h>
#include <ceres/gradient_problem_solver.h>

#include "intentkit/preprocess.hpp"
#include "intentkit/rng.hpp"
#include "intentkit/synth_gen.hpp"

namespace intentkit {

using nlohmann::json;

std::string_view to_string(Approach a) {
    switch (a) {
        case Approach::baseline: return "baseline";
        case Approach::approach1: return "approach1";
        case Approach::approach2: return "approach2";
    }
    return "baseline";
}

Approach approach_from_string(std::string_view s) {
    if (s == "baseline") return Approach::baseline;
    if (s == "approach1") return Approach::approach1;
    if (s == "approach2") return Approach::approach2;
    throw ParseError(ParseError::Kind::bad_enum, "unknown approach: " + std::string(s));
}

std::string Assembly::id() const {
    if (approach == Approach::baseline || cell.empty()) return std::string(to_string(approach));
    return cell + "." + std::string(to_string(approach));
}

std::size_t Assembly::synthetic_rows() const { return static_cast<std::size_t>(std::count(synthetic.begin(), synthetic.end(), true)); }

SyntheticPool pool_from_labeled(const LabeledSet& rows) {
    SyntheticPool pool;
    for (const auto& r : rows) pool[r.label].push_back(r.text);
    return pool;
}

// ---- assembly ----------------------------------------------------------------------------------

namespace {

const std::vector<std::string>& pool_for(const SyntheticPool& synth, const std::string& label, std::size_t need) {
    auto it = synth.find(label);
    if (it == synth.end()) throw MissingLabelInSynth("no synthetic utterances for label '" + label + "'");
    if (it->second.size() < need)
        throw InsufficientSynthetic("label '" + label + "' needs " + std::to_string(need) + " synthetic utterances, has " +
                                    std::to_string(it->second.size()));
    return it->second;
}

void check_fraction(double f) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("replace_fraction must be in (0, 1]");
}

}  // namespace

Assembly assemble(const LabeledSet& train, const SyntheticPool& synth, const AssemblyPlan& plan, const std::string& cell) {
    Assembly out;
    out.approach = plan.approach;
    out.cell = plan.approach == Approach::baseline ? "" : cell;
    if (plan.approach == Approach::baseline) {
        out.rows = train;
        out.synthetic.assign(train.size(), false);
        return out;
    }
    check_fraction(plan.replace_fraction);

    LabeledSet real;
    for (const auto& r : train) {
        if (plan.excluded.count(r.text))
            ++out.excluded_removed;
        else
            real.push_back(r);
    }
    std::map<std::string, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < real.size(); ++i) by_label[real[i].label].push_back(i);
    if (by_label.empty()) throw DegenerateData("no real training rows left to assemble");

    if (plan.approach == Approach::approach1) {
        const auto target = static_cast<std::size_t>(std::llround(plan.replace_fraction * static_cast<double>(real.size())));
        // largest-remainder allotment; ties go to the earlier label
        std::vector<std::pair<std::string, std::size_t>> quota;
        std::vector<std::pair<double, std::size_t>> remainders;
        std::size_t allotted = 0;
        for (const auto& [label, idx] : by_label) {
            const double exact = plan.replace_fraction * static_cast<double>(idx.size());
            const auto base = static_cast<std::size_t>(std::floor(exact));
            remainders.emplace_back(exact - static_cast<double>(base), quota.size());
            quota.emplace_back(label, base);
            allotted += base;
        }
        std::stable_sort(remainders.begin(), remainders.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t i = 0; allotted < target && i < remainders.size(); ++i, ++allotted) ++quota[remainders[i].second].second;

        out.rows = real;
        out.synthetic.assign(real.size(), false);
        for (const auto& [label, count] : quota) {
            if (count == 0) continue;
            const auto& pool = pool_for(synth, label, count);
            const auto& positions = by_label.at(label);
            Rng rng(derive_seed(plan.seed, "assemble.approach1." + label));
            const auto rows = rng.sample_indices(positions.size(), count);
            const auto picks = rng.sample_indices(pool.size(), count);
            for (std::size_t k = 0; k < count; ++k) {
                out.rows[positions[rows[k]]].text = pool[picks[k]];
                out.synthetic[positions[rows[k]]] = true;
            }
        }
        return out;
    }

    std::vector<std::string> labels;
    for (const auto& [label, _] : by_label) labels.push_back(label);
    const auto k = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(plan.replace_fraction * static_cast<double>(labels.size()))));
    Rng rng(derive_seed(plan.seed, "assemble.approach2"));
    for (auto i : rng.sample_indices(labels.size(), k)) out.replaced_labels.push_back(labels[i]);
    std::sort(out.replaced_labels.begin(), out.replaced_labels.end());
    const std::set<std::string> chosen(out.replaced_labels.begin(), out.replaced_labels.end());

    for (const auto& r : real)
        if (!chosen.count(r.label)) {
            out.rows.push_back(r);
            out.synthetic.push_back(false);
        }
    for (const auto& label : out.replaced_labels) {
        const auto& pool = pool_for(synth, label, plan.per_label_cap);
        Rng pick(derive_seed(plan.seed, "assemble.approach2." + label));
        for (auto i : pick.sample_indices(pool.size(), plan.per_label_cap)) {
            out.rows.push_back({pool[i], label});
            out.synthetic.push_back(true);
        }
    }
    return out;
}

// ---- features and classifier -------------------------------------------------------------------

json ClassifierConfig::to_json() const {
    return {{"features", bigrams ? "tfidf-unigram-bigram-l2" : "tfidf-unigram-l2"},
            {"l2", l2},
            {"class_weighting", class_weighting ? "inverse_frequency" : "none"},
            {"max_iterations", max_iterations},
            {"function_tolerance", function_tolerance},
            {"gradient_tolerance", gradient_tolerance},
            {"seed", seed}};
}

std::vector<std::string> TfidfVectorizer::features(const std::string& text) const {
    const auto toks = whitespace_tokens(normalize(text));
    std::vector<std::string> out(toks.begin(), toks.end());
    if (bigrams_)
        for (std::size_t i = 0; i + 1 < toks.size(); ++i) out.push_back(toks[i] + " " + toks[i + 1]);
    return out;
}

TfidfVectorizer TfidfVectorizer::fit(const std::vector<std::string>& texts, bool bigrams) {
    TfidfVectorizer v;
    v.bigrams_ = bigrams;
    std::map<std::string, std::size_t> df;
    for (const auto& t : texts) {
        auto f = v.features(t);
        for (const auto& x : std::set<std::string>(f.begin(), f.end())) ++df[x];
    }
    const double n = static_cast<double>(texts.size());
    for (const auto& [feature, count] : df) {
        v.index_.emplace(feature, v.idf_.size());
        v.idf_.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
    }
    return v;
}

TfidfVectorizer::SparseRow TfidfVectorizer::transform(const std::string& text) const {
    std::map<std::size_t, double> tf;
    for (const auto& f : features(text))
        if (auto it = index_.find(f); it != index_.end()) tf[it->second] += 1.0;
    SparseRow row;
    double norm = 0.0;
    for (const auto& [i, c] : tf) {
        row.emplace_back(i, c * idf_[i]);
        norm += row.back().second * row.back().second;
    }
    if (norm > 0.0)
        for (auto& [_, v] : row) v /= std::sqrt(norm);
    return row;
}

namespace {

class SoftmaxLoss : public ceres::FirstOrderFunction {
  public:
    SoftmaxLoss(const std::vector<TfidfVectorizer::SparseRow>& x, const std::vector<std::size_t>& y,
                const std::vector<double>& class_weight, std::size_t classes, std::size_t dim, double l2)
        : x_(x), y_(y), w_(class_weight), k_(classes), d_(dim), l2_(l2) {
        for (auto c : y_) total_weight_ += w_[c];
    }

    bool Evaluate(const double* params, double* cost, double* gradient) const override {
        const std::size_t stride = d_ + 1;
        double loss = 0.0;
        if (gradient) std::fill(gradient, gradient + NumParameters(), 0.0);
        std::vector<double> z(k_);
        for (std::size_t i = 0; i < x_.size(); ++i) {
            for (std::size_t c = 0; c < k_; ++c) {
                const double* wc = params + c * stride;
                double s = wc[d_];
                for (const auto& [j, v] : x_[i]) s += wc[j] * v;
                z[c] = s;
            }
            const double zmax = *std::max_element(z.begin(), z.end());
            double sum = 0.0;
            for (auto& v : z) sum += std::exp(v - zmax);
            const double log_norm = zmax + std::log(sum);
            const double wi = w_[y_[i]] / total_weight_;
            loss += wi * (log_norm - z[y_[i]]);
            if (!gradient) continue;
            for (std::size_t c = 0; c < k_; ++c) {
                const double g = wi * (std::exp(z[c] - log_norm) - (c == y_[i] ? 1.0 : 0.0));
                double* gc = gradient + c * stride;
                for (const auto& [j, v] : x_[i]) gc[j] += g * v;
                gc[d_] += g;
            }
        }
        for (std::size_t c = 0; c < k_; ++c)
            for (std::size_t j = 0; j < d_; ++j) {
                const double p = params[c * stride + j];
                loss += 0.5 * l2_ * p * p;
                if (gradient) gradient[c * stride + j] += l2_ * p;
            }
        *cost = loss;
        return true;
    }

    int NumParameters() const override { return static_cast<int>(k_ * (d_ + 1)); }

  private:
    const std::vector<TfidfVectorizer::SparseRow>& x_;
    const std::vector<std::size_t>& y_;
    const std::vector<double>& w_;
    std::size_t k_, d_;
    double l2_;
    double total_weight_ = 0.0;
};

}  // namespace

Classifier Classifier::train(const LabeledSet& data, const ClassifierConfig& cfg) {
    std::map<std::string, std::size_t> counts;
    for (const auto& r : data) ++counts[r.label];
    if (counts.size() < 2) throw DegenerateData("classifier needs at least two labels, got " + std::to_string(counts.size()));
    for (const auto& [label, n] : counts)
        if (n < 2) throw DegenerateData("label '" + label + "' has fewer than two training rows");

    Classifier m;
    std::map<std::string, std::size_t> label_index;
    for (const auto& [label, _] : counts) {
        label_index.emplace(label, m.labels_.size());
        m.labels_.push_back(label);
    }
    std::vector<std::string> texts;
    for (const auto& r : data) texts.push_back(r.text);
    m.vectorizer_ = TfidfVectorizer::fit(texts, cfg.bigrams);

    std::vector<TfidfVectorizer::SparseRow> x;
    std::vector<std::size_t> y;
    for (const auto& r : data) {
        x.push_back(m.vectorizer_.transform(r.text));
        y.push_back(label_index.at(r.label));
    }
    const std::size_t k = m.labels_.size();
    std::vector<double> class_weight(k, 1.0);
    if (cfg.class_weighting)
        for (std::size_t c = 0; c < k; ++c)
            class_weight[c] = static_cast<double>(data.size()) / (static_cast<double>(k) * counts.at(m.labels_[c]));

    const std::size_t dim = m.vectorizer_.dimension();
    m.weights_.assign(k * (dim + 1), 0.0);
    ceres::GradientProblem problem(new SoftmaxLoss(x, y, class_weight, k, dim, cfg.l2));
    ceres::GradientProblemSolver::Options options;
    options.line_search_direction_type = ceres::LBFGS;
    options.max_num_iterations = cfg.max_iterations;
    options.function_tolerance = cfg.function_tolerance;
    options.gradient_tolerance = cfg.gradient_tolerance;
    options.logging_type = ceres::SILENT;
    options.minimizer_progress_to_stdout = false;
    ceres::GradientProblemSolver::Summary summary;
    ceres::Solve(options, problem, m.weights_.data(), &summary);
    m.summary_.iterations = static_cast<int>(summary.iterations.size());
    m.summary_.converged = summary.termination_type == ceres::CONVERGENCE;
    m.summary_.final_loss = summary.final_cost;
    return m;
}

std::string Classifier::predict(const std::string& text) const {
    const auto row = vectorizer_.transform(text);
    const std::size_t stride = vectorizer_.dimension() + 1;
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < labels_.size(); ++c) {
        const double* wc = weights_.data() + c * stride;
        double s = wc[stride - 1];
        for (const auto& [j, v] : row) s += wc[j] * v;
        if (s > best_score) {
            best_score = s;
            best = c;
        }
    }
    return labels_[best];
}

std::vector<std::string> Classifier::predict(const std::vector<std::string>& texts) const {
    std::vector<std::string> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(predict(t));
    return out;
}

// ---- metrics -----------------------------------------------------------------------------------

F1Result macro_f1(const std::vector<std::string>& predictions, const std::vector<std::string>& golds) {
    if (predictions.size() != golds.size())
        throw LengthMismatch(std::to_string(predictions.size()) + " predictions for " + std::to_string(golds.size()) +
                             " gold labels");
    if (golds.empty()) throw LengthMismatch("no gold labels");
    std::map<std::string, std::array<std::size_t, 3>> c;  // tp, fp, fn
    for (const auto& g : golds) c[g];
    for (std::size_t i = 0; i < golds.size(); ++i) {
        if (predictions[i] == golds[i]) {
            ++c[golds[i]][0];
        } else {
            ++c[golds[i]][2];
            if (auto it = c.find(predictions[i]); it != c.end()) ++it->second[1];
        }
    }
    F1Result out;
    for (const auto& [label, k] : c) {
        const auto [tp, fp, fn] = k;
        if (tp + fp == 0) out.undefined.push_back(label);
        const double p = tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0;
        const double r = tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0;
        const double f1 = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
        out.per_class[label] = f1;
        out.macro += f1;
    }
    out.macro /= static_cast<double>(out.per_class.size());
    return out;
}

TTestResult welch_ttest(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2)
        throw InsufficientSamples("t-test needs at least two scores per sample (" + std::to_string(a.size()) + ", " +
                                  std::to_string(b.size()) + ")");
    auto moments = [](const std::vector<double>& xs) {
        double m = 0.0;
        for (double x : xs) m += x;
        m /= static_cast<double>(xs.size());
        double v = 0.0;
        for (double x : xs) v += (x - m) * (x - m);
        return std::pair{m, v / static_cast<double>(xs.size() - 1)};
    };
    const auto [ma, va] = moments(a);
    const auto [mb, vb] = moments(b);
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    TTestResult r;
    r.n_a = a.size();
    r.n_b = b.size();
    const double sa = va / na, sb = vb / nb;
    if (sa + sb == 0.0) {
        r.degenerate = true;
        r.df = na + nb - 2;
        if (ma == mb) {
            r.t = 0.0;
            r.p = 1.0;
        } else {
            r.t = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
            r.p = 0.0;
        }
        return r;
    }
    r.t = (ma - mb) / std::sqrt(sa + sb);
    r.df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1) + sb * sb / (nb - 1));
    boost::math::students_t dist(r.df);
    r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t))));
    return r;
}

json TTestResult::to_json() const {
    auto finite_or_string = [](double v) -> json {
        if (std::isfinite(v)) return v;
        return v > 0 ? "inf" : "-inf";
    };
    return {{"comparison", comparison}, {"t", finite_or_string(t)}, {"df", df},     {"p", p},
            {"degenerate", degenerate}, {"n_a", n_a},               {"n_b", n_b}};
}

// ---- report ------------------------------------------------------------------------------------

json ExtrinsicReport::to_json() const {
    json tt = json::array();
    for (const auto& t : ttests) tt.push_back(t.to_json());
    json training_json = nullptr;
    if (training)
        training_json = {{"iterations", training->iterations},
                         {"converged", training->converged},
                         {"final_loss", training->final_loss}};
    return {{"schema_version", kReportSchemaVersion},
            {"approach", approach},
            {"cell", cell.empty() ? json(nullptr) : json(cell)},
            {"classifier", classifier},
            {"macro_f1", macro_f1},
            {"per_class_f1", per_class_f1},
            {"undefined_classes", undefined_classes},
            {"config_digest", config_digest},
            {"train_size", train_size},
            {"synthetic_rows", synthetic_rows},
            {"test_size", test_size},
            {"replaced_labels", replaced_labels},
            {"training", training_json},
            {"ttests", tt}};
}

ExtrinsicReport ExtrinsicReport::from_json(const json& j) {
    if (auto problems = validate_report_json(j); !problems.empty())
        throw ParseError(ParseError::Kind::malformed, "extrinsic report: " + problems.front());
    ExtrinsicReport r;
    r.approach = j.at("approach").get<std::string>();
    if (!j.at("cell").is_null()) r.cell = j.at("cell").get<std::string>();
    r.classifier = j.at("classifier").get<std::string>();
    r.macro_f1 = j.at("macro_f1").get<double>();
    r.per_class_f1 = j.at("per_class_f1").get<std::map<std::string, double>>();
    r.undefined_classes = j.at("undefined_classes").get<std::vector<std::string>>();
    r.config_digest = j.at("config_digest").get<std::string>();
    r.train_size = j.at("train_size").get<std::size_t>();
    r.synthetic_rows = j.at("synthetic_rows").get<std::size_t>();
    r.test_size = j.at("test_size").get<std::size_t>();
    r.replaced_labels = j.at("replaced_labels").get<std::vector<std::string>>();
    if (!j.at("training").is_null()) {
        const auto& t = j.at("training");
        r.training = TrainingSummary{t.at("iterations").get<int>(), t.at("converged").get<bool>(),
                                     t.at("final_loss").get<double>()};
    }
    for (const auto& t : j.at("ttests")) {
        TTestResult x;
        x.comparison = t.at("comparison").get<std::string>();
        const auto& tv = t.at("t");
        x.t = tv.is_string() ? (tv.get<std::string>() == "inf" ? 1.0 : -1.0) * std::numeric_limits<double>::infinity()
                             : tv.get<double>();
        x.df = t.at("df").get<double>();
        x.p = t.at("p").get<double>();
        x.degenerate = t.at("degenerate").get<bool>();
        x.n_a = t.at("n_a").get<std::size_t>();
        x.n_b = t.at("n_b").get<std::size_t>();
        r.ttests.push_back(std::move(x));
    }
    return r;
}

std::vector<std::string> validate_report_json(const json& j) {
    std::vector<std::string> problems;
    if (!j.is_object()) return {"report must be an object"};
    auto need = [&](const char* key, auto pred, const char* what) {
        auto it = j.find(key);
        if (it == j.end())
            problems.push_back(std::string("missing ") + key);
        else if (!pred(*it))
            problems.push_back(std::string(key) + " must be " + what);
    };
    auto is_count = [](const json& v) { return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0); };
    auto is_unit = [](const json& v) { return v.is_number() && v.get<double>() >= 0.0 && v.get<double>() <= 1.0; };
    auto is_strings = [](const json& v) {
        return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& s) { return s.is_string(); });
    };
    need("schema_version", [](const json& v) { return v == kReportSchemaVersion; }, "1");
    need("approach", [](const json& v) {
        return v.is_string() && (v == "baseline" || v == "approach1" || v == "approach2"); }, "baseline, approach1 or approach2");
    need("cell", [](const json& v) { return v.is_null() || v.is_string(); }, "a string or null");
    need("classifier", [](const json& v) { return v.is_string(); }, "a string");
    need("macro_f1", is_unit, "a number in [0, 1]");
    need("per_class_f1", [&](const json& v) {
        return v.is_object() && !v.empty() && std::all_of(v.begin(), v.end(), is_unit); }, "a non-empty map of numbers in [0, 1]");
    need("undefined_classes", is_strings, "a list of strings");
    need("config_digest", [](const json& v) { return v.is_string(); }, "a string");
    need("train_size", is_count, "a non-negative integer");
    need("synthetic_rows", is_count, "a non-negative integer");
    need("test_size", is_count, "a non-negative integer");
    need("replaced_labels", is_strings, "a list of strings");
    need("training", [&](const json& v) {
        return v.is_null() || (v.is_object() && v.contains("iterations") && v.contains("converged") && v.contains("final_loss"));
    }, "null or {iterations, converged, final_loss}");
    need("ttests", [](const json& v) { return v.is_array(); }, "a list");
    if (problems.empty()) {
        double sum = 0.0;
        for (const auto& v : j.at("per_class_f1")) sum += v.get<double>();
        if (std::fabs(sum / j.at("per_class_f1").size() - j.at("macro_f1").get<double>()) > 1e-9)
            problems.push_back("macro_f1 differs from the mean of per_class_f1");
    }
    return problems;
}

// ---- run ---------------------------------------------------------------------------------------

namespace {

std::string config_digest(const ExtrinsicConfig& cfg, const AssemblyPlan* plan) {
    json j = {{"classifier", cfg.classifier.to_json()},
              {"replace_fraction", cfg.replace_fraction},
              {"per_label_cap", cfg.per_label_cap}};
    if (plan) j["assembly"] = {{"approach", to_string(plan->approach)}, {"seed", plan->seed}};
    return to_hex(fnv1a64(j.dump()));
}

ExtrinsicReport evaluate_assembly(const Assembly& a, const LabeledSet& test, const ExtrinsicConfig& cfg,
                                  const AssemblyPlan* plan) {
    auto model = Classifier::train(a.rows, cfg.classifier);
    std::vector<std::string> texts, golds;
    for (const auto& r : test) {
        texts.push_back(r.text);
        golds.push_back(r.label);
    }
    const auto f1 = macro_f1(model.predict(texts), golds);
    ExtrinsicReport r;
    r.approach = std::string(to_string(a.approach));
    r.cell = a.cell;
    r.macro_f1 = f1.macro;
    r.per_class_f1 = f1.per_class;
    r.undefined_classes = f1.undefined;
    r.config_digest = config_digest(cfg, plan);
    r.train_size = a.rows.size();
    r.synthetic_rows = a.synthetic_rows();
    r.test_size = test.size();
    r.replaced_labels = a.replaced_labels;
    r.training = model.summary();
    return r;
}

std::string row_name(const std::string& cell) {
    try {
        const auto c = Cell::parse(cell);
        return std::string(c.in_class_shots ? "with" : "without") + " in-class, " + std::string(to_string(c.source)) +
               " descriptions";
    } catch (const ConfigError&) {
        return cell;
    }
}

}  // namespace

std::vector<Assembly> build_assemblies(const LabeledSet& train, const std::map<std::string, SyntheticPool>& cells,
                                       const std::set<std::string>& excluded, const ExtrinsicConfig& cfg,
                                       std::vector<std::optional<AssemblyPlan>>* plans) {
    std::vector<Assembly> out;
    out.push_back(assemble(train, {}, AssemblyPlan{}));
    if (plans) plans->emplace_back();
    for (const auto& [cell, pool] : cells)
        for (auto approach : {Approach::approach1, Approach::approach2}) {
            AssemblyPlan plan;
            plan.approach = approach;
            plan.replace_fraction = cfg.replace_fraction;
            plan.per_label_cap = cfg.per_label_cap;
            plan.seed = derive_seed(cfg.seed, "assemble." + cell);
            plan.excluded = excluded;
            out.push_back(assemble(train, pool, plan, cell));
            if (plans) plans->push_back(plan);
        }
    return out;
}

ExtrinsicRun run_extrinsic(const LabeledSet& train, const LabeledSet& test,
                           const std::map<std::string, SyntheticPool>& cells, const std::set<std::string>& excluded,
                           const ExtrinsicConfig& cfg) {
    if (test.empty()) throw DataError("empty_test", "test set is empty");
    std::unordered_set<std::string> train_texts;
    for (const auto& r : train) train_texts.insert(normalize(r.text));
    std::size_t overlap = 0;
    for (const auto& r : test) overlap += train_texts.count(normalize(r.text));
    if (overlap) throw DataError("train_test_overlap", std::to_string(overlap) + " test utterances also occur in train");

    ExtrinsicRun run;
    std::vector<std::optional<AssemblyPlan>> plans;
    run.assemblies = build_assemblies(train, cells, excluded, cfg, &plans);

    std::vector<ExtrinsicReport> reports(run.assemblies.size());
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    auto worker = [&] {
        for (std::size_t i; (i = next++) < run.assemblies.size();) {
            try {
                reports[i] = evaluate_assembly(run.assemblies[i], test, cfg, plans[i] ? &*plans[i] : nullptr);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    const unsigned threads = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(reports.size())));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);

    run.baseline = reports[0];
    for (std::size_t i = 1; i < reports.size(); ++i) run.cells[reports[i].cell][reports[i].approach] = reports[i];

    auto scores = [](const ExtrinsicReport& r, const std::vector<std::string>* only) {
        std::vector<double> out;
        for (const auto& [label, f1] : r.per_class_f1)
            if (!only || std::find(only->begin(), only->end(), label) != only->end()) out.push_back(f1);
        return out;
    };
    for (auto& [cell, by_approach] : run.cells) {
        auto it = by_approach.find("approach2");
        if (it == by_approach.end()) continue;
        auto& a2 = it->second;
        for (const bool replaced_only : {false, true}) {
            const auto* only = replaced_only ? &a2.replaced_labels : nullptr;
            try {
                auto t = welch_ttest(scores(run.baseline, only), scores(a2, only));
                t.comparison = replaced_only ? "baseline_vs_approach2_replaced_classes" : "baseline_vs_approach2_all_classes";
                a2.ttests.push_back(std::move(t));
            } catch (const InsufficientSamples& e) {
                run.annotations.push_back(cell + ": " + (replaced_only ? "replaced-class" : "all-class") +
                                          " t-test skipped: " + e.what());
            }
        }
    }
    for (const auto& a : run.assemblies)
        if (a.excluded_removed)
            run.annotations.push_back(a.id() + ": " + std::to_string(a.excluded_removed) +
                                      " few-shot rows removed from the real portion");
    return run;
}

json ExtrinsicRun::to_json() const {
    json c = json::object();
    for (const auto& [cell, by_approach] : cells)
        for (const auto& [approach, r] : by_approach) c[cell][approach] = r.to_json();
    return {{"schema_version", kReportSchemaVersion}, {"baseline", baseline.to_json()}, {"cells", c}, {"annotations", annotations}};
}

std::string ExtrinsicRun::render_table() const {
    auto fmt = [](double v) {
        std::ostringstream os;
        os << std::fixed << std::setprecision(3) << v;
        return os.str();
    };
    std::vector<std::vector<std::string>> table = {{"Training Data", "Baseline", "Approach 1", "Approach 2"},
                                                   {"real (baseline)", fmt(baseline.macro_f1), "", ""}};
    for (const auto& [cell, by_approach] : cells) {
        auto get = [&](const char* a) {
            auto it = by_approach.find(a);
            return it == by_approach.end() ? std::string("n/a") : fmt(it->second.macro_f1);
        };
        table.push_back({row_name(cell), "", get("approach1"), get("approach2")});
    }
    std::vector<std::size_t> widths(4, 0);
    for (const auto& row : table)
        for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
    std::ostringstream os;
    for (std::size_t r = 0; r < table.size(); ++r) {
        for (std::size_t c = 0; c < 4; ++c) {
            os << (c ? " | " : "") << table[r][c];
            if (c + 1 < 4) os << std::string(widths[c] - table[r][c].size(), ' ');
        }
        os << "\n";
        if (r == 0) os << std::string(widths[0], '-') << "-+-" << std::string(widths[1], '-') << "-+-"
                       << std::string(widths[2], '-') << "-+-" << std::string(widths[3], '-') << "\n";
    }
    bool header = false;
    for (const auto& [cell, by_approach] : cells) {
        auto it = by_approach.find("approach2");
        if (it == by_approach.end()) continue;
        for (const auto& t : it->second.ttests) {
            if (!header) os << "\nWelch t-tests, per-class F1 (baseline vs approach 2):\n";
            header = true;
            os << "  " << cell << " " << t.comparison << ": t = " << std::setprecision(4) << t.t << ", df = " << t.df
               << ", p = " << t.p << (t.degenerate ? " (zero variance)" : "") << "\n";
        }
    }
    return os.str();
}

void export_datasets(const std::vector<Assembly>& assemblies, const LabeledSet& test, const std::string& dir) {
    json files = json::array();
    auto emit = [&](const std::string& name, const LabeledSet& rows, const std::string& split, const std::string& approach,
                    const std::string& cell, std::size_t synthetic) {
        std::string out;
        for (const auto& r : rows)
            out += json{{"text", r.text}, {"label", r.label}, {"split", split}, {"approach", approach}}.dump() + "\n";
        write_file(dir + "/" + name, out);
        files.push_back({{"file", name},
                         {"split", split},
                         {"approach", approach},
                         {"cell", cell.empty() ? json(nullptr) : json(cell)},
                         {"rows", rows.size()},
                         {"synthetic_rows", synthetic},
                         {"fnv1a64", to_hex(fnv1a64(out))}});
    };
    for (const auto& a : assemblies)
        emit(a.id() + ".jsonl", a.rows, "train", std::string(to_string(a.approach)), a.cell, a.synthetic_rows());
    emit("test.jsonl", test, "test", "none", "", 0);
    json manifest = {{"schema_version", 1}, {"record_fields", {"text", "label", "split", "approach"}}, {"files", files}};
    write_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

}  // namespace intentkit
