#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "epstory/classify.hpp"
#include "epstory/error.hpp"
#include "epstory/telemetry.hpp"

namespace epstory {

struct LabeledScore {
    double score = 0.0;
    bool positive = false;
};

struct RocPoint {
    double threshold;  // classify positive when score >= threshold
    double fpr;
    double tpr;
};

/// Points from threshold +inf down to the minimum score, one per distinct
/// score. Starts at (0,0) and ends at (1,1).
struct RocCurve {
    std::vector<RocPoint> points;
};

namespace detail {

struct Counts {
    std::int64_t pos = 0;
    std::int64_t neg = 0;
};

inline Counts count_classes(std::span<const LabeledScore> samples) {
    Counts c;
    for (const auto& s : samples) (s.positive ? c.pos : c.neg) += 1;
    if (c.pos == 0 || c.neg == 0) throw DataError("evaluation needs at least one positive and one negative sample");
    return c;
}

inline std::vector<LabeledScore> sorted_desc(std::span<const LabeledScore> samples) {
    std::vector<LabeledScore> v(samples.begin(), samples.end());
    for (const auto& s : v)
        if (std::isnan(s.score)) throw DataError("score is NaN");
    std::sort(v.begin(), v.end(), [](const LabeledScore& a, const LabeledScore& b) { return a.score > b.score; });
    return v;
}

/// Calls fn(threshold, tp, fp) after each group of tied scores.
template <typename Fn>
void for_each_threshold(const std::vector<LabeledScore>& sorted, Fn&& fn) {
    std::int64_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        const double t = sorted[i].score;
        while (i < sorted.size() && sorted[i].score == t) {
            (sorted[i].positive ? tp : fp) += 1;
            ++i;
        }
        if (!fn(t, tp, fp)) return;
    }
}

}  // namespace detail

inline RocCurve roc(std::span<const LabeledScore> samples) {
    const auto c = detail::count_classes(samples);
    RocCurve curve;
    curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    detail::for_each_threshold(detail::sorted_desc(samples), [&](double t, std::int64_t tp, std::int64_t fp) {
        curve.points.push_back({t, static_cast<double>(fp) / static_cast<double>(c.neg),
                                static_cast<double>(tp) / static_cast<double>(c.pos)});
        return true;
    });
    return curve;
}

/// Trapezoidal area under a curve.
inline double auc(const RocCurve& curve) {
    double area = 0.0;
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const auto& a = curve.points[i - 1];
        const auto& b = curve.points[i];
        area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
    }
    return area;
}

/// Trapezoidal AUC computed in integer counts, so it equals the Mann-Whitney
/// statistic (ties count one half) up to a single final division.
inline double auc(std::span<const LabeledScore> samples) {
    const auto c = detail::count_classes(samples);
    std::int64_t twice_area = 0;
    std::int64_t prev_tp = 0, prev_fp = 0;
    detail::for_each_threshold(detail::sorted_desc(samples), [&](double, std::int64_t tp, std::int64_t fp) {
        twice_area += (fp - prev_fp) * (tp + prev_tp);
        prev_tp = tp;
        prev_fp = fp;
        return true;
    });
    return static_cast<double>(twice_area) / (2.0 * static_cast<double>(c.pos) * static_cast<double>(c.neg));
}

struct TprAtFpr {
    double tpr = 0.0;
    double threshold = std::numeric_limits<double>::infinity();
};

/// Largest TPR over thresholds whose FPR does not exceed `fpr_budget`
/// (step-function ROC, no interpolation); `threshold` is the smallest
/// threshold attaining it.
inline TprAtFpr tpr_at_fpr(std::span<const LabeledScore> samples, double fpr_budget) {
    if (!(fpr_budget >= 0.0 && fpr_budget < 1.0)) throw ArgumentError("fpr budget must be in [0, 1)");
    const auto c = detail::count_classes(samples);
    TprAtFpr best;
    detail::for_each_threshold(detail::sorted_desc(samples), [&](double t, std::int64_t tp, std::int64_t fp) {
        if (static_cast<double>(fp) / static_cast<double>(c.neg) > fpr_budget) return false;
        const double tpr = static_cast<double>(tp) / static_cast<double>(c.pos);
        if (tpr >= best.tpr) best = {tpr, t};
        return true;
    });
    return best;
}

/// Arithmetic mean of the members' scores.
inline double ensemble_average(const std::map<std::string, double>& scores, std::span<const std::string> members) {
    if (members.empty()) throw ArgumentError("ensemble needs at least one member");
    double total = 0.0;
    for (const auto& m : members) {
        auto it = scores.find(m);
        if (it == scores.end()) throw DataError("ensemble member '" + m + "' has no score");
        total += it->second;
    }
    return total / static_cast<double>(members.size());
}

// ---------------------------------------------------------------------------
// Time-based split

struct ClassBalance {
    std::size_t benign = 0;
    std::size_t hok = 0;
    std::size_t unlabeled = 0;

    void add(Label l) { (l == Label::Benign ? benign : l == Label::Hok ? hok : unlabeled) += 1; }
    std::size_t total() const noexcept { return benign + hok + unlabeled; }
    bool operator==(const ClassBalance&) const = default;
};

struct SplitResult {
    Timestamp boundary;
    std::vector<std::string> train;
    std::vector<std::string> test;
    ClassBalance train_balance;
    ClassBalance test_balance;
    std::vector<std::string> warnings;
};

/// Train = samples whose timeframe ends before `boundary`; test = the rest.
/// Input order is kept on each side.
inline SplitResult time_split(std::span<const SampleMeta> samples, Timestamp boundary) {
    SplitResult r;
    r.boundary = boundary;
    for (const auto& m : samples) {
        if (m.timeframe_end < boundary) {
            r.train.push_back(sample_id(m));
            r.train_balance.add(m.label);
        } else {
            r.test.push_back(sample_id(m));
            r.test_balance.add(m.label);
        }
    }
    if (r.train.empty()) r.warnings.push_back("training side of the split is empty");
    if (r.test.empty()) r.warnings.push_back("test side of the split is empty");
    return r;
}

inline ordered_json to_json(const ClassBalance& b) {
    return ordered_json{{"benign", b.benign}, {"hok", b.hok}, {"unlabeled", b.unlabeled}};
}

inline ClassBalance balance_from_json(const ordered_json& j) {
    return {j.at("benign").get<std::size_t>(), j.at("hok").get<std::size_t>(), j.value("unlabeled", std::size_t{0})};
}

inline ordered_json to_json(const SplitResult& r) {
    ordered_json j;
    j["boundary"] = format_rfc3339(r.boundary);
    j["train_balance"] = to_json(r.train_balance);
    j["test_balance"] = to_json(r.test_balance);
    j["warnings"] = r.warnings;
    j["train"] = r.train;
    j["test"] = r.test;
    return j;
}

inline SplitResult split_from_json(const ordered_json& j) {
    try {
        SplitResult r;
        auto b = parse_rfc3339(j.at("boundary").get<std::string>());
        if (!b) throw DataError("split boundary is not an RFC 3339 timestamp");
        r.boundary = *b;
        r.train = j.at("train").get<std::vector<std::string>>();
        r.test = j.at("test").get<std::vector<std::string>>();
        r.train_balance = balance_from_json(j.at("train_balance"));
        r.test_balance = balance_from_json(j.at("test_balance"));
        r.warnings = j.at("warnings").get<std::vector<std::string>>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("split file: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Evaluation report

struct ModelMetrics {
    double auc = 0.0;
    std::map<double, TprAtFpr> tpr_at_fpr;
};

struct EvalReport {
    std::vector<std::string> models;  // report order
    std::map<std::string, ModelMetrics> metrics;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    std::size_t n_excluded = 0;
    std::optional<Timestamp> split_boundary;
};

inline std::vector<LabeledScore> labeled_scores(std::span<const ScoredSample> samples, const std::string& model) {
    std::vector<LabeledScore> out;
    for (const auto& s : samples) {
        if (s.label == Label::Unlabeled) continue;
        auto it = s.scores.find(model);
        if (it == s.scores.end()) throw DataError("sample " + s.sample_id + " has no score for model '" + model + "'");
        out.push_back({it->second, s.label == Label::Hok});
    }
    return out;
}

/// Unlabeled samples are excluded and counted in `n_excluded`.
inline EvalReport evaluate(std::span<const ScoredSample> samples, std::span<const std::string> models,
                           std::span<const double> budgets, std::optional<Timestamp> split_boundary = std::nullopt) {
    EvalReport report;
    report.split_boundary = split_boundary;
    for (const auto& s : samples) {
        if (s.label == Label::Hok) ++report.n_pos;
        else if (s.label == Label::Benign) ++report.n_neg;
        else ++report.n_excluded;
    }
    for (const auto& model : models) {
        auto scores = labeled_scores(samples, model);
        ModelMetrics m;
        m.auc = auc(scores);
        for (double b : budgets) m.tpr_at_fpr[b] = tpr_at_fpr(scores, b);
        report.models.push_back(model);
        report.metrics[model] = std::move(m);
    }
    return report;
}

namespace detail {

inline std::string shortest(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

inline ordered_json threshold_json(double t) {
    return std::isfinite(t) ? ordered_json(t) : ordered_json(nullptr);
}

}  // namespace detail

/// `{models: {id: {auc, tpr_at_fpr: {budget: {tpr, threshold}}}}, n_pos, n_neg, split_boundary}`.
/// An infinite threshold (nothing flagged) is written as null.
inline ordered_json to_json(const EvalReport& r) {
    ordered_json j;
    ordered_json models = ordered_json::object();
    for (const auto& id : r.models) {
        const auto& m = r.metrics.at(id);
        ordered_json tprs = ordered_json::object();
        for (const auto& [b, v] : m.tpr_at_fpr)
            tprs[detail::shortest(b)] = {{"tpr", v.tpr}, {"threshold", detail::threshold_json(v.threshold)}};
        models[id] = {{"auc", m.auc}, {"tpr_at_fpr", std::move(tprs)}};
    }
    j["models"] = std::move(models);
    j["n_pos"] = r.n_pos;
    j["n_neg"] = r.n_neg;
    j["n_excluded"] = r.n_excluded;
    j["split_boundary"] = r.split_boundary ? ordered_json(format_rfc3339(*r.split_boundary)) : ordered_json(nullptr);
    return j;
}

/// Plain-text table with one row per model: AUC and TPR at each FPR budget.
inline std::string format_report_table(const EvalReport& r) {
    auto pad = [](std::string s, std::size_t w) {
        if (s.size() < w) s.append(w - s.size(), ' ');
        return s;
    };
    auto fixed3 = [](double v) {
        char buf[32];
        auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 3);
        return std::string(buf, p);
    };
    std::size_t name_w = 5;
    for (const auto& m : r.models) name_w = std::max(name_w, m.size());
    std::vector<double> budgets;
    if (!r.models.empty())
        for (const auto& [b, v] : r.metrics.at(r.models.front()).tpr_at_fpr) budgets.push_back(b);

    std::string out = pad("Model", name_w) + " | AUC  ";
    for (double b : budgets) out += " | TPR at FPR " + detail::shortest(b * 100) + "%";
    out += "\n";
    out += std::string(name_w, '-') + "-|------";
    for (double b : budgets) out += "-|-" + std::string(("TPR at FPR " + detail::shortest(b * 100) + "%").size(), '-');
    out += "\n";
    for (const auto& id : r.models) {
        const auto& m = r.metrics.at(id);
        out += pad(id, name_w) + " | " + fixed3(m.auc);
        for (double b : budgets) {
            std::string head = "TPR at FPR " + detail::shortest(b * 100) + "%";
            out += " | " + pad(fixed3(m.tpr_at_fpr.at(b).tpr), head.size());
        }
        out += "\n";
    }
    out += "positives: " + std::to_string(r.n_pos) + ", negatives: " + std::to_string(r.n_neg) + "\n";
    return out;
}

}  // namespace epstory
