#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "epstory/error.hpp"
#include "epstory/hash.hpp"
#include "epstory/rng.hpp"
#include "epstory/telemetry.hpp"
#include "epstory/text.hpp"

namespace epstory {

/// Logistic function, kept strictly inside (0, 1) even where it would round to 0 or 1.
inline double sigmoid(double x) noexcept {
    constexpr double lo = std::numeric_limits<double>::denorm_min();
    const double hi = std::nextafter(1.0, 0.0);
    if (x >= 0) return std::min(hi, 1.0 / (1.0 + std::exp(-x)));
    double e = std::exp(x);
    return std::max(lo, e / (1.0 + e));
}

/// log(1 + e^x) without overflow.
inline double softplus(double x) noexcept { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

namespace detail {

inline void require_both_classes(std::span<const int> labels) {
    bool pos = false, neg = false;
    for (int y : labels) (y ? pos : neg) = true;
    if (!pos || !neg) throw DataError("training set needs at least one sample of each class");
}

inline std::vector<std::vector<std::size_t>> epoch_batches(Rng& rng, std::size_t n, std::size_t batch_size) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < n; i += batch_size)
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
    return batches;
}

}  // namespace detail

/// Fingerprint of a training set: ids and labels in order.
inline std::string fingerprint_samples(std::span<const std::string> ids, std::span<const int> labels) {
    std::uint64_t h = 0;
    for (std::size_t i = 0; i < ids.size(); ++i)
        h = stable_hash(h, ids[i] + (labels[i] ? ":1" : ":0"));
    return hex64(h);
}

// ===========================================================================
// Order-blind baseline: logistic regression over hashed bag-of-tokens.

struct SparseVector {
    std::vector<std::uint32_t> index;  // strictly increasing
    std::vector<double> value;

    bool operator==(const SparseVector&) const = default;
};

/// Hashed token counts of the whole text, damped to 1 + ln(count) and then
/// L2-normalized. Damping keeps rare tokens visible next to the structural
/// ones that repeat on every line. Any permutation of tokens or lines gives
/// the same vector.
inline SparseVector bag_of_tokens(std::string_view text, std::size_t dimension, std::uint64_t feature_seed) {
    std::map<std::uint32_t, double> counts;
    for_each_token(text, [&](std::string_view t) {
        counts[static_cast<std::uint32_t>(stable_hash(feature_seed, t) % dimension)] += 1.0;
    });
    SparseVector v;
    double sq = 0.0;
    for (auto& [i, c] : counts) {
        c = 1.0 + std::log(c);
        sq += c * c;
    }
    const double inv = sq > 0 ? 1.0 / std::sqrt(sq) : 0.0;
    for (const auto& [i, c] : counts) {
        v.index.push_back(i);
        v.value.push_back(c * inv);
    }
    return v;
}

inline SparseVector bag_of_tokens(std::span<const std::string> lines, std::size_t dimension,
                                  std::uint64_t feature_seed) {
    std::string all;
    for (const auto& l : lines) {
        all += l;
        all.push_back('\n');
    }
    return bag_of_tokens(all, dimension, feature_seed);
}

struct BaselineHyper {
    double learning_rate = 5.0;
    int epochs = 100;
    double l2 = 1e-4;
    std::size_t batch_size = 32;
    /// Stop early once the full objective gradient norm falls below this.
    double tolerance = 1e-6;

    bool operator==(const BaselineHyper&) const = default;
};

struct BaselineModel {
    std::size_t dimension = 1 << 14;
    std::uint64_t feature_seed = 7;
    std::vector<double> weights;
    double bias = 0.0;
    BaselineHyper hyper;
    std::uint64_t seed = 0;
    std::string data_fingerprint;
    int epochs_run = 0;

    bool operator==(const BaselineModel&) const = default;
};

inline double baseline_margin(const BaselineModel& m, const SparseVector& x) {
    double s = m.bias;
    for (std::size_t k = 0; k < x.index.size(); ++k) s += m.weights[x.index[k]] * x.value[k];
    return s;
}

inline double predict_baseline(const BaselineModel& m, const SparseVector& x) { return sigmoid(baseline_margin(m, x)); }

inline double predict_baseline(const BaselineModel& m, std::span<const std::string> story_lines) {
    return predict_baseline(m, bag_of_tokens(story_lines, m.dimension, m.feature_seed));
}

/// Mean logistic loss plus (l2/2)|w|^2, and its gradient.
inline double baseline_objective(const BaselineModel& m, std::span<const SparseVector> xs, std::span<const int> ys,
                                 std::vector<double>* grad_w = nullptr, double* grad_b = nullptr) {
    const double n = static_cast<double>(xs.size());
    double loss = 0.0;
    if (grad_w) grad_w->assign(m.dimension, 0.0);
    if (grad_b) *grad_b = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double u = baseline_margin(m, xs[i]);
        loss += softplus(u) - ys[i] * u;
        double r = (sigmoid(u) - ys[i]) / n;
        if (grad_w)
            for (std::size_t k = 0; k < xs[i].index.size(); ++k) (*grad_w)[xs[i].index[k]] += r * xs[i].value[k];
        if (grad_b) *grad_b += r;
    }
    double reg = 0.0;
    for (std::size_t j = 0; j < m.dimension; ++j) {
        reg += m.weights[j] * m.weights[j];
        if (grad_w) (*grad_w)[j] += m.hyper.l2 * m.weights[j];
    }
    return loss / n + 0.5 * m.hyper.l2 * reg;
}

/// Mini-batch gradient descent from an all-zero model. Deterministic for a seed.
inline BaselineModel train_baseline(std::span<const SparseVector> features, std::span<const int> labels,
                                    std::size_t dimension, std::uint64_t feature_seed, const BaselineHyper& hyper,
                                    std::uint64_t seed) {
    if (features.size() != labels.size()) throw ArgumentError("features and labels differ in length");
    detail::require_both_classes(labels);
    if (dimension < 1) throw ArgumentError("baseline dimension must be at least 1");
    BaselineModel m;
    m.dimension = dimension;
    m.feature_seed = feature_seed;
    m.weights.assign(dimension, 0.0);
    m.hyper = hyper;
    m.seed = seed;

    Rng rng(stable_hash(seed, "baseline"));
    std::vector<double> g(dimension);
    for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
        for (const auto& batch : detail::epoch_batches(rng, features.size(), std::max<std::size_t>(1, hyper.batch_size))) {
            std::fill(g.begin(), g.end(), 0.0);
            double gb = 0.0;
            const double n = static_cast<double>(batch.size());
            for (auto i : batch) {
                double r = (predict_baseline(m, features[i]) - labels[i]) / n;
                for (std::size_t k = 0; k < features[i].index.size(); ++k) g[features[i].index[k]] += r * features[i].value[k];
                gb += r;
            }
            for (std::size_t j = 0; j < dimension; ++j) m.weights[j] -= hyper.learning_rate * (g[j] + hyper.l2 * m.weights[j]);
            m.bias -= hyper.learning_rate * gb;
        }
        m.epochs_run = epoch;
        double gbias = 0.0;
        double loss = baseline_objective(m, features, labels, &g, &gbias);
        if (!std::isfinite(loss)) throw DivergenceError(epoch, "baseline loss is not finite");
        double gnorm = gbias * gbias;
        for (double x : g) gnorm += x * x;
        if (std::sqrt(gnorm) < hyper.tolerance) break;
    }
    return m;
}

// ===========================================================================
// Sequence head: attention-pooled logistic head over window embeddings.
//
//   z_i = w . v_i + b                 per-window logit
//   a   = softmax(q . v_i / tau)      attention over windows
//   p   = sigmoid(sum_i a_i z_i)

using EmbeddingSequence = std::vector<std::vector<double>>;

struct SequenceHyper {
    double learning_rate = 0.03;
    int epochs = 60;
    double l2 = 1e-4;
    std::size_t batch_size = 64;
    double temperature = 1.0;

    bool operator==(const SequenceHyper&) const = default;
};

struct SequenceHeadModel {
    std::size_t dimension = 0;
    std::vector<double> w;
    double b = 0.0;
    std::vector<double> q;
    double temperature = 1.0;
    SequenceHyper hyper;
    std::uint64_t seed = 0;
    std::string data_fingerprint;

    /// Zero linear layers and query; temperature from `hyper`.
    static SequenceHeadModel zeros(std::size_t dimension, const SequenceHyper& hyper = {}) {
        if (dimension < 1) throw ArgumentError("sequence head dimension must be at least 1");
        if (!(hyper.temperature > 0)) throw ArgumentError("temperature must be positive");
        SequenceHeadModel m;
        m.dimension = dimension;
        m.w.assign(dimension, 0.0);
        m.q.assign(dimension, 0.0);
        m.temperature = hyper.temperature;
        m.hyper = hyper;
        return m;
    }

    /// Parameters as one flat vector: w, then b, then q.
    std::vector<double> flatten() const {
        std::vector<double> p(w);
        p.push_back(b);
        p.insert(p.end(), q.begin(), q.end());
        return p;
    }

    void unflatten(std::span<const double> p) {
        if (p.size() != 2 * dimension + 1) throw ArgumentError("parameter vector has wrong length");
        std::copy(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(dimension), w.begin());
        b = p[dimension];
        std::copy(p.begin() + static_cast<std::ptrdiff_t>(dimension) + 1, p.end(), q.begin());
    }

    bool operator==(const SequenceHeadModel&) const = default;
};

struct HeadForward {
    std::vector<double> logits;
    std::vector<double> attention;
    double pooled = 0.0;
    double score = 0.5;
};

inline void check_sequence(const SequenceHeadModel& m, const EmbeddingSequence& seq) {
    if (seq.empty()) throw ArgumentError("sequence head needs at least one window");
    for (const auto& v : seq)
        if (v.size() != m.dimension)
            throw ArgumentError("embedding dimension " + std::to_string(v.size()) + " does not match model dimension " +
                                std::to_string(m.dimension));
}

inline HeadForward head_forward(const SequenceHeadModel& m, const EmbeddingSequence& seq) {
    check_sequence(m, seq);
    HeadForward f;
    const std::size_t n = seq.size();
    f.logits.resize(n);
    f.attention.resize(n);
    double max_s = -INFINITY;
    for (std::size_t i = 0; i < n; ++i) {
        f.logits[i] = dot(m.w, seq[i]) + m.b;
        f.attention[i] = dot(m.q, seq[i]) / m.temperature;
        max_s = std::max(max_s, f.attention[i]);
    }
    double total = 0.0;
    for (auto& a : f.attention) total += (a = std::exp(a - max_s));
    for (std::size_t i = 0; i < n; ++i) {
        f.attention[i] /= total;
        f.pooled += f.attention[i] * f.logits[i];
    }
    f.score = sigmoid(f.pooled);
    return f;
}

inline double predict_sequence_head(const SequenceHeadModel& m, const EmbeddingSequence& seq) {
    return head_forward(m, seq).score;
}

struct HeadGradient {
    std::vector<double> w;
    double b = 0.0;
    std::vector<double> q;

    std::vector<double> flatten() const {
        std::vector<double> p(w);
        p.push_back(b);
        p.insert(p.end(), q.begin(), q.end());
        return p;
    }
};

/// Mean logistic loss over `batch` (indices into `seqs`) plus
/// (l2/2)(|w|^2 + |q|^2), with its analytic gradient in `grad` when given.
inline double head_objective(const SequenceHeadModel& m, std::span<const EmbeddingSequence> seqs,
                             std::span<const int> labels, std::span<const std::size_t> batch, double l2,
                             HeadGradient* grad = nullptr) {
    const std::size_t d = m.dimension;
    if (grad) {
        grad->w.assign(d, 0.0);
        grad->q.assign(d, 0.0);
        grad->b = 0.0;
    }
    const double n = static_cast<double>(batch.size());
    double loss = 0.0;
    for (auto idx : batch) {
        const auto& seq = seqs[idx];
        auto f = head_forward(m, seq);
        const double y = labels[idx];
        loss += softplus(f.pooled) - y * f.pooled;
        if (!grad) continue;
        const double r = (f.score - y) / n;  // dL/du
        grad->b += r;
        for (std::size_t i = 0; i < seq.size(); ++i) {
            const double cw = r * f.attention[i];
            const double cq = r * f.attention[i] * (f.logits[i] - f.pooled) / m.temperature;
            const auto& v = seq[i];
            for (std::size_t k = 0; k < d; ++k) {
                grad->w[k] += cw * v[k];
                grad->q[k] += cq * v[k];
            }
        }
    }
    double reg = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        reg += m.w[k] * m.w[k] + m.q[k] * m.q[k];
        if (grad) {
            grad->w[k] += l2 * m.w[k];
            grad->q[k] += l2 * m.q[k];
        }
    }
    return loss / n + 0.5 * l2 * reg;
}

namespace detail {

/// Per-dimension mean and inverse spread of the training windows.
///
/// Window vectors share a large common component (tokens present on every
/// line), while the class signal lives in small deviations on a few
/// dimensions. Gradient steps are taken in standardized coordinates
/// u = (v - mean) * inv_sd and the weights mapped back after every step, so
/// the stored model keeps the plain z = w.v + b form.
struct WindowScaling {
    std::vector<double> mean;
    std::vector<double> inv_sd;

    static WindowScaling fit(std::span<const EmbeddingSequence> seqs, std::size_t d) {
        WindowScaling s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
        double count = 0.0;
        for (const auto& seq : seqs)
            for (const auto& v : seq) {
                for (std::size_t k = 0; k < d; ++k) s.mean[k] += v[k];
                count += 1.0;
            }
        for (auto& x : s.mean) x /= std::max(1.0, count);
        for (const auto& seq : seqs)
            for (const auto& v : seq)
                for (std::size_t k = 0; k < d; ++k) s.inv_sd[k] += (v[k] - s.mean[k]) * (v[k] - s.mean[k]);
        // Dimensions that never vary get unit scale rather than a huge one.
        for (auto& x : s.inv_sd) {
            double var = x / std::max(1.0, count);
            x = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
        }
        return s;
    }

    /// Bias that makes w.v + b equal the standardized linear form with offset c.
    double bias(std::span<const double> w, double c) const { return c - dot(w, mean); }
};

}  // namespace detail

/// Mini-batch gradient descent from the zero model (score 0.5, uniform
/// attention), in the standardized coordinates of detail::WindowScaling.
/// L2 applies to the standardized weights.
inline SequenceHeadModel train_sequence_head(std::span<const EmbeddingSequence> seqs, std::span<const int> labels,
                                             const SequenceHyper& hyper, std::uint64_t seed) {
    if (seqs.size() != labels.size()) throw ArgumentError("sequences and labels differ in length");
    if (seqs.empty()) throw DataError("empty training set");
    detail::require_both_classes(labels);
    for (std::size_t i = 0; i < seqs.size(); ++i)
        if (seqs[i].empty()) throw DataError("training sample " + std::to_string(i) + " has no windows");
    auto m = SequenceHeadModel::zeros(seqs.front().front().size(), hyper);
    m.seed = seed;

    Rng rng(stable_hash(seed, "sequence_head"));
    const auto scale = detail::WindowScaling::fit(seqs, m.dimension);
    std::vector<double> ws(m.dimension, 0.0), qs(m.dimension, 0.0);
    double c = 0.0;
    HeadGradient g;
    for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (const auto& batch : detail::epoch_batches(rng, seqs.size(), std::max<std::size_t>(1, hyper.batch_size))) {
            double loss = head_objective(m, seqs, labels, batch, 0.0, &g);
            if (!std::isfinite(loss)) throw DivergenceError(epoch, "sequence head loss is not finite");
            epoch_loss += loss * static_cast<double>(batch.size());
            // The q gradient needs no centering: softmax ignores a shift shared by all windows.
            for (std::size_t k = 0; k < m.dimension; ++k) {
                const double sk = scale.inv_sd[k];
                ws[k] -= hyper.learning_rate * ((g.w[k] - scale.mean[k] * g.b) * sk + hyper.l2 * ws[k]);
                qs[k] -= hyper.learning_rate * (g.q[k] * sk + hyper.l2 * qs[k]);
                m.w[k] = ws[k] * scale.inv_sd[k];
                m.q[k] = qs[k] * scale.inv_sd[k];
            }
            c -= hyper.learning_rate * g.b;
            m.b = scale.bias(m.w, c);
        }
        if (!std::isfinite(epoch_loss)) throw DivergenceError(epoch, "sequence head loss is not finite");
    }
    return m;
}

// ===========================================================================
// Per-window scorer and score averaging.

struct WindowScorer {
    std::vector<double> w;
    double b = 0.0;

    double score(std::span<const double> v) const { return sigmoid(dot(w, v) + b); }

    bool operator==(const WindowScorer&) const = default;
};

inline WindowScorer window_scorer(const SequenceHeadModel& m) { return {m.w, m.b}; }

/// Mean over windows of the per-window probability.
inline double avg_window_score(const WindowScorer& scorer, const EmbeddingSequence& seq) {
    if (seq.empty()) throw ArgumentError("avg_window_score needs at least one window");
    double total = 0.0;
    for (const auto& v : seq) {
        if (v.size() != scorer.w.size()) throw ArgumentError("embedding dimension does not match scorer");
        total += scorer.score(v);
    }
    return total / static_cast<double>(seq.size());
}

/// Logistic regression over individual windows, each inheriting the label
/// of the sample it came from.
inline WindowScorer train_window_scorer(std::span<const EmbeddingSequence> seqs, std::span<const int> labels,
                                        const SequenceHyper& hyper, std::uint64_t seed) {
    if (seqs.size() != labels.size()) throw ArgumentError("sequences and labels differ in length");
    detail::require_both_classes(labels);
    std::vector<std::pair<std::size_t, std::size_t>> items;
    for (std::size_t s = 0; s < seqs.size(); ++s)
        for (std::size_t i = 0; i < seqs[s].size(); ++i) items.emplace_back(s, i);
    if (items.empty()) throw DataError("no windows to train on");
    const std::size_t d = seqs[items.front().first][items.front().second].size();
    WindowScorer ws{std::vector<double>(d, 0.0), 0.0};
    Rng rng(stable_hash(seed, "window_scorer"));
    const auto scale = detail::WindowScaling::fit(seqs, d);
    std::vector<double> g(d), wstd(d, 0.0);
    double c = 0.0;
    for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
        for (const auto& batch : detail::epoch_batches(rng, items.size(), std::max<std::size_t>(1, hyper.batch_size))) {
            std::fill(g.begin(), g.end(), 0.0);
            double gb = 0.0;
            const double n = static_cast<double>(batch.size());
            for (auto k : batch) {
                const auto& v = seqs[items[k].first][items[k].second];
                double r = (ws.score(v) - labels[items[k].first]) / n;
                for (std::size_t j = 0; j < d; ++j) g[j] += r * v[j];
                gb += r;
            }
            for (std::size_t j = 0; j < d; ++j) {
                wstd[j] -= hyper.learning_rate * ((g[j] - scale.mean[j] * gb) * scale.inv_sd[j] + hyper.l2 * wstd[j]);
                ws.w[j] = wstd[j] * scale.inv_sd[j];
            }
            c -= hyper.learning_rate * gb;
            ws.b = scale.bias(ws.w, c);
            if (!std::isfinite(ws.b)) throw DivergenceError(epoch, "window scorer diverged");
        }
    }
    return ws;
}

// ===========================================================================
// Scored samples and model files.

struct ScoredSample {
    std::string sample_id;
    Label label = Label::Unlabeled;
    std::map<std::string, double> scores;

    bool operator==(const ScoredSample&) const = default;
};

inline ordered_json to_json(const ScoredSample& s) {
    ordered_json j;
    j["sample_id"] = s.sample_id;
    j["label"] = to_string(s.label);
    ordered_json scores = ordered_json::object();
    for (const auto& [k, v] : s.scores) scores[k] = v;
    j["scores"] = std::move(scores);
    return j;
}

inline ScoredSample scored_sample_from_json(const ordered_json& j) {
    ScoredSample s;
    try {
        s.sample_id = j.at("sample_id").get<std::string>();
        auto label = parse_label(j.at("label").get<std::string>());
        if (!label) throw DataError("scored sample " + s.sample_id + ": unknown label");
        s.label = *label;
        for (auto it = j.at("scores").begin(); it != j.at("scores").end(); ++it) {
            double v = it.value().get<double>();
            if (!(v >= 0.0 && v <= 1.0)) throw DataError("scored sample " + s.sample_id + ": score outside [0,1]");
            s.scores[it.key()] = v;
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("scored sample record: ") + e.what());
    }
    return s;
}

inline constexpr int kModelFormatVersion = 1;

inline ordered_json to_json(const BaselineModel& m) {
    ordered_json j;
    j["format_version"] = kModelFormatVersion;
    j["model_kind"] = "baseline";
    j["dims"] = {{"dimension", m.dimension}};
    j["hyper"] = {{"learning_rate", m.hyper.learning_rate},
                  {"epochs", m.hyper.epochs},
                  {"l2", m.hyper.l2},
                  {"batch_size", m.hyper.batch_size},
                  {"tolerance", m.hyper.tolerance}};
    ordered_json params;
    params["feature_seed"] = m.feature_seed;
    params["bias"] = m.bias;
    params["weights"] = m.weights;
    j["parameters"] = std::move(params);
    j["seed"] = m.seed;
    j["epochs_run"] = m.epochs_run;
    j["data_fingerprint"] = m.data_fingerprint;
    return j;
}

inline ordered_json to_json(const SequenceHeadModel& m, const WindowScorer* scorer = nullptr) {
    ordered_json j;
    j["format_version"] = kModelFormatVersion;
    j["model_kind"] = "sequence_head";
    j["dims"] = {{"dimension", m.dimension}};
    j["hyper"] = {{"learning_rate", m.hyper.learning_rate},
                  {"epochs", m.hyper.epochs},
                  {"l2", m.hyper.l2},
                  {"batch_size", m.hyper.batch_size},
                  {"temperature", m.hyper.temperature}};
    ordered_json params;
    params["w"] = m.w;
    params["b"] = m.b;
    params["q"] = m.q;
    params["temperature"] = m.temperature;
    if (scorer) params["window_scorer"] = {{"w", scorer->w}, {"b", scorer->b}};
    j["parameters"] = std::move(params);
    j["seed"] = m.seed;
    j["data_fingerprint"] = m.data_fingerprint;
    return j;
}

namespace detail {

inline void expect_kind(const ordered_json& j, std::string_view kind) {
    if (j.at("format_version").get<int>() != kModelFormatVersion) throw DataError("unsupported model format version");
    if (j.at("model_kind").get<std::string>() != kind)
        throw DataError("expected model_kind " + std::string(kind) + ", got " + j.at("model_kind").get<std::string>());
}

inline void require_finite(std::span<const double> xs, std::string_view what) {
    for (double x : xs)
        if (!std::isfinite(x)) throw DataError(std::string(what) + " contains a non-finite parameter");
}

}  // namespace detail

inline BaselineModel baseline_from_json(const ordered_json& j) {
    try {
        detail::expect_kind(j, "baseline");
        BaselineModel m;
        m.dimension = j.at("dims").at("dimension").get<std::size_t>();
        const auto& h = j.at("hyper");
        m.hyper = {h.at("learning_rate").get<double>(), h.at("epochs").get<int>(), h.at("l2").get<double>(),
                   h.at("batch_size").get<std::size_t>(), h.at("tolerance").get<double>()};
        const auto& p = j.at("parameters");
        m.feature_seed = p.at("feature_seed").get<std::uint64_t>();
        m.bias = p.at("bias").get<double>();
        m.weights = p.at("weights").get<std::vector<double>>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.epochs_run = j.value("epochs_run", 0);
        m.data_fingerprint = j.at("data_fingerprint").get<std::string>();
        if (m.weights.size() != m.dimension) throw DataError("baseline weights do not match dimension");
        detail::require_finite(m.weights, "baseline model");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("baseline model file: ") + e.what());
    }
}

inline std::pair<SequenceHeadModel, WindowScorer> sequence_head_from_json(const ordered_json& j) {
    try {
        detail::expect_kind(j, "sequence_head");
        SequenceHeadModel m;
        m.dimension = j.at("dims").at("dimension").get<std::size_t>();
        const auto& h = j.at("hyper");
        m.hyper = {h.at("learning_rate").get<double>(), h.at("epochs").get<int>(), h.at("l2").get<double>(),
                   h.at("batch_size").get<std::size_t>(), h.at("temperature").get<double>()};
        const auto& p = j.at("parameters");
        m.w = p.at("w").get<std::vector<double>>();
        m.b = p.at("b").get<double>();
        m.q = p.at("q").get<std::vector<double>>();
        m.temperature = p.at("temperature").get<double>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.data_fingerprint = j.at("data_fingerprint").get<std::string>();
        if (m.w.size() != m.dimension || m.q.size() != m.dimension)
            throw DataError("sequence head parameters do not match dimension");
        if (!(m.temperature > 0)) throw DataError("sequence head temperature must be positive");
        detail::require_finite(m.flatten(), "sequence head model");
        WindowScorer ws = window_scorer(m);
        if (p.contains("window_scorer")) {
            ws.w = p["window_scorer"].at("w").get<std::vector<double>>();
            ws.b = p["window_scorer"].at("b").get<double>();
            if (ws.w.size() != m.dimension) throw DataError("window scorer does not match dimension");
        }
        return {std::move(m), std::move(ws)};
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("sequence head model file: ") + e.what());
    }
}

}  // namespace epstory
