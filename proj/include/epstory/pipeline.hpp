#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "epstory/classify.hpp"
#include "epstory/datagen.hpp"
#include "epstory/embedding.hpp"
#include "epstory/error.hpp"
#include "epstory/eval.hpp"
#include "epstory/fileio.hpp"
#include "epstory/filter_rules.hpp"
#include "epstory/parallel.hpp"
#include "epstory/remote_embedding.hpp"
#include "epstory/story.hpp"
#include "epstory/telemetry.hpp"
#include "epstory/windowing.hpp"

namespace epstory {

// ---------------------------------------------------------------------------
// Configuration

/// Used when a configuration names no rule file.
inline constexpr std::string_view kDefaultFilterRules = R"(version: 1
rules:
  - action: keep
    event_class: SecurityObservation
  - action: keep
    event_class: MlObservation
  - action: drop
    event_type: [Heartbeat, ImageLoad]
)";

struct ProviderSpec {
    enum class Kind { Hash, Remote } kind = Kind::Hash;
    std::size_t dimension = 256;
    std::uint64_t seed = 42;  // hash provider only
    RemoteOptions remote;     // remote provider only
};

struct PipelineConfig {
    /// Drives data generation and every training run.
    std::uint64_t seed = 1;
    /// Worker threads for per-sample stages; 0 = one per core.
    std::size_t threads = 0;
    /// Empty: built-in rules. Relative paths are resolved against the
    /// directory of the configuration file.
    fs::path filter_rules;
    GeneratorConfig generator;
    StoryOptions story;
    WindowingOptions windowing;
    ProviderSpec provider;
    std::size_t baseline_dimension = 1 << 14;
    std::uint64_t feature_seed = 7;
    BaselineHyper baseline;
    SequenceHyper sequence;
    /// Unset: the boundary suggested by the dataset manifest.
    std::optional<Timestamp> split_boundary;
    std::vector<std::string> ensemble{"baseline", "sequence_head"};
    std::vector<double> fpr_budgets{0.01};
};

inline constexpr std::string_view kBaselineId = "baseline";
inline constexpr std::string_view kSequenceHeadId = "sequence_head";
inline constexpr std::string_view kAvgWindowId = "avg_window";
inline constexpr std::string_view kEnsembleId = "ensemble";

inline ordered_json to_json(const PipelineConfig& c) {
    ordered_json j;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["filter_rules"] = c.filter_rules.empty() ? ordered_json(nullptr) : ordered_json(c.filter_rules.string());
    auto gen = to_json(c.generator);
    gen.erase("seed");
    j["generator"] = std::move(gen);
    j["story"] = {{"entity_length_threshold", c.story.entity_length_threshold}};
    j["windowing"] = {{"unit", to_string(c.windowing.unit)}, {"budget", c.windowing.budget}};
    if (c.provider.kind == ProviderSpec::Kind::Hash) {
        j["provider"] = {{"kind", "hash"}, {"dimension", c.provider.dimension}, {"seed", c.provider.seed}};
    } else {
        const auto& r = c.provider.remote;
        j["provider"] = {{"kind", "remote"},          {"endpoint", r.endpoint},
                         {"dimension", r.dimension},  {"batch_size", r.batch_size},
                         {"max_in_flight", r.max_in_flight}, {"timeout_ms", r.timeout_ms},
                         {"retries", r.retries}};
    }
    const auto& b = c.baseline;
    j["baseline"] = {{"dimension", c.baseline_dimension}, {"feature_seed", c.feature_seed},
                     {"learning_rate", b.learning_rate},   {"epochs", b.epochs},
                     {"l2", b.l2},                         {"batch_size", b.batch_size},
                     {"tolerance", b.tolerance}};
    const auto& s = c.sequence;
    j["sequence_head"] = {{"learning_rate", s.learning_rate}, {"epochs", s.epochs},           {"l2", s.l2},
                          {"batch_size", s.batch_size},       {"temperature", s.temperature}};
    j["split_boundary"] = c.split_boundary ? ordered_json(format_rfc3339(*c.split_boundary)) : ordered_json(nullptr);
    j["ensemble"] = c.ensemble;
    j["fpr_budgets"] = c.fpr_budgets;
    return j;
}

/// Throws DataError describing the first problem.
inline void validate(const PipelineConfig& c) {
    validate(c.generator);
    if (c.windowing.budget < 1) throw DataError("windowing budget must be at least 1");
    if (c.provider.kind == ProviderSpec::Kind::Hash && c.provider.dimension < 1)
        throw DataError("provider dimension must be at least 1");
    if (c.provider.kind == ProviderSpec::Kind::Remote) parse_endpoint(c.provider.remote.endpoint);
    if (c.baseline_dimension < 1) throw DataError("baseline dimension must be at least 1");
    if (!(c.sequence.temperature > 0)) throw DataError("sequence head temperature must be positive");
    if (c.ensemble.empty()) throw DataError("ensemble needs at least one member");
    for (const auto& m : c.ensemble)
        if (m != kBaselineId && m != kSequenceHeadId && m != kAvgWindowId)
            throw DataError("unknown ensemble member '" + m + "'");
    if (c.fpr_budgets.empty()) throw DataError("fpr_budgets is empty");
    for (double b : c.fpr_budgets)
        if (!(b >= 0.0 && b < 1.0)) throw DataError("fpr budget must be in [0, 1)");
}

/// Missing keys keep their defaults.
inline PipelineConfig pipeline_config_from_json(const ordered_json& j, const fs::path& base_dir = {}) {
    try {
        if (!j.is_object()) throw DataError("configuration must be a JSON object");
        PipelineConfig c;
        c.seed = j.value("seed", c.seed);
        c.threads = j.value("threads", c.threads);
        if (j.contains("filter_rules") && !j["filter_rules"].is_null()) {
            fs::path p = j["filter_rules"].get<std::string>();
            c.filter_rules = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
        }
        if (j.contains("generator")) c.generator = generator_config_from_json(j["generator"]);
        c.generator.seed = c.seed;
        if (j.contains("story"))
            c.story.entity_length_threshold = j["story"].value("entity_length_threshold", c.story.entity_length_threshold);
        if (j.contains("windowing")) {
            const auto& w = j["windowing"];
            if (w.contains("unit")) {
                auto unit = parse_window_unit(w["unit"].get<std::string>());
                if (!unit) throw DataError("unknown window unit '" + w["unit"].get<std::string>() + "'");
                c.windowing.unit = *unit;
            }
            c.windowing.budget = w.value("budget", c.windowing.budget);
        }
        if (j.contains("provider")) {
            const auto& p = j["provider"];
            auto kind = p.value("kind", std::string("hash"));
            if (kind == "hash") {
                c.provider.kind = ProviderSpec::Kind::Hash;
                c.provider.dimension = p.value("dimension", c.provider.dimension);
                c.provider.seed = p.value("seed", c.provider.seed);
            } else if (kind == "remote") {
                c.provider.kind = ProviderSpec::Kind::Remote;
                auto& r = c.provider.remote;
                r.endpoint = p.at("endpoint").get<std::string>();
                r.dimension = p.value("dimension", r.dimension);
                r.batch_size = p.value("batch_size", r.batch_size);
                r.max_in_flight = p.value("max_in_flight", r.max_in_flight);
                r.timeout_ms = p.value("timeout_ms", r.timeout_ms);
                r.retries = p.value("retries", r.retries);
            } else {
                throw DataError("unknown provider kind '" + kind + "'");
            }
        }
        if (j.contains("baseline")) {
            const auto& b = j["baseline"];
            c.baseline_dimension = b.value("dimension", c.baseline_dimension);
            c.feature_seed = b.value("feature_seed", c.feature_seed);
            c.baseline.learning_rate = b.value("learning_rate", c.baseline.learning_rate);
            c.baseline.epochs = b.value("epochs", c.baseline.epochs);
            c.baseline.l2 = b.value("l2", c.baseline.l2);
            c.baseline.batch_size = b.value("batch_size", c.baseline.batch_size);
            c.baseline.tolerance = b.value("tolerance", c.baseline.tolerance);
        }
        if (j.contains("sequence_head")) {
            const auto& s = j["sequence_head"];
            c.sequence.learning_rate = s.value("learning_rate", c.sequence.learning_rate);
            c.sequence.epochs = s.value("epochs", c.sequence.epochs);
            c.sequence.l2 = s.value("l2", c.sequence.l2);
            c.sequence.batch_size = s.value("batch_size", c.sequence.batch_size);
            c.sequence.temperature = s.value("temperature", c.sequence.temperature);
        }
        if (j.contains("split_boundary") && !j["split_boundary"].is_null()) {
            auto t = parse_rfc3339(j["split_boundary"].get<std::string>());
            if (!t) throw DataError("split_boundary is not an RFC 3339 timestamp");
            c.split_boundary = *t;
        }
        if (j.contains("ensemble")) c.ensemble = j["ensemble"].get<std::vector<std::string>>();
        if (j.contains("fpr_budgets")) c.fpr_budgets = j["fpr_budgets"].get<std::vector<double>>();
        validate(c);
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("configuration: ") + e.what());
    }
}

/// Referenced files must exist when the configuration is loaded.
inline PipelineConfig load_pipeline_config(const fs::path& path) {
    ordered_json j;
    try {
        j = ordered_json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    auto c = pipeline_config_from_json(j, path.parent_path());
    if (!c.filter_rules.empty() && !fs::exists(c.filter_rules))
        throw IoError(path.string() + ": filter rule file not found: " + c.filter_rules.string());
    return c;
}

inline std::string filter_rules_text(const PipelineConfig& c) {
    return c.filter_rules.empty() ? std::string(kDefaultFilterRules) : read_file(c.filter_rules);
}

inline FilterRuleSet filter_rules_of(const PipelineConfig& c) { return parse_filter_rules(filter_rules_text(c)); }

/// Hash of everything that affects outputs: the configuration minus paths
/// and thread count, plus the content of the rule file.
inline std::string config_fingerprint(const PipelineConfig& c) {
    auto j = to_json(c);
    j.erase("threads");
    j.erase("filter_rules");
    return hex64(stable_hash(stable_hash(0, j.dump()), filter_rules_text(c)));
}

inline std::string generator_fingerprint(const GeneratorConfig& g) { return hex64(stable_hash(0, to_json(g).dump())); }

inline std::unique_ptr<EmbeddingProvider> make_provider(const ProviderSpec& spec) {
    if (spec.kind == ProviderSpec::Kind::Hash) return std::make_unique<HashEmbedder>(spec.dimension, spec.seed);
    return std::make_unique<RemoteEmbedder>(spec.remote);
}

// ---------------------------------------------------------------------------
// Stages shared by the file-based commands and in-memory runs

struct TrainedModels {
    BaselineModel baseline;
    SequenceHeadModel head;
    WindowScorer scorer;
};

inline TrainedModels train_models(const PipelineConfig& c, std::span<const std::string> ids,
                                  std::span<const SparseVector> bags, std::span<const EmbeddingSequence> seqs,
                                  std::span<const int> labels) {
    TrainedModels m;
    const auto fingerprint = fingerprint_samples(ids, labels);
    m.baseline = train_baseline(bags, labels, c.baseline_dimension, c.feature_seed, c.baseline, c.seed);
    m.baseline.data_fingerprint = fingerprint;
    m.head = train_sequence_head(seqs, labels, c.sequence, c.seed);
    m.head.data_fingerprint = fingerprint;
    m.scorer = train_window_scorer(seqs, labels, c.sequence, c.seed);
    return m;
}

inline ScoredSample score_sample(const TrainedModels& m, const PipelineConfig& c, std::string id, Label label,
                                 const SparseVector& bag, const EmbeddingSequence& seq) {
    ScoredSample s;
    s.sample_id = std::move(id);
    s.label = label;
    s.scores[std::string(kBaselineId)] = predict_baseline(m.baseline, bag);
    s.scores[std::string(kSequenceHeadId)] = predict_sequence_head(m.head, seq);
    s.scores[std::string(kAvgWindowId)] = avg_window_score(m.scorer, seq);
    s.scores[std::string(kEnsembleId)] = ensemble_average(s.scores, c.ensemble);
    return s;
}

inline std::vector<std::string> report_models() {
    return {std::string(kBaselineId), std::string(kAvgWindowId), std::string(kSequenceHeadId),
            std::string(kEnsembleId)};
}

/// Single-class test sets are rejected with a DataError.
inline EvalReport evaluate_scores(const PipelineConfig& c, std::span<const ScoredSample> scores, Timestamp boundary) {
    std::size_t pos = 0, neg = 0;
    for (const auto& s : scores) {
        if (s.label == Label::Hok) ++pos;
        if (s.label == Label::Benign) ++neg;
    }
    if (pos == 0 || neg == 0)
        throw DataError("test set must contain both classes (hok: " + std::to_string(pos) +
                        ", benign: " + std::to_string(neg) + ")");
    auto models = report_models();
    return evaluate(scores, models, c.fpr_budgets, boundary);
}

struct PreparedSample {
    SampleMeta meta;
    SparseVector bag;
    EmbeddingSequence embeddings;
};

inline PreparedSample prepare_sample(const SampleMeta& meta, std::vector<RawEvent> events, const PipelineConfig& c,
                                     const FilterRuleSet& rules, EmbeddingProvider& provider) {
    auto story = compile_story(std::move(events), meta, rules, c.story);
    PreparedSample p;
    p.meta = meta;
    p.bag = bag_of_tokens(story.lines, c.baseline_dimension, c.feature_seed);
    auto windows = split_into_windows(story, c.windowing);
    for (auto& e : embed_windows(windows, provider)) p.embeddings.push_back(std::move(e.vector));
    return p;
}

struct ExperimentResult {
    SplitResult split;
    TrainedModels models;
    std::vector<ScoredSample> scores;  // test side
    EvalReport report;
};

/// Generate, compile, window, embed, split, train, score and evaluate
/// without writing intermediate files.
inline ExperimentResult run_experiment(const PipelineConfig& c) {
    validate(c);
    const auto rules = filter_rules_of(c);
    auto provider = make_provider(c.provider);
    const std::size_t n = total_samples(c.generator);
    std::vector<PreparedSample> prepared(n);
    const std::size_t threads = c.provider.kind == ProviderSpec::Kind::Hash ? c.threads : 1;
    parallel_for(n, threads, [&](std::size_t i) {
        auto g = generate_sample(c.generator, i);
        prepared[i] = prepare_sample(g.meta, std::move(g.events), c, rules, *provider);
    });

    std::vector<SampleMeta> metas;
    for (const auto& p : prepared) metas.push_back(p.meta);
    ExperimentResult r;
    const Timestamp boundary = c.split_boundary.value_or(split_boundary(c.generator));
    r.split = time_split(metas, boundary);

    std::vector<std::string> ids;
    std::vector<SparseVector> bags;
    std::vector<EmbeddingSequence> seqs;
    std::vector<int> labels;
    std::vector<std::size_t> test;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& m = prepared[i].meta;
        if (!(m.timeframe_end < boundary)) {
            test.push_back(i);
            continue;
        }
        if (m.label == Label::Unlabeled) continue;
        ids.push_back(sample_id(m));
        bags.push_back(prepared[i].bag);
        seqs.push_back(prepared[i].embeddings);
        labels.push_back(m.label == Label::Hok ? 1 : 0);
    }
    r.models = train_models(c, ids, bags, seqs, labels);
    for (auto i : test)
        r.scores.push_back(score_sample(r.models, c, sample_id(prepared[i].meta), prepared[i].meta.label,
                                        prepared[i].bag, prepared[i].embeddings));
    r.report = evaluate_scores(c, r.scores, boundary);
    return r;
}

// ---------------------------------------------------------------------------
// Work directory layout
//
//   data/manifest.json, data/samples/<id>.evts.jsonl      gen-data
//   stories/index.json, stories/<id>.story.txt|.legend.json  compile
//   split.json                                             split
//   embeddings/index.json, windows.jsonl, vectors.f64       embed
//   models/baseline.model.json, sequence_head.model.json    train
//   scores.json                                            score
//   report.json                                            eval
//
// vectors.f64 holds every window vector as little-endian IEEE-754 doubles,
// row-major, in index order (samples in index order, windows by index).

namespace layout {
inline fs::path data(const fs::path& w) { return w / "data"; }
inline fs::path manifest(const fs::path& w) { return w / "data" / "manifest.json"; }
inline fs::path sample_file(const fs::path& w, const std::string& id) { return w / "data" / "samples" / (id + ".evts.jsonl"); }
inline fs::path stories(const fs::path& w) { return w / "stories"; }
inline fs::path story_index(const fs::path& w) { return w / "stories" / "index.json"; }
inline fs::path story_file(const fs::path& w, const std::string& id) { return w / "stories" / (id + ".story.txt"); }
inline fs::path legend_file(const fs::path& w, const std::string& id) { return w / "stories" / (id + ".legend.json"); }
inline fs::path split(const fs::path& w) { return w / "split.json"; }
inline fs::path embeddings(const fs::path& w) { return w / "embeddings"; }
inline fs::path embedding_index(const fs::path& w) { return w / "embeddings" / "index.json"; }
inline fs::path windows_file(const fs::path& w) { return w / "embeddings" / "windows.jsonl"; }
inline fs::path vectors_file(const fs::path& w) { return w / "embeddings" / "vectors.f64"; }
inline fs::path baseline_model(const fs::path& w) { return w / "models" / "baseline.model.json"; }
inline fs::path sequence_model(const fs::path& w) { return w / "models" / "sequence_head.model.json"; }
inline fs::path scores(const fs::path& w) { return w / "scores.json"; }
inline fs::path report(const fs::path& w) { return w / "report.json"; }
}  // namespace layout

namespace detail {

inline ordered_json read_json(const fs::path& path) {
    try {
        return ordered_json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

inline std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

/// Builds a directory next to `target` and swaps it in only once `fill`
/// has succeeded; a failure leaves the previous contents untouched.
inline void replace_directory(const fs::path& target, const std::function<void(const fs::path&)>& fill) {
    fs::path staging = target;
    staging += ".partial";
    std::error_code ec;
    fs::remove_all(staging, ec);
    try {
        fs::create_directories(staging);
        fill(staging);
        fs::remove_all(target);
        fs::rename(staging, target);
    } catch (const fs::filesystem_error& e) {
        fs::remove_all(staging, ec);
        throw IoError(e.what());
    } catch (...) {
        fs::remove_all(staging, ec);
        throw;
    }
}

inline ordered_json stamp(const PipelineConfig& c) {
    return ordered_json{{"config_fingerprint", config_fingerprint(c)}, {"seed", c.seed}};
}

/// Re-throws an error with the offending sample named, keeping its family.
template <class Fn>
auto for_sample(const std::string& id, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const DataError& e) {
        throw DataError("sample " + id + ": " + e.what());
    } catch (const IoError& e) {
        throw IoError("sample " + id + ": " + e.what());
    }
}

struct StoryEntry {
    std::string sample_id;
    Label label = Label::Unlabeled;
};

inline std::vector<StoryEntry> read_story_index(const fs::path& work) {
    auto j = read_json(layout::story_index(work));
    std::vector<StoryEntry> out;
    try {
        for (const auto& s : j.at("samples"))
            out.push_back({s.at("sample_id").get<std::string>(),
                           parse_label(s.at("label").get<std::string>()).value_or(Label::Unlabeled)});
    } catch (const nlohmann::json::exception& e) {
        throw DataError(layout::story_index(work).string() + ": " + e.what());
    }
    return out;
}

inline std::vector<std::string> read_story_lines(const fs::path& work, const std::string& id) {
    return split_lines(read_file(layout::story_file(work, id)));
}

struct EmbeddingStore {
    std::size_t dimension = 0;
    std::map<std::string, EmbeddingSequence> by_sample;
};

inline EmbeddingStore read_embeddings(const fs::path& work) {
    auto index = read_json(layout::embedding_index(work));
    EmbeddingStore store;
    std::ifstream in(layout::vectors_file(work), std::ios::binary);
    if (!in) throw IoError("cannot open " + layout::vectors_file(work).string());
    try {
        store.dimension = index.at("dimension").get<std::size_t>();
        for (const auto& s : index.at("samples")) {
            auto& seq = store.by_sample[s.at("sample_id").get<std::string>()];
            seq.assign(s.at("windows").get<std::size_t>(), std::vector<double>(store.dimension));
            for (auto& v : seq) {
                in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
                if (!in) throw IoError(layout::vectors_file(work).string() + " is shorter than its index says");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(layout::embedding_index(work).string() + ": " + e.what());
    }
    return store;
}

inline const EmbeddingSequence& embeddings_of(const EmbeddingStore& store, const std::string& id) {
    auto it = store.by_sample.find(id);
    if (it == store.by_sample.end()) throw DataError("sample " + id + " has no embeddings; run embed first");
    return it->second;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands. Each reads the previous stage's files under `work`, replaces its
// own outputs atomically and returns a one-line summary.

inline std::string cmd_gen_data(const PipelineConfig& c, const fs::path& work) {
    validate(c);
    const std::size_t n = total_samples(c.generator);
    std::vector<GeneratedSample> samples(n);
    DatasetManifest manifest;
    manifest.config_fingerprint = generator_fingerprint(c.generator);
    manifest.split_boundary = split_boundary(c.generator);
    detail::replace_directory(layout::data(work), [&](const fs::path& dir) {
        fs::create_directories(dir / "samples");
        parallel_for(n, c.threads, [&](std::size_t i) {
            auto g = generate_sample(c.generator, i);
            write_file_atomic(dir / "samples" / (sample_id(g.meta) + ".evts.jsonl"), serialize_sample(g.meta, g.events));
            g.events.clear();
            samples[i] = std::move(g);
        });
        for (const auto& s : samples) add_to_manifest(manifest, s);
        write_file_atomic(dir / "manifest.json", detail::dump(to_json(manifest)));
    });
    return "generated " + std::to_string(n) + " samples (" + std::to_string(manifest.train_benign + manifest.test_benign) +
           " benign, " + std::to_string(manifest.train_hok + manifest.test_hok) + " hok as labeled)";
}

inline std::string cmd_compile(const PipelineConfig& c, const fs::path& work) {
    const auto rules = filter_rules_of(c);
    const auto manifest = manifest_from_json(detail::read_json(layout::manifest(work)));
    const std::size_t n = manifest.samples.size();
    std::vector<std::pair<Label, std::size_t>> info(n);
    detail::replace_directory(layout::stories(work), [&](const fs::path& dir) {
        parallel_for(n, c.threads, [&](std::size_t i) {
            const auto& id = manifest.samples[i].sample_id;
            detail::for_sample(id, [&] {
                auto parsed = load_sample(layout::sample_file(work, id));
                if (sample_id(parsed.meta) != id) throw DataError("header does not match file name");
                auto story = compile_story(std::move(parsed.events), parsed.meta, rules, c.story);
                write_file_atomic(dir / (id + ".story.txt"), story_text(story));
                write_file_atomic(dir / (id + ".legend.json"), detail::dump(legend_json(story.legend)));
                info[i] = {parsed.meta.label, story.lines.size()};
            });
        });
        auto index = detail::stamp(c);
        ordered_json list = ordered_json::array();
        for (std::size_t i = 0; i < n; ++i)
            list.push_back({{"sample_id", manifest.samples[i].sample_id},
                            {"label", to_string(info[i].first)},
                            {"lines", info[i].second}});
        index["samples"] = std::move(list);
        write_file_atomic(dir / "index.json", detail::dump(index));
    });
    return "compiled " + std::to_string(n) + " stories";
}

inline std::string cmd_split(const PipelineConfig& c, const fs::path& work) {
    const auto manifest = manifest_from_json(detail::read_json(layout::manifest(work)));
    std::vector<SampleMeta> metas;
    for (const auto& s : manifest.samples) {
        SampleMeta m;
        m.machine_id = s.machine_id;
        m.timeframe_start = s.timeframe_start;
        m.timeframe_end = s.timeframe_end;
        m.label = s.emitted_label;
        metas.push_back(std::move(m));
    }
    auto result = time_split(metas, c.split_boundary.value_or(manifest.split_boundary));
    auto j = detail::stamp(c);
    j.update(to_json(result));
    write_file_atomic(layout::split(work), detail::dump(j));
    std::string summary = "split at " + format_rfc3339(result.boundary) + ": " + std::to_string(result.train.size()) +
                          " train, " + std::to_string(result.test.size()) + " test";
    for (const auto& w : result.warnings) summary += "\nwarning: " + w;
    return summary;
}

inline std::string cmd_embed(const PipelineConfig& c, const fs::path& work) {
    const auto stories = detail::read_story_index(work);
    const std::size_t n = stories.size();
    auto provider = make_provider(c.provider);
    std::vector<std::vector<Window>> windows(n);
    std::vector<std::vector<WindowEmbedding>> embedded(n);
    const std::size_t threads = c.provider.kind == ProviderSpec::Kind::Hash ? c.threads : 1;
    parallel_for(n, threads, [&](std::size_t i) {
        const auto& id = stories[i].sample_id;
        detail::for_sample(id, [&] {
            windows[i] = split_into_windows(detail::read_story_lines(work, id), id, c.windowing);
            embedded[i] = embed_windows(windows[i], *provider);
        });
    });

    std::size_t total = 0;
    detail::replace_directory(layout::embeddings(work), [&](const fs::path& dir) {
        std::string window_lines;
        std::string vectors;
        auto index = detail::stamp(c);
        index["provider_id"] = provider->id();
        index["dimension"] = provider->dimension();
        index["window_unit"] = to_string(c.windowing.unit);
        index["window_budget"] = c.windowing.budget;
        ordered_json list = ordered_json::array();
        for (std::size_t i = 0; i < n; ++i) {
            for (const auto& w : windows[i]) {
                window_lines += to_json(w).dump();
                window_lines.push_back('\n');
            }
            for (const auto& e : embedded[i])
                vectors.append(reinterpret_cast<const char*>(e.vector.data()), e.vector.size() * sizeof(double));
            list.push_back({{"sample_id", stories[i].sample_id}, {"windows", embedded[i].size()}});
            total += embedded[i].size();
        }
        index["samples"] = std::move(list);
        write_file_atomic(dir / "windows.jsonl", window_lines);
        write_file_atomic(dir / "vectors.f64", vectors);
        write_file_atomic(dir / "index.json", detail::dump(index));
    });
    return "embedded " + std::to_string(total) + " windows from " + std::to_string(n) + " stories with " + provider->id();
}

inline std::string cmd_train(const PipelineConfig& c, const fs::path& work) {
    const auto split = split_from_json(detail::read_json(layout::split(work)));
    const auto stories = detail::read_story_index(work);
    const auto store = detail::read_embeddings(work);
    std::map<std::string, Label> labels_by_id;
    for (const auto& s : stories) labels_by_id[s.sample_id] = s.label;

    std::vector<std::string> ids;
    for (const auto& id : split.train) {
        auto it = labels_by_id.find(id);
        if (it == labels_by_id.end()) throw DataError("sample " + id + " is in the split but has no story");
        if (it->second != Label::Unlabeled) ids.push_back(id);
    }
    std::vector<SparseVector> bags(ids.size());
    std::vector<EmbeddingSequence> seqs(ids.size());
    std::vector<int> labels(ids.size());
    parallel_for(ids.size(), c.threads, [&](std::size_t i) {
        detail::for_sample(ids[i], [&] {
            bags[i] = bag_of_tokens(detail::read_story_lines(work, ids[i]), c.baseline_dimension, c.feature_seed);
            seqs[i] = detail::embeddings_of(store, ids[i]);
            labels[i] = labels_by_id[ids[i]] == Label::Hok ? 1 : 0;
        });
    });
    auto models = train_models(c, ids, bags, seqs, labels);

    auto base = to_json(models.baseline);
    base.update(detail::stamp(c));
    auto head = to_json(models.head, &models.scorer);
    head.update(detail::stamp(c));
    fs::create_directories(work / "models");
    write_file_atomic(layout::baseline_model(work), detail::dump(base));
    write_file_atomic(layout::sequence_model(work), detail::dump(head));
    return "trained on " + std::to_string(ids.size()) + " samples (baseline stopped after " +
           std::to_string(models.baseline.epochs_run) + " epochs)";
}

inline std::string cmd_score(const PipelineConfig& c, const fs::path& work) {
    const auto split = split_from_json(detail::read_json(layout::split(work)));
    const auto stories = detail::read_story_index(work);
    const auto store = detail::read_embeddings(work);
    TrainedModels models;
    models.baseline = baseline_from_json(detail::read_json(layout::baseline_model(work)));
    std::tie(models.head, models.scorer) = sequence_head_from_json(detail::read_json(layout::sequence_model(work)));
    std::map<std::string, Label> labels_by_id;
    for (const auto& s : stories) labels_by_id[s.sample_id] = s.label;

    std::vector<ScoredSample> scored(split.test.size());
    parallel_for(split.test.size(), c.threads, [&](std::size_t i) {
        const auto& id = split.test[i];
        detail::for_sample(id, [&] {
            auto it = labels_by_id.find(id);
            if (it == labels_by_id.end()) throw DataError("in the split but has no story");
            auto bag = bag_of_tokens(detail::read_story_lines(work, id), c.baseline_dimension, c.feature_seed);
            scored[i] = score_sample(models, c, id, it->second, bag, detail::embeddings_of(store, id));
        });
    });
    auto j = detail::stamp(c);
    j["split_boundary"] = format_rfc3339(split.boundary);
    j["models"] = report_models();
    ordered_json list = ordered_json::array();
    for (const auto& s : scored) list.push_back(to_json(s));
    j["samples"] = std::move(list);
    write_file_atomic(layout::scores(work), detail::dump(j));
    return "scored " + std::to_string(scored.size()) + " test samples";
}

struct EvalOutput {
    EvalReport report;
    ordered_json json;
};

inline EvalOutput cmd_eval(const PipelineConfig& c, const fs::path& work) {
    auto j = detail::read_json(layout::scores(work));
    std::vector<ScoredSample> scored;
    std::optional<Timestamp> boundary;
    try {
        for (const auto& s : j.at("samples")) scored.push_back(scored_sample_from_json(s));
        boundary = parse_rfc3339(j.at("split_boundary").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw DataError(layout::scores(work).string() + ": " + e.what());
    }
    if (!boundary) throw DataError(layout::scores(work).string() + ": bad split boundary");
    EvalOutput out;
    out.report = evaluate_scores(c, scored, *boundary);
    out.json = detail::stamp(c);
    out.json.update(to_json(out.report));
    write_file_atomic(layout::report(work), detail::dump(out.json));
    return out;
}

}  // namespace epstory
