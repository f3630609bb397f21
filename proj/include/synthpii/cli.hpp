#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "synthpii/corpus.hpp"
#include "synthpii/generation.hpp"
#include "synthpii/jsonl.hpp"
#include "synthpii/privacy_eval.hpp"

namespace synthpii::cli {

inline constexpr int kExitOk = 0;
/// Unexpected failure, or some reports of a `report` run failed (the rest were written).
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInvalid = 2;
/// A remote service could not be reached after retries.
inline constexpr int kExitTransport = 3;

/// Snapshot of the variables the tool reads; tests pass their own.
struct Environment {
    std::map<std::string, std::string> vars;

    static Environment from_process();
    std::optional<std::string> get(const std::string &name) const;
};

struct Paths {
    std::filesystem::path input; ///< posts JSONL
    std::filesystem::path blocklist;
    std::filesystem::path annotations; ///< raw annotation export for import-annotations
    std::filesystem::path annotations_a;
    std::filesystem::path annotations_b;
    std::filesystem::path original;  ///< original texts for metrics
    std::filesystem::path synthetic; ///< synthetic texts with source_id lineage
    std::filesystem::path original_annotations;
    std::filesystem::path synthetic_annotations;
    std::filesystem::path multilabel_predictions;
    std::filesystem::path token_predictions;
    std::filesystem::path gold_spans;
    std::filesystem::path pred_spans;
    std::filesystem::path survey;
    std::filesystem::path prompt_plan;
    std::filesystem::path mock_dir;
    std::filesystem::path output_dir = "out";
};

struct MetricOptions {
    double bleu_smoothing = 0.0;
    /// "" (off), "hash", or an embedding endpoint URL.
    std::string embeddings;
    std::size_t embedding_dimension = 64;
    std::uint64_t embedding_seed = 0;
};

struct CalibrationOptions {
    std::size_t samples = 50;
    std::uint64_t seed = 0;
    /// cosine, bleu3, meteor or rouge_l
    std::string metric = "cosine";
    std::vector<double> grid = generation::default_temperature_grid();
};

struct RunConfig {
    Paths paths;
    corpus::FilterConfig filter;
    generation::GenerationConfig generation;
    CalibrationOptions calibration;
    bool augment_subreddit = true;
    MetricOptions metrics;
    privacy::UnlinkOptions unlink;
    std::string search_endpoint;
    std::chrono::milliseconds fetch_interval{1000};
    /// auto, doccano or native; auto looks at the first record.
    std::string annotation_schema = "auto";
    double min_overlap = 0.5;
    /// gold or union
    std::string overlap_basis = "gold";
    std::string averaging = "micro";
    std::vector<double> survey_expected = privacy::default_expected_probabilities();
    std::size_t jobs = 1;

    // Credentials come from the environment only and never reach the snapshot.
    std::string api_key;
    std::string search_key;

    /// Relative paths in `doc` resolve against `base_dir`; load() passes the
    /// absolute directory of the config file, so snapshots hold absolute paths.
    static RunConfig from_json(const io::Json &doc, const std::filesystem::path &base_dir);
    static RunConfig load(const std::filesystem::path &path);

    void apply_environment(const Environment &env);
    void validate() const;

    /// Everything needed to re-run a stage, credentials excluded.
    io::Json snapshot() const;
};

/// Runs the command line `args` (args[0] is the program name). Never throws.
int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err,
        const Environment &env = Environment::from_process());

} // namespace synthpii::cli
