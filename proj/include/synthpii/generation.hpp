#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "synthpii/jsonl.hpp"
#include "synthpii/records.hpp"

namespace synthpii::generation {

/// System prompt, ordered instruction steps and the marker that introduces the
/// rewritten post in a model response.
struct PromptPlan {
    std::string system_prompt;
    std::vector<std::string> step_prompts;
    std::string output_marker = "\"Changed Post\":";

    void validate() const;
    io::Json to_json() const;

    /// Content-rewrite rules followed by the subreddit-rename rule.
    static PromptPlan default_plan();
    /// `{system, steps[], output_marker}`.
    static PromptPlan from_json(const io::Json &doc);
    static PromptPlan load(const std::filesystem::path &path);
};

struct GenerationConfig {
    std::string endpoint;
    std::string model_name;
    double temperature = 1.0;
    double top_p = 0.9;
    int max_tokens = 1024;
    int max_rounds = 3;
    std::vector<std::string> refusal_patterns = default_refusal_patterns();
    /// Accept the whole trimmed response when the output marker is missing.
    bool fallback_whole_response = false;

    void validate() const;
    io::Json to_json() const;
    /// Keys absent from `doc` keep the values of `base` (defaults when omitted).
    static GenerationConfig from_json(const io::Json &doc);
    static GenerationConfig from_json(const io::Json &doc, GenerationConfig base);

    static std::vector<std::string> default_refusal_patterns();

    /// Sampling presets: "llama2", "llama3", "zephyr".
    static GenerationConfig profile(std::string_view name);
};

struct ChatRequest {
    std::string model;
    std::string system;
    std::vector<std::string> user_messages;
    double temperature = 1.0;
    double top_p = 1.0;
    int max_tokens = 1024;
    /// 1-based index of the plan step issuing the request; informational.
    std::size_t step = 0;
};

/// Chat-completion backend. Implementations must tolerate `max_parallelism()`
/// concurrent calls to complete(). Transport failures throw TransportError.
class ChatClient {
  public:
    virtual ~ChatClient() = default;
    virtual std::string complete(const ChatRequest &request) = 0;
    virtual std::size_t max_parallelism() const { return 1; }
};

/// Wraps a callable; the callable must be safe to invoke concurrently if the
/// client is used with parallelism above one.
class FunctionChatClient final : public ChatClient {
  public:
    using Handler = std::function<std::string(const ChatRequest &)>;

    explicit FunctionChatClient(Handler handler, std::size_t parallelism = 1)
        : handler_(std::move(handler)), parallelism_(parallelism) {}

    std::string complete(const ChatRequest &request) override { return handler_(request); }
    std::size_t max_parallelism() const override { return parallelism_; }

  private:
    Handler handler_;
    std::size_t parallelism_;
};

/// Offline chat backend driven by a JSON fixture:
///
///     {"rules": [{"contains": "...", "step": 1, "temperature": 0.5,
///                 "responses": ["...", "..."]}],
///      "default": ["\"Changed Post\": {input}"]}
///
/// The first rule whose conditions all hold supplies the responses; the n-th
/// identical request gets the n-th response (the last one repeats), so a
/// request retried in a later round can get a different answer. `contains` is
/// tested against the text under instruction (the last user message). Response
/// templates may use {input}, {input_reversed} and {input_suffixed} (every word
/// with "_x" appended). Responses depend only on the request and its repeat
/// count, so output is independent of scheduling.
class ScriptedChatClient final : public ChatClient {
  public:
    explicit ScriptedChatClient(const io::Json &fixture, std::size_t parallelism = 4);
    static std::unique_ptr<ScriptedChatClient> load(const std::filesystem::path &path,
                                                    std::size_t parallelism = 4);

    std::string complete(const ChatRequest &request) override;
    std::size_t max_parallelism() const override { return parallelism_; }

    std::size_t calls() const;

  private:
    struct Rule {
        std::optional<std::string> contains;
        std::optional<std::size_t> step;
        std::optional<double> temperature;
        std::vector<std::string> responses;
    };
    std::vector<Rule> rules_;
    std::vector<std::string> default_;
    std::size_t parallelism_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, std::size_t> seen_;
    std::size_t calls_ = 0;
};

/// Compiled case-insensitive refusal patterns. Construction throws ConfigError
/// on an invalid regex, so bad patterns surface at config load.
class RefusalDetector {
  public:
    explicit RefusalDetector(std::span<const std::string> patterns);
    bool operator()(std::string_view text) const;

  private:
    std::vector<std::regex> patterns_;
};

/// True iff any pattern matches `text` case-insensitively.
bool detect_refusal(std::string_view text, std::span<const std::string> patterns);

/// Trimmed text after the last occurrence of `marker`, with one pair of
/// enclosing double quotes removed when the payload is fully quoted.
/// Empty optional when the marker is absent.
std::optional<std::string> parse_changed_post(std::string_view raw, std::string_view marker);

enum class Outcome { Success, Refused, Error };
std::string_view to_string(Outcome o) noexcept;

enum class AttemptStatus { Ok, Refused, NoMarker, Unchanged, Transport };
std::string_view to_string(AttemptStatus s) noexcept;

struct StepRecord {
    std::size_t step = 0; ///< 1-based
    std::string input;    ///< text placed under the step prompt
    std::string response; ///< raw model response
    std::optional<std::string> parsed;
    bool refused = false;
};

struct Attempt {
    std::size_t round = 0; ///< 1-based
    std::vector<StepRecord> steps;
    AttemptStatus status = AttemptStatus::Ok;
    std::string detail;
};

/// Full lineage of one synthetic rewrite.
struct GenerationTrace {
    std::string source_post_id;
    std::string input_text;
    std::vector<Attempt> attempts;
    /// Outputs of each step of the last attempt (y1..yk).
    std::vector<std::string> step_outputs;
    std::string final_text;
    std::size_t rounds_used = 0;
    Outcome outcome = Outcome::Error;
    std::string detail;
    io::Json config_snapshot;

    io::Json to_json() const;
    static GenerationTrace from_json(const io::Json &row);
};

/// Builds the user message sequence for a step: the step prompt, then the text.
std::vector<std::string> step_messages(std::string_view prompt, std::string_view text);

/// Runs every step of `plan`, chaining each step's output into the next, for up
/// to config.max_rounds rounds. A round ends early on refusal; a round that
/// yields no marker, or an empty or unchanged final text, is retried as well.
GenerationTrace run_sequential(std::string_view source_id, std::string_view input_text,
                               const PromptPlan &plan, const GenerationConfig &config,
                               ChatClient &client);

struct CalibrationEntry {
    double temperature = 0.0;
    std::size_t attempted = 0;
    std::size_t succeeded = 0;
    std::optional<double> mean_similarity;
};

struct CalibrationReport {
    std::vector<CalibrationEntry> entries;
    double chosen_temperature = 0.0;

    io::Json to_json() const;
};

using SimilarityFn = std::function<double(std::string_view original, std::string_view synthetic)>;

/// 0.5, 0.6, ..., 1.0
std::vector<double> default_temperature_grid();

/// Picks the temperature with the lowest mean similarity between originals and
/// their rewrites (successes only), ties going to the higher temperature.
/// Temperatures where every sample failed are excluded; throws DataError if
/// none remain. Temperatures run in order; samples within one run on up to
/// `parallelism` threads.
CalibrationReport calibrate_temperature(std::span<const TextItem> samples,
                                        std::span<const double> temperature_grid,
                                        const PromptPlan &plan, const GenerationConfig &base,
                                        ChatClient &client, const SimilarityFn &similarity,
                                        std::size_t parallelism = 1);

struct GenerationReport {
    std::size_t attempted = 0;
    std::size_t succeeded = 0;
    std::size_t refused_final = 0;
    std::size_t errored = 0;
    /// Errors caused by transport failures (a subset of `errored`).
    std::size_t transport_failures = 0;
    std::map<std::size_t, std::size_t> rounds_histogram;

    io::Json to_json() const;
};

struct GenerationResult {
    std::vector<GenerationTrace> traces;
    GenerationReport report;

    /// Successful rewrites as TextItems with id "<source>-syn" and source lineage.
    std::vector<TextItem> synthetic_items() const;
};

/// One trace per input, in input order, computed on up to `parallelism` threads
/// (further capped by the client's declared bound).
GenerationResult generate_corpus(std::span<const TextItem> inputs, const PromptPlan &plan,
                                 const GenerationConfig &config, ChatClient &client,
                                 std::size_t parallelism = 1);

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)> &fn);

} // namespace synthpii::generation
