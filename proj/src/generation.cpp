#include "synthpii/generation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

#include "synthpii/error.hpp"
#include "synthpii/utf8.hpp"

namespace synthpii::generation {

// ---------------------------------------------------------------------------
// Prompt plan

PromptPlan PromptPlan::default_plan() {
    PromptPlan plan;
    plan.system_prompt =
        "You are a story recreator who takes the information from the original post, and then "
        "makes a different story with similar kinds of personal information. You want to "
        "minimize the chance of finding the link between the stories. Generate the post "
        "following this format:\n\"Changed Post\":";
    plan.step_prompts = {
        "Change the original post following these rules:\n"
        "1. Replace all non-sensitive private information such as age, dob, religion, gender, "
        "marital status, race, ethnicity, employment, location, sexuality, and parenthood with "
        "other non-sensitive private information that retains the context. Replace the "
        "organization name with any other organization that serves the same purpose without "
        "generalization.\n"
        "2. Change specific codes, IDs, numbers, and names with different codes, IDs, numbers, "
        "and names, respectively.\n"
        "3. Generate a post that matches the same style and tone as the original post. If the "
        "original post contains spelling errors, strong language, or informal expressions, "
        "ensure that the synthetic post reflects the same characteristics.\n"
        "4. Use common internet abbreviations, slang, emoticons, and expressions where "
        "appropriate, keeping the overall feel and context of the original post intact.\n"
        "5. Don't give the title of the post.",
        "The first line of the original text tells about the subreddit name in which the "
        "original post was posted. Change the name of the subreddit to another subreddit of a "
        "similar kind.",
    };
    plan.output_marker = "\"Changed Post\":";
    return plan;
}

void PromptPlan::validate() const {
    if (step_prompts.empty())
        throw ConfigError("prompt plan needs at least one step");
    if (output_marker.empty())
        throw ConfigError("prompt plan output marker must not be empty");
}

io::Json PromptPlan::to_json() const {
    return {{"system", system_prompt}, {"steps", step_prompts}, {"output_marker", output_marker}};
}

PromptPlan PromptPlan::from_json(const io::Json &doc) {
    PromptPlan plan;
    try {
        plan.system_prompt = doc.value("system", std::string());
        plan.step_prompts = doc.at("steps").get<std::vector<std::string>>();
        plan.output_marker = doc.value("output_marker", plan.output_marker);
    } catch (const io::Json::exception &e) {
        throw ConfigError(std::string("invalid prompt plan: ") + e.what());
    }
    plan.validate();
    return plan;
}

PromptPlan PromptPlan::load(const std::filesystem::path &path) {
    try {
        return from_json(io::Json::parse(io::read_file(path)));
    } catch (const io::Json::parse_error &e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Config

std::vector<std::string> GenerationConfig::default_refusal_patterns() {
    return {"I cannot", "I(?:'|\xE2\x80\x99)m just an AI", "not within my programming"};
}

void GenerationConfig::validate() const {
    if (!(temperature > 0.0))
        throw ConfigError("temperature must be positive");
    if (!(top_p > 0.0 && top_p <= 1.0))
        throw ConfigError("top_p must lie in (0, 1]");
    if (max_tokens < 1)
        throw ConfigError("max_tokens must be positive");
    if (max_rounds < 1)
        throw ConfigError("max_rounds must be at least 1");
    RefusalDetector{refusal_patterns};
}

io::Json GenerationConfig::to_json() const {
    return {{"endpoint", endpoint},
            {"model", model_name},
            {"temperature", temperature},
            {"top_p", top_p},
            {"max_tokens", max_tokens},
            {"max_rounds", max_rounds},
            {"refusal_patterns", refusal_patterns},
            {"fallback_whole_response", fallback_whole_response}};
}

GenerationConfig GenerationConfig::from_json(const io::Json &doc) { return from_json(doc, {}); }

GenerationConfig GenerationConfig::from_json(const io::Json &doc, GenerationConfig base) {
    try {
        if (const auto it = doc.find("profile"); it != doc.end())
            base = profile(it->get<std::string>());
        base.endpoint = doc.value("endpoint", base.endpoint);
        base.model_name = doc.value("model", base.model_name);
        base.temperature = doc.value("temperature", base.temperature);
        base.top_p = doc.value("top_p", base.top_p);
        base.max_tokens = doc.value("max_tokens", base.max_tokens);
        base.max_rounds = doc.value("max_rounds", base.max_rounds);
        base.refusal_patterns = doc.value("refusal_patterns", base.refusal_patterns);
        base.fallback_whole_response =
            doc.value("fallback_whole_response", base.fallback_whole_response);
    } catch (const io::Json::exception &e) {
        throw ConfigError(std::string("invalid generation config: ") + e.what());
    }
    base.validate();
    return base;
}

GenerationConfig GenerationConfig::profile(std::string_view name) {
    GenerationConfig c;
    if (name == "llama2") {
        c.model_name = "meta-llama/Llama-2-7b-chat-hf";
        c.temperature = 1.0;
        c.top_p = 0.9;
        c.max_tokens = 1024;
    } else if (name == "llama3") {
        c.model_name = "meta-llama/Meta-Llama-3-8B-Instruct";
        c.temperature = 0.9;
        c.top_p = 0.9;
    } else if (name == "zephyr") {
        c.model_name = "HuggingFaceH4/zephyr-7b-beta";
        c.temperature = 1.0;
        c.top_p = 0.95;
    } else {
        throw ConfigError("unknown generation profile '" + std::string(name) + "'");
    }
    return c;
}

// ---------------------------------------------------------------------------
// Scripted client

namespace {

std::string reversed_words(std::string_view text) {
    auto words = utf8::split_whitespace(text);
    std::reverse(words.begin(), words.end());
    std::string out;
    for (const auto &w : words) {
        if (!out.empty())
            out += ' ';
        out += w;
    }
    return out;
}

std::string suffixed_words(std::string_view text) {
    std::string out;
    for (const auto &w : utf8::split_whitespace(text)) {
        if (!out.empty())
            out += ' ';
        out += w;
        out += "_x";
    }
    return out;
}

void replace_all(std::string &s, std::string_view from, const std::string &to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
}

std::vector<std::string> string_list(const io::Json &v) {
    if (v.is_string())
        return {v.get<std::string>()};
    return v.get<std::vector<std::string>>();
}

} // namespace

ScriptedChatClient::ScriptedChatClient(const io::Json &fixture, std::size_t parallelism)
    : parallelism_(parallelism) {
    try {
        if (const auto it = fixture.find("rules"); it != fixture.end())
            for (const auto &r : *it) {
                Rule rule;
                if (r.contains("contains"))
                    rule.contains = r["contains"].get<std::string>();
                if (r.contains("step"))
                    rule.step = r["step"].get<std::size_t>();
                if (r.contains("temperature"))
                    rule.temperature = r["temperature"].get<double>();
                rule.responses = string_list(r.at("responses"));
                if (rule.responses.empty())
                    throw ConfigError("mock rule without responses");
                rules_.push_back(std::move(rule));
            }
        default_ = string_list(fixture.value("default", io::Json("\"Changed Post\": {input}")));
        if (default_.empty())
            throw ConfigError("mock default responses must not be empty");
    } catch (const io::Json::exception &e) {
        throw ConfigError(std::string("invalid chat mock fixture: ") + e.what());
    }
}

std::unique_ptr<ScriptedChatClient> ScriptedChatClient::load(const std::filesystem::path &path,
                                                             std::size_t parallelism) {
    try {
        return std::make_unique<ScriptedChatClient>(io::Json::parse(io::read_file(path)),
                                                    parallelism);
    } catch (const io::Json::parse_error &e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string ScriptedChatClient::complete(const ChatRequest &request) {
    const std::string input = request.user_messages.empty() ? std::string()
                                                            : request.user_messages.back();
    std::ostringstream key;
    key << request.model << '\x1e' << request.system << '\x1e' << request.temperature << '\x1e'
        << request.top_p;
    for (const auto &m : request.user_messages)
        key << '\x1e' << m;

    std::size_t repeat = 0;
    {
        std::lock_guard lock(mutex_);
        repeat = seen_[key.str()]++;
        ++calls_;
    }

    const std::vector<std::string> *responses = &default_;
    for (const auto &rule : rules_) {
        if (rule.contains && input.find(*rule.contains) == std::string::npos)
            continue;
        if (rule.step && *rule.step != request.step)
            continue;
        if (rule.temperature && std::abs(*rule.temperature - request.temperature) > 1e-9)
            continue;
        responses = &rule.responses;
        break;
    }
    std::string out = (*responses)[std::min(repeat, responses->size() - 1)];
    replace_all(out, "{input_reversed}", reversed_words(input));
    replace_all(out, "{input_suffixed}", suffixed_words(input));
    replace_all(out, "{input}", input);
    return out;
}

std::size_t ScriptedChatClient::calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

// ---------------------------------------------------------------------------
// Refusals and parsing

RefusalDetector::RefusalDetector(std::span<const std::string> patterns) {
    for (const auto &p : patterns) {
        try {
            patterns_.emplace_back(p, std::regex::ECMAScript | std::regex::icase);
        } catch (const std::regex_error &e) {
            throw ConfigError("invalid refusal pattern '" + p + "': " + e.what());
        }
    }
}

bool RefusalDetector::operator()(std::string_view text) const {
    return std::any_of(patterns_.begin(), patterns_.end(), [&](const std::regex &re) {
        return std::regex_search(text.begin(), text.end(), re);
    });
}

bool detect_refusal(std::string_view text, std::span<const std::string> patterns) {
    return RefusalDetector(patterns)(text);
}

std::optional<std::string> parse_changed_post(std::string_view raw, std::string_view marker) {
    if (marker.empty())
        return std::nullopt;
    const auto pos = raw.rfind(marker);
    if (pos == std::string_view::npos)
        return std::nullopt;
    auto payload = utf8::trim(raw.substr(pos + marker.size()));
    if (payload.size() >= 2 && payload.front() == '"' && payload.back() == '"')
        payload = utf8::trim(payload.substr(1, payload.size() - 2));
    return std::string(payload);
}

std::string_view to_string(Outcome o) noexcept {
    switch (o) {
    case Outcome::Success: return "success";
    case Outcome::Refused: return "refused";
    case Outcome::Error: return "error";
    }
    return "error";
}

std::string_view to_string(AttemptStatus s) noexcept {
    switch (s) {
    case AttemptStatus::Ok: return "ok";
    case AttemptStatus::Refused: return "refused";
    case AttemptStatus::NoMarker: return "no_marker";
    case AttemptStatus::Unchanged: return "unchanged";
    case AttemptStatus::Transport: return "transport";
    }
    return "transport";
}

namespace {

Outcome outcome_from(std::string_view s) {
    if (s == "success") return Outcome::Success;
    if (s == "refused") return Outcome::Refused;
    if (s == "error") return Outcome::Error;
    throw DataError("unknown outcome '" + std::string(s) + "'");
}

AttemptStatus status_from(std::string_view s) {
    for (auto st : {AttemptStatus::Ok, AttemptStatus::Refused, AttemptStatus::NoMarker,
                    AttemptStatus::Unchanged, AttemptStatus::Transport})
        if (to_string(st) == s)
            return st;
    throw DataError("unknown attempt status '" + std::string(s) + "'");
}

} // namespace

io::Json GenerationTrace::to_json() const {
    io::Json attempts_json = io::Json::array();
    for (const auto &a : attempts) {
        io::Json steps = io::Json::array();
        for (const auto &s : a.steps)
            steps.push_back({{"step", s.step},
                             {"input", s.input},
                             {"response", s.response},
                             {"parsed", s.parsed ? io::Json(*s.parsed) : io::Json(nullptr)},
                             {"refused", s.refused}});
        attempts_json.push_back({{"round", a.round},
                                 {"status", to_string(a.status)},
                                 {"detail", a.detail},
                                 {"steps", std::move(steps)}});
    }
    return {{"source_post_id", source_post_id},
            {"outcome", to_string(outcome)},
            {"detail", detail},
            {"rounds_used", rounds_used},
            {"input_text", input_text},
            {"step_outputs", step_outputs},
            {"final_text", final_text},
            {"attempts", std::move(attempts_json)},
            {"config", config_snapshot}};
}

GenerationTrace GenerationTrace::from_json(const io::Json &row) {
    GenerationTrace t;
    t.source_post_id = row.at("source_post_id").get<std::string>();
    t.outcome = outcome_from(row.at("outcome").get<std::string>());
    t.detail = row.value("detail", std::string());
    t.rounds_used = row.at("rounds_used").get<std::size_t>();
    t.input_text = row.at("input_text").get<std::string>();
    t.step_outputs = row.value("step_outputs", std::vector<std::string>{});
    t.final_text = row.value("final_text", std::string());
    for (const auto &a : row.value("attempts", io::Json::array())) {
        Attempt attempt;
        attempt.round = a.at("round").get<std::size_t>();
        attempt.status = status_from(a.at("status").get<std::string>());
        attempt.detail = a.value("detail", std::string());
        for (const auto &s : a.at("steps")) {
            StepRecord step;
            step.step = s.at("step").get<std::size_t>();
            step.input = s.at("input").get<std::string>();
            step.response = s.at("response").get<std::string>();
            if (!s.at("parsed").is_null())
                step.parsed = s["parsed"].get<std::string>();
            step.refused = s.value("refused", false);
            attempt.steps.push_back(std::move(step));
        }
        t.attempts.push_back(std::move(attempt));
    }
    t.config_snapshot = row.value("config", io::Json::object());
    return t;
}

// ---------------------------------------------------------------------------
// Sequential prompting

std::vector<std::string> step_messages(std::string_view prompt, std::string_view text) {
    return {std::string(prompt), std::string(text)};
}

namespace {

Attempt run_attempt(std::size_t round, std::string_view input_text, const PromptPlan &plan,
                    const GenerationConfig &config, const RefusalDetector &is_refusal,
                    ChatClient &client) {
    Attempt attempt;
    attempt.round = round;
    std::string text(input_text);
    for (std::size_t k = 0; k < plan.step_prompts.size(); ++k) {
        ChatRequest request;
        request.model = config.model_name;
        request.system = plan.system_prompt;
        request.user_messages = step_messages(plan.step_prompts[k], text);
        request.temperature = config.temperature;
        request.top_p = config.top_p;
        request.max_tokens = config.max_tokens;
        request.step = k + 1;

        StepRecord step;
        step.step = k + 1;
        step.input = text;
        try {
            step.response = client.complete(request);
        } catch (const TransportError &e) {
            attempt.steps.push_back(std::move(step));
            attempt.status = AttemptStatus::Transport;
            attempt.detail = e.what();
            return attempt;
        }
        step.parsed = parse_changed_post(step.response, plan.output_marker);
        step.refused = is_refusal(step.response);
        const bool refused = step.refused;
        // Intermediate steps without the marker pass their whole response on.
        text = step.parsed ? *step.parsed : std::string(utf8::trim(step.response));
        attempt.steps.push_back(std::move(step));
        if (refused) {
            attempt.status = AttemptStatus::Refused;
            attempt.detail = "refusal at step " + std::to_string(k + 1);
            return attempt;
        }
    }

    const auto &last = attempt.steps.back();
    if (!last.parsed && !config.fallback_whole_response) {
        attempt.status = AttemptStatus::NoMarker;
        attempt.detail = "no_marker";
        return attempt;
    }
    if (text.empty() || text == input_text) {
        attempt.status = AttemptStatus::Unchanged;
        attempt.detail = text.empty() ? "empty_output" : "unchanged_output";
        return attempt;
    }
    attempt.status = AttemptStatus::Ok;
    return attempt;
}

} // namespace

GenerationTrace run_sequential(std::string_view source_id, std::string_view input_text,
                               const PromptPlan &plan, const GenerationConfig &config,
                               ChatClient &client) {
    plan.validate();
    config.validate();
    if (input_text.empty())
        throw DataError("run_sequential: input text must not be empty");
    const RefusalDetector is_refusal(config.refusal_patterns);

    GenerationTrace trace;
    trace.source_post_id = std::string(source_id);
    trace.input_text = std::string(input_text);
    trace.config_snapshot = config.to_json();

    for (int round = 1; round <= config.max_rounds; ++round) {
        trace.attempts.push_back(run_attempt(static_cast<std::size_t>(round), input_text, plan,
                                             config, is_refusal, client));
        trace.rounds_used = static_cast<std::size_t>(round);
        const Attempt &a = trace.attempts.back();
        if (a.status == AttemptStatus::Ok || a.status == AttemptStatus::Transport)
            break;
    }

    const Attempt &last = trace.attempts.back();
    trace.step_outputs.clear();
    for (const auto &s : last.steps)
        trace.step_outputs.push_back(s.parsed ? *s.parsed : std::string(utf8::trim(s.response)));
    switch (last.status) {
    case AttemptStatus::Ok:
        trace.outcome = Outcome::Success;
        trace.final_text = trace.step_outputs.back();
        break;
    case AttemptStatus::Refused:
        trace.outcome = Outcome::Refused;
        trace.detail = last.detail;
        break;
    case AttemptStatus::Transport:
        trace.outcome = Outcome::Error;
        trace.detail = "transport: " + last.detail;
        break;
    case AttemptStatus::NoMarker:
    case AttemptStatus::Unchanged:
        trace.outcome = Outcome::Error;
        trace.detail = last.detail;
        break;
    }
    return trace;
}

// ---------------------------------------------------------------------------
// Parallel helpers, calibration and corpus generation

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)> &fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure)
                            failure = std::current_exception();
                    }
                }
            });
    }
    if (failure)
        std::rethrow_exception(failure);
}

std::vector<double> default_temperature_grid() {
    std::vector<double> grid;
    for (int tenths = 5; tenths <= 10; ++tenths)
        grid.push_back(tenths / 10.0);
    return grid;
}

io::Json CalibrationReport::to_json() const {
    io::Json rows = io::Json::array();
    for (const auto &e : entries)
        rows.push_back({{"temperature", e.temperature},
                        {"attempted", e.attempted},
                        {"succeeded", e.succeeded},
                        {"mean_similarity",
                         e.mean_similarity ? io::Json(*e.mean_similarity) : io::Json(nullptr)}});
    return {{"chosen_temperature", chosen_temperature}, {"temperatures", std::move(rows)}};
}

CalibrationReport calibrate_temperature(std::span<const TextItem> samples,
                                        std::span<const double> temperature_grid,
                                        const PromptPlan &plan, const GenerationConfig &base,
                                        ChatClient &client, const SimilarityFn &similarity,
                                        std::size_t parallelism) {
    if (samples.empty())
        throw DataError("calibration needs at least one sample post");
    if (temperature_grid.empty())
        throw ConfigError("temperature grid must not be empty");

    CalibrationReport report;
    std::optional<std::size_t> best;
    const std::size_t workers = std::min(parallelism, client.max_parallelism());
    for (double t : temperature_grid) {
        GenerationConfig config = base;
        config.temperature = t;
        std::vector<GenerationTrace> traces(samples.size());
        parallel_for(samples.size(), workers, [&](std::size_t i) {
            traces[i] = run_sequential(samples[i].id, samples[i].text, plan, config, client);
        });

        CalibrationEntry entry;
        entry.temperature = t;
        entry.attempted = samples.size();
        double sum = 0.0;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            if (traces[i].outcome != Outcome::Success)
                continue;
            ++entry.succeeded;
            sum += similarity(samples[i].text, traces[i].final_text);
        }
        if (entry.succeeded > 0) {
            entry.mean_similarity = sum / static_cast<double>(entry.succeeded);
            if (!best || *entry.mean_similarity < *report.entries[*best].mean_similarity ||
                (*entry.mean_similarity == *report.entries[*best].mean_similarity &&
                 t > report.entries[*best].temperature))
                best = report.entries.size();
        }
        report.entries.push_back(entry);
    }
    if (!best)
        throw DataError("calibration failed: every temperature produced only failed generations");
    report.chosen_temperature = report.entries[*best].temperature;
    return report;
}

io::Json GenerationReport::to_json() const {
    io::Json hist = io::Json::object();
    for (const auto &[rounds, count] : rounds_histogram)
        hist[std::to_string(rounds)] = count;
    return {{"attempted", attempted},
            {"succeeded", succeeded},
            {"refused_final", refused_final},
            {"errored", errored},
            {"transport_failures", transport_failures},
            {"rounds_histogram", std::move(hist)}};
}

std::vector<TextItem> GenerationResult::synthetic_items() const {
    std::vector<TextItem> items;
    for (const auto &t : traces)
        if (t.outcome == Outcome::Success)
            items.push_back({t.source_post_id + "-syn", t.final_text, t.source_post_id});
    return items;
}

GenerationResult generate_corpus(std::span<const TextItem> inputs, const PromptPlan &plan,
                                 const GenerationConfig &config, ChatClient &client,
                                 std::size_t parallelism) {
    plan.validate();
    config.validate();
    GenerationResult result;
    result.traces.resize(inputs.size());
    const std::size_t workers = std::min(parallelism, client.max_parallelism());
    parallel_for(inputs.size(), workers, [&](std::size_t i) {
        if (inputs[i].text.empty()) {
            GenerationTrace t;
            t.source_post_id = inputs[i].id;
            t.outcome = Outcome::Error;
            t.detail = "empty_input";
            t.config_snapshot = config.to_json();
            result.traces[i] = std::move(t);
            return;
        }
        result.traces[i] = run_sequential(inputs[i].id, inputs[i].text, plan, config, client);
    });

    auto &r = result.report;
    for (const auto &t : result.traces) {
        ++r.attempted;
        ++r.rounds_histogram[t.rounds_used];
        switch (t.outcome) {
        case Outcome::Success: ++r.succeeded; break;
        case Outcome::Refused: ++r.refused_final; break;
        case Outcome::Error:
            ++r.errored;
            if (t.detail.rfind("transport", 0) == 0)
                ++r.transport_failures;
            break;
        }
    }
    return result;
}

} // namespace synthpii::generation
