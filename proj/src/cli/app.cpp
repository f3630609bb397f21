#include <functional>
#include <ostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "synthpii/error.hpp"

namespace synthpii::cli {

namespace fs = std::filesystem;

namespace {

/// Flag values; only those given on the command line override the config.
struct Overrides {
    std::optional<std::string> config;
    std::optional<std::string> out;
    std::optional<std::size_t> jobs;
    std::optional<std::string> mock;

    std::optional<std::string> input, blocklist, plan, annotations, ann_a, ann_b, original,
        synthetic, original_ann, synthetic_ann, multilabel, tokens, gold_spans, pred_spans,
        responses;
    std::optional<double> fraction;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> min_words;
    std::optional<std::string> schema;
    std::optional<std::string> profile, endpoint, model, metric, embeddings, search_endpoint,
        average, overlap_basis;
    std::optional<double> temperature, top_p, threshold, min_overlap;
    std::optional<int> max_rounds;
    std::optional<std::size_t> samples, k;
    bool no_augment = false;
    bool calibrate = false;
};

void set_path(const std::optional<std::string> &flag, fs::path &target) {
    if (flag)
        target = flag->empty() ? fs::path() : fs::absolute(*flag).lexically_normal();
}

template <class T, class U> void set(const std::optional<T> &flag, U &target) {
    if (flag)
        target = *flag;
}

RunConfig build_config(const Overrides &o, const Environment &env) {
    RunConfig c = o.config ? RunConfig::load(*o.config) : RunConfig{};
    c.apply_environment(env);

    set_path(o.out, c.paths.output_dir);
    set_path(o.mock, c.paths.mock_dir);
    set(o.jobs, c.jobs);
    set_path(o.input, c.paths.input);
    set_path(o.blocklist, c.paths.blocklist);
    set_path(o.plan, c.paths.prompt_plan);
    set_path(o.annotations, c.paths.annotations);
    set_path(o.ann_a, c.paths.annotations_a);
    set_path(o.ann_b, c.paths.annotations_b);
    set_path(o.original, c.paths.original);
    set_path(o.synthetic, c.paths.synthetic);
    set_path(o.original_ann, c.paths.original_annotations);
    set_path(o.synthetic_ann, c.paths.synthetic_annotations);
    set_path(o.multilabel, c.paths.multilabel_predictions);
    set_path(o.tokens, c.paths.token_predictions);
    set_path(o.gold_spans, c.paths.gold_spans);
    set_path(o.pred_spans, c.paths.pred_spans);
    set_path(o.responses, c.paths.survey);

    set(o.fraction, c.filter.sample_fraction);
    set(o.seed, c.filter.sample_seed);
    set(o.min_words, c.filter.min_words);
    set(o.schema, c.annotation_schema);
    if (o.profile) {
        const auto endpoint = c.generation.endpoint;
        c.generation = generation::GenerationConfig::profile(*o.profile);
        c.generation.endpoint = endpoint;
    }
    set(o.endpoint, c.generation.endpoint);
    set(o.model, c.generation.model_name);
    set(o.temperature, c.generation.temperature);
    set(o.top_p, c.generation.top_p);
    set(o.max_rounds, c.generation.max_rounds);
    set(o.samples, c.calibration.samples);
    set(o.metric, c.calibration.metric);
    if (o.no_augment)
        c.augment_subreddit = false;
    set(o.embeddings, c.metrics.embeddings);
    set(o.search_endpoint, c.search_endpoint);
    set(o.k, c.unlink.k);
    set(o.threshold, c.unlink.threshold);
    set(o.min_overlap, c.min_overlap);
    set(o.average, c.averaging);
    set(o.overlap_basis, c.overlap_basis);

    c.validate();
    return c;
}

} // namespace

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err,
        const Environment &env) {
    CLI::App app{"Synthetic self-disclosure corpus toolkit", "synthpii"};
    app.require_subcommand(1);
    app.fallthrough();
    Overrides o;
    app.add_option("-c,--config", o.config, "JSON run configuration");
    app.add_option("-o,--out", o.out, "output directory");
    app.add_option("-j,--jobs", o.jobs, "maximum concurrent requests or workers")
        ->check(CLI::PositiveNumber);
    app.add_option("--mock", o.mock, "fixture directory replacing every remote service");

    auto *filter = app.add_subcommand("filter", "NSFW, first-person, length and sampling filters");
    filter->add_option("-i,--input", o.input, "posts JSONL");
    filter->add_option("--blocklist", o.blocklist, "NSFW subreddit list");
    filter->add_option("--fraction", o.fraction, "sampling fraction");
    filter->add_option("--seed", o.seed, "sampling seed");
    filter->add_option("--min-words", o.min_words);

    auto *import = app.add_subcommand("import-annotations", "convert a span export to native JSONL");
    import->add_option("-i,--input", o.annotations, "annotation export");
    import->add_option("--schema", o.schema)->check(CLI::IsMember({"auto", "doccano", "native"}));

    auto *iaa = app.add_subcommand("iaa", "agreement between two annotators");
    iaa->add_option("--a", o.ann_a, "first annotator");
    iaa->add_option("--b", o.ann_b, "second annotator");
    iaa->add_option("--schema", o.schema)->check(CLI::IsMember({"auto", "doccano", "native"}));

    auto add_generation_flags = [&](CLI::App *cmd) {
        cmd->add_option("-i,--input", o.input, "posts JSONL");
        cmd->add_option("--plan", o.plan, "prompt plan JSON");
        cmd->add_option("--profile", o.profile)
            ->check(CLI::IsMember({"llama2", "llama3", "zephyr"}));
        cmd->add_option("--endpoint", o.endpoint, "chat-completion URL");
        cmd->add_option("--model", o.model);
        cmd->add_option("--max-rounds", o.max_rounds);
        cmd->add_option("--samples", o.samples, "calibration sample size");
        cmd->add_option("--metric", o.metric, "calibration similarity")
            ->check(CLI::IsMember({"cosine", "bleu3", "meteor", "rouge_l"}));
        cmd->add_flag("--no-augment", o.no_augment, "do not prefix the subreddit line");
    };
    auto *generate = app.add_subcommand("generate", "rewrite posts through the prompt chain");
    add_generation_flags(generate);
    generate->add_option("--temperature", o.temperature);
    generate->add_option("--top-p", o.top_p);
    generate->add_flag("--calibrate", o.calibrate, "pick the temperature first");
    auto *calibrate = app.add_subcommand("calibrate", "temperature sweep only");
    add_generation_flags(calibrate);
    calibrate->add_option("--top-p", o.top_p);

    auto *metrics = app.add_subcommand("metrics", "similarity of synthetic posts to their sources");
    metrics->add_option("--original", o.original, "original texts JSONL");
    metrics->add_option("--synthetic", o.synthetic, "synthetic texts JSONL");
    metrics->add_option("--embeddings", o.embeddings, "\"hash\" or embedding endpoint URL");

    auto *unlink = app.add_subcommand("unlink", "web-search linkability scan");
    unlink->add_option("--synthetic", o.synthetic, "synthetic texts JSONL");
    unlink->add_option("-k", o.k, "search results per query");
    unlink->add_option("--threshold", o.threshold, "METEOR discard threshold");
    unlink->add_option("--search-endpoint", o.search_endpoint);

    auto *survey = app.add_subcommand("survey", "tally and chi-square of identification responses");
    survey->add_option("--responses", o.responses, "CSV respondent,set,correct");

    auto *eval = app.add_subcommand("eval-classifier", "score classifier and tagger predictions");
    eval->add_option("--multilabel", o.multilabel);
    eval->add_option("--tokens", o.tokens);
    eval->add_option("--gold-spans", o.gold_spans);
    eval->add_option("--pred-spans", o.pred_spans);
    eval->add_option("--min-overlap", o.min_overlap);
    eval->add_option("--overlap-basis", o.overlap_basis)->check(CLI::IsMember({"gold", "union"}));
    eval->add_option("--average", o.average)
        ->check(CLI::IsMember({"micro", "macro", "samples"}));

    auto *proportions = app.add_subcommand("proportions", "PII category shares, original vs synthetic");
    proportions->add_option("--original", o.original_ann, "native annotations");
    proportions->add_option("--synthetic", o.synthetic_ann, "native annotations");

    auto *report = app.add_subcommand("report", "every evaluation with configured inputs");

    std::vector<std::string> argv_storage(args.begin(), args.end());
    if (argv_storage.empty())
        argv_storage.emplace_back("synthpii");
    std::vector<char *> argv;
    for (auto &a : argv_storage)
        argv.push_back(a.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitInvalid;
    }

    const std::vector<std::pair<CLI::App *, std::function<StageResult(const RunConfig &)>>> table{
        {filter, &stage_filter},
        {import, &stage_import_annotations},
        {iaa, &stage_iaa},
        {generate, [&](const RunConfig &c) { return stage_generate(c, o.calibrate); }},
        {calibrate, &stage_calibrate},
        {metrics, &stage_metrics},
        {unlink, &stage_unlink},
        {survey, &stage_survey},
        {eval, &stage_eval_classifier},
        {proportions, &stage_proportions},
        {report, &stage_report},
    };

    for (const auto &[cmd, fn] : table) {
        if (!cmd->parsed())
            continue;
        const std::string name = cmd->get_name();
        try {
            const auto config = build_config(o, env);
            write_snapshot(config, name);
            const auto result = fn(config);
            for (const auto &file : result.outputs)
                out << name << ": wrote " << (config.paths.output_dir / file).generic_string()
                    << '\n';
            if (result.exit_code == kExitTransport)
                err << "synthpii " << name << ": some remote requests failed, see outputs\n";
            else if (result.exit_code == kExitFailure)
                err << "synthpii " << name << ": some reports failed, see summary.json\n";
            return result.exit_code;
        } catch (const TransportError &e) {
            err << "synthpii " << name << ": " << e.what() << '\n';
            return kExitTransport;
        } catch (const ConfigError &e) {
            err << "synthpii " << name << ": " << e.what() << '\n';
            return kExitInvalid;
        } catch (const ParseError &e) {
            err << "synthpii " << name << ": " << e.what() << '\n';
            return kExitInvalid;
        } catch (const DataError &e) {
            err << "synthpii " << name << ": " << e.what() << '\n';
            return kExitInvalid;
        } catch (const std::exception &e) {
            err << "synthpii " << name << ": " << e.what() << '\n';
            return kExitFailure;
        }
    }
    return kExitInvalid;
}

} // namespace synthpii::cli
