#include "synthpii/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <initializer_list>
#include <set>

#include "synthpii/error.hpp"

namespace synthpii::cli {

namespace fs = std::filesystem;

Environment Environment::from_process() {
    Environment env;
    for (const char *name : {"DF_ENDPOINT", "DF_API_KEY", "DF_SEARCH_KEY", "DF_PARALLELISM"})
        if (const char *value = std::getenv(name))
            env.vars[name] = value;
    return env;
}

std::optional<std::string> Environment::get(const std::string &name) const {
    if (const auto it = vars.find(name); it != vars.end() && !it->second.empty())
        return it->second;
    return std::nullopt;
}

namespace {

void check_keys(const io::Json &section, std::string_view where,
                std::initializer_list<std::string_view> known) {
    if (!section.is_object())
        throw ConfigError("config: '" + std::string(where) + "' must be an object");
    for (const auto &[key, value] : section.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("config: unknown key '" + key + "' in '" + std::string(where) + "'");
}

const io::Json &section(const io::Json &doc, const char *name) {
    static const io::Json empty = io::Json::object();
    const auto it = doc.find(name);
    return it == doc.end() ? empty : *it;
}

void read_path(const io::Json &paths, const char *key, const fs::path &base, fs::path &target) {
    if (const auto it = paths.find(key); it != paths.end()) {
        const fs::path p(it->get<std::string>());
        target = p.is_absolute() || p.empty() ? p : (base / p).lexically_normal();
    }
}

std::string path_string(const fs::path &p) { return p.generic_string(); }

} // namespace

RunConfig RunConfig::from_json(const io::Json &doc, const fs::path &base_dir) {
    RunConfig c;
    check_keys(doc, "config",
               {"paths", "filter", "generation", "metrics", "unlinkability", "annotation",
                "mleval", "survey", "seeds", "jobs"});
    try {
        const auto &paths = section(doc, "paths");
        check_keys(paths, "paths",
                   {"input", "blocklist", "annotations", "annotations_a", "annotations_b",
                    "original", "synthetic", "original_annotations", "synthetic_annotations",
                    "multilabel_predictions", "token_predictions", "gold_spans", "pred_spans",
                    "survey", "prompt_plan", "mock_dir", "output_dir"});
        read_path(paths, "input", base_dir, c.paths.input);
        read_path(paths, "blocklist", base_dir, c.paths.blocklist);
        read_path(paths, "annotations", base_dir, c.paths.annotations);
        read_path(paths, "annotations_a", base_dir, c.paths.annotations_a);
        read_path(paths, "annotations_b", base_dir, c.paths.annotations_b);
        read_path(paths, "original", base_dir, c.paths.original);
        read_path(paths, "synthetic", base_dir, c.paths.synthetic);
        read_path(paths, "original_annotations", base_dir, c.paths.original_annotations);
        read_path(paths, "synthetic_annotations", base_dir, c.paths.synthetic_annotations);
        read_path(paths, "multilabel_predictions", base_dir, c.paths.multilabel_predictions);
        read_path(paths, "token_predictions", base_dir, c.paths.token_predictions);
        read_path(paths, "gold_spans", base_dir, c.paths.gold_spans);
        read_path(paths, "pred_spans", base_dir, c.paths.pred_spans);
        read_path(paths, "survey", base_dir, c.paths.survey);
        read_path(paths, "prompt_plan", base_dir, c.paths.prompt_plan);
        read_path(paths, "mock_dir", base_dir, c.paths.mock_dir);
        read_path(paths, "output_dir", base_dir, c.paths.output_dir);

        const auto &filter = section(doc, "filter");
        check_keys(filter, "filter",
                   {"nsfw_subreddits", "pronoun_lexicon", "min_words", "sample_fraction"});
        if (const auto it = filter.find("nsfw_subreddits"); it != filter.end())
            c.filter.nsfw_subreddits = it->get<std::set<std::string>>();
        c.filter.pronoun_lexicon = filter.value("pronoun_lexicon", c.filter.pronoun_lexicon);
        c.filter.min_words = filter.value("min_words", c.filter.min_words);
        c.filter.sample_fraction = filter.value("sample_fraction", c.filter.sample_fraction);

        auto generation = section(doc, "generation");
        check_keys(generation, "generation",
                   {"profile", "endpoint", "model", "temperature", "top_p", "max_tokens",
                    "max_rounds", "refusal_patterns", "fallback_whole_response",
                    "augment_subreddit", "calibration"});
        c.augment_subreddit = generation.value("augment_subreddit", c.augment_subreddit);
        if (const auto it = generation.find("calibration"); it != generation.end()) {
            check_keys(*it, "generation.calibration", {"samples", "metric", "grid"});
            c.calibration.samples = it->value("samples", c.calibration.samples);
            c.calibration.metric = it->value("metric", c.calibration.metric);
            c.calibration.grid = it->value("grid", c.calibration.grid);
        }
        generation.erase("augment_subreddit");
        generation.erase("calibration");
        c.generation = generation::GenerationConfig::from_json(generation);

        const auto &metrics = section(doc, "metrics");
        check_keys(metrics, "metrics", {"embeddings", "embedding_dimension"});
        c.metrics.embeddings = metrics.value("embeddings", c.metrics.embeddings);
        c.metrics.embedding_dimension =
            metrics.value("embedding_dimension", c.metrics.embedding_dimension);

        const auto &unlink = section(doc, "unlinkability");
        check_keys(unlink, "unlinkability",
                   {"k", "threshold", "max_query_chars", "hosts", "search_endpoint",
                    "fetch_interval_ms"});
        c.unlink.k = unlink.value("k", c.unlink.k);
        c.unlink.threshold = unlink.value("threshold", c.unlink.threshold);
        c.unlink.max_query_chars = unlink.value("max_query_chars", c.unlink.max_query_chars);
        c.unlink.hosts = unlink.value("hosts", c.unlink.hosts);
        c.search_endpoint = unlink.value("search_endpoint", c.search_endpoint);
        c.fetch_interval =
            std::chrono::milliseconds(unlink.value("fetch_interval_ms", c.fetch_interval.count()));

        const auto &ann = section(doc, "annotation");
        check_keys(ann, "annotation", {"schema"});
        c.annotation_schema = ann.value("schema", c.annotation_schema);

        const auto &ml = section(doc, "mleval");
        check_keys(ml, "mleval", {"min_overlap", "overlap_basis", "averaging"});
        c.min_overlap = ml.value("min_overlap", c.min_overlap);
        c.overlap_basis = ml.value("overlap_basis", c.overlap_basis);
        c.averaging = ml.value("averaging", c.averaging);

        const auto &survey = section(doc, "survey");
        check_keys(survey, "survey", {"expected"});
        c.survey_expected = survey.value("expected", c.survey_expected);

        const auto &seeds = section(doc, "seeds");
        check_keys(seeds, "seeds", {"sample", "calibration", "embedding"});
        c.filter.sample_seed = seeds.value("sample", c.filter.sample_seed);
        c.calibration.seed = seeds.value("calibration", c.calibration.seed);
        c.metrics.embedding_seed = seeds.value("embedding", c.metrics.embedding_seed);

        c.jobs = doc.value("jobs", c.jobs);
    } catch (const io::Json::exception &e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

RunConfig RunConfig::load(const fs::path &path) {
    if (!fs::is_regular_file(path))
        throw ConfigError("config file not found: " + path.string());
    io::Json doc;
    try {
        doc = io::Json::parse(io::read_file(path));
    } catch (const io::Json::parse_error &e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(doc, fs::absolute(path).parent_path());
}

void RunConfig::apply_environment(const Environment &env) {
    if (auto v = env.get("DF_ENDPOINT"))
        generation.endpoint = *v;
    if (auto v = env.get("DF_API_KEY"))
        api_key = *v;
    if (auto v = env.get("DF_SEARCH_KEY"))
        search_key = *v;
    if (auto v = env.get("DF_PARALLELISM")) {
        try {
            std::size_t used = 0;
            const long n = std::stol(*v, &used);
            if (used != v->size() || n < 1)
                throw std::invalid_argument("range");
            jobs = static_cast<std::size_t>(n);
        } catch (const std::exception &) {
            throw ConfigError("DF_PARALLELISM must be a positive integer, got '" + *v + "'");
        }
    }
}

void RunConfig::validate() const {
    filter.validate();
    generation.validate();
    unlink.validate();
    if (jobs < 1)
        throw ConfigError("jobs must be at least 1");
    if (calibration.samples < 1)
        throw ConfigError("calibration samples must be at least 1");
    if (calibration.grid.empty())
        throw ConfigError("calibration grid must not be empty");
    static const std::set<std::string> similarity_metrics{"cosine", "bleu3", "meteor", "rouge_l"};
    if (!similarity_metrics.count(calibration.metric))
        throw ConfigError("unknown calibration metric '" + calibration.metric + "'");
    static const std::set<std::string> schemas{"auto", "doccano", "native"};
    if (!schemas.count(annotation_schema))
        throw ConfigError("unknown annotation schema '" + annotation_schema + "'");
    static const std::set<std::string> averagings{"micro", "macro", "samples"};
    if (!averagings.count(averaging))
        throw ConfigError("unknown averaging '" + averaging + "'");
    if (overlap_basis != "gold" && overlap_basis != "union")
        throw ConfigError("unknown overlap basis '" + overlap_basis + "'");
    if (!(min_overlap > 0.0 && min_overlap <= 1.0))
        throw ConfigError("min_overlap must lie in (0, 1]");
    if (metrics.embedding_dimension < 1)
        throw ConfigError("embedding_dimension must be positive");
}

io::Json RunConfig::snapshot() const {
    io::Json gen = generation.to_json();
    gen["augment_subreddit"] = augment_subreddit;
    gen["calibration"] = {{"samples", calibration.samples},
                          {"metric", calibration.metric},
                          {"grid", calibration.grid}};
    return {
        {"paths",
         {{"input", path_string(paths.input)},
          {"blocklist", path_string(paths.blocklist)},
          {"annotations", path_string(paths.annotations)},
          {"annotations_a", path_string(paths.annotations_a)},
          {"annotations_b", path_string(paths.annotations_b)},
          {"original", path_string(paths.original)},
          {"synthetic", path_string(paths.synthetic)},
          {"original_annotations", path_string(paths.original_annotations)},
          {"synthetic_annotations", path_string(paths.synthetic_annotations)},
          {"multilabel_predictions", path_string(paths.multilabel_predictions)},
          {"token_predictions", path_string(paths.token_predictions)},
          {"gold_spans", path_string(paths.gold_spans)},
          {"pred_spans", path_string(paths.pred_spans)},
          {"survey", path_string(paths.survey)},
          {"prompt_plan", path_string(paths.prompt_plan)},
          {"mock_dir", path_string(paths.mock_dir)},
          {"output_dir", path_string(paths.output_dir)}}},
        {"filter",
         {{"nsfw_subreddits", filter.nsfw_subreddits},
          {"pronoun_lexicon", filter.pronoun_lexicon},
          {"min_words", filter.min_words},
          {"sample_fraction", filter.sample_fraction}}},
        {"generation", std::move(gen)},
        {"metrics",
         {{"embeddings", metrics.embeddings}, {"embedding_dimension", metrics.embedding_dimension}}},
        {"unlinkability",
         {{"k", unlink.k},
          {"threshold", unlink.threshold},
          {"max_query_chars", unlink.max_query_chars},
          {"hosts", unlink.hosts},
          {"search_endpoint", search_endpoint},
          {"fetch_interval_ms", fetch_interval.count()}}},
        {"annotation", {{"schema", annotation_schema}}},
        {"mleval",
         {{"min_overlap", min_overlap}, {"overlap_basis", overlap_basis}, {"averaging", averaging}}},
        {"survey", {{"expected", survey_expected}}},
        {"seeds",
         {{"sample", filter.sample_seed},
          {"calibration", calibration.seed},
          {"embedding", metrics.embedding_seed}}},
        {"jobs", jobs},
    };
}

} // namespace synthpii::cli
