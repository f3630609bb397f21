#include "commands.hpp"

#include <fstream>
#include <map>
#include <memory>
#include <optional>

#include "synthpii/annotation.hpp"
#include "synthpii/corpus.hpp"
#include "synthpii/error.hpp"
#include "synthpii/generation.hpp"
#include "synthpii/http_clients.hpp"
#include "synthpii/mleval.hpp"
#include "synthpii/privacy_eval.hpp"
#include "synthpii/records.hpp"
#include "synthpii/textmetrics.hpp"

namespace synthpii::cli {

namespace fs = std::filesystem;

namespace {

void require_input(const fs::path &path, std::string_view what) {
    if (path.empty())
        throw ConfigError("no " + std::string(what) + " given");
    if (!fs::is_regular_file(path))
        throw ConfigError(std::string(what) + " not found: " + path.string());
}

fs::path out_path(const RunConfig &config, const std::string &name) {
    return config.paths.output_dir / name;
}

annotation::Corpus load_annotations(const fs::path &path, const std::string &schema) {
    if (schema == "doccano")
        return annotation::import_annotations(path, annotation::Schema::Doccano);
    if (schema == "native")
        return annotation::import_annotations(path, annotation::Schema::Native);
    auto detected = annotation::Schema::Doccano;
    bool decided = false;
    io::for_each_line(path, [&](std::size_t line_no, std::string_view line) {
        if (decided)
            return;
        decided = true;
        try {
            if (io::Json::parse(line).contains("spans"))
                detected = annotation::Schema::Native;
        } catch (const io::Json::parse_error &e) {
            throw ParseError(path.string(), line_no, e.what());
        }
    });
    return annotation::import_annotations(path, detected);
}

/// Native files (our own outputs) are read without guessing.
annotation::Corpus load_native(const fs::path &path) {
    return annotation::import_annotations(path, annotation::Schema::Native);
}

std::unique_ptr<generation::ChatClient> make_chat_client(const RunConfig &config) {
    if (!config.paths.mock_dir.empty()) {
        const auto fixture = config.paths.mock_dir / "chat.json";
        require_input(fixture, "chat mock fixture");
        return generation::ScriptedChatClient::load(fixture, config.jobs);
    }
    if (config.generation.endpoint.empty())
        throw ConfigError("no chat endpoint: set generation.endpoint, DF_ENDPOINT or --mock");
    http::HttpOptions options;
    options.api_key = config.api_key;
    options.parallelism = config.jobs;
    return std::make_unique<http::HttpChatClient>(config.generation.endpoint, options);
}

generation::PromptPlan load_plan(const RunConfig &config) {
    if (config.paths.prompt_plan.empty())
        return generation::PromptPlan::default_plan();
    require_input(config.paths.prompt_plan, "prompt plan");
    return generation::PromptPlan::load(config.paths.prompt_plan);
}

std::vector<TextItem> generation_inputs(const RunConfig &config) {
    require_input(config.paths.input, "input corpus");
    const auto posts = corpus::load_posts(config.paths.input).posts;
    std::vector<TextItem> items;
    items.reserve(posts.size());
    for (const auto &p : posts)
        items.push_back({p.id,
                         config.augment_subreddit && !p.subreddit.empty()
                             ? corpus::augment_with_subreddit(p)
                             : p.text,
                         p.id});
    return items;
}

generation::SimilarityFn similarity_fn(const std::string &metric) {
    using namespace textmetrics;
    if (metric == "bleu3")
        return [](std::string_view a, std::string_view b) { return bleu(b, a); };
    if (metric == "meteor")
        return [](std::string_view a, std::string_view b) { return meteor(b, a); };
    if (metric == "rouge_l")
        return [](std::string_view a, std::string_view b) { return rouge_l(b, a); };
    return [](std::string_view a, std::string_view b) { return cosine_tf(b, a); };
}

generation::CalibrationReport run_calibration(const RunConfig &config,
                                              std::span<const TextItem> items,
                                              const generation::PromptPlan &plan,
                                              generation::ChatClient &client) {
    std::vector<TextItem> sample;
    for (std::size_t i :
         corpus::selection_sample(items.size(), config.calibration.samples, config.calibration.seed))
        sample.push_back(items[i]);
    return generation::calibrate_temperature(sample, config.calibration.grid, plan,
                                             config.generation, client,
                                             similarity_fn(config.calibration.metric), config.jobs);
}

std::unique_ptr<textmetrics::EmbeddingProvider> make_embeddings(const RunConfig &config) {
    const auto &kind = config.metrics.embeddings;
    if (kind.empty())
        return nullptr;
    if (kind == "hash")
        return std::make_unique<textmetrics::HashEmbeddingProvider>(
            config.metrics.embedding_dimension, config.metrics.embedding_seed);
    http::HttpOptions options;
    options.api_key = config.api_key;
    options.parallelism = config.jobs;
    return std::make_unique<http::HttpEmbeddingProvider>(kind, config.metrics.embedding_dimension,
                                                         options);
}

/// Running means that skip missing values.
class MeanTable {
  public:
    void add(const std::string &key, std::optional<double> value) {
        auto &[sum, n] = cells_[index(key)].second;
        if (value) {
            sum += *value;
            ++n;
        }
    }

    io::Json to_json() const {
        io::Json out = io::Json::object();
        for (const auto &[key, cell] : cells_)
            out[key] = cell.second == 0 ? io::Json(nullptr)
                                        : io::Json(cell.first / static_cast<double>(cell.second));
        return out;
    }

  private:
    std::size_t index(const std::string &key) {
        for (std::size_t i = 0; i < cells_.size(); ++i)
            if (cells_[i].first == key)
                return i;
        cells_.push_back({key, {0.0, 0}});
        return cells_.size() - 1;
    }

    std::vector<std::pair<std::string, std::pair<double, std::size_t>>> cells_;
};

std::optional<double> json_number(const io::Json &row, const char *key) {
    const auto it = row.find(key);
    if (it == row.end() || it->is_null())
        return std::nullopt;
    return it->get<double>();
}

/// Search and page mocks from a fixture directory. `search.json` with
/// `"mode": "self_match"` makes every synthetic post find a Reddit page
/// holding its own text.
struct UnlinkBackends {
    std::unique_ptr<privacy::SearchClient> search;
    std::unique_ptr<privacy::PageFetcher> fetcher;
};

UnlinkBackends make_unlink_backends(const RunConfig &config, std::span<const TextItem> corpus) {
    UnlinkBackends b;
    if (!config.paths.mock_dir.empty()) {
        const auto search_fixture = config.paths.mock_dir / "search.json";
        require_input(search_fixture, "search mock fixture");
        io::Json doc;
        try {
            doc = io::Json::parse(io::read_file(search_fixture));
        } catch (const io::Json::parse_error &e) {
            throw ConfigError(search_fixture.string() + ": " + e.what());
        }
        if (doc.is_object() && doc.value("mode", std::string()) == "self_match") {
            auto search = std::make_unique<privacy::InMemorySearchClient>();
            auto fetcher = std::make_unique<privacy::InMemoryPageFetcher>();
            for (const auto &item : corpus) {
                const std::string url = "https://www.reddit.com/r/mock/comments/" + item.id + "/";
                search->add(privacy::build_query(item.text, config.unlink.max_query_chars),
                            {{1, url, ""}});
                fetcher->add(url, item.text);
            }
            b.search = std::move(search);
            b.fetcher = std::move(fetcher);
            return b;
        }
        b.search = privacy::InMemorySearchClient::from_json(doc);
        const auto pages = config.paths.mock_dir / "pages.json";
        b.fetcher = fs::is_regular_file(pages) ? privacy::InMemoryPageFetcher::load(pages)
                                               : std::make_unique<privacy::InMemoryPageFetcher>();
        return b;
    }
    if (config.search_endpoint.empty())
        throw ConfigError("no search endpoint: set unlinkability.search_endpoint or --mock");
    http::HttpOptions search_options;
    search_options.api_key = config.search_key;
    search_options.parallelism = config.jobs;
    b.search = std::make_unique<http::HttpSearchClient>(config.search_endpoint, search_options);
    http::HttpOptions fetch_options;
    fetch_options.min_interval = config.fetch_interval;
    fetch_options.parallelism = config.jobs;
    b.fetcher = std::make_unique<http::HttpPageFetcher>(fetch_options);
    return b;
}

mleval::Averaging parse_averaging(const std::string &name) {
    if (name == "macro")
        return mleval::Averaging::Macro;
    if (name == "samples")
        return mleval::Averaging::Samples;
    return mleval::Averaging::Micro;
}

} // namespace

void write_snapshot(const RunConfig &config, const std::string &command) {
    io::Json doc{{"command", command}};
    const auto snapshot = config.snapshot();
    for (const auto &[key, value] : snapshot.items())
        doc[key] = value;
    io::write_json(out_path(config, "run_config.json"), doc);
}

StageResult stage_filter(const RunConfig &config) {
    require_input(config.paths.input, "input corpus");
    auto filter = config.filter;
    if (!config.paths.blocklist.empty()) {
        require_input(config.paths.blocklist, "blocklist");
        for (auto &name : corpus::load_blocklist(config.paths.blocklist))
            filter.nsfw_subreddits.insert(name);
    }
    filter.validate();
    const auto loaded = corpus::load_posts(config.paths.input);
    const auto [kept, ledger] = corpus::run_filter_pipeline(loaded.posts, filter);
    corpus::save_posts(out_path(config, "filtered.jsonl"), kept);
    io::write_json(out_path(config, "ledger.json"), ledger.to_json());
    StageResult r;
    r.outputs = {"filtered.jsonl", "ledger.json"};
    r.summary = {{"input_rows", loaded.posts.size()}, {"output_rows", kept.size()}};
    return r;
}

StageResult stage_import_annotations(const RunConfig &config) {
    require_input(config.paths.annotations, "annotation export");
    const auto corpus = load_annotations(config.paths.annotations, config.annotation_schema);
    annotation::export_native(out_path(config, "annotations.jsonl"), corpus);
    const auto stats = annotation::category_stats(corpus);
    io::Json rows = io::Json::array();
    std::size_t total = 0;
    for (auto c : annotation::kAllCategories) {
        const auto &s = stats[annotation::index_of(c)];
        total += s.span_count;
        rows.push_back({{"category", annotation::to_string(c)},
                        {"span_count", s.span_count},
                        {"mean_span_length", s.mean_span_length ? io::Json(*s.mean_span_length)
                                                                : io::Json(nullptr)}});
    }
    io::write_json(out_path(config, "category_stats.json"),
                   {{"posts", corpus.size()}, {"spans", total}, {"categories", rows}});
    StageResult r;
    r.outputs = {"annotations.jsonl", "category_stats.json"};
    r.summary = {{"posts", corpus.size()}, {"spans", total}};
    return r;
}

StageResult stage_iaa(const RunConfig &config) {
    require_input(config.paths.annotations_a, "first annotator file");
    require_input(config.paths.annotations_b, "second annotator file");
    const auto a = load_annotations(config.paths.annotations_a, config.annotation_schema);
    const auto b = load_annotations(config.paths.annotations_b, config.annotation_schema);
    const auto report = annotation::pairwise_f1(a, b);
    io::write_json(out_path(config, "iaa.json"), report.to_json());
    StageResult r;
    r.outputs = {"iaa.json"};
    r.summary = report.to_json();
    return r;
}

StageResult stage_generate(const RunConfig &config, bool calibrate) {
    const auto items = generation_inputs(config);
    const auto plan = load_plan(config);
    auto client = make_chat_client(config);
    auto gen_config = config.generation;
    StageResult r;
    if (calibrate) {
        const auto report = run_calibration(config, items, plan, *client);
        io::write_json(out_path(config, "calibration.json"), report.to_json());
        r.outputs.push_back("calibration.json");
        gen_config.temperature = report.chosen_temperature;
        r.summary["chosen_temperature"] = report.chosen_temperature;
    }
    const auto result = generation::generate_corpus(items, plan, gen_config, *client, config.jobs);
    std::vector<io::Json> rows;
    rows.reserve(result.traces.size());
    for (const auto &t : result.traces)
        rows.push_back(t.to_json());
    io::write_jsonl(out_path(config, "traces.jsonl"), rows);
    save_text_items(out_path(config, "synthetic.jsonl"), result.synthetic_items());
    io::write_json(out_path(config, "generation_report.json"), result.report.to_json());
    r.outputs.insert(r.outputs.end(), {"traces.jsonl", "synthetic.jsonl", "generation_report.json"});
    r.summary["generation"] = result.report.to_json();
    if (result.report.transport_failures > 0)
        r.exit_code = kExitTransport;
    return r;
}

StageResult stage_calibrate(const RunConfig &config) {
    const auto items = generation_inputs(config);
    const auto plan = load_plan(config);
    auto client = make_chat_client(config);
    const auto report = run_calibration(config, items, plan, *client);
    io::write_json(out_path(config, "calibration.json"), report.to_json());
    StageResult r;
    r.outputs = {"calibration.json"};
    r.summary = report.to_json();
    return r;
}

StageResult stage_metrics(const RunConfig &config) {
    require_input(config.paths.original, "original texts");
    require_input(config.paths.synthetic, "synthetic texts");
    const auto originals = load_text_items(config.paths.original);
    const auto synthetic = load_text_items(config.paths.synthetic);
    std::map<std::string, const TextItem *, std::less<>> by_id;
    for (const auto &o : originals)
        by_id.emplace(o.id, &o);
    auto embeddings = make_embeddings(config);

    std::vector<io::Json> rows(synthetic.size());
    std::vector<const TextItem *> sources(synthetic.size());
    for (std::size_t i = 0; i < synthetic.size(); ++i) {
        const auto &s = synthetic[i];
        const auto &key = s.source_id.empty() ? s.id : s.source_id;
        const auto it = by_id.find(key);
        if (it == by_id.end())
            throw DataError("synthetic post '" + s.id + "' has no original '" + key + "'");
        sources[i] = it->second;
    }
    generation::parallel_for(synthetic.size(), embeddings ? 1 : config.jobs, [&](std::size_t i) {
        const auto &s = synthetic[i];
        const auto &src = *sources[i];
        auto row = textmetrics::pair_report(s.text, src.text).to_json(s.id);
        row["source_id"] = src.id;
        if (embeddings) {
            try {
                row["bertscore_f1"] = textmetrics::bert_score(embeddings->token_vectors(s.text),
                                                              embeddings->token_vectors(src.text))
                                          .f1;
                row["style_similarity"] = textmetrics::style_similarity(
                    embeddings->pooled_vector(s.text), embeddings->pooled_vector(src.text));
            } catch (const DataError &) {
                row["bertscore_f1"] = nullptr;
                row["style_similarity"] = nullptr;
            }
        }
        rows[i] = std::move(row);
    });

    MeanTable means;
    for (const auto &row : rows)
        for (const char *key : {"bleu3", "rouge_l", "meteor", "cosine", "divergence",
                                "bertscore_f1", "style_similarity"})
            if (row.contains(key))
                means.add(key, json_number(row, key));
    io::write_jsonl(out_path(config, "similarity.jsonl"), rows);
    const io::Json summary{{"pairs", rows.size()}, {"mean", means.to_json()}};
    io::write_json(out_path(config, "similarity_summary.json"), summary);
    StageResult r;
    r.outputs = {"similarity.jsonl", "similarity_summary.json"};
    r.summary = summary;
    return r;
}

StageResult stage_unlink(const RunConfig &config) {
    require_input(config.paths.synthetic, "synthetic texts");
    const auto corpus = load_text_items(config.paths.synthetic);
    auto backends = make_unlink_backends(config, corpus);
    const auto records =
        privacy::unlink_corpus(corpus, *backends.search, *backends.fetcher, config.unlink, config.jobs);
    const auto thresholded = privacy::apply_threshold(corpus, records);

    std::vector<io::Json> rows;
    MeanTable means;
    for (const auto &rec : records) {
        rows.push_back(rec.to_json());
        means.add("max_bleu3", rec.max_bleu3);
        means.add("max_meteor", rec.max_meteor);
        means.add("max_rouge_l", rec.max_rouge_l);
        means.add("max_cosine", rec.max_cosine);
    }
    io::write_jsonl(out_path(config, "unlink_records.jsonl"), rows);
    save_text_items(out_path(config, "unlinkable.jsonl"), thresholded.kept);
    io::Json summary = thresholded.accounting.to_json();
    summary["threshold"] = config.unlink.threshold;
    summary["k"] = config.unlink.k;
    summary["mean"] = means.to_json();
    io::write_json(out_path(config, "threshold.json"), summary);
    StageResult r;
    r.outputs = {"unlink_records.jsonl", "unlinkable.jsonl", "threshold.json"};
    r.summary = summary;
    if (thresholded.accounting.unqueried > 0)
        r.exit_code = kExitTransport;
    return r;
}

StageResult stage_survey(const RunConfig &config) {
    require_input(config.paths.survey, "survey responses");
    const auto responses = privacy::load_survey_csv(config.paths.survey);
    const auto tally = privacy::tally_survey(responses, config.survey_expected);
    const auto chi = privacy::chi_square_gof(tally);
    const io::Json doc{{"tally", tally.to_json()}, {"chi_square", chi.to_json()}};
    io::write_json(out_path(config, "survey.json"), doc);
    StageResult r;
    r.outputs = {"survey.json"};
    r.summary = doc;
    return r;
}

StageResult stage_eval_classifier(const RunConfig &config) {
    const auto &p = config.paths;
    const bool spans = !p.gold_spans.empty() || !p.pred_spans.empty();
    if (p.multilabel_predictions.empty() && p.token_predictions.empty() && !spans)
        throw ConfigError("no prediction files given");
    io::Json doc = io::Json::object();
    if (!p.multilabel_predictions.empty()) {
        require_input(p.multilabel_predictions, "multilabel predictions");
        const auto examples = mleval::load_multilabel(p.multilabel_predictions);
        doc["multilabel"] =
            mleval::multilabel_metrics(examples, parse_averaging(config.averaging)).to_json();
    }
    if (!p.token_predictions.empty()) {
        require_input(p.token_predictions, "token predictions");
        doc["token"] = mleval::token_macro_f1(mleval::load_token_predictions(p.token_predictions))
                           .to_json();
    }
    if (spans) {
        require_input(p.gold_spans, "gold spans");
        require_input(p.pred_spans, "predicted spans");
        const auto basis = config.overlap_basis == "union" ? mleval::OverlapBasis::Union
                                                           : mleval::OverlapBasis::Gold;
        auto span = mleval::span_f1_partial(load_native(p.gold_spans), load_native(p.pred_spans),
                                            config.min_overlap, basis)
                        .to_json();
        span["min_overlap"] = config.min_overlap;
        span["overlap_basis"] = config.overlap_basis;
        doc["span"] = std::move(span);
    }
    io::write_json(out_path(config, "classifier_eval.json"), doc);
    StageResult r;
    r.outputs = {"classifier_eval.json"};
    r.summary = doc;
    return r;
}

StageResult stage_proportions(const RunConfig &config) {
    require_input(config.paths.original_annotations, "original annotations");
    require_input(config.paths.synthetic_annotations, "synthetic annotations");
    const auto cmp = mleval::proportion_comparison(load_native(config.paths.original_annotations),
                                                   load_native(config.paths.synthetic_annotations));
    io::write_file(out_path(config, "proportions.csv"), cmp.to_csv());
    io::write_json(out_path(config, "proportions.json"), cmp.to_json());
    StageResult r;
    r.outputs = {"proportions.csv", "proportions.json"};
    r.summary = {{"max_abs_deviation", cmp.max_abs_deviation}};
    return r;
}

StageResult stage_report(const RunConfig &config) {
    const auto &p = config.paths;
    struct Entry {
        const char *name;
        bool wanted;
        StageResult (*run)(const RunConfig &);
    };
    const bool have_search = !p.mock_dir.empty() || !config.search_endpoint.empty();
    const Entry entries[] = {
        {"similarity", !p.original.empty() && !p.synthetic.empty(), &stage_metrics},
        {"unlinkability", !p.synthetic.empty() && have_search, &stage_unlink},
        {"iaa", !p.annotations_a.empty() && !p.annotations_b.empty(), &stage_iaa},
        {"proportions", !p.original_annotations.empty() && !p.synthetic_annotations.empty(),
         &stage_proportions},
        {"survey", !p.survey.empty(), &stage_survey},
        {"classifier",
         !p.multilabel_predictions.empty() || !p.token_predictions.empty() ||
             !p.gold_spans.empty() || !p.pred_spans.empty(),
         &stage_eval_classifier},
    };

    io::Json reports = io::Json::object();
    io::Json results = io::Json::object();
    std::size_t ran = 0, failed = 0;
    StageResult r;
    for (const auto &e : entries) {
        if (!e.wanted) {
            reports[e.name] = {{"status", "skipped"}};
            continue;
        }
        ++ran;
        try {
            auto stage = e.run(config);
            reports[e.name] = {{"status", "ok"}, {"outputs", stage.outputs}};
            results[e.name] = std::move(stage.summary);
            r.outputs.insert(r.outputs.end(), stage.outputs.begin(), stage.outputs.end());
        } catch (const std::exception &ex) {
            ++failed;
            reports[e.name] = {{"status", "failed"}, {"error", ex.what()}};
        }
    }
    if (ran == 0)
        throw ConfigError("report: no evaluation inputs configured");
    r.summary = {{"reports", reports}, {"results", results}};
    io::write_json(out_path(config, "summary.json"), r.summary);
    r.outputs.push_back("summary.json");
    if (failed > 0)
        r.exit_code = kExitFailure;
    return r;
}

} // namespace synthpii::cli
