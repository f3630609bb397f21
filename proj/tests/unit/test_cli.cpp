#include <doctest.h>

#include <sstream>

#include "synthpii/cli.hpp"
#include "synthpii/jsonl.hpp"
#include "synthpii/records.hpp"
#include "temp_dir.hpp"

using namespace synthpii;
using synthpii::cli::Environment;
using testing::fixture;
using testing::TempDir;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

Outcome run_cli(std::vector<std::string> args, const Environment &env = {}) {
    args.insert(args.begin(), "synthpii");
    std::ostringstream out, err;
    Outcome o;
    o.code = cli::run(args, out, err, env);
    o.out = out.str();
    o.err = err.str();
    return o;
}

io::Json read_json(const std::filesystem::path &p) { return io::Json::parse(io::read_file(p)); }

std::string s(const std::filesystem::path &p) { return p.string(); }

std::vector<std::string> filter_args(const TempDir &dir) {
    return {"filter",
            "-i",
            s(fixture("filter/posts.jsonl")),
            "--blocklist",
            s(fixture("filter/blocklist.txt")),
            "--fraction",
            "0.5",
            "--seed",
            "7",
            "-o",
            s(dir.path())};
}

} // namespace

TEST_CASE("filter writes the ledger and a snapshot") {
    TempDir dir;
    const auto r = run_cli(filter_args(dir));
    INFO(r.err);
    REQUIRE(r.code == cli::kExitOk);
    CHECK(r.out.find("filter: wrote") != std::string::npos);

    const auto ledger = read_json(dir / "ledger.json");
    std::vector<std::size_t> rows;
    for (const auto &st : ledger["stages"])
        rows.push_back(st["rows"].get<std::size_t>());
    CHECK(rows == std::vector<std::size_t>{10, 8, 6, 4, 2});
    CHECK(ledger["sample_seed"] == 7);
    CHECK(load_text_items(dir / "filtered.jsonl").size() == 2);

    const auto snap = read_json(dir / "run_config.json");
    CHECK(snap["command"] == "filter");
    CHECK(std::filesystem::path(snap["paths"]["input"].get<std::string>()).is_absolute());
    CHECK(snap["seeds"]["sample"] == 7);
}

TEST_CASE("reruns are byte-identical") {
    TempDir a, b;
    REQUIRE(run_cli(filter_args(a)).code == 0);
    REQUIRE(run_cli(filter_args(b)).code == 0);
    CHECK(io::read_file(a / "filtered.jsonl") == io::read_file(b / "filtered.jsonl"));
    CHECK(io::read_file(a / "ledger.json") == io::read_file(b / "ledger.json"));
}

TEST_CASE("missing input is reported with exit code 2") {
    TempDir dir;
    const auto missing = dir / "nope.jsonl";
    const auto r = run_cli({"filter", "-i", s(missing), "-o", s(dir.path())});
    CHECK(r.code == cli::kExitInvalid);
    CHECK(r.err.find(missing.string()) != std::string::npos);
}

TEST_CASE("command-line parse errors exit 2") {
    CHECK(run_cli({}).code == cli::kExitInvalid);
    CHECK(run_cli({"filter", "--fraction", "abc"}).code == cli::kExitInvalid);
    CHECK(run_cli({"no-such-command"}).code == cli::kExitInvalid);
    CHECK(run_cli({"eval-classifier", "--average", "weighted"}).code == cli::kExitInvalid);
    CHECK(run_cli({"--help"}).code == cli::kExitOk);
}

TEST_CASE("invalid flag values exit 2") {
    TempDir dir;
    auto args = filter_args(dir);
    args[6] = "1.5";
    CHECK(run_cli(args).code == cli::kExitInvalid);
}

TEST_CASE("generate against the scripted mock") {
    TempDir dir;
    const auto r = run_cli({"generate", "-i", s(fixture("filter/posts.jsonl")), "--mock",
                            s(fixture("mock")), "-o", s(dir.path()), "-j", "4"});
    INFO(r.err);
    REQUIRE(r.code == cli::kExitOk);
    const auto report = read_json(dir / "generation_report.json");
    CHECK(report["attempted"] == 10);
    CHECK(report["succeeded"] == 9);
    CHECK(report["refused_final"] == 1);
    CHECK(report["transport_failures"] == 0);

    const auto synthetic = load_text_items(dir / "synthetic.jsonl");
    REQUIRE(synthetic.size() == 9);
    for (const auto &item : synthetic) {
        CHECK_FALSE(item.source_id.empty());
        CHECK(item.source_id != "p01");
    }
    CHECK(io::read_file(dir / "traces.jsonl").find("p01") != std::string::npos);

    TempDir again;
    REQUIRE(run_cli({"generate", "-i", s(fixture("filter/posts.jsonl")), "--mock",
                     s(fixture("mock")), "-o", s(again.path()), "-j", "1"})
                .code == 0);
    CHECK(io::read_file(dir / "synthetic.jsonl") == io::read_file(again / "synthetic.jsonl"));
}

TEST_CASE("generate with calibration writes the sweep") {
    TempDir dir;
    const auto r = run_cli({"generate", "--calibrate", "--samples", "4", "-i",
                            s(fixture("filter/posts.jsonl")), "--mock", s(fixture("mock")), "-o",
                            s(dir.path())});
    INFO(r.err);
    REQUIRE(r.code == cli::kExitOk);
    const auto cal = read_json(dir / "calibration.json");
    CHECK(cal["temperatures"].size() == 6);
    CHECK(cal["chosen_temperature"].is_number());
    CHECK(read_json(dir / "run_config.json")["generation"]["calibration"]["samples"] == 4);
}

TEST_CASE("generate without an endpoint or mock is a config error") {
    TempDir dir;
    const auto r = run_cli({"generate", "-i", s(fixture("filter/posts.jsonl")), "-o", s(dir.path())});
    CHECK(r.code == cli::kExitInvalid);
    CHECK(r.err.find("DF_ENDPOINT") != std::string::npos);
}

TEST_CASE("environment overrides and credentials stay out of the snapshot") {
    TempDir dir;
    Environment env;
    env.vars = {{"DF_PARALLELISM", "3"},
                {"DF_ENDPOINT", "http://127.0.0.1:9/v1/chat"},
                {"DF_API_KEY", "sk-very-secret"},
                {"DF_SEARCH_KEY", "search-secret"}};
    REQUIRE(run_cli(filter_args(dir), env).code == 0);
    const auto text = io::read_file(dir / "run_config.json");
    const auto snap = io::Json::parse(text);
    CHECK(snap["jobs"] == 3);
    CHECK(snap["generation"]["endpoint"] == "http://127.0.0.1:9/v1/chat");
    CHECK(text.find("sk-very-secret") == std::string::npos);
    CHECK(text.find("search-secret") == std::string::npos);

    TempDir flagged;
    auto args = filter_args(flagged);
    args.insert(args.end(), {"-j", "5"});
    REQUIRE(run_cli(args, env).code == 0);
    CHECK(read_json(flagged / "run_config.json")["jobs"] == 5);

    Environment bad;
    bad.vars = {{"DF_PARALLELISM", "zero"}};
    CHECK(run_cli(filter_args(dir), bad).code == cli::kExitInvalid);
}

TEST_CASE("config file values sit between defaults and flags") {
    TempDir dir;
    const auto cfg = dir.write("run.json", R"({"filter": {"sample_fraction": 0.25, "min_words": 3},
                                               "seeds": {"sample": 11}})");
    REQUIRE(run_cli({"filter", "-c", s(cfg), "-i", s(fixture("filter/posts.jsonl")), "--seed", "7",
                     "-o", s(dir / "out")})
                .code == 0);
    const auto snap = read_json(dir / "out" / "run_config.json");
    CHECK(snap["filter"]["sample_fraction"] == 0.25);
    CHECK(snap["filter"]["min_words"] == 3);
    CHECK(snap["seeds"]["sample"] == 7);

    const auto typo = dir.write("typo.json", R"({"filtr": {}})");
    CHECK(run_cli({"filter", "-c", s(typo), "-o", s(dir / "out2")}).code == cli::kExitInvalid);
}

TEST_CASE("report with the self-match mock discards everything") {
    TempDir dir;
    const auto items = std::vector<TextItem>{
        {"s1", "I moved to Denver last spring with my sister and our two cats.", "o1"},
        {"s2", "My husband and I just bought our first house near the lake.", "o2"},
        {"s3", "As a night nurse I rarely see daylight during the winter months.", "o3"}};
    std::vector<TextItem> originals;
    for (const auto &it : items)
        originals.push_back({it.source_id, it.text, ""});
    save_text_items(dir / "synthetic.jsonl", items);
    save_text_items(dir / "original.jsonl", originals);

    const auto cfg = dir.write("run.json", R"({"paths": {"original": "original.jsonl",
                                                         "synthetic": "synthetic.jsonl",
                                                         "survey": ")" +
                                                  fixture("survey/responses.csv").generic_string() +
                                                  R"("}})");
    const auto r = run_cli(
        {"report", "-c", s(cfg), "--mock", s(fixture("mock")), "-o", s(dir / "out")});
    INFO(r.err);
    REQUIRE(r.code == cli::kExitOk);

    const auto summary = read_json(dir / "out" / "summary.json");
    CHECK(summary["reports"]["similarity"]["status"] == "ok");
    CHECK(summary["reports"]["unlinkability"]["status"] == "ok");
    CHECK(summary["reports"]["survey"]["status"] == "ok");
    CHECK(summary["reports"]["iaa"]["status"] == "skipped");
    CHECK(summary["results"]["similarity"]["mean"]["divergence"].get<double>() ==
          doctest::Approx(0.0));
    CHECK(summary["results"]["similarity"]["mean"]["bleu3"].get<double>() == doctest::Approx(1.0));

    const auto threshold = summary["results"]["unlinkability"];
    CHECK(threshold["before"] == 3);
    CHECK(threshold["after"] == 0);
    CHECK(threshold["discarded"] == 3);
    CHECK(load_text_items(dir / "out" / "unlinkable.jsonl").empty());
    std::size_t rows = 0;
    io::for_each_line(dir / "out" / "unlink_records.jsonl", [&](std::size_t, std::string_view line) {
        ++rows;
        CHECK(io::Json::parse(line)["reddit_hits"] == 1);
    });
    CHECK(rows == 3);
}

TEST_CASE("report isolates failing stages and needs at least one input") {
    TempDir dir;
    const auto cfg = dir.write("run.json", R"({"paths": {"survey": "missing.csv",
                                                         "annotations_a": ")" +
                                                  fixture("annotations/doccano_a.jsonl").generic_string() +
                                                  R"(", "annotations_b": ")" +
                                                  fixture("annotations/doccano_b.jsonl").generic_string() +
                                                  R"("}})");
    const auto r = run_cli({"report", "-c", s(cfg), "-o", s(dir / "out")});
    CHECK(r.code == cli::kExitFailure);
    const auto summary = read_json(dir / "out" / "summary.json");
    CHECK(summary["reports"]["survey"]["status"] == "failed");
    CHECK(summary["reports"]["iaa"]["status"] == "ok");
    CHECK(summary["results"]["iaa"]["pairwise_f1"].get<double>() == doctest::Approx(0.75));

    CHECK(run_cli({"report", "-o", s(dir / "empty")}).code == cli::kExitInvalid);
}

TEST_CASE("survey command") {
    TempDir dir;
    REQUIRE(run_cli({"survey", "--responses", s(fixture("survey/responses.csv")), "-o",
                     s(dir.path())})
                .code == 0);
    const auto doc = read_json(dir / "survey.json");
    CHECK(doc["chi_square"]["statistic"].get<double>() == doctest::Approx(0.64));
    CHECK(doc["chi_square"]["degrees_of_freedom"] == 3);
}

TEST_CASE("annotation import and agreement") {
    TempDir dir;
    REQUIRE(run_cli({"import-annotations", "-i", s(fixture("annotations/doccano_a.jsonl")), "-o",
                     s(dir.path())})
                .code == 0);
    const auto stats = read_json(dir / "category_stats.json");
    CHECK(stats["posts"] == 3);
    CHECK(stats["spans"] == 4);

    // Our own native export reads back under auto-detection.
    TempDir iaa;
    REQUIRE(run_cli({"iaa", "--a", s(dir / "annotations.jsonl"), "--b",
                     s(fixture("annotations/doccano_b.jsonl")), "-o", s(iaa.path())})
                .code == 0);
    const auto report = read_json(iaa / "iaa.json");
    CHECK(report["pairwise_f1"].get<double>() == doctest::Approx(0.75));

    CHECK(run_cli({"iaa", "--a", s(fixture("annotations/doccano_a.jsonl")), "--b",
                   s(fixture("survey/responses.csv")), "-o", s(iaa.path())})
              .code == cli::kExitInvalid);
}

TEST_CASE("classifier evaluation and proportions") {
    TempDir dir;
    const auto r = run_cli({"eval-classifier", "--multilabel", s(fixture("predictions/multilabel.jsonl")),
                            "--tokens", s(fixture("predictions/tokens.jsonl")), "--gold-spans",
                            s(fixture("predictions/gold_spans.jsonl")), "--pred-spans",
                            s(fixture("predictions/pred_spans.jsonl")), "-o", s(dir.path())});
    INFO(r.err);
    REQUIRE(r.code == 0);
    const auto doc = read_json(dir / "classifier_eval.json");
    CHECK(doc["multilabel"]["f1"].get<double>() == doctest::Approx(0.5));
    CHECK(doc["token"]["macro_f1"].get<double>() == doctest::Approx(0.5));
    CHECK(doc["span"]["min_overlap"] == 0.5);
    CHECK(doc["span"]["overlap_basis"] == "gold");

    CHECK(run_cli({"eval-classifier", "--min-overlap", "0", "--multilabel",
                   s(fixture("predictions/multilabel.jsonl")), "-o", s(dir.path())})
              .code == cli::kExitInvalid);
    CHECK(run_cli({"eval-classifier", "-o", s(dir.path())}).code == cli::kExitInvalid);

    TempDir prop;
    REQUIRE(run_cli({"proportions", "--original", s(fixture("predictions/gold_spans.jsonl")),
                     "--synthetic", s(fixture("predictions/pred_spans.jsonl")), "-o", s(prop.path())})
                .code == 0);
    CHECK(io::read_file(prop / "proportions.csv").rfind("category,original,synthetic,residual\n", 0) == 0);
    CHECK(read_json(prop / "proportions.json").is_object());
}
