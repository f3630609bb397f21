#include "synthpii/mleval.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "synthpii/error.hpp"

namespace synthpii::mleval {

using annotation::index_of;

LabelSet label_set(std::span<const PiiCategory> categories) {
    LabelSet s;
    for (auto c : categories)
        s.set(index_of(c));
    return s;
}

std::vector<std::string> label_names(const LabelSet &labels) {
    std::vector<std::string> out;
    for (auto c : annotation::kAllCategories)
        if (labels.test(index_of(c)))
            out.emplace_back(annotation::to_string(c));
    return out;
}

namespace {

LabelSet parse_labels(const io::Json &list) {
    if (!list.is_array())
        throw DataError("label list must be an array");
    LabelSet s;
    for (const auto &v : list) {
        const auto name = v.get<std::string>();
        const auto cat = annotation::parse_category(name);
        if (!cat)
            throw DataError("unknown category '" + name + "'");
        s.set(index_of(*cat));
    }
    return s;
}

// 0/0 resolves to 1 when the other side of the confusion is empty too.
double ratio(std::size_t num, std::size_t den, bool vacuous) {
    if (den == 0)
        return vacuous ? 1.0 : 0.0;
    return static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

struct Confusion {
    std::size_t tp = 0, fp = 0, fn = 0;

    double precision() const { return ratio(tp, tp + fp, fn == 0); }
    double recall() const { return ratio(tp, tp + fn, fp == 0); }
    double f1() const { return harmonic(precision(), recall()); }
};

std::string id_of(const io::Json &row) {
    const auto &id = row.at("id");
    return id.is_number_integer() ? std::to_string(id.get<long long>()) : id.get<std::string>();
}

const char *averaging_name(Averaging a) {
    switch (a) {
    case Averaging::Micro: return "micro";
    case Averaging::Macro: return "macro";
    case Averaging::Samples: return "samples";
    }
    return "micro";
}

} // namespace

std::vector<MultilabelExample> load_multilabel(const std::filesystem::path &path) {
    std::vector<MultilabelExample> out;
    io::for_each_line(path, [&](std::size_t line_no, std::string_view line) {
        try {
            const auto row = io::Json::parse(line);
            out.push_back({id_of(row), parse_labels(row.at("gold")), parse_labels(row.at("pred"))});
        } catch (const std::exception &e) {
            throw ParseError(path.string(), line_no, e.what());
        }
    });
    return out;
}

io::Json MultilabelMetrics::to_json() const {
    return {{"averaging", averaging_name(averaging)},
            {"subset_accuracy", subset_accuracy},
            {"precision", precision},
            {"recall", recall},
            {"f1", f1}};
}

MultilabelMetrics multilabel_metrics(std::span<const MultilabelExample> examples,
                                     Averaging averaging) {
    if (examples.empty())
        throw DataError("multilabel_metrics needs at least one example");
    MultilabelMetrics m;
    m.averaging = averaging;

    std::size_t exact = 0;
    Confusion pooled;
    std::array<Confusion, kCategoryCount> per_category{};
    double p_sum = 0.0, r_sum = 0.0, f_sum = 0.0;
    for (const auto &ex : examples) {
        if (ex.gold == ex.pred)
            ++exact;
        Confusion local;
        local.tp = (ex.gold & ex.pred).count();
        local.fp = (ex.pred & ~ex.gold).count();
        local.fn = (ex.gold & ~ex.pred).count();
        pooled.tp += local.tp;
        pooled.fp += local.fp;
        pooled.fn += local.fn;
        p_sum += local.precision();
        r_sum += local.recall();
        f_sum += local.f1();
        for (std::size_t c = 0; c < kCategoryCount; ++c) {
            const bool g = ex.gold.test(c);
            const bool p = ex.pred.test(c);
            per_category[c].tp += g && p;
            per_category[c].fp += !g && p;
            per_category[c].fn += g && !p;
        }
    }
    const double n = static_cast<double>(examples.size());
    m.subset_accuracy = static_cast<double>(exact) / n;

    switch (averaging) {
    case Averaging::Micro:
        m.precision = pooled.precision();
        m.recall = pooled.recall();
        m.f1 = pooled.f1();
        break;
    case Averaging::Samples:
        m.precision = p_sum / n;
        m.recall = r_sum / n;
        m.f1 = f_sum / n;
        break;
    case Averaging::Macro: {
        std::size_t included = 0;
        for (const auto &c : per_category) {
            if (c.tp + c.fn == 0)
                continue;
            ++included;
            m.precision += c.precision();
            m.recall += c.recall();
            m.f1 += c.f1();
        }
        if (included == 0) {
            // No gold labels anywhere: perfect iff nothing was predicted either.
            const double v = pooled.fp == 0 ? 1.0 : 0.0;
            m.precision = m.recall = m.f1 = v;
        } else {
            m.precision /= static_cast<double>(included);
            m.recall /= static_cast<double>(included);
            m.f1 /= static_cast<double>(included);
        }
        break;
    }
    }
    return m;
}

std::vector<TokenPrediction> load_token_predictions(const std::filesystem::path &path) {
    std::vector<TokenPrediction> out;
    io::for_each_line(path, [&](std::size_t line_no, std::string_view line) {
        try {
            const auto row = io::Json::parse(line);
            TokenPrediction p;
            p.id = id_of(row);
            p.tokens = row.at("tokens").get<std::vector<std::string>>();
            for (const auto &labels : row.at("gold"))
                p.gold.push_back(parse_labels(labels));
            for (const auto &labels : row.at("pred"))
                p.pred.push_back(parse_labels(labels));
            out.push_back(std::move(p));
        } catch (const std::exception &e) {
            throw ParseError(path.string(), line_no, e.what());
        }
    });
    return out;
}

io::Json TokenMacroF1::to_json() const {
    io::Json per = io::Json::object();
    for (const auto &[cat, f1] : per_category)
        per[std::string(annotation::to_string(cat))] = f1;
    return {{"macro_f1", macro_f1}, {"per_category", std::move(per)}};
}

TokenMacroF1 token_macro_f1(std::span<const TokenPrediction> predictions) {
    std::array<Confusion, kCategoryCount> per_category{};
    for (const auto &p : predictions) {
        if (p.gold.size() != p.tokens.size() || p.pred.size() != p.tokens.size())
            throw DataError("token prediction '" + p.id + "': label lists do not match " +
                            std::to_string(p.tokens.size()) + " tokens");
        for (std::size_t t = 0; t < p.tokens.size(); ++t)
            for (std::size_t c = 0; c < kCategoryCount; ++c) {
                const bool g = p.gold[t].test(c);
                const bool q = p.pred[t].test(c);
                per_category[c].tp += g && q;
                per_category[c].fp += !g && q;
                per_category[c].fn += g && !q;
            }
    }
    TokenMacroF1 out;
    double sum = 0.0;
    for (std::size_t c = 0; c < kCategoryCount; ++c) {
        const auto &conf = per_category[c];
        if (conf.tp + conf.fn == 0)
            continue;
        const double f1 = conf.f1();
        out.per_category.emplace_back(annotation::kAllCategories[c], f1);
        sum += f1;
    }
    if (out.per_category.empty())
        throw DataError("token_macro_f1: no category has a gold-positive token");
    out.macro_f1 = sum / static_cast<double>(out.per_category.size());
    return out;
}

io::Json SpanF1::to_json() const {
    return {{"precision", precision},
            {"recall", recall},
            {"f1", f1},
            {"true_positives", true_positives},
            {"predicted", predicted},
            {"gold", gold}};
}

double gold_coverage(const PiiSpan &gold, const PiiSpan &pred) noexcept {
    if (gold.length() == 0)
        return 0.0;
    return static_cast<double>(annotation::intersection_length(gold, pred)) /
           static_cast<double>(gold.length());
}

double overlap_fraction(const PiiSpan &gold, const PiiSpan &pred, OverlapBasis basis) noexcept {
    if (basis == OverlapBasis::Gold)
        return gold_coverage(gold, pred);
    const auto u = annotation::union_length(gold, pred);
    return u == 0 ? 0.0
                  : static_cast<double>(annotation::intersection_length(gold, pred)) /
                        static_cast<double>(u);
}

std::size_t partial_span_matches(std::span<const PiiSpan> gold, std::span<const PiiSpan> pred,
                                 double min_overlap, OverlapBasis basis) {
    if (!(min_overlap > 0.0 && min_overlap <= 1.0))
        throw ConfigError("min_overlap must lie in (0, 1]");
    auto order = [](std::span<const PiiSpan> spans) {
        std::vector<std::size_t> idx(spans.size());
        for (std::size_t i = 0; i < idx.size(); ++i)
            idx[i] = i;
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return annotation::offset_less(spans[a], spans[b]);
        });
        return idx;
    };
    const auto gold_order = order(gold);
    std::vector<bool> used(gold.size(), false);
    std::size_t tp = 0;
    for (std::size_t ip : order(pred)) {
        for (std::size_t ig : gold_order) {
            if (used[ig] || gold[ig].category != pred[ip].category)
                continue;
            // Any overlap is required even as min_overlap approaches zero.
            if (annotation::intersection_length(gold[ig], pred[ip]) == 0)
                continue;
            if (overlap_fraction(gold[ig], pred[ip], basis) >= min_overlap) {
                used[ig] = true;
                ++tp;
                break;
            }
        }
    }
    return tp;
}

namespace {

SpanF1 span_scores(std::size_t tp, std::size_t predicted, std::size_t gold) {
    SpanF1 s;
    s.true_positives = tp;
    s.predicted = predicted;
    s.gold = gold;
    const bool nothing = predicted == 0 && gold == 0;
    s.precision = ratio(tp, predicted, nothing);
    s.recall = ratio(tp, gold, nothing);
    s.f1 = nothing ? 1.0 : harmonic(s.precision, s.recall);
    return s;
}

} // namespace

SpanF1 span_f1_partial(std::span<const PiiSpan> gold, std::span<const PiiSpan> pred,
                       double min_overlap, OverlapBasis basis) {
    return span_scores(partial_span_matches(gold, pred, min_overlap, basis), pred.size(),
                       gold.size());
}

SpanF1 span_f1_partial(std::span<const annotation::AnnotatedPost> gold,
                       std::span<const annotation::AnnotatedPost> pred, double min_overlap,
                       OverlapBasis basis) {
    std::unordered_map<std::string_view, const annotation::AnnotatedPost *> pred_by_id;
    for (const auto &p : pred)
        pred_by_id.emplace(p.id, &p);
    if (pred_by_id.size() != gold.size())
        throw DataError("gold and predicted corpora cover different documents");
    std::size_t tp = 0, n_pred = 0, n_gold = 0;
    for (const auto &g : gold) {
        const auto it = pred_by_id.find(g.id);
        if (it == pred_by_id.end())
            throw DataError("no prediction for document '" + g.id + "'");
        tp += partial_span_matches(g.spans, it->second->spans, min_overlap, basis);
        n_pred += it->second->spans.size();
        n_gold += g.spans.size();
    }
    return span_scores(tp, n_pred, n_gold);
}

namespace {

std::string number(double v) { return io::Json(v).dump(); }

} // namespace

std::string ProportionComparison::to_csv() const {
    std::string out = "category,original,synthetic,residual\n";
    for (const auto &r : rows) {
        const std::string name(annotation::to_string(r.category));
        // Labels containing commas or quotes would need quoting; none of ours do.
        out += name + "," + number(r.original) + "," + number(r.synthetic) + "," +
               number(r.residual) + "\n";
    }
    return out;
}

io::Json ProportionComparison::to_json() const {
    io::Json rows_json = io::Json::array();
    for (const auto &r : rows)
        rows_json.push_back({{"category", annotation::to_string(r.category)},
                             {"original", r.original},
                             {"synthetic", r.synthetic},
                             {"residual", r.residual}});
    return {{"max_abs_deviation", max_abs_deviation}, {"rows", std::move(rows_json)}};
}

ProportionComparison proportion_comparison(std::span<const annotation::AnnotatedPost> original,
                                           std::span<const annotation::AnnotatedPost> synthetic) {
    const auto orig = annotation::category_proportions(original);
    const auto synth = annotation::category_proportions(synthetic);
    auto get = [](const std::map<PiiCategory, double> &m, PiiCategory c) {
        const auto it = m.find(c);
        return it == m.end() ? 0.0 : it->second;
    };
    ProportionComparison out;
    for (auto c : annotation::kAllCategories) {
        CategoryProportion row{c, get(orig, c), get(synth, c), 0.0};
        row.residual = row.synthetic - row.original;
        out.max_abs_deviation = std::max(out.max_abs_deviation, std::abs(row.residual));
        out.rows.push_back(row);
    }
    return out;
}

} // namespace synthpii::mleval
