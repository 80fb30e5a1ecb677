#include "mkgc/metrics.hpp"

#include <cstdio>

namespace mkgc {

std::size_t rank_of_gold(const std::vector<double>& scores, std::size_t gold,
                         const std::set<std::size_t>& filtered_out) {
    if (gold >= scores.size()) throw value_error("rank_of_gold: gold index out of range");
    const double gold_score = scores[gold];
    std::size_t rank = 1;
    for (std::size_t j = 0; j < scores.size(); ++j) {
        if (j == gold || filtered_out.count(j)) continue;
        if (scores[j] >= gold_score) ++rank;
    }
    return rank;
}

RankingSummary summarize_ranks(const std::vector<std::size_t>& ranks) {
    if (ranks.empty()) throw value_error("summarize_ranks: no queries");
    RankingSummary s;
    for (std::size_t r : ranks) {
        s.mr += static_cast<double>(r);
        if (r <= 1) s.hits1 += 1.0;
        if (r <= 3) s.hits3 += 1.0;
        if (r <= 10) s.hits10 += 1.0;
    }
    const double n = static_cast<double>(ranks.size());
    s.mr /= n;
    s.hits1 /= n;
    s.hits3 /= n;
    s.hits10 /= n;
    return s;
}

namespace {

PrfSummary from_counts(double tp, double fp, double fn) {
    PrfSummary s;
    s.precision = (tp + fp) > 0.0 ? tp / (tp + fp) : 0.0;
    s.recall = (tp + fn) > 0.0 ? tp / (tp + fn) : 0.0;
    s.f1 = (s.precision + s.recall) > 0.0
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    return s;
}

} // namespace

PrfSummary micro_f1(const std::vector<int>& pred, const std::vector<int>& gold,
                    const std::set<int>& null_labels) {
    if (pred.size() != gold.size()) throw value_error("micro_f1: length mismatch");
    double tp = 0.0, fp = 0.0, fn = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool pred_null = null_labels.count(pred[i]) > 0;
        const bool gold_null = null_labels.count(gold[i]) > 0;
        if (!pred_null && !gold_null && pred[i] == gold[i]) {
            tp += 1.0;
        } else {
            if (!pred_null) fp += 1.0;
            if (!gold_null) fn += 1.0;
        }
    }
    return from_counts(tp, fp, fn);
}

PrfSummary span_f1(const std::vector<std::vector<std::string>>& pred_tags,
                   const std::vector<std::vector<std::string>>& gold_tags) {
    if (pred_tags.size() != gold_tags.size()) throw value_error("span_f1: length mismatch");
    double tp = 0.0, fp = 0.0, fn = 0.0;
    for (std::size_t i = 0; i < pred_tags.size(); ++i) {
        if (pred_tags[i].size() != gold_tags[i].size()) {
            throw value_error("span_f1: sequence " + std::to_string(i) + " length mismatch");
        }
        auto pred = extract_spans(pred_tags[i]);
        auto gold = extract_spans(gold_tags[i]);
        std::set<Span> gold_set(gold.begin(), gold.end());
        for (const auto& s : pred) {
            if (gold_set.count(s)) {
                tp += 1.0;
                gold_set.erase(s);
            } else {
                fp += 1.0;
            }
        }
        fn += static_cast<double>(gold_set.size());
    }
    return from_counts(tp, fp, fn);
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

} // namespace

std::string MetricsReport::to_kv() const {
    std::string out;
    out += "task=" + task + "\n";
    out += "seed=" + std::to_string(seed) + "\n";
    out += "config_hash=" + config_hash + "\n";
    if (task == "link") {
        out += "mr=" + fmt(mr) + "\n";
        out += "hits1=" + fmt(hits1) + "\n";
        out += "hits3=" + fmt(hits3) + "\n";
        out += "hits10=" + fmt(hits10) + "\n";
    } else {
        out += "precision=" + fmt(precision) + "\n";
        out += "recall=" + fmt(recall) + "\n";
        out += "f1=" + fmt(f1) + "\n";
    }
    return out;
}

std::string MetricsReport::tsv_header() const {
    if (task == "link") return "task\tseed\tmr\thits1\thits3\thits10";
    return "task\tseed\tprecision\trecall\tf1";
}

std::string MetricsReport::tsv_row() const {
    if (task == "link") {
        return task + "\t" + std::to_string(seed) + "\t" + fmt(mr) + "\t" + fmt(hits1) + "\t" +
               fmt(hits3) + "\t" + fmt(hits10);
    }
    return task + "\t" + std::to_string(seed) + "\t" + fmt(precision) + "\t" + fmt(recall) +
           "\t" + fmt(f1);
}

MetricsReport average_reports(const std::vector<MetricsReport>& reports) {
    if (reports.empty()) throw value_error("average_reports: no reports");
    MetricsReport avg = reports.front();
    const double n = static_cast<double>(reports.size());
    avg.mr = avg.hits1 = avg.hits3 = avg.hits10 = 0.0;
    avg.precision = avg.recall = avg.f1 = 0.0;
    for (const auto& r : reports) {
        avg.mr += r.mr / n;
        avg.hits1 += r.hits1 / n;
        avg.hits3 += r.hits3 / n;
        avg.hits10 += r.hits10 / n;
        avg.precision += r.precision / n;
        avg.recall += r.recall / n;
        avg.f1 += r.f1 / n;
    }
    return avg;
}

} // namespace mkgc
