#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "mkgc/matrix.hpp"
#include "mkgc/task_heads.hpp"

namespace mkgc {

// Pessimistic rank of the gold candidate: 1 + number of other candidates with
// a score >= the gold score, after the filtered-out candidates are removed.
std::size_t rank_of_gold(const std::vector<double>& scores, std::size_t gold,
                         const std::set<std::size_t>& filtered_out);

struct RankingSummary {
    double mr = 0.0;
    double hits1 = 0.0, hits3 = 0.0, hits10 = 0.0;
};
RankingSummary summarize_ranks(const std::vector<std::size_t>& ranks);

struct PrfSummary {
    double precision = 0.0, recall = 0.0, f1 = 0.0;
};
// TP/FP/FN counting over non-null class predictions.
PrfSummary micro_f1(const std::vector<int>& pred, const std::vector<int>& gold,
                    const std::set<int>& null_labels = {});
// Exact (start, end, type) span matching over BIO tag sequences.
PrfSummary span_f1(const std::vector<std::vector<std::string>>& pred_tags,
                   const std::vector<std::vector<std::string>>& gold_tags);

struct MetricsReport {
    std::string task;
    std::uint64_t seed = 0;
    std::string config_hash;
    // link
    double mr = 0.0, hits1 = 0.0, hits3 = 0.0, hits10 = 0.0;
    // re / ner
    double precision = 0.0, recall = 0.0, f1 = 0.0;

    std::string to_kv() const;
    std::string tsv_header() const;
    std::string tsv_row() const;
};

// Field-wise mean across per-seed reports (seed recorded as the first one's).
MetricsReport average_reports(const std::vector<MetricsReport>& reports);

} // namespace mkgc
