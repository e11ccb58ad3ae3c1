#include "wvad/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace wvad {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels,
                  std::size_t& positives) {
    if (scores.size() != labels.size()) {
        throw DimensionError("metrics: scores and labels differ in length");
    }
    if (scores.empty()) {
        throw ValidationError("metrics: empty input");
    }
    positives = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) {
            throw ValidationError("metrics: labels must be 0 or 1, got " +
                                  std::to_string(labels[i]));
        }
        if (!std::isfinite(scores[i])) {
            throw ValidationError("metrics: non-finite score at row " + std::to_string(i));
        }
        positives += static_cast<std::size_t>(labels[i]);
    }
    if (positives == 0 || positives == labels.size()) {
        throw ValidationError("metrics: need at least one positive and one negative");
    }
}

// Indices sorted by score; ties keep their relative order (irrelevant for
// the metrics, but makes the pass order deterministic).
std::vector<std::size_t> order_by_score(std::span<const double> scores, bool descending) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return descending ? scores[a] > scores[b] : scores[a] < scores[b];
    });
    return idx;
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
    std::size_t positives = 0;
    check_inputs(scores, labels, positives);
    const std::size_t n = scores.size();
    const std::size_t negatives = n - positives;

    // Average-rank assignment (ranks are 1-based), then the Mann-Whitney
    // statistic from the positive rank sum.
    const auto idx = order_by_score(scores, /*descending=*/false);
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of i+1 .. j
        for (std::size_t k = i; k < j; ++k) {
            if (labels[idx[k]] == 1) pos_rank_sum += avg_rank;
        }
        i = j;
    }
    const double p = static_cast<double>(positives);
    const double u = pos_rank_sum - p * (p + 1.0) / 2.0;
    return u / (p * static_cast<double>(negatives));
}

double auprc(std::span<const double> scores, std::span<const int> labels) {
    std::size_t positives = 0;
    check_inputs(scores, labels, positives);
    const std::size_t n = scores.size();

    const auto idx = order_by_score(scores, /*descending=*/true);
    double ap = 0.0;
    std::size_t tp = 0;
    std::size_t seen = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        std::size_t block_tp = 0;
        while (j < n && scores[idx[j]] == scores[idx[i]]) {
            if (labels[idx[j]] == 1) ++block_tp;
            ++j;
        }
        tp += block_tp;
        seen = j;
        const double precision = static_cast<double>(tp) / static_cast<double>(seen);
        ap += precision * static_cast<double>(block_tp);
        i = j;
    }
    return ap / static_cast<double>(positives);
}

EvalReport evaluate(std::span<const double> scores, std::span<const int> labels) {
    EvalReport r;
    r.auroc = auroc(scores, labels);
    r.auprc = auprc(scores, labels);
    r.n = scores.size();
    r.positives = 0;
    for (int l : labels) r.positives += static_cast<std::size_t>(l);
    return r;
}

AggregateReport aggregate(std::span<const EvalReport> reports) {
    if (reports.empty()) {
        throw ValidationError("aggregate: no reports");
    }
    for (const auto& r : reports) {
        if (r.dataset != reports[0].dataset || r.config_hash != reports[0].config_hash) {
            throw UsageError("aggregate: reports mix datasets or configs");
        }
    }
    AggregateReport agg;
    agg.per_seed.assign(reports.begin(), reports.end());
    agg.dataset = reports[0].dataset;
    agg.label_ratio = reports[0].label_ratio;
    agg.config_hash = reports[0].config_hash;
    agg.runs = reports.size();
    for (const auto& r : reports) {
        agg.auroc_mean += r.auroc;
        agg.auprc_mean += r.auprc;
    }
    const double n = static_cast<double>(agg.runs);
    agg.auroc_mean /= n;
    agg.auprc_mean /= n;
    if (agg.runs > 1) {
        double sa = 0.0, sp = 0.0;
        for (const auto& r : reports) {
            sa += (r.auroc - agg.auroc_mean) * (r.auroc - agg.auroc_mean);
            sp += (r.auprc - agg.auprc_mean) * (r.auprc - agg.auprc_mean);
        }
        agg.auroc_std = std::sqrt(sa / (n - 1.0));
        agg.auprc_std = std::sqrt(sp / (n - 1.0));
    }
    return agg;
}

}  // namespace wvad
