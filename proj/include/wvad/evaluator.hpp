#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "wvad/errors.hpp"

namespace wvad {

// Threshold-free ranking metrics for one scored pool. Labels are 0 (normal)
// or 1 (anomaly); higher scores should mean "more anomalous".
struct EvalReport {
    double auroc = 0.0;
    double auprc = 0.0;
    std::size_t n = 0;          // rows scored
    std::size_t positives = 0;  // anomalies among them

    // run identity, used by aggregate() to refuse mixing apples and oranges
    std::string dataset;
    double label_ratio = 0.0;
    std::string config_hash;
};

// Mann-Whitney form with average ranks over ties:
// AUROC = P(s_pos > s_neg) + 0.5 * P(s_pos == s_neg).
double auroc(std::span<const double> scores, std::span<const int> labels);

// Average precision; ties are handled in blocks, every positive in a block
// of equal scores is credited the precision at the end of the block.
double auprc(std::span<const double> scores, std::span<const int> labels);

EvalReport evaluate(std::span<const double> scores, std::span<const int> labels);

// Mean and sample standard deviation (n-1) across runs; std is 0 for a
// single run.
struct AggregateReport {
    std::vector<EvalReport> per_seed;
    double auroc_mean = 0.0;
    double auroc_std = 0.0;
    double auprc_mean = 0.0;
    double auprc_std = 0.0;
    std::size_t runs = 0;
    std::string dataset;
    double label_ratio = 0.0;
    std::string config_hash;
};

// Throws UsageError if the reports carry different dataset names or config
// hashes.
AggregateReport aggregate(std::span<const EvalReport> reports);

}  // namespace wvad
