#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "wvad/data_io.hpp"
#include "wvad/evaluator.hpp"
#include "wvad/mixture_vae.hpp"
#include "wvad/score_estimator.hpp"

namespace wvad {

struct TrainConfig {
    int k = 2;
    int e1 = 50;
    int e2 = 100;
    int e3 = 400;
    double lambda_warm = 0.01;
    double lambda_main = 1.0;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    double label_ratio = 0.1;  // used by prepare/bench when re-splitting
    int batch_divisor = 10;    // B = max(2, floor((N+M)/batch_divisor))

    void validate() const;
};

// Flat "key = value" text ('#' comments); documented keys: k, e1, e2, e3,
// lambda_warm, lambda_main, lr, seed, label_ratio, batch_divisor.
TrainConfig parse_config_text(const std::string& text);
TrainConfig parse_config_file(const std::string& path);
std::string config_to_text(const TrainConfig& cfg);

// FNV-1a hash of the canonical text form, for report identity.
std::string config_hash(const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Balanced mini-batches
// ---------------------------------------------------------------------------

struct Batch {
    std::vector<std::size_t> rows;  // dataset row indices, unlabeled first
    std::vector<int> weak;          // per-row weak label
};

// Each batch takes ceil(B/2) unlabeled rows (without replacement, reshuffled
// each epoch) and floor(B/2) labeled anomalies (with replacement). The last
// partial batch keeps the unlabeled remainder and draws as many anomalies,
// so the anomaly fraction stays near one half. One epoch covers the
// unlabeled pool exactly once.
class BalancedBatcher {
public:
    BalancedBatcher(const std::vector<int>& weak, int batch_divisor);

    int batch_size() const { return batch_; }
    std::size_t unlabeled_count() const { return unlabeled_.size(); }
    std::size_t anomaly_count() const { return anomalies_.size(); }
    std::size_t batches_per_epoch() const;

    std::vector<Batch> epoch(std::mt19937_64& rng);

private:
    std::vector<std::size_t> unlabeled_;
    std::vector<std::size_t> anomalies_;
    int batch_ = 0;
};

// ---------------------------------------------------------------------------
// Training phases
// ---------------------------------------------------------------------------

struct EpochRecord {
    int epoch = 0;        // 1-based, contiguous across phases
    std::string phase;    // "pretrain" | "joint"
    double recon = 0.0;   // epoch mean of the raw 0.5||x-x_hat||^2 rows
    double kl_cat = 0.0;
    double kl_z = 0.0;
    double ce = 0.0;
    double lambda = 0.0;  // 0 during pretraining
    double loss = 0.0;    // epoch mean of the phase objective
    std::uint64_t clamp_recon = 0;
    std::uint64_t clamp_klz = 0;
    double seconds = 0.0;
};
using RunRecord = std::vector<EpochRecord>;

void write_run_record_csv(const RunRecord& record, const std::string& path);

MixtureVae build_model(int data_dim, int k);
ScoreEstimator build_estimator(int k, int latent_dim);  // F = K + L + 3

// e1 epochs of Adam on the pretraining objective in vanilla-autoencoder
// mode. Pretrain recon is recorded in the same 0.5||.||^2 units as the
// joint phase for comparability.
void pretrain(MixtureVae& model, const LabeledDataset& ds, const TrainConfig& cfg,
              std::mt19937_64& sampler_rng, RunRecord* record = nullptr);

// EM over deterministic latent means of all rows; copies the fitted mixture
// into the trainable prior. Retries EM up to 3 times before giving up.
void init_prior(MixtureVae& model, const LabeledDataset& ds, const TrainConfig& cfg);

// e2 epochs at lambda_warm then e3 epochs at lambda_main; each batch takes
// one Adam step over encoder, decoder, prior and estimator jointly.
void joint_train(MixtureVae& model, ScoreEstimator& estimator, const LabeledDataset& ds,
                 const TrainConfig& cfg, std::mt19937_64& sampler_rng,
                 std::mt19937_64& eps_rng, RunRecord* record = nullptr);

// Deterministic scoring path: z = mu_z(x), y = p(y|mu_z).
Vector score_rows(const MixtureVae& model, const ScoreEstimator& estimator, const Matrix& x);

struct TrainArtifacts {
    MixtureVae model;
    ScoreEstimator estimator;
    RunRecord record;
    Vector scores;      // every dataset row, deterministic mode
    EvalReport report;  // unlabeled pool (weak == 0) against ground truth
};

// Full pipeline: init -> pretrain -> EM prior -> joint train -> score ->
// evaluate. Deterministic given cfg.seed.
TrainArtifacts run_training(const LabeledDataset& ds, const TrainConfig& cfg);

// Evaluation over the unlabeled pool only (weak == 0), the transductive
// protocol; include_labeled=true scores every row instead.
EvalReport evaluate_scores(const LabeledDataset& ds, const Vector& scores,
                           bool include_labeled = false);

}  // namespace wvad
