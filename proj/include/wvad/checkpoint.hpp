#pragma once

#include <string>

#include "wvad/data_io.hpp"
#include "wvad/mixture_vae.hpp"
#include "wvad/score_estimator.hpp"
#include "wvad/trainer.hpp"

namespace wvad {

// Everything needed to score new rows: both networks, the mixture prior,
// the standardization statistics, and the config the run used.
struct Checkpoint {
    MixtureVae model;
    ScoreEstimator estimator;
    StandardizeStats stats;
    TrainConfig config;
};

// JSON file; doubles are written with shortest round-trip precision so
// save -> load -> save is byte-identical.
void save_checkpoint(const std::string& path, const MixtureVae& model,
                     const ScoreEstimator& estimator, const StandardizeStats& stats,
                     const TrainConfig& config);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace wvad
