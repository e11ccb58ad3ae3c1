#include "wvad/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "wvad/features.hpp"
#include "wvad/gmm.hpp"
#include "wvad/rng.hpp"

namespace wvad {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string format_g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void zero_inplace(std::vector<nn::LayerGrad>& grads) {
    for (auto& g : grads) {
        g.w.setZero();
        g.b.setZero();
    }
}

void zero_inplace(VaeGrads& grads) {
    zero_inplace(grads.encoder);
    zero_inplace(grads.decoder);
    grads.prior.logits.setZero();
    grads.prior.means.setZero();
    grads.prior.logvars.setZero();
}

Matrix gather_rows(const Matrix& x, const std::vector<std::size_t>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
    }
    return out;
}

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

void TrainConfig::validate() const {
    if (k < 1) throw ValidationError("config: k must be >= 1");
    if (e1 < 1 || e2 < 1 || e3 < 1) throw ValidationError("config: e1, e2, e3 must be >= 1");
    if (!(lambda_warm > 0.0) || !(lambda_main > 0.0)) {
        throw ValidationError("config: lambda values must be positive");
    }
    if (!(lr > 0.0)) throw ValidationError("config: lr must be positive");
    if (!(label_ratio > 0.0 && label_ratio < 1.0)) {
        throw ValidationError("config: label_ratio must lie in (0, 1)");
    }
    if (batch_divisor < 1) throw ValidationError("config: batch_divisor must be >= 1");
}

TrainConfig parse_config_text(const std::string& text) {
    TrainConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ParseError("config: expected 'key = value' at line " + std::to_string(line_no));
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        try {
            if (key == "k") cfg.k = std::stoi(value);
            else if (key == "e1") cfg.e1 = std::stoi(value);
            else if (key == "e2") cfg.e2 = std::stoi(value);
            else if (key == "e3") cfg.e3 = std::stoi(value);
            else if (key == "lambda_warm") cfg.lambda_warm = std::stod(value);
            else if (key == "lambda_main") cfg.lambda_main = std::stod(value);
            else if (key == "lr") cfg.lr = std::stod(value);
            else if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "label_ratio") cfg.label_ratio = std::stod(value);
            else if (key == "batch_divisor") cfg.batch_divisor = std::stoi(value);
            else {
                throw ParseError("config: unknown key '" + key + "' at line " +
                                 std::to_string(line_no));
            }
        } catch (const std::invalid_argument&) {
            throw ParseError("config: bad value for '" + key + "' at line " +
                             std::to_string(line_no));
        } catch (const std::out_of_range&) {
            throw ParseError("config: value out of range for '" + key + "' at line " +
                             std::to_string(line_no));
        }
    }
    cfg.validate();
    return cfg;
}

TrainConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

std::string config_to_text(const TrainConfig& cfg) {
    std::ostringstream out;
    out << "k = " << cfg.k << "\n";
    out << "e1 = " << cfg.e1 << "\n";
    out << "e2 = " << cfg.e2 << "\n";
    out << "e3 = " << cfg.e3 << "\n";
    out << "lambda_warm = " << format_g17(cfg.lambda_warm) << "\n";
    out << "lambda_main = " << format_g17(cfg.lambda_main) << "\n";
    out << "lr = " << format_g17(cfg.lr) << "\n";
    out << "seed = " << cfg.seed << "\n";
    out << "label_ratio = " << format_g17(cfg.label_ratio) << "\n";
    out << "batch_divisor = " << cfg.batch_divisor << "\n";
    return out.str();
}

std::string config_hash(const TrainConfig& cfg) {
    // The seed is run identity, not config identity: multi-seed benchmark
    // reports must hash alike so aggregate() accepts them together.
    TrainConfig canon = cfg;
    canon.seed = 0;
    const std::string text = config_to_text(canon);
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

BalancedBatcher::BalancedBatcher(const std::vector<int>& weak, int batch_divisor) {
    for (std::size_t i = 0; i < weak.size(); ++i) {
        if (weak[i] == 1) {
            anomalies_.push_back(i);
        } else if (weak[i] == 0) {
            unlabeled_.push_back(i);
        } else {
            throw ValidationError("batcher: weak labels must be 0 or 1");
        }
    }
    if (anomalies_.empty()) {
        throw ValidationError("batcher: weak supervision requires at least one labeled anomaly");
    }
    if (unlabeled_.empty()) {
        throw ValidationError("batcher: need at least one unlabeled row");
    }
    if (batch_divisor < 1) throw ValidationError("batcher: batch divisor must be >= 1");
    batch_ = std::max<int>(
        2, static_cast<int>(weak.size() / static_cast<std::size_t>(batch_divisor)));
}

std::size_t BalancedBatcher::batches_per_epoch() const {
    const std::size_t u_per = static_cast<std::size_t>((batch_ + 1) / 2);
    return (unlabeled_.size() + u_per - 1) / u_per;
}

std::vector<Batch> BalancedBatcher::epoch(std::mt19937_64& rng) {
    std::vector<std::size_t> order = unlabeled_;
    for (std::size_t i = order.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(bounded_rand(rng, i));
        std::swap(order[i - 1], order[j]);
    }
    const std::size_t u_per = static_cast<std::size_t>((batch_ + 1) / 2);
    const std::size_t a_per = static_cast<std::size_t>(batch_ / 2);
    std::vector<Batch> batches;
    batches.reserve(batches_per_epoch());
    for (std::size_t start = 0; start < order.size(); start += u_per) {
        const std::size_t count = std::min(u_per, order.size() - start);
        Batch b;
        b.rows.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                      order.begin() + static_cast<std::ptrdiff_t>(start + count));
        b.weak.assign(count, 0);
        // Full batches take floor(B/2) anomalies; the trailing partial batch
        // draws one per remaining unlabeled row to keep the mix balanced.
        const std::size_t draws = count == u_per ? a_per : count;
        for (std::size_t i = 0; i < draws; ++i) {
            b.rows.push_back(anomalies_[bounded_rand(rng, anomalies_.size())]);
            b.weak.push_back(1);
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

void write_run_record_csv(const RunRecord& record, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("run record: cannot write " + path);
    out << "epoch,phase,recon,kl_cat,kl_z,ce,lambda,loss,clamp_recon,clamp_klz,seconds\n";
    for (const auto& r : record) {
        out << r.epoch << "," << r.phase << "," << format_g17(r.recon) << ","
            << format_g17(r.kl_cat) << "," << format_g17(r.kl_z) << "," << format_g17(r.ce)
            << "," << format_g17(r.lambda) << "," << format_g17(r.loss) << "," << r.clamp_recon
            << "," << r.clamp_klz << "," << format_g17(r.seconds) << "\n";
    }
}

MixtureVae build_model(int data_dim, int k) {
    return MixtureVae(k, MixtureVae::derived_widths(data_dim));
}

ScoreEstimator build_estimator(int k, int latent_dim) {
    return ScoreEstimator(k + latent_dim + 3);
}

void pretrain(MixtureVae& model, const LabeledDataset& ds, const TrainConfig& cfg,
              std::mt19937_64& sampler_rng, RunRecord* record) {
    BalancedBatcher batcher(ds.weak, cfg.batch_divisor);
    VaeGrads grads = model.zero_grads();
    nn::AdamOptimizer opt({.lr = cfg.lr});
    opt.add_blocks(model.encoder().param_blocks(grads.encoder, "encoder"));
    opt.add_blocks(model.decoder().param_blocks(grads.decoder, "decoder"));

    for (int epoch = 1; epoch <= cfg.e1; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        double recon_sum = 0.0;
        double loss_sum = 0.0;
        std::uint64_t clamp_recon = 0;
        std::size_t rows = 0;
        std::size_t batches = 0;
        try {
            for (const auto& batch : batcher.epoch(sampler_rng)) {
                const Matrix xb = gather_rows(ds.x, batch.rows);
                zero_inplace(grads);
                const PretrainResult res = pretrain_batch(model, xb, batch.weak, &grads);
                opt.step();
                recon_sum += res.mean_recon_u * static_cast<double>(batch.rows.size());
                loss_sum += res.loss * static_cast<double>(batch.rows.size());
                clamp_recon += res.clamp_recon;
                rows += batch.rows.size();
                ++batches;
            }
        } catch (const NumericError& e) {
            throw TrainingError("pretrain epoch " + std::to_string(epoch) + ": " + e.what());
        }
        if (record) {
            EpochRecord r;
            r.epoch = epoch;
            r.phase = "pretrain";
            // The pretraining objective tracks the full squared residual;
            // recorded halved so the column is comparable with the joint
            // phase's 0.5||.||^2 rows.
            r.recon = 0.5 * recon_sum / static_cast<double>(rows);
            r.loss = loss_sum / static_cast<double>(rows);
            r.clamp_recon = clamp_recon;
            r.seconds = elapsed_seconds(start);
            record->push_back(std::move(r));
        }
    }
}

void init_prior(MixtureVae& model, const LabeledDataset& ds, const TrainConfig& cfg) {
    const Matrix latents = model.encode(ds.x).mean;
    const std::uint64_t base = derive_seed(cfg.seed, streams::kEmInit);
    // EM lands in local optima (a merged pair of clusters, a collapsed
    // component); run a few restarts and keep the best likelihood.
    bool have_best = false;
    gmm::EmResult best;
    std::string last_error;
    for (int attempt = 0; attempt < 3; ++attempt) {
        gmm::EmOptions opts;
        opts.seed = splitmix64(base + static_cast<std::uint64_t>(attempt));
        try {
            gmm::EmResult em = gmm::em_fit(latents, cfg.k, opts);
            if (!have_best || em.avg_log_likelihood > best.avg_log_likelihood) {
                best = std::move(em);
                have_best = true;
            }
        } catch (const NumericError& e) {
            last_error = e.what();
        }
    }
    if (!have_best) {
        throw TrainingError("init_prior: EM failed after 3 attempts: " + last_error);
    }
    MixturePrior& prior = model.prior();
    for (Eigen::Index c = 0; c < prior.k(); ++c) {
        prior.logits[c] = std::log(std::max(best.params.weights[c], 1e-12));
    }
    prior.means = best.params.means;
    prior.logvars = best.params.vars.array().log();
}

void joint_train(MixtureVae& model, ScoreEstimator& estimator, const LabeledDataset& ds,
                 const TrainConfig& cfg, std::mt19937_64& sampler_rng,
                 std::mt19937_64& eps_rng, RunRecord* record) {
    BalancedBatcher batcher(ds.weak, cfg.batch_divisor);
    VaeGrads vae_grads = model.zero_grads();
    std::vector<nn::LayerGrad> est_grads = estimator.net().zero_grads();
    nn::AdamOptimizer opt({.lr = cfg.lr});
    opt.add_blocks(model.param_blocks(vae_grads));
    opt.add_blocks(estimator.net().param_blocks(est_grads, "estimator"));

    const int latent = model.latent_dim();
    std::normal_distribution<double> gauss(0.0, 1.0);

    for (int je = 1; je <= cfg.e2 + cfg.e3; ++je) {
        const auto start = std::chrono::steady_clock::now();
        const double lambda = je <= cfg.e2 ? cfg.lambda_warm : cfg.lambda_main;
        double recon_sum = 0.0, cat_sum = 0.0, klz_sum = 0.0, ce_sum = 0.0, loss_sum = 0.0;
        std::uint64_t clamp_recon = 0, clamp_klz = 0;
        std::size_t rows = 0;
        try {
            for (const auto& batch : batcher.epoch(sampler_rng)) {
                const auto b = static_cast<Eigen::Index>(batch.rows.size());
                const Matrix xb = gather_rows(ds.x, batch.rows);
                Matrix eps(b, latent);
                for (Eigen::Index r = 0; r < b; ++r) {
                    for (int c = 0; c < latent; ++c) eps(r, c) = gauss(eps_rng);
                }

                const BatchForward fwd = vae_forward(model, xb, &eps);
                const ElboTerms terms = elbo_terms(model, xb, fwd, batch.weak);
                const Matrix features =
                    assemble_feature_batch(fwd.post.y, fwd.enc.z, xb, fwd.recon);
                nn::ForwardCache est_cache;
                const Matrix o = estimator.preactivation(features, &est_cache);
                const CeResult ce = ce_loss_from_preact(o, batch.weak);

                zero_inplace(vae_grads);
                zero_inplace(est_grads);
                const Matrix grad_f =
                    estimator.net().backward(est_cache, lambda * ce.grad_pre, est_grads);
                Matrix dy = Matrix::Zero(b, model.cluster_count());
                Matrix dz = Matrix::Zero(b, latent);
                Matrix dxhat = Matrix::Zero(b, xb.cols());
                feature_batch_backward(fwd.post.y, fwd.enc.z, xb, fwd.recon, grad_f, dy, dz,
                                       dxhat);
                elbo_backward(model, xb, fwd, batch.weak, &dy, &dz, &dxhat, vae_grads);
                opt.step();

                const double bd = static_cast<double>(b);
                recon_sum += terms.r.sum();
                cat_sum += terms.kl_cat.sum();
                klz_sum += terms.kl_z.sum();
                ce_sum += ce.loss * bd;
                loss_sum += terms.mean_loss() * bd + lambda * ce.loss * bd;
                clamp_recon += terms.clamp_recon;
                clamp_klz += terms.clamp_klz;
                rows += batch.rows.size();
            }
        } catch (const NumericError& e) {
            std::ostringstream msg;
            msg << "joint epoch " << (cfg.e1 + je) << ": " << e.what()
                << " (clamp_recon=" << clamp_recon << ", clamp_klz=" << clamp_klz << ")";
            throw TrainingError(msg.str());
        }
        if (record) {
            EpochRecord r;
            r.epoch = cfg.e1 + je;
            r.phase = "joint";
            const double n = static_cast<double>(rows);
            r.recon = recon_sum / n;
            r.kl_cat = cat_sum / n;
            r.kl_z = klz_sum / n;
            r.ce = ce_sum / n;
            r.lambda = lambda;
            r.loss = loss_sum / n;
            r.clamp_recon = clamp_recon;
            r.clamp_klz = clamp_klz;
            r.seconds = elapsed_seconds(start);
            record->push_back(std::move(r));
        }
    }
}

Vector score_rows(const MixtureVae& model, const ScoreEstimator& estimator, const Matrix& x) {
    const MixtureVae::Encoded enc = model.encode(x);
    const Matrix recon = model.decode(enc.z);
    const MixtureVae::ClusterPosterior post = model.cluster_posterior(enc.z);
    const Matrix features = assemble_feature_batch(post.y, enc.z, x, recon);
    return estimator.score(features);
}

EvalReport evaluate_scores(const LabeledDataset& ds, const Vector& scores,
                           bool include_labeled) {
    if (scores.size() != ds.rows()) {
        throw DimensionError("evaluate_scores: need one score per dataset row");
    }
    std::vector<double> s;
    std::vector<int> labels;
    for (Eigen::Index i = 0; i < ds.rows(); ++i) {
        if (!include_labeled && ds.weak[static_cast<std::size_t>(i)] == 1) continue;
        s.push_back(scores[i]);
        labels.push_back(ds.truth[static_cast<std::size_t>(i)]);
    }
    EvalReport report = evaluate(s, labels);
    report.dataset = ds.source;
    report.label_ratio = ds.label_ratio;
    return report;
}

TrainArtifacts run_training(const LabeledDataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    TrainArtifacts art;
    art.model = build_model(static_cast<int>(ds.dims()), cfg.k);
    art.estimator = build_estimator(cfg.k, art.model.latent_dim());

    auto enc_rng = make_rng(derive_seed(cfg.seed, streams::kEncoderInit));
    auto dec_rng = make_rng(derive_seed(cfg.seed, streams::kDecoderInit));
    auto est_rng = make_rng(derive_seed(cfg.seed, streams::kEstimatorInit));
    art.model.init_params(enc_rng, dec_rng);
    art.estimator.init_params(est_rng);

    auto sampler_rng = make_rng(derive_seed(cfg.seed, streams::kSampler));
    auto eps_rng = make_rng(derive_seed(cfg.seed, streams::kEpsNoise));

    pretrain(art.model, ds, cfg, sampler_rng, &art.record);
    init_prior(art.model, ds, cfg);
    joint_train(art.model, art.estimator, ds, cfg, sampler_rng, eps_rng, &art.record);

    art.scores = score_rows(art.model, art.estimator, ds.x);
    art.report = evaluate_scores(ds, art.scores);
    art.report.config_hash = config_hash(cfg);
    return art;
}

}  // namespace wvad
