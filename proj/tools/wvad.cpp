// wvad: weakly-supervised anomaly detection on multimodal tabular data.
//
// Verbs: prepare -> train -> score -> eval, plus bench for the multi-seed
// protocol. Exit codes: 0 ok, 2 validation/usage, 3 runtime/numeric.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wvad/checkpoint.hpp"
#include "wvad/data_io.hpp"
#include "wvad/evaluator.hpp"
#include "wvad/trainer.hpp"

namespace {

using namespace wvad;

std::string format_g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string format_f4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

std::string path_stem(const std::string& path) {
    return std::filesystem::path(path).stem().string();
}

void write_scores_csv(const std::string& path, const Vector& scores, const LabeledDataset& ds) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    out << "index,score,weak_label,true_label\n";
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
        out << i << "," << format_g17(scores[i]) << "," << ds.weak[static_cast<std::size_t>(i)]
            << "," << ds.truth[static_cast<std::size_t>(i)] << "\n";
    }
}

struct ScoreRows {
    std::vector<double> scores;
    std::vector<int> weak;
    std::vector<int> truth;
};

ScoreRows read_scores_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    ScoreRows rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1) continue;  // header
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string idx, score, weak, truth;
        if (!std::getline(ls, idx, ',') || !std::getline(ls, score, ',') ||
            !std::getline(ls, weak, ',') || !std::getline(ls, truth, ',')) {
            throw ParseError("scores: malformed row at line " + std::to_string(line_no));
        }
        try {
            rows.scores.push_back(std::stod(score));
            rows.weak.push_back(std::stoi(weak));
            rows.truth.push_back(std::stoi(truth));
        } catch (const std::exception&) {
            throw ParseError("scores: non-numeric cell at line " + std::to_string(line_no));
        }
    }
    if (rows.scores.empty()) throw ParseError("scores: no data rows in " + path);
    return rows;
}

// Expands either a count ("10" -> 1..10) or an explicit comma list ("2,5,9").
std::vector<std::uint64_t> expand_seeds(const std::string& spec) {
    std::vector<std::uint64_t> seeds;
    if (spec.find(',') == std::string::npos) {
        const long n = std::stol(spec);
        if (n < 1) throw ValidationError("bench: seed count must be >= 1");
        for (long i = 1; i <= n; ++i) seeds.push_back(static_cast<std::uint64_t>(i));
        return seeds;
    }
    std::istringstream in(spec);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        if (tok.empty()) continue;
        seeds.push_back(std::stoull(tok));
    }
    if (seeds.empty()) throw ValidationError("bench: empty seed list");
    return seeds;
}

int cmd_prepare(const std::string& input, const std::string& synthetic, int label_col,
                bool header, double ratio, std::uint64_t seed, const std::string& out,
                bool json_style) {
    if (input.empty() == synthetic.empty()) {
        throw ValidationError("prepare: give exactly one of --input or --synthetic");
    }
    LabeledDataset ds;
    if (!synthetic.empty()) {
        ds = make_synthetic(load_synthetic_spec(synthetic));
        ds.source = path_stem(synthetic);
    } else {
        const RawData raw = load_csv(input, label_col, header);
        StandardizeStats stats;
        std::vector<std::string> warnings;
        Matrix xs = standardize(raw.x, stats, &warnings);
        for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
        ds = split_weak_labels(std::move(xs), raw.labels, std::move(stats), ratio, seed);
        ds.source = path_stem(input);
    }
    save_dataset_cache(ds, out);
    if (json_style) {
        std::cout << "prepare rows=" << ds.rows() << " dims=" << ds.dims()
                  << " labeled=" << ds.weak_count() << " anomalies=" << ds.anomaly_count()
                  << " out=" << out << "\n";
    } else {
        std::cout << ds.rows() << " rows, " << ds.dims() << " dims, " << ds.weak_count()
                  << " labeled anomalies\n";
    }
    return 0;
}

int cmd_train(const std::string& data, const std::string& config, bool seed_given,
              std::uint64_t seed, const std::string& out, std::string record_path,
              bool json_style) {
    const LabeledDataset ds = load_dataset_cache(data);
    TrainConfig cfg = config.empty() ? TrainConfig{} : parse_config_file(config);
    if (seed_given) cfg.seed = seed;
    cfg.validate();

    const TrainArtifacts art = run_training(ds, cfg);
    save_checkpoint(out, art.model, art.estimator, ds.stats, cfg);
    if (record_path.empty()) record_path = out + ".record.csv";
    write_run_record_csv(art.record, record_path);

    if (json_style) {
        std::cout << "train epochs=" << art.record.size() << " auroc="
                  << format_g17(art.report.auroc) << " auprc=" << format_g17(art.report.auprc)
                  << " checkpoint=" << out << " record=" << record_path << "\n";
    } else {
        std::cout << "trained " << art.record.size() << " epochs; unlabeled-pool AUROC "
                  << format_f4(art.report.auroc) << ", AUPRC " << format_f4(art.report.auprc)
                  << "\n"
                  << "checkpoint: " << out << "\nrun record: " << record_path << "\n";
    }
    return 0;
}

int cmd_score(const std::string& checkpoint, const std::string& data, const std::string& out,
              bool json_style) {
    const Checkpoint cp = load_checkpoint(checkpoint);
    const LabeledDataset ds = load_dataset_cache(data);
    if (cp.model.data_dim() != ds.dims()) {
        throw ValidationError("score: checkpoint expects " +
                              std::to_string(cp.model.data_dim()) + " dims, dataset has " +
                              std::to_string(ds.dims()));
    }
    const Vector scores = score_rows(cp.model, cp.estimator, ds.x);
    write_scores_csv(out, scores, ds);
    if (json_style) {
        std::cout << "score rows=" << scores.size() << " out=" << out << "\n";
    } else {
        std::cout << "scored " << scores.size() << " rows -> " << out << "\n";
    }
    return 0;
}

int cmd_eval(const std::string& scores_path, bool all_rows, bool json_style) {
    const ScoreRows rows = read_scores_csv(scores_path);
    std::vector<double> s;
    std::vector<int> labels;
    for (std::size_t i = 0; i < rows.scores.size(); ++i) {
        if (!all_rows && rows.weak[i] == 1) continue;
        s.push_back(rows.scores[i]);
        labels.push_back(rows.truth[i]);
    }
    const EvalReport report = evaluate(s, labels);
    if (json_style) {
        std::cout << "eval n=" << report.n << " positives=" << report.positives
                  << " auroc=" << format_g17(report.auroc)
                  << " auprc=" << format_g17(report.auprc) << "\n";
    } else {
        std::cout << "AUROC " << format_f4(report.auroc) << "\n"
                  << "AUPRC " << format_f4(report.auprc) << "\n"
                  << "(" << report.n << " rows, " << report.positives << " positives"
                  << (all_rows ? "" : ", unlabeled pool only") << ")\n";
    }
    return 0;
}

int cmd_bench(const std::string& data, const std::string& input, const std::string& synthetic,
              int label_col, bool header, double ratio, const std::string& config,
              const std::string& seeds_spec, const std::string& out_dir, bool json_style) {
    const int modes = (!data.empty()) + (!input.empty()) + (!synthetic.empty());
    if (modes != 1) {
        throw ValidationError("bench: give exactly one of --data, --input or --synthetic");
    }
    const std::vector<std::uint64_t> seeds = expand_seeds(seeds_spec);
    TrainConfig base_cfg = config.empty() ? TrainConfig{} : parse_config_file(config);

    // A fixed cache keeps its stored split; raw and synthetic inputs re-draw
    // the weak-label split per seed, matching the multi-seed protocol.
    Matrix x_std;
    std::vector<int> truth;
    StandardizeStats stats;
    std::string source;
    LabeledDataset fixed;
    const bool resplit = data.empty();
    if (!data.empty()) {
        fixed = load_dataset_cache(data);
        source = fixed.source;
    } else if (!input.empty()) {
        const RawData raw = load_csv(input, label_col, header);
        x_std = standardize(raw.x, stats);
        truth = raw.labels;
        source = path_stem(input);
    } else {
        SyntheticSpec spec = load_synthetic_spec(synthetic);
        const LabeledDataset ds = make_synthetic(spec);
        x_std = ds.x;
        truth = ds.truth;
        stats = ds.stats;
        ratio = spec.label_ratio;
        source = path_stem(synthetic);
    }

    std::filesystem::create_directories(out_dir);
    std::vector<EvalReport> reports;
    for (const std::uint64_t seed : seeds) {
        LabeledDataset ds;
        if (resplit) {
            ds = split_weak_labels(x_std, truth, stats, ratio, seed);
            ds.source = source;
        } else {
            ds = fixed;
        }
        TrainConfig cfg = base_cfg;
        cfg.seed = seed;
        TrainArtifacts art = run_training(ds, cfg);
        write_scores_csv(out_dir + "/scores_seed" + std::to_string(seed) + ".csv", art.scores,
                         ds);
        art.report.dataset = source;
        reports.push_back(art.report);
        if (json_style) {
            std::cout << "bench-seed seed=" << seed << " auroc=" << format_g17(art.report.auroc)
                      << " auprc=" << format_g17(art.report.auprc) << "\n";
        } else {
            std::cout << "seed " << seed << "  AUROC " << format_f4(art.report.auroc)
                      << "  AUPRC " << format_f4(art.report.auprc) << "\n";
        }
        std::cout.flush();
    }
    const AggregateReport agg = aggregate(reports);

    const std::string report_path = out_dir + "/report.csv";
    std::ofstream rep(report_path);
    if (!rep) throw ValidationError("bench: cannot write " + report_path);
    rep << "seed,auroc,auprc,n,positives\n";
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        rep << seeds[i] << "," << format_g17(reports[i].auroc) << ","
            << format_g17(reports[i].auprc) << "," << reports[i].n << ","
            << reports[i].positives << "\n";
    }
    rep << "mean," << format_g17(agg.auroc_mean) << "," << format_g17(agg.auprc_mean) << ",,\n";
    rep << "std," << format_g17(agg.auroc_std) << "," << format_g17(agg.auprc_std) << ",,\n";
    rep.close();

    if (json_style) {
        std::cout << "bench dataset=" << source << " seeds=" << seeds.size()
                  << " auroc_mean=" << format_g17(agg.auroc_mean)
                  << " auroc_std=" << format_g17(agg.auroc_std)
                  << " auprc_mean=" << format_g17(agg.auprc_mean)
                  << " auprc_std=" << format_g17(agg.auprc_std) << " report=" << report_path
                  << "\n";
    } else {
        std::cout << "mean    AUROC " << format_f4(agg.auroc_mean) << "  AUPRC "
                  << format_f4(agg.auprc_mean) << "\n"
                  << "std     AUROC " << format_f4(agg.auroc_std) << "  AUPRC "
                  << format_f4(agg.auprc_std) << "\n"
                  << "report: " << report_path << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"wvad: weakly-supervised variational-mixture anomaly detection"};
    app.require_subcommand(1);

    // prepare
    auto* prep = app.add_subcommand("prepare", "standardize a CSV and split weak labels");
    std::string p_input, p_synth, p_out;
    int p_label_col = -1;
    bool p_header = false;
    double p_ratio = 0.1;
    std::uint64_t p_seed = 0;
    bool p_json = false;
    prep->add_option("--input", p_input, "raw CSV with a 0/1 label column");
    prep->add_option("--synthetic", p_synth, "synthetic spec file instead of a CSV");
    prep->add_option("--label-col", p_label_col, "label column index (default: last)");
    prep->add_flag("--header", p_header, "skip the first CSV line");
    prep->add_option("--ratio", p_ratio, "fraction of anomalies to weakly label");
    prep->add_option("--seed", p_seed, "split seed");
    prep->add_option("--out", p_out, "dataset cache path")->required();
    prep->add_flag("--json-style", p_json, "machine-readable summary line");

    // train
    auto* train = app.add_subcommand("train", "run the full training pipeline on a cache");
    std::string t_data, t_config, t_out, t_record;
    std::uint64_t t_seed = 0;
    bool t_json = false;
    train->add_option("--data", t_data, "dataset cache from prepare")->required();
    train->add_option("--config", t_config, "flat key-value config file");
    auto* t_seed_opt = train->add_option("--seed", t_seed, "override the config seed");
    train->add_option("--out", t_out, "checkpoint path")->required();
    train->add_option("--record", t_record, "run-record CSV path (default: <out>.record.csv)");
    train->add_flag("--json-style", t_json, "machine-readable summary line");

    // score
    auto* score = app.add_subcommand("score", "score a dataset with a trained checkpoint");
    std::string s_checkpoint, s_data, s_out;
    bool s_json = false;
    score->add_option("--checkpoint", s_checkpoint, "checkpoint from train")->required();
    score->add_option("--data", s_data, "dataset cache")->required();
    score->add_option("--out", s_out, "scores CSV path")->required();
    score->add_flag("--json-style", s_json, "machine-readable summary line");

    // eval
    auto* eval = app.add_subcommand("eval", "AUROC/AUPRC from a scores CSV");
    std::string e_scores;
    bool e_all = false;
    bool e_json = false;
    eval->add_option("--scores", e_scores, "scores CSV from score/bench")->required();
    eval->add_flag("--all", e_all, "evaluate all rows, not just the unlabeled pool");
    eval->add_flag("--json-style", e_json, "machine-readable summary line");

    // bench
    auto* bench = app.add_subcommand("bench", "multi-seed train/score/eval protocol");
    std::string b_data, b_input, b_synth, b_config, b_seeds = "10", b_out;
    int b_label_col = -1;
    bool b_header = false;
    double b_ratio = 0.1;
    bool b_json = false;
    bench->add_option("--data", b_data, "fixed dataset cache (keeps its split)");
    bench->add_option("--input", b_input, "raw CSV; weak labels re-split per seed");
    bench->add_option("--synthetic", b_synth, "synthetic spec; re-split per seed");
    bench->add_option("--label-col", b_label_col, "label column index (default: last)");
    bench->add_flag("--header", b_header, "skip the first CSV line");
    bench->add_option("--ratio", b_ratio, "label ratio for --input mode");
    bench->add_option("--config", b_config, "flat key-value config file");
    bench->add_option("--seeds", b_seeds, "seed count (N -> 1..N) or comma list");
    bench->add_option("--out", b_out, "output directory")->required();
    bench->add_flag("--json-style", b_json, "machine-readable summary lines");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (prep->parsed()) {
            return cmd_prepare(p_input, p_synth, p_label_col, p_header, p_ratio, p_seed, p_out,
                               p_json);
        }
        if (train->parsed()) {
            return cmd_train(t_data, t_config, t_seed_opt->count() > 0, t_seed, t_out, t_record,
                             t_json);
        }
        if (score->parsed()) return cmd_score(s_checkpoint, s_data, s_out, s_json);
        if (eval->parsed()) return cmd_eval(e_scores, e_all, e_json);
        if (bench->parsed()) {
            return cmd_bench(b_data, b_input, b_synth, b_label_col, b_header, b_ratio, b_config,
                             b_seeds, b_out, b_json);
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
