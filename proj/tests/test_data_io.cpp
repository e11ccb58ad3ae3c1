#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "wvad/data_io.hpp"
#include "wvad/rng.hpp"

using namespace wvad;

namespace {

std::filesystem::path tmp_dir() {
    const std::filesystem::path dir = std::filesystem::path(WVAD_TEST_TMP) / "data_io";
    std::filesystem::create_directories(dir);
    return dir;
}

std::string write_file(const std::string& name, const std::string& body) {
    const auto path = tmp_dir() / name;
    std::ofstream out(path);
    out << body;
    out.close();
    return path.string();
}

}  // namespace

TEST_CASE("data_io: load_csv parses rows and splits the label column") {
    const auto path = write_file("basic.csv", "1.5,2.5,0\n-3,4,1\n0,0,0\n");
    const RawData raw = load_csv(path);
    REQUIRE(raw.x.rows() == 3);
    REQUIRE(raw.x.cols() == 2);
    CHECK(raw.x(0, 0) == 1.5);
    CHECK(raw.x(1, 1) == 4.0);
    CHECK(raw.labels == std::vector<int>{0, 1, 0});
}

TEST_CASE("data_io: load_csv respects header flag and explicit label column") {
    const auto path = write_file("header.csv", "a,b,c\n1,0,9\n2,1,8\n");
    const RawData raw = load_csv(path, 1, true);
    REQUIRE(raw.x.rows() == 2);
    REQUIRE(raw.x.cols() == 2);
    CHECK(raw.x(0, 0) == 1.0);
    CHECK(raw.x(0, 1) == 9.0);
    CHECK(raw.labels == std::vector<int>{0, 1});
}

TEST_CASE("data_io: load_csv reports malformed input with line numbers") {
    const auto ragged = write_file("ragged.csv", "1,2,0\n1,2,3,0\n");
    CHECK_THROWS_WITH_AS(load_csv(ragged), doctest::Contains("line 2"), ParseError);

    const auto text = write_file("text.csv", "1,2,0\n1,oops,0\n");
    CHECK_THROWS_WITH_AS(load_csv(text), doctest::Contains("line 2"), ParseError);

    const auto badlabel = write_file("badlabel.csv", "1,2,0\n1,2,7\n");
    CHECK_THROWS_AS(load_csv(badlabel), ParseError);

    const auto empty = write_file("empty.csv", "");
    CHECK_THROWS_AS(load_csv(empty), ParseError);

    CHECK_THROWS_AS(load_csv((tmp_dir() / "missing.csv").string()), ValidationError);

    const auto ok = write_file("ok.csv", "1,2,0\n3,4,1\n");
    CHECK_THROWS_AS(load_csv(ok, 5), ValidationError);  // label column out of range
}

TEST_CASE("data_io: standardize maps {1,3} to {-1,+1} with population stats") {
    Matrix raw(2, 1);
    raw << 1.0, 3.0;
    StandardizeStats stats;
    const Matrix z = standardize(raw, stats);
    CHECK(z(0, 0) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(z(1, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(stats.mean[0] == doctest::Approx(2.0));
    CHECK(stats.std[0] == doctest::Approx(1.0));  // population: sqrt(((1)^2+(1)^2)/2)
}

TEST_CASE("data_io: standardize is idempotent") {
    auto rng = make_rng(601);
    std::normal_distribution<double> dist(3.0, 2.5);
    Matrix raw(40, 3);
    for (Eigen::Index r = 0; r < raw.rows(); ++r)
        for (Eigen::Index c = 0; c < raw.cols(); ++c) raw(r, c) = dist(rng);
    StandardizeStats s1, s2;
    const Matrix once = standardize(raw, s1);
    const Matrix twice = standardize(once, s2);
    CHECK((twice - once).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(s2.mean.cwiseAbs().maxCoeff() < 1e-12);
    for (Eigen::Index c = 0; c < 3; ++c) CHECK(s2.std[c] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("data_io: constant columns are centered, flagged, and warned about") {
    Matrix raw(3, 2);
    raw << 7.0, 1.0, 7.0, 2.0, 7.0, 3.0;
    StandardizeStats stats;
    std::vector<std::string> warnings;
    const Matrix z = standardize(raw, stats, &warnings);
    CHECK(z.col(0).cwiseAbs().maxCoeff() == 0.0);
    CHECK(stats.constant_columns == std::vector<int>{0});
    CHECK(stats.std[0] == 1.0);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("column 0") != std::string::npos);
    CHECK(warnings[0].find("constant") != std::string::npos);

    Matrix one_row(1, 2);
    one_row << 1.0, 2.0;
    StandardizeStats s;
    CHECK_THROWS_AS(standardize(one_row, s), ValidationError);
}

TEST_CASE("data_io: weak label counts round half up") {
    CHECK(weak_label_count(126, 0.10) == 13);  // Ionosphere at 10%
    CHECK(weak_label_count(126, 0.05) == 6);   // Ionosphere at 5%
    CHECK(weak_label_count(100, 0.10) == 10);  // Letter at 10%
    CHECK(weak_label_count(75, 0.02) == 2);    // 1.5 rounds up
    CHECK(weak_label_count(10, 0.24) == 2);    // 2.4 rounds down
}

TEST_CASE("data_io: split draws the right number of weak labels from the anomalies") {
    auto rng = make_rng(602);
    std::normal_distribution<double> dist(0.0, 1.0);
    const int n = 200;
    Matrix x(n, 2);
    std::vector<int> truth(n, 0);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = dist(rng);
        x(i, 1) = dist(rng);
        truth[i] = i < 100 ? 1 : 0;  // 100 anomalies
    }
    StandardizeStats stats;
    const Matrix z = standardize(x, stats);
    const LabeledDataset ds = split_weak_labels(z, truth, stats, 0.10, 42);
    CHECK(ds.weak_count() == 10);
    CHECK(ds.anomaly_count() == 100);
    CHECK(ds.label_ratio == 0.10);
    CHECK(ds.split_seed == 42);
    for (int i = 0; i < n; ++i) {
        if (ds.weak[i] == 1) CHECK(ds.truth[i] == 1);  // weak implies true anomaly
    }

    // deterministic given the seed; different seeds give different subsets
    const LabeledDataset same = split_weak_labels(z, truth, stats, 0.10, 42);
    CHECK(same.weak == ds.weak);
    bool any_diff = false;
    for (std::uint64_t seed = 43; seed < 48 && !any_diff; ++seed) {
        const LabeledDataset other = split_weak_labels(z, truth, stats, 0.10, seed);
        any_diff = other.weak != ds.weak;
    }
    CHECK(any_diff);
}

TEST_CASE("data_io: split rejects out-of-range ratios and empty outcomes") {
    Matrix x(4, 1);
    x << 0.0, 1.0, 2.0, 3.0;
    std::vector<int> truth = {1, 1, 1, 0};
    StandardizeStats stats;
    const Matrix z = standardize(x, stats);
    CHECK_THROWS_AS(split_weak_labels(z, truth, stats, 1.0, 1), ValidationError);
    CHECK_THROWS_AS(split_weak_labels(z, truth, stats, 0.0, 1), ValidationError);
    CHECK_THROWS_AS(split_weak_labels(z, truth, stats, -0.1, 1), ValidationError);
    // 3 anomalies at 10% rounds to zero labels
    CHECK_THROWS_AS(split_weak_labels(z, truth, stats, 0.10, 1), ValidationError);
    // no anomalies at all
    std::vector<int> clean = {0, 0, 0, 0};
    CHECK_THROWS_AS(split_weak_labels(z, clean, stats, 0.5, 1), ValidationError);
}

TEST_CASE("data_io: synthetic counts, determinism, and weak labeling") {
    SyntheticSpec spec = two_cluster_spec(3, 4.0, 1.0, 100, 20, 9);
    const LabeledDataset a = make_synthetic(spec);
    CHECK(a.rows() == 220);
    CHECK(a.dims() == 3);
    CHECK(a.anomaly_count() == 20);
    CHECK(a.weak_count() == 2);  // 10% of 20
    CHECK(a.source == "synthetic");

    const LabeledDataset b = make_synthetic(spec);
    CHECK((a.x - b.x).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.weak == b.weak);
    CHECK(a.truth == b.truth);

    spec.seed = 10;
    const LabeledDataset c = make_synthetic(spec);
    CHECK((a.x - c.x).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("data_io: between-cluster anomalies are not fringe points") {
    // Two tight-ish clusters at +-5 with scale 2.5: the normals' 95th
    // percentile distance-to-own-center exceeds the anomalies' distance to
    // the nearest center, i.e. "nearest-cluster distance separates them"
    // is FALSE for local anomalies.
    SyntheticSpec spec = two_cluster_spec(2, 5.0, 2.5, 200, 20, 3);
    const LabeledDataset ds = make_synthetic(spec);

    // cluster centers mapped into the standardized frame
    std::vector<Vector> centers;
    for (const auto& cl : spec.clusters) {
        Vector c(2);
        for (int j = 0; j < 2; ++j) c[j] = (cl.mean[j] - ds.stats.mean[j]) / ds.stats.std[j];
        centers.push_back(c);
    }
    auto nearest = [&](const Vector& p) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& c : centers) best = std::min(best, (p - c).norm());
        return best;
    };
    std::vector<double> normal_d, anomaly_d;
    for (Eigen::Index r = 0; r < ds.rows(); ++r) {
        const Vector p = ds.x.row(r).transpose();
        (ds.truth[r] == 1 ? anomaly_d : normal_d).push_back(nearest(p));
    }
    std::sort(normal_d.begin(), normal_d.end());
    const double pct95 = normal_d[static_cast<std::size_t>(0.95 * (normal_d.size() - 1))];
    double max_anomaly = 0.0;
    for (double d : anomaly_d) max_anomaly = std::max(max_anomaly, d);
    CHECK(max_anomaly < pct95);  // distance alone cannot carve these out
}

TEST_CASE("data_io: global-outskirt anomalies do sit past the normals") {
    SyntheticSpec spec = two_cluster_spec(2, 5.0, 1.0, 200, 20, 4);
    spec.placement = AnomalyPlacement::GlobalOutskirts;
    const LabeledDataset ds = make_synthetic(spec);
    std::vector<Vector> centers;
    for (const auto& cl : spec.clusters) {
        Vector c(2);
        for (int j = 0; j < 2; ++j) c[j] = (cl.mean[j] - ds.stats.mean[j]) / ds.stats.std[j];
        centers.push_back(c);
    }
    auto nearest = [&](const Vector& p) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& c : centers) best = std::min(best, (p - c).norm());
        return best;
    };
    double min_anomaly = std::numeric_limits<double>::infinity();
    std::vector<double> normal_d;
    for (Eigen::Index r = 0; r < ds.rows(); ++r) {
        const double d = nearest(ds.x.row(r).transpose());
        if (ds.truth[r] == 1) min_anomaly = std::min(min_anomaly, d);
        else normal_d.push_back(d);
    }
    std::sort(normal_d.begin(), normal_d.end());
    const double pct95 = normal_d[static_cast<std::size_t>(0.95 * (normal_d.size() - 1))];
    CHECK(min_anomaly > pct95);
}

TEST_CASE("data_io: synthetic spec validation") {
    SyntheticSpec spec = two_cluster_spec(2, 3.0, 1.0, 50, 10, 0);
    spec.clusters.resize(1);
    CHECK_THROWS_AS(make_synthetic(spec), ValidationError);  // between needs 2 clusters

    SyntheticSpec tiny = two_cluster_spec(2, 3.0, 1.0, 1, 10, 0);
    CHECK_THROWS_AS(make_synthetic(tiny), ValidationError);  // cluster size < 2

    SyntheticSpec bad_scale = two_cluster_spec(2, 3.0, -1.0, 50, 10, 0);
    CHECK_THROWS_AS(make_synthetic(bad_scale), ValidationError);

    SyntheticSpec bad_dim = two_cluster_spec(2, 3.0, 1.0, 50, 10, 0);
    bad_dim.clusters[0].mean = Vector::Zero(3);
    CHECK_THROWS_AS(make_synthetic(bad_dim), ValidationError);
}

TEST_CASE("data_io: synthetic spec file round-trip") {
    SyntheticSpec spec = two_cluster_spec(3, 2.5, 1.5, 80, 15, 77);
    spec.placement = AnomalyPlacement::GlobalOutskirts;
    spec.anomaly_jitter = 0.25;
    spec.label_ratio = 0.2;
    const auto path = (tmp_dir() / "spec.txt").string();
    save_synthetic_spec(spec, path);
    const SyntheticSpec back = load_synthetic_spec(path);
    CHECK(back.dim == 3);
    CHECK(back.placement == AnomalyPlacement::GlobalOutskirts);
    CHECK(back.anomaly_count == 15);
    CHECK(back.anomaly_jitter == doctest::Approx(0.25));
    CHECK(back.label_ratio == doctest::Approx(0.2));
    CHECK(back.seed == 77);
    REQUIRE(back.clusters.size() == 2);
    CHECK(back.clusters[0].mean[0] == doctest::Approx(2.5));
    CHECK(back.clusters[1].mean[0] == doctest::Approx(-2.5));
    CHECK(back.clusters[0].scale == doctest::Approx(1.5));
    CHECK(back.clusters[0].size == 80);

    // generated data from the reloaded spec matches bitwise
    const LabeledDataset a = make_synthetic(spec);
    const LabeledDataset b = make_synthetic(back);
    CHECK((a.x - b.x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("data_io: synthetic spec file parse errors") {
    const auto bad_placement = write_file("spec_badplace.txt", "dim = 2\nplacement = sideways\n");
    CHECK_THROWS_AS(load_synthetic_spec(bad_placement), ParseError);
    const auto bad_key = write_file("spec_badkey.txt", "dim = 2\nwhat = 3\n");
    CHECK_THROWS_AS(load_synthetic_spec(bad_key), ParseError);
    const auto no_eq = write_file("spec_noeq.txt", "dim 2\n");
    CHECK_THROWS_AS(load_synthetic_spec(no_eq), ParseError);
    CHECK_THROWS_AS(load_synthetic_spec((tmp_dir() / "nope.txt").string()), ValidationError);
}

TEST_CASE("data_io: dataset cache round-trips bit-exactly") {
    SyntheticSpec spec = two_cluster_spec(4, 3.0, 1.0, 60, 12, 5);
    const LabeledDataset ds = make_synthetic(spec);
    const auto path = (tmp_dir() / "cache.csv").string();
    save_dataset_cache(ds, path);
    const LabeledDataset back = load_dataset_cache(path);
    CHECK((back.x - ds.x).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.weak == ds.weak);
    CHECK(back.truth == ds.truth);
    CHECK(back.source == ds.source);
    CHECK(back.label_ratio == ds.label_ratio);
    CHECK(back.split_seed == ds.split_seed);
    CHECK((back.stats.mean - ds.stats.mean).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.stats.std - ds.stats.std).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.stats.constant_columns == ds.stats.constant_columns);
}

TEST_CASE("data_io: dataset cache rejects tampered files") {
    SyntheticSpec spec = two_cluster_spec(2, 3.0, 1.0, 30, 6, 5);
    const LabeledDataset ds = make_synthetic(spec);
    const auto path = (tmp_dir() / "tamper.csv").string();
    save_dataset_cache(ds, path);

    // weak=1 on a truth=0 row contradicts the weak-supervision contract
    std::ifstream in(path);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const auto pos = all.find(",0,0\n");
    REQUIRE(pos != std::string::npos);
    all.replace(pos, 5, ",1,0\n");
    std::ofstream out(path);
    out << all;
    out.close();
    CHECK_THROWS_AS(load_dataset_cache(path), ValidationError);

    CHECK_THROWS_AS(load_dataset_cache((tmp_dir() / "missing_cache.csv").string()),
                    ValidationError);
}
