#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

// End-to-end checks of the installed binary: every case spawns the real CLI
// and inspects exit codes, stdout and the files it writes.

namespace {

namespace fs = std::filesystem;

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
};

fs::path tmp_root() {
    const fs::path dir = fs::path(WVAD_TEST_TMP) / "cli";
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    out << body;
}

RunResult run_cli(const std::string& args) {
    static int call = 0;
    const fs::path out = tmp_root() / ("stdout" + std::to_string(call) + ".txt");
    const fs::path err = tmp_root() / ("stderr" + std::to_string(call) + ".txt");
    ++call;
    const std::string cmd = std::string("\"") + WVAD_CLI_PATH + "\" " + args + " > " +
                            out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

std::size_t line_count(const std::string& text) {
    std::size_t n = 0;
    for (const char c : text) n += (c == '\n');
    return n;
}

// Small, well-separated two-cluster problem that trains in milliseconds.
fs::path write_easy_spec(const fs::path& dir) {
    const fs::path path = dir / "spec.txt";
    write_file(path,
               "dim = 4\n"
               "placement = global-outskirts\n"
               "anomalies = 8\n"
               "jitter = 0.1\n"
               "label_ratio = 0.25\n"
               "seed = 3\n"
               "cluster0.mean = 4 0 0 0\n"
               "cluster0.scale = 1\n"
               "cluster0.size = 30\n"
               "cluster1.mean = -4 0 0 0\n"
               "cluster1.scale = 1\n"
               "cluster1.size = 30\n");
    return path;
}

fs::path write_tiny_config(const fs::path& dir) {
    const fs::path path = dir / "config.txt";
    write_file(path,
               "e1 = 3\n"
               "e2 = 3\n"
               "e3 = 4\n"
               "seed = 5\n");
    return path;
}

}  // namespace

TEST_CASE("cli: prepare/train/score/eval pipeline") {
    const fs::path dir = tmp_root() / "pipeline";
    fs::create_directories(dir);
    const fs::path spec = write_easy_spec(dir);
    const fs::path config = write_tiny_config(dir);
    const fs::path cache = dir / "data.cache";
    const fs::path ckpt = dir / "model.json";
    const fs::path scores = dir / "scores.csv";

    const RunResult prep =
        run_cli("prepare --synthetic " + spec.string() + " --out " + cache.string());
    CHECK(prep.code == 0);
    CHECK(prep.out == "68 rows, 4 dims, 2 labeled anomalies\n");
    CHECK(fs::exists(cache));
    CHECK(fs::exists(cache.string() + ".meta"));

    const RunResult train = run_cli("train --data " + cache.string() + " --config " +
                                    config.string() + " --out " + ckpt.string());
    CHECK(train.code == 0);
    CHECK(train.out.find("trained 10 epochs") != std::string::npos);
    CHECK(fs::exists(ckpt));
    CHECK(fs::exists(ckpt.string() + ".record.csv"));

    const RunResult score = run_cli("score --checkpoint " + ckpt.string() + " --data " +
                                    cache.string() + " --out " + scores.string());
    CHECK(score.code == 0);
    CHECK(score.out == "scored 68 rows -> " + scores.string() + "\n");
    const std::string body = slurp(scores);
    CHECK(line_count(body) == 69);  // header + one row per dataset row
    CHECK(body.rfind("index,score,weak_label,true_label\n", 0) == 0);

    const RunResult eval = run_cli("eval --scores " + scores.string());
    CHECK(eval.code == 0);
    CHECK(eval.out.find("AUROC ") != std::string::npos);
    CHECK(eval.out.find("AUPRC ") != std::string::npos);
    CHECK(eval.out.find("(66 rows, 6 positives, unlabeled pool only)") != std::string::npos);

    const RunResult eval_json = run_cli("eval --scores " + scores.string() + " --json-style");
    CHECK(eval_json.code == 0);
    CHECK(eval_json.out.rfind("eval n=66 positives=6 auroc=", 0) == 0);
}

TEST_CASE("cli: train --json-style emits one machine line") {
    const fs::path dir = tmp_root() / "train_json";
    fs::create_directories(dir);
    const fs::path spec = write_easy_spec(dir);
    const fs::path config = write_tiny_config(dir);
    const fs::path cache = dir / "data.cache";
    REQUIRE(run_cli("prepare --synthetic " + spec.string() + " --out " + cache.string()).code ==
            0);
    const RunResult train =
        run_cli("train --data " + cache.string() + " --config " + config.string() + " --out " +
                (dir / "model.json").string() + " --json-style");
    CHECK(train.code == 0);
    CHECK(train.out.rfind("train epochs=10 auroc=", 0) == 0);
    CHECK(line_count(train.out) == 1);
}

TEST_CASE("cli: prepare is deterministic and tracks the spec seed") {
    const fs::path dir = tmp_root() / "determinism";
    fs::create_directories(dir);
    const fs::path spec = write_easy_spec(dir);
    const fs::path a = dir / "a.cache";
    const fs::path b = dir / "b.cache";
    REQUIRE(run_cli("prepare --synthetic " + spec.string() + " --out " + a.string()).code == 0);
    REQUIRE(run_cli("prepare --synthetic " + spec.string() + " --out " + b.string()).code == 0);
    CHECK(slurp(a) == slurp(b));
    CHECK(slurp(a.string() + ".meta") == slurp(b.string() + ".meta"));

    std::string other = slurp(spec);
    const auto pos = other.find("seed = 3");
    REQUIRE(pos != std::string::npos);
    other.replace(pos, 8, "seed = 4");
    const fs::path spec2 = dir / "spec2.txt";
    write_file(spec2, other);
    const fs::path c = dir / "c.cache";
    REQUIRE(run_cli("prepare --synthetic " + spec2.string() + " --out " + c.string()).code == 0);
    CHECK(slurp(a) != slurp(c));
}

TEST_CASE("cli: train twice writes byte-identical checkpoints") {
    const fs::path dir = tmp_root() / "train_repeat";
    fs::create_directories(dir);
    const fs::path spec = write_easy_spec(dir);
    const fs::path config = write_tiny_config(dir);
    const fs::path cache = dir / "data.cache";
    REQUIRE(run_cli("prepare --synthetic " + spec.string() + " --out " + cache.string()).code ==
            0);
    const fs::path first = dir / "first.json";
    const fs::path second = dir / "second.json";
    REQUIRE(run_cli("train --data " + cache.string() + " --config " + config.string() +
                    " --out " + first.string())
                .code == 0);
    REQUIRE(run_cli("train --data " + cache.string() + " --config " + config.string() +
                    " --out " + second.string())
                .code == 0);
    CHECK(slurp(first) == slurp(second));
    CHECK(slurp(first.string() + ".record.csv") != "");
}

TEST_CASE("cli: prepare accepts a raw CSV with and without a header") {
    const fs::path dir = tmp_root() / "raw_csv";
    fs::create_directories(dir);
    const std::string rows =
        "1.0,2.0,0\n0.9,2.2,0\n1.2,1.9,0\n0.8,2.1,0\n1.1,2.0,0\n"
        "5.0,6.0,0\n5.2,6.1,0\n4.9,5.8,0\n5.1,6.2,0\n4.8,6.0,0\n"
        "9.0,9.5,1\n3.0,4.0,1\n";
    const fs::path plain = dir / "plain.csv";
    write_file(plain, rows);
    const RunResult r1 = run_cli("prepare --input " + plain.string() +
                                 " --ratio 0.5 --seed 7 --out " + (dir / "p.cache").string());
    CHECK(r1.code == 0);
    CHECK(r1.out == "12 rows, 2 dims, 1 labeled anomalies\n");

    const fs::path with_header = dir / "header.csv";
    write_file(with_header, "a,b,label\n" + rows);
    const RunResult r2 =
        run_cli("prepare --input " + with_header.string() + " --header --ratio 0.5 --seed 7 " +
                "--out " + (dir / "h.cache").string());
    CHECK(r2.code == 0);
    CHECK(r2.out == "12 rows, 2 dims, 1 labeled anomalies\n");
    CHECK(slurp(dir / "p.cache") == slurp(dir / "h.cache"));
}

TEST_CASE("cli: eval matches hand-computed metrics and --all widens the pool") {
    const fs::path dir = tmp_root() / "eval_hand";
    fs::create_directories(dir);
    const fs::path scores = dir / "scores.csv";
    write_file(scores,
               "index,score,weak_label,true_label\n"
               "0,9.0,1,1\n"
               "1,0.1,0,1\n"
               "2,1.0,0,0\n");
    // pool = rows 1,2: the positive ranks below the negative -> AUROC 0
    const RunResult pool = run_cli("eval --scores " + scores.string());
    CHECK(pool.code == 0);
    CHECK(pool.out.find("AUROC 0.0000") != std::string::npos);
    // --all re-admits the weak row: positives at ranks 1 and 3 -> AUROC 1/2
    const RunResult all = run_cli("eval --scores " + scores.string() + " --all");
    CHECK(all.code == 0);
    CHECK(all.out.find("AUROC 0.5000") != std::string::npos);
    CHECK(all.out.find("(3 rows, 2 positives)") != std::string::npos);
}

TEST_CASE("cli: bench writes per-seed scores and an aggregate report") {
    const fs::path dir = tmp_root() / "bench";
    fs::create_directories(dir);
    const fs::path spec = write_easy_spec(dir);
    const fs::path config = write_tiny_config(dir);
    const fs::path out = dir / "runs";

    const RunResult r = run_cli("bench --synthetic " + spec.string() + " --config " +
                                config.string() + " --seeds 2 --out " + out.string() +
                                " --json-style");
    CHECK(r.code == 0);
    CHECK(fs::exists(out / "scores_seed1.csv"));
    CHECK(fs::exists(out / "scores_seed2.csv"));
    CHECK(fs::exists(out / "report.csv"));

    const std::string report = slurp(out / "report.csv");
    CHECK(line_count(report) == 5);  // header, two seeds, mean, std
    CHECK(report.rfind("seed,auroc,auprc,n,positives\n", 0) == 0);
    CHECK(report.find("\nmean,") != std::string::npos);
    CHECK(report.find("\nstd,") != std::string::npos);

    CHECK(r.out.find("bench-seed seed=1 ") != std::string::npos);
    CHECK(r.out.find("bench-seed seed=2 ") != std::string::npos);
    CHECK(r.out.find("bench dataset=spec seeds=2 ") != std::string::npos);

    // explicit comma list picks exactly those seeds
    const fs::path out2 = dir / "picked";
    const RunResult r2 = run_cli("bench --synthetic " + spec.string() + " --config " +
                                 config.string() + " --seeds 3,7 --out " + out2.string());
    CHECK(r2.code == 0);
    CHECK(fs::exists(out2 / "scores_seed3.csv"));
    CHECK(fs::exists(out2 / "scores_seed7.csv"));
    CHECK(!fs::exists(out2 / "scores_seed1.csv"));
}

TEST_CASE("cli: bench runs are byte-reproducible") {
    const fs::path dir = tmp_root() / "bench_repeat";
    fs::create_directories(dir);
    const fs::path spec = write_easy_spec(dir);
    const fs::path config = write_tiny_config(dir);
    const std::string args = "bench --synthetic " + spec.string() + " --config " +
                             config.string() + " --seeds 2 --out ";
    REQUIRE(run_cli(args + (dir / "one").string()).code == 0);
    REQUIRE(run_cli(args + (dir / "two").string()).code == 0);
    for (const char* name : {"scores_seed1.csv", "scores_seed2.csv", "report.csv"}) {
        CAPTURE(name);
        CHECK(slurp(dir / "one" / name) == slurp(dir / "two" / name));
    }
}

TEST_CASE("cli: usage problems exit 2") {
    const fs::path dir = tmp_root() / "usage";
    fs::create_directories(dir);
    CHECK(run_cli("").code == 2);                      // missing subcommand
    CHECK(run_cli("frobnicate").code == 2);            // unknown subcommand
    CHECK(run_cli("eval").code == 2);                  // missing required flag
    CHECK(run_cli("eval --scores x --bogus").code == 2);  // unknown flag

    const fs::path spec = write_easy_spec(dir);
    const fs::path csv = dir / "d.csv";
    write_file(csv, "1,0\n2,1\n3,0\n");
    CHECK(run_cli("prepare --input " + csv.string() + " --synthetic " + spec.string() +
                  " --out " + (dir / "x.cache").string())
              .code == 2);  // both input modes at once
    CHECK(run_cli("train --data " + (dir / "nope.cache").string() + " --out " +
                  (dir / "m.json").string())
              .code == 2);  // missing dataset cache
    const fs::path bad_scores = dir / "empty.csv";
    write_file(bad_scores, "index,score,weak_label,true_label\n");
    CHECK(run_cli("eval --scores " + bad_scores.string()).code == 2);  // no data rows
    CHECK(run_cli("--help").code == 0);
}

TEST_CASE("cli: runtime failures exit 3") {
    const fs::path dir = tmp_root() / "runtime";
    fs::create_directories(dir);
    const fs::path spec = write_easy_spec(dir);
    const fs::path cache = dir / "data.cache";
    REQUIRE(run_cli("prepare --synthetic " + spec.string() + " --out " + cache.string()).code ==
            0);
    // an absurd learning rate drives the weights non-finite within an epoch
    const fs::path config = dir / "diverge.txt";
    write_file(config, "e1 = 2\ne2 = 1\ne3 = 1\nlr = 1e154\n");
    const RunResult r = run_cli("train --data " + cache.string() + " --config " +
                                config.string() + " --out " + (dir / "m.json").string());
    CHECK(r.code == 3);
    CHECK(r.err.find("error:") != std::string::npos);
}
