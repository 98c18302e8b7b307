#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>

#include "qsa/harness.hpp"
#include "qsa/qmc.hpp"

using namespace qsa;
using namespace qsa::harness;
namespace fs = std::filesystem;

namespace {

config::ExperimentConfig small_qmc(bool with_mc) {
    std::string text =
        "[experiment]\nkind = qmc\nT = 200\nTs = 0.1\nruns = 6\nmaster_seed = 7\n";
    text += with_mc ? "comparators = [mc]\n" : "";
    text += "[gain]\nrho = [0.7, 0.8]\n[probe]\nwaveform = triangle\nlog_rational_pairs = [(6, 1), (2, 1)]\n"
            "phi_draw = [0, 1]\n[averaging]\nkappa = 5\n[analysis]\nrate_window = [10, 200]\n";
    return config::parse_config(text, "small_qmc");
}

config::ExperimentConfig small_gfo() {
    return config::parse_config(
        "[experiment]\nkind = gfo\nT = 2000\nTs = 1\nruns = 4\nmaster_seed = 5\nchannels = [raw, pr, fb]\n"
        "comparators = [spsa1, spsa2]\n[gain]\na0 = 0.5\nrho = 0.85\ncapped = true\n[model]\nobjective = rastrigin\n"
        "dim = 2\nepsilon = 0.25\n[averaging]\nkappa = 5\n[analysis]\ncheckpoint_spacing = linear\n"
        "success_radius = 0.5\n",
        "small_gfo");
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("qsa_harness_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("seed derivation is deterministic and label separated") {
    CHECK(derive_seed(1, 0) == derive_seed(1, 0));
    std::set<std::uint64_t> seeds;
    for (std::uint64_t m = 0; m < 1000; ++m) {
        seeds.insert(derive_seed(42, m));
    }
    CHECK(seeds.size() == 1000);
    CHECK(derive_seed(1, 3) != derive_seed(2, 3));
    const auto s = derive_seed(9, 1);
    CHECK(derive_stream(s, "phases") != derive_stream(s, "theta0"));
    CHECK(derive_stream(s, "phases") == derive_stream(s, "phases"));
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("run ids, files and aggregate rows for a QMC sweep") {
    RunOptions opt;
    opt.out_dir = scratch("agg");
    opt.threads = 2;
    const auto res = run_experiment(small_qmc(true), opt);
    CHECK(res.runs.size() == 24);  // 2 rho x 6 replicates x 2 estimators
    CHECK_FALSE(res.any_diverged());
    CHECK(fs::exists(res.dir / "run_0.csv"));
    CHECK(fs::exists(res.dir / "run_11_mc.csv"));
    CHECK(fs::exists(res.dir / "config.echo"));
    CHECK(fs::exists(res.dir / "timing.csv"));
    std::ifstream agg(res.dir / "aggregate.csv");
    const auto rows = read_qmc_aggregate(agg);
    CHECK(rows.size() == 24);
    for (const auto& r : rows) {
        CHECK(r.scaled_error == doctest::Approx(std::pow(r.T, 2.0 * r.rho) * r.error));
        CHECK(r.T == doctest::Approx(200.0));
    }
    // replicates share phases and theta0 across rho
    const auto a = res.select("qsa", 0.7);
    const auto b = res.select("qsa", 0.8);
    REQUIRE(a.size() == 6);
    REQUIRE(b.size() == 6);
    CHECK(a[2]->summary.seed == b[2]->summary.seed);
    CHECK(a[2]->series.raw.front() == b[2]->series.raw.front());
    CHECK(a[2]->summary.run_id == 2);
    CHECK(b[2]->summary.run_id == 8);
    fs::remove_all(*opt.out_dir);
}

TEST_CASE("artifacts are identical for any thread count") {
    const auto cfg = small_qmc(true);
    RunOptions one;
    one.threads = 1;
    one.out_dir = scratch("t1");
    RunOptions many = one;
    many.threads = 4;
    many.out_dir = scratch("t4");
    const auto r1 = run_experiment(cfg, one);
    const auto r4 = run_experiment(cfg, many);
    for (const char* f : {"aggregate.csv", "runs.csv", "summary.json", "config.echo", "run_3.csv", "run_7_mc.csv"}) {
        CAPTURE(f);
        CHECK(slurp(r1.dir / f) == slurp(r4.dir / f));
    }
    fs::remove_all(*one.out_dir);
    fs::remove_all(*many.out_dir);
}

TEST_CASE("adding a comparator leaves the QSA streams unchanged") {
    RunOptions opt;
    opt.write_artifacts = false;
    const auto with = run_experiment(small_qmc(true), opt);
    const auto without = run_experiment(small_qmc(false), opt);
    const auto a = with.select("qsa", 0.7);
    const auto b = without.select("qsa", 0.7);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i]->series.pr == b[i]->series.pr);
    }
    CHECK(with.dir.empty());
}

TEST_CASE("analyze regenerates summary.json byte for byte") {
    RunOptions opt;
    opt.out_dir = scratch("analyze");
    const auto res = run_experiment(small_gfo(), opt);
    const std::string before = slurp(res.dir / "summary.json");
    fs::remove(res.dir / "summary.json");
    const auto again = analyze(res.dir);
    CHECK(slurp(res.dir / "summary.json") == before);
    CHECK(again == res.summary);
    fs::remove_all(*opt.out_dir);
}

TEST_CASE("gfo summary carries fits, covariance trace and evaluation counts") {
    RunOptions opt;
    opt.write_artifacts = false;
    const auto res = run_experiment(small_gfo(), opt);
    const auto& s = res.summary;
    CHECK(s["channels"]["pr"].size() == 3);  // qsa, spsa1, spsa2
    CHECK(s["channels"]["fb"].size() == 1);
    CHECK(s["covariance_trace"][0]["points"].size() == 10);
    CHECK(s["covariance_trace"][0]["points"][9][0].get<double>() == doctest::Approx(2000.0));
    CHECK(s["covariance_trace"][0]["points"][0][0].get<double>() == doctest::Approx(200.0));
    // forward plus backward 1qSGD: one evaluation per step each; spsa2 uses two per step
    CHECK(s["evaluations"]["qsa"].get<std::uint64_t>() == 4u * 2u * 2000u);
    CHECK(s["evaluations"]["spsa1"].get<std::uint64_t>() == 4u * 2000u);
    CHECK(s["evaluations"]["spsa2"].get<std::uint64_t>() == 4u * 2u * 2000u);
    CHECK(s["runs"].size() == 12);
    CHECK(s["probe"]["omega"].size() == 2);
    for (double w : s["probe"]["omega"].get<std::vector<double>>()) {
        CHECK(w >= 0.05);
        CHECK(w <= 0.5);
    }
    for (const auto& r : res.runs) {
        const double box = 5.12;
        for (double x : r.series.raw) {
            CHECK(std::abs(x) <= box);
        }
    }
}

TEST_CASE("frequencies are fixed per experiment and phases vary per run") {
    RunOptions opt;
    opt.write_artifacts = false;
    auto cfg = small_gfo();
    cfg.comparators.clear();
    const auto a = run_experiment(cfg, opt);
    cfg.runs = 8;
    const auto b = run_experiment(cfg, opt);
    CHECK(a.summary["probe"] == b.summary["probe"]);
    // the first four replicates do not depend on how many runs follow
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(a.runs[i].series.pr == b.runs[i].series.pr);
    }
    CHECK(a.runs[0].series.raw.front() != a.runs[1].series.raw.front());
    cfg.master_seed = 6;
    const auto c = run_experiment(cfg, opt);
    CHECK(c.summary["probe"] != a.summary["probe"]);
}

TEST_CASE("divergent runs are flagged and kept") {
    const auto cfg = config::parse_config(
        "[experiment]\nkind = linear_example\nT = 2000\nTs = 1\nruns = 2\n[gain]\na0 = 1e6\nrho = 0.7\n"
        "[averaging]\nkappa = 4\n",
        "blowup");
    RunOptions opt;
    opt.out_dir = scratch("diverge");
    const auto res = run_experiment(cfg, opt);
    CHECK(res.any_diverged());
    REQUIRE(res.runs.size() == 2);
    CHECK(res.runs[0].summary.diverged);
    CHECK(res.runs[0].summary.divergence_step > 0);
    CHECK(res.summary["diverged"].size() == 2);
    CHECK(res.summary["runs"].size() == 2);
    const std::string runs = slurp(res.dir / "runs.csv");
    CHECK(std::count(runs.begin(), runs.end(), '\n') == 3);
    CHECK_FALSE(fs::exists(res.dir / "run_0.csv"));
    CHECK(analyze(res.dir) == res.summary);
    fs::remove_all(*opt.out_dir);
}

TEST_CASE("linear example summary has closed-form and numeric bias") {
    const auto cfg = config::parse_config(
        "[experiment]\nkind = linear_example\nT = 2000\nTs = 0.01\nchannels = [raw, pr, fb]\n[gain]\nrho = 0.7\n"
        "[averaging]\nkappa = 4\n[analysis]\nybar_T = 200\nybar_dt = 0.01\n",
        "lin");
    RunOptions opt;
    opt.write_artifacts = false;
    const auto res = run_experiment(cfg, opt);
    const auto& y = res.summary["ybar"];
    CHECK(y["closed_form"][0].get<double>() == doctest::Approx(250.0 / std::numbers::pi));
    CHECK(y["closed_form"][1].get<double>() == doctest::Approx(25.0 * std::sqrt(5.0)));
    CHECK(y["numeric_backward"][0].get<double>() == doctest::Approx(-y["numeric"][0].get<double>()));
    CHECK(res.summary["pr_bias"].size() == 1);
    CHECK(res.summary["pr_bias"][0]["c_kappa_rho"].get<double>() == doctest::Approx(c_kappa_rho(4.0, 0.7)));
    CHECK(res.runs[0].series.has_fb());
    // the echoed config reproduces the run table
    const auto echoed = config::parse_config(config::serialize(cfg), "lin");
    CHECK(run_experiment(echoed, opt).summary == res.summary);
}

TEST_CASE("invalid configs are rejected before any run") {
    auto cfg = small_qmc(false);
    cfg.kappa = 1.0;
    CHECK_THROWS_AS(run_experiment(cfg), ValidationError);
}
