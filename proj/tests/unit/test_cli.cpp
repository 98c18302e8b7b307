#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const std::string kCli = QSA_CLI_PATH;
const std::string kConfigs = QSA_CONFIG_DIR;

int cli(const std::string& args) {
    const std::string cmd = "\"" + kCli + "\" " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("qsa_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

fs::path write_config(const fs::path& dir, const std::string& name, const std::string& text) {
    const fs::path p = dir / name;
    std::ofstream(p) << text;
    return p;
}

}  // namespace

TEST_CASE("validate accepts every shipped config") {
    for (const auto& entry : fs::directory_iterator(kConfigs)) {
        if (entry.path().extension() == ".cfg") {
            CAPTURE(entry.path().string());
            CHECK(cli("validate --config " + entry.path().string()) == 0);
        }
    }
}

TEST_CASE("exit codes") {
    const auto dir = scratch("codes");
    CHECK(cli("list-objectives") == 0);
    CHECK(cli("") == 2);
    CHECK(cli("frobnicate") == 2);
    CHECK(cli("run") == 2);
    CHECK(cli("validate --config /nonexistent/x.cfg") == 1);

    const auto kappa = write_config(dir, "kappa.cfg",
                                    "[experiment]\nkind = linear_example\nT = 100\nTs = 0.1\n[gain]\nrho = 0.7\n"
                                    "[averaging]\nkappa = 1\n");
    CHECK(cli("validate --config " + kappa.string()) == 3);
    const auto typo = write_config(dir, "typo.cfg",
                                   "[experiment]\nkind = linear_example\nT = 100\nTs = 0.1\nrunz = 3\n[gain]\n"
                                   "rho = 0.7\n[averaging]\nkappa = 4\n");
    CHECK(cli("validate --config " + typo.string()) == 3);
    const auto dependent = write_config(dir, "dep.cfg",
                                        "[experiment]\nkind = qmc\nT = 100\nTs = 0.1\n[gain]\nrho = 0.7\n[probe]\n"
                                        "log_rational_pairs = [(4, 1), (2, 1)]\n[averaging]\nkappa = 5\n");
    CHECK(cli("validate --config " + dependent.string()) == 3);

    const auto blowup = write_config(dir, "blowup.cfg",
                                     "[experiment]\nkind = linear_example\nT = 100\nTs = 1\n[gain]\na0 = 1e6\n"
                                     "rho = 0.7\n[averaging]\nkappa = 4\n");
    CHECK(cli("run --config " + blowup.string() + " --out " + dir.string()) == 4);
    CHECK(fs::exists(dir / "blowup" / "runs.csv"));
    fs::remove_all(dir);
}

TEST_CASE("repeated qmc runs with the same seed give identical aggregate bytes") {
    const auto a = scratch("qmc_a");
    const auto b = scratch("qmc_b");
    const std::string cfg = kConfigs + "/qmc_hist.cfg";
    REQUIRE(cli("run --config " + cfg + " --runs 10 --seed 7 --out " + a.string()) == 0);
    REQUIRE(cli("--threads 3 run --config " + cfg + " --runs 10 --seed 7 --out " + b.string()) == 0);
    const std::string agg = slurp(a / "qmc_hist" / "aggregate.csv");
    CHECK(std::count(agg.begin(), agg.end(), '\n') == 21);  // header + 10 QSA + 10 MC
    CHECK(agg == slurp(b / "qmc_hist" / "aggregate.csv"));
    CHECK(slurp(a / "qmc_hist" / "summary.json") == slurp(b / "qmc_hist" / "summary.json"));

    const auto c = scratch("qmc_c");
    REQUIRE(cli("run --config " + cfg + " --runs 10 --seed 8 --out " + c.string()) == 0);
    CHECK(agg != slurp(c / "qmc_hist" / "aggregate.csv"));
    for (const auto& d : {a, b, c}) {
        fs::remove_all(d);
    }
}

TEST_CASE("analyze regenerates the linear example summary") {
    const auto dir = scratch("linear");
    REQUIRE(cli("run --config " + kConfigs + "/linear_fig2.cfg --out " + dir.string()) == 0);
    const fs::path out = dir / "linear_fig2";
    for (const char* f : {"run_0.csv", "aggregate.csv", "summary.json", "config.echo", "runs.csv"}) {
        CHECK(fs::exists(out / f));
    }
    const std::string before = slurp(out / "summary.json");
    fs::remove(out / "summary.json");
    CHECK(cli("analyze --in " + out.string()) == 0);
    CHECK(slurp(out / "summary.json") == before);
    CHECK(cli("analyze --in " + (dir / "missing").string()) == 1);
    fs::remove_all(dir);
}
