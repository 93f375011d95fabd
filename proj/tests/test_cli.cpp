#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "railplan/math.hpp"
#include "railplan/rng.hpp"

namespace fs = std::filesystem;

namespace {

const std::string cli = RAILPLAN_CLI_PATH;

int run(const std::string& args) {
    const std::string cmd = cli + " " + args + " 2>>cli_tmp/stderr.log";
    const int status = std::system(cmd.c_str());
    if (status == -1) return -1;
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is.good());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

struct TmpDir {
    TmpDir() {
        fs::remove_all("cli_tmp");
        fs::create_directories("cli_tmp");
    }
};

} // namespace

TEST_CASE("help exits zero, unknown flags exit one") {
    TmpDir tmp;
    REQUIRE(run("--help > cli_tmp/help.txt") == 0);
    REQUIRE(slurp("cli_tmp/help.txt").find("fractal") != std::string::npos);
    REQUIRE(run("--definitely-not-a-flag") == 1);
    REQUIRE(run("simulate") == 1); // missing required --output
}

TEST_CASE("simulate is deterministic and writes a manifest") {
    TmpDir tmp;
    REQUIRE(run("simulate --seed 3 --n-series 4 --length 6 --benchmark "
                "--output cli_tmp/a.csv") == 0);
    REQUIRE(run("simulate --seed 3 --n-series 4 --length 6 --benchmark "
                "--output cli_tmp/b.csv") == 0);
    REQUIRE(slurp("cli_tmp/a.csv") == slurp("cli_tmp/b.csv"));
    REQUIRE(fs::exists("cli_tmp/a.csv.manifest.json"));
    const std::string manifest = slurp("cli_tmp/a.csv.manifest.json");
    REQUIRE(manifest.find("\"subcommand\": \"simulate\"") != std::string::npos);
    REQUIRE(manifest.find("\"seed\": \"3\"") != std::string::npos);

    REQUIRE(run("simulate --seed 4 --n-series 4 --length 6 --benchmark "
                "--output cli_tmp/c.csv") == 0);
    REQUIRE(slurp("cli_tmp/a.csv") != slurp("cli_tmp/c.csv"));
}

TEST_CASE("fractal subcommand processes a synthetic signal") {
    TmpDir tmp;
    {
        std::ofstream os("cli_tmp/signal.csv");
        os << "position_m,level_mm\n";
        railplan::Rng rng(5);
        for (int i = 0; i <= 640; ++i) {
            const double x = 0.25 * i;
            const double y = 10.0 * std::sin(2.0 * M_PI * x / 9.7) +
                             2.0 * railplan::normal_quantile(rng.uniform());
            os << x << ',' << y << '\n';
        }
    }
    REQUIRE(run("fractal --input cli_tmp/signal.csv --output cli_tmp/fv.csv") == 0);
    const std::string out = slurp("cli_tmp/fv.csv");
    REQUIRE(out.rfind("window_start_m,fv_short,fv_mid,fv_long", 0) == 0);
    // 160 m of signal -> 11 windows + header
    REQUIRE(std::count(out.begin(), out.end(), '\n') == 12);

    REQUIRE(run("fractal --input cli_tmp/missing.csv --output cli_tmp/fv2.csv") == 2);
}

TEST_CASE("the full pipeline runs end to end") {
    TmpDir tmp;
    REQUIRE(run("simulate --seed 11 --n-series 6 --length 8 --benchmark "
                "--output cli_tmp/data.csv") == 0);
    const std::string dataset_before = slurp("cli_tmp/data.csv");

    REQUIRE(run("infer --dataset cli_tmp/data.csv --chains 2 --burnin 60 --samples 40 "
                "--seed 5 --threads 2 --output cli_tmp/ens.bin "
                "--diagnostics cli_tmp/diag.json") == 0);
    REQUIRE(fs::exists("cli_tmp/ens.bin"));
    REQUIRE(slurp("cli_tmp/diag.json").find("max_rhat") != std::string::npos);
    REQUIRE(slurp("cli_tmp/data.csv") == dataset_before); // inputs are never mutated

    REQUIRE(run("solve --ensemble cli_tmp/ens.bin --policy-out cli_tmp/policy.json "
                "--qstats-out cli_tmp/qstats.csv --counts-out cli_tmp/counts.csv") == 0);
    const std::string policy = slurp("cli_tmp/policy.json");
    REQUIRE(policy.find("robust_policy") != std::string::npos);
    REQUIRE(policy.find("mean_parameter_policy") != std::string::npos);

    REQUIRE(run("solve --ensemble cli_tmp/ens.bin --horizon 20 "
                "--policy-out cli_tmp/policy_h.json") == 0);
    REQUIRE(slurp("cli_tmp/policy_h.json").find("robust_schedule") != std::string::npos);

    REQUIRE(run("evaluate --ensemble cli_tmp/ens.bin --n-sims 60 --horizon 10 --seed 2 "
                "--subsample 10 --output cli_tmp/eval.csv --report cli_tmp/eval.json") == 0);
    const std::string eval_csv = slurp("cli_tmp/eval.csv");
    REQUIRE(eval_csv.find("robust_qmdp") != std::string::npos);
    REQUIRE(eval_csv.find("always_a1") != std::string::npos);

    REQUIRE(run("plan --ensemble cli_tmp/ens.bin --true-index 0 --horizon 10 --replicates 2 "
                "--subsample 10 --seed 9 --trace-out cli_tmp/trace.csv") == 0);
    const std::string trace = slurp("cli_tmp/trace.csv");
    REQUIRE(trace.rfind("replicate,t,observation,action,true_state", 0) == 0);
    // 2 replicates x 11 rows + header
    REQUIRE(std::count(trace.begin(), trace.end(), '\n') == 23);
}

TEST_CASE("evaluation reruns are byte-identical") {
    TmpDir tmp;
    REQUIRE(run("simulate --seed 21 --n-series 5 --length 6 --benchmark "
                "--output cli_tmp/d.csv") == 0);
    REQUIRE(run("infer --dataset cli_tmp/d.csv --chains 2 --burnin 40 --samples 20 --seed 5 "
                "--threads 2 --output cli_tmp/e.bin") == 0);
    REQUIRE(run("evaluate --ensemble cli_tmp/e.bin --n-sims 40 --horizon 8 --seed 13 "
                "--subsample 8 --output cli_tmp/r1.csv") == 0);
    REQUIRE(run("evaluate --ensemble cli_tmp/e.bin --n-sims 40 --horizon 8 --seed 13 "
                "--subsample 8 --output cli_tmp/r2.csv") == 0);
    REQUIRE(slurp("cli_tmp/r1.csv") == slurp("cli_tmp/r2.csv"));
}

TEST_CASE("options can come from a config file") {
    TmpDir tmp;
    {
        std::ofstream os("cli_tmp/run.ini");
        os << "[simulate]\nseed=8\nn-series=3\nlength=5\nbenchmark=true\n"
              "output=cli_tmp/from_config.csv\n";
    }
    REQUIRE(run("--config cli_tmp/run.ini simulate") == 0);
    REQUIRE(fs::exists("cli_tmp/from_config.csv"));
}
