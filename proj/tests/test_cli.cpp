#include "bft/cli.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace bft;
using namespace bft::cli;

namespace {

ExperimentConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in, "t.cfg");
}

std::string error_of(const std::string& text) {
    try {
        validate(parse(text));
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

// Small, fast settings shared by the run tests.
ExperimentConfig small(const std::string& experiment) {
    auto c = parse("grid.n = 32\nensemble.size = 256\nensemble.grid_draws = 16\nexperiment = " + experiment + "\n");
    validate(c);
    return c;
}

}  // namespace

TEST_CASE("config parsing") {
    const auto c = parse("# comment\nkernel.lambda = 0.05  # trailing\n\nmixing.beta=2\nflow.velocity = 1, 2 ,3\n"
                         "mixing.psi.form = sqrt\ngeometry.loop = 0,0,0; 0.1,0,0; 0.1,0.1,0\n");
    CHECK(c.kernel.corr_length == 0.05);
    CHECK(c.mixing.beta == 2.0);
    CHECK(c.flow_velocity == Vec3(1, 2, 3));
    CHECK(c.mixing.psi.form == PsiForm::Sqrt);
    CHECK(c.loop.size() == 3);
    CHECK(c.origins.at("mixing.beta") == "t.cfg:4");
    // defaults
    CHECK(c.grid.resolution == 64);
    CHECK(c.ensemble_size == 20000);
    CHECK(c.model().boost(0.0).psi2 == 5.0);
}

TEST_CASE("config errors are line-anchored") {
    CHECK_THROWS_WITH_AS(parse("kernel.C = 1\nkernel.bogus = 3\n"), "t.cfg:2: unknown key 'kernel.bogus'", ConfigError);
    CHECK_THROWS_WITH_AS(parse("\n\ngrid.n = abc\n"), doctest::Contains("t.cfg:3: grid.n"), ConfigError);
    CHECK_THROWS_WITH_AS(parse("time = 1\ntime = 2\n"), "t.cfg:2: duplicate key 'time'", ConfigError);
    CHECK_THROWS_WITH_AS(parse("just words\n"), "t.cfg:1: expected key = value", ConfigError);
    CHECK_THROWS_WITH_AS(parse("flow.kind = poiseuille\n"), doctest::Contains("t.cfg:1"), ConfigError);

    CHECK(error_of("kernel.C = 1\nkernel.lambda = -1\n").rfind("t.cfg:2: ", 0) == 0);
    CHECK(error_of("grid.n = 48\n").rfind("t.cfg:1: ", 0) == 0);
    CHECK(error_of("experiment = everything\n").rfind("t.cfg:1: unknown experiment", 0) == 0);
    CHECK(error_of("mixing.re_override = none\n").rfind("t.cfg:1: ", 0) == 0);
    // lambda > L / 8 is caught at validation, before anything is sampled
    const auto contract = error_of("\nkernel.lambda = 0.2\n");
    CHECK(contract.rfind("t.cfg:2: accuracy contract", 0) == 0);
    // experiments that never touch the grid sampler do not need the contract
    CHECK(error_of("kernel.lambda = 0.2\nexperiment = vortex\n").empty());
}

TEST_CASE("overrides") {
    auto c = parse("mixing.beta = 1\n");
    apply_override(c, "mixing.beta=2.5");
    CHECK(c.mixing.beta == 2.5);
    CHECK(c.origins.at("mixing.beta") == "--set mixing.beta");
    apply_override(c, "mixing.re_override = none");
    CHECK(!c.mixing.re_override);
    CHECK_THROWS_WITH_AS(apply_override(c, "nope=1"), "--set nope: unknown key 'nope'", ConfigError);
    CHECK_THROWS_AS(apply_override(c, "mixing.beta"), ConfigError);
    c.mixing.re_override = 2.0;
    apply_override(c, "kernel.lambda=0.5");
    CHECK_THROWS_WITH_AS(validate(c), doctest::Contains("--set kernel.lambda: accuracy contract"), ConfigError);
}

TEST_CASE("report formats") {
    Report r;
    r.rows.push_back({"s", "i=0;j=1", Vec3(0.1, 0, 1), 0.5, 1.0 / 3.0, 0.01, 0.3, std::nan(""), 3.3});
    r.criteria.push_back({4, "thing", 1.0, 1.0, 0.0, std::nan(""), true});
    r.discrepancies.push_back({"q", 6, 2, "has, comma"});
    std::ostringstream csv, js, disc;
    write_results_csv(csv, r);
    ExperimentConfig cfg;
    write_summary_json(js, r, cfg);
    write_discrepancies_csv(disc, r);
    CHECK(csv.str() ==
          "statistic,indices,x,y,z,t,mc,stderr,closed_form,paper_form,z_score\n"
          "s,i=0;j=1,0.10000000000000001,0,1,0.5,0.33333333333333331,0.01,0.29999999999999999,nan,3.2999999999999998\n");
    const auto doc = nlohmann::json::parse(js.str());
    CHECK(doc["all_pass"] == true);
    const auto& row = doc["criteria"][0];
    for (const char* key : {"name", "mc", "prediction", "stderr", "z", "pass"}) CHECK(row.contains(key));
    CHECK(row["z"].is_null());
    CHECK(disc.str() == "quantity,paper_constant,oracle_constant,note\nq,6,2,\"has, comma\"\n");
}

TEST_CASE("kernel-derivatives experiment") {
    const auto rep = run_experiment(small("kernel-derivatives"), "kernel-derivatives");
    CHECK(rep.all_pass());
    CHECK(rep.criteria.size() == 2);
    bool hessian = false;
    for (const auto& d : rep.discrepancies) hessian = hessian || (d.paper_constant == 18 && d.oracle_constant == 2);
    CHECK(hessian);
}

TEST_CASE("zero beta makes every statistic deterministic") {
    for (const char* name : {"correlations", "ns-residual", "vortex", "hopf", "boost-equivalence"}) {
        auto c = small(name);
        c.mixing.beta = 0.0;
        const auto rep = run_experiment(c, name);
        for (const auto& r : rep.rows) {
            if (std::isnan(r.mc) || std::isnan(r.closed_form)) continue;
            INFO(name, " ", r.statistic, " ", r.indices);
            CHECK(!(r.std_error > 0.0));  // zero, or NaN for deterministic rows
            if (r.statistic.find("hopf") == std::string::npos && r.statistic != "vortex_tangle_far")
                CHECK(r.mc == doctest::Approx(r.closed_form).epsilon(1e-12).scale(1.0));
        }
    }
}

TEST_CASE("laminar regime recovers the deterministic statistics") {
    auto c = small("correlations");
    c.mixing.re_c = 5.0;  // above the prescribed Re of 2
    const auto rep = run_experiment(c, "correlations");
    for (const auto& r : rep.rows)
        if (r.statistic == "mean_velocity" || r.statistic == "binary_correlation") {
            CHECK(r.std_error == 0.0);
            CHECK(r.z_score == 0.0);
        }
}

TEST_CASE("run writes reports and is worker-count independent") {
    const auto dir = std::filesystem::temp_directory_path() / "bft_cli_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    const auto cfg = dir / "run.cfg";
    std::ofstream(cfg) << "grid.n = 32\nensemble.size = 200\nexperiment = hopf\n";

    std::ostringstream log, err;
    RunOptions o{cfg.string(), {"ensemble.workers=1"}, std::nullopt, (dir / "a").string()};
    CHECK(run(o, log, err) == 0);
    o.overrides = {"ensemble.workers=3"};
    o.output = (dir / "b").string();
    CHECK(run(o, log, err) == 0);
    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream in(p);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    const auto a = slurp(dir / "a" / "results.csv");
    CHECK(a.size() > 100);
    CHECK(a == slurp(dir / "b" / "results.csv"));
    CHECK(std::filesystem::exists(dir / "a" / "summary.json"));
    CHECK(std::filesystem::exists(dir / "a" / "discrepancies.csv"));

    o.overrides = {"kernel.lambda=0.3"};
    o.experiment = "pressure";
    std::ostringstream err2;
    CHECK(run(o, log, err2) == 2);
    CHECK(err2.str().find("--set kernel.lambda: accuracy contract") != std::string::npos);
    std::filesystem::remove_all(dir);
}
