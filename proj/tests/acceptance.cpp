// End-to-end acceptance run: the full suite at desk scale through the same
// path as `bft-lab run`, one PASS/FAIL line per criterion.

#include "bft/cli.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kConfig = R"(# pinned acceptance parameters
kernel.C = 1
kernel.lambda = 0.1
kernel.kappa = 2
grid.L = 1
grid.n = 64
flow.kind = taylor-green
flow.amplitude = 1
flow.nu = 0.01
mixing.beta = 1
mixing.psi.form = power
mixing.psi.alpha = 1
mixing.psi.kappa_psi = 1
mixing.re_c = 1
mixing.re_override = 2
ensemble.size = 20000
ensemble.grid_draws = 400
ensemble.seed = 1
time = 0.1
experiment = full-suite
)";

const std::map<int, std::string> kTitles = {
    {1, "kernel-derivative oracle"},
    {2, "sampler fidelity"},
    {3, "mean-flow identity"},
    {4, "binary correlation"},
    {5, "moments"},
    {6, "averaged NS residual"},
    {7, "pressure"},
    {8, "boost equivalence"},
    {9, "incompressibility and isotropy"},
    {10, "geometry"},
    {11, "stochastic integration"},
    {12, "reproducibility"},
};

// Wall-time budgets (seconds) for the experiment each criterion lives in.
const std::map<int, std::pair<std::string, double>> kBudgets = {
    {1, {"kernel-derivatives", 5.0}},
    {2, {"sampler-validate", 60.0}},
    {6, {"ns-residual", 180.0}},
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string show(const json& v) {
    if (v.is_null()) return "-";
    std::ostringstream s;
    s << std::setprecision(6) << v.get<double>();
    return s.str();
}

}  // namespace

int main() {
    const fs::path root = fs::current_path() / "acceptance_out";
    fs::remove_all(root);
    fs::create_directories(root);
    const fs::path cfg = root / "acceptance.cfg";
    std::ofstream(cfg) << kConfig;

    std::ostringstream log;
    int status[2];
    const char* dirs[2] = {"workers1", "workers3"};
    const char* workers[2] = {"ensemble.workers=1", "ensemble.workers=3"};
    for (int r = 0; r < 2; ++r) {
        bft::cli::RunOptions o{cfg.string(), {workers[r]}, std::nullopt, (root / dirs[r]).string()};
        status[r] = bft::cli::run(o, log, std::cerr);
    }
    std::cout << log.str() << '\n';

    const fs::path summary_path = root / dirs[0] / "summary.json";
    if (!fs::exists(summary_path)) {
        std::cout << "FAIL: no summary written (exit status " << status[0] << ")\n";
        return 1;
    }
    const json summary = json::parse(slurp(summary_path));

    bool all = true;
    for (const auto& [id, title] : kTitles) {
        bool pass = true;
        std::ostringstream detail;
        if (id == 12) {
            const auto a = slurp(root / dirs[0] / "results.csv"), b = slurp(root / dirs[1] / "results.csv");
            pass = !a.empty() && a == b;
            detail << "\n    results.csv " << a.size() << " bytes (1 worker) vs " << b.size() << " bytes (3 workers), "
                   << (a == b ? "identical" : "different");
        } else {
            int rows = 0;
            for (const auto& c : summary["criteria"]) {
                if (c["criterion"] != id) continue;
                ++rows;
                pass = pass && c["pass"].get<bool>();
                detail << "\n    " << (c["pass"].get<bool>() ? "ok  " : "BAD ") << c["name"].get<std::string>()
                       << ": mc " << show(c["mc"]) << ", prediction " << show(c["prediction"]) << ", stderr "
                       << show(c["stderr"]) << ", z " << show(c["z"]);
            }
            if (rows == 0) {
                pass = false;
                detail << " no rows reported";
            }
            if (const auto it = kBudgets.find(id); it != kBudgets.end()) {
                const double secs = summary["seconds"].value(it->second.first, INFINITY);
                const bool fast = secs < it->second.second;
                pass = pass && fast;
                detail << "\n    " << (fast ? "ok  " : "BAD ") << "runtime " << show(secs) << " s (budget "
                       << it->second.second << " s)";
            }
        }
        all = all && pass;
        std::cout << (pass ? "PASS" : "FAIL") << "  criterion " << id << " (" << title << ")" << detail.str() << '\n';
    }
    double total = 0.0;
    for (const auto& [name, s] : summary["seconds"].items()) total += s.get<double>();
    std::cout << "suite wall time per run: " << show(total) << " s; exit status " << status[0] << ", " << status[1]
              << '\n';
    std::cout << (all ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL") << '\n';
    return all ? 0 : 1;
}
