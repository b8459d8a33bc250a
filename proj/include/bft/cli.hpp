#pragma once

#include "bft/flows.hpp"
#include "bft/mixing.hpp"

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace bft::cli {

/// Bad config text or values. The message starts with "<source>:<line>: "
/// (or "--set <key>: " for command-line overrides).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Everything one run needs. Defaults are the desk-scale acceptance setup:
/// Taylor-Green on the unit cell, beta = psi = C = 1, n = 64, 2e4 draws.
struct ExperimentConfig {
    Kernel kernel{1.0, 0.1, 2.0};
    GridSpec grid{1.0, 64};

    std::string flow_kind = "taylor-green";  ///< or "uniform"
    double flow_amplitude = 1.0;
    std::optional<double> flow_wavenumber;   ///< defaults to 2 pi / L
    Vec3 flow_velocity = Vec3(0, 0, 1);
    double viscosity = 0.01;

    MixingConfig mixing = default_mixing();

    std::uint64_t ensemble_size = 20000;  ///< draws for point-sampled statistics
    std::uint64_t grid_draws = 400;       ///< draws for whole-grid statistics
    std::uint64_t seed = 1;
    unsigned workers = 1;

    double time = 0.1;
    std::vector<Vec3> loop;  ///< closed curve nodes; empty selects the default square

    std::string experiment = "full-suite";
    std::string output = "bft-out";

    /// Where each key was last set, e.g. "run.cfg:7" or "--set".
    std::map<std::string, std::string> origins;

    BaseFlow base_flow() const;
    TurbulenceModel model() const;
    EnsembleSpec ensemble(std::uint64_t size, bool antithetic = false) const;

    static MixingConfig default_mixing();
};

ExperimentConfig parse_config(std::istream& in, const std::string& source);
ExperimentConfig load_config(const std::string& path);

/// Applies "key=value" on top of a parsed config.
void apply_override(ExperimentConfig& config, const std::string& assignment);

/// Checks every module precondition and the sampler accuracy contracts,
/// raising ConfigError anchored at the offending key.
void validate(const ExperimentConfig& config);

/// One line of results.csv.
struct ResultRow {
    std::string statistic;
    std::string indices;
    Vec3 x = Vec3::Zero();
    double t = 0.0;
    double mc = 0.0;
    double std_error = 0.0;
    double closed_form = 0.0;
    double paper_form = 0.0;
    double z_score = 0.0;
};

/// One pass/fail line of summary.json.
struct CriterionRow {
    int criterion = 0;
    std::string name;
    double mc = 0.0;
    double prediction = 0.0;
    double std_error = 0.0;
    double z = 0.0;
    bool pass = false;
};

/// One line of discrepancies.csv: the printed constant against the one the
/// independent oracle gives.
struct DiscrepancyRow {
    std::string quantity;
    double paper_constant = 0.0;
    double oracle_constant = 0.0;
    std::string note;
};

struct Report {
    std::vector<ResultRow> rows;
    std::vector<CriterionRow> criteria;
    std::vector<DiscrepancyRow> discrepancies;
    std::vector<std::pair<std::string, double>> seconds;  ///< wall time per experiment

    bool all_pass() const;
    void append(Report&& other);
};

const std::vector<std::string>& experiment_names();

/// Runs the named experiment ("full-suite" runs all others in order).
/// Progress lines go to log when given.
Report run_experiment(const ExperimentConfig& config, const std::string& name, std::ostream* log = nullptr);

/// Floating-point fields use 17 significant digits.
void write_results_csv(std::ostream& out, const Report& report);
void write_summary_json(std::ostream& out, const Report& report, const ExperimentConfig& config);
void write_discrepancies_csv(std::ostream& out, const Report& report);

struct RunOptions {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::string> experiment;
    std::optional<std::string> output;
};

/// Load, override, validate, run and write the three report files into the
/// output directory. Returns 0 iff every criterion passed; config problems
/// return 2 after printing the anchored message to err. BFT_WORKERS, when
/// set, replaces the worker count.
int run(const RunOptions& options, std::ostream& log, std::ostream& err);

}  // namespace bft::cli
