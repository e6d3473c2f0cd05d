#pragma once

#include "nphawkes/config.hpp"
#include "nphawkes/vi.hpp"

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace nphawkes {

inline constexpr int kSchemaVersion = 1;

enum class Command { Simulate, Fit, Evaluate, Diagnose, Report };

std::string to_string(Command command);
Command parse_command(const std::string& name);

struct CommandResult {
    std::vector<std::string> files;  ///< written artifacts, relative to the output directory
    std::vector<std::string> warnings;
};

/// Runs one command and writes its artifacts, timing file and manifest entry into `out_dir`.
CommandResult run_command(Command command, const RunConfig& config, const std::filesystem::path& out_dir);

/// A fitted model rebuilt from a fit artifact and its events.
struct FittedModel {
    RunConfig config;  ///< the configuration the fit was run with
    PreparedData data;
    std::shared_ptr<VariationalModel> model;
    Eigen::VectorXd parameters;
};

/// Loads the fit named by `current.fit_path` (default: fit.json in `out_dir`). The events come
/// from `current.events_path` when set, otherwise from the path recorded in the fit.
FittedModel load_fit(const RunConfig& current, const std::filesystem::path& out_dir);

/// Posterior draws of the two fields on the quadrature grids, one draw per row.
struct FieldDraws {
    Eigen::MatrixXd mu;
    Eigen::MatrixXd phi;  ///< zeros for a model without trigger
};
FieldDraws draw_fields(const FittedModel& fitted, int n_draws, std::uint64_t seed, std::uint64_t stream);

/// Equal-tailed interval of each column.
struct Band {
    Eigen::VectorXd mean, lower, upper;
};
Band credible_band(const Eigen::MatrixXd& draws, double level);

/// Linear-interpolation quantile of unsorted values.
double quantile(std::vector<double> values, double q);

}  // namespace nphawkes
