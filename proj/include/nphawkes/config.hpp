#pragma once

#include "nphawkes/baselines.hpp"
#include "nphawkes/hawkes_model.hpp"
#include "nphawkes/vi.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nphawkes {

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& key, const std::string& message)
        : std::runtime_error(key.empty() ? message : key + ": " + message), key_(key) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

struct SimulateSettings {
    int scenario{1};
    int realisations{8};
};

struct MetricsSettings {
    int posterior_draws{256};
    bool scale_by_100{false};
    /// Scenario whose truth the fitted fields are compared with; none for real data.
    std::optional<int> scenario{};
};

struct DiagnosticsSettings {
    /// Super-thinning rate; the median fitted intensity over the mu grid when absent.
    std::optional<double> k{};
    int quadrat_grid{8};
};

struct ReportSettings {
    int posterior_draws{256};
    double credible_level{0.95};
};

struct RunConfig {
    SpatioTemporalWindow window{};
    GridProfile profile{GridProfile::Full};
    std::optional<std::array<std::size_t, 3>> mu_grid{};
    std::optional<std::array<std::size_t, 3>> phi_grid{};
    ModelSpec model{};
    /// Sigmoid link scale; 10 n / |W| when absent.
    std::optional<double> sigmoid_alpha{};
    OptimizerConfig optimizer{};
    /// Restart seeds; derived from `seed` when empty.
    std::vector<std::uint64_t> restart_seeds{};
    int restarts{4};
    std::uint64_t seed{0};
    SimulateSettings simulate{};
    MetricsSettings metrics{};
    DiagnosticsSettings diagnostics{};
    ReportSettings report{};
    std::string events_path{};
    std::string fit_path{};

    QuadratureSet quadrature() const;
    std::vector<std::uint64_t> seeds() const;
    /// Model spec with data-dependent defaults (the sigmoid scale) filled in.
    ModelSpec resolved_model(std::size_t n_events) const;
};

/// Parses a JSON document. Missing keys take their defaults; unknown keys and invalid values
/// raise ConfigError naming the dotted key.
RunConfig parse_config(const std::string& text);
RunConfig parse_config(const nlohmann::json& doc);
inline RunConfig parse_config(const char* text) { return parse_config(std::string(text)); }

/// The configuration as a JSON document accepted by parse_config.
nlohmann::json config_json(const RunConfig& config);

}  // namespace nphawkes
