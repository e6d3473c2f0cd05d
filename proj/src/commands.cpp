#include "nphawkes/commands.hpp"

#include "nphawkes/diagnostics.hpp"
#include "nphawkes/io.hpp"
#include "nphawkes/json_util.hpp"
#include "nphawkes/metrics_eval.hpp"
#include "nphawkes/random.hpp"
#include "nphawkes/simulate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

namespace nphawkes {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Random streams of the post-fit commands, so that each command draws independently.
constexpr std::uint64_t kEvaluateStream = 101;
constexpr std::uint64_t kDiagnoseStream = 102;
constexpr std::uint64_t kReportStream = 103;
constexpr int kDiagnoseDraws = 64;

json header(const std::string& kind) { return json{{"schema_version", kSchemaVersion}, {"kind", kind}}; }

json window_json(const SpatioTemporalWindow& w) {
    return {{"T", w.T}, {"X", w.X}, {"Y", w.Y}, {"T_phi", w.T_phi}, {"X_phi", w.X_phi}, {"Y_phi", w.Y_phi}};
}

void check_window(const SpatioTemporalWindow& a, const SpatioTemporalWindow& b) {
    if (a.T != b.T || a.X != b.X || a.Y != b.Y || a.T_phi != b.T_phi || a.X_phi != b.X_phi ||
        a.Y_phi != b.Y_phi) {
        throw std::invalid_argument("configured window differs from the scenario window");
    }
}

EventSequence load_events(const std::string& path, const SpatioTemporalWindow& window,
                          std::vector<std::string>& warnings) {
    if (path.empty()) throw std::invalid_argument("paths.events is required for this command");
    return ingest_events(read_events_csv(path), window, &warnings);
}

void update_manifest(const fs::path& out_dir, Command command, const RunConfig& config,
                     std::vector<std::string> files) {
    const fs::path path = out_dir / "manifest.json";
    json manifest = fs::exists(path) ? read_json(path) : header("manifest");
    if (!manifest.contains("commands") || !manifest["commands"].is_object()) manifest["commands"] = json::object();
    files.push_back("timing_" + to_string(command) + ".json");
    std::sort(files.begin(), files.end());
    manifest["commands"][to_string(command)] = {{"files", files}, {"config", config_json(config)}};
    write_json(path, manifest);
}

std::vector<double> column_values(const Eigen::MatrixXd& m, Eigen::Index col) {
    return std::vector<double>(m.col(col).data(), m.col(col).data() + m.rows());
}

json summary(std::vector<double> values, double level) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    const double a = 0.5 * (1.0 - level);
    return {{"mean", mean}, {"lower", quantile(values, a)}, {"upper", quantile(values, 1.0 - a)}};
}

std::vector<std::vector<double>> surface_rows(const QuadratureGrid& grid, const Band& band) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const Point3 p = grid.grid.node(i);
        const auto k = static_cast<Eigen::Index>(i);
        rows.push_back({p.t, p.x, p.y, band.mean[k], band.lower[k], band.upper[k]});
    }
    return rows;
}

Eigen::MatrixXd spatial_average_draws(const QuadratureGrid& grid, const Eigen::MatrixXd& draws) {
    const std::size_t nt = grid.grid.axes[0].size();
    Eigen::MatrixXd out(draws.rows(), static_cast<Eigen::Index>(nt));
    for (Eigen::Index s = 0; s < draws.rows(); ++s) {
        const std::vector<double> avg = spatial_average(grid, draws.row(s).transpose());
        for (std::size_t t = 0; t < nt; ++t) out(s, static_cast<Eigen::Index>(t)) = avg[t];
    }
    return out;
}

std::vector<std::vector<double>> curve_rows(const std::vector<double>& axis, const Band& band) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < axis.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        rows.push_back({axis[i], band.mean[k], band.lower[k], band.upper[k]});
    }
    return rows;
}

// ---- commands ---------------------------------------------------------------------------

std::vector<std::string> run_simulate(const RunConfig& c, const fs::path& out, std::vector<std::string>&) {
    const GroundTruth truth = scenario(c.simulate.scenario);
    check_window(c.window, truth.window);
    const QuadratureSet grids = c.quadrature();
    const L1Norms norms = l1_norms(grids, evaluate_on_grid(grids.mu, truth.mu), evaluate_on_grid(grids.phi, truth.phi));
    std::vector<std::string> files;
    for (int k = 1; k <= c.simulate.realisations; ++k) {
        const std::uint64_t seed = c.seed * 1000 + static_cast<std::uint64_t>(k);
        const SimulationReport rep = simulate_hawkes(truth, seed);
        const std::string events = "events_" + std::to_string(k) + ".csv";
        const std::string sidecar = "simulation_" + std::to_string(k) + ".json";
        write_events_csv(out / events, rep.events.events);
        json j = header("simulation");
        j["scenario"] = c.simulate.scenario;
        j["name"] = truth.name;
        j["realisation"] = k;
        j["seed"] = seed;
        j["window"] = window_json(truth.window);
        j["events_file"] = events;
        j["n_events"] = rep.events.size();
        j["generation"] = rep.generation;
        j["parent"] = rep.parent;
        j["truth"] = {{"mu_l1", norms.mu}, {"phi_l1", norms.phi},
                      {"expected_events", expected_total_events(norms.mu, norms.phi)}};
        j["cascade"] = {{"size", rep.cascade_size}, {"immigrants", rep.cascade_immigrants},
                        {"offspring_sum", rep.offspring_sum}};
        write_json(out / sidecar, j);
        files.push_back(events);
        files.push_back(sidecar);
    }
    return files;
}

std::vector<std::string> run_fit(const RunConfig& c, const fs::path& out, std::vector<std::string>& warnings,
                                 json& timing) {
    const EventSequence events = load_events(c.events_path, c.window, warnings);
    const QuadratureSet grids = c.quadrature();
    const bool trigger = has_trigger(c.model.kind);
    const PreparedData data = prepare_data(events, c.window, grids, trigger);
    const auto model = build_model(c.resolved_model(events.size()), data);
    const std::vector<std::uint64_t> seeds = c.seeds();
    const RestartOutcome res = multi_restart(*model, data, model->initial_parameters(), c.optimizer, seeds);

    json j = header("fit");
    j["config"] = config_json(c);
    j["events"] = {{"path", c.events_path}, {"count", events.size()}, {"pairs", data.pairs.size()}};
    j["model_kind"] = to_string(c.model.kind);
    json restarts = json::array();
    json restart_times = json::array();
    for (const std::uint64_t seed : seeds) {
        json r = {{"seed", seed}};
        const auto run = std::find_if(res.runs.begin(), res.runs.end(),
                                      [seed](const FitResult& f) { return f.seed == seed; });
        if (run == res.runs.end()) {
            const std::string prefix = "seed " + std::to_string(seed) + ": ";
            for (const auto& e : res.errors) {
                if (e.rfind(prefix, 0) == 0) r["error"] = e.substr(prefix.size());
            }
            restart_times.push_back(nullptr);
        } else {
            r["final_elbo"] = run->final_elbo;
            r["skipped_steps"] = run->skipped_steps;
            r["selected"] = run->seed == res.best.seed;
            restart_times.push_back(run->wall_time_seconds);
        }
        restarts.push_back(r);
    }
    for (const auto& e : res.errors) warnings.push_back("restart failed: " + e);
    j["restarts"] = restarts;
    j["final_elbo"] = res.best.final_elbo;
    j["elbo_trace"] = vector_json(res.best.elbo_trace);
    j["parameters"] = vector_json(res.best.parameters);
    j["posterior"] = model->describe(as_span(res.best.parameters));
    write_json(out / "fit.json", j);
    timing["restarts"] = restart_times;
    return {"fit.json"};
}

std::vector<std::string> run_evaluate(const RunConfig& c, const fs::path& out, std::vector<std::string>& warnings) {
    const FittedModel fitted = load_fit(c, out);
    const QuadratureSet& g = {fitted.data.mu_grid, fitted.data.phi_grid};
    const FieldDraws draws = draw_fields(fitted, c.metrics.posterior_draws, c.seed, kEvaluateStream);

    // Expected log-likelihood over the same posterior draws, re-realised at the data points.
    std::mt19937_64 rng = make_rng(c.seed, kEvaluateStream);
    std::vector<IntensityValues> rates;
    const auto& model = *fitted.model;
    while (static_cast<int>(rates.size()) < c.metrics.posterior_draws) {
        const Eigen::VectorXd noise = standard_normal(rng, model.noise_dimension());
        try {
            const auto f = model.sample_fields(as_span(fitted.parameters), noise);
            IntensityValues v;
            v.mu_nodes = f.mu->on_grid(g.mu.grid);
            v.mu_events = f.mu->at_points(fitted.data.data.events);
            if (f.phi) {
                v.phi_nodes = f.phi->on_grid(g.phi.grid);
                v.phi_pairs = f.phi->at_points(fitted.data.pair_lags);
            } else {
                v.phi_nodes = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.phi.size()));
                v.phi_pairs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(fitted.data.pair_lags.size()));
            }
            rates.push_back(std::move(v));
        } catch (const ConditioningError&) {
        }
    }
    const double ell = expected_log_likelihood(rates, fitted.data);

    const double scale = c.metrics.scale_by_100 ? 100.0 : 1.0;
    json j = header("metrics");
    j["scaled_by_100"] = c.metrics.scale_by_100;
    j["posterior_draws"] = c.metrics.posterior_draws;
    j["ell"] = ell;
    j["truth_scenario"] = c.metrics.scenario ? json(*c.metrics.scenario) : json(nullptr);
    for (const char* key : {"pm_mse_mu", "pm_mse_phi", "pe_mse_mu", "pe_mse_phi"}) j[key] = nullptr;
    if (c.metrics.scenario) {
        const GroundTruth truth = scenario(*c.metrics.scenario);
        check_window(fitted.config.window, truth.window);
        const PosteriorFieldSamples mu{draws.mu}, phi{draws.phi};
        const Eigen::VectorXd tmu = evaluate_on_grid(g.mu, truth.mu), tphi = evaluate_on_grid(g.phi, truth.phi);
        j["pm_mse_mu"] = scale * pm_mse(mu, tmu);
        j["pm_mse_phi"] = scale * pm_mse(phi, tphi);
        j["pe_mse_mu"] = scale * pe_mse(mu, tmu);
        j["pe_mse_phi"] = scale * pe_mse(phi, tphi);
    } else {
        warnings.push_back("no truth scenario configured; only the expected log-likelihood is reported");
    }
    write_json(out / "metrics.json", j);
    return {"metrics.json"};
}

std::vector<std::string> run_diagnose(const RunConfig& c, const fs::path& out, std::vector<std::string>& warnings) {
    const FittedModel fitted = load_fit(c, out);
    const auto& model = *fitted.model;
    std::mt19937_64 rng = make_rng(c.seed, kDiagnoseStream);
    std::vector<std::shared_ptr<const RateField>> mus, phis;
    while (static_cast<int>(mus.size()) < kDiagnoseDraws) {
        try {
            const auto f = model.sample_fields(as_span(fitted.parameters), standard_normal(rng, model.noise_dimension()));
            mus.push_back(f.mu);
            if (f.phi) phis.push_back(f.phi);
        } catch (const ConditioningError&) {
        }
    }
    const auto mu = std::make_shared<MeanRateField>(mus);
    const auto phi = phis.empty() ? nullptr : std::make_shared<MeanRateField>(phis);
    const SpatioTemporalWindow& w = fitted.config.window;
    const IntensityFunction lambda = conditional_intensity(mu, phi, fitted.data.data, w);
    const std::vector<Point3> probe = fitted.data.mu_grid.grid.points();
    const double k = c.diagnostics.k.value_or(median_rate(lambda, probe));
    const ResidualProcess res = super_thin(fitted.data.data, lambda, w, k, c.seed * 1000 + kDiagnoseStream);

    json j = header("diagnostics");
    j["k"] = k;
    j["n_retained"] = res.n_retained;
    j["n_simulated"] = res.n_simulated;
    j["ks_stat"] = nullptr;
    j["ks_p"] = nullptr;
    if (res.events.size() >= 2) {
        const TestResult ks = ks_exponential_test(res, w.T);
        j["ks_stat"] = ks.statistic;
        j["ks_p"] = ks.p_value;
    } else {
        warnings.push_back("fewer than two residual events; KS test skipped");
    }
    j["chi2"] = nullptr;
    j["chi2_p"] = nullptr;
    j["n_grid_effective"] = nullptr;
    if (!res.events.empty()) {
        const QuadratResult q = quadrat_chi2_test(res, w, c.diagnostics.quadrat_grid);
        j["chi2"] = q.chi2;
        j["chi2_p"] = q.p_value;
        j["n_grid_effective"] = q.n_grid_effective;
        warnings.insert(warnings.end(), q.warnings.begin(), q.warnings.end());
    }
    write_json(out / "diagnostics.json", j);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < res.events.size(); ++i) {
        const Point3& p = res.events[i];
        rows.push_back({p.t, p.x, p.y, res.retained[i] ? 1.0 : 0.0});
    }
    write_csv(out / "residuals.csv", {"t", "x", "y", "retained"}, rows);
    return {"diagnostics.json", "residuals.csv"};
}

std::vector<std::string> run_report(const RunConfig& c, const fs::path& out, std::vector<std::string>& warnings) {
    const FittedModel fitted = load_fit(c, out);
    const QuadratureGrid& gmu = fitted.data.mu_grid;
    const QuadratureGrid& gphi = fitted.data.phi_grid;
    const double level = c.report.credible_level;
    const FieldDraws draws = draw_fields(fitted, c.report.posterior_draws, c.seed, kReportStream);

    write_csv(out / "mu_surface.csv", {"t", "x", "y", "mean", "lower", "upper"},
              surface_rows(gmu, credible_band(draws.mu, level)));
    write_csv(out / "phi_surface.csv", {"dt", "dx", "dy", "mean", "lower", "upper"},
              surface_rows(gphi, credible_band(draws.phi, level)));
    write_csv(out / "mu_spatial_average.csv", {"t", "mean", "lower", "upper"},
              curve_rows(gmu.grid.axes[0], credible_band(spatial_average_draws(gmu, draws.mu), level)));
    write_csv(out / "phi_spatial_average.csv", {"dt", "mean", "lower", "upper"},
              curve_rows(gphi.grid.axes[0], credible_band(spatial_average_draws(gphi, draws.phi), level)));

    std::vector<double> mu_l1, phi_l1, expected;
    bool explosive = false;
    const QuadratureSet grids{gmu, gphi};
    for (Eigen::Index s = 0; s < draws.mu.rows(); ++s) {
        const L1Norms n = l1_norms(grids, draws.mu.row(s).transpose(), draws.phi.row(s).transpose());
        mu_l1.push_back(n.mu);
        phi_l1.push_back(n.phi);
        if (n.phi < 1.0) {
            expected.push_back(expected_total_events(n.mu, n.phi));
        } else {
            explosive = true;
        }
    }
    json j = header("report");
    j["posterior_draws"] = c.report.posterior_draws;
    j["credible_level"] = level;
    j["mu_l1"] = summary(mu_l1, level);
    j["phi_l1"] = summary(phi_l1, level);
    const double phi_mean = j["phi_l1"]["mean"].get<double>();
    j["stationary"] = phi_mean < 1.0;
    if (phi_mean >= 1.0) {
        warnings.push_back("posterior mean branching ratio is not below 1; the fitted process is explosive");
    } else if (explosive) {
        warnings.push_back("some posterior draws have a branching ratio of at least 1");
    }
    if (!expected.empty()) {
        json e = summary(expected, level);
        for (auto& [key, value] : e.items()) value = std::llround(value.get<double>());
        e["draws_used"] = expected.size();
        j["expected_events"] = e;
    } else {
        j["expected_events"] = nullptr;
    }
    j["observed_events"] = fitted.data.data.size();
    j["files"] = {"mu_surface.csv", "phi_surface.csv", "mu_spatial_average.csv", "phi_spatial_average.csv"};
    j["warnings"] = warnings;
    write_json(out / "report.json", j);
    return {"report.json", "mu_surface.csv", "phi_surface.csv", "mu_spatial_average.csv", "phi_spatial_average.csv"};
}

}  // namespace

std::string to_string(Command command) {
    switch (command) {
        case Command::Simulate: return "simulate";
        case Command::Fit: return "fit";
        case Command::Evaluate: return "evaluate";
        case Command::Diagnose: return "diagnose";
        case Command::Report: return "report";
    }
    return "?";
}

Command parse_command(const std::string& name) {
    for (Command c : {Command::Simulate, Command::Fit, Command::Evaluate, Command::Diagnose, Command::Report}) {
        if (to_string(c) == name) return c;
    }
    throw std::invalid_argument("unknown command '" + name + "'");
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("quantile of an empty set");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Band credible_band(const Eigen::MatrixXd& draws, double level) {
    Band b;
    const Eigen::Index n = draws.cols();
    b.mean = draws.colwise().mean().transpose();
    b.lower.resize(n);
    b.upper.resize(n);
    const double a = 0.5 * (1.0 - level);
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::vector<double> v = column_values(draws, i);
        b.lower[i] = quantile(v, a);
        b.upper[i] = quantile(v, 1.0 - a);
    }
    return b;
}

FittedModel load_fit(const RunConfig& current, const fs::path& out_dir) {
    const fs::path path = current.fit_path.empty() ? out_dir / "fit.json" : fs::path(current.fit_path);
    if (!fs::exists(path)) throw std::invalid_argument("fit artifact not found: " + path.string());
    const json doc = read_json(path);
    if (doc.value("kind", "") != "fit") throw std::invalid_argument(path.string() + " is not a fit artifact");
    FittedModel f;
    f.config = parse_config(doc.at("config"));
    const std::string events = current.events_path.empty() ? doc.at("events").at("path").get<std::string>()
                                                           : current.events_path;
    std::vector<std::string> ignored;
    const EventSequence data = load_events(events, f.config.window, ignored);
    const QuadratureSet grids = f.config.quadrature();
    f.data = prepare_data(data, f.config.window, grids, has_trigger(f.config.model.kind));
    f.model = build_model(f.config.resolved_model(data.size()), f.data);
    f.parameters = json_vector(doc.at("parameters"));
    if (static_cast<std::size_t>(f.parameters.size()) != f.model->parameter_count() || !f.parameters.allFinite()) {
        throw std::invalid_argument("fit parameters do not match the configured model");
    }
    return f;
}

FieldDraws draw_fields(const FittedModel& fitted, int n_draws, std::uint64_t seed, std::uint64_t stream) {
    if (n_draws < 1) throw std::invalid_argument("need at least one posterior draw");
    const auto& model = *fitted.model;
    const auto& gmu = fitted.data.mu_grid;
    const auto& gphi = fitted.data.phi_grid;
    FieldDraws d;
    d.mu.resize(n_draws, static_cast<Eigen::Index>(gmu.size()));
    d.phi = Eigen::MatrixXd::Zero(n_draws, static_cast<Eigen::Index>(gphi.size()));
    std::mt19937_64 rng = make_rng(seed, stream);
    int done = 0, failed = 0;
    while (done < n_draws) {
        const Eigen::VectorXd noise = standard_normal(rng, model.noise_dimension());
        try {
            const auto f = model.sample_fields(as_span(fitted.parameters), noise);
            d.mu.row(done) = f.mu->on_grid(gmu.grid).transpose();
            if (f.phi) d.phi.row(done) = f.phi->on_grid(gphi.grid).transpose();
            ++done;
        } catch (const ConditioningError&) {
            if (++failed > 10 * n_draws) throw;
        }
    }
    return d;
}

CommandResult run_command(Command command, const RunConfig& config, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    const auto start = std::chrono::steady_clock::now();
    CommandResult result;
    json timing = header("timing");
    switch (command) {
        case Command::Simulate: result.files = run_simulate(config, out_dir, result.warnings); break;
        case Command::Fit: result.files = run_fit(config, out_dir, result.warnings, timing); break;
        case Command::Evaluate: result.files = run_evaluate(config, out_dir, result.warnings); break;
        case Command::Diagnose: result.files = run_diagnose(config, out_dir, result.warnings); break;
        case Command::Report: result.files = run_report(config, out_dir, result.warnings); break;
    }
    timing["command"] = to_string(command);
    timing["wall_time_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_json(out_dir / ("timing_" + to_string(command) + ".json"), timing);
    update_manifest(out_dir, command, config, result.files);
    return result;
}

}  // namespace nphawkes
