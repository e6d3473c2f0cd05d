#include "nphawkes/commands.hpp"
#include "nphawkes/io.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace nphawkes;

namespace {

void write_error(const fs::path& out, const std::string& command, const std::string& type,
                 const std::string& message) {
    std::cerr << "error (" << type << "): " << message << '\n';
    try {
        fs::create_directories(out);
        write_json(out / "error.json", {{"schema_version", kSchemaVersion},
                                        {"kind", "error"},
                                        {"command", command},
                                        {"error_type", type},
                                        {"message", message}});
    } catch (const std::exception&) {
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nonparametric spatio-temporal Hawkes processes with sparse GP priors"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    std::string profile;
    app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "Output directory");
    app.add_option("--seed", seed, "Overrides the configured seed");
    app.add_option("--profile", profile, "Grid profile")->check(CLI::IsMember({"full", "desk"}));
    for (const char* name : {"simulate", "fit", "evaluate", "diagnose", "report"}) {
        app.add_subcommand(name, std::string("Run the ") + name + " command");
    }
    CLI11_PARSE(app, argc, argv);
    const std::string command = app.get_subcommands().front()->get_name();

    RunConfig config;
    try {
        nlohmann::json doc = config_path.empty() ? nlohmann::json::object() : nlohmann::json::parse(read_text(config_path));
        if (!profile.empty()) doc["grids"]["profile"] = profile;
        config = parse_config(doc);
        if (seed) {
            config.seed = *seed;
            config.restart_seeds.clear();
        }
    } catch (const nlohmann::json::parse_error& e) {
        write_error(out_dir, command, "config", std::string("malformed config document: ") + e.what());
        return 2;
    } catch (const std::exception& e) {
        write_error(out_dir, command, "config", e.what());
        return 2;
    }

    try {
        const CommandResult result = run_command(parse_command(command), config, out_dir);
        for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
        for (const auto& f : result.files) std::cout << (fs::path(out_dir) / f).string() << '\n';
    } catch (const FitError& e) {
        write_error(out_dir, command, "fit", e.what());
        return 1;
    } catch (const std::exception& e) {
        write_error(out_dir, command, "runtime", e.what());
        return 1;
    }
    return 0;
}
