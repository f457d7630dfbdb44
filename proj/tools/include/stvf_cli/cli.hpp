#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "stvf/studies.hpp"

namespace stvf::cli {

enum ExitCode : int {
    exit_pass = 0,
    exit_failure = 1,
    exit_config_error = 2,
    exit_solver_failure = 3,
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Everything a subcommand needs. Serialized form is the JSON config file.
struct RunConfig {
    ExperimentConfig experiment;
    std::filesystem::path out = "stvf-out";
    Index samples = 64;
    bool deterministic = false;
    bool strict = false;
    std::vector<double> eps_list{0.25, 0.125, 0.0625, 0.03125};
    std::vector<double> delta_list{0.0, 0.125, 0.0625, 0.03125, 0.015625};
    std::vector<double> check_eps_list{1.0, 1.0 / 32.0, 1e-3};
    double rate_threshold = 1e-3;
    Index max_steps = 20000;
    double gap_tol = 1e-3;
};

/// Defaults for a subcommand ("study" takes the study name).
[[nodiscard]] RunConfig default_config(std::string_view command, std::string_view study = {});

[[nodiscard]] nlohmann::ordered_json to_json(const RunConfig& cfg);

/// Overlays the keys of `doc` onto `cfg`. Unknown keys and wrong types throw ConfigError.
void apply_json(RunConfig& cfg, const nlohmann::json& doc);

/// Throws ConfigError when a field is out of range.
void validate(const RunConfig& cfg);

/// Entry point; args excludes the program name. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stvf::cli
