#include "stvf_cli/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"

#include "stvf/io_formats.hpp"
#include "stvf/property_suite.hpp"

namespace stvf::cli {

namespace {

using ordered_json = nlohmann::ordered_json;

const std::vector<std::string>& study_names()
{
    static const std::vector<std::string> names{"cauchy-eps", "delta-rate", "stability",
                                                "energy-trace", "stationary"};
    return names;
}

template <typename T>
T get_as(const nlohmann::json& value, const std::string& key)
{
    try {
        return value.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("config key '" + key + "' has the wrong type");
    }
}

Index get_count(const nlohmann::json& value, const std::string& key)
{
    const bool nonnegative = value.is_number_unsigned() ||
                             (value.is_number_integer() && value.get<std::int64_t>() >= 0);
    if (!nonnegative) {
        throw ConfigError("config key '" + key + "' must be a nonnegative integer");
    }
    return value.get<Index>();
}

/// N from T and a requested tau; tau must divide T into a whole number of steps.
Index steps_for_tau(double T, double tau)
{
    if (!(tau > 0.0)) {
        throw ConfigError("tau must be positive");
    }
    const double steps = T / tau;
    const double rounded = std::round(steps);
    if (rounded < 1.0 || std::abs(steps - rounded) > 1e-9 * rounded) {
        throw ConfigError("tau must divide T into a whole number of steps");
    }
    return static_cast<Index>(rounded);
}

}  // namespace

RunConfig default_config(std::string_view command, std::string_view study)
{
    RunConfig cfg;
    cfg.experiment = baseline_config();
    if (command == "check") {
        cfg.experiment.n = 16;
        cfg.samples = 1000;
    } else if (command == "study") {
        if (study == "cauchy-eps" || study == "delta-rate" || study == "stability") {
            cfg.experiment = desk_config();
        } else if (study == "stationary") {
            cfg.experiment.n = 16;
            cfg.experiment.params.N = 500;
        }
    }
    return cfg;
}

ordered_json to_json(const RunConfig& cfg)
{
    const SchemeParams& p = cfg.experiment.params;
    ordered_json j;
    j["n"] = cfg.experiment.n;
    j["T"] = p.T;
    j["N"] = p.N;
    j["eps"] = p.eps;
    j["delta"] = p.delta;
    j["lambda"] = p.lambda;
    j["mu"] = p.mu;
    j["nu"] = p.nu;
    j["noise"] = std::string(to_string(p.noise));
    j["newton_tol"] = p.newton_tol;
    j["max_nonlinear_iters"] = p.max_nonlinear_iters;
    j["seed"] = p.seed;
    j["thinning"] = p.thinning;
    j["disc_center"] = {cfg.experiment.disc_center.x, cfg.experiment.disc_center.y};
    j["disc_radius"] = cfg.experiment.disc_radius;
    j["energy_band"] = cfg.experiment.energy_band;
    j["workers"] = cfg.experiment.workers;
    j["out"] = cfg.out.string();
    j["samples"] = cfg.samples;
    j["deterministic"] = cfg.deterministic;
    j["strict"] = cfg.strict;
    j["eps_list"] = cfg.eps_list;
    j["delta_list"] = cfg.delta_list;
    j["check_eps_list"] = cfg.check_eps_list;
    j["rate_threshold"] = cfg.rate_threshold;
    j["max_steps"] = cfg.max_steps;
    j["gap_tol"] = cfg.gap_tol;
    return j;
}

void apply_json(RunConfig& cfg, const nlohmann::json& doc)
{
    if (!doc.is_object()) {
        throw ConfigError("config must be a JSON object");
    }
    SchemeParams& p = cfg.experiment.params;
    using Setter = std::function<void(const nlohmann::json&, const std::string&)>;
    const std::map<std::string, Setter> setters{
        {"n", [&](auto& v, auto& k) { cfg.experiment.n = get_count(v, k); }},
        {"T", [&](auto& v, auto& k) { p.T = get_as<double>(v, k); }},
        {"N", [&](auto& v, auto& k) { p.N = get_count(v, k); }},
        {"eps", [&](auto& v, auto& k) { p.eps = get_as<double>(v, k); }},
        {"delta", [&](auto& v, auto& k) { p.delta = get_as<double>(v, k); }},
        {"lambda", [&](auto& v, auto& k) { p.lambda = get_as<double>(v, k); }},
        {"mu", [&](auto& v, auto& k) { p.mu = get_as<double>(v, k); }},
        {"nu", [&](auto& v, auto& k) { p.nu = get_as<double>(v, k); }},
        {"noise",
         [&](auto& v, auto& k) {
             try {
                 p.noise = parse_noise_kind(get_as<std::string>(v, k));
             } catch (const std::invalid_argument& e) {
                 throw ConfigError(e.what());
             }
         }},
        {"newton_tol", [&](auto& v, auto& k) { p.newton_tol = get_as<double>(v, k); }},
        {"max_nonlinear_iters", [&](auto& v, auto& k) { p.max_nonlinear_iters = get_count(v, k); }},
        {"seed", [&](auto& v, auto& k) { p.seed = get_count(v, k); }},
        {"thinning", [&](auto& v, auto& k) { p.thinning = get_count(v, k); }},
        {"disc_center",
         [&](auto& v, auto& k) {
             const auto c = get_as<std::vector<double>>(v, k);
             if (c.size() != 2) {
                 throw ConfigError("disc_center must be [x, y]");
             }
             cfg.experiment.disc_center = {c[0], c[1]};
         }},
        {"disc_radius", [&](auto& v, auto& k) { cfg.experiment.disc_radius = get_as<double>(v, k); }},
        {"energy_band", [&](auto& v, auto& k) { cfg.experiment.energy_band = get_as<double>(v, k); }},
        {"workers", [&](auto& v, auto& k) { cfg.experiment.workers = get_count(v, k); }},
        {"out", [&](auto& v, auto& k) { cfg.out = get_as<std::string>(v, k); }},
        {"samples", [&](auto& v, auto& k) { cfg.samples = get_count(v, k); }},
        {"deterministic", [&](auto& v, auto& k) { cfg.deterministic = get_as<bool>(v, k); }},
        {"strict", [&](auto& v, auto& k) { cfg.strict = get_as<bool>(v, k); }},
        {"eps_list", [&](auto& v, auto& k) { cfg.eps_list = get_as<std::vector<double>>(v, k); }},
        {"delta_list", [&](auto& v, auto& k) { cfg.delta_list = get_as<std::vector<double>>(v, k); }},
        {"check_eps_list",
         [&](auto& v, auto& k) { cfg.check_eps_list = get_as<std::vector<double>>(v, k); }},
        {"rate_threshold", [&](auto& v, auto& k) { cfg.rate_threshold = get_as<double>(v, k); }},
        {"max_steps", [&](auto& v, auto& k) { cfg.max_steps = get_count(v, k); }},
        {"gap_tol", [&](auto& v, auto& k) { cfg.gap_tol = get_as<double>(v, k); }},
    };
    for (const auto& [key, value] : doc.items()) {
        if (key == "tau") {
            continue;
        }
        const auto it = setters.find(key);
        if (it == setters.end()) {
            throw ConfigError("unknown config key '" + key + "'");
        }
        it->second(value, key);
    }
    // tau is applied last so it sees the final T.
    if (doc.contains("tau")) {
        p.N = steps_for_tau(p.T, get_as<double>(doc["tau"], "tau"));
    }
}

void validate(const RunConfig& cfg)
{
    try {
        cfg.experiment.params.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (cfg.experiment.n < 2) {
        throw ConfigError("n must be at least 2");
    }
    if (cfg.experiment.workers < 1) {
        throw ConfigError("workers must be at least 1");
    }
    if (!(cfg.experiment.disc_radius > 0.0)) {
        throw ConfigError("disc_radius must be positive");
    }
    if (!(cfg.experiment.energy_band >= 0.0)) {
        throw ConfigError("energy_band must be nonnegative");
    }
    if (!(cfg.rate_threshold > 0.0) || !(cfg.gap_tol >= 0.0) || cfg.max_steps < 1) {
        throw ConfigError("stationary study settings out of range");
    }
}

namespace {

struct Overrides {
    std::string config;
    std::uint64_t seed = 0;
    std::string out;
    Index samples = 0;
    Index n = 0;
    double tau = 0.0;
    double eps = 0.0;
    double delta = 0.0;
    double lambda = 0.0;
    double mu = 0.0;
    double nu = 0.0;
    std::string noise;
    Index workers = 0;
    bool deterministic = false;
    bool strict = false;
    bool inject_sign_flip = false;

    // One entry per subcommand the option set is attached to.
    std::map<std::string, std::vector<CLI::Option*>> options;

    void attach(CLI::App& app)
    {
        options["config"].push_back(app.add_option("--config", config, "JSON config file"));
        options["seed"].push_back(app.add_option("--seed", seed, "master seed"));
        options["out"].push_back(app.add_option("--out", out, "output directory"));
        options["samples"].push_back(app.add_option("--samples", samples, "Monte Carlo or property samples"));
        options["n"].push_back(app.add_option("--n", n, "grid subdivisions per side"));
        options["tau"].push_back(app.add_option("--tau", tau, "time step; N = T / tau"));
        options["eps"].push_back(app.add_option("--eps", eps, "TV regularization"));
        options["delta"].push_back(app.add_option("--delta", delta, "viscosity"));
        options["lambda"].push_back(app.add_option("--lambda", lambda, "fidelity weight"));
        options["mu"].push_back(app.add_option("--mu", mu, "noise intensity"));
        options["nu"].push_back(app.add_option("--nu", nu, "data-noise amplitude"));
        options["noise"].push_back(app.add_option("--noise", noise, "linear|tracking|gradient|additive")
                                     ->check(CLI::IsMember({"linear", "tracking", "gradient", "additive"})));
        options["workers"].push_back(app.add_option("--workers", workers, "worker threads"));
        app.add_flag("--deterministic", deterministic, "run the mu = 0 twin");
        app.add_flag("--strict", strict, "treat inconclusive studies as failures");
        app.add_flag("--inject-sign-flip", inject_sign_flip)->group("");
    }

    [[nodiscard]] bool given(const std::string& name) const
    {
        const auto& opts = options.at(name);
        return std::any_of(opts.begin(), opts.end(), [](const CLI::Option* o) { return o->count() > 0; });
    }

    /// Flags beat the config file, which beats the defaults.
    void apply(RunConfig& cfg) const
    {
        if (given("config")) {
            std::ifstream is(config);
            if (!is) {
                throw ConfigError("cannot open config file '" + config + "'");
            }
            nlohmann::json doc;
            try {
                doc = nlohmann::json::parse(is);
            } catch (const nlohmann::json::parse_error& e) {
                throw ConfigError(std::string("config file is not valid JSON: ") + e.what());
            }
            apply_json(cfg, doc);
        }
        SchemeParams& p = cfg.experiment.params;
        if (given("seed")) p.seed = seed;
        if (given("out")) cfg.out = out;
        if (given("samples")) cfg.samples = samples;
        if (given("n")) cfg.experiment.n = n;
        if (given("tau")) p.N = steps_for_tau(p.T, tau);
        if (given("eps")) p.eps = eps;
        if (given("delta")) p.delta = delta;
        if (given("lambda")) p.lambda = lambda;
        if (given("mu")) p.mu = mu;
        if (given("nu")) p.nu = nu;
        if (given("noise")) p.noise = parse_noise_kind(noise);
        if (given("workers")) cfg.experiment.workers = workers;
        if (deterministic) cfg.deterministic = true;
        if (strict) cfg.strict = true;
        if (cfg.deterministic) p.mu = 0.0;
    }
};

void prepare_out_dir(const RunConfig& cfg)
{
    std::error_code ec;
    std::filesystem::create_directories(cfg.out, ec);
    if (ec) {
        throw std::runtime_error("cannot create output directory '" + cfg.out.string() + "'");
    }
    write_text_file(cfg.out / "resolved_config.json", to_json(cfg).dump(2) + "\n");
}

void log_config(const RunConfig& cfg, std::ostream& err)
{
    err << "resolved config: " << to_json(cfg).dump() << "\n";
}

int cmd_mesh_info(const RunConfig& cfg, std::ostream& out)
{
    const Mesh mesh = build_unit_square_mesh(cfg.experiment.n);
    ordered_json j;
    j["n"] = mesh.structured_n();
    j["nodes"] = mesh.num_nodes();
    j["elements"] = mesh.num_elements();
    j["interior_nodes"] = mesh.free_nodes().size();
    j["boundary_nodes"] = mesh.num_nodes() - mesh.free_nodes().size();
    j["h"] = mesh.h();
    j["area"] = mesh.total_area();
    j["quasi_uniformity"] = mesh.quasi_uniformity_ratio();
    out << j.dump(2) << "\n";
    return exit_pass;
}

int cmd_run(const RunConfig& cfg, std::ostream& out)
{
    const ExperimentConfig& e = cfg.experiment;
    const SchemeParams& p = e.params;
    const FemSpace space(build_unit_square_mesh(e.n));
    const Mesh& mesh = space.mesh();
    const NoisyImage img = make_noisy_image(mesh, p.nu, image_seed(p.seed), e.disc_center, e.disc_radius);
    const FeFunction x0 = FeFunction::zeros(mesh);
    const WienerPath path = sample_path(sample_seed(p.seed, 0), p.N, mesh.boundary_mask(), p.noise, p.tau());
    const TrajectoryRecord rec = run_trajectory(p, space, x0, img.noisy.values, path);

    prepare_out_dir(cfg);
    write_energy_csv(rec, cfg.out / "energy.csv");
    write_field_csv(x0, mesh, cfg.out / "initial.csv", 0.0);
    write_field_pgm(x0, mesh, cfg.out / "initial.pgm", 0.0, 1.0);
    write_field_csv(rec.states.back(), mesh, cfg.out / "final.csv", rec.times.back());
    write_field_pgm(rec.states.back(), mesh, cfg.out / "final.pgm", 0.0, 1.0);
    write_field_csv(img.noisy, mesh, cfg.out / "noisy.csv", 0.0);
    write_field_pgm(img.noisy, mesh, cfg.out / "noisy.pgm", 0.0, 1.0);

    const EnergyBreakdown& first = rec.energies.front();
    const EnergyBreakdown& last = rec.energies.back();
    out << "run: " << p.N << " steps, energy " << format_real(first.total) << " -> "
        << format_real(last.total) << ", files in " << cfg.out.string() << "\n";
    return exit_pass;
}

int cmd_check(const RunConfig& cfg, bool sign_flip, std::ostream& out, std::ostream& err)
{
    PropertySuiteOptions opt;
    opt.n = cfg.experiment.n;
    opt.samples = cfg.samples;
    opt.eps_list = cfg.check_eps_list;
    opt.seed = cfg.experiment.params.seed;
    if (sign_flip) {
        opt.tv_load = [](const Mesh& mesh, std::span<const double> u, double eps) {
            Vector b = tv_operator_load(mesh, u, eps);
            for (double& v : b) {
                v = -v;
            }
            return b;
        };
    }
    if (cfg.samples == 0) {
        err << "warning: --samples 0, random-field properties are checked vacuously\n";
    }
    const auto outcomes = run_property_suite(opt);

    prepare_out_dir(cfg);
    Table t;
    t.columns = {"property", "passed", "checked", "worst_margin", "offending_seed"};
    ordered_json summary;
    summary["command"] = "check";
    bool all = true;
    for (const PropertyOutcome& o : outcomes) {
        all = all && o.passed;
        const std::string seed = o.offending_seed ? std::to_string(*o.offending_seed) : "";
        t.add_row({o.name, o.passed ? "1" : "0", std::to_string(o.checked), format_real(o.worst_margin), seed});
        out << (o.passed ? "PASS " : "FAIL ") << o.name << " (" << o.checked << " checks, worst margin "
            << o.worst_margin << ", " << o.detail << ")";
        if (o.offending_seed) {
            out << " offending seed " << *o.offending_seed;
        }
        out << "\n";
        ordered_json entry;
        entry["passed"] = o.passed;
        entry["checked"] = o.checked;
        entry["worst_margin"] = o.worst_margin;
        entry["offending_seed"] = o.offending_seed ? ordered_json(*o.offending_seed) : ordered_json(nullptr);
        summary["properties"][o.name] = entry;
    }
    summary["passed"] = all;
    write_table_csv(t, cfg.out / "check.csv");
    write_text_file(cfg.out / "summary.json", summary.dump(2) + "\n");
    return all ? exit_pass : exit_failure;
}

ordered_json rate_summary(const RateStudyReport& r)
{
    ordered_json j;
    j["study"] = r.name;
    j["passed"] = r.passed;
    j["inconclusive"] = r.inconclusive;
    j["slope"] = r.slope;
    j["slope_min"] = r.slope_min;
    j["slope_max"] = std::isinf(r.slope_max) ? ordered_json(nullptr) : ordered_json(r.slope_max);
    j["detail"] = r.detail;
    for (const RateLevel& l : r.levels) {
        j["levels"].push_back({{"parameter", l.parameter},
                               {"mean", l.estimate.mean},
                               {"std_error", l.estimate.std_error},
                               {"statistic", l.estimate.statistic}});
    }
    return j;
}

int study_exit(bool passed, bool inconclusive, bool strict)
{
    if (passed) {
        return exit_pass;
    }
    return inconclusive && !strict ? exit_pass : exit_failure;
}

int cmd_study(const std::string& name, const RunConfig& cfg, std::ostream& out)
{
    const ExperimentConfig& e = cfg.experiment;
    Table table;
    ordered_json summary;
    bool passed = false;
    bool inconclusive = false;
    std::ostringstream line;

    if (name == "cauchy-eps" || name == "delta-rate") {
        const RateStudyReport r = name == "cauchy-eps" ? study_cauchy_eps(cfg.eps_list, cfg.samples, e)
                                                      : study_delta_rate(cfg.delta_list, cfg.samples, e);
        table = r.table();
        summary = rate_summary(r);
        passed = r.passed;
        inconclusive = r.inconclusive;
        for (const RateLevel& l : r.levels) {
            line << "  parameter " << l.parameter << ": " << l.estimate.mean << " +- "
                 << l.estimate.std_error << "\n";
        }
        line << name << ": " << r.detail;
    } else if (name == "stability") {
        const StabilityReport r = study_stability_bounds(cfg.samples, e);
        table = r.table();
        summary["study"] = name;
        summary["passed"] = r.passed;
        for (const McReport& c : r.checks) {
            summary["checks"][c.name] = {{"mean", c.mean}, {"std_error", c.std_error},
                                         {"bound", c.bound}, {"passed", c.passed}};
            line << "  " << c.name << ": " << c.mean << " +- " << c.std_error << " <= " << c.bound
                 << (c.passed ? " ok" : " VIOLATED") << "\n";
        }
        passed = r.passed;
        line << name << ": " << r.checks.size() << " bounds";
    } else if (name == "energy-trace") {
        const EnergyTraceReport r = study_energy_trace(e);
        table = r.table();
        summary["study"] = name;
        summary["passed"] = r.passed;
        summary["deterministic_nonincreasing"] = r.deterministic_nonincreasing;
        summary["within_band"] = r.within_band;
        summary["below_noisy_energy"] = r.below_noisy_energy;
        summary["plateau"] = r.plateau;
        summary["denoised"] = r.denoised;
        summary["noisy_image_energy"] = r.noisy_image_energy;
        summary["final_energy"] = r.stochastic.energies.back().total;
        summary["final_deterministic_energy"] = r.deterministic.energies.back().total;
        summary["distance_noisy"] = r.distance_noisy;
        summary["distance_final"] = r.distance_final;
        passed = r.passed;
        line << name << ": final energy " << r.stochastic.energies.back().total << " (noisy image "
             << r.noisy_image_energy << "), distance to g " << r.distance_final << " (noisy "
             << r.distance_noisy << ")";
    } else if (name == "stationary") {
        const StationaryReport r =
            study_stationary_vs_minimizer(e, cfg.rate_threshold, cfg.max_steps, cfg.gap_tol);
        table.columns = {"steps", "final_rate", "flow_energy", "min_energy", "relative_gap"};
        table.add_row({static_cast<double>(r.steps), r.final_rate, r.flow_energy, r.min_energy,
                       r.relative_gap});
        summary["study"] = name;
        summary["passed"] = r.passed;
        summary["inconclusive"] = r.inconclusive;
        summary["stationary"] = r.stationary;
        summary["steps"] = r.steps;
        summary["relative_gap"] = r.relative_gap;
        passed = r.passed;
        inconclusive = r.inconclusive;
        line << name << ": relative gap " << r.relative_gap << " after " << r.steps << " steps";
    } else {
        throw ConfigError("unknown study '" + name + "'");
    }

    prepare_out_dir(cfg);
    write_table_csv(table, cfg.out / (name + ".csv"));
    write_text_file(cfg.out / "summary.json", summary.dump(2) + "\n");
    out << line.str() << " -> " << (passed ? "PASS" : inconclusive ? "INCONCLUSIVE" : "FAIL") << "\n";
    return study_exit(passed, inconclusive, cfg.strict);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Stochastic total variation flow: finite-element simulator and checks", "stvf"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    Overrides ov;
    std::string study;
    CLI::App* mesh_info = app.add_subcommand("mesh-info", "describe the structured mesh");
    CLI::App* run_cmd = app.add_subcommand("run", "simulate one trajectory");
    CLI::App* check = app.add_subcommand("check", "run the property suite");
    CLI::App* study_cmd = app.add_subcommand("study", "run a named study");
    study_cmd->add_option("name", study, "study name")->required()->check(CLI::IsMember(study_names()));
    for (CLI::App* sub : {mesh_info, run_cmd, check, study_cmd}) {
        ov.attach(*sub);
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return exit_pass;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_pass;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return exit_config_error;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    RunConfig cfg = default_config(command, study);
    try {
        ov.apply(cfg);
        validate(cfg);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config_error;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config_error;
    }
    log_config(cfg, err);

    try {
        if (command == "mesh-info") return cmd_mesh_info(cfg, out);
        if (command == "run") return cmd_run(cfg, out);
        if (command == "check") return cmd_check(cfg, ov.inject_sign_flip, out, err);
        return cmd_study(study, cfg, out);
    } catch (const StepFailure& e) {
        err << "solver failure at step " << e.step() << ": " << e.what() << "\n";
        return exit_solver_failure;
    } catch (const CgFailure& e) {
        err << "solver failure: " << e.what() << "\n";
        return exit_solver_failure;
    } catch (const MinimizerFailure& e) {
        err << "solver failure: " << e.what() << "\n";
        return exit_solver_failure;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config_error;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config_error;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_failure;
    }
}

}  // namespace stvf::cli
