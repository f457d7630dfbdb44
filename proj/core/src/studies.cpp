#include "stvf/studies.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

namespace stvf {

void parallel_for(Index count, Index workers, const std::function<void(Index)>& fn)
{
    if (workers <= 1 || count <= 1) {
        for (Index i = 0; i < count; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<Index> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        while (true) {
            const Index i = next.fetch_add(1);
            if (i >= count) {
                return;
            }
            try {
                fn(i);
            } catch (...) {
                const std::lock_guard lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
                next.store(count);
                return;
            }
        }
    };
    std::vector<std::jthread> pool;
    const Index n_threads = std::min(workers, count);
    pool.reserve(n_threads);
    for (Index t = 0; t < n_threads; ++t) {
        pool.emplace_back(worker);
    }
    pool.clear();
    if (error) {
        std::rethrow_exception(error);
    }
}

ExperimentConfig baseline_config()
{
    ExperimentConfig cfg;
    cfg.n = 32;
    cfg.params.T = 0.05;
    cfg.params.N = 5000;
    cfg.params.eps = 1.0 / 32.0;
    cfg.params.delta = 0.0;
    cfg.params.lambda = 200.0;
    cfg.params.mu = 1.0;
    cfg.params.nu = 0.1;
    cfg.params.noise = NoiseKind::tracking;
    return cfg;
}

ExperimentConfig desk_config()
{
    ExperimentConfig cfg = baseline_config();
    cfg.n = 8;
    cfg.params.N = 50;
    cfg.params.noise = NoiseKind::scalar_linear;
    return cfg;
}

namespace {

constexpr std::uint64_t kImageStream = 0x8000000000000000ULL;

}  // namespace

std::uint64_t sample_seed(std::uint64_t master, Index sample) noexcept
{
    return derive_seed(master, sample);
}

std::uint64_t image_seed(std::uint64_t master) noexcept
{
    return derive_seed(master, kImageStream);
}

NoisyImage make_noisy_image(const Mesh& mesh, double nu, std::uint64_t seed, Point2 center,
                            double radius)
{
    if (!(nu >= 0.0)) {
        throw std::invalid_argument("make_noisy_image: nu must be nonnegative");
    }
    const double r2 = radius * radius;
    NoisyImage img;
    img.clean = interpolate(
        [&](double x, double y) {
            const double dx = x - center.x;
            const double dy = y - center.y;
            return dx * dx + dy * dy <= r2 ? 1.0 : 0.0;
        },
        mesh, false);
    img.noisy = img.clean;
    Rng rng(seed);
    for (Index l : mesh.free_nodes()) {
        img.noisy.values[l] += nu * rng.uniform(-1.0, 1.0);
    }
    return img;
}

McReport summarize(std::string name, std::string statistic, std::vector<double> values)
{
    McReport r;
    r.name = std::move(name);
    r.statistic = std::move(statistic);
    r.values = std::move(values);
    const Index n = r.values.size();
    if (n == 0) {
        return r;
    }
    CompensatedSum s;
    for (double v : r.values) {
        s.add(v);
    }
    r.mean = s.value() / static_cast<double>(n);
    if (n > 1) {
        CompensatedSum ss;
        for (double v : r.values) {
            ss.add((v - r.mean) * (v - r.mean));
        }
        const double var = ss.value() / static_cast<double>(n - 1);
        r.std_error = std::sqrt(var / static_cast<double>(n));
    }
    return r;
}

void McReport::check_bound(double upper)
{
    bound = upper;
    passed = mean <= bound + 3.0 * std_error;
}

double log2_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size() || x.size() < 2) {
        throw std::invalid_argument("log2_slope: need at least two matching points");
    }
    const double n = static_cast<double>(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (Index i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) {
            throw std::domain_error("log2_slope: values must be positive");
        }
        mx += std::log2(x[i]);
        my += std::log2(y[i]);
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    for (Index i = 0; i < x.size(); ++i) {
        const double dx = std::log2(x[i]) - mx;
        sxy += dx * (std::log2(y[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

Table RateStudyReport::table() const
{
    Table t;
    t.columns = {"parameter", "mean", "std_error", "samples"};
    for (const RateLevel& l : levels) {
        t.add_row({l.parameter, l.estimate.mean, l.estimate.std_error,
                   static_cast<double>(l.estimate.values.size())});
    }
    return t;
}

Table StabilityReport::table() const
{
    Table t;
    t.columns = {"check", "statistic", "mean", "std_error", "bound", "passed"};
    for (const McReport& c : checks) {
        t.add_row({c.name, c.statistic, format_real(c.mean), format_real(c.std_error),
                   format_real(c.bound), c.passed ? "1" : "0"});
    }
    return t;
}

Table EnergyTraceReport::table() const
{
    Table t;
    t.columns = {"step", "time", "tv_eps", "fidelity", "total", "det_tv_eps", "det_fidelity",
                 "det_total"};
    for (Index i = 0; i < stochastic.energies.size(); ++i) {
        const EnergyBreakdown& s = stochastic.energies[i];
        const EnergyBreakdown& d = deterministic.energies.at(i);
        t.add_row({static_cast<double>(i), stochastic.times[i], s.tv_eps, s.fidelity, s.total,
                   d.tv_eps, d.fidelity, d.total});
    }
    return t;
}

namespace {

struct StudySetup {
    FemSpace space;
    NoisyImage image;
    FeFunction x0;
    SchemeParams params;
};

StudySetup make_setup(const ExperimentConfig& cfg, NoiseKind kind)
{
    FemSpace space(build_unit_square_mesh(cfg.n));
    NoisyImage image = make_noisy_image(space.mesh(), cfg.params.nu, image_seed(cfg.params.seed),
                                        cfg.disc_center, cfg.disc_radius);
    FeFunction x0 = FeFunction::zeros(space.mesh());
    SchemeParams p = cfg.params;
    p.noise = kind;
    p.thinning = 1;
    p.validate();
    return StudySetup{std::move(space), std::move(image), std::move(x0), p};
}

double mass_distance_sq(const FemSpace& space, const FeFunction& a, const FeFunction& b)
{
    Vector d(a.size());
    for (Index i = 0; i < d.size(); ++i) {
        d[i] = a[i] - b[i];
    }
    return space.mass_norm_sq(d);
}

void require_coupled(const std::vector<TrajectoryRecord>& runs, std::uint64_t checksum)
{
    for (const auto& r : runs) {
        if (r.path_checksum != checksum) {
            throw std::logic_error("coupled study consumed different Wiener paths");
        }
    }
}

/// Inconclusive when neighbouring levels cannot be separated at 3 standard errors.
bool levels_overlap(const std::vector<RateLevel>& levels)
{
    for (Index k = 0; k + 1 < levels.size(); ++k) {
        const McReport& a = levels[k].estimate;
        const McReport& b = levels[k + 1].estimate;
        const double a_lo = a.mean - 3.0 * a.std_error;
        const double a_hi = a.mean + 3.0 * a.std_error;
        const double b_lo = b.mean - 3.0 * b.std_error;
        const double b_hi = b.mean + 3.0 * b.std_error;
        if (a_lo <= b_hi && b_lo <= a_hi) {
            return true;
        }
    }
    return false;
}

void finish_rate_report(RateStudyReport& rep)
{
    std::vector<double> x;
    std::vector<double> y;
    bool all_positive = true;
    for (const RateLevel& l : rep.levels) {
        if (l.parameter > 0.0) {
            x.push_back(l.parameter);
            y.push_back(l.estimate.mean);
            all_positive = all_positive && l.estimate.mean > 0.0;
        }
    }
    std::ostringstream os;
    if (x.size() < 2 || !all_positive) {
        rep.slope = std::numeric_limits<double>::quiet_NaN();
        rep.passed = false;
        rep.inconclusive = true;
        os << "fewer than two positive levels with positive estimates";
        rep.detail = os.str();
        return;
    }
    rep.slope = log2_slope(x, y);
    rep.passed = rep.slope >= rep.slope_min && rep.slope <= rep.slope_max;
    std::vector<RateLevel> positive;
    for (const RateLevel& l : rep.levels) {
        if (l.parameter > 0.0) {
            positive.push_back(l);
        }
    }
    rep.inconclusive = !rep.passed && levels_overlap(positive);
    os << "slope " << rep.slope << " gate [" << rep.slope_min << ", " << rep.slope_max << "]";
    rep.detail = os.str();
}

}  // namespace

RateStudyReport study_cauchy_eps(const std::vector<double>& eps_list, Index samples,
                                 const ExperimentConfig& base)
{
    if (eps_list.size() < 2) {
        throw std::invalid_argument("study_cauchy_eps: need at least two eps values");
    }
    for (Index k = 0; k < eps_list.size(); ++k) {
        if (!(eps_list[k] > 0.0) || (k > 0 && !(eps_list[k] < eps_list[k - 1]))) {
            throw std::invalid_argument("study_cauchy_eps: eps values must be positive and decreasing");
        }
    }
    const StudySetup setup = make_setup(base, NoiseKind::scalar_linear);
    const Index pairs = eps_list.size() - 1;
    std::vector<std::vector<double>> sup_diff(pairs, std::vector<double>(samples, 0.0));

    parallel_for(samples, base.workers, [&](Index s) {
        const WienerPath path = sample_path(sample_seed(base.params.seed, s), setup.params.N,
                                            setup.space.mesh().boundary_mask(),
                                            NoiseKind::scalar_linear, setup.params.tau());
        std::vector<TrajectoryRecord> runs;
        runs.reserve(eps_list.size());
        for (double eps : eps_list) {
            SchemeParams p = setup.params;
            p.eps = eps;
            runs.push_back(run_trajectory(p, setup.space, setup.x0, setup.image.noisy.values, path));
        }
        require_coupled(runs, path.checksum());
        for (Index k = 0; k < pairs; ++k) {
            double worst = 0.0;
            for (Index i = 0; i <= setup.params.N; ++i) {
                worst = std::max(worst, mass_distance_sq(setup.space, runs[k].states[i],
                                                         runs[k + 1].states[i]));
            }
            sup_diff[k][s] = worst;
        }
    });

    RateStudyReport rep;
    rep.name = "cauchy-eps";
    rep.slope_min = 0.7;
    rep.slope_max = 1.6;
    for (Index k = 0; k < pairs; ++k) {
        std::ostringstream stat;
        stat << "E[max_i ||X^eps1 - X^eps2||_M^2], eps1=" << eps_list[k] << " eps2=" << eps_list[k + 1];
        rep.levels.push_back({eps_list[k], summarize("d", stat.str(), std::move(sup_diff[k]))});
    }
    finish_rate_report(rep);
    return rep;
}

RateStudyReport study_delta_rate(const std::vector<double>& delta_list, Index samples,
                                 const ExperimentConfig& base)
{
    if (delta_list.empty()) {
        throw std::invalid_argument("study_delta_rate: empty delta list");
    }
    for (double d : delta_list) {
        if (!(d >= 0.0)) {
            throw std::invalid_argument("study_delta_rate: delta values must be nonnegative");
        }
    }
    const StudySetup setup = make_setup(base, NoiseKind::scalar_linear);
    const Index levels = delta_list.size();
    const Index steps = setup.params.N + 1;
    // diff[level][sample][step]
    std::vector<std::vector<std::vector<double>>> diff(
        levels, std::vector<std::vector<double>>(samples, std::vector<double>(steps, 0.0)));

    parallel_for(samples, base.workers, [&](Index s) {
        const WienerPath path = sample_path(sample_seed(base.params.seed, s), setup.params.N,
                                            setup.space.mesh().boundary_mask(),
                                            NoiseKind::scalar_linear, setup.params.tau());
        SchemeParams p0 = setup.params;
        p0.delta = 0.0;
        std::vector<TrajectoryRecord> runs;
        runs.push_back(run_trajectory(p0, setup.space, setup.x0, setup.image.noisy.values, path));
        for (Index k = 0; k < levels; ++k) {
            const TrajectoryRecord* rec = &runs.front();
            if (delta_list[k] > 0.0) {
                SchemeParams p = setup.params;
                p.delta = delta_list[k];
                runs.push_back(run_trajectory(p, setup.space, setup.x0, setup.image.noisy.values, path));
                rec = &runs.back();
            }
            for (Index i = 0; i < steps; ++i) {
                diff[k][s][i] = mass_distance_sq(setup.space, rec->states[i], runs.front().states[i]);
            }
        }
        require_coupled(runs, path.checksum());
    });

    RateStudyReport rep;
    rep.name = "delta-rate";
    rep.slope_min = 0.7;
    for (Index k = 0; k < levels; ++k) {
        // max over steps of the sample mean; per-sample values at the maximizing step
        Index best = 0;
        double best_mean = -1.0;
        for (Index i = 0; i < steps; ++i) {
            CompensatedSum m;
            for (Index s = 0; s < samples; ++s) {
                m.add(diff[k][s][i]);
            }
            if (m.value() > best_mean) {
                best_mean = m.value();
                best = i;
            }
        }
        std::vector<double> vals(samples);
        for (Index s = 0; s < samples; ++s) {
            vals[s] = diff[k][s][best];
        }
        std::ostringstream stat;
        stat << "max_i E||X^delta_i - X^0_i||_M^2 (argmax step " << best << ")";
        rep.levels.push_back({delta_list[k], summarize("D", stat.str(), std::move(vals))});
    }
    std::sort(rep.levels.begin(), rep.levels.end(),
              [](const RateLevel& a, const RateLevel& b) { return a.parameter > b.parameter; });
    finish_rate_report(rep);
    return rep;
}

StabilityReport study_stability_bounds(Index samples, const ExperimentConfig& base)
{
    const StudySetup setup = make_setup(base, NoiseKind::scalar_linear);
    const SchemeParams& p = setup.params;
    const FemSpace& space = setup.space;
    const Index steps = p.N + 1;
    const double tau = p.tau();
    const double T = tau * static_cast<double>(p.N);
    const auto& g = setup.image.noisy.values;

    // Per sample and step: ||X^i||^2, ||grad X^i||^2, and the running sums.
    struct SampleSeries {
        std::vector<double> l2;
        std::vector<double> h1;
        std::vector<double> energy_est;  // 1/2||X^i||^2 + sums up to i
        double energy_sum = 0.0;         // tau * sum_{k>=1} (J_eps + lambda/2||X^k - g||^2)
    };
    std::vector<SampleSeries> series(samples);

    parallel_for(samples, base.workers, [&](Index s) {
        const WienerPath path = sample_path(sample_seed(p.seed, s), p.N, space.mesh().boundary_mask(),
                                            NoiseKind::scalar_linear, tau);
        const TrajectoryRecord rec = run_trajectory(p, space, setup.x0, g, path);
        SampleSeries& out = series[s];
        out.l2.resize(steps);
        out.h1.resize(steps);
        out.energy_est.resize(steps);
        CompensatedSum incr;
        CompensatedSum visc;
        CompensatedSum fid;
        CompensatedSum law;
        for (Index i = 0; i < steps; ++i) {
            const auto& x = rec.states[i].values;
            out.l2[i] = space.mass_norm_sq(x);
            out.h1[i] = space.grad_norm_sq(x);
            if (i > 0) {
                incr.add(rec.step_increments[i]);
                visc.add(out.h1[i]);
                fid.add(out.l2[i]);
                law.add(rec.energies[i].total);
            }
            out.energy_est[i] = 0.5 * out.l2[i] + 0.25 * incr.value() +
                                tau * p.delta * visc.value() + 0.5 * tau * p.lambda * fid.value();
        }
        out.energy_sum = tau * law.value();
    });

    // max over steps of the sample mean, returning per-sample values at the argmax
    auto sup_of_mean = [&](auto&& value_of) {
        Index best = 0;
        double best_mean = -std::numeric_limits<double>::infinity();
        for (Index i = 0; i < steps; ++i) {
            CompensatedSum m;
            for (Index s = 0; s < samples; ++s) {
                m.add(value_of(s, i));
            }
            if (m.value() > best_mean) {
                best_mean = m.value();
                best = i;
            }
        }
        std::vector<double> vals(samples);
        for (Index s = 0; s < samples; ++s) {
            vals[s] = value_of(s, best);
        }
        return std::pair{best, vals};
    };

    const double x0_sq = space.mass_norm_sq(setup.x0.values);
    const double x0_grad_sq = space.grad_norm_sq(setup.x0.values);
    const double g_sq = space.mass_norm_sq(g);
    const double g_grad_sq = space.grad_norm_sq(g);
    const double growth = std::exp(2.0 * T);
    const double l2_bound = growth * (x0_sq + 2.0 * T * p.lambda * g_sq);

    StabilityReport rep;
    {
        auto [i, vals] = sup_of_mean([&](Index s, Index k) { return series[s].l2[k]; });
        McReport r = summarize("l2-sup", "sup_i E||X^i||^2 (step " + std::to_string(i) + ")",
                               std::move(vals));
        r.check_bound(l2_bound);
        rep.checks.push_back(std::move(r));
    }
    {
        auto [i, vals] = sup_of_mean([&](Index s, Index k) { return series[s].energy_est[k]; });
        McReport r = summarize("energy-estimate",
                               "1/2E||X^i||^2 + 1/4 E sum||dX||^2 + tau delta E sum||grad X||^2 + "
                               "tau lambda/2 E sum||X||^2 (step " + std::to_string(i) + ")",
                               std::move(vals));
        r.check_bound(0.5 * x0_sq + T * l2_bound + T * p.lambda * g_sq);
        rep.checks.push_back(std::move(r));
    }
    {
        auto [i, vals] = sup_of_mean([&](Index s, Index k) { return series[s].h1[k]; });
        McReport r = summarize("h1-sup", "sup_i E||grad X^i||^2 (step " + std::to_string(i) + ")",
                               std::move(vals));
        r.check_bound(growth * (x0_grad_sq + 2.0 * T * p.lambda * g_grad_sq));
        rep.checks.push_back(std::move(r));
    }
    {
        auto [i, vals] = sup_of_mean([&](Index s, Index k) { return 0.5 * series[s].l2[k]; });
        for (Index s = 0; s < samples; ++s) {
            vals[s] += series[s].energy_sum;
        }
        McReport r = summarize("energy-law",
                               "sup_i 1/2E||X^i||^2 + tau E sum(J_eps + lambda/2||X^k - g||^2) (step " +
                                   std::to_string(i) + ")",
                               std::move(vals));
        r.check_bound(growth * (0.5 * x0_sq +
                                T * (p.eps * space.mesh().total_area() + 0.5 * p.lambda * g_sq)));
        rep.checks.push_back(std::move(r));
    }
    rep.passed = std::all_of(rep.checks.begin(), rep.checks.end(),
                             [](const McReport& r) { return r.passed; });
    return rep;
}

EnergyTraceReport study_energy_trace(const ExperimentConfig& cfg)
{
    cfg.params.validate();
    const FemSpace space(build_unit_square_mesh(cfg.n));
    const Mesh& mesh = space.mesh();
    EnergyTraceReport rep;
    rep.image = make_noisy_image(mesh, cfg.params.nu, image_seed(cfg.params.seed), cfg.disc_center,
                                 cfg.disc_radius);
    const auto& g = rep.image.noisy.values;
    const FeFunction x0 = FeFunction::zeros(mesh);
    const SchemeParams& p = cfg.params;

    const WienerPath path = sample_path(sample_seed(p.seed, 0), p.N, mesh.boundary_mask(), p.noise,
                                        p.tau());
    rep.stochastic = run_trajectory(p, space, x0, g, path);
    SchemeParams det = p;
    det.mu = 0.0;
    rep.deterministic = run_trajectory(det, space, x0, g, path);

    rep.noisy_image_energy = energy(space, g, g, p.eps, p.lambda).total;

    const auto& de = rep.deterministic.energies;
    const auto& se = rep.stochastic.energies;
    rep.deterministic_nonincreasing = true;
    const auto& dinc = rep.deterministic.step_increments;
    for (Index i = 1; i < de.size(); ++i) {
        if (de[i].total + dinc[i] / p.tau() > de[i - 1].total + 10.0 * p.newton_tol) {
            rep.deterministic_nonincreasing = false;
        }
    }

    const double plateau_energy = de.back().total;
    const double band = cfg.energy_band * plateau_energy;
    rep.within_band = true;
    for (Index i = de.size() / 2; i < de.size(); ++i) {
        if (std::abs(se[i].total - de[i].total) > band) {
            rep.within_band = false;
        }
    }
    rep.below_noisy_energy = se.back().total < rep.noisy_image_energy;

    // Plateau: mean over the last tenth of the run within 2% of the mean over
    // the tenth before it.
    const Index tenth = std::max<Index>(1, (se.size() - 1) / 10);
    auto window_mean = [&](Index first, Index last) {
        CompensatedSum m;
        for (Index i = first; i < last; ++i) {
            m.add(se[i].total);
        }
        return m.value() / static_cast<double>(last - first);
    };
    const double last_mean = window_mean(se.size() - tenth, se.size());
    const double prev_mean = window_mean(se.size() - 2 * tenth, se.size() - tenth);
    rep.plateau = std::abs(last_mean - prev_mean) <= 0.02 * std::abs(last_mean);

    rep.distance_noisy = std::sqrt(mass_distance_sq(space, rep.image.noisy, rep.image.clean));
    rep.distance_final = std::sqrt(mass_distance_sq(space, rep.stochastic.states.back(), rep.image.clean));
    rep.denoised = rep.distance_final < rep.distance_noisy;
    rep.passed = rep.deterministic_nonincreasing && rep.within_band && rep.below_noisy_energy &&
                 rep.plateau && rep.denoised;
    return rep;
}

MinimizerResult minimize_energy(const FemSpace& space, std::span<const double> g, double eps,
                                double lambda, double tol, Index max_iter)
{
    const Mesh& mesh = space.mesh();
    if (!(eps > 0.0)) {
        throw std::invalid_argument("minimize_energy: eps must be positive");
    }
    const Vector mg = spmv(space.mass(), g);
    Vector rhs = space.restrict_to_free(mg);
    for (double& v : rhs) {
        v *= lambda;
    }
    const double stop = tol * (1.0 + norm2(rhs));
    const CsrMatrix lm = space.free_mass().combine(lambda, space.free_mass(), 0.0);

    auto gradient_norm = [&](const FeFunction& u) {
        Vector r = spmv(lm, space.restrict_to_free(u.values));
        const Vector tv = space.restrict_to_free(tv_operator_load(mesh, u.values, eps));
        for (Index i = 0; i < r.size(); ++i) {
            r[i] += tv[i] - rhs[i];
        }
        return norm2(r);
    };

    MinimizerResult out;
    out.u = FeFunction::zeros(mesh);
    out.residual = gradient_norm(out.u);
    Vector weights(mesh.num_elements());
    const CgOptions cg;
    for (Index it = 1; it <= max_iter && out.residual > stop; ++it) {
        for (Index k = 0; k < mesh.num_elements(); ++k) {
            const Point2 gr = element_gradient(mesh, out.u.values, k);
            weights[k] = 1.0 / std::sqrt(gr.x * gr.x + gr.y * gr.y + eps * eps);
        }
        const CsrMatrix system = lm.combine(1.0, space.weighted_free_stiffness(weights), 1.0);
        const CgResult sol = cg_solve(system, rhs, cg, space.restrict_to_free(out.u.values));
        out.u = space.extend_from_free(sol.x);
        out.iterations = it;
        out.residual = gradient_norm(out.u);
    }
    if (out.residual > stop) {
        throw MinimizerFailure("minimize_energy: lagged-diffusivity iteration did not converge");
    }
    return out;
}

StationaryReport study_stationary_vs_minimizer(const ExperimentConfig& cfg, double rate_threshold,
                                               Index max_steps, double gap_tol)
{
    SchemeParams p = cfg.params;
    p.mu = 0.0;
    p.validate();
    const FemSpace space(build_unit_square_mesh(cfg.n));
    const Mesh& mesh = space.mesh();
    const NoisyImage img = make_noisy_image(mesh, p.nu, image_seed(p.seed), cfg.disc_center,
                                            cfg.disc_radius);
    const auto& g = img.noisy.values;
    const double tau = p.tau();

    StationaryReport rep;
    FeFunction x = FeFunction::zeros(mesh);
    const Vector zero_noise(mesh.num_nodes(), 0.0);
    for (Index i = 1; i <= max_steps; ++i) {
        StepResult step = implicit_step(space, x, zero_noise, p, g);
        const double inc = std::sqrt(mass_distance_sq(space, step.state, x));
        x = std::move(step.state);
        rep.steps = i;
        rep.final_rate = inc / tau;
        if (rep.final_rate < rate_threshold) {
            rep.stationary = true;
            break;
        }
    }
    rep.flow_energy = energy(space, x.values, g, p.eps, p.lambda).total;
    const MinimizerResult min = minimize_energy(space, g, p.eps, p.lambda);
    rep.min_energy = energy(space, min.u.values, g, p.eps, p.lambda).total;
    rep.relative_gap = (rep.flow_energy - rep.min_energy) / std::abs(rep.min_energy);
    rep.inconclusive = !rep.stationary;
    rep.passed = rep.stationary && std::abs(rep.relative_gap) <= gap_tol;
    return rep;
}

}  // namespace stvf
