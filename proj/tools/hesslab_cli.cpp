// Command-line driver: structural cone checks, geometry batteries,
// sup-convolution runs, the rate suite, level-set stability tables, the
// vanishing-threshold arithmetic, and the exponent algebra.
//
// Exit codes: 0 all checks passed, 1 check failures, 2 usage/config errors.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <hesslab/cone.hpp>
#include <hesslab/exponent.hpp>
#include <hesslab/field.hpp>
#include <hesslab/manifold.hpp>
#include <hesslab/scenario.hpp>
#include <hesslab/stability.hpp>
#include <hesslab/supconv.hpp>

using namespace hesslab;

namespace {

nlohmann::json load_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path);
    nlohmann::json j;
    f >> j;
    return j;
}

void write_json(const std::string& dir, const std::string& name, const nlohmann::json& j) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    std::ofstream f(dir + "/" + name);
    f << j.dump(2) << "\n";
}

std::vector<double> parse_eps_list(const std::string& s) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos < s.size()) {
        std::size_t next = s.find(',', pos);
        if (next == std::string::npos) next = s.size();
        out.push_back(std::stod(s.substr(pos, next - pos)));
        pos = next + 1;
    }
    return out;
}

int cone_check(int n, int m, const std::string& op_name, double c, int samples,
               std::uint64_t seed, const std::string& out) {
    OperatorSpec op = (op_name == "sigma_m")        ? sigma_m_operator(n, m)
                      : (op_name == "quotient")      ? quotient_operator(n, std::max(m + 1, 2), m)
                      : (op_name == "quotient_plus") ? quotient_plus_operator(n, std::max(m + 1, 2), m, 1, c)
                                                     : throw std::runtime_error("unknown operator " + op_name);
    auto rep = check_structural(op, samples, seed);
    std::printf("operator %s on %s, %d samples\n", op.name.c_str(), op.cone.label.c_str(), samples);
    for (const auto& chk : rep.checks)
        std::printf("  [%s] %-18s worst %.3e (threshold %.3e)\n", chk.pass ? "PASS" : "FAIL",
                    chk.id.c_str(), chk.worst, chk.threshold);
    write_json(out, "cone_check.json", rep.to_json());
    return rep.all_pass ? 0 : 1;
}

int manifold_check(const nlohmann::json& config, const std::string& out) {
    auto M = manifold_from_json(config);
    const int n = M->complex_dim();
    nlohmann::json report;
    report["manifold"] = config;
    bool ok = true;

    // exp/log round trips at scattered base points
    Rng rng(11);
    double worst_rt = 0.0;
    for (int rep = 0; rep < 200; ++rep) {
        ChartPoint p{0, Eigen::VectorXcd(n)};
        for (int j = 0; j < n; ++j)
            p.z(j) = Complexd(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6));
        if (M->kind() == "flat_torus")
            for (int j = 0; j < n; ++j) p.z(j) += Complexd(0.5, 0.5);
        Eigen::VectorXcd xi(n);
        for (int j = 0; j < n; ++j) xi(j) = Complexd(rng.uniform(-1, 1), rng.uniform(-1, 1));
        const double len = M->tangent_norm(p, xi);
        if (len > 1e-12) xi *= rng.uniform(0.05, 0.3) / len;
        const Eigen::VectorXcd back = M->log_map(p, M->exp_map(p, xi));
        worst_rt = std::max(worst_rt, (back - xi).norm());
    }
    std::printf("[%s] exp/log round trip residual %.3e (bound 1e-9)\n",
                worst_rt <= 1e-9 ? "PASS" : "FAIL", worst_rt);
    ok = ok && worst_rt <= 1e-9;
    report["roundtrip_residual"] = worst_rt;

    // curvature sign over random tangent pairs
    {
        ChartPoint p{0, Eigen::VectorXcd::Zero(n)};
        const auto c = M->curvature_at(p);
        double worst = 0.0;
        for (int rep = 0; rep < 10000; ++rep) {
            Eigen::VectorXcd eta(n), xi(n);
            for (int j = 0; j < n; ++j) {
                eta(j) = Complexd(rng.normal(), rng.normal());
                xi(j) = Complexd(rng.normal(), rng.normal());
            }
            worst = std::min(worst, c.bisectional(eta, xi));
        }
        std::printf("[%s] bisectional curvature nonnegative (min %.3e)\n",
                    worst >= -1e-12 ? "PASS" : "FAIL", worst);
        ok = ok && worst >= -1e-12;
        report["min_bisectional"] = worst;
    }

    // exponential-map Taylor model
    if (M->kind() != "flat_torus") {
        ChartPoint x0{0, Eigen::VectorXcd::Zero(n)};
        std::vector<double> sizes, residuals;
        for (int j = 0; j < 6; ++j) {
            const double s = 0.2 * std::pow(0.5, j);
            Eigen::VectorXcd xi = Eigen::VectorXcd::Zero(n);
            xi(0) = s * Complexd(0.6, 0.8);
            sizes.push_back(s);
            residuals.push_back(exp_taylor_residual(*M, x0, (0.5 * xi).eval(), xi));
        }
        const auto fit = fit_loglog(sizes, residuals);
        std::printf("[%s] exp Taylor remainder slope %.3f (bound %.3f)\n",
                    fit.slope >= 3.7 ? "PASS" : "FAIL", fit.slope, 3.7);
        ok = ok && fit.slope >= 3.7;
        report["taylor_slope"] = fit.slope;
    } else {
        ChartPoint x0{0, Eigen::VectorXcd::Zero(n)};
        Eigen::VectorXcd xi = Eigen::VectorXcd::Zero(n);
        xi(0) = Complexd(0.05, 0.02);
        const double res = exp_taylor_residual(*M, x0, (0.5 * xi).eval(), xi);
        std::printf("[%s] exp Taylor remainder %.3e (flat model, exact)\n",
                    res <= 1e-12 ? "PASS" : "FAIL", res);
        ok = ok && res <= 1e-12;
        report["taylor_residual"] = res;
    }

    // sphere-area deviation against the euclidean leading term
    {
        ChartPoint x{0, Eigen::VectorXcd::Zero(n)};
        if (M->kind() == "flat_torus")
            for (int j = 0; j < n; ++j) x.z(j) = Complexd(0.5, 0.5);
        const double alpha = unit_ball_volume(2 * n);
        std::vector<double> rs{0.02, 0.04, 0.08, 0.12, 0.16, 0.2}, devs;
        double cfit = 0.0;
        const int angular = (n == 1) ? 256 : 48;
        for (double r : rs) {
            const double lead = 2 * n * alpha * std::pow(r, 2 * n - 1);
            const double dev = std::abs(geodesic_sphere_area(*M, x, r, angular) - lead);
            devs.push_back(dev);
            cfit = std::max(cfit, dev / std::pow(r, 2 * n));
        }
        report["sphere_dev_constant"] = cfit;
        if (M->flat()) {
            const bool pass = cfit <= 1e-9;
            std::printf("[%s] sphere area exact on the flat model (C = %.3e)\n",
                        pass ? "PASS" : "FAIL", cfit);
            ok = ok && pass;
        } else {
            const auto fit = fit_loglog(rs, devs);
            const bool pass = fit.slope >= 2.0 * n - 0.3;
            std::printf("[%s] sphere area deviation order %.3f (bound %.3f), C = %.3e\n",
                        pass ? "PASS" : "FAIL", fit.slope, 2.0 * n - 0.3, cfit);
            ok = ok && pass;
            report["sphere_dev_slope"] = fit.slope;
        }
    }

    write_json(out, "manifold_check.json", report);
    return ok ? 0 : 1;
}

int supconv_run(const nlohmann::json& scenario_json, double eps, const std::string& out) {
    Scenario sc = Scenario::from_json(scenario_json);
    auto M = manifold_from_json(sc.manifold);
    LatticeField phi = build_field(sc, M);
    SupConvResult res = sup_convolve(phi, eps);

    std::printf("scenario %s, eps = %g\n", sc.id.c_str(), eps);
    std::printf("  search radius %.6f, max |argmax| %.6f\n", res.search_radius, res.max_argmax_norm);
    const auto ar = argmax_radius_check(res, phi);
    std::printf("  [%s] argmax radius bound (violations %lld)\n", ar.pass ? "PASS" : "FAIL",
                static_cast<long long>(ar.linf_violations));
    const double sc_bound = semiconvexity_check(res);
    std::printf("  semiconvexity lower bound %.4f (penalty scale -2/eps = %.4f)\n", sc_bound,
                -2.0 / eps);

    if (!out.empty()) {
        std::filesystem::create_directories(out);
        res.phi_eps.save(out + "/phi_eps", sc.manifold);
        nlohmann::json meta{{"scenario", sc.to_json()},
                            {"eps", eps},
                            {"search_radius", res.search_radius},
                            {"max_argmax_norm", res.max_argmax_norm},
                            {"semiconvexity_bound", sc_bound}};
        write_json(out, "supconv_meta.json", meta);
    }
    return ar.pass ? 0 : 1;
}

int stability_run(const nlohmann::json& scenario_json, double eps, double delta,
                  const std::string& out) {
    Scenario sc = Scenario::from_json(scenario_json);
    auto M = manifold_from_json(sc.manifold);
    const int n = M->complex_dim();
    LatticeField phi = build_field(sc, M);
    LatticeField dens = build_density(sc, M);
    SupConvResult res = sup_convolve(phi, eps);
    const LatticeField& v = res.phi_eps;

    const double top = (1.0 - delta) * v.sup_norm() + phi.sup_norm() + 1e-9;
    auto sgrid = default_s_grid(std::max(top, 1e-6), 64);
    auto prof = level_profile(v, phi, dens, delta, sgrid);

    bool bound_ok = true;
    for (const auto& b : prof.volume_bounds)
        if (b.applicable && !b.holds) bound_ok = false;
    std::printf("[%s] level-set volume bound vol <= (2/s)||(v-phi)^+||_1\n",
                bound_ok ? "PASS" : "FAIL");

    const double q0 = sc.p0 / (sc.p0 - 1.0);
    const double mu = 0.9 / (n * q0);
    nlohmann::json bounds{{"delta", delta},        {"eps", eps},
                          {"excess_l1", prof.excess_l1}, {"mu", mu},
                          {"volume_bound_holds", bound_ok}};
    int positive = 0;
    for (double vv : prof.vol_omega)
        if (vv > 0) ++positive;
    bool dg_ok = true;
    if (positive >= 3) {
        const double B0 = 1.05 * volume_decay_fit(prof, mu);
        auto run = degiorgi_simulate(prof.s_grid, prof.vol_omega, B0, mu, prof.s_grid.front());
        dg_ok = run.certified && run.vanish_point <= run.threshold + 1e-12;
        std::printf("[%s] level-set vanishing: observed %.6f <= threshold %.6f (B0 = %.4f)\n",
                    dg_ok ? "PASS" : "FAIL", run.vanish_point, run.threshold, B0);
        bounds["B0"] = B0;
        bounds["vanish_point"] = run.vanish_point;
        bounds["threshold"] = run.threshold;
    }
    const double sup_gap = v.sup_diff(phi);
    const double c1 = stability_gap_verify(v, phi, mu, {0.25 * sup_gap, 0.5 * sup_gap, sup_gap});
    std::printf("sup(v - phi) = %.6f, fitted C1 = %.4f\n", sup_gap, c1);
    bounds["sup_gap"] = sup_gap;
    bounds["fitted_C1"] = c1;

    if (!out.empty()) {
        std::filesystem::create_directories(out);
        std::ofstream csv(out + "/levelset.csv");
        csv << "s,vol,A\n";
        for (std::size_t k = 0; k < prof.s_grid.size(); ++k)
            csv << format_double(prof.s_grid[k]) << "," << format_double(prof.vol_omega[k]) << ","
                << format_double(prof.a_values[k]) << "\n";
        write_json(out, "stability_bounds.json", bounds);
    }
    return (bound_ok && dg_ok) ? 0 : 1;
}

int exponent_run(double q0n, double p, int n, int m, const std::string& out) {
    auto seq = iterate_exponents(q0n);
    std::printf("q0 n = %g\n", q0n);
    std::printf("mu0 = %.6f\n", seq.mu.front());
    for (std::size_t k = 1; k < std::min<std::size_t>(seq.mu.size(), 6); ++k)
        std::printf("mu%zu = %.6f\n", k, seq.mu[k]);
    std::printf("limit = %.6f (converged in %d iterations)\n", seq.fixed_point, seq.iterations);

    nlohmann::json j{{"q0n", q0n}, {"mu", seq.mu}, {"fixed_point", seq.fixed_point}};
    if (p > 0) {
        const double g = sigma_m_exponent(p, n, m);
        std::printf("sigma_m exponent (p = %g, n = %d, m = %d): %.6f\n", p, n, m, g);
        j["sigma_m_exponent"] = g;
    }
    write_json(out, "exponent.json", j);
    if (!out.empty()) {
        std::ofstream csv(out + "/exponent.csv");
        csv << "k,mu\n";
        for (std::size_t k = 0; k < seq.mu.size(); ++k)
            csv << k << "," << format_double(seq.mu[k]) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hesslab: a laboratory for sup-convolution regularization of "
                 "cone-admissible functions on model Kahler manifolds"};
    app.require_subcommand(1);
    app.fallthrough();  // --out/--config/--seed usable after the verb
    std::string out_dir, config_path, eps_list_str;
    std::uint64_t seed = 1;
    app.add_option("--out", out_dir, "output directory for machine artifacts");
    app.add_option("--config", config_path, "JSON config path");
    app.add_option("--seed", seed, "deterministic seed");

    auto* cone_cmd = app.add_subcommand("cone-check", "structural conditions of a symmetric operator");
    int cc_n = 3, cc_m = 2, cc_samples = 500;
    double cc_c = 0.5;
    std::string cc_op = "sigma_m";
    cone_cmd->add_option("--n", cc_n, "dimension");
    cone_cmd->add_option("--m", cc_m, "order");
    cone_cmd->add_option("--operator", cc_op, "sigma_m | quotient | quotient_plus");
    cone_cmd->add_option("--c", cc_c, "mixing constant for quotient_plus");
    cone_cmd->add_option("--samples", cc_samples, "Monte Carlo sample count");

    auto* mani_cmd = app.add_subcommand("manifold-check", "geometry battery on a model manifold");
    std::string mani_kind = "fubini_study_p1";
    int mani_n = 1;
    mani_cmd->add_option("--kind", mani_kind, "flat_torus | fubini_study_p1 | product_p1");
    mani_cmd->add_option("--n", mani_n, "complex dimension / factor count");

    auto* sup_cmd = app.add_subcommand("supconv", "run one sup-convolution");
    double sup_eps = 0.1;
    int sup_grid = 64;
    std::string sup_recipe = "kink";
    double sup_amp = 0.05;
    sup_cmd->add_option("--eps", sup_eps, "regularization parameter");
    sup_cmd->add_option("--grid", sup_grid, "samples per axis");
    sup_cmd->add_option("--recipe", sup_recipe, "field recipe");
    sup_cmd->add_option("--amplitude", sup_amp, "field amplitude");

    auto* rate_cmd = app.add_subcommand("rate-suite", "full scenario matrix with rate fits");
    int rate_grid = 0;
    rate_cmd->add_option("--grid", rate_grid, "override grid for all scenarios");
    rate_cmd->add_option("--eps-list", eps_list_str, "comma-separated eps values");

    auto* stab_cmd = app.add_subcommand("stability", "level-set profiles and stability bounds");
    double stab_eps = 0.072, stab_delta = 0.1;
    int stab_grid = 64;
    std::string stab_recipe = "kink";
    stab_cmd->add_option("--eps", stab_eps);
    stab_cmd->add_option("--delta", stab_delta);
    stab_cmd->add_option("--grid", stab_grid);
    stab_cmd->add_option("--recipe", stab_recipe);

    auto* dg_cmd = app.add_subcommand("degiorgi", "vanishing threshold arithmetic");
    double dg_b0 = 1.0, dg_mu = 1.0, dg_s0 = 0.0, dg_phi0 = 0.0;
    dg_cmd->add_option("--b0", dg_b0);
    dg_cmd->add_option("--mu", dg_mu);
    dg_cmd->add_option("--s0", dg_s0);
    dg_cmd->add_option("--phi0", dg_phi0);

    auto* exp_cmd = app.add_subcommand("exponent", "exponent algebra tables");
    double exp_q0n = 4.0, exp_p = -1.0;
    int exp_n = 2, exp_m = 1;
    exp_cmd->add_option("--q0n", exp_q0n, "q0 * n");
    exp_cmd->add_option("--p", exp_p, "density integrability for the sigma_m exponent");
    exp_cmd->add_option("--n", exp_n);
    exp_cmd->add_option("--m", exp_m);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (cone_cmd->parsed())
            return cone_check(cc_n, cc_m, cc_op, cc_c, cc_samples, seed, out_dir);
        if (mani_cmd->parsed()) {
            nlohmann::json cfg = config_path.empty()
                                     ? nlohmann::json{{"kind", mani_kind},
                                                      {"n", mani_n},
                                                      {"factors", mani_n}}
                                     : load_json(config_path);
            return manifold_check(cfg, out_dir);
        }
        if (sup_cmd->parsed()) {
            nlohmann::json sc = config_path.empty()
                                    ? nlohmann::json{{"id", "cli_" + sup_recipe},
                                                     {"manifold", {{"kind", "flat_torus"}, {"n", 1}}},
                                                     {"grid", sup_grid},
                                                     {"recipe", sup_recipe},
                                                     {"params", {{"amplitude", sup_amp}}}}
                                    : load_json(config_path);
            return supconv_run(sc, sup_eps, out_dir);
        }
        if (rate_cmd->parsed()) {
            nlohmann::json cfg = config_path.empty() ? nlohmann::json::object() : load_json(config_path);
            if (!eps_list_str.empty()) cfg["eps_list"] = parse_eps_list(eps_list_str);
            if (rate_grid > 0) cfg["grid_override"] = rate_grid;
            auto rep = run_rate_suite(cfg, out_dir, seed);
            for (const auto& s : rep.scenarios) {
                if (s.skipped) {
                    std::printf("[SKIP] %-18s %s\n", s.scenario_id.c_str(), s.skip_reason.c_str());
                    continue;
                }
                for (const auto& c : s.checks)
                    if (c.applicable)
                        std::printf("[%s] %-18s %-24s measured %.4g bound %.4g\n",
                                    c.pass ? "PASS" : "FAIL", s.scenario_id.c_str(), c.id.c_str(),
                                    c.measured, c.bound);
            }
            std::printf("suite %s in %.1f s\n", rep.all_pass() ? "PASSED" : "FAILED",
                        rep.wall_seconds);
            return rep.all_pass() ? 0 : 1;
        }
        if (stab_cmd->parsed()) {
            nlohmann::json sc = config_path.empty()
                                    ? nlohmann::json{{"id", "cli_stability"},
                                                     {"manifold", {{"kind", "flat_torus"}, {"n", 1}}},
                                                     {"grid", stab_grid},
                                                     {"recipe", stab_recipe},
                                                     {"params", {{"amplitude", 0.05}}},
                                                     {"density", {{"kind", "singular"}, {"a", 1.5}, {"tau", 0.02}}}}
                                    : load_json(config_path);
            return stability_run(sc, stab_eps, stab_delta, out_dir);
        }
        if (dg_cmd->parsed()) {
            const double thr = degiorgi_threshold(dg_b0, dg_mu, dg_s0, dg_phi0);
            std::printf("threshold = %g\n", thr);
            return 0;
        }
        if (exp_cmd->parsed()) return exponent_run(exp_q0n, exp_p, exp_n, exp_m, out_dir);
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 2;
}
