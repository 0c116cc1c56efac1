#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <hesslab/scenario.hpp>

#include <fstream>
#include <sstream>

using namespace hesslab;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

nlohmann::json tiny_config() {
    nlohmann::json cfg;
    cfg["eps_list"] = {0.2, 0.12, 0.072, 0.0432};
    cfg["scenarios"] = nlohmann::json::array();
    cfg["scenarios"].push_back(nlohmann::json{{"id", "smoke_const"},
                                              {"manifold", {{"kind", "flat_torus"}, {"n", 1}}},
                                              {"grid", 24},
                                              {"recipe", "constant"},
                                              {"params", {{"value", -0.2}}},
                                              {"l1_slope_bound", 0.9}});
    cfg["scenarios"].push_back(nlohmann::json{{"id", "smoke_kink"},
                                              {"manifold", {{"kind", "flat_torus"}, {"n", 1}}},
                                              {"grid", 32},
                                              {"recipe", "kink"},
                                              {"params", {{"amplitude", 0.05}}},
                                              {"declared_gamma", 1.0},
                                              {"declared_seminorm", 0.05 * M_PI},
                                              {"l1_slope_bound", 0.25}});
    return cfg;
}

}  // namespace

TEST_CASE("scenario round trip through json") {
    auto list = default_scenarios();
    CHECK(list.size() >= 8);
    for (const auto& s : list) {
        auto back = Scenario::from_json(s.to_json());
        CHECK(back.id == s.id);
        CHECK(back.recipe == s.recipe);
        CHECK(back.grid == s.grid);
    }
}

TEST_CASE("constant scenario: trivial slopes, everything passes") {
    auto rep = run_rate_suite(tiny_config(), "", 7);
    REQUIRE(rep.scenarios.size() == 2);
    const auto& smoke = rep.scenarios[0];
    CHECK_FALSE(smoke.skipped);
    CHECK(smoke.l1_fit.slope == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(smoke.gap_fit.slope == doctest::Approx(1.0).epsilon(1e-9));
    for (const auto& c : smoke.checks) {
        INFO("check ", c.id, " measured ", c.measured, " bound ", c.bound, " detail ", c.detail);
        if (c.applicable) CHECK(c.pass);
    }
    const auto& kink = rep.scenarios[1];
    for (const auto& c : kink.checks) {
        INFO("check ", c.id, " measured ", c.measured, " bound ", c.bound, " detail ", c.detail);
        if (c.applicable) CHECK(c.pass);
    }
    CHECK(rep.all_pass());
}

TEST_CASE("inadmissible scenario is skipped and flagged") {
    nlohmann::json cfg;
    cfg["eps_list"] = {0.2, 0.12, 0.072, 0.0432};
    cfg["scenarios"] = nlohmann::json::array();
    cfg["scenarios"].push_back(nlohmann::json{{"id", "too_big"},
                                              {"manifold", {{"kind", "flat_torus"}, {"n", 1}}},
                                              {"grid", 24},
                                              {"recipe", "smooth_trig"},
                                              {"params", {{"amplitude", 0.5}}}});
    auto rep = run_rate_suite(cfg, "", 7);
    CHECK(rep.scenarios[0].skipped);
    CHECK(rep.scenarios[0].skip_reason.find("not admissible") != std::string::npos);
    CHECK_FALSE(rep.all_pass());
}

TEST_CASE("reruns with the same seed and config are byte-identical") {
    const std::string d1 = "/tmp/hesslab_suite_run1";
    const std::string d2 = "/tmp/hesslab_suite_run2";
    std::filesystem::remove_all(d1);
    std::filesystem::remove_all(d2);
    auto cfg = tiny_config();
    run_rate_suite(cfg, d1, 42);
    run_rate_suite(cfg, d2, 42);
    for (const std::string stem :
         {std::string("report.json"), std::string("rates_smoke_const.csv"),
          std::string("rates_smoke_kink.csv"), std::string("plot_rates.gp")}) {
        CHECK(slurp(d1 + "/" + stem) == slurp(d2 + "/" + stem));
    }
}

TEST_CASE("reports do not depend on the thread count") {
    const std::string d1 = "/tmp/hesslab_suite_t1";
    const std::string d2 = "/tmp/hesslab_suite_t2";
    std::filesystem::remove_all(d1);
    std::filesystem::remove_all(d2);
    auto cfg = tiny_config();
    setenv("HESSLAB_THREADS", "1", 1);
    run_rate_suite(cfg, d1, 42);
    setenv("HESSLAB_THREADS", "3", 1);
    run_rate_suite(cfg, d2, 42);
    unsetenv("HESSLAB_THREADS");
    for (const std::string stem :
         {std::string("report.json"), std::string("rates_smoke_const.csv"),
          std::string("rates_smoke_kink.csv")}) {
        CHECK(slurp(d1 + "/" + stem) == slurp(d2 + "/" + stem));
    }
}

TEST_CASE("table recipe loads custom samples") {
    auto M = std::make_shared<FlatTorus>(1, std::vector<double>{1.0});
    auto phi = LatticeField::from_function(
        M, 16, [](const ChartPoint& p) { return 0.03 * std::cos(2 * M_PI * p.z(0).real()); });
    phi.save("/tmp/hesslab_table_recipe", nlohmann::json{{"kind", "flat_torus"}, {"n", 1}});
    Scenario sc = Scenario::from_json(nlohmann::json{
        {"id", "from_table"},
        {"manifold", {{"kind", "flat_torus"}, {"n", 1}}},
        {"recipe", "table"},
        {"params", {{"stem", "/tmp/hesslab_table_recipe"}}}});
    auto loaded = build_field(sc, M);
    CHECK(loaded.grid(0).dims == phi.grid(0).dims);
    CHECK(loaded.value(0, 7) == phi.value(0, 7));
}

TEST_CASE("singular density has the advertised L^{p0} norm") {
    const double a = 1.5, tau = 0.02, p0 = 2.0;
    auto M = std::make_shared<FlatTorus>(1, std::vector<double>{1.0});
    auto dens = LatticeField::from_function(
        M, 256, recipes::build_density(nlohmann::json{
                    {"kind", "singular"}, {"a", a}, {"tau", tau}}));
    // numeric L^{p0} norm on the torus vs the closed-form planar integral
    double lp = 0.0;
    for (std::int64_t i = 0; i < dens.grid(0).size(); ++i)
        lp += dens.weight(0, i) * std::pow(dens.value(0, i), p0);
    lp = std::pow(lp, 1.0 / p0);
    const double want = recipes::singular_density_lp(a, tau, p0);
    CHECK(lp == doctest::Approx(want).epsilon(0.05));
}
