#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <hesslab/stability.hpp>

using namespace hesslab;

namespace {

ManifoldPtr torus1() { return std::make_shared<FlatTorus>(1, std::vector<double>{1.0}); }

LatticeField constf(const ManifoldPtr& M, int N, double c) {
    return LatticeField::from_function(M, N, [c](const ChartPoint&) { return c; });
}

}  // namespace

TEST_CASE("exponent inputs validation") {
    auto e = ExponentInputs::make(2.0, 2, 0.5, 0.25);
    CHECK(e.q0 == doctest::Approx(2.0));
    CHECK(e.mu == doctest::Approx(0.9 / 4.0));
    CHECK_THROWS_AS(ExponentInputs::make(1.0, 2, 0.5, 0.25), std::domain_error);
    e.mu = 0.3;  // >= 1/(n q0) = 0.25
    CHECK_THROWS_AS(e.validate(), std::domain_error);
}

TEST_CASE("level profile of a constant excess") {
    auto M = torus1();
    const double c = 0.37;
    auto phi = constf(M, 16, 0.0);
    auto v = constf(M, 16, c);
    auto dens = constf(M, 16, 1.0);
    std::vector<double> s{0.05, 0.1, 0.2, 0.3, 0.36, 0.4, 0.5};
    auto prof = level_profile(v, phi, dens, 0.0, s);
    for (std::size_t k = 0; k < s.size(); ++k) {
        const double wantA = std::max(c - s[k], 0.0);  // unit-volume torus
        CHECK(prof.a_values[k] == doctest::Approx(wantA).epsilon(1e-12));
        CHECK(prof.vol_omega[k] == doctest::Approx(s[k] < c ? 1.0 : 0.0));
    }
    CHECK(prof.excess_l1 == doctest::Approx(c).epsilon(1e-12));
    // volume bound (3.6N analogue) holds wherever applicable
    for (const auto& b : prof.volume_bounds)
        CHECK(b.holds);
}

TEST_CASE("profiles are monotone in s and in delta") {
    auto M = torus1();
    auto phi = LatticeField::from_function(
        M, 24, [](const ChartPoint& p) { return 0.1 * std::cos(2 * M_PI * p.z(0).real()) - 0.2; });
    auto v = LatticeField::from_function(M, 24, [](const ChartPoint& p) {
        return 0.08 * std::sin(2 * M_PI * p.z(0).imag()) - 0.1;  // v <= 0
    });
    auto dens = constf(M, 24, 1.0);
    auto s = default_s_grid(0.5, 24);
    auto p1 = level_profile(v, phi, dens, 0.1, s);
    auto p2 = level_profile(v, phi, dens, 0.3, s);
    for (std::size_t k = 1; k < s.size(); ++k) {
        CHECK(p1.a_values[k] <= p1.a_values[k - 1] + 1e-15);
        CHECK(p1.vol_omega[k] <= p1.vol_omega[k - 1] + 1e-15);
    }
    // for v <= 0, shrinking (1-delta) raises (1-delta)v, so A grows with delta
    for (std::size_t k = 0; k < s.size(); ++k) CHECK(p2.a_values[k] >= p1.a_values[k] - 1e-15);
}

TEST_CASE("degiorgi threshold arithmetic") {
    CHECK(degiorgi_threshold(1.0, 0.7, 0.3, 0.0) == doctest::Approx(0.3));
    CHECK(degiorgi_threshold(1.0, 1.0, 0.0, 0.25) == doctest::Approx(1.0));
    const double t1 = degiorgi_threshold(1.0, 0.5, 0.0, 0.2);
    const double t2 = degiorgi_threshold(2.0, 0.5, 0.0, 0.2);
    CHECK(t2 == doctest::Approx(2.0 * t1));  // linear in B0
    CHECK_THROWS_AS(degiorgi_threshold(1.0, 0.0, 0.0, 0.1), std::domain_error);
}

TEST_CASE("degiorgi simulation on (1-s)^3") {
    std::vector<double> s, p;
    for (int i = 0; i <= 400; ++i) {
        const double x = 1.4 * i / 400.0;
        s.push_back(x);
        p.push_back(std::pow(std::max(1.0 - x, 0.0), 3.0));
    }
    const double mu = 1.0 / 4.0;  // < 1/kappa = 1/3
    // fit the smallest admissible B0 on the table, then add headroom
    double b0 = 0.0;
    for (std::size_t i = 0; i < s.size(); i += 3)
        for (std::size_t j = i + 1; j < s.size(); j += 3)
            if (p[i] > 0) b0 = std::max(b0, (s[j] - s[i]) * p[j] / std::pow(p[i], 1.0 + mu));
    b0 *= 1.05;

    auto run = degiorgi_simulate(s, p, b0, mu, 0.0);
    CHECK(run.certified);
    CHECK(run.halving_ok);
    CHECK(run.vanish_point == doctest::Approx(1.0).epsilon(5e-3));  // table resolution
    CHECK(run.vanish_point <= run.threshold);

    // phi identically zero vanishes at s0
    std::vector<double> z(s.size(), 0.0);
    auto zero = degiorgi_simulate(s, z, 1.0, 0.5, 0.2);
    CHECK(zero.vanish_point == doctest::Approx(s.front()));
    CHECK(zero.threshold == doctest::Approx(0.2));
}

TEST_CASE("degiorgi certification rejects a bad table") {
    // phi(s) = 1/(1+s) decays too slowly for any small B0
    std::vector<double> s, p;
    for (int i = 0; i <= 100; ++i) {
        s.push_back(2.0 * i / 100.0);
        p.push_back(1.0 / (1.0 + s.back()));
    }
    auto run = degiorgi_simulate(s, p, 0.05, 0.5, 0.0);
    CHECK_FALSE(run.certified);
    CHECK(run.witness.find("hypothesis fails") != std::string::npos);
}

TEST_CASE("volume decay fit on the constant-excess profile") {
    auto M = torus1();
    const double c = 0.4;
    auto phi = constf(M, 16, 0.0);
    auto v = constf(M, 16, c);
    auto dens = constf(M, 16, 1.0);
    std::vector<double> s;
    for (int i = 0; i < 40; ++i) s.push_back(0.6 * (i + 0.5) / 40.0);
    auto prof = level_profile(v, phi, dens, 0.0, s);
    const double b0 = volume_decay_fit(prof, 0.5);
    // vol = 1 below c, 0 above: the max pair ratio approaches c
    CHECK(b0 == doctest::Approx(c).epsilon(0.05));
    // mu = 0 degenerates to r vol(s+r) <= B0 vol(s)
    CHECK(volume_decay_fit(prof, 0.0) == doctest::Approx(c).epsilon(0.05));

    auto empty = level_profile(phi, v, dens, 0.0, s);  // excess negative everywhere
    CHECK_THROWS_AS(volume_decay_fit(empty, 0.5), std::domain_error);
}

TEST_CASE("stability gap bound arithmetic and shape") {
    CHECK(stability_gap_bound(0.3, 0.5, 2.0, 0.0) == doctest::Approx(0.3));
    const double b1 = stability_gap_bound(0.3, 0.5, 2.0, 1e-3);
    const double b2 = stability_gap_bound(0.3, 0.5, 2.0, 2e-3);
    CHECK(b2 - 0.3 == doctest::Approx(std::pow(2.0, 0.5) * (b1 - 0.3)).epsilon(1e-12));
    CHECK_THROWS_AS(stability_gap_bound(0.0, 0.5, 1.0, 1.0), std::domain_error);

    // monotone decreasing below s0* = (mu C1 L^mu)^{1/(1+mu)}, increasing above
    const double mu = 0.4, C1 = 1.5, L = 0.01;
    const double sstar = std::pow(mu * C1 * std::pow(L, mu), 1.0 / (1.0 + mu));
    double prev = stability_gap_bound(sstar / 32, mu, C1, L);
    for (double f = 1.0 / 16; f < 0.99; f *= 2) {
        const double cur = stability_gap_bound(sstar * f, mu, C1, L);
        CHECK(cur < prev);
        prev = cur;
    }
    prev = stability_gap_bound(sstar, mu, C1, L);
    for (double f = 2; f < 40; f *= 2) {
        const double cur = stability_gap_bound(sstar * f, mu, C1, L);
        CHECK(cur > prev);
        prev = cur;
    }
}

TEST_CASE("s_star bound branches") {
    // l1 = 0: the delta branch binds
    auto b = s_star_bound(0.1, 1.0, 1.0, 2.0, 2, 2.0, 0.0);
    CHECK(b.binding_branch == "delta");
    CHECK(b.value == doctest::Approx(0.2));
    // frozen arithmetic: q0 n = 4, beta = 2 -> exponent -8
    auto b2 = s_star_bound(0.1, 1.0, 1.0, 2.0, 2, 2.0, 1e-6);
    CHECK(b2.value == doctest::Approx(100.0).epsilon(1e-9));
    CHECK(b2.binding_branch == "l1");
    // delta -> 0 with l1 fixed: the singular branch dominates
    auto b3 = s_star_bound(0.01, 1.0, 1.0, 2.0, 2, 2.0, 1e-6);
    CHECK(b3.binding_branch == "l1");
    CHECK(b3.value > b2.value);
    CHECK_THROWS_AS(s_star_bound(0.1, 1.0, 1.0, 2.0, 2, 1.0, 0.0), std::domain_error);
}

TEST_CASE("stability gap verifier is grid-stable") {
    auto M = torus1();
    auto phi = LatticeField::from_function(
        M, 32, [](const ChartPoint& p) { return 0.03 * std::cos(2 * M_PI * p.z(0).real()); });
    auto res = sup_convolve(phi, 0.05);
    std::vector<double> s0s{0.01, 0.02, 0.05, 0.1};
    const double c1_coarse = stability_gap_verify(res.phi_eps, phi, 0.2, s0s);

    auto phi2 = LatticeField::from_function(
        M, 64, [](const ChartPoint& p) { return 0.03 * std::cos(2 * M_PI * p.z(0).real()); });
    auto res2 = sup_convolve(phi2, 0.05);
    const double c1_fine = stability_gap_verify(res2.phi_eps, phi2, 0.2, s0s);
    CHECK(std::abs(c1_fine - c1_coarse) <= 0.2 * std::max(c1_coarse, c1_fine));
}

TEST_CASE("sup gap rate study") {
    auto M = torus1();
    auto c = constf(M, 24, -0.2);
    std::vector<double> eps{0.2, 0.12, 0.072, 0.0432};
    auto e = ExponentInputs::make(2.0, 1, 0.5, 0.25);
    auto st = sup_gap_rate_study(c, eps, ConeSpec::gamma_plus(1), e);
    for (std::size_t k = 0; k < eps.size(); ++k) CHECK(st.gaps[k] == doctest::Approx(eps[k]));
    CHECK(st.fit.slope == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(st.theoretical_gamma == doctest::Approx(std::min(0.25 - 2 * 0.5, 0.25 / 3.0)));

    auto sm = LatticeField::from_function(
        M, 32, [](const ChartPoint& p) { return 0.02 * std::sin(2 * M_PI * p.z(0).real()); });
    auto e2 = ExponentInputs::make(2.0, 1, 0.05, 0.25);
    auto st2 = sup_gap_rate_study(sm, eps, ConeSpec::gamma_plus(1), e2);
    CHECK(st2.fit.slope >= st2.theoretical_gamma - 0.05);
    CHECK(st2.fit.slope > 0.8);  // smooth fields give the full Theta(eps) gap
}

TEST_CASE("exponential moment report") {
    auto M = torus1();
    auto phi = constf(M, 16, 0.0);
    auto dens = constf(M, 16, 1.0);
    auto v = LatticeField::from_function(
        M, 16, [](const ChartPoint& p) { return 0.3 + 0.1 * std::sin(2 * M_PI * p.z(0).real()); });
    std::vector<double> betas{0.1, 0.5, 1.0, 2.0};
    auto rep = exp_moment_report(v, phi, dens, 0.05, 0.1, betas, 10.0);
    CHECK(rep.A > 0.0);
    // lhs is monotone in beta
    for (std::size_t k = 1; k < rep.rows.size(); ++k) CHECK(rep.rows[k].lhs >= rep.rows[k - 1].lhs);
    CHECK(rep.largest_passing_beta > 0.0);

    // homogeneity: scaling the excess by t scales A by t and the exponent
    // argument by t, so lhs(beta; t v) = lhs(t beta; v) when phi = 0, s = 0
    auto v2 = LatticeField::from_function(M, 16, [&](const ChartPoint& p) {
        return 2.0 * (0.3 + 0.1 * std::sin(2 * M_PI * p.z(0).real()));
    });
    auto repA = exp_moment_report(v, phi, dens, 0.0, 0.0, {1.0}, 10.0);
    auto repB = exp_moment_report(v2, phi, dens, 0.0, 0.0, {0.5}, 10.0);
    CHECK(repB.A == doctest::Approx(2.0 * repA.A).epsilon(1e-12));
    CHECK(repB.rows[0].lhs == doctest::Approx(repA.rows[0].lhs).epsilon(1e-10));

    // s above the excess: A = 0, undefined
    CHECK_THROWS_AS(exp_moment_report(v, phi, dens, 0.0, 1.0, betas, 10.0), std::domain_error);
}
