#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "systems.hpp"

#include <map>

using namespace fdecay;
using namespace fixtures;

namespace {

double sum_masses(const Measure& mu, const IFSSystem& sys, int n) {
    double s = 0.0;
    for_each_word(sys, n, [&](const Word& w) { s += mu.cylinder_mass(w).mid(); });
    return s;
}

// Ternary digits of a Cantor point never hit 1 (up to rounding at depth ~30).
bool in_cantor(double x, int depth) {
    for (int i = 0; i < depth; ++i) {
        x *= 3.0;
        int d = static_cast<int>(std::floor(x));
        if (d == 1) {
            if (x - 1.0 > 1e-6 && 2.0 - x > 1e-6) return false;
        }
        x -= d;
        if (x < 0) x = 0;
    }
    return true;
}

}  // namespace

TEST_CASE("probability vectors") {
    CHECK_NOTHROW(ProbabilityVector({0.25, 0.75}));
    CHECK_THROWS_AS(ProbabilityVector({0.0, 1.0}), InvalidArgument);
    CHECK_THROWS_AS(ProbabilityVector({0.3, 0.6}), InvalidArgument);
}

TEST_CASE("pressure estimates against closed forms") {
    auto c = cantor();
    for (int n : {1, 3, 7}) {
        CHECK(std::abs(pressure_estimate(*c, GibbsPotential::per_symbol({std::log(0.5), std::log(0.5)}), n)) <= 1e-14);
        CHECK(std::abs(pressure_estimate(*c, GibbsPotential::bernoulli(ProbabilityVector({0.2, 0.8})), n)) <= 1e-14);
    }
    // homogeneous ratio 1/3, two maps: log 2 + s log(1/3)
    for (double s : {0.3, 0.6309297535714574, 1.0}) {
        double expect = std::log(2.0) + s * std::log(1.0 / 3);
        CHECK(pressure_estimate(*c, GibbsPotential::geometric(s), 6) == doctest::Approx(expect).epsilon(1e-12));
    }
    CHECK(std::abs(pressure_estimate(*c, GibbsPotential::geometric(std::log(2.0) / std::log(3.0)), 5)) <= 1e-12);
    CHECK_THROWS_AS(pressure_estimate(*c, GibbsPotential::geometric(1.0), 0), InvalidArgument);
}

TEST_CASE("normalisation of locally constant potentials") {
    auto c = cantor();
    SUBCASE("Bernoulli stays put") {
        auto n = normalize_potential(*c, GibbsPotential::bernoulli(ProbabilityVector({0.3, 0.7})));
        CHECK(n.table()(0, 0) == doctest::Approx(std::log(0.3)).epsilon(1e-14));
        CHECK(n.table()(1, 0) == doctest::Approx(std::log(0.7)).epsilon(1e-14));
    }
    SUBCASE("weights (2, 3) become (2/5, 3/5)") {
        auto n = normalize_potential(*c, GibbsPotential::per_symbol({std::log(2.0), std::log(3.0)}));
        CHECK(std::exp(n.table()(0, 0)) == doctest::Approx(0.4).epsilon(1e-14));
        CHECK(std::exp(n.table()(1, 0)) == doctest::Approx(0.6).epsilon(1e-14));
        CHECK(n.log_rho == doctest::Approx(std::log(5.0)));
        for (int len : {1, 2, 5, 9}) CHECK(std::abs(pressure_estimate(*c, n, len)) <= 1e-10);
    }
    SUBCASE("golden mean shift with unit weights") {
        auto g = golden_mean();
        auto n = normalize_potential(*g, GibbsPotential::per_symbol({0.0, 0.0}));
        const double phi = (1 + std::sqrt(5.0)) / 2;
        CHECK(std::exp(n.log_rho) == doctest::Approx(phi).epsilon(1e-12));
        // Oracle: h solves A^T h = phi h by hand, h = (phi, 1).
        const double h[2] = {phi, 1.0};
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                if (g->subshift().allowed(a, b))
                    CHECK(std::exp(n.table()(a, b)) == doctest::Approx(h[a] / (phi * h[b])).epsilon(1e-12));
        CHECK(n.residual <= 1e-12);
        // pressure of the normalised pair potential decays like 1/n
        CHECK(std::abs(pressure_estimate(*g, n, 40)) <= 0.05);
        CHECK(std::abs(pressure_estimate(*g, n, 400)) <= 0.005);
    }
}

TEST_CASE("normalisation of a geometric potential on the non-linear example") {
    auto u = uni_example();
    auto psi = GibbsPotential::geometric(0.6);
    auto n = normalize_potential(*u, psi, 6);
    CHECK(n.residual <= 0.05);
    CHECK(std::abs(pressure_estimate(*u, n, 6)) <= 0.05);
}

TEST_CASE("G2 gradient accessor agrees with finite differences") {
    auto u = uni_example();
    auto psi = GibbsPotential::user([](const Vec& y) { return std::sin(3 * y[0]) - 1.5; },
                                    [](const Vec& y) { return Vec::Constant(1, 3 * std::cos(3 * y[0])); });
    CHECK(psi.gradient_check(*u) <= 1e-5);
    CHECK(GibbsPotential::geometric(1.2).gradient_check(*u) <= 1e-5);
}

TEST_CASE("cylinder masses") {
    auto c = cantor();
    auto mu = MarkovMeasure::bernoulli(c, ProbabilityVector::uniform(2));
    Interval m = mu->cylinder_mass(c->parse_word("aba"));
    CHECK(m.lo == 0.125);
    CHECK(m.hi == 0.125);
    for (int n = 1; n <= 8; ++n) CHECK(std::abs(sum_masses(*mu, *c, n) - 1.0) <= 1e-10);

    auto g = golden_mean();
    auto mg = MarkovMeasure::gibbs(g, GibbsPotential::per_symbol({0.0, 0.0}));
    for (int n = 1; n <= 8; ++n) CHECK(std::abs(sum_masses(*mg, *g, n) - 1.0) <= 1e-10);
    CHECK_THROWS_AS(mg->cylinder_mass(g->word({1, 1})), InadmissibleWord);
    // Parry measure: mass of [a] is phi^2/(1+phi^2)
    const double phi = (1 + std::sqrt(5.0)) / 2;
    CHECK(mg->cylinder_mass(g->word({0})).mid() == doctest::Approx(phi * phi / (1 + phi * phi)).epsilon(1e-12));

    auto u = uni_example();
    auto mu_g = MarkovMeasure::gibbs(u, GibbsPotential::geometric(0.6), 4);
    CHECK(mu_g->gibbs_inflation() > 1.0);
    for (int n = 1; n <= 6; ++n) {
        double s = 0.0, lo = 0.0, hi = 0.0;
        for_each_word(*u, n, [&](const Word& w) {
            s += mu_g->chain_mass(w);
            lo += mu_g->cylinder_mass(w).lo;
            hi += mu_g->cylinder_mass(w).hi;
        });
        CHECK(std::abs(s - 1.0) <= 1e-10);
        CHECK(lo <= 1.0);
        CHECK(hi >= 1.0);
    }
    // brackets are consistent under refinement
    for_each_word(*u, 3, [&](const Word& w) {
        Interval p = mu_g->cylinder_mass(w);
        double lo = 0.0, hi = 0.0;
        for (int a = 0; a < 3; ++a) {
            Interval ch = mu_g->cylinder_mass(w.append(a));
            lo += ch.lo;
            hi += ch.hi;
        }
        CHECK(lo <= p.hi);
        CHECK(hi >= p.lo);
        CHECK(p.lo > 0.0);
    });
}

TEST_CASE("Gibbs and quasi-Bernoulli brackets are finite") {
    auto g = golden_mean();
    auto mg = MarkovMeasure::gibbs(g, GibbsPotential::per_symbol({0.1, -0.4}));
    auto br = gibbs_brackets(*mg, 10, 200, 1);
    CHECK(br.gibbs_c >= 1.0);
    CHECK(br.gibbs_c < 10.0);
    CHECK(br.quasi_bernoulli_c < 10.0);
    auto c = cantor();
    auto mb = MarkovMeasure::bernoulli(c, ProbabilityVector({0.3, 0.7}));
    auto bb = gibbs_brackets(*mb, 10, 200, 1);
    CHECK(bb.gibbs_c == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(bb.quasi_bernoulli_c == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("sampling") {
    auto c = cantor();
    auto mu = MarkovMeasure::bernoulli(c, ProbabilityVector({0.3, 0.7}));
    auto a = mu->sample(7, 4000);
    auto b = mu->sample(7, 4000);
    CHECK(a == b);
    for (const Vec& x : a) CHECK(in_cantor(x[0], 18));
    // cylinder frequencies within 4/sqrt(n)
    std::map<int, int> hits;
    for (const Vec& x : a) hits[static_cast<int>(x[0] * 9)] += 1;
    const double n = static_cast<double>(a.size());
    for_each_word(*c, 2, [&](const Word& w) {
        int cell = static_cast<int>(compose_word(*c, w, Vec::Constant(1, 0.5))[0] * 9);
        CHECK(std::abs(hits[cell] / n - mu->cylinder_mass(w).mid()) <= 4 / std::sqrt(n));
    });
    // Markov samples respect the subshift: never land in [bb]
    auto g = golden_mean();
    auto mg = MarkovMeasure::gibbs(g, GibbsPotential::per_symbol({0.0, 0.0}));
    for (const Vec& x : mg->sample(3, 2000)) CHECK_FALSE((x[0] >= 8.0 / 9 - 1e-12));
}

TEST_CASE("stationarity on a smooth test function") {
    auto h = half_third();
    ProbabilityVector p({0.4, 0.6});
    auto mu = MarkovMeasure::bernoulli(h, p);
    auto xs = mu->sample(9, 20000);
    auto g = [](double x) { return std::cos(5 * x) + x * x; };
    double lhs = 0.0, rhs = 0.0;
    for (const Vec& x : xs) {
        lhs += g(x[0]);
        for (int a = 0; a < 2; ++a) rhs += p[a] * g(h->map(a).apply(x)[0]);
    }
    lhs /= xs.size();
    rhs /= xs.size();
    // both sides average bounded functions with range < 3
    CHECK(std::abs(lhs - rhs) <= 4 * 3 / std::sqrt(static_cast<double>(xs.size())));
}

TEST_CASE("ball masses") {
    auto l = lebesgue();
    auto leb = MarkovMeasure::bernoulli(l, ProbabilityVector::uniform(2));
    auto b = ball_mass_estimate(*leb, Vec::Constant(1, 0.5), 0.25);
    CHECK(b.mass.lo <= 0.5);
    CHECK(b.mass.hi >= 0.5);
    CHECK(b.mass.width() <= 0.1 * b.mass.hi);

    auto c = cantor();
    auto mu = MarkovMeasure::bernoulli(c, ProbabilityVector::uniform(2));
    for (int k = 1; k <= 8; ++k) {
        auto m = ball_mass_estimate(*mu, Vec::Zero(1), std::pow(3.0, -k));
        CHECK(m.mass.lo <= std::ldexp(1.0, -k) * (1 + 1e-12));
        CHECK(m.mass.hi >= std::ldexp(1.0, -k) * (1 - 1e-12));
        CHECK(m.mass.lo >= 0.9 * std::ldexp(1.0, -k));
    }
    double prev = 0.0;
    for (double r = 0.01; r < 1.0; r *= 1.5) {
        auto m = ball_mass_estimate(*mu, Vec::Constant(1, 0.3), r);
        CHECK(m.mass.hi + 1e-12 >= prev);
        prev = m.mass.hi;
    }
    CHECK_THROWS_AS(ball_mass_estimate(*mu, Vec::Zero(1), 0.0), InvalidArgument);
}

TEST_CASE("rescaled restriction") {
    auto c = cantor();
    auto mu = MarkovMeasure::bernoulli(c, ProbabilityVector::uniform(2));
    Word beta = c->parse_word("ab");
    const double scale = 9.0;
    RescaledRestriction r(mu, beta, scale, mu->anchor(beta));
    CHECK(r.root().mass == doctest::Approx(1.0));
    CHECK(r.root().box.diameter() <= scale * word_hull(*c, beta).diameter() + 1e-12);
    CHECK(r.cylinder_mass(c->parse_word("a")).mid() == doctest::Approx(0.5));
    auto xs = r.sample(1, 500);
    for (const Vec& x : xs) {
        CHECK(x[0] >= -1e-9);
        CHECK(x[0] <= 1.0 + 1e-9);
    }
}

TEST_CASE("affine non-concentration profiles") {
    std::vector<double> eps{0.02, 0.05, 0.1, 0.2, 0.4};
    SUBCASE("Lebesgue on the line") {
        auto leb = MarkovMeasure::bernoulli(lebesgue(), ProbabilityVector::uniform(2));
        auto prof = affine_nonconcentration_profile(*leb, eps, 20, 1);
        CHECK(prof.alpha == doctest::Approx(1.0).epsilon(0.1));
        CHECK_FALSE(prof.failed);
    }
    SUBCASE("Lebesgue on the square") {
        auto leb = MarkovMeasure::bernoulli(lebesgue2d(), ProbabilityVector::uniform(4));
        NonConcOptions opt;
        opt.refine.rel_width = 0.1;
        auto prof = affine_nonconcentration_profile(*leb, eps, 6, 2, opt);
        CHECK(prof.alpha == doctest::Approx(1.0).epsilon(0.15));
    }
    SUBCASE("Cantor: exponent near log 2 / log 3") {
        auto mu = MarkovMeasure::bernoulli(cantor(), ProbabilityVector::uniform(2));
        std::vector<double> fine{1e-4, 1e-3, 1e-2, 1e-1};
        auto prof = affine_nonconcentration_profile(*mu, fine, 20, 3);
        CHECK(prof.alpha > 0.45);
        CHECK(prof.alpha < 0.85);
        CHECK_FALSE(prof.failed);
    }
    SUBCASE("measure inside a coordinate line is flagged") {
        std::vector<ConformalMap> maps{Similitude{0.5, OrthogonalMatrix::identity(2), Vec{{0.0, 0.0}}},
                                       Similitude{0.5, OrthogonalMatrix::identity(2), Vec{{0.5, 0.0}}}};
        auto flat = std::make_shared<IFSSystem>(2, maps);
        auto mu = MarkovMeasure::bernoulli(flat, ProbabilityVector::uniform(2));
        auto prof = affine_nonconcentration_profile(*mu, eps, 4, 1);
        CHECK(prof.failed);
        CHECK(prof.delta.front() >= 0.9);
    }
}
