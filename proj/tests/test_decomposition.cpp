#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fdecay/decomposition.hpp"
#include "systems.hpp"

#include <map>
#include <set>

using namespace fdecay;
using namespace fixtures;

namespace {

std::set<std::string> word_strings(const CutoffSet& c, const IFSSystem& sys) {
    std::set<std::string> out;
    for (const auto& w : c.words) out.insert(w.str(sys.names()));
    return out;
}

GoodWordParams manual_params(int n, std::vector<double> p, std::vector<double> E) {
    GoodWordParams g;
    g.n = n;
    g.p = std::move(p);
    g.E = std::move(E);
    return g;
}

}  // namespace

TEST_CASE("stopping words for ratios 1/2 and 1/3") {
    auto sys = half_third();
    auto p = ProbabilityVector::uniform(2);
    CHECK(word_strings(stopping_words(*sys, p, 0.3), *sys) == std::set<std::string>{"aa", "ab", "ba", "bb"});
    CHECK(word_strings(stopping_words(*sys, p, 0.6), *sys) == std::set<std::string>{"a", "b"});

    CHECK_THROWS_AS(stopping_words(*sys, p, 0.0), ThresholdOutOfRange);
    CHECK_THROWS_AS(stopping_words(*sys, p, 1.0), ThresholdOutOfRange);
    CHECK_THROWS_AS(stopping_words(*sys, p, 1e-6, 100), WordBudgetExceeded);
}

TEST_CASE("stopping words match a filter over all short words") {
    auto sys = half_third();
    ProbabilityVector p({0.3, 0.7});
    for (double thr : {0.05, 0.011, 0.0031}) {
        CutoffSet c = stopping_words(*sys, p, thr);
        std::set<std::string> expect;
        for (int len = 1; len <= 12; ++len)
            for (const Word& w : enumerate_words(*sys, len)) {
                double r = std::pow(0.5, w.count(0)) * std::pow(1.0 / 3, w.count(1));
                double parent = r / (w.back() == 0 ? 0.5 : 1.0 / 3);
                if (r < thr && thr <= parent) expect.insert(w.str(sys->names()));
            }
        CHECK(word_strings(c, *sys) == expect);
        double total = 0.0;
        for (double x : c.weights) total += x;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("decay gap is strict") {
    auto sys2 = half_third();
    auto p2 = ProbabilityVector::uniform(2);
    CHECK_THROWS_AS(good_word_params(*sys2, p2, 100, 2, 0.1, 0.5, 0.0), DecayGapViolated);
    CHECK_NOTHROW(good_word_params(*sys2, p2, 100, 2, 0.1, 0.49, 0.0));

    auto sys3 = std::make_shared<IFSSystem>(
        1, std::vector<ConformalMap>{sim1(0.2, 0), sim1(0.25, 0.4), sim1(0.3, 0.7)});
    auto p3 = ProbabilityVector::uniform(3);
    // eps - 1 + 0.6 = 0.05
    CHECK_THROWS_AS(good_word_params(*sys3, p3, 100, 2, 0.1, 0.45, 0.0), DecayGapViolated);
    CHECK_NOTHROW(good_word_params(*sys3, p3, 100, 2, 0.1, 0.35, 0.0));
    CHECK(decay_gap_holds(2, 0.3, 0.2));
    CHECK(decay_gap_holds(4, 0.1, 0.0));
    CHECK_FALSE(decay_gap_holds(4, 0.3, 0.0));   // -3/2 + 1.6 > 0
}

TEST_CASE("prefix length and window widths by hand") {
    auto sys = half_third();
    ProbabilityVector p({0.4, 0.6});
    const double L = 100.0, delta = 0.1;
    GoodWordParams g = good_word_params(*sys, p, L, 2, delta, 0.1, 0.0);
    CHECK_FALSE(g.capped);
    double m = L - 6.0 * std::log(L);
    double h = 0.4 * std::log(2.0) + 0.6 * std::log(3.0);
    CHECK(g.n == static_cast<int>(std::floor((1.0 - std::pow(m, -0.4)) * m / h)));
    CHECK(g.E[0] == doctest::Approx(std::pow(m, 0.6) / (2.0 * std::log(2.0))));
    CHECK(g.E[1] == doctest::Approx(std::pow(m, 0.6) / (2.0 * std::log(3.0))));

    // doubling log|xi| multiplies E by about 2^{1/2+delta}
    GoodWordParams g1 = good_word_params(*sys, p, 1e4, 2, delta, 0.1, 0.0);
    GoodWordParams g2 = good_word_params(*sys, p, 2e4, 2, delta, 0.1, 0.0);
    CHECK(g2.E[0] / g1.E[0] == doctest::Approx(std::pow(2.0, 0.5 + delta)).epsilon(0.01));
    CHECK(g2.E[1] / g1.E[1] ==
          doctest::Approx(std::pow(g2.log_threshold / g1.log_threshold, 0.5 + delta)).epsilon(1e-12));

    // desk-scale cap
    GoodWordParams d = good_word_params(*sys, p, std::log(1e6), 2, delta, 0.1, 0.5);
    CHECK(d.capped);
    CHECK(d.log_threshold == doctest::Approx(-0.5 * std::log(1e6)));
    CHECK_THROWS_AS(good_word_params(*sys, p, std::log(1e6), 2, delta, 0.1, 0.0), ThresholdOutOfRange);
}

TEST_CASE("good-word window is closed") {
    GoodWordParams g = manual_params(10, {0.5, 0.5}, {2.0, 2.0});
    auto sys = half_third();
    CHECK(classify_good(sys->word({0, 0, 0, 0, 0, 0, 0, 1, 1, 1}), g));
    CHECK_FALSE(classify_good(sys->word({0, 0, 0, 0, 0, 0, 0, 0, 1, 1}), g));
    CHECK(classify_good(sys->word({1, 1, 1, 1, 1, 0, 0, 0, 0, 0}), g));
    CHECK_THROWS_AS(classify_good(sys->word({0, 1}), g), WrongLength);
}

TEST_CASE("bad mass against enumeration of every word") {
    auto sys = half_third();
    for (auto pv : {std::vector<double>{0.5, 0.5}, std::vector<double>{0.3, 0.7}}) {
        GoodWordParams g = manual_params(14, pv, {1.7, 2.4});
        double brute = 0.0;
        for (const Word& w : enumerate_words(*sys, 14)) {
            if (classify_good(w, g)) continue;
            double q = 1.0;
            for (int a : w.symbols()) q *= pv[a];
            brute += q;
        }
        double exact = bad_mass_exact(g);
        CHECK(exact == doctest::Approx(brute).epsilon(1e-12));
        BadMassEstimate mc = bad_mass_estimate(g, 200000, 11);
        CHECK(std::abs(mc.mass - exact) <= 4.0 * mc.stderr_ + 1e-12);
    }
}

TEST_CASE("bad mass decays in (log |xi|)^{2 delta}") {
    auto sys = half_third();
    auto p = ProbabilityVector::uniform(2);
    std::vector<double> lx;
    for (int j = 0; j <= 8; ++j) lx.push_back(std::pow(10.0, 2.0 + 0.5 * j));
    BadMassSweep sw = bad_mass_sweep(*sys, p, lx, 2, 0.1, 0.1, 0.0, 50000, 3);
    CHECK(sw.fit.slope < 0.0);
    CHECK(sw.fit.r2 >= 0.9);
    for (std::size_t i = 1; i < sw.exact.size(); ++i) CHECK(sw.exact[i] < sw.exact[i - 1]);
}

TEST_CASE("Diophantine certificate: golden ratio") {
    mpreal::default_precision(60);
    mpreal phi = (1 + sqrt(mpreal(5))) / 2;
    DiophantineCertificate c = diophantine_lower_bound(phi, 2, 10000);
    CHECK(c.value == doctest::Approx(diophantine_brute(phi, 2, 10000)).epsilon(1e-12));
    CHECK(c.argmin_q == 1);
    CHECK(c.value == doctest::Approx(2.0 - static_cast<double>(phi)).epsilon(1e-12));
    // convergent denominators are Fibonacci numbers
    std::vector<long long> fib{1, 2, 3, 5, 8, 13, 21, 34};
    REQUIRE(c.convergents.size() >= fib.size());
    for (std::size_t i = 0; i < fib.size(); ++i) CHECK(c.convergents[i] == fib[i]);
    // q |q phi| along convergents tends to 1/sqrt5
    DiophantineCertificate c1 = diophantine_lower_bound(phi, 1, 10000);
    long long q = c1.convergents.back();
    mpreal y = mpreal(q) * phi;
    double d = static_cast<double>(y - floor(y + mpreal(0.5)));
    CHECK(std::abs(q * d) == doctest::Approx(1.0 / std::sqrt(5.0)).epsilon(1e-6));
}

TEST_CASE("Diophantine certificate matches brute force and shrinks with Q") {
    mpreal::default_precision(60);
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 6; ++trial) {
        mpreal x = mpreal(uniform01(rng)) + mpreal(uniform01(rng)) * pow(mpreal(2), -60);
        for (int l : {1, 2, 3}) {
            DiophantineCertificate c = diophantine_lower_bound(x, l, 3000);
            CHECK(c.value == doctest::Approx(diophantine_brute(x, l, 3000)).epsilon(1e-10));
        }
        double prev = std::numeric_limits<double>::infinity();
        for (long long Q : {1LL, 10LL, 100LL, 1000LL, 100000LL}) {
            double v = diophantine_lower_bound(x, 2, Q).value;
            CHECK(v <= prev);
            prev = v;
        }
    }
}

TEST_CASE("Diophantine certificate of rationals") {
    DiophantineCertificate c = diophantine_lower_bound_rational(3, 7, 2, 100);
    CHECK(c.rational);
    CHECK(c.value == 0.0);
    CHECK(c.argmin_q == 7);
    DiophantineCertificate small = diophantine_lower_bound_rational(3, 7, 2, 6);
    CHECK(small.value > 0.0);
    // brute check: min over q <= 6 of q^2 |3q/7|
    double brute = 1e9;
    for (int q = 1; q <= 6; ++q) {
        int r = (3 * q) % 7;
        brute = std::min(brute, q * q * std::min(r, 7 - r) / 7.0);
    }
    CHECK(small.value == doctest::Approx(brute));
}

TEST_CASE("log ratio in high precision") {
    mpreal x = log_ratio_mp(0.5, 1.0 / 3.0, 256);
    mpreal::default_precision(80);
    mpreal expect = log(mpreal(2)) / log(mpreal(3));
    CHECK(static_cast<double>(abs(x - expect)) < 1e-60);
    DiophantineCertificate c = diophantine_lower_bound(x, 2, 1000000);
    CHECK_FALSE(c.rational);
    CHECK(c.value > 0.1);
}

TEST_CASE("pair certificate reduces to the single-variable one") {
    mpreal::default_precision(40);
    mpreal t1 = sqrt(mpreal(2)), t2 = sqrt(mpreal(7));
    const long long Q = 40;
    double brute = 1e300;
    for (long long q = -Q; q <= Q; ++q)
        for (long long pp = -Q; pp <= Q; ++pp) {
            if (pp == 0 && q == 0) continue;
            mpreal y = pp * t1 + q * t2;
            mpreal f = y - floor(y);
            double d = static_cast<double>(f < 0.5 ? f : mpreal(1 - f));
            brute = std::min(brute, std::pow(static_cast<double>(std::max(std::llabs(pp), std::llabs(q))), 2) * d);
        }
    PairCertificate pc = diophantine_pair_bound(t1, t2, 2, Q);
    CHECK(pc.value == doctest::Approx(brute).epsilon(1e-9));
    PairCertificate rat = diophantine_pair_bound(mpreal(1) / 3, mpreal(1) / 5, 1, 10);
    CHECK(rat.value < 1e-12);
    PairCertificate irr = diophantine_pair_bound(sqrt(mpreal(2)), sqrt(mpreal(3)), 2, 200);
    CHECK(irr.value > 0.0);
    CHECK(rotation_turns(OrthogonalMatrix::rotation2d(kTwoPi * 0.3)) == doctest::Approx(0.3));
}

TEST_CASE("good cut-off set by counts agrees with word enumeration") {
    auto sys = half_third();
    ProbabilityVector p({0.45, 0.55});
    for (double L : {std::log(1e6), std::log(3e7)}) {
        GoodWordParams g = good_word_params(*sys, p, L, 2, 0.1, 0.1, 0.5);
        GoodCutoff cut = good_cutoff(*sys, g);
        CutoffSet all = stopping_words(*sys, p, std::exp(g.log_threshold));
        std::map<std::vector<int>, std::pair<double, double>> brute;   // counts -> (mass, words)
        double rest = 0.0;
        for (std::size_t i = 0; i < all.words.size(); ++i) {
            const Word& w = all.words[i];
            if (static_cast<int>(w.size()) >= g.n && classify_good(w.prefix(g.n), g)) {
                auto& e = brute[w.counts()];
                e.first += all.weights[i];
                e.second += 1.0;
            } else {
                rest += all.weights[i];
            }
        }
        REQUIRE(cut.classes.size() == brute.size());
        for (const auto& cc : cut.classes) {
            auto it = brute.find(cc.counts);
            REQUIRE(it != brute.end());
            CHECK(cc.mass == doctest::Approx(it->second.first).epsilon(1e-10));
            CHECK(cc.words == doctest::Approx(it->second.second).epsilon(1e-10));
        }
        CHECK(cut.bad_mass == doctest::Approx(rest).epsilon(1e-10));
        CHECK(cut.good_mass + cut.bad_mass == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(cut.min_good_ratio >= 1.0);
        CHECK(cut.lower_violation <= 0.0);
    }
}

TEST_CASE("separation audit") {
    auto p = ProbabilityVector::uniform(2);
    const double L = std::log(1e6);

    SeparationAudit ht = separation_check(*half_third(), p, Vec(), L, 2, 0.1, 0.1);
    CHECK_FALSE(ht.rotation_form);
    CHECK(ht.violations == 0);
    CHECK(ht.min_gap > 1.0);
    for (const auto& row : ht.rows) CHECK(row.pairs.size() == 1);

    // equal ratios: every pair with the same length lands in the same band
    SeparationAudit leb = separation_check(*lebesgue(), p, Vec(), L, 2, 0.1, 0.1);
    CHECK(leb.violations > 0);

    SeparationAudit rot = separation_check(*twin_rotations(std::sqrt(2.0) - 1, std::sqrt(3.0) - 1), p,
                                           Vec{{1.0, 0.0}}, L, 2, 0.1, 0.1);
    CHECK(rot.rotation_form);
    CHECK(rot.violations == 0);
    CHECK(rot.min_gap > 1.0);

    SeparationAudit same = separation_check(*twin_rotations(0.125, 0.125), p, Vec{{1.0, 0.0}}, L, 2, 0.1, 0.1);
    CHECK(same.violations > 0);

    CHECK_THROWS_AS(separation_check(*half_third(), p, Vec(), L, 2, 0.1, 0.1, 0, 0), InvalidArgument);
}

TEST_CASE("multinomial maximiser") {
    // explicit factorial formula
    CHECK(multinomial_prob({2, 1}, {0.5, 0.5}) == doctest::Approx(3.0 / 8.0));
    CHECK(multinomial_prob({1, 1, 1}, {0.2, 0.3, 0.5}) == doctest::Approx(6 * 0.2 * 0.3 * 0.5));

    for (auto pv : {std::vector<double>{0.5, 0.5}, std::vector<double>{0.2, 0.3, 0.5},
                    std::vector<double>{0.1, 0.2, 0.3, 0.4}, std::vector<double>{0.05, 0.05, 0.45, 0.45}}) {
        ProbabilityVector p(pv);
        for (int n = 0; n <= 60; ++n) {
            MultinomialMax a = multinomial_max(n, p);
            MultinomialMax b = multinomial_max_brute(n, p);
            CHECK(a.argmax == b.argmax);
            CHECK(a.max_prob == b.max_prob);
        }
    }
    // hand-rolled scan for k = 3
    ProbabilityVector p3({0.2, 0.3, 0.5});
    for (int n : {7, 19, 40}) {
        double best = 0.0;
        for (int i = 0; i <= n; ++i)
            for (int j = 0; i + j <= n; ++j) best = std::max(best, multinomial_prob({i, j, n - i - j}, p3.values()));
        CHECK(multinomial_max(n, p3).max_prob == doctest::Approx(best).epsilon(1e-12));
    }
    // max ~ n^{-(k-1)/2}
    for (auto pv : {std::vector<double>{0.5, 0.5}, std::vector<double>{0.2, 0.3, 0.5}}) {
        ProbabilityVector p(pv);
        double k = static_cast<double>(pv.size());
        double lo = 1e300, hi = 0.0;
        for (int n = 200; n <= 2000; n += 7) {
            double s = multinomial_max(n, p).max_prob * std::pow(n, (k - 1) / 2);
            lo = std::min(lo, s);
            hi = std::max(hi, s);
        }
        CHECK((hi - lo) / hi < 0.2);
    }
}

TEST_CASE("averaging chain accounts for the transform") {
    auto sys = half_third();
    auto mu = MarkovMeasure::bernoulli(sys, ProbabilityVector::uniform(2));
    for (double xi : {2e4, 1e5}) {
        PipelineAudit a = average_bound_report(mu, Vec::Ones(1), std::log(xi), 2, 0.1, 0.1, 0.1,
                                               Evaluator::functional(1e-8));
        CHECK(a.triangle_ok);
        CHECK(a.majorant_ok);
        CHECK(a.direct <= a.average + a.bad_word_mass + a.direct_error + a.average_error);
        CHECK(a.bad_band_actual <= a.average + 1e-15);
    }
}
