#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fdecay/transfer.hpp"
#include "systems.hpp"

using namespace fdecay;
using namespace fixtures;

namespace {

TwistedOperator uniform_op(std::shared_ptr<IFSSystem> sys, double b) {
    auto mu = MarkovMeasure::bernoulli(sys, ProbabilityVector::uniform(sys->size()));
    return TwistedOperator::for_measure(*mu, b);
}

std::shared_ptr<IFSSystem> half_quarter() {
    return std::make_shared<IFSSystem>(1, std::vector<ConformalMap>{sim1(0.5, 0), sim1(0.25, 0.75)});
}

}  // namespace

TEST_CASE("untwisted operator fixes constants") {
    for (auto sys : {uni_example(), half_third()}) {
        TwistedOperator op = uniform_op(sys, 0.0);
        FunctionGrid g = FunctionGrid::constant(*sys, 3, 5, 1.0, 0.0);
        for (int n = 0; n < 5; ++n) g = apply_transfer(op, g);
        for (const cplx& v : g.values()) CHECK(std::abs(v - 1.0) < 1e-12);
        CHECK(g.max_derivative_bound() < 1e-12);
    }

    // normalised Markov weights on the golden-mean shift
    auto sys = golden_mean();
    auto mu = MarkovMeasure::gibbs(sys, GibbsPotential::per_symbol({0.0, 0.0}));
    TwistedOperator op = TwistedOperator::for_measure(*mu, 0.0);
    FunctionGrid g = FunctionGrid::constant(*sys, 2, 3, 1.0, 0.0);
    g = apply_transfer(op, apply_transfer(op, g));
    for (const cplx& v : g.values()) CHECK(std::abs(v - 1.0) < 1e-9 + op.residual());
}

TEST_CASE("twisted iterates: modulus, word sums, semigroup") {
    auto sys = uni_example();
    TwistedOperator op = uniform_op(sys, 17.0);
    FunctionGrid g = FunctionGrid::constant(*sys, 5, 9, 1.0, 17.0);
    std::vector<FunctionGrid> iter{g};
    for (int n = 1; n <= 6; ++n) iter.push_back(apply_transfer(op, iter.back()));

    for (int n = 1; n <= 6; ++n) {
        const FunctionGrid& h = iter[n];
        CHECK(h.sup_norm() <= 1.0 + 1e-12);
        CHECK(h.b_norm() >= h.sup_norm());
        CHECK(h.certified_b_norm() >= h.sup_norm());
        // grid against the exact word sum at a few nodes, within the certified error
        for (std::size_t c = 0; c < h.cylinders(); c += 37) {
            for (std::size_t j : {std::size_t{0}, std::size_t{4}, std::size_t{8}}) {
                cplx exact = transfer_word_sum(op, n, h.node(c, j), h.cylinder(c)[0]);
                CHECK(std::abs(h.value(c, j) - exact) <= h.interpolation_error() + 1e-12);
            }
        }
    }
    // the error bound is not vacuous at this resolution
    CHECK(iter[6].interpolation_error() < 1e-2);

    // five grid steps against the five-letter word sum at the first node
    Vec x = Vec::Constant(1, 0.0);
    cplx five = transfer_word_sum(op, 5, x, 0);
    CHECK(std::abs(iter[5].value(0, 0) - five) <= iter[5].interpolation_error() + 1e-12);
    // |L^n 1| is at most the untwisted value
    CHECK(std::abs(five) <= 1.0 + 1e-12);
}

TEST_CASE("grid mismatches are rejected") {
    TwistedOperator op = uniform_op(uni_example(), 5.0);
    CHECK_THROWS_AS(apply_transfer(op, FunctionGrid::constant(*half_third(), 2, 3, 1.0, 5.0)), GridMismatch);
    CHECK_THROWS_AS(apply_transfer(op, FunctionGrid::constant(*uni_example(), 2, 3, 1.0, 6.0)), GridMismatch);
    CHECK_THROWS_AS(FunctionGrid::constant(*uni_example(), 0, 3, 1.0, 0.0), InvalidArgument);
}

TEST_CASE("interpolation reproduces affine data") {
    auto sys = lebesgue2d();
    FunctionGrid g = FunctionGrid::constant(*sys, 1, 4, 0.0, 1.0);
    for (std::size_t c = 0; c < g.cylinders(); ++c)
        for (std::size_t j = 0; j < g.nodes_per_cylinder(); ++j) {
            Vec x = g.node(c, j);
            g.value(c, j) = 2.0 * x[0] - 3.0 * x[1] + 1.0;
        }
    std::mt19937_64 rng(4);
    for (int t = 0; t < 200; ++t) {
        Vec x{{uniform01(rng) * 0.5, uniform01(rng) * 0.5}};
        cplx v = g.interpolate(0, x);
        CHECK(std::abs(v - (2.0 * x[0] - 3.0 * x[1] + 1.0)) < 1e-12);
    }
    CHECK(g.measured_derivative() == doctest::Approx(3.0));
}

TEST_CASE("norm decay: UNI example against the resonance control") {
    TwistedOperator op = uniform_op(uni_example(), 0.0);
    std::vector<double> bs;
    for (int b = 10; b <= 100; b += 10) bs.push_back(b);
    NormDecayOptions o;
    o.depth = 3;
    NormDecayTable coarse = norm_decay(op, bs, o);
    o.depth = 6;
    NormDecayTable fine = norm_decay(op, bs, o);
    CHECK(coarse.max_rho < 0.98);
    CHECK(fine.max_rho < 0.98);
    for (std::size_t i = 0; i < bs.size(); ++i) CHECK(std::abs(coarse.fits[i].rho - fine.fits[i].rho) <= 0.05);
    CHECK(coarse.rows.size() == bs.size() * (o.n_max + 1));

    // ratios 1/2 and 1/4: |r|^{ib} coincide at b = 2 pi / log 2
    TwistedOperator ctl = uniform_op(half_quarter(), 0.0);
    double resonant = kTwoPi / std::log(2.0);
    NormDecayTable t = norm_decay(ctl, {resonant, 2.0 * resonant, resonant / 3, resonant / 2}, {});
    CHECK(t.fits[0].rho >= 0.999);
    CHECK(t.fits[1].rho >= 0.999);
    // on constants the operator is multiplication by (e^{-2 pi i/3} + e^{-4 pi i/3}) / 2
    CHECK(t.fits[2].rho == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(t.fits[3].rho == 0.0);   // phases cancel exactly

    // b = 0 is the untwisted operator
    CHECK(norm_decay(op, {0.0}, {}).fits[0].rho == doctest::Approx(1.0));
}

TEST_CASE("UNI: analytic derivative against finite differences") {
    auto sys = uni_example();
    std::mt19937_64 rng(11);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        int n = 1 + static_cast<int>(uniform01(rng) * 6);
        std::vector<int> s;
        for (int i = 0; i < n; ++i) s.push_back(static_cast<int>(uniform01(rng) * 3));
        Word w = sys->word(s);
        double x = 0.05 + 0.9 * uniform01(rng);
        const double h = 1e-5;
        double fd = (word_log_scale(*sys, w, Vec::Constant(1, x + h)) - word_log_scale(*sys, w, Vec::Constant(1, x - h))) /
                    (2 * h);
        worst = std::max(worst, std::abs(fd - word_grad_log_scale(*sys, w, Vec::Constant(1, x))[0]));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("UNI: margins of the standard example") {
    auto sys = uni_example();
    Vec x = Vec::Constant(1, 0.0);   // fixed point of the linear branch
    std::vector<double> eps;
    for (int n : {4, 6, 8}) {
        UNIReport r = uni_margin(*sys, n, x, 0);
        eps.push_back(r.eps0);
        CHECK(r.eps0 > 0.0);
        // realizing pair reproduces the margin
        const auto& [w1, w2] = r.pairs[0];
        double g = word_grad_log_scale(*sys, w1, x)[0] - word_grad_log_scale(*sys, w2, x)[0];
        CHECK(std::abs(g) == doctest::Approx(r.eps0).epsilon(1e-12));

        UNIReport fam = uni_family_margin(*sys, n, x, 0);
        double closed = uni_closed_form(*sys, x);
        CHECK(fam.eps0 == doctest::Approx(closed).epsilon(1e-10));
        CHECK(r.eps0 >= fam.eps0 - 1e-12);

        UNIOptions ball;
        ball.radius = 0.02;
        CHECK(uni_margin(*sys, n, x, 0, ball).eps0 <= r.eps0 + 1e-12);
    }
    // |x - u|: 1 and 2, so the closed form is max(2/1, 4/4) = 2
    CHECK(uni_closed_form(*sys, x) == doctest::Approx(2.0));
    for (double e : eps) CHECK(std::abs(e - eps[1]) <= 0.05 * eps[1]);

    CHECK_THROWS_AS(uni_family_margin(*sys, 4, x, 1), InvalidArgument);
}

TEST_CASE("UNI: similitudes have zero margin") {
    for (auto sys : {half_third(), cantor(), rotating2d(0.7)}) {
        UNIReport r = uni_margin(*sys, 4, Vec::Constant(sys->dim(), 0.1), -1);
        CHECK(r.eps0 == 0.0);
        for (double m : r.margins) CHECK(m == 0.0);
    }
}

TEST_CASE("UNI: subshift restricts the words") {
    auto sys = golden_mean();
    UNIReport r = uni_margin(*sys, 5, Vec::Constant(1, 0.7), 1);
    for (const auto& [a, b] : r.pairs) {
        CHECK(sys->subshift().admissible(a));
        CHECK(a.back() == 0);   // only 'a' may precede 'b'
    }
}

TEST_CASE("band masses for the UNI example") {
    TwistedOperator op = uniform_op(uni_example(), 0.0);
    double prev = 1.0;
    for (double decades : {30.0, 33.0, 36.0}) {
        double L = decades * std::log(10.0);
        BandWords bw = collect_band_words(op, Word(), L, 0.1);
        BandTable t = band_table(bw);
        CHECK(bw.n == static_cast<int>(std::floor(0.1 * L)));
        CHECK(t.total == doctest::Approx(1.0).epsilon(1e-10));
        double sum = 0.0;
        for (const auto& [band, m] : t.mass) sum += m;
        CHECK(std::abs(sum - 1.0) < 1e-10);
        CHECK(t.max_in_range < prev);
        prev = t.max_in_range;

        BandMass d = frequency_band_mass(bw, t.argmax, BandRoute::Direct, 0.02);
        BandMass m = frequency_band_mass(bw, t.argmax, BandRoute::Mollified, 0.02);
        CHECK(d.mass == doctest::Approx(t.max_in_range).epsilon(1e-12));
        // h majorises the band indicator and vanishes outside band + skirt
        CHECK(m.mass >= d.mass - m.quadrature_error);
        CHECK(m.mass <= d.mass + m.skirt + m.quadrature_error);
        CHECK(m.width == doctest::Approx(1.5 * std::exp(-0.02 * L) + 2 * std::exp(-0.02 * L) / 4));

        CHECK_THROWS_AS(frequency_band_mass(bw, t.lo - 1, BandRoute::Direct), BandOutOfRange);
        CHECK_THROWS_AS(frequency_band_mass(bw, t.hi + 1, BandRoute::Direct), BandOutOfRange);
    }
}

TEST_CASE("band masses: mollified route against a direct smooth sum") {
    // Word set small enough to evaluate h directly at every log-derivative.
    TwistedOperator op = uniform_op(uni_example(), 0.0);
    double L = 30.0 * std::log(10.0);
    BandWords bw = collect_band_words(op, Word(), L, 0.05);
    BandTable t = band_table(bw);
    for (const auto& [band, mass] : t.mass) {
        if (band < t.lo || band > t.hi) continue;
        BandMass m = frequency_band_mass(bw, band, BandRoute::Mollified, 0.02);
        BandMass d = frequency_band_mass(bw, band, BandRoute::Direct, 0.02);
        CHECK(m.mass >= d.mass - m.quadrature_error);
        CHECK(m.mass <= d.mass + m.skirt + m.quadrature_error);
    }
}

TEST_CASE("band masses: similitude weights concentrate") {
    TwistedOperator op = uniform_op(cantor(), 0.0);
    BandWords bw = collect_band_words(op, Word(), 30.0 * std::log(10.0), 0.1);
    BandTable t = band_table(bw);
    CHECK(t.mass.size() == 1);
    CHECK(t.max_in_range == doctest::Approx(1.0));

    // two ratios: at most n + 1 distinct values
    TwistedOperator hq = uniform_op(half_third(), 0.0);
    BandWords hw = collect_band_words(hq, Word(), 30.0 * std::log(10.0), 0.1);
    CHECK(band_table(hw).mass.size() <= static_cast<std::size_t>(hw.n + 1));
}

TEST_CASE("band words below a cylinder") {
    auto sys = golden_mean();
    auto mu = MarkovMeasure::gibbs(sys, GibbsPotential::per_symbol({0.0, 0.0}));
    TwistedOperator op = TwistedOperator::for_measure(*mu, 0.0);
    BandWords bw = collect_band_words(op, sys->word({1, 0}), 40.0, 0.15);
    double total = 0.0;
    for (double w : bw.weight) total += w;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_THROWS_AS(collect_band_words(op, sys->word({1, 1}), 40.0, 0.15), InadmissibleWord);
}
