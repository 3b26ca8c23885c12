#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "products.hpp"

using namespace fdecay;
using namespace fixtures;

namespace {

std::shared_ptr<IFSSystem> thirds() {
    return std::make_shared<IFSSystem>(1, std::vector<ConformalMap>{sim1(1.0 / 3, 0), sim1(1.0 / 3, 2.0 / 3)});
}

// Product of two similitude systems with product weights.
RestrictedProductIFS similitude_product(double p0, double p1) {
    auto c = thirds();
    auto h = std::make_shared<IFSSystem>(1, std::vector<ConformalMap>{sim1(0.4, 0), sim1(0.4, 0.6)});
    return RestrictedProductIFS({c, h}, {{0, 0}, {0, 1}, {1, 0}, {1, 1}},
                                ProbabilityVector({p0 * p1, p0 * (1 - p1), (1 - p0) * p1, (1 - p0) * (1 - p1)}));
}

double level_mass(const Measure& mu, int depth) {
    std::vector<CylNode> frontier{mu.root()}, kids, next;
    for (int l = 0; l < depth; ++l) {
        next.clear();
        for (const auto& n : frontier) {
            mu.children(n, kids);
            next.insert(next.end(), kids.begin(), kids.end());
        }
        frontier.swap(next);
    }
    double s = 0.0;
    for (const auto& n : frontier) s += n.mass;
    return s;
}

}  // namespace

TEST_CASE("six Gauss-type maps: projected alphabet") {
    RestrictedProductIFS ifs = gauss_six();
    HypothesisReport h = check_hypotheses(ifs);
    CHECK(h.separation);
    CHECK(h.siblings);
    CHECK(h.uni);

    Disintegration d = project_alphabet(ifs);
    REQUIRE(d.q.size() == 3);
    for (double q : d.q) CHECK(q == doctest::Approx(1.0 / 3));
    CHECK(d.gamma == doctest::Approx(0.5));
    // second letter 1 (0-based 0) pairs with first letters 2 and 3
    CHECK(d.projected[0] == std::vector<int>{0});
    CHECK(d.fibre_letters[0] == std::vector<int>{1, 2});
    for (const auto& w : d.fibre_weights) {
        REQUIRE(w.size() == 2);
        CHECK(w[0] + w[1] == doctest::Approx(1.0));
        for (double x : w) CHECK(x <= d.gamma);
    }
}

TEST_CASE("hypothesis violations are named") {
    auto g = gauss3();
    // (3,3) has no sibling in the first coordinate
    RestrictedProductIFS lonely({g, g}, {{0, 0}, {0, 1}, {1, 0}, {1, 1}, {2, 2}}, ProbabilityVector::uniform(5));
    HypothesisReport h = check_hypotheses(lonely);
    CHECK_FALSE(h.siblings);
    CHECK(h.missing_tuple == 4);
    CHECK(h.missing_coord == 0);
    try {
        project_alphabet(lonely);
        FAIL("expected a violation");
    } catch (const HypothesisViolation& e) {
        CHECK(e.which == 2);
    }

    auto overlap = std::make_shared<IFSSystem>(1, std::vector<ConformalMap>{sim1(0.6, 0), sim1(0.6, 0.4)});
    RestrictedProductIFS ov({overlap, g}, {{0, 0}, {0, 1}, {1, 0}, {1, 1}}, ProbabilityVector::uniform(4));
    try {
        project_alphabet(ov);
        FAIL("expected a violation");
    } catch (const HypothesisViolation& e) {
        CHECK(e.which == 1);
    }

    // all-similitude fibres: no UNI in either coordinate
    RestrictedProductIFS sims = similitude_product(0.5, 0.5);
    HypothesisReport hs = check_hypotheses(sims);
    CHECK_FALSE(hs.uni);
    CHECK(hs.uni_eps0[0] == 0.0);
    CHECK_THROWS_AS(random_norm_decay(sims, 3, {10.0}, 2, 1), HypothesisViolation);

    CHECK_THROWS_AS(RestrictedProductIFS({g, g}, {{0, 0}, {0, 0}}, ProbabilityVector::uniform(2)), InvalidArgument);
    CHECK_THROWS_AS(RestrictedProductIFS({g, g}, {{0, 3}}, ProbabilityVector::uniform(1)), InvalidArgument);
}

TEST_CASE("product weights give fibre weights independent of the prefix") {
    Disintegration d = project_alphabet(similitude_product(0.3, 0.8));
    REQUIRE(d.q.size() == 2);
    CHECK(d.q[0] == doctest::Approx(0.8));
    CHECK(d.fibre_weights[0][0] == doctest::Approx(0.3));
    CHECK(d.fibre_weights[1][0] == doctest::Approx(0.3));
}

TEST_CASE("prefix sampling") {
    RestrictedProductIFS ifs = similitude_product(0.5, 0.8);
    Disintegration d = project_alphabet(ifs);
    const int n = 40000;
    std::vector<int> beta = sample_beta(d, 3, n);
    CHECK(beta == sample_beta(d, 3, n));
    CHECK(beta != sample_beta(d, 4, n));
    std::vector<double> freq(d.q.size(), 0.0);
    for (int b : beta) {
        REQUIRE(b >= 0);
        REQUIRE(b < static_cast<int>(d.q.size()));
        freq[b] += 1.0 / n;
    }
    for (std::size_t i = 0; i < d.q.size(); ++i) CHECK(std::abs(freq[i] - d.q[i]) < 4.0 / std::sqrt(n));
    CHECK_THROWS_AS(sample_beta(d, 3, 0), InvalidArgument);
}

TEST_CASE("random measure: masses and prefix length") {
    auto ifs = std::make_shared<const RestrictedProductIFS>(gauss_six());
    auto d = std::make_shared<const Disintegration>(project_alphabet(*ifs));
    std::vector<int> beta = sample_beta(*d, 9, 12);
    RandomMeasure mu(ifs, d, beta, 10);
    for (int l = 0; l <= 10; ++l) CHECK(level_mass(mu, l) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(RandomMeasure(ifs, d, beta, 13), PrefixTooShort);

    // cylinder masses are products of one-step weights
    std::vector<CylNode> kids;
    mu.children(mu.root(), kids);
    for (const auto& k : kids) {
        CHECK(mu.cylinder_mass(k.word).lo == doctest::Approx(k.mass));
        CHECK(k.mass <= d->gamma + 1e-15);
    }
}

TEST_CASE("random measure: one-step self-conformality") {
    auto ifs = std::make_shared<const RestrictedProductIFS>(gauss_six());
    auto d = std::make_shared<const Disintegration>(project_alphabet(*ifs));
    const IFSSystem& g = ifs->component(0);
    std::mt19937_64 rng(21);
    for (int t = 0; t < 20; ++t) {
        std::vector<int> beta = sample_beta(*d, 100 + t, 30);
        double xi = (2.0 * uniform01(rng) - 1.0) * 40.0;
        FourierValue lhs = RandomMeasure(ifs, d, beta, 30).fourier(xi, 1e-7);

        // sum_a m(a) * integral of e(xi f_a(y)) over the shifted measure, via its cylinder tree
        std::vector<int> tail(beta.begin() + 1, beta.end());
        RandomMeasure shifted(ifs, d, tail, 12);
        std::vector<CylNode> frontier{shifted.root()}, kids, next;
        for (int l = 0; l < 12; ++l) {
            next.clear();
            for (const auto& n : frontier) {
                shifted.children(n, kids);
                next.insert(next.end(), kids.begin(), kids.end());
            }
            frontier.swap(next);
        }
        cplx rhs = 0.0;
        double err = 0.0;
        const int b = beta[0];
        for (std::size_t i = 0; i < d->fibre_letters[b].size(); ++i) {
            const auto& map = g.map(d->fibre_letters[b][i]);
            for (const auto& n : frontier) {
                double lo = map.apply(n.box.lo)[0], hi = map.apply(n.box.hi)[0];
                double mass = d->fibre_weights[b][i] * n.mass;
                rhs += mass * std::polar(1.0, kTwoPi * xi * 0.5 * (lo + hi));
                err += mass * kTwoPi * std::abs(xi) * 0.5 * std::abs(hi - lo);
            }
        }
        CHECK(std::abs(lhs.value - rhs) <= lhs.error + err + 1e-12);
        CHECK(err < 1e-3);
    }
}

TEST_CASE("product case: random measure is the self-similar marginal") {
    RestrictedProductIFS prod = similitude_product(0.3, 0.6);
    auto ifs = std::make_shared<const RestrictedProductIFS>(prod);
    auto d = std::make_shared<const Disintegration>(project_alphabet(prod));
    auto marginal = MarkovMeasure::bernoulli(thirds(), ProbabilityVector({0.3, 0.7}));
    FourierEngine fe(marginal, Evaluator::functional(1e-10));
    for (std::uint64_t s : {1u, 2u}) {
        RandomMeasure mu(ifs, d, sample_beta(*d, s, 40), 40);
        for (double xi : {0.7, 3.0, 17.5, 81.0}) {
            FourierValue a = mu.fourier(xi, 1e-7);
            FourierValue b = fe.eval(Vec::Constant(1, xi));
            CHECK(std::abs(a.value - b.value) <= a.error + b.error);
        }
    }

    // the full transform factorises
    auto second = MarkovMeasure::bernoulli(ifs->component_ptr(1), ProbabilityVector({0.6, 0.4}));
    FourierEngine fe2(second, Evaluator::functional(1e-10));
    for (Vec xi : {Vec{{2.0, 5.0}}, Vec{{-11.0, 3.5}}}) {
        FourierValue full = product_fourier(prod, xi, 1e-3);
        cplx expect = fe.eval(xi.head(1)).value * fe2.eval(xi.tail(1)).value;
        CHECK(std::abs(full.value - expect) <= full.error + 1e-9);
    }
}

TEST_CASE("disintegration reconstructs the transform") {
    RestrictedProductIFS ifs = gauss_six();
    std::mt19937_64 rng(8);
    for (int t = 0; t < 4; ++t) {
        Vec xi{{(2.0 * uniform01(rng) - 1.0) * 25.0, (2.0 * uniform01(rng) - 1.0) * 25.0}};
        DisintegrationRow r = disintegration_check(ifs, xi, 10000, 40 + t);
        CHECK(r.reconstruction_ok);
        CHECK(r.triangle_ok);
        CHECK(r.sigma < 0.01);
        CHECK(r.closure < 2e-3);
    }

    // the leading coordinate follows the largest frequency component
    DisintegrationRow r = disintegration_check(ifs, Vec{{1.0, 12.0}}, 2000, 1);
    CHECK(r.lead == 1);
    CHECK(r.reconstruction_ok);
}

TEST_CASE("disintegration: product measure and shifted prefixes") {
    RestrictedProductIFS prod = similitude_product(0.5, 0.5);
    Vec xi{{7.0, 3.0}};
    DisintegrationRow r = disintegration_check(prod, xi, 4000, 5);
    CHECK(r.reconstruction_ok);
    // every mu_beta is the same measure, so |transform| has no spread
    CHECK(r.abs_sigma < 1e-9);

    RestrictedProductIFS ifs = gauss_six();
    DisintegrationOptions shifted;
    shifted.skip = 1;
    Vec z{{9.0, -4.0}};
    DisintegrationRow a = disintegration_check(ifs, z, 8000, 11);
    DisintegrationRow b = disintegration_check(ifs, z, 8000, 11, shifted);
    CHECK(b.reconstruction_ok);
    double band = 3.0 * std::hypot(a.sigma, b.sigma) + a.closure + b.closure;
    CHECK(std::abs(a.reconstruction - b.reconstruction) <= band);
}

TEST_CASE("random transfer operators") {
    RandomDecayOptions opt;
    RandomDecayTable none = random_norm_decay(inversion_product(), 6, {0.0}, 5, 2, opt);
    for (double r : none.rho[0]) CHECK(r == doctest::Approx(1.0));
    for (double e : none.exceptional[0]) CHECK(e == 1.0);

    RandomDecayTable t = random_norm_decay(inversion_product(), 10, {20.0}, 10, 2, opt);
    for (double r : t.rho[0]) CHECK(r < 0.98);
    CHECK(t.exceptional[0].back() == 0.0);
    CHECK(t.rows.size() == 10u * 10u);

    // one affine fibre: the non-decaying fraction dies out as n grows
    RandomDecayTable m = random_norm_decay(mixed_product(), 14, {30.0}, 40, 2, opt);
    const auto& exc = m.exceptional[0];
    CHECK(exc.front() > 0.3);
    CHECK(exc.back() == 0.0);
    for (std::size_t k = 1; k < exc.size(); ++k) CHECK(exc[k] <= exc[k - 1] + 1e-12);

    // deterministic per seed
    RandomDecayTable again = random_norm_decay(mixed_product(), 14, {30.0}, 40, 2, opt);
    CHECK(again.rho == m.rho);
}

TEST_CASE("random measures are affinely non-concentrated") {
    auto ifs = std::make_shared<const RestrictedProductIFS>(gauss_six());
    auto d = std::make_shared<const Disintegration>(project_alphabet(*ifs));
    std::vector<double> eps{0.05, 0.1, 0.2, 0.4};
    for (std::uint64_t s : {1u, 2u, 3u}) {
        RandomMeasure mu(ifs, d, sample_beta(*d, s, 40), 40);
        NonConcProfile p = affine_nonconcentration_profile(mu, eps, 6, s);
        CHECK(p.delta.front() < p.delta.back());
        CHECK(p.alpha > 0.0);
    }
}
