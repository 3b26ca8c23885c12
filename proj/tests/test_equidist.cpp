#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fdecay/equidist.hpp"
#include "systems.hpp"

using namespace fdecay;
using namespace fixtures;

namespace {

std::vector<long> dyadic_schedule(long lo, long hi) {
    std::vector<long> s;
    for (long N = lo; N <= hi; N *= 2) s.push_back(N);
    return s;
}

std::shared_ptr<MarkovMeasure> uniform_measure(std::shared_ptr<IFSSystem> sys) {
    return MarkovMeasure::bernoulli(sys, ProbabilityVector::uniform(sys->size()));
}

TorusPoint as_float(const TorusPoint& p) {
    TorusPoint q = p;
    q.num.clear();
    q.den = 0;
    return q;
}

}  // namespace

TEST_CASE("expanding matrices") {
    ExpandingMatrix two = ExpandingMatrix::scalar(2);
    CHECK(two.sigma_min() == doctest::Approx(2.0));
    CHECK(two.n0() == 1);
    // sigma = 1.5 would need 1.5^n >= 3
    ExpandingMatrix m({{2, 1}, {1, 3}});
    CHECK(m.det() == 5.0);
    CHECK(m.sigma_min() > 1.0);
    CHECK(std::pow(m.sigma_min(), m.n0()) >= 1.0 + 1.0 / (m.sigma_min() - 1.0) - 1e-12);
    CHECK(std::pow(m.sigma_min(), m.n0() - 1) < 1.0 + 1.0 / (m.sigma_min() - 1.0));

    CHECK_THROWS_AS(ExpandingMatrix({{2, 1}, {1, 1}}), InvalidArgument);   // hyperbolic, det 1
    CHECK_THROWS_AS(ExpandingMatrix({{1, 0}, {0, 2}}), InvalidArgument);
    CHECK_THROWS_AS(ExpandingMatrix::scalar(-1), InvalidArgument);
    CHECK_THROWS_AS(ExpandingMatrix({{2, 0}}), InvalidArgument);
    CHECK_NOTHROW(ExpandingMatrix::scalar(-2));
}

TEST_CASE("Weyl sums: fixed point and a period-two orbit") {
    for (const ExpandingMatrix& A : {ExpandingMatrix::scalar(2), ExpandingMatrix::scalar(5, 2),
                                     ExpandingMatrix({{2, 1}, {1, 3}})}) {
        const int d = A.dim();
        TorusPoint zero = TorusPoint::from_double(Vec::Zero(d), required_bits(A, 300));
        std::vector<long long> k(d, 0);
        k[0] = 3;
        for (WeylRoute r : {WeylRoute::Orbit, WeylRoute::Dual})
            for (cplx s : weyl_sums(zero, A, k, {1, 7, 100, 300}, r)) CHECK(s == cplx(1.0, 0.0));
    }

    ExpandingMatrix A = ExpandingMatrix::scalar(2);
    TorusPoint third = TorusPoint::rational({1}, 3, required_bits(A, 1000));
    for (TorusPoint p : {third, as_float(third)})
        for (WeylRoute r : {WeylRoute::Orbit, WeylRoute::Dual})
            for (long M : {1L, 10L, 500L}) CHECK(std::abs(weyl_sum(p, A, {1}, 2 * M, r) - cplx(-0.5, 0.0)) < 1e-9);
}

TEST_CASE("Weyl sums: orbit and dual-frequency routes agree") {
    std::vector<long> sch = dyadic_schedule(8, 1024);
    struct Case {
        ExpandingMatrix A;
        std::shared_ptr<IFSSystem> sys;
        std::vector<long long> k;
    };
    std::vector<Case> cases{
        {ExpandingMatrix::scalar(2), uni_example(), {1}},   // inversion branches: points are not dyadic
        {ExpandingMatrix::scalar(3), half_third(), {2}},
        {ExpandingMatrix::scalar(-3), uni_example(), {5}},
        {ExpandingMatrix({{2, 1}, {1, 3}}), lebesgue2d(), {1, -2}},
    };
    for (const Case& c : cases) {
        auto mu = uniform_measure(c.sys);
        auto pts = sample_points_mp(*mu, 21, 12, required_bits(c.A, sch.back()));
        for (const TorusPoint& p : pts) {
            auto a = weyl_sums(p, c.A, c.k, sch, WeylRoute::Orbit);
            auto b = weyl_sums(p, c.A, c.k, sch, WeylRoute::Dual);
            for (std::size_t i = 0; i < sch.size(); ++i) {
                CHECK(std::abs(a[i] - b[i]) <= 1e-9);
                CHECK(std::abs(a[i]) <= 1.0 + 1e-15);
            }
            CHECK(bridging_excess(a, sch) <= 4.0 * sch.back() * std::numeric_limits<double>::epsilon());
        }
    }

    // rational points of a 2-torus, exact routes against the float routes
    ExpandingMatrix A({{2, 1}, {1, 3}});
    TorusPoint q = TorusPoint::rational({3, -5}, 7919, required_bits(A, 512));
    auto ex = weyl_sums(q, A, {1, 1}, {512});
    auto fl = weyl_sums(as_float(q), A, {1, 1}, {512});
    auto du = weyl_sums(q, A, {1, 1}, {512}, WeylRoute::Dual);
    CHECK(std::abs(ex[0] - fl[0]) < 1e-9);
    CHECK(std::abs(ex[0] - du[0]) < 1e-9);
}

TEST_CASE("Weyl sums: precision budget") {
    ExpandingMatrix A = ExpandingMatrix::scalar(2);
    CHECK(required_bits(A, 100) == 164);
    TorusPoint p = TorusPoint::from_double(Vec::Constant(1, 0.3), 53);
    CHECK_THROWS_AS(weyl_sum(p, A, {1}, 100), PrecisionBudgetExceeded);
    CHECK_THROWS_AS(required_bits(A, 1L << 23), PrecisionBudgetExceeded);
    CHECK_THROWS_AS(weyl_sum(TorusPoint::from_double(Vec::Constant(1, 0.3), 200), A, {0}, 10), InvalidArgument);
    CHECK_THROWS_AS(weyl_sums(TorusPoint::from_double(Vec::Constant(1, 0.3), 200), A, {1}, {10, 10}),
                    InvalidArgument);

    // a double carries its own exact dyadic orbit, which dies after 53 doublings
    TorusPoint d = TorusPoint::from_double(Vec::Constant(1, 0.3), required_bits(A, 1000));
    CHECK(std::abs(weyl_sum(d, A, {1}, 1000) - cplx(1.0, 0.0)) < 0.11);
}

TEST_CASE("Weyl sums: Lebesgue-typical points") {
    ExpandingMatrix A = ExpandingMatrix::scalar(2);
    auto mu = uniform_measure(lebesgue());
    auto pts = sample_points_mp(*mu, 5, 400, required_bits(A, 1024));
    for (long N : {256L, 1024L}) {
        int inside = 0;
        for (const TorusPoint& p : pts) inside += std::abs(weyl_sum(p, A, {1}, N)) <= 5.0 / std::sqrt(double(N));
        CHECK(inside >= 0.95 * pts.size());
    }
}

TEST_CASE("high-precision samples stay on the attractor") {
    // Cantor points under x -> 3x mod 1 never enter the middle third
    auto mu = uniform_measure(cantor());
    const long N = 200;
    ExpandingMatrix A = ExpandingMatrix::scalar(3);
    auto pts = sample_points_mp(*mu, 3, 20, required_bits(A, N));
    for (TorusPoint p : pts) {
        Mpfr y = p.x[0];
        for (long n = 0; n < N; ++n) {
            double v = y.to_double();
            CHECK((v <= 1.0 / 3 + 1e-12 || v >= 2.0 / 3 - 1e-12));
            mpfr_mul_ui(y.get(), y.get(), 3, MPFR_RNDN);
            mpfr_frac(y.get(), y.get(), MPFR_RNDN);
        }
    }
    auto again = sample_points_mp(*mu, 3, 20, required_bits(A, N));
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK(mpfr_equal_p(pts[i].x[0].get(), again[i].x[0].get()));
}

TEST_CASE("r_N: Lebesgue, Dirac and Cantor") {
    std::vector<long> sch = dyadic_schedule(16, 1024);
    auto lebesgue_mu = uniform_measure(lebesgue());
    auto leb = r_N_estimate(*lebesgue_mu, ExpandingMatrix::scalar(2), {1}, sch, 400, 1);
    for (const RNEstimate& e : leb) {
        CHECK(std::abs(e.r - 1.0 / e.N) <= e.band);
        CHECK(e.r >= 0.0);
        CHECK(e.r <= 1.0);
    }
    // coverage of the 3 sigma band over many seeds; about 0.3% misses expected
    int misses = 0, total = 0;
    double zsum = 0.0;
    for (std::uint64_t seed = 100; seed < 120; ++seed)
        for (const RNEstimate& e : r_N_estimate(*lebesgue_mu, ExpandingMatrix::scalar(2), {1}, sch, 400, seed)) {
            double z = 3.0 * (e.r - 1.0 / e.N) / e.band;
            misses += std::abs(z) > 3.0;
            zsum += z;
            ++total;
        }
    CHECK(misses <= 3);
    CHECK(std::abs(zsum / total) < 0.3);

    ExpandingMatrix A = ExpandingMatrix::scalar(3);
    std::vector<TorusPoint> dirac(5, TorusPoint::from_double(Vec::Zero(1), required_bits(A, 1024)));
    for (const RNEstimate& e : r_N_estimate(dirac, A, {1}, sch)) {
        CHECK(e.r == 1.0);
        CHECK(e.band == 0.0);
    }

    auto can = r_N_estimate(*uniform_measure(cantor()), A, {1}, sch, 200, 9);
    CHECK(can.back().r - can.back().band > 0.1);
    CHECK(can.back().r > 0.5 * can.front().r);
}

TEST_CASE("normality verdicts") {
    std::vector<long> sch = dyadic_schedule(16, 2048);
    NormalityReport leb =
        normality_test(*uniform_measure(lebesgue()), ExpandingMatrix::scalar(2), {{1}, {2}, {3}}, sch, 200, 7);
    CHECK(leb.n0 == 1);
    for (const NormalityRow& r : leb.rows) {
        CHECK(r.verdict == Verdict::ConsistentWithNormality);
        CHECK(r.bridging_excess <= 1e-9);
        CHECK(r.trajectories.size() == 200);
        CHECK(r.partial_sum.size() == sch.size());
        // sum over a dyadic schedule of 1/N^2 stays below 2/16^2
        CHECK(r.partial_sum.back() < 4.0 / (16.0 * 16.0));
    }

    NormalityReport can = normality_test(*uniform_measure(cantor()), ExpandingMatrix::scalar(3), {{1}}, sch, 200, 7);
    CHECK(can.rows[0].verdict == Verdict::Resonant);
    CHECK(can.rows[0].bridging_excess <= 1e-9);

    NormalityReport ht =
        normality_test(*uniform_measure(half_third()), ExpandingMatrix::scalar(2), {{1}, {2}, {3}}, sch, 200, 7);
    for (const NormalityRow& r : ht.rows) CHECK(r.verdict == Verdict::ConsistentWithNormality);

    // a point fixed by A always reads as resonant
    ExpandingMatrix A = ExpandingMatrix::scalar(2);
    std::vector<TorusPoint> zero(3, TorusPoint::from_double(Vec::Zero(1), required_bits(A, sch.back())));
    CHECK(normality_test(zero, A, {{1}}, sch).rows[0].verdict == Verdict::Resonant);
    CHECK(verdict_name(Verdict::Inconclusive) == "inconclusive");
}

TEST_CASE("normality test is deterministic in the seed") {
    std::vector<long> sch = dyadic_schedule(16, 256);
    auto mu = uniform_measure(half_third());
    NormalityOptions two;
    two.workers = 2;
    NormalityReport a = normality_test(*mu, ExpandingMatrix::scalar(2), {{1}}, sch, 50, 11);
    NormalityReport b = normality_test(*mu, ExpandingMatrix::scalar(2), {{1}}, sch, 50, 11, two);
    for (std::size_t i = 0; i < sch.size(); ++i) CHECK(a.rows[0].rn[i].r == b.rows[0].rn[i].r);
    NormalityReport c = normality_test(*mu, ExpandingMatrix::scalar(2), {{1}}, sch, 50, 12);
    CHECK(a.rows[0].rn[0].r != c.rows[0].rn[0].r);
}
