#include "fdecay/equidist.hpp"

#include <Eigen/SVD>
#include <gmp.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace fdecay {

namespace {

double log2_growth(const ExpandingMatrix& A) {
    // max row sum bounds error growth in the max norm
    double rs = 0.0;
    for (const auto& row : A.rows()) {
        double s = 0.0;
        for (long long v : row) s += std::abs(static_cast<double>(v));
        rs = std::max(rs, s);
    }
    return std::log2(std::max(rs, A.norm()));
}

long long mod_floor(__int128 v, long long m) {
    __int128 r = v % m;
    if (r < 0) r += m;
    return static_cast<long long>(r);
}

void reduce_unit(mpfr_ptr v) {
    mpfr_frac(v, v, MPFR_RNDN);
    if (mpfr_sgn(v) < 0) mpfr_add_ui(v, v, 1, MPFR_RNDN);
    if (mpfr_cmp_ui(v, 1) >= 0) mpfr_sub_ui(v, v, 1, MPFR_RNDN);
}

void set_coefficient(mpfr_ptr out, double v) {
    long long num, den;
    if (snap_fraction(v, num, den)) {
        mpfr_set_si(out, num, MPFR_RNDN);
        mpfr_div_si(out, out, den, MPFR_RNDN);
    } else {
        mpfr_set_d(out, v, MPFR_RNDN);
    }
}

void check_schedule(const std::vector<long>& schedule) {
    if (schedule.empty()) throw InvalidArgument("empty N schedule");
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        if (schedule[i] < 1) throw InvalidArgument("schedule entries must be >= 1");
        if (i > 0 && schedule[i] <= schedule[i - 1]) throw InvalidArgument("schedule must be increasing");
    }
}

void check_frequency(const ExpandingMatrix& A, const std::vector<long long>& k) {
    if (static_cast<int>(k.size()) != A.dim()) throw InvalidArgument("frequency dimension differs from A");
    if (std::all_of(k.begin(), k.end(), [](long long v) { return v == 0; }))
        throw InvalidArgument("frequency must be nonzero");
}

// Record partial sums at schedule points as the orbit advances.
struct Accumulator {
    const std::vector<long>& schedule;
    std::vector<cplx> out;
    cplx sum = 0.0;
    std::size_t next = 0;

    void add(long n, double phase) {
        sum += std::polar(1.0, kTwoPi * phase);
        if (n + 1 == schedule[next]) {
            out.push_back(sum / static_cast<double>(n + 1));
            ++next;
        }
    }
};

std::vector<cplx> orbit_rational(const TorusPoint& x, const ExpandingMatrix& A, const std::vector<long long>& k,
                                 const std::vector<long>& schedule) {
    const int d = A.dim();
    const long long q = x.den;
    std::vector<long long> y(d), t(d);
    for (int i = 0; i < d; ++i) y[i] = mod_floor(x.num[i], q);
    Accumulator acc{schedule, {}};
    for (long n = 0; n < schedule.back(); ++n) {
        __int128 kx = 0;
        for (int i = 0; i < d; ++i) kx += static_cast<__int128>(k[i]) * y[i];
        acc.add(n, static_cast<double>(mod_floor(kx, q)) / static_cast<double>(q));
        for (int i = 0; i < d; ++i) {
            __int128 s = 0;
            for (int j = 0; j < d; ++j) s += static_cast<__int128>(A(i, j)) * y[j];
            t[i] = mod_floor(s, q);
        }
        y.swap(t);
    }
    return acc.out;
}

std::vector<cplx> dual_rational(const TorusPoint& x, const ExpandingMatrix& A, const std::vector<long long>& k,
                                const std::vector<long>& schedule) {
    const int d = A.dim();
    const long long q = x.den;
    std::vector<long long> kn(d), t(d);
    for (int i = 0; i < d; ++i) kn[i] = mod_floor(k[i], q);
    Accumulator acc{schedule, {}};
    for (long n = 0; n < schedule.back(); ++n) {
        __int128 kx = 0;
        for (int i = 0; i < d; ++i) kx += static_cast<__int128>(kn[i]) * mod_floor(x.num[i], q);
        acc.add(n, static_cast<double>(mod_floor(kx, q)) / static_cast<double>(q));
        for (int j = 0; j < d; ++j) {
            __int128 s = 0;
            for (int i = 0; i < d; ++i) s += static_cast<__int128>(A(i, j)) * kn[i];
            t[j] = mod_floor(s, q);
        }
        kn.swap(t);
    }
    return acc.out;
}

std::vector<cplx> orbit_float(const TorusPoint& x, const ExpandingMatrix& A, const std::vector<long long>& k,
                              const std::vector<long>& schedule) {
    const int d = A.dim();
    const double growth = log2_growth(A);
    const long N = schedule.back();
    std::vector<Mpfr> y = x.x, t(d, Mpfr(x.bits)), term(d, Mpfr(x.bits));
    for (auto& v : y) reduce_unit(v.get());
    Accumulator acc{schedule, {}};
    long prec = x.bits;
    for (long n = 0; n < N; ++n) {
        double phase = 0.0;
        for (int i = 0; i < d; ++i) phase += static_cast<double>(k[i]) * y[i].to_double();
        acc.add(n, phase - std::floor(phase));
        if (n + 1 == N) break;
        // bits beyond what the remaining steps can expose are dead weight
        if ((n & 31) == 0) {
            long need = static_cast<long>(std::ceil((N - n) * growth)) + 96;
            if (need < prec) {
                prec = need;
                for (int i = 0; i < d; ++i) {
                    mpfr_prec_round(y[i].get(), prec, MPFR_RNDN);
                    mpfr_set_prec(t[i].get(), prec);
                    mpfr_set_prec(term[i].get(), prec);
                }
            }
        }
        for (int i = 0; i < d; ++i) {
            mpfr_set_zero(t[i].get(), 1);
            for (int j = 0; j < d; ++j) {
                if (A(i, j) == 0) continue;
                mpfr_mul_si(term[i].get(), y[j].get(), static_cast<long>(A(i, j)), MPFR_RNDN);
                mpfr_add(t[i].get(), t[i].get(), term[i].get(), MPFR_RNDN);
            }
            reduce_unit(t[i].get());
        }
        std::swap(y, t);
    }
    return acc.out;
}

std::vector<cplx> dual_float(const TorusPoint& x, const ExpandingMatrix& A, const std::vector<long long>& k,
                             const std::vector<long>& schedule) {
    const int d = A.dim();
    std::vector<__mpz_struct> kn(d), t(d);
    for (int i = 0; i < d; ++i) {
        mpz_init_set_si(&kn[i], static_cast<long>(k[i]));
        mpz_init(&t[i]);
    }
    mpz_t prod;
    mpz_init(prod);
    Mpfr acc_v(x.bits + 64), term(x.bits + 64);
    Accumulator acc{schedule, {}};
    for (long n = 0; n < schedule.back(); ++n) {
        mpfr_set_zero(acc_v.get(), 1);
        for (int i = 0; i < d; ++i) {
            mpfr_mul_z(term.get(), x.x[i].get(), &kn[i], MPFR_RNDN);
            mpfr_add(acc_v.get(), acc_v.get(), term.get(), MPFR_RNDN);
        }
        reduce_unit(acc_v.get());
        acc.add(n, acc_v.to_double());
        for (int j = 0; j < d; ++j) {
            mpz_set_ui(&t[j], 0);
            for (int i = 0; i < d; ++i) {
                mpz_mul_si(prod, &kn[i], static_cast<long>(A(i, j)));
                mpz_add(&t[j], &t[j], prod);
            }
        }
        for (int i = 0; i < d; ++i) mpz_swap(&kn[i], &t[i]);
    }
    for (int i = 0; i < d; ++i) {
        mpz_clear(&kn[i]);
        mpz_clear(&t[i]);
    }
    mpz_clear(prod);
    return acc.out;
}

}  // namespace

ExpandingMatrix::ExpandingMatrix(std::vector<std::vector<long long>> a) : a_(std::move(a)) {
    const int d = static_cast<int>(a_.size());
    if (d == 0) throw InvalidArgument("empty matrix");
    Mat m(d, d);
    for (int i = 0; i < d; ++i) {
        if (static_cast<int>(a_[i].size()) != d) throw InvalidArgument("matrix must be square");
        for (int j = 0; j < d; ++j) m(i, j) = static_cast<double>(a_[i][j]);
    }
    Eigen::JacobiSVD<Mat> svd(m);
    sigma_min_ = svd.singularValues().minCoeff();
    norm_ = svd.singularValues().maxCoeff();
    det_ = std::round(m.determinant());
    if (!(sigma_min_ > 1.0)) throw InvalidArgument("smallest singular value must exceed 1");
    if (std::abs(det_) < 2.0) throw InvalidArgument("|det A| must be at least 2");
    const double target = 1.0 + 1.0 / (sigma_min_ - 1.0);
    n0_ = std::max(1, static_cast<int>(std::ceil(std::log(target) / std::log(sigma_min_) - 1e-12)));
}

ExpandingMatrix ExpandingMatrix::scalar(long long a, int d) {
    std::vector<std::vector<long long>> m(d, std::vector<long long>(d, 0));
    for (int i = 0; i < d; ++i) m[i][i] = a;
    return ExpandingMatrix(std::move(m));
}

TorusPoint TorusPoint::from_double(const Vec& v, unsigned bits) {
    TorusPoint p;
    p.bits = bits;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        Mpfr c(bits);
        mpfr_set_d(c.get(), v[i], MPFR_RNDN);
        reduce_unit(c.get());
        p.x.push_back(c);
    }
    return p;
}

TorusPoint TorusPoint::rational(const std::vector<long long>& num, long long den, unsigned bits) {
    if (den <= 0) throw InvalidArgument("denominator must be positive");
    TorusPoint p;
    p.bits = bits;
    p.num = num;
    p.den = den;
    for (long long v : num) {
        Mpfr c(bits);
        mpfr_set_si(c.get(), static_cast<long>(v), MPFR_RNDN);
        mpfr_div_si(c.get(), c.get(), static_cast<long>(den), MPFR_RNDN);
        reduce_unit(c.get());
        p.x.push_back(c);
    }
    return p;
}

unsigned required_bits(const ExpandingMatrix& A, long N) {
    double b = static_cast<double>(N) * std::log2(A.norm()) + 64.0;
    if (b > static_cast<double>(kMaxOrbitBits))
        throw PrecisionBudgetExceeded("orbit of length " + std::to_string(N) + " needs " +
                                      std::to_string(static_cast<long long>(b)) + " bits");
    return static_cast<unsigned>(std::ceil(b));
}

std::vector<TorusPoint> sample_points_mp(const MarkovMeasure& mu, std::uint64_t seed, std::size_t n, unsigned bits) {
    const IFSSystem& sys = mu.system();
    const int d = sys.dim();
    const unsigned work = bits + 32;

    // per map: linear part (ratio * O, or lambda * O for inversions), shift, centre
    struct MpMap {
        bool inversion = false;
        std::vector<Mpfr> lin, shift, centre;
    };
    std::vector<MpMap> maps;
    double rmax = 0.0;
    Vec mid = Vec::Constant(d, 0.5);
    const double cube_radius = 0.5 * std::sqrt(static_cast<double>(d));
    for (const ConformalMap& f : sys.maps()) {
        MpMap m;
        Mat lin;
        Vec shift, centre = Vec::Zero(d);
        if (const Similitude* s = f.similitude()) {
            lin = s->ratio * s->rotation.matrix();
            shift = s->translation;
            rmax = std::max(rmax, std::abs(s->ratio));
        } else if (const MobiusMap* mb = f.mobius()) {
            m.inversion = true;
            lin = mb->lambda * mb->rotation.matrix();
            shift = mb->t;
            centre = mb->u;
            rmax = std::max(rmax, f.sup_scale(mid, cube_radius));
        } else {
            throw InvalidArgument("high-precision sampling needs similitude or inversion maps");
        }
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
                m.lin.emplace_back(work);
                set_coefficient(m.lin.back().get(), lin(i, j));
            }
            m.shift.emplace_back(work);
            set_coefficient(m.shift.back().get(), shift[i]);
            m.centre.emplace_back(work);
            set_coefficient(m.centre.back().get(), centre[i]);
        }
        maps.push_back(std::move(m));
    }
    if (!(rmax < 1.0)) throw InvalidArgument("maps are not uniformly contracting on the unit cube");
    const int length = static_cast<int>(std::ceil((bits + 8.0) * std::log(2.0) / -std::log(rmax))) + 1;

    std::vector<Word> words = mu.sample_words(seed, n, length);
    std::vector<TorusPoint> out(n);
    std::vector<Mpfr> y(d, Mpfr(work)), v(d, Mpfr(work)), tmp(d, Mpfr(work));
    Mpfr norm2(work), sq(work);
    for (std::size_t s = 0; s < n; ++s) {
        for (int i = 0; i < d; ++i) mpfr_set_d(y[i].get(), 0.5, MPFR_RNDN);
        const auto& sym = words[s].symbols();
        for (int l = length - 1; l >= 0; --l) {
            const MpMap& m = maps[sym[l]];
            for (int i = 0; i < d; ++i) mpfr_sub(v[i].get(), y[i].get(), m.centre[i].get(), MPFR_RNDN);
            if (m.inversion) {
                mpfr_set_zero(norm2.get(), 1);
                for (int i = 0; i < d; ++i) {
                    mpfr_sqr(sq.get(), v[i].get(), MPFR_RNDN);
                    mpfr_add(norm2.get(), norm2.get(), sq.get(), MPFR_RNDN);
                }
                for (int i = 0; i < d; ++i) mpfr_div(v[i].get(), v[i].get(), norm2.get(), MPFR_RNDN);
            }
            for (int i = 0; i < d; ++i) {
                mpfr_set(tmp[i].get(), m.shift[i].get(), MPFR_RNDN);
                for (int j = 0; j < d; ++j) {
                    mpfr_mul(sq.get(), m.lin[i * d + j].get(), v[j].get(), MPFR_RNDN);
                    mpfr_add(tmp[i].get(), tmp[i].get(), sq.get(), MPFR_RNDN);
                }
            }
            std::swap(y, tmp);
        }
        TorusPoint p;
        p.bits = bits;
        for (int i = 0; i < d; ++i) {
            Mpfr c(bits);
            mpfr_set(c.get(), y[i].get(), MPFR_RNDN);
            reduce_unit(c.get());
            p.x.push_back(c);
        }
        out[s] = std::move(p);
    }
    return out;
}

std::vector<cplx> weyl_sums(const TorusPoint& x, const ExpandingMatrix& A, const std::vector<long long>& k,
                            const std::vector<long>& schedule, WeylRoute route) {
    check_schedule(schedule);
    check_frequency(A, k);
    if (x.dim() != A.dim()) throw InvalidArgument("point dimension differs from A");
    if (x.is_rational()) {
        if (static_cast<int>(x.num.size()) != A.dim()) throw InvalidArgument("rational point dimension differs from A");
        if (x.den > (1LL << 40)) throw InvalidArgument("denominator too large for exact orbits");
        return route == WeylRoute::Orbit ? orbit_rational(x, A, k, schedule) : dual_rational(x, A, k, schedule);
    }
    unsigned need = required_bits(A, schedule.back());
    if (x.bits < need)
        throw PrecisionBudgetExceeded("point carries " + std::to_string(x.bits) + " bits, orbit needs " +
                                      std::to_string(need));
    return route == WeylRoute::Orbit ? orbit_float(x, A, k, schedule) : dual_float(x, A, k, schedule);
}

cplx weyl_sum(const TorusPoint& x, const ExpandingMatrix& A, const std::vector<long long>& k, long N,
              WeylRoute route) {
    return weyl_sums(x, A, k, {N}, route).front();
}

double bridging_excess(const std::vector<cplx>& sums, const std::vector<long>& schedule) {
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < sums.size(); ++j)
        for (std::size_t i = j + 1; i < sums.size(); ++i) {
            double N = static_cast<double>(schedule[i]), Nj = static_cast<double>(schedule[j]);
            worst = std::max(worst, std::abs(N * sums[i] - Nj * sums[j]) - (N - Nj));
        }
    return worst;
}

namespace {

std::vector<std::vector<cplx>> all_sums(const std::vector<TorusPoint>& points, const ExpandingMatrix& A,
                                        const std::vector<long long>& k, const std::vector<long>& schedule,
                                        int workers) {
    std::vector<std::vector<cplx>> s(points.size());
    parallel_for(points.size(), workers, [&](std::size_t i) { s[i] = weyl_sums(points[i], A, k, schedule); });
    return s;
}

std::vector<RNEstimate> estimates(const std::vector<std::vector<cplx>>& sums, const std::vector<long>& schedule) {
    std::vector<RNEstimate> out;
    const double n = static_cast<double>(sums.size());
    for (std::size_t j = 0; j < schedule.size(); ++j) {
        double m = 0.0, m2 = 0.0;
        for (const auto& s : sums) {
            double v = std::norm(s[j]);
            m += v;
            m2 += v * v;
        }
        m /= n;
        double var = sums.size() > 1 ? std::max(0.0, (m2 - n * m * m) / (n - 1.0)) : 0.0;
        out.push_back({schedule[j], std::clamp(m, 0.0, 1.0), 3.0 * std::sqrt(var / n)});
    }
    return out;
}

}  // namespace

std::vector<RNEstimate> r_N_estimate(const std::vector<TorusPoint>& points, const ExpandingMatrix& A,
                                     const std::vector<long long>& k, const std::vector<long>& schedule,
                                     int workers) {
    if (points.empty()) throw InvalidArgument("no sample points");
    return estimates(all_sums(points, A, k, schedule, workers), schedule);
}

std::vector<RNEstimate> r_N_estimate(const MarkovMeasure& mu, const ExpandingMatrix& A,
                                     const std::vector<long long>& k, const std::vector<long>& schedule,
                                     std::size_t samples, std::uint64_t seed, int workers) {
    check_schedule(schedule);
    auto pts = sample_points_mp(mu, seed, samples, required_bits(A, schedule.back()));
    return r_N_estimate(pts, A, k, schedule, workers);
}

std::string verdict_name(Verdict v) {
    switch (v) {
        case Verdict::ConsistentWithNormality: return "consistent-with-normality";
        case Verdict::Resonant: return "resonant";
        default: return "inconclusive";
    }
}

NormalityReport normality_test(const std::vector<TorusPoint>& points, const ExpandingMatrix& A,
                               const std::vector<std::vector<long long>>& k_set, const std::vector<long>& schedule,
                               const NormalityOptions& opt) {
    check_schedule(schedule);
    if (points.empty()) throw InvalidArgument("no sample points");
    NormalityReport rep;
    rep.schedule = schedule;
    rep.n0 = A.n0();
    for (const auto& k : k_set) {
        NormalityRow row;
        row.k = k;
        row.trajectories = all_sums(points, A, k, schedule, opt.workers);
        row.rn = estimates(row.trajectories, schedule);
        double partial = 0.0;
        for (const RNEstimate& e : row.rn) {
            partial += e.r / static_cast<double>(e.N);
            row.partial_sum.push_back(partial);
            row.max_scaled = std::max(row.max_scaled, e.r * std::sqrt(static_cast<double>(e.N)));
        }
        row.bridging_excess = -std::numeric_limits<double>::infinity();
        for (const auto& s : row.trajectories) {
            row.max_weyl = std::max(row.max_weyl, std::abs(s.back()));
            if (s.size() > 1) row.bridging_excess = std::max(row.bridging_excess, bridging_excess(s, schedule));
        }
        const RNEstimate& last = row.rn.back();
        double root = std::sqrt(static_cast<double>(last.N));
        if (row.max_scaled <= opt.rn_bound && row.max_weyl < opt.max_weyl)
            row.verdict = Verdict::ConsistentWithNormality;
        else if ((last.r - last.band) * root > opt.rn_bound)
            row.verdict = Verdict::Resonant;
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

NormalityReport normality_test(const MarkovMeasure& mu, const ExpandingMatrix& A,
                               const std::vector<std::vector<long long>>& k_set, const std::vector<long>& schedule,
                               std::size_t samples, std::uint64_t seed, const NormalityOptions& opt) {
    check_schedule(schedule);
    auto pts = sample_points_mp(mu, seed, samples, required_bits(A, schedule.back()));
    return normality_test(pts, A, k_set, schedule, opt);
}

}  // namespace fdecay
