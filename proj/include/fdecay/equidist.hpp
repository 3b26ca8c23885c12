#ifndef FDECAY_EQUIDIST_HPP
#define FDECAY_EQUIDIST_HPP

#include "fdecay/measures.hpp"

#include <mpfr.h>

#include <string>

namespace fdecay {

// Integer matrix acting on the torus by x -> A x mod 1.
class ExpandingMatrix {
public:
    // Throws InvalidArgument unless A is square with smallest singular value
    // > 1 and |det A| >= 2.
    explicit ExpandingMatrix(std::vector<std::vector<long long>> a);
    static ExpandingMatrix scalar(long long a, int d = 1);

    int dim() const { return static_cast<int>(a_.size()); }
    long long operator()(int i, int j) const { return a_[i][j]; }
    const std::vector<std::vector<long long>>& rows() const { return a_; }
    double sigma_min() const { return sigma_min_; }
    double norm() const { return norm_; }      // operator 2-norm
    double det() const { return det_; }
    // Smallest n with sigma_min^n >= 1 + 1/(sigma_min - 1).
    int n0() const { return n0_; }

private:
    std::vector<std::vector<long long>> a_;
    double sigma_min_ = 0.0;
    double norm_ = 0.0;
    double det_ = 0.0;
    int n0_ = 1;
};

// Multiple-precision float with its own precision; thin RAII over mpfr_t.
class Mpfr {
public:
    explicit Mpfr(unsigned bits = 64) { mpfr_init2(v_, bits); mpfr_set_zero(v_, 1); }
    Mpfr(const Mpfr& o) { mpfr_init2(v_, mpfr_get_prec(o.v_)); mpfr_set(v_, o.v_, MPFR_RNDN); }
    Mpfr& operator=(const Mpfr& o) {
        if (this != &o) {
            mpfr_set_prec(v_, mpfr_get_prec(o.v_));
            mpfr_set(v_, o.v_, MPFR_RNDN);
        }
        return *this;
    }
    ~Mpfr() { mpfr_clear(v_); }
    mpfr_ptr get() { return v_; }
    mpfr_srcptr get() const { return v_; }
    unsigned bits() const { return static_cast<unsigned>(mpfr_get_prec(v_)); }
    double to_double() const { return mpfr_get_d(v_, MPFR_RNDN); }

private:
    mpfr_t v_;
};

// Point of the torus carried at a fixed binary precision. Rational points
// also keep num/den so the orbit route runs in exact integer arithmetic.
struct TorusPoint {
    std::vector<Mpfr> x;
    unsigned bits = 64;
    std::vector<long long> num;
    long long den = 0;      // 0: not rational

    bool is_rational() const { return den > 0; }

    int dim() const { return static_cast<int>(x.size()); }
    static TorusPoint from_double(const Vec& v, unsigned bits);
    static TorusPoint rational(const std::vector<long long>& num, long long den, unsigned bits);
};

// Precision an orbit of length N needs: N log2|A| + 64 bits.
unsigned required_bits(const ExpandingMatrix& A, long N);
inline constexpr unsigned kMaxOrbitBits = 1u << 22;

// Points of a self-similar measure exact to `bits`. Map coefficients are
// read as the nearest fraction with denominator <= 1e6 when one lies within
// 1e-13, so thirds and fifths stay exact.
std::vector<TorusPoint> sample_points_mp(const MarkovMeasure& mu, std::uint64_t seed, std::size_t n, unsigned bits);

enum class WeylRoute { Orbit, Dual };

// S_M = (1/M) sum_{n<M} e(k . A^n x) for every M of the increasing schedule.
std::vector<cplx> weyl_sums(const TorusPoint& x, const ExpandingMatrix& A, const std::vector<long long>& k,
                            const std::vector<long>& schedule, WeylRoute route = WeylRoute::Orbit);
cplx weyl_sum(const TorusPoint& x, const ExpandingMatrix& A, const std::vector<long long>& k, long N,
              WeylRoute route = WeylRoute::Orbit);

// |N S_N - N_j S_{N_j}| <= N - N_j over every schedule pair; returns the
// largest excess (<= 0 when the bound holds).
double bridging_excess(const std::vector<cplx>& sums, const std::vector<long>& schedule);

struct RNEstimate {
    long N = 0;
    double r = 0.0;      // mean |S_N|^2
    double band = 0.0;   // 3 sigma
};

std::vector<RNEstimate> r_N_estimate(const std::vector<TorusPoint>& points, const ExpandingMatrix& A,
                                     const std::vector<long long>& k, const std::vector<long>& schedule,
                                     int workers = 1);
std::vector<RNEstimate> r_N_estimate(const MarkovMeasure& mu, const ExpandingMatrix& A,
                                     const std::vector<long long>& k, const std::vector<long>& schedule,
                                     std::size_t samples, std::uint64_t seed, int workers = 1);

enum class Verdict { ConsistentWithNormality, Resonant, Inconclusive };
std::string verdict_name(Verdict v);

struct NormalityOptions {
    double rn_bound = 2.0;       // r_N sqrt(N) must stay below this ...
    double max_weyl = 0.1;       // ... and every sampled |S_{N_max}| below this
    int workers = 1;
};

struct NormalityRow {
    std::vector<long long> k;
    std::vector<RNEstimate> rn;
    std::vector<double> partial_sum;     // sum of r_N / N over the schedule so far
    double max_scaled = 0.0;             // max over N of r_N sqrt(N)
    double max_weyl = 0.0;               // max over samples of |S_{N_max}|
    double bridging_excess = 0.0;        // max over samples and pairs
    std::vector<std::vector<cplx>> trajectories;   // [sample][schedule index]
    Verdict verdict = Verdict::Inconclusive;
};

struct NormalityReport {
    std::vector<long> schedule;
    std::vector<NormalityRow> rows;
    int n0 = 1;
};

NormalityReport normality_test(const std::vector<TorusPoint>& points, const ExpandingMatrix& A,
                               const std::vector<std::vector<long long>>& k_set, const std::vector<long>& schedule,
                               const NormalityOptions& opt = {});
NormalityReport normality_test(const MarkovMeasure& mu, const ExpandingMatrix& A,
                               const std::vector<std::vector<long long>>& k_set, const std::vector<long>& schedule,
                               std::size_t samples, std::uint64_t seed, const NormalityOptions& opt = {});

}  // namespace fdecay

#endif
