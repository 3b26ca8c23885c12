#ifndef FDECAY_COMMON_HPP
#define FDECAY_COMMON_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace fdecay {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

// Every failure the library reports derives from Error; the kind string is
// what the CLI prints and what tests match on.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define FDECAY_ERROR(Name)                                                   \
    struct Name : Error {                                                    \
        explicit Name(const std::string& w) : Error(#Name, w) {}             \
    }

FDECAY_ERROR(InvalidArgument);
FDECAY_ERROR(InadmissibleWord);
FDECAY_ERROR(EmptyAdmissibleSet);
FDECAY_ERROR(NonPrimitiveSubshift);
FDECAY_ERROR(IncompatibleEvaluator);
FDECAY_ERROR(TolTooTight);
FDECAY_ERROR(DegenerateFit);
FDECAY_ERROR(ThresholdOutOfRange);
FDECAY_ERROR(DecayGapViolated);
FDECAY_ERROR(WrongLength);
FDECAY_ERROR(WordBudgetExceeded);
FDECAY_ERROR(GridMismatch);
FDECAY_ERROR(BandOutOfRange);
FDECAY_ERROR(PrefixTooShort);
FDECAY_ERROR(PrecisionBudgetExceeded);
FDECAY_ERROR(ConfigError);

#undef FDECAY_ERROR

// Raised by the non-conformal hypothesis checker; `which` is 1, 2 or 3.
struct HypothesisViolation : Error {
    HypothesisViolation(int which, const std::string& w)
        : Error("HypothesisViolation", "(" + std::to_string(which) + ") " + w),
          which(which) {}
    int which;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    double width() const { return hi - lo; }
    double mid() const { return 0.5 * (lo + hi); }
    bool contains(double x) const { return lo <= x && x <= hi; }
};

// Axis-aligned box in R^d.
struct Box {
    Vec lo;
    Vec hi;

    static Box unit(int d) { return {Vec::Zero(d), Vec::Ones(d)}; }
    static Box around(const Vec& c, double r) {
        return {c.array() - r, c.array() + r};
    }
    int dim() const { return static_cast<int>(lo.size()); }
    Vec center() const { return 0.5 * (lo + hi); }
    double diameter() const { return (hi - lo).norm(); }
    double distance(const Box& o) const {
        double s = 0.0;
        for (int i = 0; i < dim(); ++i) {
            double g = std::max({0.0, o.lo[i] - hi[i], lo[i] - o.hi[i]});
            s += g * g;
        }
        return std::sqrt(s);
    }
    double distance_to(const Vec& x) const {
        double s = 0.0;
        for (int i = 0; i < dim(); ++i) {
            double g = std::max({0.0, lo[i] - x[i], x[i] - hi[i]});
            s += g * g;
        }
        return std::sqrt(s);
    }
    double farthest_from(const Vec& x) const {
        double s = 0.0;
        for (int i = 0; i < dim(); ++i) {
            double g = std::max(std::abs(x[i] - lo[i]), std::abs(x[i] - hi[i]));
            s += g * g;
        }
        return std::sqrt(s);
    }
    Box hull(const Box& o) const { return {lo.cwiseMin(o.lo), hi.cwiseMax(o.hi)}; }
};

// splitmix64 step; used to derive independent per-task seeds so results do
// not depend on how work is split between threads.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Uniform double in [0,1) from the top 53 bits; avoids the
// implementation-defined std::uniform_real_distribution so CSV output is
// identical across standard libraries.
template <class Rng>
double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <class Rng>
double standard_normal(Rng& rng) {
    double u1 = uniform01(rng);
    double u2 = uniform01(rng);
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

template <class Rng>
Vec random_unit_vector(Rng& rng, int d) {
    Vec v(d);
    do {
        for (int i = 0; i < d; ++i) v[i] = standard_normal(rng);
    } while (v.norm() < 1e-12);
    return v / v.norm();
}

// Runs body(i) for i in [0,n) on up to `workers` threads. Each index must
// write only to its own output slot.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& body);

// Fraction num/den with den <= 1e6 equal to r up to relative 1e-15, if any.
bool snap_fraction(double r, long long& num, long long& den);

// Deterministic direction grid on the unit sphere (half sphere, since every
// quantity we sweep is symmetric under e -> -e).
std::vector<Vec> direction_grid(int d, int count);

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    double rss = 0.0;
};

// Ordinary least squares y ~ a + b x; throws DegenerateFit if fewer than two
// distinct abscissae.
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace fdecay

#endif
