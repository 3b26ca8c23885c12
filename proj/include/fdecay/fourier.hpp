#ifndef FDECAY_FOURIER_HPP
#define FDECAY_FOURIER_HPP

#include "fdecay/measures.hpp"

#include <memory>
#include <string>

namespace fdecay {

struct Evaluator {
    enum class Method { FunctionalEquation, ProductFormula, MonteCarlo };
    Method method = Method::FunctionalEquation;
    double tol = 1e-8;
    std::size_t samples = 1000000;
    std::uint64_t seed = 0;
    std::size_t word_budget = 10000000;

    static Evaluator functional(double tol) { return {Method::FunctionalEquation, tol}; }
    static Evaluator product(double tol) { return {Method::ProductFormula, tol}; }
    static Evaluator monte_carlo(std::size_t n, std::uint64_t seed) {
        Evaluator e;
        e.method = Method::MonteCarlo;
        e.samples = n;
        e.seed = seed;
        return e;
    }
    std::string name() const;
};

// value with |value - true transform| <= error (a 3 sigma band for Monte Carlo).
struct FourierValue {
    cplx value;
    double error = 0.0;
};

// Precomputes everything an evaluator needs for one measure (tail
// barycentres, variances, Monte Carlo samples); eval() is then pure and
// thread-safe.
class FourierEngine {
public:
    FourierEngine(std::shared_ptr<const Measure> mu, Evaluator ev);

    FourierValue eval(const Vec& xi) const;
    const Evaluator& evaluator() const { return ev_; }
    int dim() const { return mu_->dim(); }

    // Nodes expanded by the last functional-equation call on this thread.
    static std::size_t last_node_count();

private:
    FourierValue eval_similar(const Vec& xi) const;
    FourierValue eval_conformal(const Vec& xi) const;
    FourierValue eval_product(const Vec& xi) const;
    FourierValue eval_mc(const Vec& xi) const;

    std::shared_ptr<const Measure> mu_;
    const MarkovMeasure* markov_ = nullptr;
    Evaluator ev_;
    // tail law after each chain state: barycentre, E|y-m|^2, support radius
    std::vector<Vec> bary_;
    std::vector<double> var_;
    std::vector<double> rad_;
    double bary_slack_ = 0.0;     // |approximate - true barycentre| for conformal systems
    double c_lin_ = 0.0;
    bool merge_counts_ = false;
    std::vector<Mat> lin_;        // per letter linear part (similitudes)
    std::vector<Vec> shift_;
    std::vector<double> ratio_;
    std::vector<Vec> samples_;
};

FourierValue fourier_eval(std::shared_ptr<const Measure> mu, const Vec& xi, const Evaluator& ev);

struct DecayBand {
    double t_lo = 0.0;
    double t_hi = 0.0;
    double max_abs = 0.0;
    double mean_abs = 0.0;
    double max_error = 0.0;
    Vec argmax;
    std::size_t points = 0;
};

struct DecayOptions {
    double t_min = 1.0;
    double t_max = 1e3;
    double band_ratio = 2.0;      // dyadic bands by default
    double grid_step = 0.5;
    int directions = 16;          // d >= 2 only
    int workers = 1;
};

struct DecayProfile {
    std::vector<DecayBand> bands;
    DecayOptions options;
    std::string method;
};

DecayProfile decay_profile(const FourierEngine& engine, const DecayOptions& opt);

struct ExceptionalSetReport {
    double T = 0.0;
    double tau = 0.0;
    double grid_step = 0.0;
    double threshold = 0.0;
    std::size_t grid_points = 0;
    std::size_t exceptional_points = 0;
    std::size_t balls = 0;
    bool all_exceptional = false;   // transform never drops below threshold
};

ExceptionalSetReport exceptional_set_count(const FourierEngine& engine, double T, double tau, double grid_step,
                                           int directions = 16, int workers = 1);

struct GrowthFit {
    double exponent = 0.0;
    double residual = 0.0;
};
// Fit of log(count) against log T across several reports.
GrowthFit exceptional_growth(const std::vector<ExceptionalSetReport>& reports);

enum class DecayModel { Poly, Polylog };
// log max ~ c - kappa * log T (poly) or c - kappa * log log T (polylog),
// with T the lower band edge. residual is the RMS of the fit.
GrowthFit fit_decay_exponent(const DecayProfile& profile, DecayModel model);

}  // namespace fdecay

#endif
