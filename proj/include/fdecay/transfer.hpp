#ifndef FDECAY_TRANSFER_HPP
#define FDECAY_TRANSFER_HPP

#include "fdecay/measures.hpp"

#include <map>
#include <memory>

namespace fdecay {

// h -> sum_{a admissible before x} w_a(x) |lambda_a(x)|^{ib} h(f_a x) with
// weights from a potential of zero pressure.
class TwistedOperator {
public:
    // `normalized` must already have zero pressure (see normalize_potential).
    TwistedOperator(std::shared_ptr<const IFSSystem> sys, GibbsPotential normalized, double b);
    // Bernoulli measures use their weights directly; other potentials are
    // normalised at the given depth.
    static TwistedOperator for_measure(const MarkovMeasure& mu, double b, int depth = 6);

    const IFSSystem& system() const { return *sys_; }
    std::shared_ptr<const IFSSystem> system_ptr() const { return sys_; }
    const GibbsPotential& potential() const { return psi_; }
    double b() const { return b_; }
    double residual() const { return psi_.residual; }
    TwistedOperator with_twist(double b) const { return TwistedOperator(sys_, psi_, b); }

    double log_weight(int a, const Vec& x, int first_symbol) const {
        return psi_.log_weight(*sys_, a, x, first_symbol);
    }
    // w_a(x) |lambda_a(x)|^{ib}
    cplx factor(int a, const Vec& x, int first_symbol) const;

private:
    std::shared_ptr<const IFSSystem> sys_;
    GibbsPotential psi_;
    double b_ = 0.0;
};

// Depth-m cylinder collocation: a tensor grid of nodes on the hull of every
// admissible cylinder of length m, multilinear interpolation inside.
class FunctionGrid {
public:
    static FunctionGrid constant(const IFSSystem& sys, int depth, int nodes_per_axis, cplx value, double b);

    int depth() const { return depth_; }
    int nodes_per_axis() const { return per_axis_; }
    int dim() const { return dim_; }
    int alphabet() const { return k_; }
    double b() const { return b_; }
    std::size_t cylinders() const { return words_.size(); }
    std::size_t nodes_per_cylinder() const { return per_cyl_; }
    std::size_t node_count() const { return values_.size(); }

    const Word& cylinder(std::size_t c) const { return words_[c]; }
    const Box& box(std::size_t c) const { return boxes_[c]; }
    Vec node(std::size_t c, std::size_t j) const;
    cplx value(std::size_t c, std::size_t j) const { return values_[c * per_cyl_ + j]; }
    cplx& value(std::size_t c, std::size_t j) { return values_[c * per_cyl_ + j]; }
    const std::vector<cplx>& values() const { return values_; }

    // Index of the cylinder with this word, or -1.
    long cylinder_index(const std::vector<int>& word) const;
    cplx interpolate(std::size_t c, const Vec& x) const;

    // Majorant of sup |Dh| on each cylinder for the exact iterate the grid
    // approximates, and a bound on |grid - exact| at the nodes.
    std::vector<double>& derivative_bound() { return dbound_; }
    const std::vector<double>& derivative_bound() const { return dbound_; }
    double interpolation_error() const { return interp_error_; }
    void set_interpolation_error(double e) { interp_error_ = e; }

    double sup_norm() const;
    double max_derivative_bound() const;
    // Largest node-to-node difference quotient, any cylinder.
    double measured_derivative() const;
    // |h|_inf + sup|Dh| / |b| from the measured derivative (sup norm alone
    // when b = 0); the certified version adds the majorant and grid error.
    double b_norm() const;
    double certified_b_norm() const;
    double cell_diameter(std::size_t c) const;

private:
    int depth_ = 1;
    int per_axis_ = 2;
    int dim_ = 1;
    int k_ = 1;
    double b_ = 0.0;
    std::size_t per_cyl_ = 0;
    std::vector<Word> words_;
    std::vector<Box> boxes_;
    std::vector<long> index_;      // base-k code -> cylinder id
    std::vector<cplx> values_;
    std::vector<double> dbound_;
    double interp_error_ = 0.0;
};

FunctionGrid apply_transfer(const TwistedOperator& op, const FunctionGrid& h, int workers = 1);

struct NormDecayRow {
    double b = 0.0;
    int n = 0;
    double sup_norm = 0.0;
    double b_norm = 0.0;
    double certified_b_norm = 0.0;
    double interp_error = 0.0;
};

struct NormDecayFit {
    double b = 0.0;
    double rho = 1.0;
    double residual = 0.0;
    int points = 0;
};

struct NormDecayTable {
    std::vector<NormDecayRow> rows;
    std::vector<NormDecayFit> fits;
    double max_rho = 0.0;
};

struct NormDecayOptions {
    int depth = 3;
    int nodes_per_axis = 9;
    int n_max = 12;
    double floor = 1e-10;     // norms below this are left out of the fit
    int workers = 1;
};

// Iterates the operator on the constant 1 for every twist in b_list and fits
// log |L^n 1|_b against n.
NormDecayTable norm_decay(const TwistedOperator& family, const std::vector<double>& b_list,
                          const NormDecayOptions& opt = {});

// Direct word sum of L^n 1 at x (first symbol of x's coding given).
cplx transfer_word_sum(const TwistedOperator& op, int n, const Vec& x, int first_symbol);

// ---------------------------------------------------------------- UNI

struct UNIReport {
    int n = 0;
    Vec x;
    double radius = 0.0;             // 0 for the point variant
    std::vector<Vec> directions;
    std::vector<double> margins;     // per direction
    std::vector<std::pair<Word, Word>> pairs;
    double eps0 = 0.0;
};

struct UNIOptions {
    int directions = 16;
    double radius = 0.0;             // > 0 selects the ball variant
    int ball_points = 9;             // per axis, on the ball
    int candidates = 24;             // extreme words per side kept for the ball variant
    std::size_t word_budget = 2000000;
};

// x must lie on the attractor with coding starting with first_symbol (or
// -1 to ignore admissibility before x).
UNIReport uni_margin(const IFSSystem& sys, int n, const Vec& x, int first_symbol, const UNIOptions& opt = {});

// Margin restricted to the pairs (s^{n-1} i, s^n) for a similitude letter s;
// for inversion maps this equals min_e max_i 2|<x - u_i, e>| / |x - u_i|^2.
UNIReport uni_family_margin(const IFSSystem& sys, int n, const Vec& x, int similitude_letter, int directions = 16);
double uni_closed_form(const IFSSystem& sys, const Vec& x, int directions = 16);

// -------------------------------------------------- frequency band masses

// Weights and log-derivatives of all words of length n(xi) = floor(c log|xi|)
// admissible before the cylinder beta, evaluated at a point of beta.
struct BandWords {
    double log_xi = 0.0;
    double c = 0.0;
    int n = 0;
    Vec x;
    std::vector<double> weight;
    std::vector<double> log_lambda;
};
BandWords collect_band_words(const TwistedOperator& weights, const Word& beta, double log_xi, double c,
                             std::size_t budget = 2000000);

// Band index floor(|lambda_w(x)| |xi|^{1/3}) -> total weight.
struct BandTable {
    std::map<long long, double> mass;
    double total = 0.0;
    long long lo = 0;                // admissible band range [|xi|^{1/6}, |xi|^{1/3}]
    long long hi = 0;
    double max_in_range = 0.0;
    long long argmax = -1;
};
BandTable band_table(const BandWords& words);

enum class BandRoute { Direct, Mollified };

struct BandMass {
    long long band = 0;
    double mass = 0.0;
    double width = 0.0;              // mollifier support in log scale
    double skirt = 0.0;              // direct mass of the mollifier skirt
    double quadrature_error = 0.0;
};

// Mollified route: a smooth majorant h of the band indicator in log scale
// (indicator convolved with a cubic B-spline, support width |xi|^{-delta}),
// integrated through its Fourier transform against the twisted sums.
BandMass frequency_band_mass(const BandWords& words, long long band, BandRoute route, double delta = 0.1);

}  // namespace fdecay

#endif
