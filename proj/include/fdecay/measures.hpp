#ifndef FDECAY_MEASURES_HPP
#define FDECAY_MEASURES_HPP

#include "fdecay/ifs.hpp"

#include <memory>
#include <optional>

namespace fdecay {

class ProbabilityVector {
public:
    ProbabilityVector() = default;
    explicit ProbabilityVector(std::vector<double> p);
    static ProbabilityVector uniform(int k) { return ProbabilityVector(std::vector<double>(k, 1.0 / k)); }

    std::size_t size() const { return p_.size(); }
    double operator[](std::size_t i) const { return p_[i]; }
    const std::vector<double>& values() const { return p_; }

private:
    std::vector<double> p_;
};

// Log-weight log w_a(x) = psi(f_a(x)).
//  G0: locally constant; one value per symbol, or a pair table psi(a, b)
//      where b is the first symbol of x (normalised Markov weights need it).
//  G1: s * log|lambda_a(x)|.
//  G2: arbitrary C^1 function of (a, x) with a gradient.
class GibbsPotential {
public:
    enum class Grade { G0, G1, G2 };
    using LogWeightFn = std::function<double(const IFSSystem&, int, const Vec&)>;
    using GradFn = std::function<Vec(const IFSSystem&, int, const Vec&)>;

    static GibbsPotential per_symbol(std::vector<double> psi);
    static GibbsPotential pair(Mat psi);
    static GibbsPotential bernoulli(const ProbabilityVector& p);
    static GibbsPotential geometric(double s);
    // psi is a function on [0,1]^d; w_a(x) = exp(psi(f_a x)).
    static GibbsPotential user(std::function<double(const Vec&)> psi, std::function<Vec(const Vec&)> grad);
    static GibbsPotential pair_function(LogWeightFn lw, GradFn grad);

    Grade grade() const { return grade_; }
    bool is_pair() const { return pair_; }
    double s() const { return s_; }
    const Mat& table() const { return table_; }   // k x 1 (per symbol) or k x k

    // first_symbol is the first letter of x's coding; only pair tables use it.
    double log_weight(const IFSSystem& sys, int a, const Vec& x, int first_symbol) const;
    Vec grad_log_weight(const IFSSystem& sys, int a, const Vec& x, int first_symbol) const;
    double weight(const IFSSystem& sys, int a, const Vec& x, int first_symbol) const {
        return std::exp(log_weight(sys, a, x, first_symbol));
    }

    // Max |grad - central FD| over probes (G2 invariant; 0 for G0).
    double gradient_check(const IFSSystem& sys) const;

    // Filled in by normalize_potential.
    double residual = 0.0;
    double log_rho = 0.0;

private:
    Grade grade_ = Grade::G0;
    bool pair_ = false;
    double s_ = 0.0;
    Mat table_;
    LogWeightFn lw_;
    GradFn grad_;
};

// Probe points with known first symbol: f_b(p) for p on a cube grid.
struct CodedProbe {
    Vec x;
    int symbol;
};
std::vector<CodedProbe> coded_probes(const IFSSystem& sys, int per_axis);

double pressure_estimate(const IFSSystem& sys, const GibbsPotential& psi, int n);

// Returns a potential with zero pressure whose untwisted transfer operator
// fixes 1. G0 is exact; G1/G2 use a depth-`depth` cylinder approximation of
// the eigenfunction and report the residual sup|sum_a w_a - 1| on probes.
GibbsPotential normalize_potential(const IFSSystem& sys, const GibbsPotential& psi, int depth = 6);

// One node of the cylinder tree of a measure. `box` encloses the support of
// the restriction to the cylinder.
struct CylNode {
    Word word;
    double mass = 1.0;
    Box box;
    int state = -1;      // implementation detail (Markov state id)
};

// Shared interface of every measure handle.
class Measure {
public:
    virtual ~Measure() = default;
    virtual int dim() const = 0;
    virtual CylNode root() const = 0;
    virtual void children(const CylNode& node, std::vector<CylNode>& out) const = 0;
    virtual std::vector<Vec> sample(std::uint64_t seed, std::size_t n) const = 0;
    virtual Interval cylinder_mass(const Word& w) const = 0;
};

// Markov measure on the coding space pushed to the attractor. Covers
// Bernoulli (self-similar) measures, exact G0 Gibbs measures, and the
// block approximations used for G1/G2 potentials (then masses are only known
// up to the factor `gibbs_inflation`).
class MarkovMeasure : public Measure {
public:
    static std::shared_ptr<MarkovMeasure> bernoulli(std::shared_ptr<const IFSSystem> sys, const ProbabilityVector& p);
    // Equilibrium state of a potential. G0 is exact (block length 1 or 2);
    // G1/G2 use windows of length `depth` + 1.
    static std::shared_ptr<MarkovMeasure> gibbs(std::shared_ptr<const IFSSystem> sys, const GibbsPotential& psi,
                                                int depth = 6);

    int dim() const override { return sys_->dim(); }
    const IFSSystem& system() const { return *sys_; }
    std::shared_ptr<const IFSSystem> system_ptr() const { return sys_; }

    CylNode root() const override;
    void children(const CylNode& node, std::vector<CylNode>& out) const override;
    std::vector<Vec> sample(std::uint64_t seed, std::size_t n) const override;
    Interval cylinder_mass(const Word& w) const override;
    // Mass under the Markov chain itself (exact for G0; the block
    // approximation otherwise). Sums to 1 over each generation.
    double chain_mass(const Word& w) const { return exact_mass(w); }

    // Random codings of the given length (first symbol first).
    std::vector<Word> sample_words(std::uint64_t seed, std::size_t n, int length) const;

    bool is_bernoulli() const { return bernoulli_; }
    const std::vector<double>& bernoulli_weights() const { return p_; }
    // Letter-level chain: initial law and transition matrix. Exact for
    // G0/Bernoulli; for block chains this is the induced one-step marginal.
    const Vec& initial() const { return pi1_; }
    const Mat& transition() const { return p1_; }
    bool letter_markov() const { return block_ <= 1; }
    double gibbs_inflation() const { return inflation_; }
    const GibbsPotential& potential() const { return potential_; }

    // Raw chain: states are blocks of `block()` letters; next(s) lists
    // (letter, probability) and next_state(s)[letter] the successor state.
    int block() const { return block_; }
    const std::vector<std::vector<int>>& chain_states() const { return states_; }
    const std::vector<double>& chain_initial() const { return pi_; }
    const std::vector<std::vector<std::pair<int, double>>>& chain_next() const { return next_; }
    const std::vector<std::vector<int>>& chain_next_state() const { return next_state_; }

    // Reference point for anchors: left-most fixed point admissible after `last`.
    Vec reference_point(int last_symbol) const;
    Vec anchor(const Word& w) const;

private:
    MarkovMeasure() = default;
    void finish();
    double exact_mass(const Word& w) const;

    std::shared_ptr<const IFSSystem> sys_;
    bool bernoulli_ = false;
    std::vector<double> p_;
    int block_ = 1;                       // state = last `block_` letters
    std::vector<std::vector<int>> states_;
    std::vector<double> pi_;              // stationary law on states
    std::vector<std::vector<std::pair<int, double>>> next_;   // (letter, prob) by state
    std::vector<std::vector<int>> next_state_;                // state after letter
    Vec pi1_;
    Mat p1_;
    double inflation_ = 1.0;
    GibbsPotential potential_;
    std::vector<Vec> ref_;                // per last symbol
};

// mu restricted to the cylinder [beta], renormalised, then x -> scale*(x - anchor).
class RescaledRestriction : public Measure {
public:
    RescaledRestriction(std::shared_ptr<const Measure> parent, Word beta, double scale, Vec anchor);

    int dim() const override { return parent_->dim(); }
    CylNode root() const override;
    void children(const CylNode& node, std::vector<CylNode>& out) const override;
    std::vector<Vec> sample(std::uint64_t seed, std::size_t n) const override;
    Interval cylinder_mass(const Word& w) const override;

    const Word& beta() const { return beta_; }
    double scale() const { return scale_; }
    const Vec& anchor() const { return anchor_; }
    double parent_mass() const { return parent_root_.mass; }

private:
    CylNode to_local(CylNode n) const;
    std::shared_ptr<const Measure> parent_;
    Word beta_;
    double scale_;
    Vec anchor_;
    CylNode parent_root_;
};

// Region classifier for tree refinement.
enum class Overlap { Outside, Inside, Partial };
using RegionTest = std::function<Overlap(const Box&)>;

struct MassBracket {
    Interval mass;
    bool depth_cap_reached = false;
    int max_depth = 0;
};

struct RefineOptions {
    double rel_width = 0.1;    // stop once hi - lo <= rel_width * hi
    int depth_cap = 48;
    std::size_t node_budget = 2000000;
};

MassBracket region_mass(const Measure& mu, const RegionTest& region, const RefineOptions& opt = {});
MassBracket ball_mass_estimate(const Measure& mu, const Vec& x, double r, const RefineOptions& opt = {});

struct NonConcOptions {
    double c = 1.0;                 // denominator ball B(x, c r)
    std::vector<double> radii;      // defaults to dyadic 2^-1 .. 2^-5 times support diameter
    int normals_per_trial = 2;      // random normals besides axis / local PCA normals
    RefineOptions refine{0.05, 40, 400000};
    double fail_threshold = 0.5;    // flag when delta at smallest eps exceeds this
};

struct NonConcProfile {
    std::vector<double> eps;
    std::vector<double> delta;
    double C = 0.0;
    double alpha = 0.0;
    double residual = 0.0;
    bool failed = false;
};

NonConcProfile affine_nonconcentration_profile(const Measure& mu, const std::vector<double>& eps_grid, int trials,
                                               std::uint64_t seed, const NonConcOptions& opt = {});

// Empirical Gibbs / quasi-Bernoulli constants on sampled cylinders.
struct GibbsBrackets {
    double gibbs_c = 1.0;
    double quasi_bernoulli_c = 1.0;
};
GibbsBrackets gibbs_brackets(const MarkovMeasure& mu, int max_len, int samples, std::uint64_t seed);

}  // namespace fdecay

#endif
