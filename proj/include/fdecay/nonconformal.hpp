#ifndef FDECAY_NONCONFORMAL_HPP
#define FDECAY_NONCONFORMAL_HPP

#include "fdecay/fourier.hpp"
#include "fdecay/transfer.hpp"

namespace fdecay {

// Coordinatewise product of 1-D conformal systems restricted to a set of
// admissible tuples: F_t(x) = (f^(1)_{t_1}(x_1), ..., f^(d)_{t_d}(x_d)).
class RestrictedProductIFS {
public:
    RestrictedProductIFS(std::vector<std::shared_ptr<const IFSSystem>> components,
                         std::vector<std::vector<int>> tuples, ProbabilityVector p);

    int dim() const { return static_cast<int>(comp_.size()); }
    int size() const { return static_cast<int>(tuples_.size()); }
    const IFSSystem& component(int i) const { return *comp_.at(i); }
    std::shared_ptr<const IFSSystem> component_ptr(int i) const { return comp_.at(i); }
    const std::vector<std::vector<int>>& tuples() const { return tuples_; }
    const std::vector<double>& p() const { return p_; }

    Vec apply(int t, const Vec& x) const;
    // Attractor hull of each component (its full alphabet).
    const std::vector<Interval>& hull() const { return hull_; }
    // Image of one coordinate hull under a component word (innermost last).
    Interval image(int coord, const std::vector<int>& letters) const;

    // Same system with coordinate `lead` moved to the front.
    RestrictedProductIFS with_leading(int lead) const;

private:
    std::vector<std::shared_ptr<const IFSSystem>> comp_;
    std::vector<std::vector<int>> tuples_;
    std::vector<double> p_;
    std::vector<Interval> hull_;
};

struct HypothesisOptions {
    int separation_depth = 3;
    int uni_n = 4;
    double uni_tol = 1e-6;
};

struct HypothesisReport {
    std::vector<double> separation_gap;     // per coordinate (> 0 passes)
    bool separation = true;
    bool siblings = true;
    int missing_tuple = -1;                 // first tuple lacking a sibling
    int missing_coord = -1;
    std::vector<double> uni_eps0;           // best fibre margin per coordinate
    std::vector<std::vector<int>> uni_fibre; // the other coordinates of that fibre
    std::vector<bool> uni_ok;                // margin above tolerance, per coordinate
    bool uni = true;
};

HypothesisReport check_hypotheses(const RestrictedProductIFS& ifs, const HypothesisOptions& opt = {});
// Throws HypothesisViolation for the first failed condition numbered <= up_to.
void require_hypotheses(const HypothesisReport& rep, int up_to);

// Disintegration along the first coordinate: fibres over the projected
// alphabet (the remaining coordinates).
struct Disintegration {
    std::vector<std::vector<int>> projected;          // distinct (t_2, ..., t_d)
    std::vector<double> q;
    std::vector<std::vector<int>> fibre_letters;      // first-coordinate letters per projected symbol
    std::vector<std::vector<double>> fibre_weights;   // p / q, sums to 1 per fibre
    double gamma = 0.0;                               // max one-step weight
};

Disintegration project_alphabet(const RestrictedProductIFS& ifs, const HypothesisOptions& opt = {});

// Q-random prefix of projected symbols, i.i.d. with law q.
std::vector<int> sample_beta(const Disintegration& data, std::uint64_t seed, int length);

// Point of the remaining coordinates coded by the prefix; `radius` bounds
// the distance to the true x_beta of any extension.
Vec beta_anchor(const RestrictedProductIFS& ifs, const Disintegration& data, const std::vector<int>& beta,
                double* radius = nullptr);

// The random one-dimensional measure mu_beta, refined down to `depth` steps.
class RandomMeasure : public Measure {
public:
    RandomMeasure(std::shared_ptr<const RestrictedProductIFS> ifs, std::shared_ptr<const Disintegration> data,
                  std::vector<int> beta, int depth);

    int dim() const override { return 1; }
    CylNode root() const override;
    void children(const CylNode& node, std::vector<CylNode>& out) const override;
    std::vector<Vec> sample(std::uint64_t seed, std::size_t n) const override;
    Interval cylinder_mass(const Word& w) const override;

    // Cylinder expansion until 2 pi |xi| halfwidth <= tol, or the prefix runs out.
    FourierValue fourier(double xi, double tol) const;
    const std::vector<int>& beta() const { return beta_; }
    int depth() const { return depth_; }

private:
    std::shared_ptr<const RestrictedProductIFS> ifs_;
    std::shared_ptr<const Disintegration> data_;
    std::vector<int> beta_;
    int depth_;
};

// Cylinder expansion of the full stationary measure.
FourierValue product_fourier(const RestrictedProductIFS& ifs, const Vec& xi, double tol,
                             std::size_t budget = 20000000);

struct DisintegrationOptions {
    int prefix = 40;
    int skip = 0;            // leading prefix steps dropped (shift of Q)
    double tol = 1e-3;       // per-beta and direct expansion tolerance
    int workers = 1;
};

struct DisintegrationRow {
    Vec xi;
    int lead = 0;            // coordinate moved first (largest |xi_i|)
    cplx direct;
    double direct_error = 0.0;
    cplx reconstruction;
    double sigma = 0.0;      // standard error of the reconstruction
    double closure = 0.0;    // deterministic truncation error, averaged
    double abs_mean = 0.0;   // E_Q |transform of mu_beta|
    double abs_sigma = 0.0;
    bool reconstruction_ok = false;   // within 3 sigma plus deterministic errors
    bool triangle_ok = false;
};

DisintegrationRow disintegration_check(const RestrictedProductIFS& ifs, const Vec& xi, std::size_t n_samples,
                                       std::uint64_t seed, const DisintegrationOptions& opt = {});

struct RandomDecayOptions {
    int depth = 4;           // collocation on the first component
    int nodes_per_axis = 5;
    double margin = 0.02;    // beta counts as non-decaying while rate >= 1 - margin
    int workers = 1;
};

struct RandomDecayRow {
    double b = 0.0;
    int beta = 0;            // sample index
    int n = 0;
    double sup_norm = 0.0;
    double rate = 0.0;       // sup_norm^{1/n}
};

struct RandomDecayTable {
    std::vector<RandomDecayRow> rows;
    std::vector<double> b;
    std::vector<std::vector<double>> rho;            // [b][beta], fitted
    std::vector<std::vector<double>> exceptional;    // [b][n-1], fraction with rate >= 1 - margin
};

// Sup norms of L^{(sigma^{n-1} beta)} ... L^{(beta)} 1 for sampled beta.
RandomDecayTable random_norm_decay(const RestrictedProductIFS& ifs, int n_max, const std::vector<double>& b_list,
                                   int n_betas, std::uint64_t seed, const RandomDecayOptions& opt = {});

}  // namespace fdecay

#endif
