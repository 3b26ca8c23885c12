#ifndef FDECAY_DECOMPOSITION_HPP
#define FDECAY_DECOMPOSITION_HPP

#include "fdecay/fourier.hpp"

#include <boost/multiprecision/mpfr.hpp>

#include <map>

namespace fdecay {

using mpreal = boost::multiprecision::mpfr_float;

// Words with |r_w| < threshold <= |r_{w minus last letter}|, found depth first.
struct CutoffSet {
    double threshold = 0.0;
    std::vector<Word> words;
    std::vector<double> ratios;    // |r_w|
    std::vector<double> weights;   // p_w
};
CutoffSet stopping_words(const IFSSystem& sys, const ProbabilityVector& p, double threshold,
                         std::size_t budget = 10000000);

// Frequency-dependent parameters of the good-word decomposition. Frequencies
// enter only through log|xi| so astronomically large |xi| are fine.
//
// The cutoff is min((log|xi|)^{3l}, |xi|^theta) / |xi|. With theta <= 0 the
// first term alone is used; it exceeds |xi| itself until log|xi| is in the
// hundreds, so the cap keeps desk-scale runs meaningful.
struct GoodWordParams {
    double log_xi = 0.0;
    int l = 2;
    double delta = 0.1;
    double eps = 0.1;
    double theta = 0.5;
    bool capped = false;           // the |xi|^theta branch was used
    double log_threshold = 0.0;    // log of the cutoff
    int n = 0;                     // prefix length n(xi)
    std::vector<double> E;         // window half-widths per symbol
    std::vector<double> p;
    std::vector<double> log_ratio; // log|r_a|
};

// Strict inequality eps - (k-1)/2 + (1/2+delta)(k-2) < 0.
bool decay_gap_holds(int alphabet, double delta, double eps);

GoodWordParams good_word_params(const IFSSystem& sys, const ProbabilityVector& p, double log_xi, int l, double delta,
                                double eps, double theta = 0.5);

// Closed window p_a n - E_a <= count_a <= p_a n + E_a for every symbol.
bool classify_good(const Word& w, const GoodWordParams& params);
bool counts_good(const std::vector<int>& counts, const GoodWordParams& params);

// Exact mass of non-good words of length n (multinomial sum).
double bad_mass_exact(const GoodWordParams& params);

struct BadMassEstimate {
    double mass = 0.0;
    double stderr_ = 0.0;
    std::size_t samples = 0;
};
BadMassEstimate bad_mass_estimate(const GoodWordParams& params, std::size_t samples, std::uint64_t seed);

struct BadMassSweep {
    std::vector<double> log_xi;
    std::vector<double> x;         // (log|xi|)^{2 delta}
    std::vector<double> mass;
    std::vector<double> exact;
    LineFit fit;                   // log(mass) against x
};
BadMassSweep bad_mass_sweep(const IFSSystem& sys, const ProbabilityVector& p, const std::vector<double>& log_xi, int l,
                            double delta, double eps, double theta, std::size_t samples, std::uint64_t seed);

// ----------------------------------------------------------- Diophantine

struct DiophantineCertificate {
    double value = 0.0;            // min over q <= Q of q^l |q x - nearest integer|
    int l = 2;
    long long Q = 0;
    long long argmin_q = 0;
    bool rational = false;         // x = a/b exactly with b <= Q
    std::vector<long long> convergents;   // denominators up to Q
};

// Continued-fraction route: only convergent denominators can minimise.
DiophantineCertificate diophantine_lower_bound(const mpreal& x, int l, long long Q);
DiophantineCertificate diophantine_lower_bound(double x, int l, long long Q);
DiophantineCertificate diophantine_lower_bound_rational(long long num, long long den, int l, long long Q);

// Brute-force scan over every q <= Q (used as an oracle in tests).
double diophantine_brute(const mpreal& x, int l, long long Q);

// min over 0 < max(|p|,|q|) <= Q of max(|p|,|q|)^l |p t1 + q t2 - nearest integer|.
struct PairCertificate {
    double value = 0.0;
    int l = 2;
    long long Q = 0;
    long long p = 0;
    long long q = 0;
};
PairCertificate diophantine_pair_bound(const mpreal& t1, const mpreal& t2, int l, long long Q);

// log|r_a| / log|r_b| to `bits` of precision; ratios within 1e-15 of a
// fraction with denominator <= 1e6 are treated as that fraction.
mpreal log_ratio_mp(double ra, double rb, unsigned bits = 256);

// Rotation angle of a 2x2 rotation as a fraction of a full turn, in [0,1).
double rotation_turns(const OrthogonalMatrix& o);

// ------------------------------------------------------- good cut-off set

// One count vector of the good cut-off set, with the total weight of the
// words realising it.
struct CountClass {
    std::vector<int> counts;
    double mass = 0.0;
    double words = 0.0;
    double log_ratio = 0.0;        // log|r| for these counts
};

struct GoodCutoff {
    GoodWordParams params;
    std::vector<CountClass> classes;
    double good_mass = 0.0;        // weight of the good cut-off set
    double bad_mass = 0.0;         // weight of the rest of the cut-off set
    double lower_violation = 0.0;  // max over members of (p_a n - E_a) - count_a (<= 0 expected)
    double upper_constant = 0.0;   // measured C in count_a <= p_a n + E_a + C (log|xi|)^{1/2+delta}
    double ratio_constant = 0.0;   // measured C' in |r| <= C' cutoff e^{2 (log|xi|)^{1/2+delta}} over good words
    double min_good_ratio = 0.0;   // min |r| over good words divided by the cutoff (>= 1 expected)
};

GoodCutoff good_cutoff(const IFSSystem& sys, const GoodWordParams& params, std::size_t budget = 10000000);

struct SeparationRow {
    std::vector<int> klass;        // counts of the conditioning letters
    long long band = 0;            // floor(|r| |xi|)
    std::vector<std::pair<int, int>> pairs;   // distinct (count a1, count a2)
    double min_gap = std::numeric_limits<double>::infinity();
};

struct SeparationAudit {
    bool rotation_form = false;
    int a1 = 0;
    int a2 = 1;
    std::size_t classes = 0;       // conditioning classes (counts of the other letters)
    double k_constant = 0.0;       // classes / (log|xi|)^{(k-2)(1/2+delta)}
    std::size_t bands = 0;
    std::size_t violations = 0;
    double min_gap = std::numeric_limits<double>::infinity();
    double band_lo = 0.0;          // range of |r| |xi| over the good cut-off set
    double band_hi = 0.0;
    std::vector<SeparationRow> rows;
    GoodCutoff cutoff;
};

// Ratio form (real |xi|) when the system has no non-trivial rotations,
// rotation form otherwise (xi must be given as a vector then).
SeparationAudit separation_check(const IFSSystem& sys, const ProbabilityVector& p, const Vec& xi_direction,
                                 double log_xi, int l, double delta, double eps, int a1 = 0, int a2 = 1,
                                 double theta = 0.5, std::size_t budget = 10000000);

// ------------------------------------------------------------ multinomial

struct MultinomialMax {
    double max_prob = 0.0;
    std::vector<int> argmax;
};
// Search restricted to floor(p_a n) +- 10 k.
MultinomialMax multinomial_max(int n, const ProbabilityVector& p);
MultinomialMax multinomial_max_brute(int n, const ProbabilityVector& p);
double multinomial_prob(const std::vector<int>& counts, const std::vector<double>& p);

// ---------------------------------------------------------------- pipeline

struct PipelineAudit {
    double log_xi = 0.0;
    double direct = 0.0;
    double direct_error = 0.0;
    double average = 0.0;          // sum over the good cut-off set of p |transform(child)|
    double average_error = 0.0;
    double bad_word_mass = 0.0;
    double T = 0.0;                // child frequencies lie below T
    double tau = 0.0;
    std::size_t bad_bands = 0;
    double bad_band_actual = 0.0;
    double bad_band_majorant = 0.0;
    double multinomial_majorant = 0.0;
    bool triangle_ok = false;
    bool majorant_ok = false;
};

// Uses the frequency xi = |xi| * direction with |xi| = exp(log_xi); the
// direct transform is only evaluated when |xi| is representable.
PipelineAudit average_bound_report(std::shared_ptr<const MarkovMeasure> mu, const Vec& direction, double log_xi, int l,
                                   double delta, double eps, double tau, const Evaluator& ev, double theta = 0.5,
                                   double grid_step = 0.25);

}  // namespace fdecay

#endif
