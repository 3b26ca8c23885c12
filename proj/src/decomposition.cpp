#include "fdecay/decomposition.hpp"

#include <map>
#include <numeric>
#include <random>
#include <set>

namespace fdecay {

namespace {

std::vector<double> abs_log_ratios(const IFSSystem& sys) {
    if (!sys.all_similitudes()) throw InvalidArgument("cut-off sets need a self-similar system");
    std::vector<double> lr(sys.size());
    for (int a = 0; a < sys.size(); ++a) {
        double r = std::abs(sys.map(a).similitude()->ratio);
        if (!(r > 0.0 && r < 1.0)) throw InvalidArgument("contraction ratio outside (0,1)");
        lr[a] = std::log(r);
    }
    return lr;
}

double log_multinomial(const std::vector<int>& c, const std::vector<double>& p) {
    int n = std::accumulate(c.begin(), c.end(), 0);
    double s = std::lgamma(n + 1.0);
    for (std::size_t a = 0; a < c.size(); ++a) {
        if (c[a] == 0) continue;
        if (p[a] <= 0.0) return -std::numeric_limits<double>::infinity();
        s += c[a] * std::log(p[a]) - std::lgamma(c[a] + 1.0);
    }
    return s;
}

double log_orderings(const std::vector<int>& c) {
    int n = std::accumulate(c.begin(), c.end(), 0);
    double s = std::lgamma(n + 1.0);
    for (int x : c) s -= std::lgamma(x + 1.0);
    return s;
}

// Calls fn on every composition of n into k parts with lo[a] <= c[a] <= hi[a],
// in lexicographic order.
void for_each_composition(int n, const std::vector<int>& lo, const std::vector<int>& hi,
                          const std::function<void(const std::vector<int>&)>& fn) {
    int k = static_cast<int>(lo.size());
    std::vector<int> c(k, 0);
    std::vector<int> lo_tail(k + 1, 0), hi_tail(k + 1, 0);
    for (int a = k - 1; a >= 0; --a) {
        lo_tail[a] = lo_tail[a + 1] + lo[a];
        hi_tail[a] = hi_tail[a + 1] + hi[a];
    }
    std::function<void(int, int)> rec = [&](int a, int left) {
        if (a == k - 1) {
            if (left >= lo[a] && left <= hi[a]) {
                c[a] = left;
                fn(c);
            }
            return;
        }
        int from = std::max(lo[a], left - hi_tail[a + 1]);
        int to = std::min(hi[a], left - lo_tail[a + 1]);
        for (int x = from; x <= to; ++x) {
            c[a] = x;
            rec(a + 1, left - x);
        }
    };
    if (k > 0) rec(0, n);
}

double dot_counts(const std::vector<int>& c, const std::vector<double>& lr) {
    double s = 0.0;
    for (std::size_t a = 0; a < c.size(); ++a) s += c[a] * lr[a];
    return s;
}

const double kWindowSlack = 1e-9;

}  // namespace

CutoffSet stopping_words(const IFSSystem& sys, const ProbabilityVector& p, double threshold, std::size_t budget) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw ThresholdOutOfRange("threshold must lie in (0,1), got " + std::to_string(threshold));
    if (static_cast<int>(p.size()) != sys.size()) throw InvalidArgument("probability vector has wrong length");
    std::vector<double> lr = abs_log_ratios(sys);
    double lt = std::log(threshold);
    CutoffSet out;
    out.threshold = threshold;
    std::vector<int> w;
    std::size_t visited = 0;
    std::function<void(double, double)> rec = [&](double logr, double logp) {
        for (int a = 0; a < sys.size(); ++a) {
            if (!w.empty() && !sys.subshift().allowed(w.back(), a)) continue;
            if (++visited > budget) throw WordBudgetExceeded("cut-off set exceeds " + std::to_string(budget) + " nodes");
            w.push_back(a);
            double r = logr + lr[a];
            double q = logp + std::log(p[a]);
            if (r < lt) {
                out.words.push_back(sys.word(w));
                out.ratios.push_back(std::exp(r));
                out.weights.push_back(std::exp(q));
            } else {
                rec(r, q);
            }
            w.pop_back();
        }
    };
    rec(0.0, 0.0);
    return out;
}

bool decay_gap_holds(int alphabet, double delta, double eps) {
    return eps - (alphabet - 1) / 2.0 + (0.5 + delta) * (alphabet - 2) < 0.0;
}

GoodWordParams good_word_params(const IFSSystem& sys, const ProbabilityVector& p, double log_xi, int l, double delta,
                                double eps, double theta) {
    int k = sys.size();
    if (static_cast<int>(p.size()) != k) throw InvalidArgument("probability vector has wrong length");
    if (!sys.subshift().is_full()) throw InvalidArgument("good words are defined on the full shift");
    if (!(delta >= 0.0 && delta < 0.5)) throw InvalidArgument("delta must lie in [0, 1/2)");
    if (l < 1) throw InvalidArgument("exponent l must be positive");
    if (!(theta < 1.0)) throw InvalidArgument("theta must be below 1");
    if (!decay_gap_holds(k, delta, eps))
        throw DecayGapViolated("eps - (k-1)/2 + (1/2+delta)(k-2) = " +
                               std::to_string(eps - (k - 1) / 2.0 + (0.5 + delta) * (k - 2)) + " is not negative");
    if (!(log_xi > 1.0)) throw ThresholdOutOfRange("log|xi| must exceed 1");

    GoodWordParams g;
    g.log_xi = log_xi;
    g.l = l;
    g.delta = delta;
    g.eps = eps;
    g.theta = theta;
    g.p = p.values();
    g.log_ratio = abs_log_ratios(sys);

    double poly = 3.0 * l * std::log(log_xi) - log_xi;
    g.log_threshold = poly;
    if (theta > 0.0) {
        double cap = (theta - 1.0) * log_xi;
        if (cap < poly) {
            g.log_threshold = cap;
            g.capped = true;
        }
    }
    if (g.log_threshold >= 0.0)
        throw ThresholdOutOfRange("cut-off (log|xi|)^{3l}/|xi| is not below 1 at log|xi| = " + std::to_string(log_xi));

    double m = -g.log_threshold;
    double entropy_rate = 0.0;   // -sum p_a log r_a
    for (int a = 0; a < k; ++a) entropy_rate -= g.p[a] * g.log_ratio[a];
    double nn = (1.0 - std::pow(m, -(0.5 - delta))) * m / entropy_rate;
    g.n = static_cast<int>(std::floor(nn));
    if (g.n < 1) throw ThresholdOutOfRange("prefix length n(xi) is zero at log|xi| = " + std::to_string(log_xi));
    g.E.resize(k);
    for (int a = 0; a < k; ++a) g.E[a] = std::pow(m, 0.5 + delta) / (-k * g.log_ratio[a]);
    return g;
}

bool counts_good(const std::vector<int>& counts, const GoodWordParams& params) {
    for (std::size_t a = 0; a < counts.size(); ++a) {
        double centre = params.p[a] * params.n;
        if (counts[a] < centre - params.E[a] - kWindowSlack) return false;
        if (counts[a] > centre + params.E[a] + kWindowSlack) return false;
    }
    return true;
}

bool classify_good(const Word& w, const GoodWordParams& params) {
    if (static_cast<int>(w.size()) != params.n)
        throw WrongLength("word has length " + std::to_string(w.size()) + ", expected n(xi) = " +
                          std::to_string(params.n));
    return counts_good(w.counts(), params);
}

double bad_mass_exact(const GoodWordParams& params) {
    int k = static_cast<int>(params.p.size());
    double compositions = 1.0;
    for (int i = 1; i < k; ++i) compositions *= (params.n + i) / static_cast<double>(i);
    if (compositions > 5e7) throw WordBudgetExceeded("too many count vectors for the exact bad mass");
    std::vector<int> lo(k, 0), hi(k, params.n);
    double bad = 0.0;
    for_each_composition(params.n, lo, hi, [&](const std::vector<int>& c) {
        if (!counts_good(c, params)) bad += std::exp(log_multinomial(c, params.p));
    });
    return bad;
}

BadMassEstimate bad_mass_estimate(const GoodWordParams& params, std::size_t samples, std::uint64_t seed) {
    if (samples == 0) throw InvalidArgument("need at least one sample");
    int k = static_cast<int>(params.p.size());
    // count vectors drawn directly: sequential conditional binomials
    std::mt19937_64 rng(mix_seed(seed, 0x3b));
    std::vector<int> c(k);
    std::size_t bad = 0;
    for (std::size_t s = 0; s < samples; ++s) {
        int left = params.n;
        double rest = 1.0;
        for (int a = 0; a < k; ++a) {
            if (a == k - 1 || left == 0) {
                c[a] = left;
                left = 0;
                continue;
            }
            double q = std::clamp(params.p[a] / rest, 0.0, 1.0);
            std::binomial_distribution<int> draw(left, q);
            c[a] = draw(rng);
            left -= c[a];
            rest -= params.p[a];
        }
        if (!counts_good(c, params)) ++bad;
    }
    BadMassEstimate e;
    e.samples = samples;
    e.mass = static_cast<double>(bad) / samples;
    e.stderr_ = std::sqrt(e.mass * (1.0 - e.mass) / samples);
    return e;
}

BadMassSweep bad_mass_sweep(const IFSSystem& sys, const ProbabilityVector& p, const std::vector<double>& log_xi, int l,
                            double delta, double eps, double theta, std::size_t samples, std::uint64_t seed) {
    BadMassSweep out;
    std::vector<double> fx, fy;
    for (std::size_t i = 0; i < log_xi.size(); ++i) {
        GoodWordParams g = good_word_params(sys, p, log_xi[i], l, delta, eps, theta);
        BadMassEstimate e = bad_mass_estimate(g, samples, mix_seed(seed, i));
        out.log_xi.push_back(log_xi[i]);
        out.x.push_back(std::pow(log_xi[i], 2.0 * delta));
        out.mass.push_back(e.mass);
        out.exact.push_back(bad_mass_exact(g));
        if (e.mass > 0.0) {
            fx.push_back(out.x.back());
            fy.push_back(std::log(e.mass));
        }
    }
    if (fx.size() < 3) throw DegenerateFit("fewer than three frequencies with non-zero bad mass");
    out.fit = fit_line(fx, fy);
    return out;
}

// ------------------------------------------------------------ Diophantine

namespace {

struct PrecisionScope {
    explicit PrecisionScope(unsigned digits) : old(mpreal::default_precision()) { mpreal::default_precision(digits); }
    ~PrecisionScope() { mpreal::default_precision(old); }
    unsigned old;
};

mpreal dist_to_int(const mpreal& y) {
    mpreal f = y - floor(y);
    return f < 0.5 ? f : mpreal(1 - f);
}

}  // namespace

DiophantineCertificate diophantine_lower_bound(const mpreal& x_in, int l, long long Q) {
    if (Q < 1) throw InvalidArgument("Q must be positive");
    if (l < 0) throw InvalidArgument("exponent l must be non-negative");
    unsigned digits = std::max<unsigned>(x_in.precision(), 40);
    PrecisionScope scope(digits);
    mpreal x = x_in;
    mpreal tiny = pow(mpreal(2), -static_cast<long>(3.3219 * digits / 2));

    DiophantineCertificate c;
    c.l = l;
    c.Q = Q;
    c.value = std::numeric_limits<double>::infinity();
    auto consider = [&](long long q) {
        if (!c.convergents.empty() && c.convergents.back() == q) return;
        c.convergents.push_back(q);
        mpreal d = dist_to_int(mpreal(q) * x);
        double v = static_cast<double>(pow(mpreal(q), l) * d);
        if (v < c.value) {
            c.value = v;
            c.argmin_q = q;
        }
    };

    mpreal frac = x - floor(x);
    long long q_prev = 0, q = 1;   // q_{-1}, q_0
    consider(q);
    while (true) {
        if (frac < tiny) {
            // x is (numerically) the convergent p/q itself
            c.rational = true;
            c.value = 0.0;
            c.argmin_q = q;
            break;
        }
        mpreal inv = 1 / frac;
        mpreal a_mp = floor(inv);
        if (a_mp > mpreal(static_cast<double>(Q))) break;
        long long a = a_mp.convert_to<long long>();
        long long q_next = a * q + q_prev;
        if (q_next > Q) break;
        q_prev = q;
        q = q_next;
        consider(q);
        frac = inv - a_mp;
    }
    return c;
}

DiophantineCertificate diophantine_lower_bound(double x, int l, long long Q) {
    PrecisionScope scope(40);
    return diophantine_lower_bound(mpreal(x), l, Q);
}

DiophantineCertificate diophantine_lower_bound_rational(long long num, long long den, int l, long long Q) {
    if (den == 0) throw InvalidArgument("zero denominator");
    if (Q < 1) throw InvalidArgument("Q must be positive");
    if (den < 0) {
        num = -num;
        den = -den;
    }
    long long g = std::gcd(num < 0 ? -num : num, den);
    num /= g;
    den /= g;
    DiophantineCertificate c;
    c.l = l;
    c.Q = Q;
    c.value = std::numeric_limits<double>::infinity();
    auto consider = [&](long long q) {
        if (!c.convergents.empty() && c.convergents.back() == q) return;
        c.convergents.push_back(q);
        long long r = static_cast<long long>((static_cast<__int128>(q) * num) % den);
        if (r < 0) r += den;
        long long d = std::min(r, den - r);
        double v = std::pow(static_cast<double>(q), l) * static_cast<double>(d) / static_cast<double>(den);
        if (v < c.value) {
            c.value = v;
            c.argmin_q = q;
        }
    };
    // continued fraction of num/den
    long long a0 = num >= 0 ? num / den : -((-num + den - 1) / den);
    long long rn = num - a0 * den, rd = den;   // fractional part rn/rd in [0,1)
    long long q_prev = 0, q = 1;
    consider(q);
    while (rn != 0) {
        long long a = rd / rn;
        long long nr = rd - a * rn;
        long long q_next = a * q + q_prev;
        if (q_next > Q) break;
        q_prev = q;
        q = q_next;
        consider(q);
        rd = rn;
        rn = nr;
    }
    if (rn == 0) c.rational = true;
    return c;
}

double diophantine_brute(const mpreal& x_in, int l, long long Q) {
    PrecisionScope scope(std::max<unsigned>(x_in.precision(), 40));
    mpreal x = x_in;
    double best = std::numeric_limits<double>::infinity();
    for (long long q = 1; q <= Q; ++q) {
        double v = static_cast<double>(pow(mpreal(q), l) * dist_to_int(mpreal(q) * x));
        best = std::min(best, v);
    }
    return best;
}

PairCertificate diophantine_pair_bound(const mpreal& t1, const mpreal& t2, int l, long long Q) {
    if (Q < 1) throw InvalidArgument("Q must be positive");
    if (Q > 20000) throw WordBudgetExceeded("pair scan limited to Q <= 20000");
    long double a = static_cast<long double>(t1 - floor(t1));
    long double b = static_cast<long double>(t2 - floor(t2));
    PairCertificate c;
    c.l = l;
    c.Q = Q;
    c.value = std::numeric_limits<double>::infinity();
    // (p, q) and (-p, -q) give the same value, so q >= 0 and p > 0 when q = 0.
    for (long long q = 0; q <= Q; ++q) {
        for (long long p = (q == 0 ? 1 : -Q); p <= Q; ++p) {
            long double y = p * a + q * b;
            y -= std::floor(y);
            long double d = std::min(y, 1.0L - y);
            double v = std::pow(static_cast<double>(std::max(std::llabs(p), q)), l) * static_cast<double>(d);
            if (v < c.value) {
                c.value = v;
                c.p = p;
                c.q = q;
            }
        }
    }
    return c;
}

namespace {

mpreal log_abs_mp(double r) {
    r = std::abs(r);
    long long num, den;
    if (snap_fraction(r, num, den)) return log(mpreal(num)) - log(mpreal(den));
    return log(mpreal(r));
}

}  // namespace

mpreal log_ratio_mp(double ra, double rb, unsigned bits) {
    unsigned digits = static_cast<unsigned>(std::ceil(bits * 0.30103)) + 2;
    PrecisionScope scope(digits);
    mpreal la = log_abs_mp(ra), lb = log_abs_mp(rb);
    if (lb == 0) throw InvalidArgument("log ratio with |r| = 1");
    mpreal out = la / lb;
    return out;
}

double rotation_turns(const OrthogonalMatrix& o) {
    if (o.dim() != 2) throw InvalidArgument("rotation angle needs a 2x2 matrix");
    double t = std::atan2(o.matrix()(1, 0), o.matrix()(0, 0)) / kTwoPi;
    t -= std::floor(t);
    return t;
}

// ------------------------------------------------------- good cut-off set

GoodCutoff good_cutoff(const IFSSystem& sys, const GoodWordParams& params, std::size_t budget) {
    (void)sys;
    int k = static_cast<int>(params.p.size());
    const auto& lr = params.log_ratio;
    const auto& p = params.p;
    double thr = params.log_threshold;
    double scale = std::pow(params.log_xi, 0.5 + params.delta);

    GoodCutoff out;
    out.params = params;
    out.lower_violation = -std::numeric_limits<double>::infinity();
    out.upper_constant = -std::numeric_limits<double>::infinity();
    out.min_good_ratio = std::numeric_limits<double>::infinity();
    out.ratio_constant = 0.0;

    std::vector<int> lo(k), hi(k);
    for (int a = 0; a < k; ++a) {
        double centre = p[a] * params.n;
        lo[a] = std::max(0, static_cast<int>(std::ceil(centre - params.E[a] - kWindowSlack)));
        hi[a] = std::min(params.n, static_cast<int>(std::floor(centre + params.E[a] + kWindowSlack)));
    }

    std::map<std::vector<int>, CountClass> classes;
    std::size_t work = 0;
    std::vector<int> s(k, 0);
    for_each_composition(params.n, lo, hi, [&](const std::vector<int>& g) {
        double log_g = dot_counts(g, lr);
        out.min_good_ratio = std::min(out.min_good_ratio, std::exp(log_g - thr));
        out.ratio_constant = std::max(out.ratio_constant, std::exp(log_g - thr - 2.0 * scale));
        double lw_g = log_multinomial(g, p);
        double lo_g = log_orderings(g);
        // suffixes s with g+s still above the cut-off, then one stopping letter
        std::function<void(int, double)> rec = [&](int a, double logr) {
            if (a == k) {
                if (++work > budget) throw WordBudgetExceeded("good cut-off set exceeds the budget");
                double lsuf = log_multinomial(s, p);
                double lsuf_orders = log_orderings(s);
                for (int b = 0; b < k; ++b) {
                    if (logr + lr[b] >= thr) continue;
                    std::vector<int> c(k);
                    for (int i = 0; i < k; ++i) c[i] = g[i] + s[i];
                    ++c[b];
                    CountClass& cc = classes[c];
                    if (cc.counts.empty()) {
                        cc.counts = c;
                        cc.log_ratio = logr + lr[b];
                    }
                    cc.mass += std::exp(lw_g + lsuf + std::log(p[b]));
                    cc.words += std::exp(lo_g + lsuf_orders);
                }
                return;
            }
            for (int x = 0;; ++x) {
                double r = logr + x * lr[a];
                if (r < thr) break;
                s[a] = x;
                rec(a + 1, r);
            }
            s[a] = 0;
        };
        if (log_g >= thr) rec(0, log_g);
    });

    for (auto& [key, cc] : classes) {
        int len = std::accumulate(cc.counts.begin(), cc.counts.end(), 0);
        (void)len;
        for (int a = 0; a < k; ++a) {
            double centre = p[a] * params.n;
            out.lower_violation = std::max(out.lower_violation, centre - params.E[a] - cc.counts[a]);
            out.upper_constant = std::max(out.upper_constant, (cc.counts[a] - centre - params.E[a]) / scale);
        }
        out.good_mass += cc.mass;
        out.classes.push_back(std::move(cc));
    }
    out.bad_mass = bad_mass_exact(params);
    return out;
}

namespace {

Mat rotation_power(const Mat& o, int e) {
    Mat r = Mat::Identity(o.rows(), o.cols());
    Mat b = o;
    while (e > 0) {
        if (e & 1) r = r * b;
        b = b * b;
        e >>= 1;
    }
    return r;
}

bool has_rotation(const IFSSystem& sys) {
    if (sys.dim() < 2) return false;
    for (const auto& m : sys.maps()) {
        const Mat& o = m.similitude()->rotation.matrix();
        if ((o - Mat::Identity(o.rows(), o.cols())).cwiseAbs().maxCoeff() > 1e-12) return true;
    }
    return false;
}

Vec child_frequency(const IFSSystem& sys, const std::vector<int>& counts, double log_abs_ratio, double log_xi,
                    const Vec& direction) {
    int d = sys.dim();
    Mat o = Mat::Identity(d, d);
    for (int a = 0; a < sys.size(); ++a)
        if (counts[a] > 0) o = o * rotation_power(sys.map(a).similitude()->rotation.matrix(), counts[a]);
    return std::exp(log_abs_ratio + log_xi) * (o.transpose() * direction);
}

}  // namespace

SeparationAudit separation_check(const IFSSystem& sys, const ProbabilityVector& p, const Vec& xi_direction,
                                 double log_xi, int l, double delta, double eps, int a1, int a2, double theta,
                                 std::size_t budget) {
    int k = sys.size();
    if (a1 == a2 || a1 < 0 || a2 < 0 || a1 >= k || a2 >= k) throw InvalidArgument("need two distinct letters");
    if (log_xi > 700.0) throw InvalidArgument("separation audit needs |xi| representable as a double");
    SeparationAudit out;
    out.a1 = a1;
    out.a2 = a2;
    out.rotation_form = has_rotation(sys);
    if (out.rotation_form) {
        if (!sys.rotations_commute()) throw InvalidArgument("rotation form needs commuting rotations");
        if (xi_direction.size() != sys.dim() || xi_direction.norm() == 0.0)
            throw InvalidArgument("rotation form needs a direction of the system's dimension");
    }
    GoodWordParams params = good_word_params(sys, p, log_xi, l, delta, eps, theta);
    out.cutoff = good_cutoff(sys, params, budget);

    struct Entry {
        int j1, j2;
        double value;   // |r| |xi|
        Vec zeta;
    };
    std::map<std::vector<int>, std::vector<Entry>> by_class;
    Vec dir = out.rotation_form ? Vec(xi_direction / xi_direction.norm()) : Vec();
    out.band_lo = std::numeric_limits<double>::infinity();
    out.band_hi = 0.0;
    for (const auto& cc : out.cutoff.classes) {
        std::vector<int> key;
        for (int a = 0; a < k; ++a)
            if (a != a1 && a != a2) key.push_back(cc.counts[a]);
        Entry e{cc.counts[a1], cc.counts[a2], std::exp(cc.log_ratio + log_xi), Vec()};
        if (out.rotation_form) e.zeta = child_frequency(sys, cc.counts, cc.log_ratio, log_xi, dir);
        out.band_lo = std::min(out.band_lo, e.value);
        out.band_hi = std::max(out.band_hi, e.value);
        by_class[key].push_back(std::move(e));
    }
    out.classes = by_class.size();
    out.k_constant = out.classes / std::pow(log_xi, (k - 2) * (0.5 + delta));

    for (auto& [key, entries] : by_class) {
        std::sort(entries.begin(), entries.end(), [](const Entry& x, const Entry& y) { return x.value < y.value; });
        std::size_t m = entries.size();
        std::vector<double> nearest(m, std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < m; ++i) {
            // sorted by |zeta|, so |zeta_j - zeta_i| >= value_j - value_i
            for (std::size_t j = i + 1; j < m; ++j) {
                double radial = entries[j].value - entries[i].value;
                double gap = out.rotation_form ? (entries[j].zeta - entries[i].zeta).norm() : radial;
                nearest[i] = std::min(nearest[i], gap);
                nearest[j] = std::min(nearest[j], gap);
                if (radial > 1.0) break;
            }
        }
        std::map<long long, SeparationRow> rows;
        for (std::size_t i = 0; i < m; ++i) {
            long long band = static_cast<long long>(std::floor(entries[i].value));
            SeparationRow& row = rows[band];
            row.klass = key;
            row.band = band;
            std::pair<int, int> pr{entries[i].j1, entries[i].j2};
            if (std::find(row.pairs.begin(), row.pairs.end(), pr) == row.pairs.end()) row.pairs.push_back(pr);
            row.min_gap = std::min(row.min_gap, nearest[i]);
            out.min_gap = std::min(out.min_gap, nearest[i]);
        }
        for (auto& [band, row] : rows) {
            // ratio form: one count pair per band; rotation form: children at distance > 1
            bool bad = out.rotation_form ? row.min_gap <= 1.0 : row.pairs.size() > 1;
            if (bad) ++out.violations;
            out.rows.push_back(std::move(row));
        }
    }
    out.bands = out.rows.size();
    return out;
}

// ------------------------------------------------------------ multinomial

double multinomial_prob(const std::vector<int>& counts, const std::vector<double>& p) {
    if (counts.size() != p.size()) throw InvalidArgument("counts and probabilities differ in length");
    return std::exp(log_multinomial(counts, p));
}

namespace {

MultinomialMax multinomial_search(int n, const std::vector<double>& p, const std::vector<int>& lo,
                                  const std::vector<int>& hi) {
    std::vector<double> lg(n + 2);
    for (int i = 0; i <= n + 1; ++i) lg[i] = std::lgamma(i + 1.0);
    std::vector<double> lp(p.size());
    for (std::size_t a = 0; a < p.size(); ++a) lp[a] = p[a] > 0.0 ? std::log(p[a]) : -1e300;
    MultinomialMax best;
    double best_log = -std::numeric_limits<double>::infinity();
    for_each_composition(n, lo, hi, [&](const std::vector<int>& c) {
        double s = lg[n];
        for (std::size_t a = 0; a < c.size(); ++a) {
            s -= lg[c[a]];
            if (c[a] > 0) s += c[a] * lp[a];
        }
        if (s > best_log) {
            best_log = s;
            best.argmax = c;
        }
    });
    best.max_prob = std::exp(best_log);
    return best;
}

}  // namespace

MultinomialMax multinomial_max(int n, const ProbabilityVector& p) {
    if (n < 0) throw InvalidArgument("negative length");
    int k = static_cast<int>(p.size());
    std::vector<int> lo(k), hi(k);
    for (int a = 0; a < k; ++a) {
        int centre = static_cast<int>(std::floor(p[a] * n));
        lo[a] = std::max(0, centre - 10 * k);
        hi[a] = std::min(n, centre + 10 * k);
    }
    return multinomial_search(n, p.values(), lo, hi);
}

MultinomialMax multinomial_max_brute(int n, const ProbabilityVector& p) {
    if (n < 0) throw InvalidArgument("negative length");
    int k = static_cast<int>(p.size());
    return multinomial_search(n, p.values(), std::vector<int>(k, 0), std::vector<int>(k, n));
}

// ---------------------------------------------------------------- pipeline

PipelineAudit average_bound_report(std::shared_ptr<const MarkovMeasure> mu, const Vec& direction, double log_xi, int l,
                                   double delta, double eps, double tau, const Evaluator& ev, double theta,
                                   double grid_step) {
    if (!mu->is_bernoulli()) throw InvalidArgument("the averaging chain is set up for Bernoulli measures");
    if (log_xi > 700.0) throw InvalidArgument("|xi| must be representable as a double");
    if (!(grid_step > 0.0 && grid_step <= 1.0)) throw InvalidArgument("grid step must lie in (0,1]");
    const IFSSystem& sys = mu->system();
    int d = sys.dim();
    if (direction.size() != d || direction.norm() == 0.0) throw InvalidArgument("direction has wrong dimension");
    Vec dir = direction / direction.norm();
    ProbabilityVector p(mu->bernoulli_weights());
    GoodWordParams params = good_word_params(sys, p, log_xi, l, delta, eps, theta);
    GoodCutoff cut = good_cutoff(sys, params);
    FourierEngine engine(mu, ev);

    PipelineAudit out;
    out.log_xi = log_xi;
    out.tau = tau;
    FourierValue direct = engine.eval(std::exp(log_xi) * dir);
    out.direct = std::abs(direct.value);
    out.direct_error = direct.error;

    std::size_t m = cut.classes.size();
    std::vector<Vec> zeta(m);
    std::vector<double> absval(m), err(m);
    for (std::size_t i = 0; i < m; ++i) zeta[i] = child_frequency(sys, cut.classes[i].counts, cut.classes[i].log_ratio,
                                                                  log_xi, dir);
    parallel_for(m, 1, [&](std::size_t i) {
        FourierValue v = engine.eval(zeta[i]);
        absval[i] = std::abs(v.value);
        err[i] = v.error;
    });
    for (std::size_t i = 0; i < m; ++i) {
        out.average += cut.classes[i].mass * absval[i];
        out.average_error += cut.classes[i].mass * err[i];
    }
    out.bad_word_mass = cut.bad_mass;
    out.triangle_ok = out.direct - out.direct_error <= out.average + out.average_error + out.bad_word_mass + 1e-12;

    // bad bands: unit shells below T where the transform is still large
    out.T = std::exp(params.log_threshold + log_xi);
    double threshold = std::pow(log_xi, -tau);
    std::vector<Vec> dirs;
    for (const auto& z : zeta) {
        Vec u = z / z.norm();
        bool seen = false;
        for (const auto& v : dirs)
            if ((u - v).norm() < 1e-9) {
                seen = true;
                break;
            }
        if (!seen) dirs.push_back(u);
    }
    std::set<long long> shells;
    for (const auto& z : zeta) shells.insert(static_cast<long long>(std::floor(z.norm())));
    std::map<long long, bool> bad;
    int per_shell = static_cast<int>(std::ceil(1.0 / grid_step));
    for (long long s : shells) {
        bool is_bad = false;
        for (int j = 0; j <= per_shell && !is_bad; ++j) {
            double t = s + std::min(1.0, j * grid_step);
            for (const auto& u : dirs) {
                FourierValue v = engine.eval(t * u);
                if (std::abs(v.value) + v.error >= threshold) {
                    is_bad = true;
                    break;
                }
            }
        }
        // the children themselves are points of the shell
        for (std::size_t i = 0; i < m && !is_bad; ++i)
            if (static_cast<long long>(std::floor(zeta[i].norm())) == s && absval[i] + err[i] >= threshold) is_bad = true;
        bad[s] = is_bad;
        if (is_bad) ++out.bad_bands;
    }
    std::map<int, double> max_by_length;
    std::set<std::pair<long long, std::vector<int>>> rows_seen;
    for (std::size_t i = 0; i < m; ++i) {
        long long s = static_cast<long long>(std::floor(zeta[i].norm()));
        if (!bad[s]) continue;
        const auto& c = cut.classes[i].counts;
        out.bad_band_actual += cut.classes[i].mass * absval[i];
        out.bad_band_majorant += multinomial_prob(c, params.p);
        int len = std::accumulate(c.begin(), c.end(), 0);
        std::vector<int> key = c;
        key.push_back(len);
        if (rows_seen.insert({s, key}).second) {
            auto it = max_by_length.find(len);
            if (it == max_by_length.end()) it = max_by_length.emplace(len, multinomial_max(len, p).max_prob).first;
            out.multinomial_majorant += it->second;
        }
    }
    out.majorant_ok = out.bad_band_actual <= out.bad_band_majorant + 1e-15 &&
                      out.bad_band_majorant <= out.multinomial_majorant + 1e-15;
    return out;
}

}  // namespace fdecay
