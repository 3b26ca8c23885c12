#include "fdecay/measures.hpp"

#include <numeric>
#include <queue>
#include <random>

namespace fdecay {

namespace {

double logsumexp(const std::vector<double>& v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

int pick(const std::vector<double>& cumulative, double u) {
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u * cumulative.back());
    return static_cast<int>(std::min<std::size_t>(it - cumulative.begin(), cumulative.size() - 1));
}

// Perron eigenvector by power iteration; `apply` maps v -> M v for a
// primitive non-negative M. Returns (rho, v) with v > 0, sum v = 1.
std::pair<double, std::vector<double>> perron(std::size_t n,
                                              const std::function<void(const std::vector<double>&, std::vector<double>&)>& apply) {
    std::vector<double> v(n, 1.0 / static_cast<double>(n)), w(n);
    double rho = 0.0;
    for (int it = 0; it < 100000; ++it) {
        apply(v, w);
        // Averaging with the previous iterate removes any periodic component
        // without moving the eigenvector.
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += w[i];
        rho = s;
        double diff = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double nv = 0.5 * (w[i] / s + v[i]);
            diff = std::max(diff, std::abs(nv - v[i]));
            v[i] = nv;
        }
        if (diff < 1e-16 && it > 10) break;
    }
    apply(v, w);
    double s = std::accumulate(w.begin(), w.end(), 0.0);
    rho = s / std::accumulate(v.begin(), v.end(), 0.0);
    return {rho, v};
}

Vec fixed_point(const ConformalMap& m, int d) {
    Vec y = Vec::Constant(d, 0.5);
    for (int i = 0; i < 400; ++i) y = m.apply(y);
    return y;
}

}  // namespace

// -------------------------------------------------------- probability vector

ProbabilityVector::ProbabilityVector(std::vector<double> p) : p_(std::move(p)) {
    if (p_.empty()) throw InvalidArgument("probability vector is empty");
    double s = 0.0;
    for (double x : p_) {
        if (!(x > 0.0)) throw InvalidArgument("probability weights must be positive");
        s += x;
    }
    if (std::abs(s - 1.0) > 1e-12) throw InvalidArgument("probability weights must sum to 1");
}

// ----------------------------------------------------------------- potential

GibbsPotential GibbsPotential::per_symbol(std::vector<double> psi) {
    GibbsPotential g;
    g.grade_ = Grade::G0;
    g.table_ = Eigen::Map<Vec>(psi.data(), static_cast<long>(psi.size()));
    return g;
}

GibbsPotential GibbsPotential::pair(Mat psi) {
    if (psi.rows() != psi.cols()) throw InvalidArgument("pair potential must be square");
    GibbsPotential g;
    g.grade_ = Grade::G0;
    g.pair_ = true;
    g.table_ = std::move(psi);
    return g;
}

GibbsPotential GibbsPotential::bernoulli(const ProbabilityVector& p) {
    std::vector<double> l;
    for (double x : p.values()) l.push_back(std::log(x));
    return per_symbol(l);
}

GibbsPotential GibbsPotential::geometric(double s) {
    GibbsPotential g;
    g.grade_ = Grade::G1;
    g.s_ = s;
    return g;
}

GibbsPotential GibbsPotential::user(std::function<double(const Vec&)> psi, std::function<Vec(const Vec&)> grad) {
    GibbsPotential g;
    g.grade_ = Grade::G2;
    g.lw_ = [psi](const IFSSystem& sys, int a, const Vec& x) { return psi(sys.map(a).apply(x)); };
    g.grad_ = [grad](const IFSSystem& sys, int a, const Vec& x) -> Vec {
        const auto& m = sys.map(a);
        const ConformalDerivative d = m.derivative(x);
        return (d.scale * d.rotation).transpose() * grad(m.apply(x));
    };
    return g;
}

GibbsPotential GibbsPotential::pair_function(LogWeightFn lw, GradFn grad) {
    GibbsPotential g;
    g.grade_ = Grade::G2;
    g.lw_ = std::move(lw);
    g.grad_ = std::move(grad);
    return g;
}

double GibbsPotential::log_weight(const IFSSystem& sys, int a, const Vec& x, int first_symbol) const {
    switch (grade_) {
        case Grade::G0:
            if (pair_) {
                if (first_symbol < 0) throw InvalidArgument("pair potential needs the first symbol of x");
                return table_(a, first_symbol);
            }
            return table_(a, 0);
        case Grade::G1:
            return s_ * sys.map(a).log_scale(x);
        case Grade::G2:
            return lw_(sys, a, x);
    }
    return 0.0;
}

Vec GibbsPotential::grad_log_weight(const IFSSystem& sys, int a, const Vec& x, int first_symbol) const {
    (void)first_symbol;
    switch (grade_) {
        case Grade::G0:
            return Vec::Zero(sys.dim());
        case Grade::G1:
            return s_ * sys.map(a).grad_log_scale(x);
        case Grade::G2:
            if (grad_) return grad_(sys, a, x);
            break;
    }
    const double h = 1e-6;
    Vec g(sys.dim());
    for (int i = 0; i < sys.dim(); ++i) {
        Vec xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        g[i] = (lw_(sys, a, xp) - lw_(sys, a, xm)) / (2 * h);
    }
    return g;
}

double GibbsPotential::gradient_check(const IFSSystem& sys) const {
    if (grade_ == Grade::G0) return 0.0;
    double worst = 0.0;
    const double h = 1e-5;
    for (const auto& p : coded_probes(sys, 4)) {
        for (int a = 0; a < sys.size(); ++a) {
            const Vec g = grad_log_weight(sys, a, p.x, p.symbol);
            for (int i = 0; i < sys.dim(); ++i) {
                Vec xp = p.x, xm = p.x;
                xp[i] += h;
                xm[i] -= h;
                double fd = (log_weight(sys, a, xp, p.symbol) - log_weight(sys, a, xm, p.symbol)) / (2 * h);
                worst = std::max(worst, std::abs(fd - g[i]));
            }
        }
    }
    return worst;
}

std::vector<CodedProbe> coded_probes(const IFSSystem& sys, int per_axis) {
    std::vector<CodedProbe> out;
    for (int b = 0; b < sys.size(); ++b)
        for (const Vec& p : cube_probes(sys.dim(), per_axis)) out.push_back({sys.map(b).apply(p), b});
    return out;
}

// ------------------------------------------------------------------ pressure

double pressure_estimate(const IFSSystem& sys, const GibbsPotential& psi, int n) {
    if (n < 1) throw InvalidArgument("pressure needs n >= 1");
    const int k = sys.size();
    const auto& A = sys.subshift();
    const double ninf = -std::numeric_limits<double>::infinity();
    if (psi.grade() == GibbsPotential::Grade::G0) {
        // log W(a,b) for prepending a to a point whose coding starts with b.
        Vec dummy = Vec::Constant(sys.dim(), 0.5);
        std::vector<double> u(k, ninf);
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b)
                if (A.allowed(a, b)) u[a] = std::max(u[a], psi.log_weight(sys, a, dummy, b));
        for (int step = 1; step < n; ++step) {
            std::vector<double> nu(k, ninf);
            for (int a = 0; a < k; ++a) {
                std::vector<double> terms;
                for (int b = 0; b < k; ++b)
                    if (A.allowed(a, b) && std::isfinite(u[b])) terms.push_back(psi.log_weight(sys, a, dummy, b) + u[b]);
                if (!terms.empty()) nu[a] = logsumexp(terms);
            }
            u = nu;
        }
        double tot = logsumexp(u);
        if (!std::isfinite(tot)) throw EmptyAdmissibleSet("no admissible word of length " + std::to_string(n));
        return tot / n;
    }
    // G1/G2: sup over coded probes per word, words indexed in base k.
    std::size_t total = 1;
    for (int i = 0; i < n; ++i) {
        if (total > 50000000 / static_cast<std::size_t>(k)) throw WordBudgetExceeded("pressure enumeration too large");
        total *= static_cast<std::size_t>(k);
    }
    std::vector<double> best(total, ninf);
    const auto probes = coded_probes(sys, sys.dim() == 1 ? 5 : 3);
    std::function<void(int, const Vec&, int, double, std::size_t, std::size_t)> rec =
        [&](int depth, const Vec& y, int first, double acc, std::size_t idx, std::size_t place) {
            if (depth == n) {
                best[idx] = std::max(best[idx], acc);
                return;
            }
            for (int a = 0; a < k; ++a) {
                if (!A.allowed(a, first)) continue;
                double lw = psi.log_weight(sys, a, y, first);
                rec(depth + 1, sys.map(a).apply(y), a, acc + lw, idx + static_cast<std::size_t>(a) * place,
                    place * static_cast<std::size_t>(k));
            }
        };
    for (const auto& p : probes) rec(0, p.x, p.symbol, 0.0, 0, 1);
    std::vector<double> finite;
    for (double v : best)
        if (std::isfinite(v)) finite.push_back(v);
    if (finite.empty()) throw EmptyAdmissibleSet("no admissible word of length " + std::to_string(n));
    return logsumexp(finite) / n;
}

// ------------------------------------------------------------- normalisation

namespace {

// Boxes of all admissible prefixes up to depth m, for locating points.
struct CylinderLocator {
    const IFSSystem* sys = nullptr;
    int m = 0;
    std::vector<std::vector<int>> words;   // all admissible words of length m
    std::vector<Box> boxes;                // their hulls
    std::vector<int> index_of;             // base-k index -> position or -1

    void build(const IFSSystem& s, int depth) {
        sys = &s;
        m = depth;
        std::size_t total = 1;
        for (int i = 0; i < m; ++i) total *= static_cast<std::size_t>(s.size());
        index_of.assign(total, -1);
        for_each_word(s, m, [&](const Word& w) {
            index_of[key(w.symbols())] = static_cast<int>(words.size());
            words.push_back(w.symbols());
            boxes.push_back(word_hull(s, w));
        });
    }
    std::size_t key(const std::vector<int>& w) const {
        std::size_t x = 0;
        for (int a : w) x = x * static_cast<std::size_t>(sys->size()) + static_cast<std::size_t>(a);
        return x;
    }
    // Nearest depth-m cylinder to x among those starting with `first` (or any).
    int locate(const Vec& x, int first) const {
        int best = -1;
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < words.size(); ++i) {
            if (first >= 0 && words[i][0] != first) continue;
            double dd = boxes[i].distance_to(x);
            if (dd < bd) {
                bd = dd;
                best = static_cast<int>(i);
                if (dd == 0.0) break;
            }
        }
        return best;
    }
};

}  // namespace

GibbsPotential normalize_potential(const IFSSystem& sys, const GibbsPotential& psi, int depth) {
    const int k = sys.size();
    const auto& A = sys.subshift();
    if (A.primitivity_exponent() < 1) throw NonPrimitiveSubshift("subshift is not mixing");
    const Vec dummy = Vec::Constant(sys.dim(), 0.5);

    if (psi.grade() == GibbsPotential::Grade::G0) {
        Mat W = Mat::Zero(k, k);
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b)
                if (A.allowed(a, b)) W(a, b) = std::exp(psi.log_weight(sys, a, dummy, b));
        // h with sum_a h_a W(a,b) = rho h_b, i.e. the transfer operator on
        // 1-cylinder functions.
        auto [rho, h] = perron(static_cast<std::size_t>(k), [&](const std::vector<double>& v, std::vector<double>& out) {
            for (int b = 0; b < k; ++b) {
                out[b] = 0.0;
                for (int a = 0; a < k; ++a) out[b] += W(a, b) * v[a];
            }
        });
        Mat L = Mat::Constant(k, k, -std::numeric_limits<double>::infinity());
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b)
                if (A.allowed(a, b)) L(a, b) = std::log(W(a, b) * h[a] / (rho * h[b]));
        bool column_free = A.is_full();
        for (int a = 0; a < k && column_free; ++a)
            for (int b = 1; b < k; ++b)
                if (std::abs(L(a, b) - L(a, 0)) > 1e-14) column_free = false;
        GibbsPotential out;
        if (column_free) {
            std::vector<double> v(k);
            for (int a = 0; a < k; ++a) v[a] = L(a, 0);
            out = GibbsPotential::per_symbol(v);
        } else {
            out = GibbsPotential::pair(L);
        }
        out.log_rho = std::log(rho);
        double res = 0.0;
        for (int b = 0; b < k; ++b) {
            double s = 0.0;
            for (int a = 0; a < k; ++a)
                if (A.allowed(a, b)) s += std::exp(L(a, b));
            res = std::max(res, std::abs(s - 1.0));
        }
        out.residual = res;
        return out;
    }

    // G1/G2: eigenfunction of the transfer operator restricted to functions
    // constant on depth-m cylinders, evaluated at cylinder anchors.
    if (depth < 1) throw InvalidArgument("normalisation depth must be >= 1");
    auto loc = std::make_shared<CylinderLocator>();
    loc->build(sys, depth);
    const std::size_t ns = loc->words.size();
    std::vector<Vec> anchors(ns);
    for (std::size_t i = 0; i < ns; ++i) {
        const Word w = sys.word(loc->words[i]);
        int last = w.back();
        Vec ref = Vec::Constant(sys.dim(), 0.5);
        for (int b = 0; b < k; ++b)
            if (A.allowed(last, b)) {
                ref = fixed_point(sys.map(b), sys.dim());
                break;
            }
        anchors[i] = compose_word(sys, w, ref);
    }
    // successor[i][a] = index of (a w)|m, weight[i][a] = w_a(anchor_i)
    std::vector<std::vector<std::pair<int, double>>> succ(ns);
    for (std::size_t i = 0; i < ns; ++i) {
        const auto& w = loc->words[i];
        for (int a = 0; a < k; ++a) {
            if (!A.allowed(a, w[0])) continue;
            std::vector<int> aw{a};
            aw.insert(aw.end(), w.begin(), w.end() - 1);
            int j = loc->index_of[loc->key(aw)];
            succ[i].push_back({j, std::exp(psi.log_weight(sys, a, anchors[i], w[0]))});
        }
    }
    auto [rho, h] = perron(ns, [&](const std::vector<double>& v, std::vector<double>& out) {
        for (std::size_t i = 0; i < ns; ++i) {
            double s = 0.0;
            for (auto [j, wt] : succ[i]) s += wt * v[j];
            out[i] = s;
        }
    });
    auto hv = std::make_shared<std::vector<double>>(h);
    const double log_rho = std::log(rho);
    GibbsPotential base = psi;
    auto lw = [base, loc, hv, log_rho](const IFSSystem& s, int a, const Vec& x) {
        int ix = loc->locate(x, -1);
        int iy = loc->locate(s.map(a).apply(x), a);
        return base.log_weight(s, a, x, -1) + std::log((*hv)[iy]) - std::log((*hv)[ix]) - log_rho;
    };
    auto grad = [base](const IFSSystem& s, int a, const Vec& x) { return base.grad_log_weight(s, a, x, -1); };
    GibbsPotential out = GibbsPotential::pair_function(lw, grad);
    out.log_rho = log_rho;
    double res = 0.0;
    for (const auto& p : coded_probes(sys, sys.dim() == 1 ? 7 : 3)) {
        double s = 0.0;
        for (int a = 0; a < k; ++a)
            if (A.allowed(a, p.symbol)) s += out.weight(sys, a, p.x, p.symbol);
        res = std::max(res, std::abs(s - 1.0));
    }
    out.residual = res;
    return out;
}

// ------------------------------------------------------------ Markov measure

std::shared_ptr<MarkovMeasure> MarkovMeasure::bernoulli(std::shared_ptr<const IFSSystem> sys,
                                                        const ProbabilityVector& p) {
    if (static_cast<int>(p.size()) != sys->size()) throw InvalidArgument("weights do not match alphabet");
    if (!sys->subshift().is_full()) return gibbs(sys, GibbsPotential::bernoulli(p));
    std::shared_ptr<MarkovMeasure> m(new MarkovMeasure());
    m->sys_ = std::move(sys);
    m->bernoulli_ = true;
    m->p_ = p.values();
    m->potential_ = GibbsPotential::bernoulli(p);
    const int k = m->sys_->size();
    m->block_ = 1;
    for (int a = 0; a < k; ++a) m->states_.push_back({a});
    m->pi_ = p.values();
    m->next_.assign(k, {});
    m->next_state_.assign(k, std::vector<int>(k, -1));
    for (int s = 0; s < k; ++s)
        for (int b = 0; b < k; ++b) {
            m->next_[s].push_back({b, p[b]});
            m->next_state_[s][b] = b;
        }
    m->finish();
    return m;
}

std::shared_ptr<MarkovMeasure> MarkovMeasure::gibbs(std::shared_ptr<const IFSSystem> sys, const GibbsPotential& psi,
                                                    int depth) {
    std::shared_ptr<MarkovMeasure> m(new MarkovMeasure());
    m->sys_ = sys;
    m->potential_ = psi;
    const int k = sys->size();
    const auto& A = sys->subshift();
    const bool g0 = psi.grade() == GibbsPotential::Grade::G0;
    const int blk = g0 ? 1 : std::max(1, depth);
    m->block_ = blk;

    // States are admissible blocks of length blk; appending letter b moves
    // from u to (u_2..u_blk, b) with weight exp(phi(u b)).
    CylinderLocator loc;
    loc.build(*sys, blk);
    m->states_ = loc.words;
    const std::size_t ns = m->states_.size();
    std::vector<Vec> anchor_of(k);
    auto window_weight = [&](const std::vector<int>& u, int b) -> double {
        // weight of prepending u[0] to the cylinder (u[1..], b)
        std::vector<int> rest(u.begin() + 1, u.end());
        rest.push_back(b);
        if (g0) return psi.log_weight(*sys, u[0], Vec::Constant(sys->dim(), 0.5), rest[0]);
        const Word w = sys->word(rest);
        Vec ref = Vec::Constant(sys->dim(), 0.5);
        for (int c = 0; c < k; ++c)
            if (A.allowed(w.back(), c)) {
                ref = fixed_point(sys->map(c), sys->dim());
                break;
            }
        return psi.log_weight(*sys, u[0], compose_word(*sys, w, ref), rest[0]);
    };
    std::vector<std::vector<std::pair<int, double>>> M(ns);   // (target state, weight)
    std::vector<std::vector<int>> letter_of(ns);
    double maxlog = -std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> logs(ns);
    for (std::size_t i = 0; i < ns; ++i) {
        const auto& u = m->states_[i];
        for (int b = 0; b < k; ++b) {
            if (!A.allowed(u.back(), b)) continue;
            std::vector<int> v(u.begin() + 1, u.end());
            v.push_back(b);
            int j = loc.index_of[loc.key(v)];
            double lw = window_weight(u, b);
            logs[i].push_back(lw);
            maxlog = std::max(maxlog, lw);
            M[i].push_back({j, 0.0});
            letter_of[i].push_back(b);
        }
    }
    for (std::size_t i = 0; i < ns; ++i)
        for (std::size_t t = 0; t < M[i].size(); ++t) M[i][t].second = std::exp(logs[i][t] - maxlog);
    auto [rho_r, r] = perron(ns, [&](const std::vector<double>& v, std::vector<double>& out) {
        for (std::size_t i = 0; i < ns; ++i) {
            double s = 0.0;
            for (auto [j, w] : M[i]) s += w * v[j];
            out[i] = s;
        }
    });
    auto [rho_l, l] = perron(ns, [&](const std::vector<double>& v, std::vector<double>& out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t i = 0; i < ns; ++i)
            for (auto [j, w] : M[i]) out[j] += w * v[i];
    });
    (void)rho_l;
    m->next_.assign(ns, {});
    m->next_state_.assign(ns, std::vector<int>(k, -1));
    m->pi_.assign(ns, 0.0);
    double z = 0.0;
    for (std::size_t i = 0; i < ns; ++i) {
        m->pi_[i] = l[i] * r[i];
        z += m->pi_[i];
    }
    for (auto& x : m->pi_) x /= z;
    for (std::size_t i = 0; i < ns; ++i)
        for (std::size_t t = 0; t < M[i].size(); ++t) {
            auto [j, w] = M[i][t];
            m->next_[i].push_back({letter_of[i][t], w * r[j] / (rho_r * r[i])});
            m->next_state_[i][letter_of[i][t]] = j;
        }

    if (!g0) {
        // Oscillation of the log-weight inside depth-blk and depth-(blk-1)
        // cylinders bounds the distortion of the block approximation.
        auto variation = [&](int len) {
            double var = 0.0;
            if (len < 1) return std::numeric_limits<double>::infinity();
            const auto probes = cube_probes(sys->dim(), sys->dim() == 1 ? 5 : 3);
            for_each_word(*sys, len, [&](const Word& w) {
                for (int a = 0; a < k; ++a) {
                    if (!A.allowed(a, w[0])) continue;
                    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
                    for (const Vec& p : probes) {
                        double v = psi.log_weight(*sys, a, compose_word(*sys, w, p), w[0]);
                        lo = std::min(lo, v);
                        hi = std::max(hi, v);
                    }
                    var = std::max(var, hi - lo);
                }
            });
            return var;
        };
        const double v1 = variation(blk);
        const double v0 = blk > 1 ? variation(blk - 1) : 2 * v1;
        const double theta = std::min(0.9, v0 > 0 ? v1 / v0 : 0.5);
        m->inflation_ = std::exp(2.0 * v1 / (1.0 - theta));
    }
    m->finish();
    return m;
}

void MarkovMeasure::finish() {
    const int k = sys_->size();
    const int d = sys_->dim();
    // Letter-level marginals.
    pi1_ = Vec::Zero(k);
    p1_ = Mat::Zero(k, k);
    for (std::size_t s = 0; s < states_.size(); ++s) {
        pi1_[states_[s][0]] += pi_[s];
        if (block_ == 1)
            for (auto [b, p] : next_[s]) p1_(states_[s][0], b) += p;
    }
    // Fixed points and per-last-letter reference points.
    std::vector<Vec> fp(k);
    for (int a = 0; a < k; ++a) fp[a] = fixed_point(sys_->map(a), d);
    ref_.assign(k, Vec());
    for (int a = 0; a < k; ++a) {
        int best = -1;
        for (int b = 0; b < k; ++b) {
            if (!sys_->subshift().allowed(a, b)) continue;
            if (best < 0 || fp[b][0] < fp[best][0]) best = b;
        }
        ref_[a] = fp[best];
    }
}

Vec MarkovMeasure::reference_point(int last_symbol) const {
    if (last_symbol < 0) {
        Vec best = ref_[0];
        for (const auto& r : ref_)
            if (r[0] < best[0]) best = r;
        return best;
    }
    return ref_.at(last_symbol);
}

Vec MarkovMeasure::anchor(const Word& w) const {
    return compose_word(*sys_, w, reference_point(w.empty() ? -1 : w.back()));
}

double MarkovMeasure::exact_mass(const Word& w) const {
    if (w.empty()) return 1.0;
    const int k = sys_->size();
    if (!sys_->subshift().admissible(w)) throw InadmissibleWord("word " + w.str(sys_->names()) + " is not admissible");
    if (bernoulli_) {
        double m = 1.0;
        for (int a : w.symbols()) m *= p_[a];
        return m;
    }
    const std::size_t n = w.size();
    const std::size_t blk = static_cast<std::size_t>(block_);
    if (n >= blk) {
        int s = -1;
        for (std::size_t i = 0; i < states_.size(); ++i)
            if (std::equal(states_[i].begin(), states_[i].end(), w.symbols().begin())) {
                s = static_cast<int>(i);
                break;
            }
        if (s < 0) return 0.0;
        double m = pi_[s];
        for (std::size_t i = blk; i < n; ++i) {
            int b = w[i];
            double p = 0.0;
            for (auto [c, q] : next_[s])
                if (c == b) p = q;
            m *= p;
            s = next_state_[s][b];
            if (s < 0) return 0.0;
        }
        return m;
    }
    double m = 0.0;
    for (std::size_t i = 0; i < states_.size(); ++i)
        if (std::equal(w.symbols().begin(), w.symbols().end(), states_[i].begin())) m += pi_[i];
    (void)k;
    return m;
}

Interval MarkovMeasure::cylinder_mass(const Word& w) const {
    const double m = exact_mass(w);
    if (inflation_ == 1.0) return {m, m};
    return {m / inflation_, std::min(1.0, m * inflation_)};
}

CylNode MarkovMeasure::root() const {
    CylNode n;
    n.word = Word({}, sys_->size());
    n.mass = 1.0;
    n.box = Box::unit(sys_->dim());
    for (int a = 0; a < sys_->size(); ++a) {
        Box b = word_hull(*sys_, sys_->word({a}));
        n.box = a == 0 ? b : n.box.hull(b);
    }
    return n;
}

void MarkovMeasure::children(const CylNode& node, std::vector<CylNode>& out) const {
    out.clear();
    const int k = sys_->size();
    const std::size_t len = node.word.size();
    if (block_ == 1 && len >= 1 && node.state >= 0) {
        for (auto [b, p] : next_[node.state]) {
            if (p <= 0.0) continue;
            CylNode c;
            c.word = node.word.append(b);
            c.mass = node.mass * p;
            c.state = next_state_[node.state][b];
            c.box = word_hull(*sys_, c.word);
            out.push_back(std::move(c));
        }
        return;
    }
    for (int b = 0; b < k; ++b) {
        if (len > 0 && !sys_->subshift().allowed(node.word.back(), b)) continue;
        CylNode c;
        c.word = node.word.append(b);
        c.mass = exact_mass(c.word);
        if (c.mass <= 0.0) continue;
        if (block_ == 1) c.state = b;
        c.box = word_hull(*sys_, c.word);
        out.push_back(std::move(c));
    }
}

std::vector<Word> MarkovMeasure::sample_words(std::uint64_t seed, std::size_t n, int length) const {
    std::mt19937_64 rng(mix_seed(seed, 0x51));
    std::vector<double> cum_pi(pi_.size());
    std::partial_sum(pi_.begin(), pi_.end(), cum_pi.begin());
    std::vector<std::vector<double>> cum(next_.size());
    for (std::size_t s = 0; s < next_.size(); ++s) {
        double acc = 0.0;
        for (auto [b, p] : next_[s]) cum[s].push_back(acc += p);
    }
    std::vector<Word> out;
    out.reserve(n);
    std::vector<int> buf;
    for (std::size_t i = 0; i < n; ++i) {
        buf.clear();
        int s = pick(cum_pi, uniform01(rng));
        buf = states_[s];
        while (static_cast<int>(buf.size()) < length) {
            int t = pick(cum[s], uniform01(rng));
            int b = next_[s][t].first;
            buf.push_back(b);
            s = next_state_[s][b];
        }
        buf.resize(static_cast<std::size_t>(std::max(0, length)));
        out.emplace_back(buf, sys_->size());
    }
    return out;
}

std::vector<Vec> MarkovMeasure::sample(std::uint64_t seed, std::size_t n) const {
    // Depth so that every cylinder is below machine precision; uses sup|lambda|
    // over words of length 3 to avoid per-letter bounds equal to 1.
    const int d = sys_->dim();
    double worst = 0.0;
    const int probe_len = sys_->all_similitudes() ? 1 : 3;
    for_each_word(*sys_, probe_len, [&](const Word& w) {
        worst = std::max(worst, word_image_ball(*sys_, w).radius / (0.5 * std::sqrt(static_cast<double>(d))));
    });
    worst = std::min(worst, 0.999);
    const int depth = std::min(400, static_cast<int>(std::ceil(probe_len * std::log(1e-17) / std::log(worst))));
    const auto words = sample_words(seed, n, depth);
    std::vector<Vec> out;
    out.reserve(n);
    const bool fast1d = d == 1 && sys_->all_similitudes();
    std::vector<double> r1, t1;
    if (fast1d)
        for (int a = 0; a < sys_->size(); ++a) {
            r1.push_back(sys_->map(a).similitude()->ratio * sys_->map(a).similitude()->rotation.matrix()(0, 0));
            t1.push_back(sys_->map(a).similitude()->translation[0]);
        }
    for (const Word& w : words) {
        const Vec ref = reference_point(w.back());
        if (fast1d) {
            double y = ref[0];
            for (std::size_t i = w.size(); i-- > 0;) y = r1[w[i]] * y + t1[w[i]];
            out.push_back(Vec::Constant(1, y));
        } else {
            Vec y = ref;
            for (std::size_t i = w.size(); i-- > 0;) y = sys_->map(w[i]).apply(y);
            out.push_back(y);
        }
    }
    return out;
}

// ------------------------------------------------------ rescaled restriction

RescaledRestriction::RescaledRestriction(std::shared_ptr<const Measure> parent, Word beta, double scale, Vec anchor)
    : parent_(std::move(parent)), beta_(std::move(beta)), scale_(scale), anchor_(std::move(anchor)) {
    if (!(scale_ > 0.0)) throw InvalidArgument("rescaling factor must be positive");
    CylNode n = parent_->root();
    std::vector<CylNode> kids;
    for (std::size_t i = 0; i < beta_.size(); ++i) {
        parent_->children(n, kids);
        bool found = false;
        for (auto& c : kids)
            if (c.word.back() == beta_[i]) {
                n = c;
                found = true;
                break;
            }
        if (!found) throw InadmissibleWord("restriction word has zero mass");
    }
    parent_root_ = n;
}

CylNode RescaledRestriction::to_local(CylNode n) const {
    n.mass /= parent_root_.mass;
    n.box.lo = scale_ * (n.box.lo - anchor_);
    n.box.hi = scale_ * (n.box.hi - anchor_);
    return n;
}

CylNode RescaledRestriction::root() const { return to_local(parent_root_); }

void RescaledRestriction::children(const CylNode& node, std::vector<CylNode>& out) const {
    CylNode p = node;
    p.mass *= parent_root_.mass;
    p.box.lo = node.box.lo / scale_ + anchor_;
    p.box.hi = node.box.hi / scale_ + anchor_;
    parent_->children(p, out);
    for (auto& c : out) c = to_local(c);
}

Interval RescaledRestriction::cylinder_mass(const Word& w) const {
    const Interval num = parent_->cylinder_mass(beta_.concat(w));
    const Interval den = parent_->cylinder_mass(beta_);
    return {num.lo / den.hi, std::min(1.0, num.hi / den.lo)};
}

std::vector<Vec> RescaledRestriction::sample(std::uint64_t seed, std::size_t n) const {
    if (auto mm = dynamic_cast<const MarkovMeasure*>(parent_.get()); mm && mm->letter_markov()) {
        // Continue the letter chain after the forced prefix.
        const auto& sys = mm->system();
        const int k = sys.size();
        std::mt19937_64 rng(mix_seed(seed, 0x77));
        std::vector<std::vector<double>> cum(k);
        for (int a = 0; a < k; ++a) {
            double acc = 0.0;
            for (int b = 0; b < k; ++b) cum[a].push_back(acc += mm->transition()(a, b));
        }
        double worst = 0.0;
        for (int a = 0; a < k; ++a)
            worst = std::max(worst, word_image_ball(sys, sys.word({a})).radius / (0.5 * std::sqrt(double(sys.dim()))));
        worst = std::min(worst, 0.999);
        const int extra = static_cast<int>(std::ceil(std::log(1e-17) / std::log(worst)));
        std::vector<Vec> out;
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<int> s = beta_.symbols();
            if (s.empty()) {
                std::vector<double> c0;
                double acc = 0.0;
                for (int a = 0; a < k; ++a) c0.push_back(acc += mm->initial()[a]);
                s.push_back(pick(c0, uniform01(rng)));
            }
            for (int j = 0; j < extra; ++j) s.push_back(pick(cum[s.back()], uniform01(rng)));
            const Word w(s, k);
            Vec x = compose_word(sys, w, mm->reference_point(w.back()));
            out.push_back(scale_ * (x - anchor_));
        }
        return out;
    }
    // Generic descent through the cylinder tree.
    std::mt19937_64 rng(mix_seed(seed, 0x78));
    std::vector<Vec> out;
    std::vector<CylNode> kids;
    for (std::size_t i = 0; i < n; ++i) {
        CylNode node = root();
        for (int depth = 0; depth < 200 && node.box.diameter() > 1e-14 * std::max(1.0, scale_); ++depth) {
            children(node, kids);
            if (kids.empty()) break;
            std::vector<double> c;
            double acc = 0.0;
            for (auto& ch : kids) c.push_back(acc += ch.mass);
            node = kids[pick(c, uniform01(rng))];
        }
        out.push_back(node.box.center());
    }
    return out;
}

// ------------------------------------------------------------- region masses

MassBracket region_mass(const Measure& mu, const RegionTest& region, const RefineOptions& opt) {
    MassBracket out;
    struct Item {
        double mass;
        CylNode node;
        bool operator<(const Item& o) const { return mass < o.mass; }
    };
    std::priority_queue<Item> queue;
    double lo = 0.0, pending = 0.0, stuck = 0.0;
    CylNode r = mu.root();
    switch (region(r.box)) {
        case Overlap::Inside:
            out.mass = {r.mass, r.mass};
            return out;
        case Overlap::Outside:
            out.mass = {0.0, 0.0};
            return out;
        case Overlap::Partial:
            queue.push({r.mass, r});
            pending = r.mass;
    }
    std::vector<CylNode> kids;
    std::size_t visited = 0;
    while (!queue.empty()) {
        const double hi = lo + pending + stuck;
        if (hi - lo <= opt.rel_width * hi) break;
        if (++visited > opt.node_budget) {
            out.depth_cap_reached = true;
            break;
        }
        Item it = queue.top();
        queue.pop();
        pending -= it.mass;
        if (static_cast<int>(it.node.word.size()) >= opt.depth_cap) {
            stuck += it.mass;
            out.depth_cap_reached = true;
            continue;
        }
        mu.children(it.node, kids);
        for (auto& c : kids) {
            out.max_depth = std::max(out.max_depth, static_cast<int>(c.word.size()));
            switch (region(c.box)) {
                case Overlap::Inside:
                    lo += c.mass;
                    break;
                case Overlap::Outside:
                    break;
                case Overlap::Partial:
                    pending += c.mass;
                    queue.push({c.mass, c});
            }
        }
    }
    pending = std::max(0.0, pending);
    out.mass = {lo, std::min(1.0, lo + pending + stuck)};
    return out;
}

MassBracket ball_mass_estimate(const Measure& mu, const Vec& x, double r, const RefineOptions& opt) {
    if (!(r > 0.0)) throw InvalidArgument("ball radius must be positive");
    return region_mass(mu, [&](const Box& b) {
        if (b.distance_to(x) > r) return Overlap::Outside;
        if (b.farthest_from(x) <= r) return Overlap::Inside;
        return Overlap::Partial;
    }, opt);
}

NonConcProfile affine_nonconcentration_profile(const Measure& mu, const std::vector<double>& eps_grid, int trials,
                                               std::uint64_t seed, const NonConcOptions& opt) {
    if (trials < 1) throw InvalidArgument("need at least one trial");
    if (eps_grid.empty()) throw InvalidArgument("empty epsilon grid");
    const int d = mu.dim();
    const double diam = std::max(mu.root().box.diameter(), 1e-300);
    std::vector<double> radii = opt.radii;
    if (radii.empty())
        for (int j = 1; j <= 5; ++j) radii.push_back(diam * std::ldexp(1.0, -j));
    const auto pts = mu.sample(seed, static_cast<std::size_t>(std::max(2 * trials, 64)));

    NonConcProfile prof;
    prof.eps = eps_grid;
    prof.delta.assign(eps_grid.size(), 0.0);
    for (int t = 0; t < trials; ++t) {
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(t) + 1));
        const Vec& x = pts[static_cast<std::size_t>(t) % pts.size()];
        const double r = radii[static_cast<std::size_t>(t) % radii.size()];
        std::vector<Vec> normals;
        if (d == 1) {
            normals.push_back(Vec::Ones(1));
        } else {
            for (int i = 0; i < d; ++i) normals.push_back(Vec::Unit(d, i));
            for (int i = 0; i < opt.normals_per_trial; ++i) normals.push_back(random_unit_vector(rng, d));
            std::vector<Vec> near;
            for (const Vec& p : pts)
                if ((p - x).norm() <= r) near.push_back(p);
            if (static_cast<int>(near.size()) > d) {
                Vec mean = Vec::Zero(d);
                for (const Vec& p : near) mean += p;
                mean /= static_cast<double>(near.size());
                Mat cov = Mat::Zero(d, d);
                for (const Vec& p : near) cov += (p - mean) * (p - mean).transpose();
                Eigen::SelfAdjointEigenSolver<Mat> es(cov);
                normals.push_back(es.eigenvectors().col(0).normalized());
            }
        }
        const double den = ball_mass_estimate(mu, x, opt.c * r, opt.refine).mass.mid();
        if (!(den > 0.0)) continue;
        for (std::size_t e = 0; e < eps_grid.size(); ++e) {
            const double w = eps_grid[e] * r;
            for (const Vec& nrm : normals) {
                const double c0 = nrm.dot(x);
                const MassBracket num = region_mass(mu, [&](const Box& b) {
                    if (b.distance_to(x) > r) return Overlap::Outside;
                    const Vec c = b.center();
                    const Vec h = 0.5 * (b.hi - b.lo);
                    const double pc = nrm.dot(c) - c0;
                    const double spread = nrm.cwiseAbs().dot(h);
                    if (pc - spread > w || pc + spread < -w) return Overlap::Outside;
                    if (b.farthest_from(x) <= r && pc + spread <= w && pc - spread >= -w) return Overlap::Inside;
                    return Overlap::Partial;
                }, opt.refine);
                prof.delta[e] = std::max(prof.delta[e], std::min(1.0, num.mass.mid() / den));
            }
        }
    }
    std::vector<double> lx, ly;
    for (std::size_t e = 0; e < eps_grid.size(); ++e)
        if (prof.delta[e] > 0.0) {
            lx.push_back(std::log(eps_grid[e]));
            ly.push_back(std::log(prof.delta[e]));
        }
    if (lx.size() >= 2) {
        const LineFit f = fit_line(lx, ly);
        prof.alpha = f.slope;
        prof.C = std::exp(f.intercept);
        prof.residual = std::sqrt(f.rss / static_cast<double>(lx.size()));
    }
    const std::size_t imin = static_cast<std::size_t>(
        std::min_element(eps_grid.begin(), eps_grid.end()) - eps_grid.begin());
    prof.failed = prof.delta[imin] >= opt.fail_threshold || prof.alpha < 0.05;
    return prof;
}

GibbsBrackets gibbs_brackets(const MarkovMeasure& mu, int max_len, int samples, std::uint64_t seed) {
    const auto& sys = mu.system();
    const auto& A = sys.subshift();
    GibbsPotential psi = mu.potential();
    double P = 0.0;
    if (psi.grade() == GibbsPotential::Grade::G0) {
        psi = normalize_potential(sys, psi);
    } else {
        P = normalize_potential(sys, psi, 4).log_rho;
    }
    GibbsBrackets out;
    const auto words = mu.sample_words(seed, static_cast<std::size_t>(samples), max_len);
    const auto probes = coded_probes(sys, 3);
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (std::size_t i = 0; i < words.size(); ++i) {
        const int len = 1 + static_cast<int>(i % static_cast<std::size_t>(max_len));
        const Word w = words[i].prefix(static_cast<std::size_t>(len));
        const double m = mu.cylinder_mass(w).mid();
        for (const auto& p : probes) {
            if (!A.allowed(w.back(), p.symbol)) continue;
            double lw = 0.0;
            Vec y = p.x;
            int first = p.symbol;
            for (std::size_t j = w.size(); j-- > 0;) {
                lw += psi.log_weight(sys, w[j], y, first);
                y = sys.map(w[j]).apply(y);
                first = w[j];
            }
            const double ratio = m / std::exp(lw - len * P);
            lo = std::min(lo, ratio);
            hi = std::max(hi, ratio);
        }
    }
    out.gibbs_c = std::max(hi, 1.0 / lo);
    double qlo = std::numeric_limits<double>::infinity(), qhi = 0.0;
    for (std::size_t i = 0; i + 1 < words.size(); i += 2) {
        const int la = 1 + static_cast<int>(i % static_cast<std::size_t>(max_len));
        const Word a = words[i].prefix(static_cast<std::size_t>(la));
        const Word b = words[i + 1].prefix(static_cast<std::size_t>(1 + (la * 7) % max_len));
        if (!A.allowed(a.back(), b[0])) continue;
        const double r = mu.cylinder_mass(a.concat(b)).mid() / (mu.cylinder_mass(a).mid() * mu.cylinder_mass(b).mid());
        qlo = std::min(qlo, r);
        qhi = std::max(qhi, r);
    }
    if (qhi > 0.0) out.quasi_bernoulli_c = std::max(qhi, 1.0 / qlo);
    return out;
}

}  // namespace fdecay
