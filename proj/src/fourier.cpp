#include "fdecay/fourier.hpp"

#include <map>
#include <mutex>

namespace fdecay {

namespace {

thread_local std::size_t g_last_nodes = 0;

cplx phase(double turns) {
    const double a = kTwoPi * turns;
    return {std::cos(a), std::sin(a)};
}

}  // namespace

std::string Evaluator::name() const {
    switch (method) {
        case Method::FunctionalEquation: return "functional";
        case Method::ProductFormula: return "product";
        case Method::MonteCarlo: return "montecarlo";
    }
    return "?";
}

std::size_t FourierEngine::last_node_count() { return g_last_nodes; }

FourierEngine::FourierEngine(std::shared_ptr<const Measure> mu, Evaluator ev) : mu_(std::move(mu)), ev_(ev) {
    markov_ = dynamic_cast<const MarkovMeasure*>(mu_.get());
    if (ev_.method == Evaluator::Method::MonteCarlo) {
        if (ev_.samples < 1) throw InvalidArgument("Monte Carlo needs at least one sample");
        samples_ = mu_->sample(ev_.seed, ev_.samples);
        return;
    }
    if (!markov_) throw IncompatibleEvaluator("deterministic evaluators need a Markov/self-similar measure");
    if (!(ev_.tol > 0.0)) throw InvalidArgument("tolerance must be positive");
    const IFSSystem& sys = markov_->system();
    const int d = sys.dim();
    const int k = sys.size();
    if (ev_.method == Evaluator::Method::ProductFormula && !(sys.homogeneous() && markov_->is_bernoulli()))
        throw IncompatibleEvaluator("product formula needs a homogeneous self-similar Bernoulli measure");

    const auto& states = markov_->chain_states();
    const auto& next = markov_->chain_next();
    const auto& nstate = markov_->chain_next_state();
    const std::size_t ns = markov_->is_bernoulli() ? 1 : states.size();
    auto succ = [&](std::size_t s, int b) -> std::size_t {
        return markov_->is_bernoulli() ? 0 : static_cast<std::size_t>(nstate[s][b]);
    };

    bary_.assign(ns, Vec::Zero(d));
    var_.assign(ns, 0.0);
    rad_.assign(ns, 0.0);

    if (sys.all_similitudes()) {
        for (int a = 0; a < k; ++a) {
            const Similitude& s = *sys.map(a).similitude();
            lin_.push_back(s.ratio * s.rotation.matrix());
            shift_.push_back(s.translation);
            ratio_.push_back(std::abs(s.ratio));
        }
        merge_counts_ = sys.rotations_commute();
        // m_s = sum_b P(s,b) (L_b m_{s'} + t_b)
        const long n = static_cast<long>(ns) * d;
        Mat A = Mat::Identity(n, n);
        Vec rhs = Vec::Zero(n);
        for (std::size_t s = 0; s < ns; ++s)
            for (auto [b, p] : next[s]) {
                const std::size_t t = succ(s, b);
                A.block(static_cast<long>(s) * d, static_cast<long>(t) * d, d, d) -= p * lin_[b];
                rhs.segment(static_cast<long>(s) * d, d) += p * shift_[b];
            }
        const Vec m = A.fullPivLu().solve(rhs);
        for (std::size_t s = 0; s < ns; ++s) bary_[s] = m.segment(static_cast<long>(s) * d, d);
        // S_s = sum_b P(s,b) (r_b^2 S_{s'} + 2<t_b, L_b m_{s'}> + |t_b|^2)
        Mat B = Mat::Identity(static_cast<long>(ns), static_cast<long>(ns));
        Vec r2 = Vec::Zero(static_cast<long>(ns));
        for (std::size_t s = 0; s < ns; ++s)
            for (auto [b, p] : next[s]) {
                const std::size_t t = succ(s, b);
                B(static_cast<long>(s), static_cast<long>(t)) -= p * ratio_[b] * ratio_[b];
                r2[static_cast<long>(s)] += p * (2.0 * shift_[b].dot(lin_[b] * bary_[t]) + shift_[b].squaredNorm());
            }
        const Vec S = B.fullPivLu().solve(r2);
        for (std::size_t s = 0; s < ns; ++s) var_[s] = std::max(0.0, S[static_cast<long>(s)] - bary_[s].squaredNorm());
    } else {
        c_lin_ = distortion_constants(sys, 4).c_lin;
        // Barycentres from a word average: every word point lies in its own
        // cylinder, so the error is at most the largest cylinder diameter.
        for (std::size_t s = 0; s < ns; ++s) {
            int depth = 1;
            while (std::pow(static_cast<double>(k), depth + 1) <= 20000.0) ++depth;
            struct Leaf {
                Vec p;
                double w;
            };
            std::vector<Leaf> leaves;
            double eta = 0.0;
            std::vector<int> word;
            std::function<void(std::size_t, double)> rec = [&](std::size_t st, double w) {
                if (static_cast<int>(word.size()) == depth) {
                    const Word ww = sys.word(word);
                    leaves.push_back({compose_word(sys, ww, markov_->reference_point(ww.back())), w});
                    eta = std::max(eta, word_hull(sys, ww).diameter());
                    return;
                }
                const std::size_t src = markov_->is_bernoulli() ? 0 : st;
                for (auto [b, p] : next[src]) {
                    if (p <= 0.0) continue;
                    word.push_back(b);
                    rec(succ(st, b), w * p);
                    word.pop_back();
                }
            };
            rec(s, 1.0);
            Vec m = Vec::Zero(d);
            for (const auto& l : leaves) m += l.w * l.p;
            double v = 0.0;
            for (const auto& l : leaves) v += l.w * (l.p - m).squaredNorm();
            bary_[s] = m;
            var_[s] = std::pow(eta + std::sqrt(v), 2);
            bary_slack_ = std::max(bary_slack_, eta);
        }
    }
    // support radius of each tail law from depth-2 hulls
    for (std::size_t s = 0; s < ns; ++s) {
        double r = 0.0;
        for (auto [b, p] : next[s]) {
            if (p <= 0.0) continue;
            for (int c = 0; c < k; ++c) {
                if (!sys.subshift().allowed(b, c)) continue;
                r = std::max(r, word_hull(sys, sys.word({b, c})).farthest_from(bary_[s]));
            }
        }
        rad_[s] = r;
    }
}

FourierValue FourierEngine::eval(const Vec& xi) const {
    if (xi.size() != mu_->dim()) throw InvalidArgument("frequency has the wrong dimension");
    if (xi.squaredNorm() == 0.0) return {cplx(1.0, 0.0), 0.0};
    switch (ev_.method) {
        case Evaluator::Method::MonteCarlo: return eval_mc(xi);
        case Evaluator::Method::ProductFormula: return eval_product(xi);
        case Evaluator::Method::FunctionalEquation:
            return markov_->system().all_similitudes() ? eval_similar(xi) : eval_conformal(xi);
    }
    return {};
}

FourierValue FourierEngine::eval_mc(const Vec& xi) const {
    double re = 0.0, im = 0.0;
    const int d = static_cast<int>(xi.size());
    for (const Vec& x : samples_) {
        double t = 0.0;
        for (int i = 0; i < d; ++i) t += xi[i] * x[i];
        const double a = kTwoPi * t;
        re += std::cos(a);
        im += std::sin(a);
    }
    const double n = static_cast<double>(samples_.size());
    cplx m(re / n, im / n);
    const double var = std::max(0.0, 1.0 - std::norm(m));
    return {m, 3.0 * std::sqrt(var / n) + 1e-15};
}

FourierValue FourierEngine::eval_product(const Vec& xi) const {
    const IFSSystem& sys = markov_->system();
    const auto& p = markov_->bernoulli_weights();
    const Mat& L = lin_.empty() ? Mat() : lin_[0];
    Vec zeta = xi;
    cplx prod(1.0, 0.0);
    for (int j = 0; j < 100000; ++j) {
        const double nz = zeta.norm();
        const double err = std::min({kTwoPi * nz * rad_[0], 2 * kPi * kPi * nz * nz * var_[0], 2.0});
        if (err <= ev_.tol) {
            g_last_nodes = static_cast<std::size_t>(j);
            return {prod * phase(zeta.dot(bary_[0])), err};
        }
        cplx phi(0.0, 0.0);
        for (int a = 0; a < sys.size(); ++a) phi += p[a] * phase(zeta.dot(shift_[a]));
        prod *= phi;
        zeta = L.transpose() * zeta;
    }
    throw TolTooTight("product formula did not converge");
}

FourierValue FourierEngine::eval_similar(const Vec& xi) const {
    const IFSSystem& sys = markov_->system();
    const bool memoryless = markov_->is_bernoulli();
    const auto& states = markov_->chain_states();
    const auto& next = markov_->chain_next();
    const auto& nstate = markov_->chain_next_state();
    const auto& cls = sys.linear_class();
    const int ncls = merge_counts_ ? sys.linear_class_count() : 0;

    struct Node {
        cplx coef;
        double mass = 0.0;
        Vec zeta;
    };
    // key: class counts (or the whole word) followed by the chain state
    using Key = std::vector<int>;
    std::map<Key, Node> gen;
    auto key_of = [&](const Key& base, int b, int state) {
        Key k2(base.begin(), base.end() - 1);
        if (merge_counts_) {
            k2[static_cast<std::size_t>(cls[b])] += 1;
        } else {
            k2.push_back(b);
        }
        k2.push_back(state);
        return k2;
    };
    if (memoryless) {
        Key root(static_cast<std::size_t>(ncls), 0);
        root.push_back(0);
        gen[root] = {cplx(1.0, 0.0), 1.0, xi};
    } else {
        for (std::size_t s = 0; s < states.size(); ++s) {
            const double pi = markov_->chain_initial()[s];
            if (pi <= 0.0) continue;
            Key k0(static_cast<std::size_t>(ncls), 0);
            k0.push_back(-1);
            Node n{cplx(pi, 0.0), pi, xi};
            for (int b : states[s]) {
                n.coef *= phase(n.zeta.dot(shift_[b]));
                n.zeta = lin_[b].transpose() * n.zeta;
                k0 = key_of(k0, b, static_cast<int>(s));
            }
            auto& slot = gen[k0];
            if (slot.zeta.size() == 0) slot.zeta = n.zeta;
            slot.coef += n.coef;
            slot.mass += n.mass;
        }
    }
    cplx total(0.0, 0.0);
    double err = 0.0;
    std::size_t nodes = 0;
    while (!gen.empty()) {
        std::map<Key, Node> nextgen;
        for (auto& [key, node] : gen) {
            if (++nodes > ev_.word_budget) throw TolTooTight("functional-equation expansion exceeded the word budget");
            const int s = key.back();
            const std::size_t si = memoryless ? 0 : static_cast<std::size_t>(s);
            const double nz = node.zeta.norm();
            const double e = std::min({kTwoPi * nz * rad_[si], 2 * kPi * kPi * nz * nz * var_[si], 2.0});
            if (e <= ev_.tol) {
                total += node.coef * phase(node.zeta.dot(bary_[si]));
                err += node.mass * e;
                continue;
            }
            for (auto [b, p] : next[si]) {
                if (p <= 0.0) continue;
                const int t = memoryless ? 0 : nstate[si][b];
                Key k2 = key_of(key, b, t);
                auto it = nextgen.find(k2);
                if (it == nextgen.end()) it = nextgen.emplace(k2, Node{cplx(0, 0), 0.0, lin_[b].transpose() * node.zeta}).first;
                it->second.coef += node.coef * p * phase(node.zeta.dot(shift_[b]));
                it->second.mass += node.mass * p;
            }
        }
        gen.swap(nextgen);
    }
    g_last_nodes = nodes;
    return {total, err};
}

FourierValue FourierEngine::eval_conformal(const Vec& xi) const {
    const IFSSystem& sys = markov_->system();
    const bool memoryless = markov_->is_bernoulli();
    const auto& states = markov_->chain_states();
    const auto& next = markov_->chain_next();
    const auto& nstate = markov_->chain_next_state();
    const double nxi = xi.norm();

    cplx total(0.0, 0.0);
    double err = 0.0;
    std::size_t nodes = 0;
    std::vector<int> word;
    // Leaf error for word `word` followed by the tail law of state s.
    auto leaf = [&](std::size_t s, Vec& image) {
        Vec c = bary_[s];
        double r = rad_[s];
        double lam = 1.0;
        for (std::size_t i = word.size(); i-- > 0;) {
            const auto& m = sys.map(word[i]);
            const double sc = m.sup_scale(c, r);
            lam *= sc;
            c = m.apply(c);
            r *= sc;
        }
        image = c;
        const double e1 = kTwoPi * nxi * lam * rad_[s];
        const double e2 = kPi * nxi * c_lin_ * lam * var_[s] + 2 * kPi * kPi * nxi * nxi * lam * lam * var_[s] +
                          kTwoPi * nxi * lam * bary_slack_;
        return std::min({e1, e2, 2.0});
    };
    std::function<void(std::size_t, double)> rec = [&](std::size_t s, double mass) {
        if (++nodes > ev_.word_budget) throw TolTooTight("conformal expansion exceeded the word budget");
        Vec image;
        const double e = leaf(s, image);
        if (e <= ev_.tol) {
            total += mass * phase(xi.dot(image));
            err += mass * e;
            return;
        }
        for (auto [b, p] : next[s]) {
            if (p <= 0.0) continue;
            word.push_back(b);
            rec(memoryless ? 0 : static_cast<std::size_t>(nstate[s][b]), mass * p);
            word.pop_back();
        }
    };
    if (memoryless) {
        rec(0, 1.0);
    } else {
        for (std::size_t s = 0; s < states.size(); ++s) {
            const double pi = markov_->chain_initial()[s];
            if (pi <= 0.0) continue;
            word = states[s];
            rec(s, pi);
        }
    }
    g_last_nodes = nodes;
    return {total, err};
}

FourierValue fourier_eval(std::shared_ptr<const Measure> mu, const Vec& xi, const Evaluator& ev) {
    return FourierEngine(std::move(mu), ev).eval(xi);
}

// ------------------------------------------------------------------ sweeps

namespace {

struct GridPoint {
    Vec xi;
    std::size_t band;
};

std::vector<Vec> sweep_directions(int d, int count) {
    return d == 1 ? std::vector<Vec>{Vec::Ones(1)} : direction_grid(d, count);
}

}  // namespace

DecayProfile decay_profile(const FourierEngine& engine, const DecayOptions& opt) {
    if (!(opt.t_max >= 10.0)) throw InvalidArgument("decay profile needs T_max >= 10");
    if (!(opt.band_ratio > 1.0) || !(opt.grid_step > 0.0) || !(opt.t_min > 0.0))
        throw InvalidArgument("bad band or grid parameters");
    DecayProfile prof;
    prof.options = opt;
    prof.method = engine.evaluator().name();
    for (double lo = opt.t_min; lo < opt.t_max * (1 - 1e-12); lo *= opt.band_ratio) {
        DecayBand b;
        b.t_lo = lo;
        b.t_hi = std::min(lo * opt.band_ratio, opt.t_max);
        prof.bands.push_back(b);
    }
    std::vector<GridPoint> pts;
    const auto dirs = sweep_directions(engine.dim(), opt.directions);
    for (std::size_t i = 0; i < prof.bands.size(); ++i) {
        const auto& b = prof.bands[i];
        const bool last = i + 1 == prof.bands.size();
        const long steps = static_cast<long>(std::floor((b.t_hi - b.t_lo) / opt.grid_step + 1e-9));
        for (long j = 0; j <= steps; ++j) {
            const double t = b.t_lo + static_cast<double>(j) * opt.grid_step;
            if (t >= b.t_hi && !(last && t <= b.t_hi)) break;
            for (const Vec& e : dirs) pts.push_back({t * e, i});
        }
    }
    std::vector<FourierValue> vals(pts.size());
    parallel_for(pts.size(), opt.workers, [&](std::size_t i) { vals[i] = engine.eval(pts[i].xi); });
    for (std::size_t i = 0; i < pts.size(); ++i) {
        auto& b = prof.bands[pts[i].band];
        const double a = std::abs(vals[i].value);
        if (b.points == 0 || a > b.max_abs) {
            b.max_abs = a;
            b.argmax = pts[i].xi;
        }
        b.mean_abs += a;
        b.max_error = std::max(b.max_error, vals[i].error);
        b.points += 1;
    }
    for (auto& b : prof.bands)
        if (b.points) b.mean_abs /= static_cast<double>(b.points);
    return prof;
}

ExceptionalSetReport exceptional_set_count(const FourierEngine& engine, double T, double tau, double grid_step,
                                           int directions, int workers) {
    if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("tau must lie in (0, 1)");
    if (!(T > 1.0) || !(grid_step > 0.0)) throw InvalidArgument("need T > 1 and a positive grid step");
    ExceptionalSetReport rep;
    rep.T = T;
    rep.tau = tau;
    rep.grid_step = grid_step;
    rep.threshold = std::pow(T, -tau);
    const int d = engine.dim();
    const auto dirs = sweep_directions(d, directions);
    std::vector<Vec> pts;
    const long steps = static_cast<long>(std::floor(T / grid_step + 1e-9));
    for (const Vec& e : dirs)
        for (long j = 0; j <= steps; ++j) {
            if (j == 0 && &e != &dirs.front()) continue;   // origin once
            pts.push_back(static_cast<double>(j) * grid_step * e);
        }
    std::vector<double> mags(pts.size());
    parallel_for(pts.size(), workers, [&](std::size_t i) { mags[i] = std::abs(engine.eval(pts[i]).value); });
    // |transform(-xi)| = |transform(xi)|: mirror every exceptional point.
    std::vector<Vec> hot;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (mags[i] > rep.threshold) {
            hot.push_back(pts[i]);
            if (pts[i].squaredNorm() > 0.0) hot.push_back(-pts[i]);
        }
    }
    rep.grid_points = pts.size();
    rep.exceptional_points = hot.size();
    rep.all_exceptional = std::all_of(mags.begin(), mags.end(), [&](double m) { return m > rep.threshold; });
    if (d == 1) {
        std::vector<double> xs;
        for (const Vec& v : hot) xs.push_back(v[0]);
        std::sort(xs.begin(), xs.end());
        double covered = -std::numeric_limits<double>::infinity();
        for (double x : xs)
            if (x > covered) {
                ++rep.balls;
                covered = x + 2.0;   // ball centred at x + 1
            }
    } else {
        std::vector<Vec> centres;
        for (const Vec& v : hot) {
            bool in = false;
            for (const Vec& c : centres)
                if ((c - v).norm() <= 1.0) {
                    in = true;
                    break;
                }
            if (!in) centres.push_back(v);
        }
        rep.balls = centres.size();
    }
    return rep;
}

GrowthFit exceptional_growth(const std::vector<ExceptionalSetReport>& reports) {
    std::vector<double> x, y;
    for (const auto& r : reports) {
        x.push_back(std::log(r.T));
        y.push_back(std::log(static_cast<double>(std::max<std::size_t>(r.balls, 1))));
    }
    const LineFit f = fit_line(x, y);
    return {f.slope, std::sqrt(f.rss / static_cast<double>(x.size()))};
}

GrowthFit fit_decay_exponent(const DecayProfile& profile, DecayModel model) {
    std::vector<double> x, y;
    for (const auto& b : profile.bands) {
        if (model == DecayModel::Polylog && b.t_lo <= 1.0) continue;
        if (!(b.max_abs > 0.0)) continue;
        x.push_back(model == DecayModel::Poly ? std::log(b.t_lo) : std::log(std::log(b.t_lo)));
        y.push_back(std::log(b.max_abs));
    }
    if (x.size() < 4) throw DegenerateFit("need at least four usable bands");
    if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y.front(); }))
        throw DegenerateFit("all band maxima are equal");
    const LineFit f = fit_line(x, y);
    return {-f.slope, std::sqrt(f.rss / static_cast<double>(x.size()))};
}

}  // namespace fdecay
