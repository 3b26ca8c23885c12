#include "fdecay/transfer.hpp"

#include <numeric>

namespace fdecay {

// ------------------------------------------------------------ operator

TwistedOperator::TwistedOperator(std::shared_ptr<const IFSSystem> sys, GibbsPotential normalized, double b)
    : sys_(std::move(sys)), psi_(std::move(normalized)), b_(b) {}

TwistedOperator TwistedOperator::for_measure(const MarkovMeasure& mu, double b, int depth) {
    if (mu.is_bernoulli()) return TwistedOperator(mu.system_ptr(), mu.potential(), b);
    return TwistedOperator(mu.system_ptr(), normalize_potential(mu.system(), mu.potential(), depth), b);
}

cplx TwistedOperator::factor(int a, const Vec& x, int first_symbol) const {
    double lw = psi_.log_weight(*sys_, a, x, first_symbol);
    double phase = b_ * sys_->map(a).log_scale(x);
    return std::polar(std::exp(lw), phase);
}

// ---------------------------------------------------------------- grid

namespace {

long word_code(const std::vector<int>& w, int k) {
    long c = 0;
    for (int a : w) c = c * k + a;
    return c;
}

}  // namespace

FunctionGrid FunctionGrid::constant(const IFSSystem& sys, int depth, int nodes_per_axis, cplx value, double b) {
    if (depth < 1) throw InvalidArgument("collocation depth must be at least 1");
    if (nodes_per_axis < 1) throw InvalidArgument("need at least one node per axis");
    FunctionGrid g;
    g.depth_ = depth;
    g.per_axis_ = nodes_per_axis;
    g.dim_ = sys.dim();
    g.k_ = sys.size();
    g.b_ = b;
    double slots = std::pow(static_cast<double>(g.k_), depth);
    if (slots > 2e7) throw WordBudgetExceeded("collocation depth too large for this alphabet");
    g.per_cyl_ = 1;
    for (int i = 0; i < g.dim_; ++i) g.per_cyl_ *= static_cast<std::size_t>(nodes_per_axis);
    g.index_.assign(static_cast<std::size_t>(slots), -1);
    for_each_word(sys, depth, [&](const Word& w) {
        g.index_[word_code(w.symbols(), g.k_)] = static_cast<long>(g.words_.size());
        g.words_.push_back(w);
        g.boxes_.push_back(word_hull(sys, w));
    });
    g.values_.assign(g.words_.size() * g.per_cyl_, value);
    g.dbound_.assign(g.words_.size(), 0.0);
    return g;
}

Vec FunctionGrid::node(std::size_t c, std::size_t j) const {
    const Box& bx = boxes_[c];
    Vec x(dim_);
    for (int i = 0; i < dim_; ++i) {
        std::size_t idx = j % per_axis_;
        j /= per_axis_;
        double u = per_axis_ == 1 ? 0.5 : static_cast<double>(idx) / (per_axis_ - 1);
        x[i] = bx.lo[i] + u * (bx.hi[i] - bx.lo[i]);
    }
    return x;
}

long FunctionGrid::cylinder_index(const std::vector<int>& word) const {
    if (static_cast<int>(word.size()) != depth_) return -1;
    return index_[word_code(word, k_)];
}

cplx FunctionGrid::interpolate(std::size_t c, const Vec& x) const {
    const Box& bx = boxes_[c];
    const cplx* v = &values_[c * per_cyl_];
    if (per_axis_ == 1) return v[0];
    std::vector<int> base(dim_);
    std::vector<double> frac(dim_);
    for (int i = 0; i < dim_; ++i) {
        double w = bx.hi[i] - bx.lo[i];
        double u = w > 0.0 ? (x[i] - bx.lo[i]) / w : 0.0;
        u = std::clamp(u, 0.0, 1.0) * (per_axis_ - 1);
        int i0 = std::min(static_cast<int>(std::floor(u)), per_axis_ - 2);
        base[i] = i0;
        frac[i] = u - i0;
    }
    cplx out = 0.0;
    for (int corner = 0; corner < (1 << dim_); ++corner) {
        double wt = 1.0;
        std::size_t idx = 0, stride = 1;
        for (int i = 0; i < dim_; ++i) {
            int bit = (corner >> i) & 1;
            wt *= bit ? frac[i] : 1.0 - frac[i];
            idx += (base[i] + bit) * stride;
            stride *= per_axis_;
        }
        if (wt != 0.0) out += wt * v[idx];
    }
    return out;
}

double FunctionGrid::sup_norm() const {
    double m = 0.0;
    for (const auto& v : values_) m = std::max(m, std::abs(v));
    return m;
}

double FunctionGrid::max_derivative_bound() const {
    double m = 0.0;
    for (double d : dbound_) m = std::max(m, d);
    return m;
}

double FunctionGrid::measured_derivative() const {
    if (per_axis_ < 2) return 0.0;
    double m = 0.0;
    for (std::size_t c = 0; c < cylinders(); ++c) {
        const cplx* v = &values_[c * per_cyl_];
        std::size_t stride = 1;
        for (int i = 0; i < dim_; ++i) {
            double h = (boxes_[c].hi[i] - boxes_[c].lo[i]) / (per_axis_ - 1);
            if (h > 0.0) {
                for (std::size_t j = 0; j < per_cyl_; ++j)
                    if ((j / stride) % per_axis_ + 1 < static_cast<std::size_t>(per_axis_))
                        m = std::max(m, std::abs(v[j + stride] - v[j]) / h);
            }
            stride *= per_axis_;
        }
    }
    return m;
}

double FunctionGrid::b_norm() const {
    if (b_ == 0.0) return sup_norm();
    return sup_norm() + measured_derivative() / std::abs(b_);
}

double FunctionGrid::certified_b_norm() const {
    double s = sup_norm() + interp_error_;
    if (b_ == 0.0) return s;
    return s + max_derivative_bound() / std::abs(b_);
}

double FunctionGrid::cell_diameter(std::size_t c) const {
    const Box& bx = boxes_[c];
    double cells = per_axis_ > 1 ? per_axis_ - 1 : 1;
    return (bx.hi - bx.lo).norm() / cells;
}

FunctionGrid apply_transfer(const TwistedOperator& op, const FunctionGrid& h, int workers) {
    const IFSSystem& sys = op.system();
    if (h.dim() != sys.dim() || h.alphabet() != sys.size())
        throw GridMismatch("grid was built for a different system");
    if (h.b() != op.b()) throw GridMismatch("grid twist differs from the operator's");
    FunctionGrid out = h;
    const int k = sys.size();
    const int m = h.depth();
    const double ab = std::abs(op.b());

    std::vector<double> hmax(h.cylinders()), cell(h.cylinders());
    for (std::size_t c = 0; c < h.cylinders(); ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < h.nodes_per_cylinder(); ++j) s = std::max(s, std::abs(h.value(c, j)));
        cell[c] = h.cell_diameter(c);
        hmax[c] = s + h.interpolation_error() + h.derivative_bound()[c] * cell[c];
    }

    std::vector<double> err(h.cylinders(), 0.0);
    parallel_for(h.cylinders(), workers, [&](std::size_t c) {
        const std::vector<int>& beta = h.cylinder(c).symbols();
        const int first = beta[0];
        std::vector<int> target(m);
        std::copy(beta.begin(), beta.end() - 1, target.begin() + 1);
        double dmax = 0.0, emax = 0.0;
        for (std::size_t j = 0; j < h.nodes_per_cylinder(); ++j) {
            Vec x = h.node(c, j);
            cplx acc = 0.0;
            double dsum = 0.0, esum = 0.0;
            for (int a = 0; a < k; ++a) {
                if (!sys.subshift().allowed(a, first)) continue;
                target[0] = a;
                long g = h.cylinder_index(target);
                if (g < 0) throw GridMismatch("pushed point has no cylinder");
                const auto& map = sys.map(a);
                Vec y = map.apply(x);
                double lw = op.log_weight(a, x, first);
                double w = std::exp(lw);
                acc += std::polar(w, op.b() * map.log_scale(x)) * h.interpolate(g, y);
                double gw = op.potential().grad_log_weight(sys, a, x, first).norm();
                double gl = map.grad_log_scale(x).norm();
                double lam = std::exp(map.log_scale(x));
                dsum += w * ((gw + ab * gl) * hmax[g] + lam * h.derivative_bound()[g]);
                double outside = h.box(g).distance_to(y);
                esum += w * (h.interpolation_error() + h.derivative_bound()[g] * (cell[g] + outside));
            }
            out.value(c, j) = acc;
            dmax = std::max(dmax, dsum);
            emax = std::max(emax, esum);
        }
        out.derivative_bound()[c] = dmax;
        err[c] = emax;
    });
    out.set_interpolation_error(*std::max_element(err.begin(), err.end()));
    return out;
}

NormDecayTable norm_decay(const TwistedOperator& family, const std::vector<double>& b_list,
                          const NormDecayOptions& opt) {
    NormDecayTable table;
    std::vector<std::vector<NormDecayRow>> rows(b_list.size());
    for (std::size_t i = 0; i < b_list.size(); ++i) {
        TwistedOperator op = family.with_twist(b_list[i]);
        FunctionGrid g = FunctionGrid::constant(op.system(), opt.depth, opt.nodes_per_axis, 1.0, b_list[i]);
        rows[i].push_back({b_list[i], 0, g.sup_norm(), g.b_norm(), g.certified_b_norm(), 0.0});
        for (int n = 1; n <= opt.n_max; ++n) {
            g = apply_transfer(op, g, opt.workers);
            rows[i].push_back({b_list[i], n, g.sup_norm(), g.b_norm(), g.certified_b_norm(), g.interpolation_error()});
        }
    }
    for (std::size_t i = 0; i < b_list.size(); ++i) {
        std::vector<double> xs, ys;
        for (const auto& r : rows[i]) {
            table.rows.push_back(r);
            if (r.n >= 1 && r.b_norm > opt.floor) {
                xs.push_back(r.n);
                ys.push_back(std::log(r.b_norm));
            }
        }
        NormDecayFit f;
        f.b = b_list[i];
        f.points = static_cast<int>(xs.size());
        if (xs.size() >= 2) {
            LineFit lf = fit_line(xs, ys);
            f.rho = std::exp(lf.slope);
            f.residual = std::sqrt(lf.rss / xs.size());
        } else if (rows[i].back().b_norm <= opt.floor) {
            f.rho = 0.0;   // collapsed below the floor
        }
        table.max_rho = std::max(table.max_rho, f.rho);
        table.fits.push_back(f);
    }
    return table;
}

cplx transfer_word_sum(const TwistedOperator& op, int n, const Vec& x, int first_symbol) {
    const IFSSystem& sys = op.system();
    std::function<cplx(int, const Vec&, int)> rec = [&](int left, const Vec& y, int first) -> cplx {
        if (left == 0) return 1.0;
        cplx s = 0.0;
        for (int a = 0; a < sys.size(); ++a) {
            if (first >= 0 && !sys.subshift().allowed(a, first)) continue;
            s += op.factor(a, y, first) * rec(left - 1, sys.map(a).apply(y), a);
        }
        return s;
    };
    return rec(n, x, first_symbol);
}

// ------------------------------------------------------------------ UNI

namespace {

struct WordGrad {
    Word word;
    Vec grad;
};

// Gradients of log|lambda_w| at x for every admissible w of length n with
// w admissible before first_symbol; built from the innermost letter outward.
std::vector<WordGrad> word_gradients(const IFSSystem& sys, int n, const Vec& x, int first_symbol,
                                     const std::vector<int>& allowed_last, std::size_t budget) {
    const int d = sys.dim();
    const int k = sys.size();
    std::vector<WordGrad> out;
    std::vector<int> rev;
    std::function<void(const Vec&, const Mat&, const Vec&)> rec = [&](const Vec& y, const Mat& jac, const Vec& g) {
        if (static_cast<int>(rev.size()) == n) {
            if (out.size() >= budget) throw WordBudgetExceeded("UNI word enumeration over budget");
            out.push_back({sys.word(std::vector<int>(rev.rbegin(), rev.rend())), g});
            return;
        }
        for (int a = 0; a < k; ++a) {
            if (rev.empty()) {
                if (!allowed_last.empty() && !allowed_last[a]) continue;
                if (allowed_last.empty() && first_symbol >= 0 && !sys.subshift().allowed(a, first_symbol)) continue;
            } else if (!sys.subshift().allowed(a, rev.back())) {
                continue;
            }
            const auto& m = sys.map(a);
            Vec g2 = g + jac.transpose() * m.grad_log_scale(y);
            ConformalDerivative dm = m.derivative(y);
            Mat j2 = dm.scale * dm.rotation * jac;
            rev.push_back(a);
            rec(m.apply(y), j2, g2);
            rev.pop_back();
        }
    };
    rec(x, Mat::Identity(d, d), Vec::Zero(d));
    return out;
}

std::vector<Vec> ball_points(const Vec& x, double r, int per_axis) {
    const int d = static_cast<int>(x.size());
    std::vector<Vec> pts{x};
    if (r <= 0.0 || per_axis < 2) return pts;
    std::size_t total = 1;
    for (int i = 0; i < d; ++i) total *= per_axis;
    for (std::size_t j = 0; j < total; ++j) {
        Vec y(d);
        std::size_t t = j;
        for (int i = 0; i < d; ++i) {
            y[i] = x[i] - r + 2.0 * r * static_cast<double>(t % per_axis) / (per_axis - 1);
            t /= per_axis;
        }
        if ((y - x).norm() <= r * (1.0 + 1e-12)) pts.push_back(y);
    }
    return pts;
}

}  // namespace

UNIReport uni_margin(const IFSSystem& sys, int n, const Vec& x, int first_symbol, const UNIOptions& opt) {
    if (n < 1) throw InvalidArgument("UNI word length must be positive");
    if (x.size() != sys.dim()) throw InvalidArgument("probe has wrong dimension");
    if (std::pow(static_cast<double>(sys.size()), n) > 4.0 * opt.word_budget)
        throw WordBudgetExceeded("UNI word enumeration over budget");
    UNIReport rep;
    rep.n = n;
    rep.x = x;
    rep.radius = opt.radius;
    rep.directions = direction_grid(sys.dim(), opt.directions);

    // letters allowed last: before every first symbol met in the ball
    std::vector<int> allowed_last;
    if (opt.radius > 0.0) {
        allowed_last.assign(sys.size(), 1);
        Box ball = Box::around(x, opt.radius);
        for (int s = 0; s < sys.size(); ++s) {
            Box hs = word_hull(sys, Word::single(s, sys.size()));
            if (hs.distance(ball) > 0.0) continue;
            for (int a = 0; a < sys.size(); ++a)
                if (!sys.subshift().allowed(a, s)) allowed_last[a] = 0;
        }
    }
    std::vector<WordGrad> words = word_gradients(sys, n, x, first_symbol, allowed_last, opt.word_budget);
    if (words.empty()) throw EmptyAdmissibleSet("no admissible words before the probe");

    std::vector<Vec> pts = ball_points(x, opt.radius, opt.ball_points);
    rep.eps0 = std::numeric_limits<double>::infinity();
    for (const Vec& e : rep.directions) {
        std::vector<std::size_t> order(words.size());
        std::iota(order.begin(), order.end(), 0);
        std::vector<double> v(words.size());
        for (std::size_t i = 0; i < words.size(); ++i) v[i] = words[i].grad.dot(e);
        std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
        double margin;
        std::pair<Word, Word> pair;
        if (opt.radius <= 0.0) {
            margin = v[order.back()] - v[order.front()];
            pair = {words[order.back()].word, words[order.front()].word};
        } else {
            // pairs among the extreme words at the centre; min over the ball
            std::size_t K = std::min<std::size_t>(opt.candidates, words.size());
            std::vector<std::size_t> cand;
            for (std::size_t i = 0; i < K; ++i) cand.push_back(order[i]);
            for (std::size_t i = 0; i < K; ++i) cand.push_back(order[words.size() - 1 - i]);
            std::sort(cand.begin(), cand.end());
            cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
            std::vector<std::vector<double>> at(cand.size(), std::vector<double>(pts.size()));
            for (std::size_t c = 0; c < cand.size(); ++c)
                for (std::size_t p = 0; p < pts.size(); ++p)
                    at[c][p] = word_grad_log_scale(sys, words[cand[c]].word, pts[p]).dot(e);
            margin = 0.0;
            pair = {words[order.back()].word, words[order.front()].word};
            for (std::size_t i = 0; i < cand.size(); ++i)
                for (std::size_t j = i + 1; j < cand.size(); ++j) {
                    double worst = std::numeric_limits<double>::infinity();
                    for (std::size_t p = 0; p < pts.size(); ++p)
                        worst = std::min(worst, std::abs(at[i][p] - at[j][p]));
                    if (worst > margin) {
                        margin = worst;
                        pair = {words[cand[i]].word, words[cand[j]].word};
                    }
                }
        }
        rep.margins.push_back(margin);
        rep.pairs.push_back(pair);
        rep.eps0 = std::min(rep.eps0, margin);
    }
    return rep;
}

UNIReport uni_family_margin(const IFSSystem& sys, int n, const Vec& x, int s, int directions) {
    if (s < 0 || s >= sys.size() || !sys.map(s).is_similitude())
        throw InvalidArgument("letter " + std::to_string(s) + " is not a similitude");
    if (n < 1) throw InvalidArgument("UNI word length must be positive");
    UNIReport rep;
    rep.n = n;
    rep.x = x;
    rep.directions = direction_grid(sys.dim(), directions);
    Word base = sys.word(std::vector<int>(n, s));
    Vec g0 = word_grad_log_scale(sys, base, x);
    std::vector<std::pair<Word, Vec>> diffs;
    for (int i = 0; i < sys.size(); ++i) {
        if (i == s) continue;
        std::vector<int> sym(n - 1, s);
        sym.push_back(i);
        Word w = sys.word(sym);
        if (!sys.subshift().admissible(w)) continue;
        diffs.push_back({w, word_grad_log_scale(sys, w, x) - g0});
    }
    rep.eps0 = std::numeric_limits<double>::infinity();
    for (const Vec& e : rep.directions) {
        double best = 0.0;
        Word arg = base;
        for (const auto& [w, g] : diffs) {
            double v = std::abs(g.dot(e));
            if (v > best) {
                best = v;
                arg = w;
            }
        }
        rep.margins.push_back(best);
        rep.pairs.push_back({arg, base});
        rep.eps0 = std::min(rep.eps0, best);
    }
    return rep;
}

double uni_closed_form(const IFSSystem& sys, const Vec& x, int directions) {
    double eps0 = std::numeric_limits<double>::infinity();
    for (const Vec& e : direction_grid(sys.dim(), directions)) {
        double best = 0.0;
        for (const auto& m : sys.maps()) {
            const MobiusMap* mob = m.mobius();
            if (!mob) continue;
            Vec r = x - mob->u;
            best = std::max(best, 2.0 * std::abs(r.dot(e)) / r.squaredNorm());
        }
        eps0 = std::min(eps0, best);
    }
    return eps0;
}

// -------------------------------------------------- frequency band masses

namespace {

Vec fixed_point(const IFSSystem& sys, int a) {
    Vec y = Vec::Constant(sys.dim(), 0.5);
    for (int i = 0; i < 400; ++i) y = sys.map(a).apply(y);
    return y;
}

}  // namespace

BandWords collect_band_words(const TwistedOperator& op, const Word& beta, double log_xi, double c,
                             std::size_t budget) {
    const IFSSystem& sys = op.system();
    if (!(c > 0.0)) throw InvalidArgument("c must be positive");
    if (!(log_xi > 0.0)) throw BandOutOfRange("|xi| must exceed 1");
    BandWords out;
    out.log_xi = log_xi;
    out.c = c;
    out.n = static_cast<int>(std::floor(c * log_xi));
    if (std::pow(static_cast<double>(sys.size()), out.n) > 4.0 * budget)
        throw WordBudgetExceeded("n(xi) = " + std::to_string(out.n) + " gives too many words");

    int first;
    if (beta.empty()) {
        out.x = fixed_point(sys, 0);
        first = 0;
    } else {
        if (!sys.subshift().admissible(beta)) throw InadmissibleWord("cut-off cylinder is not admissible");
        int tail = 0;
        while (!sys.subshift().allowed(beta.back(), tail)) ++tail;
        out.x = compose_word(sys, beta, fixed_point(sys, tail));
        first = beta[0];
    }
    std::function<void(int, const Vec&, int, double, double)> rec = [&](int left, const Vec& y, int f, double lw,
                                                                         double ll) {
        if (left == 0) {
            if (out.weight.size() >= budget) throw WordBudgetExceeded("band word enumeration over budget");
            out.weight.push_back(std::exp(lw));
            out.log_lambda.push_back(ll);
            return;
        }
        for (int a = 0; a < sys.size(); ++a) {
            if (!sys.subshift().allowed(a, f)) continue;
            const auto& m = sys.map(a);
            rec(left - 1, m.apply(y), a, lw + op.log_weight(a, y, f), ll + m.log_scale(y));
        }
    };
    rec(out.n, out.x, first, 0.0, 0.0);
    return out;
}

BandTable band_table(const BandWords& words) {
    if (words.log_xi / 3.0 > 43.0) throw BandOutOfRange("band indices overflow at this |xi|");
    BandTable t;
    for (std::size_t i = 0; i < words.weight.size(); ++i) {
        double v = std::exp(words.log_lambda[i] + words.log_xi / 3.0);
        t.mass[static_cast<long long>(std::floor(v))] += words.weight[i];
        t.total += words.weight[i];
    }
    t.lo = static_cast<long long>(std::ceil(std::exp(words.log_xi / 6.0)));
    t.hi = static_cast<long long>(std::floor(std::exp(words.log_xi / 3.0)));
    for (const auto& [band, m] : t.mass) {
        if (band < t.lo || band > t.hi) continue;
        if (m > t.max_in_range) {
            t.max_in_range = m;
            t.argmax = band;
        }
    }
    return t;
}

BandMass frequency_band_mass(const BandWords& words, long long band, BandRoute route, double delta) {
    long long lo = static_cast<long long>(std::ceil(std::exp(words.log_xi / 6.0)));
    long long hi = static_cast<long long>(std::floor(std::exp(words.log_xi / 3.0)));
    if (band < lo || band > hi)
        throw BandOutOfRange("band " + std::to_string(band) + " outside [" + std::to_string(lo) + ", " +
                             std::to_string(hi) + "]");
    const double shift = words.log_xi / 3.0;
    const double a = std::log(static_cast<double>(band)) - shift;
    const double b = std::log(static_cast<double>(band + 1)) - shift;

    BandMass out;
    out.band = band;
    double direct = 0.0;
    for (std::size_t i = 0; i < words.weight.size(); ++i)
        if (words.log_lambda[i] >= a && words.log_lambda[i] < b) direct += words.weight[i];
    if (route == BandRoute::Direct) {
        out.mass = direct;
        return out;
    }

    // h = indicator of J convolved with a cubic B-spline of half-width s;
    // h = 1 on the widened band, support of width out.width.
    const double centre = 0.5 * (a + b);
    const double wide = std::max(std::exp(-delta * words.log_xi), b - a);
    const double s = wide / 4.0;
    const double len_j = wide + 2.0 * s;
    const double half_support = 0.5 * len_j + s;
    out.width = 2.0 * half_support;
    for (std::size_t i = 0; i < words.weight.size(); ++i) {
        double t = words.log_lambda[i];
        if (std::abs(t - centre) < half_support && !(t >= a && t < b)) out.skirt += words.weight[i];
    }

    const double tol = 1e-9;
    double spread = 0.0;
    for (double t : words.log_lambda) spread = std::max(spread, std::abs(t - centre));
    const double period = 1.1 * (spread + half_support) + 1.0;   // aliases miss every word
    const double step = 1.0 / period;
    const double eta_max = (2.0 / (kPi * s)) * std::pow(1.0 / (2.0 * kPi * tol), 0.25);
    const std::size_t steps = static_cast<std::size_t>(std::ceil(eta_max / step));
    if (static_cast<double>(steps) * words.weight.size() > 5e9)
        throw PrecisionBudgetExceeded("mollified band mass needs too many quadrature nodes");

    auto h_hat = [&](double eta) {
        if (eta == 0.0) return len_j;
        double box = std::sin(kPi * eta * len_j) / (kPi * eta);
        double z = kPi * eta * s / 2.0;
        double sp = std::sin(z) / z;
        return box * sp * sp * sp * sp;
    };
    const std::size_t m = words.weight.size();
    std::vector<cplx> rot(m), cur(m, 1.0);
    for (std::size_t i = 0; i < m; ++i) rot[i] = std::polar(1.0, kTwoPi * step * (words.log_lambda[i] - centre));
    double total = h_hat(0.0) * std::accumulate(words.weight.begin(), words.weight.end(), 0.0);
    for (std::size_t j = 1; j <= steps; ++j) {
        if (j % 512 == 0) {
            for (std::size_t i = 0; i < m; ++i)
                cur[i] = std::polar(1.0, kTwoPi * step * static_cast<double>(j - 1) * (words.log_lambda[i] - centre));
        }
        double re = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            cur[i] *= rot[i];
            re += words.weight[i] * cur[i].real();
        }
        total += 2.0 * h_hat(j * step) * re;
    }
    out.mass = total * step;
    out.quadrature_error = 2.0 * tol;
    return out;
}

}  // namespace fdecay
