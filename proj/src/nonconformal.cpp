#include "fdecay/nonconformal.hpp"

#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>

namespace fdecay {

namespace {

Interval invariant_hull(const IFSSystem& sys) {
    Interval k{0.0, 1.0};
    for (int it = 0; it < 200; ++it) {
        Interval next{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
        for (int a = 0; a < sys.size(); ++a) {
            double u = sys.map(a).apply(Vec::Constant(1, k.lo))[0];
            double v = sys.map(a).apply(Vec::Constant(1, k.hi))[0];
            next.lo = std::min({next.lo, u, v});
            next.hi = std::max({next.hi, u, v});
        }
        bool done = std::abs(next.lo - k.lo) + std::abs(next.hi - k.hi) < 1e-15;
        k = next;
        if (done) break;
    }
    return k;
}

double map1(const IFSSystem& sys, int a, double x) { return sys.map(a).apply(Vec::Constant(1, x))[0]; }

// Image of [lo, hi] under f_{w_0} o ... o f_{w_{n-1}}; 1-D maps are monotone.
Interval compose_interval(const IFSSystem& sys, const std::vector<int>& w, Interval k) {
    double u = k.lo, v = k.hi;
    for (auto it = w.rbegin(); it != w.rend(); ++it) {
        u = map1(sys, *it, u);
        v = map1(sys, *it, v);
    }
    return {std::min(u, v), std::max(u, v)};
}

double fixed_point1(const IFSSystem& sys, int a) {
    double x = 0.5;
    for (int i = 0; i < 400; ++i) x = map1(sys, a, x);
    return x;
}

// 1-D similitudes and inversions are linear fractional: x -> (a x + b) / (c x + d).
struct Frac {
    double a = 1, b = 0, c = 0, d = 1;
    double operator()(double x) const { return (a * x + b) / (c * x + d); }
    Frac operator*(const Frac& o) const {
        return {a * o.a + b * o.c, a * o.b + b * o.d, c * o.a + d * o.c, c * o.b + d * o.d};
    }
};

std::optional<Frac> as_fraction(const ConformalMap& m) {
    if (const Similitude* s = m.similitude()) {
        double r = s->ratio * s->rotation.matrix()(0, 0);
        return Frac{r, s->translation[0], 0.0, 1.0};
    }
    if (const MobiusMap* mb = m.mobius()) {
        // t + lambda o / (x - u)
        double lo = mb->lambda * mb->rotation.matrix()(0, 0);
        return Frac{mb->t[0], lo - mb->t[0] * mb->u[0], 1.0, -mb->u[0]};
    }
    return std::nullopt;
}

// Composes words letter by letter, innermost last, in O(1) per letter when
// every map is linear fractional.
class WordImages {
public:
    WordImages(const IFSSystem& sys, Interval hull) : sys_(sys), hull_(hull) {
        for (const auto& m : sys.maps()) {
            auto f = as_fraction(m);
            if (!f) {
                frac_.clear();
                break;
            }
            frac_.push_back(*f);
        }
        stack_.push_back(Frac{});
    }
    void push(int a) {
        letters_.push_back(a);
        if (!frac_.empty()) stack_.push_back(stack_.back() * frac_[a]);
    }
    void pop() {
        letters_.pop_back();
        if (!frac_.empty()) stack_.pop_back();
    }
    Interval image() const {
        if (frac_.empty()) return compose_interval(sys_, letters_, hull_);
        double u = stack_.back()(hull_.lo), v = stack_.back()(hull_.hi);
        return {std::min(u, v), std::max(u, v)};
    }

private:
    const IFSSystem& sys_;
    Interval hull_;
    std::vector<Frac> frac_;
    std::vector<Frac> stack_;
    std::vector<int> letters_;
};

int draw(const std::vector<double>& cdf, std::mt19937_64& rng) {
    double u = uniform01(rng) * cdf.back();
    return static_cast<int>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
}

std::vector<double> cumulative(const std::vector<double>& w) {
    std::vector<double> c(w.size());
    std::partial_sum(w.begin(), w.end(), c.begin());
    return c;
}

}  // namespace

// ------------------------------------------------------------------ system

RestrictedProductIFS::RestrictedProductIFS(std::vector<std::shared_ptr<const IFSSystem>> components,
                                           std::vector<std::vector<int>> tuples, ProbabilityVector p)
    : comp_(std::move(components)), tuples_(std::move(tuples)), p_(p.values()) {
    if (comp_.empty()) throw InvalidArgument("restricted product needs at least one component");
    for (const auto& c : comp_) {
        if (!c || c->dim() != 1) throw InvalidArgument("components must be one-dimensional systems");
        if (!c->subshift().is_full()) throw InvalidArgument("components must use the full shift");
    }
    if (tuples_.empty()) throw EmptyAdmissibleSet("no admissible tuples");
    if (p_.size() != tuples_.size()) throw InvalidArgument("probability vector does not match the tuple count");
    std::set<std::vector<int>> seen;
    for (const auto& t : tuples_) {
        if (static_cast<int>(t.size()) != dim()) throw InvalidArgument("tuple length does not match dimension");
        for (int i = 0; i < dim(); ++i)
            if (t[i] < 0 || t[i] >= comp_[i]->size()) throw InvalidArgument("tuple letter out of range");
        if (!seen.insert(t).second) throw InvalidArgument("duplicate tuple");
    }
    for (const auto& c : comp_) hull_.push_back(invariant_hull(*c));
}

Vec RestrictedProductIFS::apply(int t, const Vec& x) const {
    Vec y(dim());
    for (int i = 0; i < dim(); ++i) y[i] = map1(*comp_[i], tuples_.at(t)[i], x[i]);
    return y;
}

Interval RestrictedProductIFS::image(int coord, const std::vector<int>& letters) const {
    return compose_interval(*comp_.at(coord), letters, hull_[coord]);
}

RestrictedProductIFS RestrictedProductIFS::with_leading(int lead) const {
    if (lead < 0 || lead >= dim()) throw InvalidArgument("leading coordinate out of range");
    std::vector<int> order{lead};
    for (int i = 0; i < dim(); ++i)
        if (i != lead) order.push_back(i);
    std::vector<std::shared_ptr<const IFSSystem>> comp;
    for (int i : order) comp.push_back(comp_[i]);
    std::vector<std::vector<int>> tuples;
    for (const auto& t : tuples_) {
        std::vector<int> s;
        for (int i : order) s.push_back(t[i]);
        tuples.push_back(s);
    }
    return RestrictedProductIFS(comp, tuples, ProbabilityVector(p_));
}

// -------------------------------------------------------------- hypotheses

HypothesisReport check_hypotheses(const RestrictedProductIFS& ifs, const HypothesisOptions& opt) {
    HypothesisReport rep;
    const int d = ifs.dim();
    for (int i = 0; i < d; ++i) {
        SeparationReport s = check_strong_separation(ifs.component(i), opt.separation_depth);
        rep.separation_gap.push_back(s.ok ? s.gap : 0.0);
        if (!s.ok) rep.separation = false;
    }

    std::set<std::vector<int>> all(ifs.tuples().begin(), ifs.tuples().end());
    for (int t = 0; t < ifs.size() && rep.siblings; ++t)
        for (int i = 0; i < d && rep.siblings; ++i) {
            bool found = false;
            std::vector<int> s = ifs.tuples()[t];
            for (int a = 0; a < ifs.component(i).size() && !found; ++a) {
                if (a == ifs.tuples()[t][i]) continue;
                s[i] = a;
                found = all.count(s) > 0;
            }
            if (!found) {
                rep.siblings = false;
                rep.missing_tuple = t;
                rep.missing_coord = i;
            }
        }

    for (int i = 0; i < d; ++i) {
        std::map<std::vector<int>, std::vector<int>> fibres;
        for (const auto& t : ifs.tuples()) {
            std::vector<int> rest;
            for (int j = 0; j < d; ++j)
                if (j != i) rest.push_back(t[j]);
            fibres[rest].push_back(t[i]);
        }
        double best = 0.0;
        std::vector<int> arg;
        for (const auto& [rest, letters] : fibres) {
            if (letters.size() < 2) continue;
            std::vector<ConformalMap> maps;
            for (int a : letters) maps.push_back(ifs.component(i).map(a));
            IFSSystem sub(1, maps);
            Vec x = Vec::Constant(1, fixed_point1(sub, 0));
            UNIOptions u;
            u.directions = 1;
            double e = uni_margin(sub, opt.uni_n, x, -1, u).eps0;
            if (e > best || arg.empty()) {
                best = e;
                arg = rest;
            }
        }
        rep.uni_eps0.push_back(best);
        rep.uni_fibre.push_back(arg);
        rep.uni_ok.push_back(best > opt.uni_tol);
        if (!rep.uni_ok.back()) rep.uni = false;
    }
    return rep;
}

void require_hypotheses(const HypothesisReport& rep, int up_to) {
    if (up_to >= 1 && !rep.separation) {
        for (std::size_t i = 0; i < rep.separation_gap.size(); ++i)
            if (rep.separation_gap[i] <= 0.0)
                throw HypothesisViolation(1, "component " + std::to_string(i + 1) + " is not strongly separated");
    }
    if (up_to >= 2 && !rep.siblings)
        throw HypothesisViolation(2, "tuple " + std::to_string(rep.missing_tuple) + " has no sibling in coordinate " +
                                         std::to_string(rep.missing_coord + 1));
    if (up_to >= 3 && !rep.uni) {
        for (std::size_t i = 0; i < rep.uni_ok.size(); ++i)
            if (!rep.uni_ok[i])
                throw HypothesisViolation(3, "no fibre of coordinate " + std::to_string(i + 1) + " is UNI");
    }
}

// ---------------------------------------------------------- disintegration

Disintegration project_alphabet(const RestrictedProductIFS& ifs, const HypothesisOptions& opt) {
    if (ifs.dim() < 2) throw InvalidArgument("disintegration needs at least two coordinates");
    require_hypotheses(check_hypotheses(ifs, opt), 2);
    std::map<std::vector<int>, std::vector<int>> fibres;   // projected -> tuple ids
    for (int t = 0; t < ifs.size(); ++t) {
        std::vector<int> rest(ifs.tuples()[t].begin() + 1, ifs.tuples()[t].end());
        fibres[rest].push_back(t);
    }
    Disintegration out;
    for (const auto& [rest, ids] : fibres) {
        double q = 0.0;
        for (int t : ids) q += ifs.p()[t];
        std::vector<int> letters;
        std::vector<double> w;
        for (int t : ids) {
            letters.push_back(ifs.tuples()[t][0]);
            w.push_back(ifs.p()[t] / q);
            out.gamma = std::max(out.gamma, w.back());
        }
        out.projected.push_back(rest);
        out.q.push_back(q);
        out.fibre_letters.push_back(letters);
        out.fibre_weights.push_back(w);
    }
    return out;
}

std::vector<int> sample_beta(const Disintegration& data, std::uint64_t seed, int length) {
    if (length < 1) throw InvalidArgument("prefix length must be positive");
    std::mt19937_64 rng(mix_seed(seed, 0x62));
    const std::vector<double> cdf = cumulative(data.q);
    std::vector<int> beta(length);
    for (int& b : beta) b = draw(cdf, rng);
    return beta;
}

Vec beta_anchor(const RestrictedProductIFS& ifs, const Disintegration& data, const std::vector<int>& beta,
                double* radius) {
    const int d = ifs.dim();
    Vec x(d - 1);
    double r2 = 0.0;
    for (int j = 1; j < d; ++j) {
        std::vector<int> letters;
        for (int b : beta) letters.push_back(data.projected.at(b)[j - 1]);
        Interval im = ifs.image(j, letters);
        x[j - 1] = im.mid();
        r2 += 0.25 * im.width() * im.width();
    }
    if (radius) *radius = std::sqrt(r2);
    return x;
}

// ---------------------------------------------------------- random measure

RandomMeasure::RandomMeasure(std::shared_ptr<const RestrictedProductIFS> ifs,
                             std::shared_ptr<const Disintegration> data, std::vector<int> beta, int depth)
    : ifs_(std::move(ifs)), data_(std::move(data)), beta_(std::move(beta)), depth_(depth) {
    if (depth_ < 0) throw InvalidArgument("depth must be non-negative");
    if (static_cast<int>(beta_.size()) < depth_)
        throw PrefixTooShort("prefix of length " + std::to_string(beta_.size()) + " is shorter than depth " +
                             std::to_string(depth_));
    for (int b : beta_)
        if (b < 0 || b >= static_cast<int>(data_->q.size())) throw InvalidArgument("prefix symbol out of range");
}

CylNode RandomMeasure::root() const {
    CylNode n;
    n.word = Word(std::vector<int>{}, ifs_->component(0).size());
    n.mass = 1.0;
    const Interval& h = ifs_->hull()[0];
    n.box = {Vec::Constant(1, h.lo), Vec::Constant(1, h.hi)};
    return n;
}

void RandomMeasure::children(const CylNode& node, std::vector<CylNode>& out) const {
    out.clear();
    const std::size_t level = node.word.size();
    if (static_cast<int>(level) >= depth_) return;
    const int b = beta_[level];
    const auto& letters = data_->fibre_letters[b];
    const auto& w = data_->fibre_weights[b];
    for (std::size_t i = 0; i < letters.size(); ++i) {
        CylNode c;
        c.word = node.word.append(letters[i]);
        c.mass = node.mass * w[i];
        Interval im = ifs_->image(0, c.word.symbols());
        c.box = {Vec::Constant(1, im.lo), Vec::Constant(1, im.hi)};
        out.push_back(std::move(c));
    }
}

std::vector<Vec> RandomMeasure::sample(std::uint64_t seed, std::size_t n) const {
    std::mt19937_64 rng(mix_seed(seed, 0x51));
    std::vector<std::vector<double>> cdf;
    for (const auto& w : data_->fibre_weights) cdf.push_back(cumulative(w));
    const Interval& h = ifs_->hull()[0];
    std::vector<Vec> out;
    out.reserve(n);
    std::vector<int> letters(depth_);
    for (std::size_t s = 0; s < n; ++s) {
        for (int j = 0; j < depth_; ++j) letters[j] = data_->fibre_letters[beta_[j]][draw(cdf[beta_[j]], rng)];
        double x = h.lo + uniform01(rng) * h.width();
        for (int j = depth_ - 1; j >= 0; --j) x = map1(ifs_->component(0), letters[j], x);
        out.push_back(Vec::Constant(1, x));
    }
    return out;
}

Interval RandomMeasure::cylinder_mass(const Word& w) const {
    if (w.size() > beta_.size()) throw PrefixTooShort("cylinder longer than the prefix");
    double m = 1.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
        const auto& letters = data_->fibre_letters[beta_[j]];
        auto it = std::find(letters.begin(), letters.end(), w[j]);
        if (it == letters.end()) return {0.0, 0.0};
        m *= data_->fibre_weights[beta_[j]][it - letters.begin()];
    }
    return {m, m};
}

FourierValue RandomMeasure::fourier(double xi, double tol) const {
    FourierValue out{0.0, 0.0};
    WordImages word(ifs_->component(0), ifs_->hull()[0]);
    std::size_t level = 0;
    const double scale = kTwoPi * std::abs(xi);
    std::function<void(double)> rec = [&](double mass) {
        Interval im = word.image();
        double err = scale * 0.5 * im.width();
        if (err <= tol || level == beta_.size()) {
            out.value += mass * std::polar(1.0, kTwoPi * xi * im.mid());
            out.error += mass * std::min(2.0, err);
            return;
        }
        const int b = beta_[level++];
        for (std::size_t i = 0; i < data_->fibre_letters[b].size(); ++i) {
            word.push(data_->fibre_letters[b][i]);
            rec(mass * data_->fibre_weights[b][i]);
            word.pop();
        }
        --level;
    };
    rec(1.0);
    return out;
}

FourierValue product_fourier(const RestrictedProductIFS& ifs, const Vec& xi, double tol, std::size_t budget) {
    if (xi.size() != ifs.dim()) throw InvalidArgument("frequency has wrong dimension");
    const int d = ifs.dim();
    FourierValue out{0.0, 0.0};
    std::size_t nodes = 0;
    std::vector<WordImages> letters;
    for (int i = 0; i < d; ++i) letters.emplace_back(ifs.component(i), ifs.hull()[i]);
    std::function<void(double)> rec = [&](double mass) {
        if (++nodes > budget) throw WordBudgetExceeded("product expansion over budget");
        double err = 0.0, phase = 0.0;
        for (int i = 0; i < d; ++i) {
            Interval im = letters[i].image();
            err += kTwoPi * std::abs(xi[i]) * 0.5 * im.width();
            phase += xi[i] * im.mid();
        }
        if (err <= tol) {
            out.value += mass * std::polar(1.0, kTwoPi * phase);
            out.error += mass * err;
            return;
        }
        for (int t = 0; t < ifs.size(); ++t) {
            for (int i = 0; i < d; ++i) letters[i].push(ifs.tuples()[t][i]);
            rec(mass * ifs.p()[t]);
            for (int i = 0; i < d; ++i) letters[i].pop();
        }
    };
    rec(1.0);
    return out;
}

DisintegrationRow disintegration_check(const RestrictedProductIFS& ifs, const Vec& xi, std::size_t n_samples,
                                       std::uint64_t seed, const DisintegrationOptions& opt) {
    if (xi.size() != ifs.dim()) throw InvalidArgument("frequency has wrong dimension");
    if (n_samples < 2) throw InvalidArgument("need at least two prefix samples");
    DisintegrationRow row;
    row.xi = xi;
    xi.cwiseAbs().maxCoeff(&row.lead);
    auto sys = std::make_shared<const RestrictedProductIFS>(ifs.with_leading(row.lead));
    Vec lx(ifs.dim());
    lx[0] = xi[row.lead];
    for (int i = 0, j = 1; i < ifs.dim(); ++i)
        if (i != row.lead) lx[j++] = xi[i];
    const Vec rest = lx.tail(ifs.dim() - 1);
    auto data = std::make_shared<const Disintegration>(project_alphabet(*sys));

    FourierValue direct = product_fourier(ifs, xi, opt.tol);
    row.direct = direct.value;
    row.direct_error = direct.error;

    std::vector<cplx> value(n_samples);
    std::vector<double> mod(n_samples), det(n_samples);
    parallel_for(n_samples, opt.workers, [&](std::size_t s) {
        std::vector<int> beta = sample_beta(*data, mix_seed(seed, s), opt.prefix + opt.skip);
        beta.erase(beta.begin(), beta.begin() + opt.skip);
        double radius = 0.0;
        Vec anchor = beta_anchor(*sys, *data, beta, &radius);
        RandomMeasure mu(sys, data, beta, opt.prefix);
        FourierValue f = mu.fourier(lx[0], opt.tol);
        value[s] = std::polar(1.0, kTwoPi * rest.dot(anchor)) * f.value;
        mod[s] = std::abs(f.value);
        det[s] = f.error + std::min(2.0, kTwoPi * rest.norm() * radius);
    });
    const double n = static_cast<double>(n_samples);
    cplx mean = 0.0;
    double mean_mod = 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) {
        mean += value[s];
        mean_mod += mod[s];
        row.closure += det[s];
    }
    mean /= n;
    mean_mod /= n;
    row.closure /= n;
    double var = 0.0, var_mod = 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) {
        var += std::norm(value[s] - mean);
        var_mod += (mod[s] - mean_mod) * (mod[s] - mean_mod);
    }
    row.reconstruction = mean;
    row.sigma = std::sqrt(var / (n - 1) / n);
    row.abs_mean = mean_mod;
    row.abs_sigma = std::sqrt(var_mod / (n - 1) / n);
    row.reconstruction_ok = std::abs(row.reconstruction - row.direct) <= 3.0 * row.sigma + row.closure + direct.error;
    row.triangle_ok = std::abs(row.direct) <= row.abs_mean + 3.0 * row.abs_sigma + row.closure + direct.error;
    return row;
}

// -------------------------------------------------- random transfer operators

RandomDecayTable random_norm_decay(const RestrictedProductIFS& ifs, int n_max, const std::vector<double>& b_list,
                                   int n_betas, std::uint64_t seed, const RandomDecayOptions& opt) {
    if (n_max < 1 || n_betas < 1) throw InvalidArgument("need n_max >= 1 and at least one prefix");
    HypothesisReport hyp = check_hypotheses(ifs);
    require_hypotheses(hyp, 2);
    if (!hyp.uni_ok[0]) throw HypothesisViolation(3, "no fibre of coordinate 1 is UNI");
    Disintegration data = project_alphabet(ifs);
    const IFSSystem& first = ifs.component(0);

    std::vector<TwistedOperator> ops;
    for (std::size_t b = 0; b < data.q.size(); ++b) {
        std::vector<double> lw(first.size(), -std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < data.fibre_letters[b].size(); ++i)
            lw[data.fibre_letters[b][i]] = std::log(data.fibre_weights[b][i]);
        ops.emplace_back(ifs.component_ptr(0), GibbsPotential::per_symbol(lw), 0.0);
    }

    RandomDecayTable table;
    table.b = b_list;
    for (double b : b_list) {
        std::vector<std::vector<double>> sup(n_betas, std::vector<double>(n_max));
        parallel_for(n_betas, opt.workers, [&](std::size_t s) {
            std::vector<int> beta = sample_beta(data, mix_seed(seed, s), n_max);
            FunctionGrid g = FunctionGrid::constant(first, opt.depth, opt.nodes_per_axis, 1.0, b);
            for (int k = 0; k < n_max; ++k) {
                g = apply_transfer(ops[beta[k]].with_twist(b), g);
                sup[s][k] = g.sup_norm();
            }
        });
        std::vector<double> rho(n_betas);
        std::vector<double> exc(n_max, 0.0);
        for (int s = 0; s < n_betas; ++s) {
            std::vector<double> xs, ys;
            for (int k = 0; k < n_max; ++k) {
                double r = sup[s][k] > 0.0 ? std::pow(sup[s][k], 1.0 / (k + 1)) : 0.0;
                table.rows.push_back({b, s, k + 1, sup[s][k], r});
                if (r >= 1.0 - opt.margin) exc[k] += 1.0 / n_betas;
                if (sup[s][k] > 1e-12) {
                    xs.push_back(k + 1);
                    ys.push_back(std::log(sup[s][k]));
                }
            }
            rho[s] = xs.size() >= 2 ? std::exp(fit_line(xs, ys).slope) : (xs.empty() ? 0.0 : sup[s][0]);
        }
        table.rho.push_back(rho);
        table.exceptional.push_back(exc);
    }
    return table;
}

}  // namespace fdecay
