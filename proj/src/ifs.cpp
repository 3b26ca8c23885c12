#include "fdecay/ifs.hpp"

#include <sstream>

namespace fdecay {

// ---------------------------------------------------------------- orthogonal

OrthogonalMatrix::OrthogonalMatrix(Mat m, double tol) : m_(std::move(m)) {
    if (m_.rows() != m_.cols() || m_.rows() == 0)
        throw InvalidArgument("orthogonal matrix must be square and non-empty");
    const Mat e = m_.transpose() * m_ - Mat::Identity(m_.rows(), m_.cols());
    if (e.cwiseAbs().maxCoeff() > tol)
        throw InvalidArgument("matrix is not orthogonal within tolerance");
    if (std::abs(std::abs(m_.determinant()) - 1.0) > tol)
        throw InvalidArgument("orthogonal matrix determinant is not +-1");
}

OrthogonalMatrix OrthogonalMatrix::identity(int d) { return OrthogonalMatrix(Mat::Identity(d, d)); }

OrthogonalMatrix OrthogonalMatrix::rotation2d(double angle) {
    Mat r(2, 2);
    r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    return OrthogonalMatrix(r);
}

bool OrthogonalMatrix::commutes_with(const OrthogonalMatrix& o, double tol) const {
    return (m_ * o.m_ - o.m_ * m_).cwiseAbs().maxCoeff() <= tol;
}

// ------------------------------------------------------------ conformal map

namespace {

bool outside_unit_cube(const Vec& u) {
    for (int i = 0; i < u.size(); ++i)
        if (u[i] < 0.0 || u[i] > 1.0) return true;
    return false;
}

ConformalDerivative from_jacobian(const Mat& j, double tol) {
    const int d = static_cast<int>(j.rows());
    ConformalDerivative out;
    if (d == 1) {
        out.scale = j(0, 0);
        out.rotation = Mat::Identity(1, 1);
        if (out.scale == 0.0) throw InvalidArgument("user map has vanishing derivative");
        return out;
    }
    const double s = std::sqrt((j.transpose() * j).trace() / d);
    if (!(s > 0.0)) throw InvalidArgument("user map has vanishing derivative");
    out.scale = s;
    out.rotation = j / s;
    const Mat e = out.rotation.transpose() * out.rotation - Mat::Identity(d, d);
    if (e.cwiseAbs().maxCoeff() > tol)
        throw InvalidArgument("user map Jacobian is not conformal (lambda * O) at a probe");
    return out;
}

}  // namespace

ConformalMap::ConformalMap(Similitude s) : v_(std::move(s)) {
    const auto& m = std::get<Similitude>(v_);
    if (!(std::abs(m.ratio) > 0.0 && std::abs(m.ratio) < 1.0))
        throw InvalidArgument("similitude ratio must satisfy 0 < |r| < 1");
    dim_ = m.rotation.dim();
    if (m.translation.size() != dim_) throw InvalidArgument("similitude translation has wrong dimension");
}

ConformalMap::ConformalMap(MobiusMap mm) : v_(std::move(mm)) {
    const auto& m = std::get<MobiusMap>(v_);
    dim_ = m.rotation.dim();
    if (m.t.size() != dim_ || m.u.size() != dim_) throw InvalidArgument("mobius map has inconsistent dimensions");
    // Contraction of [0,1]^d is checked by IFSSystem on probes; lambda itself
    // only needs to be positive (1/(x+1) has lambda = 1).
    if (!(m.lambda > 0.0)) throw InvalidArgument("mobius lambda must be positive");
    if (!outside_unit_cube(m.u)) throw InvalidArgument("mobius centre u must lie outside [0,1]^d");
}

ConformalMap::ConformalMap(UserMap um) : v_(std::move(um)) {
    const auto& m = std::get<UserMap>(v_);
    if (m.dim < 1 || !m.eval || !m.jacobian) throw InvalidArgument("user map needs dim, eval and jacobian");
    dim_ = m.dim;
    for (const Vec& p : cube_probes(dim_, dim_ == 1 ? 9 : 4)) from_jacobian(m.jacobian(p), 1e-8);
}

std::string ConformalMap::kind() const {
    if (is_similitude()) return "similitude";
    if (mobius()) return "mobius";
    return std::get<UserMap>(v_).label;
}

Vec ConformalMap::apply(const Vec& x) const {
    if (auto s = similitude()) return s->ratio * (s->rotation.matrix() * x) + s->translation;
    if (auto m = mobius()) {
        const Vec y = x - m->u;
        return m->t + (m->lambda / y.squaredNorm()) * (m->rotation.matrix() * y);
    }
    return std::get<UserMap>(v_).eval(x);
}

ConformalDerivative ConformalMap::derivative(const Vec& x) const {
    if (auto s = similitude()) return {s->ratio, s->rotation.matrix()};
    if (auto m = mobius()) {
        const Vec y = x - m->u;
        const double q = y.squaredNorm();
        Mat refl = Mat::Identity(dim_, dim_) - (2.0 / q) * (y * y.transpose());
        return {m->lambda / q, m->rotation.matrix() * refl};
    }
    return from_jacobian(std::get<UserMap>(v_).jacobian(x), 1e-8);
}

double ConformalMap::log_scale(const Vec& x) const {
    if (auto s = similitude()) return std::log(std::abs(s->ratio));
    if (auto m = mobius()) return std::log(m->lambda) - std::log((x - m->u).squaredNorm());
    return std::log(std::abs(derivative(x).scale));
}

Vec ConformalMap::grad_log_scale(const Vec& x) const {
    if (is_similitude()) return Vec::Zero(dim_);
    if (auto m = mobius()) {
        const Vec y = x - m->u;
        return (-2.0 / y.squaredNorm()) * y;
    }
    const double h = 1e-6;
    Vec g(dim_);
    for (int i = 0; i < dim_; ++i) {
        Vec xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        g[i] = (log_scale(xp) - log_scale(xm)) / (2 * h);
    }
    return g;
}

double ConformalMap::sup_scale(const Vec& c, double r) const {
    if (auto s = similitude()) return std::abs(s->ratio);
    if (auto m = mobius()) {
        const double dist = (c - m->u).norm() - r;
        if (dist <= 0.0) return std::numeric_limits<double>::infinity();
        return m->lambda / (dist * dist);
    }
    // No structure to exploit: sample the ball and pad.
    double best = std::abs(derivative(c).scale);
    for (int i = 0; i < dim_; ++i)
        for (double sgn : {-1.0, 1.0}) {
            Vec p = c;
            p[i] += sgn * r;
            best = std::max(best, std::abs(derivative(p).scale));
        }
    return 1.1 * best;
}

// ---------------------------------------------------------------------- word

Word::Word(std::vector<int> symbols, int alphabet_size)
    : s_(std::move(symbols)), counts_(static_cast<std::size_t>(alphabet_size), 0) {
    for (int a : s_) {
        if (a < 0 || a >= alphabet_size) throw InvalidArgument("word symbol out of range");
        ++counts_[a];
    }
}

Word Word::prefix(std::size_t n) const {
    n = std::min(n, s_.size());
    return Word(std::vector<int>(s_.begin(), s_.begin() + static_cast<long>(n)), alphabet_size());
}

Word Word::append(int a) const {
    Word w = *this;
    if (a < 0 || a >= alphabet_size()) throw InvalidArgument("word symbol out of range");
    w.s_.push_back(a);
    ++w.counts_[a];
    return w;
}

Word Word::concat(const Word& other) const {
    Word w = *this;
    for (int a : other.s_) w = w.append(a);
    return w;
}

std::string Word::str(const std::vector<std::string>& names) const {
    std::string out;
    for (int a : s_) out += (a < static_cast<int>(names.size())) ? names[a] : std::to_string(a);
    return out.empty() ? std::string("()") : out;
}

// ------------------------------------------------------------------ subshift

SubshiftMatrix::SubshiftMatrix(std::vector<std::vector<int>> rows) : a_(std::move(rows)) {
    const int k = size();
    if (k == 0) throw InvalidArgument("subshift matrix is empty");
    for (const auto& r : a_) {
        if (static_cast<int>(r.size()) != k) throw InvalidArgument("subshift matrix must be square");
        for (int v : r)
            if (v != 0 && v != 1) throw InvalidArgument("subshift matrix entries must be 0 or 1");
    }
    // Boolean powers; Wielandt's bound (k-1)^2+1 <= k^2 makes k^2 enough.
    std::vector<std::vector<int>> p = a_;
    for (int n = 1; n <= k * k; ++n) {
        bool positive = true;
        for (const auto& r : p)
            for (int v : r) positive = positive && v != 0;
        if (positive) {
            power_ = n;
            return;
        }
        std::vector<std::vector<int>> q(k, std::vector<int>(k, 0));
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j)
                for (int l = 0; l < k && !q[i][j]; ++l) q[i][j] = p[i][l] && a_[l][j];
        p = std::move(q);
    }
    throw NonPrimitiveSubshift("no power A^n with n <= |alphabet|^2 is strictly positive");
}

SubshiftMatrix SubshiftMatrix::full(int k) {
    return SubshiftMatrix(std::vector<std::vector<int>>(k, std::vector<int>(k, 1)));
}

bool SubshiftMatrix::is_full() const {
    for (const auto& r : a_)
        for (int v : r)
            if (!v) return false;
    return true;
}

bool SubshiftMatrix::admissible(const Word& w) const {
    for (std::size_t i = 0; i + 1 < w.size(); ++i)
        if (!allowed(w[i], w[i + 1])) return false;
    return true;
}

Mat SubshiftMatrix::as_matrix() const {
    Mat m(size(), size());
    for (int i = 0; i < size(); ++i)
        for (int j = 0; j < size(); ++j) m(i, j) = a_[i][j];
    return m;
}

// ---------------------------------------------------------------- IFSSystem

std::vector<Vec> cube_probes(int d, int per_axis) {
    std::vector<Vec> out;
    std::vector<int> idx(d, 0);
    for (;;) {
        Vec p(d);
        for (int i = 0; i < d; ++i) p[i] = (idx[i] + 0.5) / per_axis;
        out.push_back(p);
        int i = 0;
        while (i < d && ++idx[i] == per_axis) idx[i++] = 0;
        if (i == d) break;
    }
    return out;
}

namespace {

bool boxes_overlap(const Box& a, const Box& b) {
    for (int i = 0; i < a.dim(); ++i)
        if (!(a.lo[i] < b.hi[i] && b.lo[i] < a.hi[i])) return false;
    return true;
}

}  // namespace

IFSSystem::IFSSystem(int dim, std::vector<ConformalMap> maps, std::optional<SubshiftMatrix> subshift,
                     std::vector<std::string> names, std::optional<std::vector<Box>> boxes)
    : dim_(dim), maps_(std::move(maps)), names_(std::move(names)), boxes_(std::move(boxes)) {
    if (dim_ < 1) throw InvalidArgument("dimension must be positive");
    if (maps_.empty()) throw InvalidArgument("system needs at least one map");
    const int k = size();
    for (const auto& m : maps_)
        if (m.dim() != dim_) throw InvalidArgument("map dimension does not match system dimension");
    subshift_ = subshift ? *subshift : SubshiftMatrix::full(k);
    if (subshift_.size() != k) throw InvalidArgument("subshift size does not match alphabet");
    if (names_.empty()) {
        for (int a = 0; a < k; ++a)
            names_.push_back(k <= 26 ? std::string(1, static_cast<char>('a' + a)) : "s" + std::to_string(a));
    }
    if (static_cast<int>(names_.size()) != k) throw InvalidArgument("alphabet size does not match maps");

    // Contraction of [0,1]^d on ~1e3 interior probes.
    int per_axis = 1;
    while (std::pow(per_axis, dim_) < 1000) ++per_axis;
    const auto probes = cube_probes(dim_, per_axis);
    for (int a = 0; a < k; ++a) {
        for (const Vec& p : probes) {
            if (!(std::abs(maps_[a].derivative(p).scale) < 1.0))
                throw InvalidArgument("map " + names_[a] + " does not contract [0,1]^d at a probe");
            const Vec q = maps_[a].apply(p);
            if ((q.array() < -1e-9).any() || (q.array() > 1.0 + 1e-9).any())
                throw InvalidArgument("map " + names_[a] + " does not send [0,1]^d into itself");
        }
    }

    if (boxes_) {
        if (static_cast<int>(boxes_->size()) != k) throw InvalidArgument("need one box per symbol");
        for (int a = 0; a < k; ++a)
            for (int b = a + 1; b < k; ++b)
                if (boxes_overlap((*boxes_)[a], (*boxes_)[b]))
                    throw InvalidArgument("separation boxes " + names_[a] + " and " + names_[b] + " overlap");
        for (int a = 0; a < k; ++a) {
            const Box& u = (*boxes_)[a];
            for (const Vec& p : cube_probes(dim_, std::max(2, per_axis / 3))) {
                const Vec q = maps_[a].apply(p);
                if ((q.array() < u.lo.array()).any() || (q.array() > u.hi.array()).any())
                    throw InvalidArgument("f_" + names_[a] + "([0,1]^d) leaves its box");
            }
        }
    }

    // Group letters whose linear parts coincide exactly.
    linear_class_.assign(k, -1);
    for (int a = 0; a < k; ++a) {
        if (linear_class_[a] >= 0) continue;
        linear_class_[a] = n_classes_;
        const auto* sa = maps_[a].similitude();
        for (int b = a + 1; b < k && sa; ++b) {
            const auto* sb = maps_[b].similitude();
            if (sb && linear_class_[b] < 0 && sa->ratio == sb->ratio &&
                sa->rotation.matrix() == sb->rotation.matrix())
                linear_class_[b] = n_classes_;
        }
        ++n_classes_;
    }
    for (int a = 0; a < k; ++a)
        for (int b = a + 1; b < k; ++b) {
            const auto* sa = maps_[a].similitude();
            const auto* sb = maps_[b].similitude();
            if (!sa || !sb || !sa->rotation.commutes_with(sb->rotation)) rotations_commute_ = false;
        }
}

int IFSSystem::symbol(const std::string& name) const {
    for (int a = 0; a < size(); ++a)
        if (names_[a] == name) return a;
    throw InvalidArgument("unknown symbol '" + name + "'");
}

bool IFSSystem::all_similitudes() const {
    return std::all_of(maps_.begin(), maps_.end(), [](const ConformalMap& m) { return m.is_similitude(); });
}

bool IFSSystem::homogeneous() const { return all_similitudes() && n_classes_ == 1; }

Word IFSSystem::parse_word(const std::string& text) const {
    std::vector<int> s;
    bool single_chars = std::all_of(names_.begin(), names_.end(), [](const std::string& n) { return n.size() == 1; });
    if (single_chars && text.find_first_of(" ,") == std::string::npos) {
        for (char c : text) s.push_back(symbol(std::string(1, c)));
    } else {
        std::string tok;
        std::istringstream in(text);
        while (std::getline(in, tok, ',')) {
            std::istringstream ws(tok);
            std::string t;
            while (ws >> t) s.push_back(symbol(t));
        }
    }
    return word(s);
}

// ------------------------------------------------------------- composition

namespace {

void require_admissible(const IFSSystem& sys, const Word& w) {
    if (w.alphabet_size() != sys.size() && !w.empty()) throw InvalidArgument("word alphabet does not match system");
    if (!sys.subshift().admissible(w)) throw InadmissibleWord("word " + w.str(sys.names()) + " violates the subshift");
}

}  // namespace

Vec compose_word(const IFSSystem& sys, const Word& w, const Vec& x) {
    require_admissible(sys, w);
    Vec y = x;
    for (std::size_t i = w.size(); i-- > 0;) y = sys.map(w[i]).apply(y);
    return y;
}

ConformalDerivative word_derivative(const IFSSystem& sys, const Word& w, const Vec& x) {
    require_admissible(sys, w);
    ConformalDerivative out{1.0, Mat::Identity(sys.dim(), sys.dim())};
    Vec y = x;
    for (std::size_t i = w.size(); i-- > 0;) {
        const auto& m = sys.map(w[i]);
        const ConformalDerivative d = m.derivative(y);
        out.scale *= d.scale;
        out.rotation = d.rotation * out.rotation;
        y = m.apply(y);
    }
    return out;
}

double word_log_scale(const IFSSystem& sys, const Word& w, const Vec& x) {
    require_admissible(sys, w);
    double s = 0.0;
    Vec y = x;
    for (std::size_t i = w.size(); i-- > 0;) {
        const auto& m = sys.map(w[i]);
        s += m.log_scale(y);
        y = m.apply(y);
    }
    return s;
}

Vec word_grad_log_scale(const IFSSystem& sys, const Word& w, const Vec& x) {
    require_admissible(sys, w);
    const int d = sys.dim();
    Vec g = Vec::Zero(d);
    Mat jac = Mat::Identity(d, d);
    Vec y = x;
    for (std::size_t i = w.size(); i-- > 0;) {
        const auto& m = sys.map(w[i]);
        g += jac.transpose() * m.grad_log_scale(y);
        const ConformalDerivative dm = m.derivative(y);
        jac = dm.scale * dm.rotation * jac;
        y = m.apply(y);
    }
    return g;
}

AffineWord word_affine(const IFSSystem& sys, const Word& w) {
    require_admissible(sys, w);
    const int d = sys.dim();
    AffineWord out{Mat::Identity(d, d), Vec::Zero(d), 1.0};
    for (std::size_t i = 0; i < w.size(); ++i) {
        const auto* s = sys.map(w[i]).similitude();
        if (!s) throw InvalidArgument("word_affine needs similitude maps");
        out.offset += out.linear * s->translation;
        out.linear = out.linear * (s->ratio * s->rotation.matrix());
        out.ratio *= s->ratio;
    }
    return out;
}

Ball word_image_ball(const IFSSystem& sys, const Word& w) {
    const int d = sys.dim();
    Vec c = Vec::Constant(d, 0.5);
    double r = 0.5 * std::sqrt(static_cast<double>(d));
    bool affine = true;
    for (int a : w.symbols()) affine = affine && sys.map(a).is_similitude();
    if (affine) {
        const AffineWord aw = word_affine(sys, w);
        return {aw.linear * c + aw.offset, std::abs(aw.ratio) * r};
    }
    require_admissible(sys, w);
    const double cap = std::sqrt(static_cast<double>(d));
    for (std::size_t i = w.size(); i-- > 0;) {
        const auto& m = sys.map(w[i]);
        double s = m.sup_scale(c, r);
        c = m.apply(c);
        r = std::min(cap, s * r);
    }
    return {c, r};
}

Box word_hull(const IFSSystem& sys, const Word& w) {
    const int d = sys.dim();
    Box out;
    bool affine = true;
    for (int a : w.symbols()) affine = affine && sys.map(a).is_similitude();
    if (d == 1 && !affine) {
        // Conformal maps of an interval are monotone: push the endpoints.
        require_admissible(sys, w);
        Vec lo = Vec::Zero(1), hi = Vec::Ones(1);
        for (std::size_t i = w.size(); i-- > 0;) {
            Vec a = sys.map(w[i]).apply(lo), b = sys.map(w[i]).apply(hi);
            lo = a.cwiseMin(b);
            hi = a.cwiseMax(b);
        }
        out = {lo, hi};
    } else if (affine) {
        const AffineWord aw = word_affine(sys, w);
        const Vec c = aw.linear * Vec::Constant(d, 0.5) + aw.offset;
        const Vec half = 0.5 * aw.linear.cwiseAbs() * Vec::Ones(d);
        out = {c - half, c + half};
    } else {
        const Ball b = word_image_ball(sys, w);
        out = Box::around(b.center, b.radius);
    }
    out.lo = out.lo.cwiseMax(Vec::Zero(d));
    out.hi = out.hi.cwiseMin(Vec::Ones(d));
    out.hi = out.hi.cwiseMax(out.lo);
    return out;
}

void for_each_word(const IFSSystem& sys, int n, const std::function<void(const Word&)>& fn) {
    if (n < 0) throw InvalidArgument("word length must be non-negative");
    const int k = sys.size();
    std::vector<int> s(static_cast<std::size_t>(n), 0);
    if (n == 0) {
        fn(Word({}, k));
        return;
    }
    // Depth-first over admissible continuations.
    std::function<void(int)> rec = [&](int pos) {
        if (pos == n) {
            fn(Word(s, k));
            return;
        }
        for (int a = 0; a < k; ++a) {
            if (pos > 0 && !sys.subshift().allowed(s[pos - 1], a)) continue;
            s[pos] = a;
            rec(pos + 1);
        }
    };
    rec(0);
}

std::vector<Word> enumerate_words(const IFSSystem& sys, int n) {
    std::vector<Word> out;
    for_each_word(sys, n, [&](const Word& w) { out.push_back(w); });
    return out;
}

SeparationReport check_strong_separation(const IFSSystem& sys, int depth) {
    if (depth < 1) throw InvalidArgument("separation depth must be >= 1");
    SeparationReport rep;
    rep.depth = depth;
    const int k = sys.size();
    if (k == 1) return rep;
    std::vector<std::vector<Box>> hulls(k);
    for_each_word(sys, depth, [&](const Word& w) { hulls[w[0]].push_back(word_hull(sys, w)); });
    for (int a = 0; a < k; ++a)
        for (int b = a + 1; b < k; ++b)
            for (const Box& x : hulls[a])
                for (const Box& y : hulls[b]) {
                    double g = x.distance(y);
                    if (g < rep.gap) {
                        rep.gap = g;
                        rep.closest_a = a;
                        rep.closest_b = b;
                    }
                }
    rep.ok = rep.gap > 0.0;
    return rep;
}

DistortionConstants distortion_constants(const IFSSystem& sys, int depth) {
    if (depth < 1) throw InvalidArgument("distortion depth must be >= 1");
    const int d = sys.dim();
    std::vector<Vec> probes = cube_probes(d, 3);
    for (int mask = 0; mask < (1 << d); ++mask) {
        Vec c(d);
        for (int i = 0; i < d; ++i) c[i] = (mask >> i) & 1;
        probes.push_back(c);
    }
    DistortionConstants out;
    out.depth = depth;
    out.c_diam = 0.0;
    const std::size_t np = probes.size();
    std::vector<Mat> jac(np);
    std::vector<Vec> img(np);
    for (int n = 1; n <= depth; ++n) {
        for_each_word(sys, n, [&](const Word& w) {
            double sup = 0.0;
            for (std::size_t i = 0; i < np; ++i) {
                const ConformalDerivative dv = word_derivative(sys, w, probes[i]);
                jac[i] = dv.scale * dv.rotation;
                img[i] = compose_word(sys, w, probes[i]);
                sup = std::max(sup, std::abs(dv.scale));
            }
            double diam = 0.0;
            for (std::size_t i = 0; i < np; ++i)
                for (std::size_t j = i + 1; j < np; ++j) {
                    diam = std::max(diam, (img[i] - img[j]).norm());
                    const double num = (jac[i] - jac[j]).norm() == 0.0
                                           ? 0.0
                                           : Eigen::JacobiSVD<Mat>(jac[i] - jac[j]).singularValues()[0];
                    out.c_lin = std::max(out.c_lin, num / (sup * (probes[i] - probes[j]).norm()));
                }
            for (std::size_t i = 0; i < np; ++i) {
                const double s = jac[i].norm() / std::sqrt(static_cast<double>(d));  // |scale|
                out.c_diam = std::max({out.c_diam, s / diam, diam / s});
            }
        });
    }
    return out;
}

}  // namespace fdecay
