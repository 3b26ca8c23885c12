#ifndef FDECAY_IFS_HPP
#define FDECAY_IFS_HPP

#include "fdecay/common.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace fdecay {

class OrthogonalMatrix {
public:
    OrthogonalMatrix() = default;
    // Throws InvalidArgument when ||O^T O - I||_max or ||det| - 1| exceeds tol.
    explicit OrthogonalMatrix(Mat m, double tol = 1e-12);

    static OrthogonalMatrix identity(int d);
    static OrthogonalMatrix rotation2d(double angle);

    const Mat& matrix() const { return m_; }
    int dim() const { return static_cast<int>(m_.rows()); }
    bool commutes_with(const OrthogonalMatrix& o, double tol = 1e-12) const;

private:
    Mat m_;
};

// x -> ratio * O x + t
struct Similitude {
    double ratio = 0.5;
    OrthogonalMatrix rotation;
    Vec translation;
};

// x -> t + lambda * O (x - u) / |x - u|^2, an inversion in the sphere about u
// followed by a rotation, scaling and shift.
struct MobiusMap {
    Vec t;
    double lambda = 0.5;
    OrthogonalMatrix rotation;
    Vec u;
};

// Arbitrary conformal map given by code. The Jacobian must be a scalar
// multiple of an orthogonal matrix; that is checked at construction on probes.
struct UserMap {
    int dim = 1;
    std::function<Vec(const Vec&)> eval;
    std::function<Mat(const Vec&)> jacobian;
    std::string label = "user";
};

// D_x f = scale * O. scale carries the sign for 1-D orientation reversal of
// similitudes with negative ratio; everything downstream uses |scale|.
struct ConformalDerivative {
    double scale = 1.0;
    Mat rotation;
};

class ConformalMap {
public:
    using Variant = std::variant<Similitude, MobiusMap, UserMap>;

    ConformalMap(Similitude s);
    ConformalMap(MobiusMap m);
    ConformalMap(UserMap u);

    int dim() const { return dim_; }
    Vec apply(const Vec& x) const;
    ConformalDerivative derivative(const Vec& x) const;
    double log_scale(const Vec& x) const;       // log |lambda(x)|
    Vec grad_log_scale(const Vec& x) const;     // gradient of log |lambda(x)|
    // Upper bound for |lambda| on the closed ball B(c, r).
    double sup_scale(const Vec& c, double r) const;

    bool is_similitude() const { return std::holds_alternative<Similitude>(v_); }
    const Similitude* similitude() const { return std::get_if<Similitude>(&v_); }
    const MobiusMap* mobius() const { return std::get_if<MobiusMap>(&v_); }
    const Variant& variant() const { return v_; }
    std::string kind() const;

private:
    Variant v_;
    int dim_ = 1;
};

class Word {
public:
    Word() = default;
    Word(std::vector<int> symbols, int alphabet_size);
    static Word single(int a, int alphabet_size) { return Word({a}, alphabet_size); }

    std::size_t size() const { return s_.size(); }
    bool empty() const { return s_.empty(); }
    int operator[](std::size_t i) const { return s_[i]; }
    int back() const { return s_.back(); }
    const std::vector<int>& symbols() const { return s_; }
    const std::vector<int>& counts() const { return counts_; }
    int count(int a) const { return counts_.at(a); }
    int alphabet_size() const { return static_cast<int>(counts_.size()); }

    Word prefix(std::size_t n) const;
    Word drop_last() const { return prefix(s_.empty() ? 0 : s_.size() - 1); }
    Word append(int a) const;
    Word concat(const Word& other) const;
    std::string str(const std::vector<std::string>& names = {}) const;

    bool operator==(const Word& o) const { return s_ == o.s_; }
    bool operator<(const Word& o) const { return s_ < o.s_; }

private:
    std::vector<int> s_;
    std::vector<int> counts_;
};

class SubshiftMatrix {
public:
    SubshiftMatrix() = default;
    // Validates a square 0/1 matrix that is primitive (some power <= k^2 is
    // strictly positive); throws NonPrimitiveSubshift otherwise.
    explicit SubshiftMatrix(std::vector<std::vector<int>> rows);
    static SubshiftMatrix full(int k);

    int size() const { return static_cast<int>(a_.size()); }
    bool allowed(int a, int b) const { return a_[a][b] != 0; }
    bool is_full() const;
    int primitivity_exponent() const { return power_; }
    bool admissible(const Word& w) const;
    Mat as_matrix() const;
    const std::vector<std::vector<int>>& rows() const { return a_; }

private:
    std::vector<std::vector<int>> a_;
    int power_ = 1;
};

class IFSSystem {
public:
    IFSSystem(int dim, std::vector<ConformalMap> maps,
              std::optional<SubshiftMatrix> subshift = std::nullopt,
              std::vector<std::string> names = {},
              std::optional<std::vector<Box>> boxes = std::nullopt);

    int dim() const { return dim_; }
    int size() const { return static_cast<int>(maps_.size()); }
    const ConformalMap& map(int a) const { return maps_.at(a); }
    const std::vector<ConformalMap>& maps() const { return maps_; }
    const SubshiftMatrix& subshift() const { return subshift_; }
    const std::vector<std::string>& names() const { return names_; }
    const std::optional<std::vector<Box>>& boxes() const { return boxes_; }
    int symbol(const std::string& name) const;

    bool all_similitudes() const;
    // All linear parts identical: ratio and rotation.
    bool homogeneous() const;
    // Letters grouped by identical linear part; class ids are dense.
    const std::vector<int>& linear_class() const { return linear_class_; }
    int linear_class_count() const { return n_classes_; }
    bool rotations_commute() const { return rotations_commute_; }

    Word word(const std::vector<int>& s) const { return Word(s, size()); }
    Word parse_word(const std::string& text) const;

private:
    int dim_;
    std::vector<ConformalMap> maps_;
    SubshiftMatrix subshift_;
    std::vector<std::string> names_;
    std::optional<std::vector<Box>> boxes_;
    std::vector<int> linear_class_;
    int n_classes_ = 0;
    bool rotations_commute_ = true;
};

// f_{a1} o ... o f_{an}(x), innermost (last) letter first.
Vec compose_word(const IFSSystem& sys, const Word& w, const Vec& x);
ConformalDerivative word_derivative(const IFSSystem& sys, const Word& w, const Vec& x);
double word_log_scale(const IFSSystem& sys, const Word& w, const Vec& x);
Vec word_grad_log_scale(const IFSSystem& sys, const Word& w, const Vec& x);

// Composite affine map of a similitude word: x -> linear * x + offset.
struct AffineWord {
    Mat linear;
    Vec offset;
    double ratio = 1.0;   // signed scalar part
};
AffineWord word_affine(const IFSSystem& sys, const Word& w);

// Enclosing ball of f_w([0,1]^d): center f_w(cube center) and a sound radius.
struct Ball {
    Vec center;
    double radius = 0.0;
};
Ball word_image_ball(const IFSSystem& sys, const Word& w);
// Axis-aligned enclosure of f_w([0,1]^d) clipped to the unit cube.
Box word_hull(const IFSSystem& sys, const Word& w);

// Calls fn on each admissible word of length n in lexicographic order.
void for_each_word(const IFSSystem& sys, int n, const std::function<void(const Word&)>& fn);
std::vector<Word> enumerate_words(const IFSSystem& sys, int n);

struct SeparationReport {
    bool ok = true;
    double gap = std::numeric_limits<double>::infinity();
    int depth = 1;
    int closest_a = -1;
    int closest_b = -1;
};
SeparationReport check_strong_separation(const IFSSystem& sys, int depth);

struct DistortionConstants {
    double c_lin = 0.0;
    double c_diam = 1.0;
    int depth = 1;
};
DistortionConstants distortion_constants(const IFSSystem& sys, int depth);

// Points of [0,1]^d used by the sampled contraction / conformality checks.
std::vector<Vec> cube_probes(int d, int per_axis);

}  // namespace fdecay

#endif
