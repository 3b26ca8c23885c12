#include "config.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fdecay::cli {

namespace {

std::string escape_token(const std::string& key) {
    std::string out;
    for (char c : key) {
        if (c == '~') out += "~0";
        else if (c == '/') out += "~1";
        else out += c;
    }
    return out;
}

// Walks already-validated JSON text and records where each value starts.
class Locator {
public:
    Locator(const std::string& text, std::map<std::string, std::pair<int, int>>& out) : s_(text), out_(out) {}

    void run() {
        skip_ws();
        value("");
    }

private:
    void advance() {
        if (s_[i_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++i_;
    }
    void skip_ws() {
        while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) advance();
    }
    std::string string_token() {
        std::string v;
        advance();   // opening quote
        while (i_ < s_.size() && s_[i_] != '"') {
            if (s_[i_] == '\\') {
                advance();
                v += s_[i_];   // good enough for keys; escapes in keys are rare
            } else {
                v += s_[i_];
            }
            advance();
        }
        advance();
        return v;
    }
    void value(const std::string& ptr) {
        out_.emplace(ptr, std::pair{line_, col_});
        char c = s_[i_];
        if (c == '{') {
            advance();
            skip_ws();
            if (s_[i_] == '}') {
                advance();
                return;
            }
            while (true) {
                skip_ws();
                std::string key = string_token();
                skip_ws();
                advance();   // ':'
                skip_ws();
                value(ptr + "/" + escape_token(key));
                skip_ws();
                char d = s_[i_];
                advance();
                if (d == '}') return;
            }
        } else if (c == '[') {
            advance();
            skip_ws();
            if (s_[i_] == ']') {
                advance();
                return;
            }
            for (int k = 0;; ++k) {
                skip_ws();
                value(ptr + "/" + std::to_string(k));
                skip_ws();
                char d = s_[i_];
                advance();
                if (d == ']') return;
            }
        } else if (c == '"') {
            string_token();
        } else {
            while (i_ < s_.size() && !std::strchr(",]} \t\r\n", s_[i_])) advance();
        }
    }

    const std::string& s_;
    std::map<std::string, std::pair<int, int>>& out_;
    std::size_t i_ = 0;
    int line_ = 1, col_ = 1;
};

std::pair<int, int> line_col(const std::string& text, std::size_t byte) {
    int line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

bool is_integral(const json& v) {
    if (v.is_number_integer()) return true;
    return v.is_number_float() && std::isfinite(v.get<double>()) && std::floor(v.get<double>()) == v.get<double>() &&
           std::abs(v.get<double>()) < 9e15;
}

bool fraction_string(const std::string& s, double& out) {
    auto slash = s.find('/');
    try {
        std::size_t used = 0;
        if (slash == std::string::npos) {
            out = std::stod(s, &used);
            return used == s.size();
        }
        std::string a = s.substr(0, slash), b = s.substr(slash + 1);
        double num = std::stod(a, &used);
        if (used != a.size()) return false;
        double den = std::stod(b, &used);
        if (used != b.size() || den == 0.0) return false;
        out = num / den;
        return true;
    } catch (const std::exception&) {
        return false;
    }
}

std::string type_label(const std::string& type) {
    if (type.rfind("string:", 0) == 0) return "one of " + type.substr(7);
    if (type == "number?") return "number or null";
    if (type == "numbers") return "array of numbers";
    if (type == "ints") return "array of integers";
    if (type == "strings") return "array of strings";
    if (type == "int_matrix") return "array of integer arrays";
    if (type == "vectors") return "array of number arrays";
    if (type == "int") return "integer";
    return type;
}

// Checks `v` against a type tag; returns the normalised value (fractions
// become numbers).
json check_type(const ConfigDoc& doc, const json& v, const std::string& type, const std::string& ptr) {
    auto bad = [&]() { doc.fail(ptr, "expected " + type_label(type)); };
    if (type == "number" || type == "number?") {
        if (type == "number?" && v.is_null()) return v;
        return read_number(doc, v, ptr);
    }
    if (type == "int") {
        if (!is_integral(v)) bad();
        return static_cast<long long>(v.get<double>());
    }
    if (type == "bool") {
        if (!v.is_boolean()) bad();
        return v;
    }
    if (type == "string") {
        if (!v.is_string()) bad();
        return v;
    }
    if (type.rfind("string:", 0) == 0) {
        if (!v.is_string()) bad();
        std::string choices = "|" + type.substr(7) + "|";
        if (choices.find("|" + v.get<std::string>() + "|") == std::string::npos) bad();
        return v;
    }
    if (!v.is_array()) bad();
    json out = json::array();
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::string p = ptr + "/" + std::to_string(i);
        if (type == "numbers") out.push_back(check_type(doc, v[i], "number", p));
        else if (type == "ints") out.push_back(check_type(doc, v[i], "int", p));
        else if (type == "strings") out.push_back(check_type(doc, v[i], "string", p));
        else if (type == "int_matrix") out.push_back(check_type(doc, v[i], "ints", p));
        else if (type == "vectors") out.push_back(check_type(doc, v[i], "numbers", p));
        else doc.fail(ptr, "internal: unknown type tag " + type);
    }
    return out;
}

Vec read_vec(const ConfigDoc& doc, const json& v, int d, const std::string& ptr) {
    if (d == 1 && !v.is_array()) return Vec::Constant(1, read_number(doc, v, ptr));
    if (!v.is_array() || static_cast<int>(v.size()) != d)
        doc.fail(ptr, "expected an array of " + std::to_string(d) + " numbers");
    Vec out(d);
    for (int i = 0; i < d; ++i) out[i] = read_number(doc, v[i], ptr + "/" + std::to_string(i));
    return out;
}

const json& require(const ConfigDoc& doc, const json& node, const std::string& key, const std::string& ptr) {
    if (!node.is_object()) doc.fail(ptr, "expected an object");
    auto it = node.find(key);
    if (it == node.end()) doc.fail(ptr, "missing required key \"" + key + "\"");
    return *it;
}

void reject_unknown(const ConfigDoc& doc, const json& node, const std::vector<std::string>& allowed,
                    const std::string& ptr) {
    if (!node.is_object()) doc.fail(ptr, "expected an object");
    for (auto it = node.begin(); it != node.end(); ++it)
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            doc.fail(ptr + "/" + escape_token(it.key()), "unknown key \"" + it.key() + "\"");
}

OrthogonalMatrix read_rotation(const ConfigDoc& doc, const json* v, int d, const std::string& ptr) {
    if (!v) return OrthogonalMatrix::identity(d);
    try {
        if (v->is_object()) {
            if (d != 2) doc.fail(ptr, "rotation angles are only defined in dimension 2");
            reject_unknown(doc, *v, {"angle"}, ptr);
            return OrthogonalMatrix::rotation2d(read_number(doc, require(doc, *v, "angle", ptr), ptr + "/angle"));
        }
        json m = check_type(doc, *v, "vectors", ptr);
        if (static_cast<int>(m.size()) != d) doc.fail(ptr, "rotation must be " + std::to_string(d) + "x" + std::to_string(d));
        Mat o(d, d);
        for (int i = 0; i < d; ++i) {
            if (static_cast<int>(m[i].size()) != d) doc.fail(ptr + "/" + std::to_string(i), "wrong row length");
            for (int j = 0; j < d; ++j) o(i, j) = m[i][j].get<double>();
        }
        return OrthogonalMatrix(o, 1e-9);
    } catch (const InvalidArgument& e) {
        doc.fail(ptr, e.what());
    }
}

}  // namespace

ConfigDoc ConfigDoc::parse(const std::string& text, const std::string& name) {
    ConfigDoc doc;
    doc.name_ = name;
    try {
        doc.root_ = json::parse(text);
    } catch (const json::parse_error& e) {
        auto [line, col] = line_col(text, e.byte == 0 ? 0 : e.byte - 1);
        std::string msg = e.what();
        auto pos = msg.find("syntax error");
        throw ConfigError(name + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " +
                          (pos == std::string::npos ? msg : msg.substr(pos)));
    }
    Locator(text, doc.where_).run();
    if (!doc.root_.is_object()) doc.fail("", "top level must be an object");
    return doc;
}

ConfigDoc ConfigDoc::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path + ": cannot open");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

std::string ConfigDoc::locate(const std::string& pointer) const {
    // nearest recorded ancestor (missing keys point at their parent)
    std::string p = pointer;
    while (true) {
        auto it = where_.find(p);
        if (it != where_.end())
            return name_ + ":" + std::to_string(it->second.first) + ":" + std::to_string(it->second.second);
        if (p.empty()) return name_;
        p = p.substr(0, p.rfind('/'));
    }
}

void ConfigDoc::fail(const std::string& pointer, const std::string& msg) const {
    throw ConfigError(locate(pointer) + ": " + (pointer.empty() ? "/" : pointer) + ": " + msg);
}

double read_number(const ConfigDoc& doc, const json& v, const std::string& pointer) {
    double out = 0.0;
    if (v.is_number()) out = v.get<double>();
    else if (!(v.is_string() && fraction_string(v.get<std::string>(), out)))
        doc.fail(pointer, "expected a number or a \"p/q\" string");
    if (!std::isfinite(out)) doc.fail(pointer, "number is not finite");
    return out;
}

// ------------------------------------------------------------------ schemas

const std::vector<CommandSchema>& command_schemas() {
    static const std::vector<CommandSchema> schemas = [] {
        const std::string methods = "string:functional|product|montecarlo";
        std::vector<CommandSchema> s;
        s.push_back({"decay", "band maxima of the Fourier transform and a decay fit", true,
                     {{"method", methods, "functional", "evaluator"},
                      {"tol", "number", 1e-8, "evaluator tolerance"},
                      {"samples", "int", 100000, "Monte Carlo samples"},
                      {"t_min", "number", 1.0, "first band edge"},
                      {"t_max", "number", 1000.0, "last band edge"},
                      {"band_ratio", "number", 2.0, "band edge ratio"},
                      {"grid_step", "number", 0.5, "frequency grid spacing"},
                      {"directions", "int", 16, "directions per shell (d >= 2)"},
                      {"fit", "string:poly|polylog", "poly", "decay model"}}});
        s.push_back({"flatten", "exceptional-set ball counts across T", true,
                     {{"T", "numbers", json::array({100.0, 1000.0, 10000.0}), "frequency radii"},
                      {"tau", "number", 0.1, "threshold exponent"},
                      {"grid_step", "number", 0.5, "frequency grid spacing"},
                      {"directions", "int", 16, "directions per shell (d >= 2)"},
                      {"method", methods, "functional", "evaluator"},
                      {"tol", "number", 1e-6, "evaluator tolerance"},
                      {"samples", "int", 100000, "Monte Carlo samples"}}});
        s.push_back({"nonconc", "affine non-concentration profile", true,
                     {{"eps", "numbers", json::array({0.2, 0.1, 0.05, 0.02}), "slab widths"},
                      {"trials", "int", 16, "random slabs per width"},
                      {"c", "number", 1.0, "denominator ball factor"},
                      {"fail_threshold", "number", 0.5, "flag when delta exceeds this"}}});
        s.push_back({"decompose", "good cut-off set reports", true,
                     {{"log_xi", "numbers", json::array({20.0, 40.0, 80.0}), "log |xi| values"},
                      {"l", "int", 2, "Diophantine exponent"},
                      {"delta", "number", 0.1, "window exponent"},
                      {"eps", "number", 0.1, "decay gap"},
                      {"theta", "number", 0.5, "cutoff cap exponent (<= 0: uncapped)"},
                      {"mc_samples", "int", 0, "Monte Carlo check of the bad mass (0: off)"}}});
        s.push_back({"separation", "same-band count separation audit", true,
                     {{"xi", "number", 1e6, "|xi| (ignored when log_xi is set)"},
                      {"log_xi", "number?", nullptr, "log |xi|"},
                      {"direction", "numbers", json::array(), "frequency direction (default e1)"},
                      {"l", "int", 2, "Diophantine exponent"},
                      {"delta", "number", 0.1, "window exponent"},
                      {"eps", "number", 0.1, "decay gap"},
                      {"a1", "int", 0, "first audited letter"},
                      {"a2", "int", 1, "second audited letter"},
                      {"theta", "number", 0.5, "cutoff cap exponent"}}});
        s.push_back({"pipeline", "direct transform against the good-word average", true,
                     {{"log_xi", "numbers", json::array({10.0, 11.5}), "log |xi| values"},
                      {"direction", "numbers", json::array(), "frequency direction (default e1)"},
                      {"l", "int", 2, "Diophantine exponent"},
                      {"delta", "number", 0.1, "window exponent"},
                      {"eps", "number", 0.1, "decay gap"},
                      {"tau", "number", 0.1, "bad-band threshold exponent"},
                      {"theta", "number", 0.5, "cutoff cap exponent"},
                      {"grid_step", "number", 0.25, "child frequency grid"},
                      {"method", methods, "functional", "evaluator"},
                      {"tol", "number", 1e-6, "evaluator tolerance"},
                      {"samples", "int", 100000, "Monte Carlo samples"}}});
        s.push_back({"uni", "UNI margin at a point", true,
                     {{"n", "int", 6, "word length"},
                      {"x", "numbers", json::array(), "probe point (default: fixed point of the first map)"},
                      {"first", "int", -1, "first letter of the coding of x (-1: unrestricted)"},
                      {"directions", "int", 16, "direction sphere resolution"},
                      {"radius", "number", 0.0, "ball radius (> 0: ball variant)"},
                      {"ball_points", "int", 9, "ball probes per axis"},
                      {"candidates", "int", 24, "extreme words kept per side"},
                      {"similitude_letter", "int", -1, "also report the family margin for this letter"},
                      {"min_margin", "number", 0.0, "violation when the margin is not above this"}}});
        s.push_back({"spectrum", "norm decay of twisted transfer operators", true,
                     {{"b", "numbers", json::array({10.0, 20.0, 30.0, 40.0, 50.0}), "twist frequencies"},
                      {"depth", "int", 3, "collocation depth"},
                      {"nodes", "int", 9, "nodes per axis"},
                      {"n_max", "int", 12, "iterations"},
                      {"floor", "number", 1e-10, "fit floor"},
                      {"operator_depth", "int", 6, "normalisation depth for G1/G2 potentials"},
                      {"betas", "int", 16, "sampled beta (restricted products)"},
                      {"margin", "number", 0.02, "non-decay margin (restricted products)"}}});
        s.push_back({"disintegrate", "disintegration check of a restricted product", true,
                     {{"xi", "vectors", json::array(), "frequencies"},
                      {"random_xi", "int", 4, "extra random frequencies"},
                      {"xi_max", "number", 25.0, "range of the random frequencies"},
                      {"samples", "int", 10000, "beta samples per frequency"},
                      {"prefix", "int", 40, "beta prefix length"},
                      {"skip", "int", 0, "leading prefix steps dropped"},
                      {"tol", "number", 1e-3, "expansion tolerance"}}});
        s.push_back({"normality", "Weyl sums and r_N along an N schedule", true,
                     {{"matrix", "int_matrix", json::array({json::array({2})}), "expanding integer matrix"},
                      {"k", "int_matrix", json::array({json::array({1}), json::array({2}), json::array({3})}),
                       "frequencies"},
                      {"n_min", "int", 16, "first N (doubling schedule)"},
                      {"n_max", "int", 2048, "last N"},
                      {"samples", "int", 200, "sample points"},
                      {"rn_bound", "number", 2.0, "bound on r_N sqrt(N)"},
                      {"max_weyl", "number", 0.1, "bound on |S_{N_max}|"},
                      {"trajectories", "bool", true, "write per-sample S_N"}}});
        s.push_back({"multinomial", "maximal multinomial probability sweep", false,
                     {{"p", "numbers", json::array({0.5, 0.5}), "probability vector"},
                      {"n", "ints", json::array(), "n values (default 1..n_max)"},
                      {"n_max", "int", 2000, "sweep end"},
                      {"brute_max", "int", 60, "cross-check by enumeration up to this n"}}});
        s.push_back({"plot", "SVG line chart of a CSV file", false,
                     {{"input", "string", "", "CSV file"},
                      {"x", "string", "", "x column (default: first)"},
                      {"y", "strings", json::array(), "y columns (default: all numeric)"},
                      {"logx", "bool", true, "log x axis"},
                      {"logy", "bool", true, "log y axis"},
                      {"title", "string", "", "chart title"}}});
        return s;
    }();
    return schemas;
}

const CommandSchema& command_schema(const std::string& name) {
    for (const auto& s : command_schemas())
        if (s.name == name) return s;
    throw InvalidArgument("unknown subcommand " + name);
}

json resolve_params(const ConfigDoc& doc, const CommandSchema& schema) {
    const json& root = doc.root();
    json out = json::object();
    const json* given = nullptr;
    if (auto it = root.find("params"); it != root.end()) {
        if (!it->is_object()) doc.fail("/params", "expected an object");
        given = &*it;
        for (auto p = given->begin(); p != given->end(); ++p) {
            bool known = std::any_of(schema.params.begin(), schema.params.end(),
                                     [&](const ParamSpec& s) { return s.key == p.key(); });
            if (!known) doc.fail("/params/" + escape_token(p.key()), "unknown parameter for " + schema.name);
        }
    }
    for (const ParamSpec& s : schema.params) {
        if (given && given->contains(s.key))
            out[s.key] = check_type(doc, (*given)[s.key], s.type, "/params/" + escape_token(s.key));
        else
            out[s.key] = s.value;
    }
    return out;
}

// ------------------------------------------------------------------ systems

bool is_product(const json& system) {
    return system.is_object() && system.contains("kind") && system["kind"] == "restricted_product";
}

std::shared_ptr<IFSSystem> build_system(const ConfigDoc& doc, const json& node, const std::string& ptr) {
    if (!node.is_object()) doc.fail(ptr, "expected a system object");
    reject_unknown(doc, node, {"kind", "dimension", "alphabet", "maps", "subshift", "boxes"}, ptr);
    if (node.contains("kind") && node["kind"] != "ifs") doc.fail(ptr + "/kind", "expected \"ifs\" here");
    json dim = check_type(doc, require(doc, node, "dimension", ptr), "int", ptr + "/dimension");
    const int d = dim.get<int>();
    if (d < 1 || d > 3) doc.fail(ptr + "/dimension", "dimension must be 1, 2 or 3");

    const json& maps = require(doc, node, "maps", ptr);
    if (!maps.is_array() || maps.empty()) doc.fail(ptr + "/maps", "expected a non-empty array of maps");
    std::vector<ConformalMap> out;
    for (std::size_t i = 0; i < maps.size(); ++i) {
        const std::string mp = ptr + "/maps/" + std::to_string(i);
        const json& m = maps[i];
        json kind = check_type(doc, require(doc, m, "kind", mp), "string:similitude|mobius", mp + "/kind");
        const json* rot = m.contains("rotation") ? &m["rotation"] : nullptr;
        try {
            if (kind == "similitude") {
                reject_unknown(doc, m, {"kind", "ratio", "translation", "rotation"}, mp);
                double r = read_number(doc, require(doc, m, "ratio", mp), mp + "/ratio");
                Vec t = read_vec(doc, require(doc, m, "translation", mp), d, mp + "/translation");
                out.emplace_back(Similitude{r, read_rotation(doc, rot, d, mp + "/rotation"), t});
            } else {
                reject_unknown(doc, m, {"kind", "lambda", "t", "u", "rotation"}, mp);
                double lam = read_number(doc, require(doc, m, "lambda", mp), mp + "/lambda");
                Vec t = read_vec(doc, require(doc, m, "t", mp), d, mp + "/t");
                Vec u = read_vec(doc, require(doc, m, "u", mp), d, mp + "/u");
                out.emplace_back(MobiusMap{t, lam, read_rotation(doc, rot, d, mp + "/rotation"), u});
            }
        } catch (const InvalidArgument& e) {
            doc.fail(mp, e.what());
        }
    }

    std::vector<std::string> names;
    if (node.contains("alphabet")) {
        json a = check_type(doc, node["alphabet"], "strings", ptr + "/alphabet");
        if (a.size() != maps.size()) doc.fail(ptr + "/alphabet", "alphabet and maps differ in length");
        for (const auto& v : a) names.push_back(v.get<std::string>());
    }
    std::optional<SubshiftMatrix> sub;
    if (node.contains("subshift")) {
        json a = check_type(doc, node["subshift"], "int_matrix", ptr + "/subshift");
        std::vector<std::vector<int>> rows;
        for (const auto& r : a) rows.push_back(r.get<std::vector<int>>());
        try {
            sub = SubshiftMatrix(rows);
        } catch (const Error& e) {
            doc.fail(ptr + "/subshift", e.what());
        }
    }
    std::optional<std::vector<Box>> boxes;
    if (node.contains("boxes")) {
        const json& b = node["boxes"];
        if (!b.is_array() || b.size() != maps.size()) doc.fail(ptr + "/boxes", "expected one box per map");
        boxes.emplace();
        for (std::size_t i = 0; i < b.size(); ++i) {
            const std::string bp = ptr + "/boxes/" + std::to_string(i);
            reject_unknown(doc, b[i], {"lo", "hi"}, bp);
            boxes->push_back(Box{read_vec(doc, require(doc, b[i], "lo", bp), d, bp + "/lo"),
                                 read_vec(doc, require(doc, b[i], "hi", bp), d, bp + "/hi")});
        }
    }
    try {
        return std::make_shared<IFSSystem>(d, std::move(out), sub, names, boxes);
    } catch (const Error& e) {
        doc.fail(ptr, e.what());
    }
}

std::shared_ptr<MarkovMeasure> build_measure(const ConfigDoc& doc, std::shared_ptr<IFSSystem> sys, const json* node,
                                             const std::string& ptr) {
    const int k = sys->size();
    try {
        if (!node) return MarkovMeasure::bernoulli(sys, ProbabilityVector::uniform(k));
        json kind = check_type(doc, require(doc, *node, "kind", ptr), "string:bernoulli|gibbs", ptr + "/kind");
        if (kind == "bernoulli") {
            reject_unknown(doc, *node, {"kind", "p"}, ptr);
            if (!node->contains("p")) return MarkovMeasure::bernoulli(sys, ProbabilityVector::uniform(k));
            json p = check_type(doc, (*node)["p"], "numbers", ptr + "/p");
            if (static_cast<int>(p.size()) != k) doc.fail(ptr + "/p", "expected one weight per map");
            return MarkovMeasure::bernoulli(sys, ProbabilityVector(p.get<std::vector<double>>()));
        }
        reject_unknown(doc, *node, {"kind", "potential", "depth"}, ptr);
        int depth = 6;
        if (node->contains("depth"))
            depth = check_type(doc, (*node)["depth"], "int", ptr + "/depth").get<int>();
        const std::string pp = ptr + "/potential";
        const json& pot = require(doc, *node, "potential", ptr);
        json pk = check_type(doc, require(doc, pot, "kind", pp), "string:per_symbol|pair|geometric", pp + "/kind");
        if (pk == "per_symbol") {
            reject_unknown(doc, pot, {"kind", "values"}, pp);
            json v = check_type(doc, require(doc, pot, "values", pp), "numbers", pp + "/values");
            if (static_cast<int>(v.size()) != k) doc.fail(pp + "/values", "expected one value per map");
            return MarkovMeasure::gibbs(sys, GibbsPotential::per_symbol(v.get<std::vector<double>>()), depth);
        }
        if (pk == "pair") {
            reject_unknown(doc, pot, {"kind", "table"}, pp);
            json t = check_type(doc, require(doc, pot, "table", pp), "vectors", pp + "/table");
            if (static_cast<int>(t.size()) != k) doc.fail(pp + "/table", "expected a k x k table");
            Mat m(k, k);
            for (int i = 0; i < k; ++i) {
                if (static_cast<int>(t[i].size()) != k) doc.fail(pp + "/table/" + std::to_string(i), "wrong row length");
                for (int j = 0; j < k; ++j) m(i, j) = t[i][j].get<double>();
            }
            return MarkovMeasure::gibbs(sys, GibbsPotential::pair(m), depth);
        }
        reject_unknown(doc, pot, {"kind", "s"}, pp);
        double s = read_number(doc, require(doc, pot, "s", pp), pp + "/s");
        return MarkovMeasure::gibbs(sys, GibbsPotential::geometric(s), depth);
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        doc.fail(ptr, e.what());
    }
}

std::shared_ptr<RestrictedProductIFS> build_product(const ConfigDoc& doc, const json& node, const std::string& ptr) {
    reject_unknown(doc, node, {"kind", "components", "tuples", "p"}, ptr);
    const json& comps = require(doc, node, "components", ptr);
    if (!comps.is_array() || comps.size() < 2) doc.fail(ptr + "/components", "need at least two components");
    std::vector<std::shared_ptr<const IFSSystem>> parts;
    for (std::size_t i = 0; i < comps.size(); ++i) {
        const std::string cp = ptr + "/components/" + std::to_string(i);
        auto sys = build_system(doc, comps[i], cp);
        if (sys->dim() != 1) doc.fail(cp + "/dimension", "components must be one-dimensional");
        parts.push_back(sys);
    }
    json tuples = check_type(doc, require(doc, node, "tuples", ptr), "int_matrix", ptr + "/tuples");
    std::vector<std::vector<int>> t;
    for (const auto& row : tuples) t.push_back(row.get<std::vector<int>>());
    std::vector<double> p(t.size(), t.empty() ? 0.0 : 1.0 / static_cast<double>(t.size()));
    if (node.contains("p")) {
        json pv = check_type(doc, node["p"], "numbers", ptr + "/p");
        if (pv.size() != t.size()) doc.fail(ptr + "/p", "expected one weight per tuple");
        p = pv.get<std::vector<double>>();
    }
    try {
        return std::make_shared<RestrictedProductIFS>(parts, t, ProbabilityVector(p));
    } catch (const Error& e) {
        doc.fail(ptr, e.what());
    }
}

}  // namespace fdecay::cli
