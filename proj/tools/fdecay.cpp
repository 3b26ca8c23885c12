// Batch front-end: one subcommand per experiment, CSV + manifest out.
#include "config.hpp"
#include "report.hpp"

#include "fdecay/decomposition.hpp"
#include "fdecay/equidist.hpp"
#include "fdecay/fourier.hpp"
#include "fdecay/nonconformal.hpp"
#include "fdecay/transfer.hpp"

#include "CLI11.hpp"

#include <boost/version.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#ifndef FDECAY_VERSION
#define FDECAY_VERSION "dev"
#endif

namespace fs = std::filesystem;
using namespace fdecay;
using namespace fdecay::cli;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitViolation = 2;

struct Run {
    std::string command;
    const ConfigDoc* doc = nullptr;
    json params;
    std::uint64_t seed = 0;
    int workers = 1;
    std::optional<std::size_t> budget;
    std::shared_ptr<IFSSystem> sys;
    std::shared_ptr<MarkovMeasure> mu;
    std::shared_ptr<RestrictedProductIFS> product;

    double number(const char* k) const { return params.at(k).get<double>(); }
    long long integer(const char* k) const { return params.at(k).get<long long>(); }
    std::vector<double> numbers(const char* k) const { return params.at(k).get<std::vector<double>>(); }
    std::string text(const char* k) const { return params.at(k).get<std::string>(); }
    std::size_t budget_or(std::size_t fallback) const { return budget.value_or(fallback); }
    [[noreturn]] void fail(const std::string& key, const std::string& msg) const { doc->fail("/params/" + key, msg); }
};

struct Outcome {
    std::vector<CsvTable> tables;
    std::vector<std::pair<std::string, std::string>> files;   // extra artifacts: name, contents
    json results = json::object();
    json consumed = json::object();
    bool violation = false;
    std::vector<std::string> notes;                            // violation details for stderr
};

Vec to_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

std::string join(const Vec& v) {
    std::string s;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ";" : "") + num(v[i]);
    return s;
}

std::string join(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + std::to_string(v[i]);
    return s;
}

Vec direction_param(const Run& r, int d) {
    std::vector<double> v = r.numbers("direction");
    if (v.empty()) {
        Vec e = Vec::Zero(d);
        e[0] = 1.0;
        return e;
    }
    if (static_cast<int>(v.size()) != d) r.fail("direction", "expected " + std::to_string(d) + " components");
    Vec e = to_vec(v);
    if (!(e.norm() > 0)) r.fail("direction", "direction must be nonzero");
    return e / e.norm();
}

Evaluator evaluator_param(const Run& r) {
    Evaluator ev;
    std::string m = r.text("method");
    if (m == "functional") ev = Evaluator::functional(r.number("tol"));
    else if (m == "product") ev = Evaluator::product(r.number("tol"));
    else ev = Evaluator::monte_carlo(static_cast<std::size_t>(r.integer("samples")), r.seed);
    if (r.budget) ev.word_budget = *r.budget;
    return ev;
}

const std::vector<double>& bernoulli_p(const Run& r) {
    if (!r.mu->is_bernoulli()) r.doc->fail("/measure", r.command + " needs a Bernoulli measure");
    return r.mu->bernoulli_weights();
}

// ------------------------------------------------------------- subcommands

Outcome run_decay(const Run& r) {
    FourierEngine fe(r.mu, evaluator_param(r));
    DecayOptions opt;
    opt.t_min = r.number("t_min");
    opt.t_max = r.number("t_max");
    opt.band_ratio = r.number("band_ratio");
    opt.grid_step = r.number("grid_step");
    opt.directions = static_cast<int>(r.integer("directions"));
    opt.workers = r.workers;
    DecayProfile prof = decay_profile(fe, opt);

    Outcome out;
    CsvTable t{"decay", {"band", "t_lo", "t_hi", "max_abs", "mean_abs", "max_error", "points", "argmax"}, {}};
    for (std::size_t i = 0; i < prof.bands.size(); ++i) {
        const DecayBand& b = prof.bands[i];
        t.add({num(i), num(b.t_lo), num(b.t_hi), num(b.max_abs), num(b.mean_abs), num(b.max_error), num(b.points),
               join(b.argmax)});
    }
    out.tables.push_back(t);
    try {
        GrowthFit f = fit_decay_exponent(prof, r.text("fit") == "poly" ? DecayModel::Poly : DecayModel::Polylog);
        out.results["decay_exponent"] = f.exponent;
        out.results["fit_residual"] = f.residual;
    } catch (const DegenerateFit& e) {
        out.results["decay_exponent"] = nullptr;
        out.results["fit_note"] = e.what();
    }
    out.results["method"] = prof.method;
    out.consumed["bands"] = prof.bands.size();
    return out;
}

Outcome run_flatten(const Run& r) {
    FourierEngine fe(r.mu, evaluator_param(r));
    std::vector<ExceptionalSetReport> reps;
    for (double T : r.numbers("T"))
        reps.push_back(exceptional_set_count(fe, T, r.number("tau"), r.number("grid_step"),
                                             static_cast<int>(r.integer("directions")), r.workers));
    Outcome out;
    CsvTable t{"flatten",
               {"T", "tau", "grid_step", "threshold", "grid_points", "exceptional_points", "balls", "all_exceptional"},
               {}};
    std::size_t points = 0;
    for (const auto& e : reps) {
        t.add({num(e.T), num(e.tau), num(e.grid_step), num(e.threshold), num(e.grid_points),
               num(e.exceptional_points), num(e.balls), flag(e.all_exceptional)});
        points += e.grid_points;
    }
    out.tables.push_back(t);
    if (reps.size() >= 2) {
        GrowthFit g = exceptional_growth(reps);
        out.results["growth_exponent"] = g.exponent;
        out.results["growth_residual"] = g.residual;
    }
    out.consumed["grid_points"] = points;
    return out;
}

Outcome run_nonconc(const Run& r) {
    NonConcOptions opt;
    opt.c = r.number("c");
    opt.fail_threshold = r.number("fail_threshold");
    NonConcProfile p =
        affine_nonconcentration_profile(*r.mu, r.numbers("eps"), static_cast<int>(r.integer("trials")), r.seed, opt);
    Outcome out;
    CsvTable t{"nonconc", {"eps", "delta"}, {}};
    for (std::size_t i = 0; i < p.eps.size(); ++i) t.add({num(p.eps[i]), num(p.delta[i])});
    out.tables.push_back(t);
    out.results["C"] = p.C;
    out.results["alpha"] = p.alpha;
    out.results["fit_residual"] = p.residual;
    out.results["failed"] = p.failed;
    if (p.failed) {
        out.violation = true;
        out.notes.push_back("non-concentration: delta at the smallest eps exceeds the threshold");
    }
    return out;
}

Outcome run_decompose(const Run& r) {
    ProbabilityVector p(bernoulli_p(r));
    Outcome out;
    CsvTable t{"decompose",
               {"log_xi", "n", "log_threshold", "capped", "classes", "good_mass", "bad_mass", "bad_mass_exact",
                "bad_mass_mc", "bad_mass_mc_stderr", "lower_violation", "upper_constant", "ratio_constant",
                "min_good_ratio"},
               {}};
    const std::size_t mc = static_cast<std::size_t>(r.integer("mc_samples"));
    std::size_t classes = 0;
    for (std::size_t i = 0; i < r.numbers("log_xi").size(); ++i) {
        double L = r.numbers("log_xi")[i];
        GoodWordParams gp = good_word_params(*r.sys, p, L, static_cast<int>(r.integer("l")), r.number("delta"),
                                             r.number("eps"), r.number("theta"));
        GoodCutoff gc = good_cutoff(*r.sys, gp, r.budget_or(10000000));
        double exact = bad_mass_exact(gp);
        std::string mc_mass, mc_err;
        if (mc > 0) {
            BadMassEstimate e = bad_mass_estimate(gp, mc, mix_seed(r.seed, i));
            mc_mass = num(e.mass);
            mc_err = num(e.stderr_);
        }
        t.add({num(L), num(gp.n), num(gp.log_threshold), flag(gp.capped), num(gc.classes.size()), num(gc.good_mass),
               num(gc.bad_mass), num(exact), mc_mass, mc_err, num(gc.lower_violation), num(gc.upper_constant),
               num(gc.ratio_constant), num(gc.min_good_ratio)});
        classes += gc.classes.size();
        if (gc.lower_violation > 1e-9 || gc.min_good_ratio < 1.0 - 1e-9) {
            out.violation = true;
            out.notes.push_back("good cut-off set window violated at log_xi = " + num(L));
        }
    }
    out.tables.push_back(t);
    out.consumed["count_classes"] = classes;
    return out;
}

Outcome run_separation(const Run& r) {
    ProbabilityVector p(bernoulli_p(r));
    double L = r.params["log_xi"].is_null() ? std::log(r.number("xi")) : r.number("log_xi");
    if (r.params["log_xi"].is_null() && !(r.number("xi") > 1.0)) r.fail("xi", "|xi| must exceed 1");
    SeparationAudit a = separation_check(*r.sys, p, direction_param(r, r.sys->dim()), L, static_cast<int>(r.integer("l")),
                                         r.number("delta"), r.number("eps"), static_cast<int>(r.integer("a1")),
                                         static_cast<int>(r.integer("a2")), r.number("theta"), r.budget_or(10000000));
    Outcome out;
    CsvTable t{"separation", {"class", "band", "pair_count", "pairs", "min_gap"}, {}};
    for (const SeparationRow& row : a.rows) {
        std::string pairs;
        for (const auto& [c1, c2] : row.pairs) pairs += (pairs.empty() ? "" : ";") + std::to_string(c1) + ":" + std::to_string(c2);
        t.add({join(row.klass), num(row.band), num(row.pairs.size()), pairs, num(row.min_gap)});
    }
    out.tables.push_back(t);
    out.results["log_xi"] = L;
    out.results["rotation_form"] = a.rotation_form;
    out.results["classes"] = a.classes;
    out.results["k_constant"] = a.k_constant;
    out.results["bands"] = a.bands;
    out.results["violations"] = a.violations;
    out.results["min_gap"] = std::isfinite(a.min_gap) ? json(a.min_gap) : json(nullptr);
    out.results["band_lo"] = a.band_lo;
    out.results["band_hi"] = a.band_hi;
    out.consumed["count_classes"] = a.cutoff.classes.size();
    if (a.violations > 0) {
        out.violation = true;
        out.notes.push_back(std::to_string(a.violations) + " same-band separation violations");
    }
    return out;
}

Outcome run_pipeline(const Run& r) {
    Evaluator ev = evaluator_param(r);
    Vec dir = direction_param(r, r.sys->dim());
    Outcome out;
    CsvTable t{"pipeline",
               {"log_xi", "direct", "direct_error", "average", "average_error", "bad_word_mass", "T", "tau",
                "bad_bands", "bad_band_actual", "bad_band_majorant", "multinomial_majorant", "triangle_ok",
                "majorant_ok"},
               {}};
    for (double L : r.numbers("log_xi")) {
        PipelineAudit a = average_bound_report(r.mu, dir, L, static_cast<int>(r.integer("l")), r.number("delta"),
                                               r.number("eps"), r.number("tau"), ev, r.number("theta"),
                                               r.number("grid_step"));
        t.add({num(L), num(a.direct), num(a.direct_error), num(a.average), num(a.average_error), num(a.bad_word_mass),
               num(a.T), num(a.tau), num(a.bad_bands), num(a.bad_band_actual), num(a.bad_band_majorant),
               num(a.multinomial_majorant), flag(a.triangle_ok), flag(a.majorant_ok)});
        if (!a.triangle_ok || !a.majorant_ok) {
            out.violation = true;
            out.notes.push_back("average bound fails at log_xi = " + num(L));
        }
    }
    out.tables.push_back(t);
    return out;
}

Outcome run_uni(const Run& r) {
    const int d = r.sys->dim();
    Vec x;
    std::vector<double> xv = r.numbers("x");
    if (xv.empty()) {
        x = Vec::Constant(d, 0.5);
        for (int i = 0; i < 500; ++i) x = r.sys->map(0).apply(x);
    } else {
        if (static_cast<int>(xv.size()) != d) r.fail("x", "expected " + std::to_string(d) + " components");
        x = to_vec(xv);
    }
    UNIOptions opt;
    opt.directions = static_cast<int>(r.integer("directions"));
    opt.radius = r.number("radius");
    opt.ball_points = static_cast<int>(r.integer("ball_points"));
    opt.candidates = static_cast<int>(r.integer("candidates"));
    if (r.budget) opt.word_budget = *r.budget;
    const int n = static_cast<int>(r.integer("n"));
    UNIReport rep = uni_margin(*r.sys, n, x, static_cast<int>(r.integer("first")), opt);

    Outcome out;
    CsvTable t{"uni", {"direction", "e", "margin", "word_1", "word_2"}, {}};
    for (std::size_t i = 0; i < rep.directions.size(); ++i) {
        std::string w1, w2;
        if (i < rep.pairs.size()) {
            w1 = rep.pairs[i].first.str(r.sys->names());
            w2 = rep.pairs[i].second.str(r.sys->names());
        }
        t.add({num(i), join(rep.directions[i]), num(rep.margins[i]), w1, w2});
    }
    out.tables.push_back(t);
    json report = {{"n", rep.n},
                   {"x", std::vector<double>(x.data(), x.data() + x.size())},
                   {"radius", rep.radius},
                   {"eps0", rep.eps0},
                   {"margins", rep.margins}};
    const int s = static_cast<int>(r.integer("similitude_letter"));
    if (s >= 0) {
        UNIReport fam = uni_family_margin(*r.sys, n, x, s, opt.directions);
        report["family_margin"] = fam.eps0;
        report["closed_form"] = uni_closed_form(*r.sys, x, opt.directions);
    }
    out.files.push_back({"uni.json", report.dump(2) + "\n"});
    out.results["eps0"] = rep.eps0;
    if (!(rep.eps0 > r.number("min_margin"))) {
        out.violation = true;
        out.notes.push_back("UNI margin " + num(rep.eps0) + " is not above " + num(r.number("min_margin")));
    }
    return out;
}

Outcome run_spectrum(const Run& r) {
    Outcome out;
    const std::vector<double> bs = r.numbers("b");
    const int n_max = static_cast<int>(r.integer("n_max"));
    if (r.product) {
        RandomDecayOptions opt;
        opt.depth = static_cast<int>(r.integer("depth"));
        opt.nodes_per_axis = static_cast<int>(r.integer("nodes"));
        opt.margin = r.number("margin");
        opt.workers = r.workers;
        RandomDecayTable tab =
            random_norm_decay(*r.product, n_max, bs, static_cast<int>(r.integer("betas")), r.seed, opt);
        CsvTable t{"spectrum", {"b", "beta", "n", "sup_norm", "rate", "rho"}, {}};
        for (const RandomDecayRow& row : tab.rows) {
            std::size_t bi = static_cast<std::size_t>(std::find(tab.b.begin(), tab.b.end(), row.b) - tab.b.begin());
            t.add({num(row.b), num(row.beta), num(row.n), num(row.sup_norm), num(row.rate),
                   num(tab.rho.at(bi).at(static_cast<std::size_t>(row.beta)))});
        }
        CsvTable e{"spectrum_exceptional", {"b", "n", "fraction"}, {}};
        for (std::size_t bi = 0; bi < tab.b.size(); ++bi)
            for (std::size_t n = 0; n < tab.exceptional[bi].size(); ++n)
                e.add({num(tab.b[bi]), num(n + 1), num(tab.exceptional[bi][n])});
        out.tables.push_back(t);
        out.tables.push_back(e);
        out.consumed["rows"] = tab.rows.size();
        return out;
    }
    TwistedOperator op = TwistedOperator::for_measure(*r.mu, 0.0, static_cast<int>(r.integer("operator_depth")));
    NormDecayOptions opt;
    opt.depth = static_cast<int>(r.integer("depth"));
    opt.nodes_per_axis = static_cast<int>(r.integer("nodes"));
    opt.n_max = n_max;
    opt.floor = r.number("floor");
    opt.workers = r.workers;
    NormDecayTable tab = norm_decay(op, bs, opt);
    CsvTable t{"spectrum", {"b", "n", "sup_norm", "b_norm", "certified_b_norm", "interp_error", "rho"}, {}};
    for (const NormDecayRow& row : tab.rows) {
        double rho = 0.0;
        for (const NormDecayFit& f : tab.fits)
            if (f.b == row.b) rho = f.rho;
        t.add({num(row.b), num(row.n), num(row.sup_norm), num(row.b_norm), num(row.certified_b_norm),
               num(row.interp_error), num(rho)});
    }
    out.tables.push_back(t);
    out.results["max_rho"] = tab.max_rho;
    out.results["potential_residual"] = op.residual();
    return out;
}

Outcome run_disintegrate(const Run& r) {
    if (!r.product) r.doc->fail("/system", "disintegrate needs a restricted_product system");
    const int d = r.product->dim();
    std::vector<Vec> xis;
    for (const auto& v : r.params["xi"]) {
        if (static_cast<int>(v.size()) != d) r.fail("xi", "each frequency needs " + std::to_string(d) + " components");
        xis.push_back(to_vec(v.get<std::vector<double>>()));
    }
    std::mt19937_64 rng(mix_seed(r.seed, 0x78));
    const double xm = r.number("xi_max");
    for (long long i = 0; i < r.integer("random_xi"); ++i) {
        Vec xi(d);
        for (int j = 0; j < d; ++j) xi[j] = xm * (2.0 * uniform01(rng) - 1.0);
        xis.push_back(xi);
    }
    DisintegrationOptions opt;
    opt.prefix = static_cast<int>(r.integer("prefix"));
    opt.skip = static_cast<int>(r.integer("skip"));
    opt.tol = r.number("tol");
    opt.workers = r.workers;

    Outcome out;
    CsvTable t{"disintegrate",
               {"xi", "lead", "direct_re", "direct_im", "direct_error", "reconstruction_re", "reconstruction_im",
                "sigma", "closure", "abs_mean", "abs_sigma", "reconstruction_ok", "triangle_ok"},
               {}};
    for (std::size_t i = 0; i < xis.size(); ++i) {
        DisintegrationRow row = disintegration_check(*r.product, xis[i], static_cast<std::size_t>(r.integer("samples")),
                                                     mix_seed(r.seed, i), opt);
        t.add({join(row.xi), num(row.lead), num(row.direct.real()), num(row.direct.imag()), num(row.direct_error),
               num(row.reconstruction.real()), num(row.reconstruction.imag()), num(row.sigma), num(row.closure),
               num(row.abs_mean), num(row.abs_sigma), flag(row.reconstruction_ok), flag(row.triangle_ok)});
        if (!row.reconstruction_ok || !row.triangle_ok) {
            out.violation = true;
            out.notes.push_back("disintegration check fails at xi = " + join(row.xi));
        }
    }
    out.tables.push_back(t);
    out.consumed["frequencies"] = xis.size();
    return out;
}

Outcome run_normality(const Run& r, const ExpandingMatrix& A, const std::vector<std::vector<long long>>& ks,
                      const std::vector<long>& schedule) {
    NormalityOptions opt;
    opt.rn_bound = r.number("rn_bound");
    opt.max_weyl = r.number("max_weyl");
    opt.workers = r.workers;
    NormalityReport rep =
        normality_test(*r.mu, A, ks, schedule, static_cast<std::size_t>(r.integer("samples")), r.seed, opt);

    Outcome out;
    CsvTable t{"normality", {"k", "N", "r", "band", "scaled", "partial_sum", "verdict"}, {}};
    CsvTable traj{"normality_trajectories", {"k", "sample", "N", "re", "im"}, {}};
    json per_k = json::array();
    const double slack = 4.0 * static_cast<double>(schedule.back()) * std::numeric_limits<double>::epsilon();
    for (const NormalityRow& row : rep.rows) {
        std::vector<int> k(row.k.begin(), row.k.end());
        for (std::size_t j = 0; j < row.rn.size(); ++j) {
            const RNEstimate& e = row.rn[j];
            t.add({join(k), num(e.N), num(e.r), num(e.band), num(e.r * std::sqrt(static_cast<double>(e.N))),
                   num(row.partial_sum[j]), verdict_name(row.verdict)});
        }
        if (r.params["trajectories"].get<bool>())
            for (std::size_t s = 0; s < row.trajectories.size(); ++s)
                for (std::size_t j = 0; j < schedule.size(); ++j)
                    traj.add({join(k), num(s), num(schedule[j]), num(row.trajectories[s][j].real()),
                              num(row.trajectories[s][j].imag())});
        per_k.push_back({{"k", k},
                         {"verdict", verdict_name(row.verdict)},
                         {"max_scaled", row.max_scaled},
                         {"max_weyl", row.max_weyl},
                         {"bridging_excess", row.bridging_excess}});
        if (row.bridging_excess > slack) {
            out.violation = true;
            out.notes.push_back("bridging bound exceeded for k = " + join(k));
        }
    }
    out.tables.push_back(t);
    if (r.params["trajectories"].get<bool>()) out.tables.push_back(traj);
    out.results["n0"] = rep.n0;
    out.results["sigma_min"] = A.sigma_min();
    out.results["per_k"] = per_k;
    out.consumed["orbit_bits"] = required_bits(A, schedule.back());
    return out;
}

Outcome run_multinomial(const Run& r) {
    std::vector<double> pv = r.numbers("p");
    ProbabilityVector p(pv);
    std::vector<long long> ns = r.params["n"].get<std::vector<long long>>();
    if (ns.empty())
        for (long long n = 1; n <= r.integer("n_max"); ++n) ns.push_back(n);
    const long long brute = r.integer("brute_max");
    const double k = static_cast<double>(pv.size());
    Outcome out;
    CsvTable t{"multinomial", {"n", "max_prob", "scaled", "argmax", "brute_max_prob", "agree"}, {}};
    double sup = 0.0;
    for (long long n : ns) {
        if (n < 1) r.fail("n", "n must be positive");
        MultinomialMax m = multinomial_max(static_cast<int>(n), p);
        double scaled = m.max_prob * std::pow(static_cast<double>(n), 0.5 * (k - 1.0));
        sup = std::max(sup, scaled);
        std::string bp, agree;
        if (n <= brute) {
            MultinomialMax b = multinomial_max_brute(static_cast<int>(n), p);
            bool ok = std::abs(b.max_prob - m.max_prob) <= 1e-12 * b.max_prob;
            bp = num(b.max_prob);
            agree = flag(ok);
            if (!ok) {
                out.violation = true;
                out.notes.push_back("pruned search disagrees with enumeration at n = " + std::to_string(n));
            }
        }
        t.add({num(n), num(m.max_prob), num(scaled), join(m.argmax), bp, agree});
    }
    out.tables.push_back(t);
    out.results["sup_scaled"] = sup;
    return out;
}

Outcome run_plot(const Run& r) {
    std::string input = r.text("input");
    if (input.empty()) r.fail("input", "plot needs an input CSV");
    fs::path path(input);
    if (!fs::exists(path) && !r.doc->name().empty()) {
        fs::path alt = fs::path(r.doc->name()).parent_path() / input;
        if (fs::exists(alt)) path = alt;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) r.fail("input", "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    CsvData data = parse_csv(ss.str(), path.string());
    PlotSpec spec;
    spec.x = r.text("x");
    spec.y = r.params["y"].get<std::vector<std::string>>();
    spec.logx = r.params["logx"].get<bool>();
    spec.logy = r.params["logy"].get<bool>();
    spec.title = r.text("title");
    Outcome out;
    out.files.push_back({path.stem().string() + ".svg", render_svg(data, spec)});
    out.consumed["rows"] = data.values.size();
    return out;
}

// ------------------------------------------------------------------ driver

struct Flags {
    std::string config;
    std::string out = "out";
    std::uint64_t seed = 0;
    int workers = 1;
    std::size_t budget = 0;
};

void write_file(const fs::path& p, const std::string& contents) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw InvalidArgument("cannot write " + p.string());
    f << contents;
    if (!f) throw InvalidArgument("write failed for " + p.string());
}

std::string utc_now() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

int execute(const std::string& command, const Flags& flags, const CLI::App& sub) {
    const CommandSchema& schema = command_schema(command);
    ConfigDoc doc = flags.config.empty() ? ConfigDoc::parse("{}", "<defaults>") : ConfigDoc::load(flags.config);
    const json& root = doc.root();
    for (auto it = root.begin(); it != root.end(); ++it) {
        static const std::vector<std::string> keys{"command", "system", "measure", "params", "seed", "workers", "budget"};
        if (std::find(keys.begin(), keys.end(), it.key()) == keys.end())
            doc.fail("/" + it.key(), "unknown top-level key \"" + it.key() + "\"");
    }
    if (root.contains("command") && root["command"] != command)
        doc.fail("/command", "config is for \"" + root["command"].dump() + "\", not \"" + command + "\"");

    Run run;
    run.command = command;
    run.doc = &doc;
    run.params = resolve_params(doc, schema);

    auto given = [&](const char* name) { return sub.get_option(name)->count() > 0; };
    auto top_uint = [&](const char* key) -> std::optional<unsigned long long> {
        if (!root.contains(key)) return std::nullopt;
        const json& v = root[key];
        if (!v.is_number_integer() || v.get<long long>() < 0) doc.fail(std::string("/") + key, "expected a non-negative integer");
        return v.get<unsigned long long>();
    };
    run.seed = given("--seed") ? flags.seed : top_uint("seed").value_or(0);
    run.workers = given("--workers") ? flags.workers : static_cast<int>(top_uint("workers").value_or(1));
    if (run.workers < 1) throw InvalidArgument("--workers must be at least 1");
    if (given("--budget")) run.budget = flags.budget;
    else if (auto b = top_uint("budget")) run.budget = static_cast<std::size_t>(*b);

    // Everything below is validation; nothing heavy runs before it finishes.
    if (schema.needs_system) {
        if (!root.contains("system")) doc.fail("", command + " needs a \"system\"");
        if (is_product(root["system"])) {
            if (command != "spectrum" && command != "disintegrate")
                doc.fail("/system/kind", command + " does not accept restricted products");
            run.product = build_product(doc, root["system"], "/system");
        } else {
            run.sys = build_system(doc, root["system"], "/system");
            run.mu = build_measure(doc, run.sys, root.contains("measure") ? &root["measure"] : nullptr, "/measure");
        }
    }
    std::optional<ExpandingMatrix> matrix;
    std::vector<std::vector<long long>> ks;
    std::vector<long> schedule;
    if (command == "normality") {
        try {
            matrix.emplace(run.params["matrix"].get<std::vector<std::vector<long long>>>());
        } catch (const InvalidArgument& e) {
            doc.fail("/params/matrix", e.what());
        }
        if (matrix->dim() != run.sys->dim()) doc.fail("/params/matrix", "matrix and system dimensions differ");
        ks = run.params["k"].get<std::vector<std::vector<long long>>>();
        for (const auto& k : ks)
            if (static_cast<int>(k.size()) != matrix->dim()) doc.fail("/params/k", "frequency of the wrong dimension");
        long lo = static_cast<long>(run.params["n_min"].get<long long>());
        long hi = static_cast<long>(run.params["n_max"].get<long long>());
        if (lo < 1 || hi < lo) doc.fail("/params/n_min", "need 1 <= n_min <= n_max");
        for (long N = lo; N <= hi; N *= 2) schedule.push_back(N);
        if (schedule.back() != hi) schedule.push_back(hi);
        required_bits(*matrix, hi);   // PrecisionBudgetExceeded before any work
    }

    json effective = {{"command", command},
                      {"system", root.contains("system") ? root["system"] : json(nullptr)},
                      {"measure", root.contains("measure") ? root["measure"] : json(nullptr)},
                      {"params", run.params},
                      {"seed", run.seed},
                      {"budget", run.budget ? json(*run.budget) : json(nullptr)}};
    const std::string hash = sha256_hex(effective.dump());

    const auto t0 = std::chrono::steady_clock::now();
    const std::string started = utc_now();
    Outcome out;
    if (command == "decay") out = run_decay(run);
    else if (command == "flatten") out = run_flatten(run);
    else if (command == "nonconc") out = run_nonconc(run);
    else if (command == "decompose") out = run_decompose(run);
    else if (command == "separation") out = run_separation(run);
    else if (command == "pipeline") out = run_pipeline(run);
    else if (command == "uni") out = run_uni(run);
    else if (command == "spectrum") out = run_spectrum(run);
    else if (command == "disintegrate") out = run_disintegrate(run);
    else if (command == "normality") out = run_normality(run, *matrix, ks, schedule);
    else if (command == "multinomial") out = run_multinomial(run);
    else out = run_plot(run);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::vector<std::string> header{"fdecay " + command, "config_hash: " + hash, "seed: " + std::to_string(run.seed),
                                    "budget: " + (run.budget ? std::to_string(*run.budget) : std::string("default"))};
    for (auto it = run.params.begin(); it != run.params.end(); ++it) header.push_back("param " + it.key() + ": " + it.value().dump());
    if (root.contains("system")) header.push_back("system: " + root["system"].dump());
    if (root.contains("measure")) header.push_back("measure: " + root["measure"].dump());
    for (auto it = out.results.begin(); it != out.results.end(); ++it)
        header.push_back("result " + it.key() + ": " + it.value().dump());

    fs::create_directories(flags.out);
    json outputs = json::array();
    for (const CsvTable& t : out.tables) {
        std::string name = t.name + ".csv";
        write_file(fs::path(flags.out) / name, render_csv(header, t));
        outputs.push_back(name);
    }
    for (const auto& [name, contents] : out.files) {
        write_file(fs::path(flags.out) / name, contents);
        outputs.push_back(name);
    }
    json manifest = {{"command", command},
                     {"config", flags.config},
                     {"config_hash", hash},
                     {"seed", run.seed},
                     {"workers", run.workers},
                     {"budget", run.budget ? json(*run.budget) : json(nullptr)},
                     {"version", FDECAY_VERSION},
                     {"versions",
                      {{"compiler", __VERSION__},
                       {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                     std::to_string(EIGEN_MINOR_VERSION)},
                       {"boost", BOOST_LIB_VERSION},
                       {"mpfr", mpfr_get_version()}}},
                     {"started_utc", started},
                     {"wall_seconds", wall},
                     {"stages", json::array({{{"name", command}, {"seconds", wall}, {"consumed", out.consumed}}})},
                     {"results", out.results},
                     {"outputs", outputs},
                     {"violation", out.violation}};
    write_file(fs::path(flags.out) / "manifest.json", manifest.dump(2) + "\n");

    for (const auto& o : outputs) std::cout << (fs::path(flags.out) / o.get<std::string>()).string() << "\n";
    for (const auto& n : out.notes) std::cerr << "violation: " << n << "\n";
    return out.violation ? kExitViolation : kExitOk;
}

json schema_document() {
    json doc = json::object();
    for (const CommandSchema& s : command_schemas()) {
        json params = json::object();
        for (const ParamSpec& p : s.params) params[p.key] = {{"type", p.type}, {"default", p.value}, {"help", p.help}};
        doc[s.name] = {{"summary", s.summary}, {"needs_system", s.needs_system}, {"params", params}};
    }
    return doc;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fourier decay experiments for conformal and self-similar measures"};
    app.set_version_flag("--version", FDECAY_VERSION);
    app.require_subcommand(1);
    Flags flags;
    std::vector<std::pair<std::string, CLI::App*>> subs;
    for (const CommandSchema& s : command_schemas()) {
        CLI::App* sub = app.add_subcommand(s.name, s.summary);
        sub->add_option("--config", flags.config, "experiment config (JSON)")->envname("FDECAY_CONFIG");
        sub->add_option("--out", flags.out, "output directory")->envname("FDECAY_OUT");
        sub->add_option("--seed", flags.seed, "random seed")->envname("FDECAY_SEED");
        sub->add_option("--workers", flags.workers, "worker threads")->envname("FDECAY_WORKERS");
        sub->add_option("--budget", flags.budget, "word budget")->envname("FDECAY_BUDGET");
        subs.push_back({s.name, sub});
    }
    app.add_subcommand("schema", "print the config parameter schema as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitError;
    }
    if (app.got_subcommand("schema")) {
        std::cout << schema_document().dump(2) << "\n";
        return kExitOk;
    }
    for (const auto& [name, sub] : subs) {
        if (!sub->parsed()) continue;
        try {
            return execute(name, flags, *sub);
        } catch (const HypothesisViolation& e) {
            std::cerr << "violation: " << e.what() << "\n";
            return kExitViolation;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return kExitError;
        }
    }
    return kExitError;
}
