#pragma once

// Study runner behind the command-line tool: config parsing, grid sweeps,
// CSV and manifest emission.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "polaron/asymptotics.hpp"
#include "polaron/eig.hpp"
#include "polaron/errors.hpp"
#include "polaron/folding.hpp"
#include "polaron/operators.hpp"
#include "polaron/parallel.hpp"
#include "polaron/renorm.hpp"
#include "polaron/scattering.hpp"

namespace polaron {

inline constexpr const char* version = "0.1.0";

enum class Study { scattering_rate, renorm_flow, spectrum_gaps, weyl_identity, log_term, lhy, expansion };

struct StudyName {
    Study study;
    const char* name;
    const char* subcommand;
};

inline constexpr StudyName study_names[] = {
    {Study::scattering_rate, "scattering_rate", "scatter"}, {Study::renorm_flow, "renorm_flow", "flow"},
    {Study::spectrum_gaps, "spectrum_gaps", "spectrum"},    {Study::weyl_identity, "weyl_identity", "weyl"},
    {Study::log_term, "log_term", "logterm"},               {Study::lhy, "lhy", "lhy"},
    {Study::expansion, "expansion", "expand"},
};

inline const StudyName& study_info(Study s) {
    for (const auto& n : study_names)
        if (n.study == s) return n;
    throw contract_violation("unknown study");
}

inline std::optional<Study> study_from_subcommand(const std::string& sub) {
    for (const auto& n : study_names)
        if (sub == n.subcommand) return n.study;
    return std::nullopt;
}

using json = nlohmann::ordered_json;

struct StudyConfig {
    Study study = Study::renorm_flow;
    json body;  ///< the full config object, overrides applied
    std::string out;
    std::uint64_t seed = 1;
    unsigned workers = 1;
};

// ---------------------------------------------------------------------------
// Config access with field paths in every error

namespace cfg {

inline const json* find(const json& root, const std::string& path) {
    const json* cur = &root;
    std::size_t start = 0;
    while (start <= path.size()) {
        const std::size_t dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!cur->is_object() || !cur->contains(key)) return nullptr;
        cur = &(*cur)[key];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    return cur;
}

inline double number(const json& root, const std::string& path, std::optional<double> def = std::nullopt) {
    const json* j = find(root, path);
    if (!j) {
        if (def) return *def;
        throw usage_error(path + ": required field is missing");
    }
    if (!j->is_number()) throw usage_error(path + ": expected a number");
    return j->get<double>();
}

inline double positive(const json& root, const std::string& path, double def) {
    const double v = number(root, path, def);
    if (!(v > 0.0)) throw usage_error(path + ": must be > 0");
    return v;
}

inline int integer(const json& root, const std::string& path, std::optional<int> def = std::nullopt) {
    const json* j = find(root, path);
    if (!j) {
        if (def) return *def;
        throw usage_error(path + ": required field is missing");
    }
    if (!j->is_number_integer()) throw usage_error(path + ": expected an integer");
    return j->get<int>();
}

inline std::string text(const json& root, const std::string& path, const std::string& def) {
    const json* j = find(root, path);
    if (!j) return def;
    if (!j->is_string()) throw usage_error(path + ": expected a string");
    return j->get<std::string>();
}

inline std::vector<double> numbers(const json& root, const std::string& path) {
    const json* j = find(root, path);
    if (!j) throw usage_error(path + ": required grid is missing");
    if (!j->is_array()) throw usage_error(path + ": expected a list");
    if (j->empty()) throw usage_error(path + ": grid must be non-empty");
    std::vector<double> out;
    for (std::size_t i = 0; i < j->size(); ++i) {
        if (!(*j)[i].is_number()) throw usage_error(path + "[" + std::to_string(i) + "]: expected a number");
        out.push_back((*j)[i].get<double>());
    }
    return out;
}

inline std::vector<int> integers(const json& root, const std::string& path) {
    const json* j = find(root, path);
    if (!j) throw usage_error(path + ": required grid is missing");
    if (!j->is_array()) throw usage_error(path + ": expected a list");
    if (j->empty()) throw usage_error(path + ": grid must be non-empty");
    std::vector<int> out;
    for (std::size_t i = 0; i < j->size(); ++i) {
        if (!(*j)[i].is_number_integer())
            throw usage_error(path + "[" + std::to_string(i) + "]: expected an integer");
        out.push_back((*j)[i].get<int>());
    }
    return out;
}

inline IntVec3 int_vec3(const json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 3) throw usage_error(path + ": expected three integers");
    for (std::size_t i = 0; i < 3; ++i)
        if (!j[i].is_number_integer()) throw usage_error(path + ": expected three integers");
    return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

/// A list of integer triples; a single triple is accepted as a one-point grid.
inline std::vector<IntVec3> momenta(const json& root, const std::string& path) {
    const json* j = find(root, path);
    if (!j) return {IntVec3{}};
    if (!j->is_array() || j->empty()) throw usage_error(path + ": grid must be non-empty");
    if ((*j)[0].is_number()) return {int_vec3(*j, path)};
    std::vector<IntVec3> out;
    for (std::size_t i = 0; i < j->size(); ++i) out.push_back(int_vec3((*j)[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

}  // namespace cfg

/// Reads a config or manifest file. A manifest carries its config under "config".
inline json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw usage_error("cannot open config: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw usage_error(path + ": " + e.what());
    }
    if (!j.is_object()) throw usage_error(path + ": top level must be an object");
    if (j.contains("config") && j.contains("points")) j = j["config"];
    return j;
}

/// Validates the study name and resolves seed, workers and output directory.
inline StudyConfig make_config(Study expected, json body, std::optional<std::string> out,
                               std::optional<std::uint64_t> seed, std::optional<unsigned> workers) {
    const auto& info = study_info(expected);
    if (body.contains("study")) {
        if (!body["study"].is_string() || body["study"].get<std::string>() != info.name)
            throw usage_error(std::string("study: expected \"") + info.name + "\" for this subcommand");
    }
    body["study"] = info.name;
    if (seed) body["seed"] = *seed;
    if (workers) body["workers"] = *workers;
    if (out) body["out"] = *out;
    StudyConfig c;
    c.study = expected;
    const json* s = cfg::find(body, "seed");
    if (s && !s->is_number_unsigned()) throw usage_error("seed: expected a non-negative integer");
    c.seed = s ? s->get<std::uint64_t>() : 1;
    const int w = cfg::integer(body, "workers", 1);
    if (w < 1) throw usage_error("workers: must be >= 1");
    c.workers = static_cast<unsigned>(w);
    c.out = cfg::text(body, "out", std::string("out/") + info.name);
    c.body = std::move(body);
    return c;
}

// ---------------------------------------------------------------------------
// Sweep plumbing

/// %.17g, with nan/inf spelled out.
inline std::string fmt17(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + "\"";
}

struct PointTask {
    json params;
    std::vector<double> keys;                  ///< leading CSV columns
    std::function<std::vector<double>()> run;  ///< remaining columns
};

struct PointOutcome {
    std::vector<double> values;
    std::string status = "ok";
    std::string message;
    double wall_seconds = 0.0;
};

struct StudyPlan {
    std::vector<std::string> header;
    std::vector<PointTask> points;
    std::function<json(const std::vector<PointTask>&, const std::vector<PointOutcome>&)> summary;
};

struct StudyResult {
    std::string csv;
    json manifest;
    int exit_code = 0;
    std::filesystem::path csv_path, manifest_path;
};

inline constexpr int exit_ok = 0;
inline constexpr int exit_usage = 2;
inline constexpr int exit_capacity = 3;
inline constexpr int exit_accuracy = 4;

namespace detail {

inline double grid_momentum(double units_of_two_pi) { return units_of_two_pi * two_pi; }

inline ModelParams model(const json& c) {
    ModelParams p;
    p.a_V = cfg::number(c, "model.a_V", 1.0);
    p.a_W = cfg::number(c, "model.a_W");
    if (p.a_V < 0.0) throw usage_error("model.a_V: must be >= 0");
    if (p.a_W < 0.0) throw usage_error("model.a_W: must be >= 0");
    return p;
}

inline json vec_json(const IntVec3& v) { return json::array({v.x, v.y, v.z}); }

inline PotentialSpec potential(const json& c, const std::string& path) {
    const std::string kind = cfg::text(c, path + ".kind", "gaussian");
    if (kind == "gaussian")
        return PotentialSpec::gaussian(cfg::number(c, path + ".amplitude"), cfg::positive(c, path + ".range", 1.0));
    if (kind == "bump")
        return PotentialSpec::compact_bump(cfg::number(c, path + ".amplitude"), cfg::positive(c, path + ".range", 1.0));
    if (kind == "table") {
        const std::string file = cfg::text(c, path + ".path", "");
        if (file.empty()) throw usage_error(path + ".path: required for a tabulated potential");
        return read_tabulated_potential(file);
    }
    throw usage_error(path + ".kind: expected gaussian, bump or table");
}

/// Lowest k levels at one grid point, by direct Lanczos or by folding the top shell.
inline SpectrumReport levels(const ModelParams& prm, int k, const std::string& method, double tol,
                             std::size_t max_dim, std::uint64_t seed) {
    auto lat = std::make_shared<const MomentumLattice>(build_lattice(prm.cutoff));
    const double dim = fock_dimension(lat->size(), prm.n_max);
    const bool direct = method == "direct" || (method == "auto" && (dim <= 2e5 || prm.n_max == 0));
    SpectrumReport s;
    if (direct) {
        SectorOptions so;
        so.max_dim = max_dim;
        auto b = std::make_shared<const SectorBasis>(enumerate_sector(lat, prm.n_max, prm.total_momentum, so));
        LanczosOptions lo;
        lo.k = std::min<int>(k, static_cast<int>(b->size()));
        lo.tol = tol;
        lo.seed = seed;
        lo.keep_vectors = false;
        s = lanczos_lowest(hbf_operator(b, prm), lo);
    } else {
        ShellFolding fold(lat, prm);
        FoldedOptions fo;
        fo.k = std::min<int>(k, static_cast<int>(fold.lower_dim()));
        fo.tol = tol;
        fo.seed = seed;
        s = folded_lowest(fold, fo);
    }
    if (!s.converged) {
        double r = 0.0;
        for (double x : s.residual_norms) r = std::max(r, x);
        throw accuracy_error("eigensolver did not converge", r);
    }
    return s;
}

inline double level(const SpectrumReport& s, int j) {
    return j < static_cast<int>(s.eigenvalues.size()) ? s.eigenvalues[j] : std::nan("");
}

// --- scattering_rate -------------------------------------------------------

inline StudyPlan plan_scatter(const StudyConfig& sc) {
    const json& c = sc.body;
    const PotentialSpec v = potential(c, "potential");
    v.validate();
    const double kfac = cfg::positive(c, "lattice_factor", 3.0);
    const double tol = cfg::positive(c, "tolerances.cg", 1e-10);
    const int grid_points = cfg::integer(c, "free_space.grid_points", 4000);
    const double r_max = cfg::positive(c, "free_space.r_max", 1.5 * v.reach());
    const double free_tol = cfg::positive(c, "free_space.tol", 1e-7);
    StudyPlan plan;
    plan.header = {"n", "lattice_size", "lattice_radius", "n_a_torus", "a_free", "abs_diff", "residual", "iterations"};
    const auto ns = cfg::integers(c, "grid.n");
    for (std::size_t i = 0; i < ns.size(); ++i)
        if (ns[i] < 1) throw usage_error("grid.n[" + std::to_string(i) + "]: must be >= 1");
    for (int n : ns) {
        PointTask t;
        t.params = {{"n", n}};
        t.keys = {double(n)};
        t.run = [=] {
            const double radius = kfac * n / v.range;
            auto lat = std::make_shared<const MomentumLattice>(build_lattice(radius));
            ScatteringOptions so;
            so.tol = tol;
            const auto sol = solve_torus_scattering(v.scaled(n), lat, so);
            const double a_torus = torus_scattering_length(sol, n);
            const double a_free = free_space_scattering_length(v, grid_points, r_max, free_tol);
            return std::vector<double>{double(lat->size()), radius, a_torus, a_free, std::abs(a_torus - a_free),
                                       sol.residual_norm, double(sol.iterations)};
        };
        plan.points.push_back(std::move(t));
    }
    plan.summary = [](const std::vector<PointTask>& pts, const std::vector<PointOutcome>& out) {
        std::vector<std::pair<double, double>> pairs;
        for (std::size_t i = 0; i < pts.size(); ++i)
            if (out[i].status == "ok" && out[i].values[4] > 0.0) pairs.emplace_back(pts[i].keys[0], out[i].values[4]);
        json s;
        if (pairs.size() >= 3) {
            const auto f = rate_fit(pairs);
            s["rate_exponent"] = f.exponent;
            s["rate_constant"] = f.constant;
        }
        return s;
    };
    return plan;
}

// --- renorm_flow -----------------------------------------------------------

inline StudyPlan plan_flow(const StudyConfig& sc) {
    const json& c = sc.body;
    const ModelParams base = model(c);
    const auto cutoffs = cfg::numbers(c, "grid.cutoff");
    const auto kappas = cfg::numbers(c, "grid.kappa");
    const auto nmax = cfg::integers(c, "grid.n_max");
    const auto Ps = cfg::momenta(c, "P_total");
    if (Ps.size() != 1) throw usage_error("P_total: the flow study takes a single total momentum");
    const std::string method = cfg::text(c, "method", "auto");
    if (method != "auto" && method != "direct" && method != "folded")
        throw usage_error("method: expected auto, direct or folded");
    const double tol = cfg::positive(c, "tolerances.eig", 1e-11);
    const auto max_dim = static_cast<std::size_t>(cfg::positive(c, "max_dim", 4e6));
    const std::uint64_t seed = sc.seed;
    StudyPlan plan;
    plan.header = {"Lambda", "kappa", "n_max", "e_0", "e_1", "e_2", "E1", "E2", "e_0_minus_E_total"};
    for (double L : cutoffs)
        for (double kap : kappas)
            for (int n : nmax) {
                if (!(L > 0.0)) throw usage_error("grid.cutoff: entries must be > 0");
                if (kap < 0.0) throw usage_error("grid.kappa: entries must be >= 0");
                if (n < 0) throw usage_error("grid.n_max: entries must be >= 0");
                ModelParams prm = base;
                prm.cutoff = grid_momentum(L);
                prm.kappa = grid_momentum(kap);
                prm.n_max = n;
                prm.total_momentum = Ps[0];
                PointTask t;
                t.params = {{"cutoff", prm.cutoff}, {"kappa", prm.kappa}, {"n_max", n},
                            {"P_total", vec_json(Ps[0])}};
                t.keys = {prm.cutoff, prm.kappa, double(n)};
                t.run = [=] {
                    const auto s = levels(prm, 3, method, tol, max_dim, seed);
                    const auto ct = counterterms(prm);
                    return std::vector<double>{level(s, 0), level(s, 1), level(s, 2), ct.E1, ct.E2,
                                               level(s, 0) - ct.E_total};
                };
                plan.points.push_back(std::move(t));
            }
    return plan;
}

// --- spectrum_gaps ---------------------------------------------------------

inline StudyPlan plan_spectrum(const StudyConfig& sc) {
    const json& c = sc.body;
    const ModelParams base = model(c);
    const auto cutoffs = cfg::numbers(c, "grid.cutoff");
    const auto kappas = cfg::numbers(c, "grid.kappa");
    const auto nmax = cfg::integers(c, "grid.n_max");
    const auto Ps = cfg::momenta(c, "grid.P_total");
    const int k = cfg::integer(c, "levels", 4);
    if (k < 1) throw usage_error("levels: must be >= 1");
    const std::string method = cfg::text(c, "method", "auto");
    if (method != "auto" && method != "direct" && method != "folded")
        throw usage_error("method: expected auto, direct or folded");
    const double tol = cfg::positive(c, "tolerances.eig", 1e-11);
    const auto max_dim = static_cast<std::size_t>(cfg::positive(c, "max_dim", 4e6));
    const std::uint64_t seed = sc.seed;
    StudyPlan plan;
    plan.header = {"Lambda", "kappa", "n_max", "P_x", "P_y", "P_z"};
    for (int j = 0; j < k; ++j) plan.header.push_back("e_" + std::to_string(j));
    for (int j = 1; j < k; ++j) plan.header.push_back("gap_" + std::to_string(j));
    plan.header.push_back("max_residual");
    for (double L : cutoffs)
        for (double kap : kappas)
            for (int n : nmax)
                for (const IntVec3& P : Ps) {
                    if (!(L > 0.0)) throw usage_error("grid.cutoff: entries must be > 0");
                    if (n < 0) throw usage_error("grid.n_max: entries must be >= 0");
                    ModelParams prm = base;
                    prm.cutoff = grid_momentum(L);
                    prm.kappa = grid_momentum(kap);
                    prm.n_max = n;
                    prm.total_momentum = P;
                    PointTask t;
                    t.params = {{"cutoff", prm.cutoff}, {"kappa", prm.kappa}, {"n_max", n}, {"P_total", vec_json(P)}};
                    t.keys = {prm.cutoff, prm.kappa, double(n), double(P.x), double(P.y), double(P.z)};
                    t.run = [=] {
                        const auto s = levels(prm, k, method, tol, max_dim, seed);
                        std::vector<double> out;
                        for (int j = 0; j < k; ++j) out.push_back(level(s, j));
                        for (int j = 1; j < k; ++j) out.push_back(level(s, j) - level(s, 0));
                        double r = 0.0;
                        for (double x : s.residual_norms) r = std::max(r, x);
                        out.push_back(r);
                        return out;
                    };
                    plan.points.push_back(std::move(t));
                }
    return plan;
}

// --- weyl_identity ---------------------------------------------------------

inline StudyPlan plan_weyl(const StudyConfig& sc) {
    const json& c = sc.body;
    const ModelParams base = model(c);
    const auto cutoffs = cfg::numbers(c, "grid.cutoff");
    const auto kappas = cfg::numbers(c, "grid.kappa");
    const auto nmax = cfg::integers(c, "grid.n_max");
    const auto Ps = cfg::momenta(c, "grid.P_total");
    const int drop = cfg::integer(c, "drop_top_shells", 2);
    if (drop < 0) throw usage_error("drop_top_shells: must be >= 0");
    StudyPlan plan;
    plan.header = {"Lambda", "kappa", "n_max", "P_x", "P_y", "P_z", "dim", "residual", "H_max", "ratio",
                   "unitarity_defect"};
    for (double L : cutoffs)
        for (double kap : kappas)
            for (int n : nmax)
                for (const IntVec3& P : Ps) {
                    if (n - drop < 0) throw usage_error("grid.n_max: must be >= drop_top_shells");
                    ModelParams prm = base;
                    prm.cutoff = grid_momentum(L);
                    prm.kappa = grid_momentum(kap);
                    prm.n_max = n;
                    prm.total_momentum = P;
                    PointTask t;
                    t.params = {{"cutoff", prm.cutoff}, {"kappa", prm.kappa}, {"n_max", n}, {"P_total", vec_json(P)}};
                    t.keys = {prm.cutoff, prm.kappa, double(n), double(P.x), double(P.y), double(P.z)};
                    t.run = [=] {
                        auto lat = std::make_shared<const MomentumLattice>(build_lattice(prm.cutoff));
                        auto b = std::make_shared<const SectorBasis>(enumerate_sector(lat, n, P));
                        const auto H = hbf_dense(b, prm);
                        const auto U = weyl_unitary(b, gross_profile_modes(*lat, prm));
                        const Matrix lhs = U.matrix.transpose() * H.matrix * U.matrix;
                        const auto rhs = dressed_rhs(b, prm);
                        const auto keep = states_up_to(*b, n - drop);
                        const double res = (restrict(lhs, keep) - restrict(rhs.matrix, keep)).cwiseAbs().maxCoeff();
                        const double hmax = H.max_abs();
                        return std::vector<double>{double(b->size()), res, hmax, res / hmax, U.unitarity_defect()};
                    };
                    plan.points.push_back(std::move(t));
                }
    return plan;
}

// --- E_N helpers shared by log_term and expansion ---------------------------

struct ENSetup {
    Interaction mode = Interaction::coulomb_tail;
    std::optional<PotentialSpec> impurity;
    double lattice_factor = 3.0;
    double alpha = default_alpha;
    SumOptions sums;
};

inline ENSetup en_setup(const json& c) {
    ENSetup s;
    const std::string mode = cfg::text(c, "mode", "coulomb_tail");
    if (mode == "coulomb_tail") {
        s.mode = Interaction::coulomb_tail;
    } else if (mode == "exact_vN") {
        s.mode = Interaction::exact_vN;
        s.impurity = potential(c, "impurity_potential");
        s.lattice_factor = cfg::positive(c, "lattice_factor", 3.0);
    } else {
        throw usage_error("mode: expected coulomb_tail or exact_vN");
    }
    s.alpha = cfg::positive(c, "alpha", default_alpha);
    if (s.alpha > 1.0) throw usage_error("alpha: must lie in (0, 1]");
    s.sums.pair_budget = cfg::positive(c, "pair_budget", 1e10);
    return s;
}

/// E_N cut at |p| <= cutoff; exact_vN solves the impurity problem at scale N first.
inline double en_value(double N, const ModelParams& prm, const ENSetup& s, double cutoff) {
    if (s.mode == Interaction::coulomb_tail) return e_n_sum(N, prm, s.mode, cutoff, {s.sums, s.alpha});
    const int n = static_cast<int>(std::lround(N));
    if (std::abs(N - n) > 0.0) throw contract_violation("exact_vN needs an integer N");
    const double radius = std::max(cutoff, s.lattice_factor * n / s.impurity->range);
    auto lat = std::make_shared<const MomentumLattice>(build_lattice(radius));
    const auto sol = solve_torus_scattering(s.impurity->scaled(n), lat);
    ENOptions o{s.sums, s.alpha, &sol, std::sqrt(N)};
    return e_n_sum(N, prm, s.mode, cutoff, o);
}

// --- log_term --------------------------------------------------------------

inline StudyPlan plan_logterm(const StudyConfig& sc) {
    const json& c = sc.body;
    ModelParams prm = model(c);
    prm.cutoff = infinite_cutoff;
    const auto Ns = cfg::numbers(c, "grid.N");
    const ENSetup s = en_setup(c);
    StudyPlan plan;
    plan.header = {"N", "cutoff", "E_N", "E_2N", "slope", "closed_form", "relative_deviation"};
    for (double N : Ns) {
        if (!(N >= 1.0)) throw usage_error("grid.N: entries must be >= 1");
        PointTask t;
        t.params = {{"N", N}};
        t.keys = {N};
        t.run = [=] {
            const double e1 = en_value(N, prm, s, std::sqrt(N));
            const double e2 = en_value(2.0 * N, prm, s, std::sqrt(2.0 * N));
            const double slope = (e2 - e1) / std::log(2.0);
            const double ref = log_coefficient(prm.a_W);
            return std::vector<double>{std::sqrt(N), e1, e2, slope, ref, ref != 0.0 ? (slope - ref) / ref : 0.0};
        };
        plan.points.push_back(std::move(t));
    }
    return plan;
}

// --- lhy -------------------------------------------------------------------

inline StudyPlan plan_lhy(const StudyConfig& sc) {
    const json& c = sc.body;
    const auto cs = cfg::numbers(c, "grid.c");
    const json* av = cfg::find(c, "grid.a_V");
    const auto aVs = av ? cfg::numbers(c, "grid.a_V") : std::vector<double>{cfg::number(c, "model.a_V", 1.0)};
    StudyPlan plan;
    plan.header = {"a_V", "c", "S_c", "S_2c", "increment"};
    for (double a : aVs)
        for (double cc : cs) {
            if (!(cc > 0.0)) throw usage_error("grid.c: entries must be > 0");
            if (a < 0.0) throw usage_error("grid.a_V: entries must be >= 0");
            const double r = grid_momentum(cc);
            PointTask t;
            t.params = {{"a_V", a}, {"c", r}};
            t.keys = {a, r};
            t.run = [=] {
                const double s1 = lhy_sum(a, r).value, s2 = lhy_sum(a, 2.0 * r).value;
                return std::vector<double>{s1, s2, s2 - s1};
            };
            plan.points.push_back(std::move(t));
        }
    plan.summary = [](const std::vector<PointTask>& pts, const std::vector<PointOutcome>& out) {
        std::map<double, std::vector<std::pair<double, double>>> by_a;
        for (std::size_t i = 0; i < pts.size(); ++i)
            if (out[i].status == "ok" && out[i].values[2] > 0.0)
                by_a[pts[i].keys[0]].emplace_back(pts[i].keys[1], out[i].values[2]);
        json s = json::array();
        for (const auto& [a, pairs] : by_a) {
            if (pairs.size() < 3) continue;
            const auto f = rate_fit(pairs);
            s.push_back({{"a_V", a}, {"increment_exponent", f.exponent}});
        }
        return json{{"fits", s}};
    };
    return plan;
}

// --- expansion -------------------------------------------------------------

inline StudyPlan plan_expand(const StudyConfig& sc) {
    const json& c = sc.body;
    ModelParams prm = model(c);
    prm.cutoff = infinite_cutoff;
    prm.kappa = grid_momentum(cfg::number(c, "model.kappa", 0.0));
    const auto Ns = cfg::numbers(c, "grid.N");
    const ENSetup s = en_setup(c);
    ScatteringInputs in;
    if (cfg::find(c, "torus_lengths.a_V")) in.aV_torus = cfg::number(c, "torus_lengths.a_V");
    if (cfg::find(c, "torus_lengths.a_W")) in.aW_torus = cfg::number(c, "torus_lengths.a_W");
    if (prm.a_V != 0.0 && !in.aV_torus) throw usage_error("torus_lengths.a_V: required when model.a_V != 0");
    if (prm.a_W != 0.0 && !in.aW_torus) throw usage_error("torus_lengths.a_W: required when model.a_W != 0");
    StudyPlan plan;
    plan.header = {"N", "mean_field_V", "mean_field_W", "log_term", "order_one", "total"};
    for (double N : Ns) {
        if (!(N >= 1.0)) throw usage_error("grid.N: entries must be >= 1");
        PointTask t;
        t.params = {{"N", N}};
        t.keys = {N};
        t.run = [=] {
            const double mfV = 4.0 * std::numbers::pi * prm.a_V * (N - 1.0);
            const double mfW = 8.0 * std::numbers::pi * prm.a_W * std::sqrt(N);
            const double log_term = en_value(N, prm, s, std::sqrt(N));
            const double one = scalar_e_U(N, prm, in, s.alpha).total;
            CascadeSum total;
            for (double x : {mfV, mfW, log_term, one}) total.add(x);
            return std::vector<double>{mfV, mfW, log_term, one, total.value()};
        };
        plan.points.push_back(std::move(t));
    }
    return plan;
}

inline StudyPlan make_plan(const StudyConfig& sc) {
    switch (sc.study) {
        case Study::scattering_rate: return plan_scatter(sc);
        case Study::renorm_flow: return plan_flow(sc);
        case Study::spectrum_gaps: return plan_spectrum(sc);
        case Study::weyl_identity: return plan_weyl(sc);
        case Study::log_term: return plan_logterm(sc);
        case Study::lhy: return plan_lhy(sc);
        case Study::expansion: return plan_expand(sc);
    }
    throw contract_violation("unknown study");
}

inline int status_code(const std::string& status) {
    if (status == "capacity") return exit_capacity;
    if (status == "accuracy") return exit_accuracy;
    if (status == "usage" || status == "contract" || status == "domain") return exit_usage;
    return status == "ok" ? exit_ok : exit_accuracy;
}

}  // namespace detail

/// Runs every grid point (failures are recorded, not fatal) and builds the CSV
/// text and manifest. Nothing is written to disk.
inline StudyResult evaluate_study(const StudyConfig& sc) {
    const auto t0 = std::chrono::steady_clock::now();
    StudyPlan plan = detail::make_plan(sc);
    std::vector<PointOutcome> out(plan.points.size());
    parallel_for(plan.points.size(), sc.workers, [&](std::size_t i) {
        PointOutcome& o = out[i];
        const auto s = std::chrono::steady_clock::now();
        try {
            o.values = plan.points[i].run();
        } catch (const capacity_error& e) {
            o.status = "capacity";
            o.message = e.what();
        } catch (const accuracy_error& e) {
            o.status = "accuracy";
            o.message = e.what();
        } catch (const domain_error& e) {
            o.status = "domain";
            o.message = e.what();
        } catch (const contract_violation& e) {
            o.status = "contract";
            o.message = e.what();
        } catch (const std::exception& e) {
            o.status = "error";
            o.message = e.what();
        }
        o.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - s).count();
    });

    StudyResult r;
    std::ostringstream csv;
    for (std::size_t j = 0; j < plan.header.size(); ++j) csv << (j ? "," : "") << csv_field(plan.header[j]);
    csv << "\r\n";
    json points = json::array();
    for (std::size_t i = 0; i < plan.points.size(); ++i) {
        const auto& t = plan.points[i];
        const auto& o = out[i];
        std::vector<std::string> cells;
        for (double k : t.keys) cells.push_back(fmt17(k));
        if (o.status == "ok") {
            for (double v : o.values) cells.push_back(fmt17(v));
        }
        cells.resize(plan.header.size());
        for (std::size_t j = 0; j < cells.size(); ++j) csv << (j ? "," : "") << csv_field(cells[j]);
        csv << "\r\n";
        json p;
        p["index"] = i;
        p["params"] = t.params;
        p["status"] = o.status;
        if (!o.message.empty()) p["message"] = o.message;
        p["wall_seconds"] = o.wall_seconds;
        points.push_back(std::move(p));
        r.exit_code = std::max(r.exit_code, detail::status_code(o.status));
    }
    r.csv = csv.str();

    const auto& info = study_info(sc.study);
    r.csv_path = std::filesystem::path(sc.out) / (std::string(info.name) + ".csv");
    r.manifest_path = std::filesystem::path(sc.out) / (std::string(info.name) + ".manifest.json");
    json m;
    m["tool"] = "polaron";
    m["version"] = version;
    m["study"] = info.name;
    m["subcommand"] = info.subcommand;
    m["seed"] = sc.seed;
    m["workers"] = sc.workers;
    m["config"] = sc.body;
    m["outputs"] = {{"csv", r.csv_path.filename().string()}, {"columns", plan.header}};
    m["points"] = std::move(points);
    if (plan.summary) {
        try {
            m["summary"] = plan.summary(plan.points, out);
        } catch (const std::exception& e) {
            m["summary"] = {{"error", e.what()}};
        }
    }
    m["exit_code"] = r.exit_code;
    m["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.manifest = std::move(m);
    return r;
}

/// evaluate_study plus the files: <out>/<study>.csv and <out>/<study>.manifest.json.
inline StudyResult run_study(const StudyConfig& sc) {
    StudyResult r = evaluate_study(sc);
    std::error_code ec;
    std::filesystem::create_directories(sc.out, ec);
    if (ec) throw usage_error("cannot create output directory " + sc.out + ": " + ec.message());
    {
        std::ofstream f(r.csv_path, std::ios::binary);
        if (!f) throw usage_error("cannot write " + r.csv_path.string());
        f << r.csv;
    }
    {
        std::ofstream f(r.manifest_path, std::ios::binary);
        if (!f) throw usage_error("cannot write " + r.manifest_path.string());
        f << r.manifest.dump(2) << '\n';
    }
    return r;
}

}  // namespace polaron
