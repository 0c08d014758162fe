#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <initializer_list>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmflow/core.hpp"
#include "mmflow/diagnostics.hpp"
#include "mmflow/prox.hpp"
#include "mmflow/scheme.hpp"
#include "mmflow/zoo.hpp"

namespace mmflow {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------------------
// Family registry
// ---------------------------------------------------------------------------------------

struct RegistryEntry {
    std::string name;
    std::string description;
    std::map<std::string, double> parameters;
    std::map<std::string, std::string> options;
    std::vector<std::pair<std::string, std::string>> expected;
};

namespace detail {

[[noreturn]] inline void config_error(const std::string& what) { throw Error(ErrorKind::ConfigError, what); }

inline BaseFunctional base_by_name(const std::string& name) {
    if (name == "half_square") return half_square_base();
    if (name == "square") return square_base();
    config_error("unknown base functional '" + name + "' (expected half_square or square)");
}

inline Perturbation perturbation_by_name(const std::string& name) {
    if (name == "zero") return zero_perturbation();
    if (name == "sin_sqrt") return sin_sqrt_perturbation();
    if (name == "sin") return sin_perturbation();
    if (name == "sin_shift") return sin_shift_perturbation();
    config_error("unknown perturbation '" + name + "' (expected zero, sin_sqrt, sin or sin_shift)");
}

inline std::vector<RegistryEntry> registry_entries() {
    return {
        {"quadratic", "psi(x) = x^2/2, closed-form prox and flow u0 e^{-t}", {}, {}, quadratic_reference().expected},
        {"oscillatory",
         "f_eps(x) = x^2 + rho(eps) a(x) cos^2(x/eps), rho = rho_c eps^rho_beta, a = a0 + a1 x^2/(1+x^2)",
         {{"rho_c", 1.0}, {"rho_beta", 0.5}, {"a0", 1.0}, {"a1", 0.0}},
         {},
         {{"eps(tau)/tau -> 0", "converges to the x^2 flow u0 e^{-2t}"},
          {"eps(tau) >> tau with rho_eps >> eps", "pinning: limit curve constant"}}},
        {"perturbation",
         "phi_eps = base + eps zeta_eps",
         {{"eps_max", 1.0}},
         {{"base", "half_square"}, {"zeta", "sin_sqrt"}},
         {{"eps(tau)/tau -> 0", "converges to the base flow"},
          {"eps(tau)/tau <= C", "converges to the base flow (finite-dimensional case)"}}},
        {"lsc_envelope", "psi = x^2 + [x == 0], envelope x^2; recovery u_tau^0 = tau at u0 = 0", {}, {},
         lsc_envelope_pair().expected},
        {"grid_restricted",
         "base restricted to {k h} in [-r, r], h = spacing_c eps^spacing_beta, r = box_c eps^(-box_beta)",
         {{"spacing_c", 1.0}, {"spacing_beta", 1.0}, {"box_c", 10.0}, {"box_beta", 0.0}},
         {{"base", "half_square"}},
         {{"spacing(eps(tau))/tau^{3/2} -> 0", "converges to the base flow"},
          {"otherwise", "no guarantee; inspect crucial_assumption_probe"}}},
    };
}

}  // namespace detail

inline std::vector<RegistryEntry> family_registry() { return detail::registry_entries(); }

/// Builds a zoo family from its name and a JSON object of parameter overrides. Numeric
/// values set parameters, strings set options.
inline FamilySpec make_family(const std::string& name, const Json& overrides = Json::object()) {
    const auto entries = detail::registry_entries();
    auto it = std::find_if(entries.begin(), entries.end(), [&](const RegistryEntry& e) { return e.name == name; });
    if (it == entries.end()) detail::config_error("unknown family '" + name + "'");
    std::map<std::string, double> p = it->parameters;
    std::map<std::string, std::string> o = it->options;
    if (!overrides.is_object()) detail::config_error("family parameters must be an object");
    for (const auto& [key, value] : overrides.items()) {
        if (value.is_number()) {
            if (!p.count(key)) detail::config_error("family '" + name + "' has no parameter '" + key + "'");
            p[key] = value.get<double>();
        } else if (value.is_string()) {
            if (!o.count(key)) detail::config_error("family '" + name + "' has no option '" + key + "'");
            o[key] = value.get<std::string>();
        } else {
            detail::config_error("family parameter '" + key + "' must be a number or a string");
        }
    }

    FamilySpec spec;
    if (name == "quadratic") {
        spec = quadratic_reference();
    } else if (name == "oscillatory") {
        const double c = p["rho_c"], beta = p["rho_beta"], a0 = p["a0"], a1 = p["a1"];
        if (!(c >= 0.0) || !(a0 >= 0.0) || !(a1 >= 0.0) || !std::isfinite(beta)) {
            detail::config_error("oscillatory needs rho_c, a0, a1 >= 0");
        }
        const Amplitude a = a1 == 0.0 ? constant_amplitude(a0) : saturating_amplitude(a0, a1);
        spec = oscillatory_family(a, [c, beta](double e) { return c * std::pow(e, beta); }, beta > 0.0);
    } else if (name == "perturbation") {
        if (!(p["eps_max"] > 0.0)) detail::config_error("perturbation needs eps_max > 0");
        spec = perturbation_family(detail::base_by_name(o["base"]), detail::perturbation_by_name(o["zeta"]),
                                   p["eps_max"]);
    } else if (name == "lsc_envelope") {
        spec = lsc_envelope_pair();
    } else {
        const double sc = p["spacing_c"], sb = p["spacing_beta"], bc = p["box_c"], bb = p["box_beta"];
        if (!(sc > 0.0) || !(bc > 0.0)) detail::config_error("grid_restricted needs spacing_c, box_c > 0");
        spec = grid_restricted_family(
            detail::base_by_name(o["base"]), [sc, sb](double e) { return sc * std::pow(e, sb); },
            [bc, bb](double e) { return bc * std::pow(e, -bb); });
    }
    spec.parameters = p;
    spec.options = o;
    return spec;
}

// ---------------------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------------------

struct ExperimentConfig {
    std::string family_name;
    Json family_parameters = Json::object();
    Json coupling = Json::object();
    Json error_schedule = Json::object();
    std::vector<double> tau_list;
    double horizon = 1.0;
    Point initial{0.0};
    /// "family" uses the family's recovery map, "constant" keeps u0.
    std::string recovery = "family";
    std::optional<std::string> selector;
    std::vector<std::string> probes{"scheme"};
    std::vector<double> probe_times;
    Json probe_settings = Json::object();
    InnerSolverConfig solver;
    std::string output = "out";
    std::uint64_t seed = 1;
    Json expectations = Json::array();
};

namespace detail {

inline double number_at(const Json& j, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number()) config_error(std::string("'") + key + "' must be a number");
    return j.at(key).get<double>();
}

inline void allow_keys(const Json& j, const char* what, std::initializer_list<const char*> keys) {
    if (!j.is_object()) config_error(std::string("'") + what + "' must be an object");
    for (const auto& [key, _] : j.items()) {
        if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
            config_error("unknown key '" + key + "' in '" + what + "'");
        }
    }
}

inline std::vector<double> numbers_at(const Json& j, const char* key) {
    std::vector<double> out;
    if (!j.contains(key)) return out;
    const Json& a = j.at(key);
    if (!a.is_array()) config_error(std::string("'") + key + "' must be an array of numbers");
    for (const Json& v : a) {
        if (!v.is_number()) config_error(std::string("'") + key + "' must be an array of numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

inline Point point_from(const Json& j, const char* what) {
    if (j.is_number()) return Point{j.get<double>()};
    if (j.is_array() && !j.empty() && j.size() <= kMaxDim) {
        Point p(j.size());
        for (std::size_t i = 0; i < j.size(); ++i) {
            if (!j[i].is_number()) config_error(std::string(what) + " coordinates must be numbers");
            p.set(i, j[i].get<double>());
        }
        return p;
    }
    config_error(std::string(what) + " must be a number or an array of 1..8 numbers");
}

inline const std::vector<std::string>& known_probes() {
    static const std::vector<std::string> k{"scheme",       "crucial_assumption", "edi",
                                            "slope_liminf", "gamma_delta",        "epsilon_search"};
    return k;
}

inline InnerSolverConfig solver_from(const Json& j) {
    InnerSolverConfig c;
    if (!j.is_object()) config_error("'solver' must be an object");
    for (const auto& [key, v] : j.items()) {
        if (!v.is_number()) config_error("solver." + key + " must be a number");
        const double x = v.get<double>();
        auto count = [&] {
            if (!(x >= 1.0) || x != std::floor(x)) config_error("solver." + key + " must be a positive integer");
            return static_cast<std::size_t>(x);
        };
        if (key == "coarse_grid_points") c.coarse_grid_points = count();
        else if (key == "refine_iterations") c.refine_iterations = count();
        else if (key == "sweeps") c.sweeps = count();
        else if (key == "refine_brackets") c.refine_brackets = count();
        else if (key == "max_bound_evaluations") c.max_bound_evaluations = count();
        else if (key == "min_feature_scale") c.min_feature_scale = x;
        else if (key == "gap_tolerance") c.gap_tolerance = x;
        else if (key == "curvature_safety") c.curvature_safety = x;
        else config_error("unknown solver setting '" + key + "'");
    }
    return c;
}

}  // namespace detail

inline CouplingSchedule make_coupling(const Json& j) {
    detail::allow_keys(j, "coupling", {"kind", "c", "beta", "eps0", "entries"});
    const std::string kind = j.value("kind", "");
    try {
        if (kind == "power") return CouplingSchedule::power(detail::number_at(j, "c", 1.0), detail::number_at(j, "beta", 1.0));
        if (kind == "constant") return CouplingSchedule::constant(detail::number_at(j, "eps0", 1.0));
        if (kind == "table") {
            std::vector<std::pair<double, double>> entries;
            if (!j.contains("entries") || !j.at("entries").is_array()) detail::config_error("table coupling needs 'entries'");
            for (const Json& e : j.at("entries")) {
                if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
                    detail::config_error("table entries must be [tau, eps] pairs");
                }
                entries.emplace_back(e[0].get<double>(), e[1].get<double>());
            }
            return CouplingSchedule::table(entries);
        }
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::ConfigError) throw;
        detail::config_error(std::string("coupling: ") + e.what());
    }
    detail::config_error("coupling kind must be power, constant or table");
}

/// uniform_power: gamma = c tau^beta; per_step_power: gamma^(n) = c tau^beta / n^p.
inline ErrorSchedule make_error_schedule(const Json& j) {
    detail::allow_keys(j, "error_schedule", {"kind", "c", "beta", "p"});
    const std::string kind = j.value("kind", "uniform_power");
    const double c = detail::number_at(j, "c", 1.0);
    const double beta = detail::number_at(j, "beta", 1.0);
    if (!(c > 0.0)) detail::config_error("error schedule needs c > 0");
    if (kind == "uniform_power") return ErrorSchedule::uniform_power(c, beta);
    if (kind == "per_step_power") {
        const double p = detail::number_at(j, "p", 0.0);
        return ErrorSchedule::per_step([c, beta, p](double tau, std::size_t n) {
            return c * std::pow(tau, beta) / std::pow(static_cast<double>(n), p);
        });
    }
    detail::config_error("error schedule kind must be uniform_power or per_step_power");
}

/// Parses a JSON configuration (comments allowed) and checks it.
inline ExperimentConfig parse_config(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text, nullptr, true, true);
    } catch (const Json::exception& e) {
        detail::config_error(std::string("malformed configuration: ") + e.what());
    }
    if (!j.is_object()) detail::config_error("configuration must be an object");
    static const std::vector<std::string> keys{"family",       "coupling",       "error_schedule", "tau_list",
                                               "horizon",      "initial",        "recovery",       "selector",
                                               "probes",       "probe_times",    "probe_settings", "solver",
                                               "output",       "seed",           "expectations",   "description"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) detail::config_error("unknown key '" + key + "'");
    }
    ExperimentConfig c;
    try {
        if (!j.contains("family")) detail::config_error("missing 'family'");
        const Json& fam = j.at("family");
        if (fam.is_string()) {
            c.family_name = fam.get<std::string>();
        } else if (fam.is_object() && fam.contains("name") && fam.at("name").is_string()) {
            c.family_name = fam.at("name").get<std::string>();
            if (fam.contains("parameters")) c.family_parameters = fam.at("parameters");
        } else {
            detail::config_error("'family' must be a name or {name, parameters}");
        }
        c.coupling = j.value("coupling", Json{{"kind", "constant"}, {"eps0", 1.0}});
        c.error_schedule = j.value("error_schedule", Json{{"kind", "uniform_power"}});
        c.tau_list = detail::numbers_at(j, "tau_list");
        c.horizon = detail::number_at(j, "horizon", 1.0);
        if (j.contains("initial")) c.initial = detail::point_from(j.at("initial"), "initial");
        c.recovery = j.value("recovery", "family");
        if (j.contains("selector")) c.selector = j.at("selector").get<std::string>();
        if (j.contains("probes")) c.probes = j.at("probes").get<std::vector<std::string>>();
        c.probe_times = detail::numbers_at(j, "probe_times");
        c.probe_settings = j.value("probe_settings", Json::object());
        if (j.contains("solver")) c.solver = detail::solver_from(j.at("solver"));
        c.output = j.value("output", "out");
        c.seed = j.value("seed", std::uint64_t{1});
        c.expectations = j.value("expectations", Json::array());
    } catch (const Json::exception& e) {
        detail::config_error(std::string("bad value: ") + e.what());
    }

    if (c.tau_list.empty()) detail::config_error("tau_list must be non-empty");
    for (std::size_t i = 0; i < c.tau_list.size(); ++i) {
        if (!(c.tau_list[i] > 0.0)) detail::config_error("tau values must be positive");
        if (i > 0 && !(c.tau_list[i] < c.tau_list[i - 1])) detail::config_error("tau_list must be strictly decreasing");
    }
    if (!(c.horizon > 0.0) || !std::isfinite(c.horizon)) detail::config_error("horizon must be positive");
    if (c.probe_times.empty()) c.probe_times = {c.horizon};
    for (double t : c.probe_times) {
        if (!(t >= 0.0 && t <= c.horizon)) detail::config_error("probe_times must lie in [0, horizon]");
    }
    for (const std::string& p : c.probes) {
        const auto& k = detail::known_probes();
        if (std::find(k.begin(), k.end(), p) == k.end()) detail::config_error("unknown probe '" + p + "'");
    }
    if (c.recovery != "family" && c.recovery != "constant") detail::config_error("recovery must be family or constant");
    if (c.selector && *c.selector != "counterexample") detail::config_error("unknown selector '" + *c.selector + "'");
    if (!c.expectations.is_array()) detail::config_error("expectations must be an array");
    // Build once so that family, schedule and parameter errors surface at validation time.
    make_family(c.family_name, c.family_parameters);
    make_coupling(c.coupling);
    make_error_schedule(c.error_schedule);
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) detail::config_error("cannot read configuration " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

// ---------------------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------------------

inline std::string format_double(double v) {
    if (std::isnan(v)) return "null";
    if (std::isinf(v)) return v > 0 ? "\"inf\"" : "\"-inf\"";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// JSON text with every float at 17 significant digits; infinities become strings.
inline void write_json(std::ostream& os, const Json& j, int indent = 0) {
    const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
    const std::string close(static_cast<std::size_t>(indent), ' ');
    switch (j.type()) {
        case Json::value_t::object: {
            if (j.empty()) {
                os << "{}";
                return;
            }
            os << "{\n";
            bool first = true;
            for (const auto& [k, v] : j.items()) {
                if (!first) os << ",\n";
                first = false;
                os << pad << Json(k).dump() << ": ";
                write_json(os, v, indent + 2);
            }
            os << "\n" << close << "}";
            return;
        }
        case Json::value_t::array: {
            if (j.empty()) {
                os << "[]";
                return;
            }
            os << "[\n";
            for (std::size_t i = 0; i < j.size(); ++i) {
                if (i) os << ",\n";
                os << pad;
                write_json(os, j[i], indent + 2);
            }
            os << "\n" << close << "]";
            return;
        }
        case Json::value_t::number_float: os << format_double(j.get<double>()); return;
        default: os << j.dump(); return;
    }
}

inline Json point_json(const Point& p) {
    if (p.dim() == 1) return p.x();
    Json a = Json::array();
    for (double c : p.coords()) a.push_back(c);
    return a;
}

// ---------------------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------------------

struct ExpectationOutcome {
    std::string kind;
    bool passed = false;
    std::string detail;
};

struct ExperimentResult {
    std::vector<Trajectory> trajectories;
    ConvergenceSummary convergence;
    std::vector<InvariantReport> invariants;
    std::size_t coercivity_violations = 0;
    std::size_t moreau_yosida_monotonicity_violations = 0;
    Json probes = Json::object();
    std::vector<ExpectationOutcome> expectations;
    Json summary = Json::object();

    bool expectations_met() const {
        return std::all_of(expectations.begin(), expectations.end(), [](const auto& e) { return e.passed; });
    }
    std::size_t invariant_violations() const {
        std::size_t s = coercivity_violations + moreau_yosida_monotonicity_violations;
        for (const auto& r : invariants) s += r.total();
        return s;
    }
};

namespace detail {

inline Json verdict_json(ProbeVerdict v) {
    return Json{{"verdict", to_string(v)}, {"strength", verdict_strength(v)}};
}

inline std::function<Point(double)> probe_point_sequence(const FamilySpec& spec, const std::string& kind,
                                                         const Point& u, const CouplingSchedule* coupling) {
    if (kind == "constant") return [u](double) { return u; };
    if (kind == "local_minimizer") {
        if (!spec.local_minimizer_near) return [u](double) { return u; };
        auto near = *spec.local_minimizer_near;
        if (coupling) {
            const CouplingSchedule c = *coupling;
            return [near, c, u](double tau) { return near(c(tau), u); };
        }
        return [near, u](double eps) { return near(eps, u); };
    }
    config_error("point sequence must be constant or local_minimizer");
}

/// Piecewise-linear interpolation of the discrete values.
inline std::function<Point(double)> linear_interpolant(const Trajectory& t) {
    return [&t](double time) {
        const double s = std::clamp(time / t.tau, 0.0, static_cast<double>(t.steps()));
        const auto k = std::min(static_cast<std::size_t>(std::floor(s)), t.steps() == 0 ? 0 : t.steps() - 1);
        const double w = t.steps() == 0 ? 0.0 : s - static_cast<double>(k);
        const Point& a = t.at_step(k);
        const Point& b = t.at_step(std::min(k + 1, t.steps()));
        Point p = a;
        for (std::size_t i = 0; i < a.dim(); ++i) p.set(i, (1.0 - w) * a[i] + w * b[i]);
        return p;
    };
}

inline double reference_value(const FamilySpec& spec, const Json& target, const Point& u0, double time) {
    if (target.is_number()) return target.get<double>();
    if (target.is_string() && target.get<std::string>() == "exact_flow") {
        if (!spec.family.exact_flow) config_error("family has no exact flow for expectation target");
        return (*spec.family.exact_flow)(u0, time).x();
    }
    if (target.is_string() && target.get<std::string>() == "initial") return u0.x();
    config_error("expectation target must be a number, \"exact_flow\" or \"initial\"");
}

inline const Trajectory& trajectory_for(const ExperimentResult& r, const Json& e) {
    if (r.trajectories.empty()) config_error("expectation needs the scheme probe");
    if (!e.contains("tau")) return r.trajectories.back();
    const double tau = e.at("tau").get<double>();
    for (const Trajectory& t : r.trajectories) {
        if (t.tau == tau) return t;
    }
    config_error("expectation tau not in tau_list");
}

}  // namespace detail

/// Runs the configured scheme, checks and probes. Solver failures propagate as Error.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::size_t jobs = detail::default_jobs()) {
    const FamilySpec spec = make_family(cfg.family_name, cfg.family_parameters);
    const CouplingSchedule coupling = make_coupling(cfg.coupling);
    const ErrorSchedule errors = make_error_schedule(cfg.error_schedule);
    const RecoveryData recovery =
        cfg.recovery == "family" ? spec.recovery(coupling, cfg.initial) : RecoveryData::constant(cfg.initial);
    const FunctionalFamily& fam = spec.family;
    const Json& ps = cfg.probe_settings;
    auto has_probe = [&](const char* p) {
        return std::find(cfg.probes.begin(), cfg.probes.end(), p) != cfg.probes.end();
    };

    ExperimentResult res;

    // Coercivity spot-check on the members used by the runs and on the limit.
    {
        Box box = Box::symmetric(cfg.initial.dim(), 10.0);
        const auto samples = sample_box(box, 1000, cfg.seed);
        res.coercivity_violations += coercivity_violations(fam.limit, fam.certificate, samples);
        for (double tau : cfg.tau_list) {
            res.coercivity_violations += coercivity_violations(fam.member(coupling(tau)), fam.certificate, samples);
        }
    }
    // Y_tau f(u0) is non-increasing in tau; a violation must exceed the certified gaps.
    {
        const double eps = coupling(cfg.tau_list.back());
        const Functional m = fam.member(eps);
        const Point u = recovery.initial_for(cfg.tau_list.back());
        std::vector<ProxResult> ys(cfg.tau_list.size());
        std::vector<bool> admissible(cfg.tau_list.size(), true);
        detail::parallel_for(cfg.tau_list.size(), jobs, [&](std::size_t k) {
            if (2.0 * cfg.tau_list[k] * fam.certificate.B >= 1.0) {
                admissible[k] = false;
                return;
            }
            ys[k] = moreau_yosida(m, fam.certificate, cfg.tau_list[k], u, cfg.solver);
        });
        for (std::size_t k = 1; k < ys.size(); ++k) {
            if (!admissible[k] || !admissible[k - 1]) continue;
            // tau_list[k] < tau_list[k-1], so Y at k must not be below Y at k-1.
            if (ys[k].value < ys[k - 1].value - ys[k - 1].certified_gap) ++res.moreau_yosida_monotonicity_violations;
        }
    }

    if (has_probe("scheme")) {
        StepSelector selector;
        if (cfg.selector) selector = counterexample_selector_any_tau();
        RefinementResult rr = run_refinement(fam, coupling, errors, recovery, cfg.tau_list, cfg.horizon, cfg.solver,
                                             cfg.probe_times, selector, jobs);
        res.trajectories = std::move(rr.trajectories);
        res.convergence = std::move(rr.summary);
        res.invariants.resize(res.trajectories.size());
        detail::parallel_for(res.trajectories.size(), jobs, [&](std::size_t k) {
            res.invariants[k] = check_invariants(res.trajectories[k], fam, coupling, errors, recovery, 200,
                                                 cfg.seed + k);
        });
    }

    if (has_probe("crucial_assumption")) {
        const Json s = ps.value("crucial_assumption", Json::object());
        const Point u = s.contains("point") ? detail::point_from(s.at("point"), "point") : cfg.initial;
        std::vector<double> taus = detail::numbers_at(s, "tau_list");
        if (taus.empty()) taus = cfg.tau_list;
        CrucialProbeOptions opt;
        opt.check_convergence_condition = s.value("check_convergence_condition", false);
        const auto seq = detail::probe_point_sequence(spec, s.value("sequence", "local_minimizer"), u, &coupling);
        const auto rep = crucial_assumption_probe(fam, coupling, seq, u, taus, cfg.solver, opt, jobs);
        Json j{{"limit_point", point_json(u)},     {"target", rep.target},
               {"liminf_estimate", rep.liminf_estimate}, {"tolerance", rep.tolerance},
               {"gap_term", rep.gap_term},         {"limit_bias", rep.limit_bias}};
        j.update(detail::verdict_json(rep.verdict));
        Json seqj = Json::array();
        for (std::size_t i = 0; i < rep.ratios.size(); ++i) {
            const auto& r = rep.ratios[i];
            seqj.push_back({{"tau", r.tau},
                            {"epsilon", r.epsilon},
                            {"point", point_json(r.point)},
                            {"ratio", r.ratio},
                            {"gap", r.gap},
                            {"limit_ratio", rep.limit_ratios[i]}});
        }
        j["sequence"] = seqj;
        if (rep.convergence_condition) {
            const auto& cc = *rep.convergence_condition;
            Json cj{{"limit_value", cc.limit_value}, {"member_values", cc.member_values},
                    {"deviations", cc.deviations},   {"tolerance", cc.tolerance}};
            cj.update(detail::verdict_json(cc.verdict));
            j["convergence_condition"] = cj;
        }
        res.probes["crucial_assumption"] = j;
    }

    if (has_probe("edi")) {
        const Json s = ps.value("edi", Json::object());
        if (!fam.limit_slope) throw Error(ErrorKind::MissingAnalyticSlope, "edi probe needs the limit slope");
        const double t0 = detail::number_at(s, "s", 0.0);
        const double t1 = detail::number_at(s, "t", cfg.horizon);
        double step = detail::number_at(s, "step", 1e-3);
        const std::string curve = s.value("curve", "finest");
        std::function<Point(double)> u;
        if (curve == "finest") {
            if (res.trajectories.empty()) detail::config_error("edi on the finest run needs the scheme probe");
            u = detail::linear_interpolant(res.trajectories.back());
            step = std::max(step, res.trajectories.back().tau);
        } else if (curve == "exact_flow") {
            if (!fam.exact_flow) detail::config_error("family has no exact flow");
            const auto flow = *fam.exact_flow;
            const Point u0 = cfg.initial;
            u = [flow, u0](double t) { return flow(u0, t); };
        } else if (curve == "counterexample_limit") {
            u = [](double t) { return Point{t * std::exp(-t)}; };
        } else {
            detail::config_error("edi curve must be finest, exact_flow or counterexample_limit");
        }
        const double r = edi_residual(u, fam.limit, *fam.limit_slope, t0, t1, step);
        res.probes["edi"] = Json{{"curve", curve}, {"s", t0}, {"t", t1}, {"quadrature_step", step}, {"residual", r}};
    }

    if (has_probe("slope_liminf")) {
        const Json s = ps.value("slope_liminf", Json::object());
        const Point u = s.contains("point") ? detail::point_from(s.at("point"), "point") : cfg.initial;
        std::vector<double> eps = detail::numbers_at(s, "epsilon_list");
        if (eps.empty()) eps = {1e-1, 1e-2, 1e-3, 1e-4};
        const std::string mode = s.value("mode", "relaxed_slope_proxy");
        if (mode != "relaxed_slope_proxy" && mode != "local_slope") {
            detail::config_error("slope_liminf mode must be relaxed_slope_proxy or local_slope");
        }
        const auto seq = detail::probe_point_sequence(spec, s.value("sequence", "constant"), u, nullptr);
        const auto rep = slope_liminf_probe(fam, seq, u, eps,
                                            mode == "local_slope" ? SlopeMode::LocalSlope : SlopeMode::RelaxedSlopeProxy);
        Json j{{"limit_point", point_json(u)},
               {"mode", mode},
               {"epsilons", rep.epsilons},
               {"slopes", rep.slopes},
               {"liminf_estimate", rep.liminf_estimate},
               {"target", rep.target},
               {"tolerance", rep.tolerance}};
        j.update(detail::verdict_json(rep.verdict));
        res.probes["slope_liminf"] = j;
    }

    if (has_probe("gamma_delta")) {
        const Json s = ps.value("gamma_delta", Json::object());
        std::vector<double> eps = detail::numbers_at(s, "epsilons");
        if (eps.empty()) eps = {1e-1, 1e-2, 1e-3};
        const GammaDistanceSpec gs = default_gamma_spec(static_cast<std::size_t>(detail::number_at(s, "I", 8)),
                                                        static_cast<std::size_t>(detail::number_at(s, "J", 8)));
        InnerSolverConfig sc = default_gamma_solver_config();
        if (s.contains("solver")) sc = detail::solver_from(s.at("solver"));
        Json vals = Json::array();
        bool decreasing = true;
        double prev = std::numeric_limits<double>::infinity();
        for (double e : eps) {
            const GammaDelta d = gamma_delta(fam.member(e), fam.limit, gs, fam.certificate, fam.certificate, sc, jobs);
            vals.push_back({{"epsilon", e}, {"delta", d.value}, {"accumulated_gap", d.accumulated_gap}});
            if (!(d.value < prev)) decreasing = false;
            prev = d.value;
        }
        res.probes["gamma_delta"] = Json{{"I", gs.I()}, {"J", gs.J()}, {"truncation_bound", gs.truncation_bound()},
                                         {"values", vals}, {"strictly_decreasing", decreasing}};
    }

    if (has_probe("epsilon_search")) {
        const Json s = ps.value("epsilon_search", Json::object());
        std::vector<double> taus = detail::numbers_at(s, "tau_list");
        if (taus.empty()) taus = cfg.tau_list;
        const double alpha = detail::number_at(s, "alpha", 1e-2);
        const double tc = detail::number_at(s, "theta_c", 1.0);
        const double tb = detail::number_at(s, "theta_beta", 1.0);
        const GammaDistanceSpec gs = default_gamma_spec(static_cast<std::size_t>(detail::number_at(s, "I", 4)),
                                                        static_cast<std::size_t>(detail::number_at(s, "J", 4)));
        EpsilonSearchOptions opt;
        opt.eps_max = detail::number_at(s, "eps_max", opt.eps_max);
        opt.eps_min = detail::number_at(s, "eps_min", opt.eps_min);
        opt.samples = static_cast<std::size_t>(detail::number_at(s, "samples", static_cast<double>(opt.samples)));
        const auto table = epsilon_schedule_search(
            fam, taus, alpha, [tc, tb](double tau) { return tc * std::pow(tau, tb); }, gs, opt, jobs);
        Json rows = Json::array();
        for (const auto& e : table) {
            Json r{{"tau", e.tau}, {"theta", e.theta}};
            r["epsilon"] = e.epsilon ? Json(*e.epsilon) : Json(nullptr);
            r["delta"] = e.delta ? Json(*e.delta) : Json(nullptr);
            r["error"] = e.error ? Json(to_string(*e.error)) : Json(nullptr);
            rows.push_back(r);
        }
        res.probes["epsilon_search"] = Json{{"alpha", alpha}, {"table", rows}};
    }

    // Expectations.
    for (const Json& e : cfg.expectations) {
        ExpectationOutcome out;
        out.kind = e.value("kind", "");
        char buf[256];
        if (out.kind == "final_value_near" || out.kind == "final_value_far") {
            const Trajectory& t = detail::trajectory_for(res, e);
            const double time = e.value("time", cfg.horizon);
            const double target = detail::reference_value(spec, e.value("target", Json("exact_flow")), cfg.initial, time);
            const double v = t.eval(time).x();
            const double dist = std::abs(v - target);
            if (out.kind == "final_value_near") {
                const double tol = e.at("tolerance").get<double>();
                out.passed = dist <= tol;
                std::snprintf(buf, sizeof buf, "|u(%g) - %.6g| = %.3e vs tolerance %.3e at tau %g", time, target, dist, tol, t.tau);
            } else {
                const double md = e.at("min_distance").get<double>();
                out.passed = dist >= md;
                std::snprintf(buf, sizeof buf, "|u(%g) - %.6g| = %.3e vs minimum %.3e at tau %g", time, target, dist, md, t.tau);
            }
        } else if (out.kind == "pinning") {
            const Trajectory& t = detail::trajectory_for(res, e);
            const double time = e.value("time", cfg.horizon);
            const double flow = detail::reference_value(spec, Json("exact_flow"), cfg.initial, time);
            const double v = t.eval(time).x();
            const double md = e.value("min_flow_distance", 0.1);
            const double motion = e.value("max_motion", 0.1);
            out.passed = std::abs(v - flow) >= md && std::abs(v - cfg.initial.x()) <= motion;
            std::snprintf(buf, sizeof buf, "u(%g) = %.6g, flow %.6g, initial %.6g at tau %g", time, v, flow,
                          cfg.initial.x(), t.tau);
        } else if (out.kind == "probe_verdict") {
            const std::string probe = e.at("probe").get<std::string>();
            const std::string want = e.at("verdict").get<std::string>();
            std::string got = "missing";
            if (probe == "convergence_condition") {
                if (res.probes.contains("crucial_assumption") &&
                    res.probes["crucial_assumption"].contains("convergence_condition")) {
                    got = res.probes["crucial_assumption"]["convergence_condition"]["verdict"].get<std::string>();
                }
            } else if (res.probes.contains(probe) && res.probes[probe].contains("verdict")) {
                got = res.probes[probe]["verdict"].get<std::string>();
            }
            out.passed = got == want;
            std::snprintf(buf, sizeof buf, "%s verdict %s (expected %s)", probe.c_str(), got.c_str(), want.c_str());
        } else if (out.kind == "edi_residual_below") {
            const double bound = e.at("bound").get<double>();
            const double r = res.probes.contains("edi") ? res.probes["edi"]["residual"].get<double>() : NAN;
            out.passed = r <= bound;
            std::snprintf(buf, sizeof buf, "edi residual %.6g vs bound %.6g", r, bound);
        } else if (out.kind == "edi_residual_near_zero") {
            const double tol = e.at("tolerance").get<double>();
            const double r = res.probes.contains("edi") ? res.probes["edi"]["residual"].get<double>() : NAN;
            out.passed = std::abs(r) <= tol;
            std::snprintf(buf, sizeof buf, "edi residual %.6g vs tolerance %.6g", r, tol);
        } else if (out.kind == "invariants_clean") {
            out.passed = res.invariant_violations() == 0;
            std::snprintf(buf, sizeof buf, "%zu invariant violations", res.invariant_violations());
        } else {
            detail::config_error("unknown expectation kind '" + out.kind + "'");
        }
        out.detail = buf;
        res.expectations.push_back(out);
    }

    // Summary.
    Json runs = Json::array();
    for (std::size_t k = 0; k < res.trajectories.size(); ++k) {
        const Trajectory& t = res.trajectories[k];
        const InvariantReport& iv = res.invariants[k];
        Json r{{"tau", t.tau},
               {"epsilon", t.epsilon},
               {"steps", t.steps()},
               {"initial", point_json(t.initial)},
               {"final_value", point_json(t.eval(cfg.horizon))}};
        if (fam.exact_flow) {
            const Point ex = (*fam.exact_flow)(recovery.limit_point, cfg.horizon);
            r["exact_flow_value"] = point_json(ex);
            r["final_error"] = distance(ex, t.eval(cfg.horizon));
        }
        r["displacement_sum"] = t.displacement_sum(t.steps());
        r["gronwall_constant"] = std::isnan(iv.gronwall_constant) ? Json(nullptr) : Json(iv.gronwall_constant);
        r["max_observed_d2"] = iv.max_observed_d2;
        r["uncertain_steps"] = t.uncertain_steps;
        double max_gap = 0.0;
        for (double g : t.certified_gaps) max_gap = std::max(max_gap, g);
        r["max_certified_gap"] = max_gap;
        r["invariant_violations"] = Json{{"energy_monotonicity", iv.energy_monotonicity},
                                         {"displacement_estimate", iv.displacement_estimate},
                                         {"gronwall_containment", iv.gronwall_containment},
                                         {"interpolant_consistency", iv.interpolant_consistency}};
        runs.push_back(r);
    }
    Json conv = Json::array();
    for (const auto& p : res.convergence.probes) {
        Json vals = Json::array();
        for (const Point& v : p.values) vals.push_back(point_json(v));
        conv.push_back({{"time", p.time},
                        {"values", vals},
                        {"successive_distances", p.successive_distances},
                        {"distance_ratios", p.distance_ratios},
                        {"limit_estimate", point_json(p.limit_estimate)},
                        {"extrapolated", point_json(p.extrapolated)},
                        {"cauchy_like", p.cauchy_like}});
    }
    Json exps = Json::array();
    for (const auto& e : res.expectations) exps.push_back({{"kind", e.kind}, {"passed", e.passed}, {"detail", e.detail}});

    Json fam_json{{"name", spec.name}, {"parameters", spec.parameters}, {"options", spec.options}};
    res.summary = Json{{"family", fam_json},
                       {"coupling", coupling.description()},
                       {"horizon", cfg.horizon},
                       {"initial", point_json(cfg.initial)},
                       {"runs", runs},
                       {"convergence", conv},
                       {"checks",
                        {{"coercivity_violations", res.coercivity_violations},
                         {"moreau_yosida_monotonicity_violations", res.moreau_yosida_monotonicity_violations},
                         {"invariant_violations_total", res.invariant_violations()}}},
                       {"expectations", exps},
                       {"status", res.expectations_met() ? "ok" : "expectation_failed"}};
    return res;
}

/// Writes trajectories.csv, probes.json and summary.json into `dir`.
inline void write_reports(const ExperimentResult& res, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream csv(dir / "trajectories.csv");
        if (!csv) throw Error(ErrorKind::InvalidArgument, "cannot write " + (dir / "trajectories.csv").string());
        const std::size_t dim = res.trajectories.empty() ? 1 : res.trajectories.front().initial.dim();
        csv << "tau,epsilon,n,t";
        for (std::size_t i = 0; i < dim; ++i) csv << ",x" << i;
        csv << ",energy,step_speed\n";
        for (const Trajectory& t : res.trajectories) {
            for (std::size_t n = 0; n <= t.steps(); ++n) {
                csv << format_double(t.tau) << ',' << format_double(t.epsilon) << ',' << n << ','
                    << format_double(static_cast<double>(n) * t.tau);
                for (double c : t.at_step(n).coords()) csv << ',' << format_double(c);
                csv << ',' << format_double(n == 0 ? t.initial_energy : t.energies[n - 1]) << ','
                    << format_double(n == 0 ? 0.0 : t.step_speeds[n - 1]) << '\n';
            }
        }
    }
    auto dump = [&](const char* name, const Json& j) {
        std::ofstream os(dir / name);
        if (!os) throw Error(ErrorKind::InvalidArgument, std::string("cannot write ") + name);
        write_json(os, j);
        os << '\n';
    };
    dump("probes.json", res.probes);
    dump("summary.json", res.summary);
}

}  // namespace mmflow
