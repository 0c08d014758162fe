#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <initializer_list>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace mmflow {

/// Failure categories raised by the library. The CLI maps them to exit codes.
enum class ErrorKind {
    InvalidArgument,
    TauTooLarge,
    InfiniteValue,
    GridTooCoarse,
    BudgetTooTight,
    DivergedTrajectory,
    SelectorRejected,
    MissingAnalyticSlope,
    NoAdmissibleEpsilon,
    CoercivityViolation,
    TauOutOfRange,
    ConfigError,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::TauTooLarge: return "TauTooLarge";
        case ErrorKind::InfiniteValue: return "InfiniteValue";
        case ErrorKind::GridTooCoarse: return "GridTooCoarse";
        case ErrorKind::BudgetTooTight: return "BudgetTooTight";
        case ErrorKind::DivergedTrajectory: return "DivergedTrajectory";
        case ErrorKind::SelectorRejected: return "SelectorRejected";
        case ErrorKind::MissingAnalyticSlope: return "MissingAnalyticSlope";
        case ErrorKind::NoAdmissibleEpsilon: return "NoAdmissibleEpsilon";
        case ErrorKind::CoercivityViolation: return "CoercivityViolation";
        case ErrorKind::TauOutOfRange: return "TauOutOfRange";
        case ErrorKind::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Value in (-inf, +inf]. Construction from NaN or -inf throws.
class ExtReal {
public:
    constexpr ExtReal() = default;

    ExtReal(double v) : v_(v) {  // NOLINT(google-explicit-constructor)
        if (std::isnan(v) || v == -std::numeric_limits<double>::infinity()) {
            throw Error(ErrorKind::InvalidArgument, "extended real must lie in (-inf, +inf]");
        }
    }

    static ExtReal infinity() {
        ExtReal r;
        r.v_ = std::numeric_limits<double>::infinity();
        return r;
    }

    bool is_finite() const { return v_ != std::numeric_limits<double>::infinity(); }

    /// Raw value; +inf for the infinite tag.
    double value() const { return v_; }

    friend bool operator==(const ExtReal&, const ExtReal&) = default;
    friend auto operator<=>(const ExtReal& a, const ExtReal& b) { return a.v_ <=> b.v_; }

private:
    double v_ = 0.0;
};

inline constexpr std::size_t kMaxDim = 8;

/// Point of R^d with inline storage (d <= kMaxDim). Coordinates are always finite.
class Point {
public:
    Point() = default;

    explicit Point(std::size_t dim) : dim_(dim) {
        if (dim == 0 || dim > kMaxDim) {
            throw Error(ErrorKind::InvalidArgument, "point dimension must be in [1, 8]");
        }
    }

    Point(std::initializer_list<double> coords) : Point(coords.size()) {
        std::copy(coords.begin(), coords.end(), c_.begin());
        validate();
    }

    explicit Point(std::span<const double> coords) : Point(coords.size()) {
        std::copy(coords.begin(), coords.end(), c_.begin());
        validate();
    }

    static Point scalar(double x) { return Point{x}; }

    std::size_t dim() const { return dim_; }
    double operator[](std::size_t i) const { return c_[i]; }

    /// Sets one coordinate; non-finite values throw.
    void set(std::size_t i, double v) {
        if (!std::isfinite(v)) throw Error(ErrorKind::InvalidArgument, "non-finite coordinate");
        c_[i] = v;
    }

    /// First coordinate, the 1-D convenience accessor.
    double x() const { return c_[0]; }

    std::span<const double> coords() const { return {c_.data(), dim_}; }

    friend bool operator==(const Point& a, const Point& b) {
        if (a.dim_ != b.dim_) return false;
        for (std::size_t i = 0; i < a.dim_; ++i) {
            if (a.c_[i] != b.c_[i]) return false;
        }
        return true;
    }

    /// Lexicographic order on coordinates; used for deterministic tie-breaking.
    friend bool lex_less(const Point& a, const Point& b) {
        return std::lexicographical_compare(a.c_.begin(), a.c_.begin() + a.dim_, b.c_.begin(),
                                            b.c_.begin() + b.dim_);
    }

private:
    void validate() const {
        for (std::size_t i = 0; i < dim_; ++i) {
            if (!std::isfinite(c_[i])) throw Error(ErrorKind::InvalidArgument, "non-finite coordinate");
        }
    }

    std::array<double, kMaxDim> c_{};
    std::size_t dim_ = 0;
};

struct PointHash {
    std::size_t operator()(const Point& p) const noexcept {
        std::size_t h = p.dim();
        for (double c : p.coords()) {
            // +0.0 and -0.0 compare equal and must hash equal.
            const double v = (c == 0.0) ? 0.0 : c;
            h ^= std::hash<double>{}(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        }
        return h;
    }
};

inline double distance_squared(const Point& a, const Point& b) {
    if (a.dim() != b.dim()) throw Error(ErrorKind::InvalidArgument, "dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

/// Euclidean metric.
inline double distance(const Point& a, const Point& b) {
    if (a.dim() == 1 && b.dim() == 1) return std::abs(a[0] - b[0]);
    return std::sqrt(distance_squared(a, b));
}

/// Axis-aligned box [lo, hi] per coordinate.
struct Box {
    Point lo;
    Point hi;

    bool contains(const Point& p) const {
        for (std::size_t i = 0; i < p.dim(); ++i) {
            if (p[i] < lo[i] || p[i] > hi[i]) return false;
        }
        return true;
    }

    static Box symmetric(std::size_t dim, double radius) {
        Point lo(dim), hi(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            lo.set(i, -radius);
            hi.set(i, radius);
        }
        return {lo, hi};
    }
};

inline constexpr double kDefaultDomainRadius = 1e10;

using EvalFn = std::function<ExtReal(const Point&)>;
using GradFn = std::function<Point(const Point&)>;

/// A lower model m <= f with known contact set {f == m}. The prox of m bounds the prox
/// of f from below, and contact points near argmin of the m-prox are near-optimal for f.
struct ContactMinorant {
    EvalFn lower;
    std::optional<GradFn> lower_derivative;
    /// Contact points bracketing x (e.g. the lattice points on either side in 1-D).
    std::function<std::vector<Point>(const Point&)> contacts_near;
};

/// Extended-real functional on R^d with optional analytic metadata.
struct Functional {
    EvalFn evaluate;
    std::optional<Box> domain_hint;
    std::optional<GradFn> analytic_derivative;
    std::optional<ContactMinorant> minorant;
    /// Smallest length scale of oscillation (e.g. eps for cos^2(x/eps)); grid solvers must
    /// resolve a quarter of it.
    std::optional<double> feature_scale;

    ExtReal operator()(const Point& p) const { return evaluate(p); }

    /// Domain hint, or the default box [-1e10, 1e10]^d when absent.
    Box domain_or_default(std::size_t dim) const {
        if (domain_hint) return *domain_hint;
        return Box::symmetric(dim, kDefaultDomainRadius);
    }
};

/// Constants with f >= -A - B d(., u_star)^2.
struct CoercivityCertificate {
    double A = 0.0;
    double B = 0.0;
    Point u_star = Point{0.0};

    void validate() const {
        if (!(A >= 0.0) || !(B >= 0.0) || !std::isfinite(A) || !std::isfinite(B)) {
            throw Error(ErrorKind::InvalidArgument, "coercivity constants must be finite and >= 0");
        }
    }

    double lower_bound_at(const Point& v) const { return -A - B * distance_squared(v, u_star); }
};

/// Parameterized family eps -> phi_eps with its limit phi.
struct FunctionalFamily {
    std::function<Functional(double)> member;
    Functional limit;
    CoercivityCertificate certificate;
    /// |d^- phi| of the limit, when known analytically.
    std::optional<std::function<double(const Point&)>> limit_slope;
    /// Exact gradient flow of the limit from x0 at time t.
    std::optional<std::function<Point(const Point&, double)>> exact_flow;
};

/// eps(tau): power c*tau^beta, constant eps0, or an explicit table.
class CouplingSchedule {
public:
    enum class Kind { Power, Constant, Table };

    static CouplingSchedule power(double c, double beta) {
        if (!(c > 0.0) || !std::isfinite(beta)) {
            throw Error(ErrorKind::InvalidArgument, "power coupling needs c > 0 and finite beta");
        }
        CouplingSchedule s;
        s.kind_ = Kind::Power;
        s.c_ = c;
        s.beta_ = beta;
        s.description_ = "eps(tau) = " + fmt_num(c) + " * tau^" + fmt_num(beta);
        return s;
    }

    static CouplingSchedule constant(double eps0) {
        if (!(eps0 > 0.0)) throw Error(ErrorKind::InvalidArgument, "constant coupling needs eps0 > 0");
        CouplingSchedule s;
        s.kind_ = Kind::Constant;
        s.c_ = eps0;
        s.description_ = "eps(tau) = " + fmt_num(eps0);
        return s;
    }

    /// Table of (tau, eps) pairs; lookup interpolates log-linearly and clamps at the ends.
    static CouplingSchedule table(std::vector<std::pair<double, double>> entries) {
        if (entries.empty()) throw Error(ErrorKind::InvalidArgument, "empty coupling table");
        for (const auto& [t, e] : entries) {
            if (!(t > 0.0) || !(e > 0.0)) {
                throw Error(ErrorKind::InvalidArgument, "coupling table entries must be positive");
            }
        }
        std::sort(entries.begin(), entries.end());
        CouplingSchedule s;
        s.kind_ = Kind::Table;
        s.table_ = std::move(entries);
        s.description_ = "eps(tau) from table (" + std::to_string(s.table_.size()) + " entries)";
        return s;
    }

    double operator()(double tau) const {
        if (!(tau > 0.0)) throw Error(ErrorKind::InvalidArgument, "tau must be positive");
        switch (kind_) {
            case Kind::Power: return c_ * std::pow(tau, beta_);
            case Kind::Constant: return c_;
            case Kind::Table: break;
        }
        if (tau <= table_.front().first) return table_.front().second;
        if (tau >= table_.back().first) return table_.back().second;
        auto hi = std::lower_bound(table_.begin(), table_.end(), std::make_pair(tau, 0.0));
        auto lo = std::prev(hi);
        if (hi->first == tau) return hi->second;
        const double w = std::log(tau / lo->first) / std::log(hi->first / lo->first);
        return std::exp((1.0 - w) * std::log(lo->second) + w * std::log(hi->second));
    }

    Kind kind() const { return kind_; }
    const std::string& description() const { return description_; }

private:
    static std::string fmt_num(double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", v);
        return buf;
    }

    Kind kind_ = Kind::Constant;
    double c_ = 1.0;
    double beta_ = 0.0;
    std::vector<std::pair<double, double>> table_;
    std::string description_;
};

/// Additive error allowed in step n: gamma(tau)*tau (uniform) or gamma^(n)(tau) (per step).
class ErrorSchedule {
public:
    enum class Kind { Uniform, PerStep };

    static ErrorSchedule uniform(std::function<double(double)> gamma) {
        ErrorSchedule s;
        s.kind_ = Kind::Uniform;
        s.uniform_ = std::move(gamma);
        return s;
    }

    /// gamma(tau) = c * tau^beta; the default schedule is c = 1, beta = 1.
    static ErrorSchedule uniform_power(double c = 1.0, double beta = 1.0) {
        return uniform([c, beta](double tau) { return c * std::pow(tau, beta); });
    }

    static ErrorSchedule per_step(std::function<double(double, std::size_t)> gamma_n) {
        ErrorSchedule s;
        s.kind_ = Kind::PerStep;
        s.per_step_ = std::move(gamma_n);
        return s;
    }

    Kind kind() const { return kind_; }

    /// gamma_tau for the uniform kind.
    double gamma(double tau) const {
        if (kind_ != Kind::Uniform) throw Error(ErrorKind::InvalidArgument, "gamma() on per-step schedule");
        return uniform_(tau);
    }

    /// Additive budget for step n >= 1.
    double budget(double tau, std::size_t n) const {
        const double b = kind_ == Kind::Uniform ? uniform_(tau) * tau : per_step_(tau, n);
        if (!(b > 0.0) || !std::isfinite(b)) {
            throw Error(ErrorKind::InvalidArgument, "error budget must be positive and finite");
        }
        return b;
    }

    /// Sum of the budgets of steps 1..n.
    double total_budget(double tau, std::size_t n) const {
        if (kind_ == Kind::Uniform) return uniform_(tau) * tau * static_cast<double>(n);
        double s = 0.0;
        for (std::size_t j = 1; j <= n; ++j) s += per_step_(tau, j);
        return s;
    }

    /// Numerical check that the accumulated error over [0, horizon] vanishes along the
    /// decreasing sample of tau values: strictly decreasing and the last value below
    /// 1e-3 of the first.
    bool vanishes_on(std::span<const double> taus, double horizon) const {
        if (taus.size() < 2) return false;
        std::vector<double> vals;
        for (double tau : taus) {
            const auto n = static_cast<std::size_t>(std::ceil(horizon / tau - 1e-9));
            vals.push_back(kind_ == Kind::Uniform ? uniform_(tau) : total_budget(tau, n));
        }
        for (std::size_t i = 1; i < vals.size(); ++i) {
            if (!(vals[i] < vals[i - 1])) return false;
        }
        return vals.back() <= 1e-3 * vals.front();
    }

private:
    Kind kind_ = Kind::Uniform;
    std::function<double(double)> uniform_;
    std::function<double(double, std::size_t)> per_step_;
};

/// Radius R such that every v with f(v) + d(v,u)^2/(2 tau) <= f(u) lies in the closed
/// ball B(u, R). Positive root of d^2 (1 - 2 tau B) - 4 tau B D d = 2 tau (f(u) + A + B D^2)
/// with D = d(u, u_star).
inline double prox_search_radius(const Functional& f, const CoercivityCertificate& cert, double tau,
                                 const Point& u) {
    cert.validate();
    if (!(tau > 0.0)) throw Error(ErrorKind::InvalidArgument, "tau must be positive");
    if (!(2.0 * tau * cert.B < 1.0)) throw Error(ErrorKind::TauTooLarge, "2 tau B >= 1");
    const ExtReal fu = f(u);
    if (!fu.is_finite()) throw Error(ErrorKind::InfiniteValue, "f(u) = +inf");
    const double D = distance(u, cert.u_star);
    const double rhs = std::max(0.0, 2.0 * tau * (fu.value() + cert.A + cert.B * D * D));
    const double a = 1.0 - 2.0 * tau * cert.B;
    const double b = 4.0 * tau * cert.B * D;
    return (b + std::sqrt(b * b + 4.0 * a * rhs)) / (2.0 * a);
}

/// Count of sample points violating f(v) >= -A - B d(v, u_star)^2.
inline std::size_t coercivity_violations(const Functional& f, const CoercivityCertificate& cert,
                                         std::span<const Point> samples, double slack = 1e-12) {
    std::size_t bad = 0;
    for (const Point& v : samples) {
        const ExtReal fv = f(v);
        if (!fv.is_finite()) continue;
        const double lb = cert.lower_bound_at(v);
        if (fv.value() < lb - slack * (1.0 + std::abs(lb))) ++bad;
    }
    return bad;
}

/// Uniform random points in a box (deterministic for a given seed).
inline std::vector<Point> sample_box(const Box& box, std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Point> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        Point p(box.lo.dim());
        for (std::size_t i = 0; i < p.dim(); ++i) {
            std::uniform_real_distribution<double> dist(box.lo[i], box.hi[i]);
            p.set(i, dist(rng));
        }
        out.push_back(p);
    }
    return out;
}

namespace detail {

/// Runs body(i) for i in [0, n) on up to `jobs` threads. Results must be written to
/// per-index slots, so the outcome is independent of the thread count.
template <typename Body>
void parallel_for(std::size_t n, std::size_t jobs, Body&& body) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    jobs = std::min(jobs, n);
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    for (std::size_t w = 0; w < jobs; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += jobs) {
                try {
                    body(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

inline std::size_t default_jobs() {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : hc;
}

}  // namespace detail

}  // namespace mmflow
