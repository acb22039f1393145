#include "degen/model.hpp"

#include "degen/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace degen {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt(double v)
{
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

}  // namespace

std::string to_string(Form form)
{
    switch (form) {
    case Form::NonDivergence: return "nondiv";
    case Form::DivergenceWD: return "div_wd";
    case Form::DivergenceSD: return "div_sd";
    }
    return "nondiv";
}

Form form_from_string(const std::string& name)
{
    if (name == "nondiv") return Form::NonDivergence;
    if (name == "div_wd") return Form::DivergenceWD;
    if (name == "div_sd") return Form::DivergenceSD;
    throw std::invalid_argument("unknown form '" + name + "' (expected nondiv, div_wd or div_sd)");
}

SpatialGrid SpatialGrid::uniform(int n)
{
    return clustered(n, 1.0);
}

SpatialGrid SpatialGrid::clustered(int n, double ratio)
{
    if (n < 2) throw std::invalid_argument("spatial grid needs n >= 2");
    if (!(ratio > 0.0 && ratio <= 1.0)) throw std::invalid_argument("clustering ratio must lie in (0,1]");
    SpatialGrid g;
    g.n = n;
    g.x.resize(n + 1);
    g.h.resize(n);
    if (ratio == 1.0) {
        for (int i = 0; i <= n; ++i) g.x[i] = static_cast<double>(i) / n;
    } else {
        Eigen::VectorXd widths(n);
        for (int i = 0; i < n; ++i) widths[i] = std::pow(ratio, n - 1 - i);
        widths /= widths.sum();
        g.x[0] = 0.0;
        for (int i = 0; i < n; ++i) g.x[i + 1] = g.x[i] + widths[i];
    }
    g.x[0] = 0.0;
    g.x[n] = 1.0;
    for (int i = 0; i < n; ++i) g.h[i] = g.x[i + 1] - g.x[i];
    return g;
}

Eigen::VectorXd SpatialGrid::trapezoid_weights() const
{
    Eigen::VectorXd w = Eigen::VectorXd::Zero(n + 1);
    for (int i = 0; i < n; ++i) {
        w[i] += 0.5 * h[i];
        w[i + 1] += 0.5 * h[i];
    }
    return w;
}

TimeGrid TimeGrid::make(double T, int m, double start)
{
    if (!(T > start)) throw std::invalid_argument("time horizon must exceed the start time");
    if (m < 2) throw std::invalid_argument("time grid needs m >= 2");
    return TimeGrid{start, T, m};
}

Eigen::VectorXd TimeGrid::trapezoid_weights() const
{
    Eigen::VectorXd w = Eigen::VectorXd::Constant(m + 1, dt());
    w[0] *= 0.5;
    w[m] *= 0.5;
    return w;
}

DegenerateCoefficient DegenerateCoefficient::power(Form form, double alpha, double scale)
{
    DegenerateCoefficient c;
    c.form = form;
    c.alpha = alpha;
    c.scale = scale;
    c.power_law = true;
    if (form == Form::DivergenceSD) c.beta_near0 = alpha > 1.0 ? 0.5 * (1.0 + alpha) : 0.5;
    return c;
}

DegenerateCoefficient DegenerateCoefficient::tabulated(Form form, double alpha, std::vector<double> xs,
                                                       std::vector<double> as)
{
    if (xs.size() < 2 || xs.size() != as.size())
        throw std::invalid_argument("coefficient table needs at least two (x, a) pairs");
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (!(xs[i] > xs[i - 1])) throw std::invalid_argument("coefficient table x must increase");
    if (xs.front() != 0.0 || xs.back() != 1.0)
        throw std::invalid_argument("coefficient table must span [0, 1]");
    DegenerateCoefficient c;
    c.form = form;
    c.alpha = alpha;
    c.power_law = false;
    c.table_x = std::move(xs);
    c.table_a = std::move(as);
    if (form == Form::DivergenceSD) c.beta_near0 = alpha > 1.0 ? 0.5 * (1.0 + alpha) : 0.5;
    return c;
}

double DegenerateCoefficient::operator()(double x) const
{
    if (power_law) {
        if (x == 0.0) return alpha == 0.0 ? scale : 0.0;
        return scale * std::pow(x, alpha);
    }
    auto it = std::upper_bound(table_x.begin(), table_x.end(), x);
    std::size_t j = static_cast<std::size_t>(std::distance(table_x.begin(), it));
    if (j == 0) return table_a.front();
    if (j >= table_x.size()) return table_a.back();
    const double t = (x - table_x[j - 1]) / (table_x[j] - table_x[j - 1]);
    return (1.0 - t) * table_a[j - 1] + t * table_a[j];
}

double DegenerateCoefficient::derivative(double x) const
{
    if (power_law) {
        if (alpha == 0.0) return 0.0;
        if (x == 0.0) return alpha < 1.0 ? kInf : (alpha == 1.0 ? scale : 0.0);
        return scale * alpha * std::pow(x, alpha - 1.0);
    }
    auto it = std::upper_bound(table_x.begin(), table_x.end(), x);
    std::size_t j = static_cast<std::size_t>(std::distance(table_x.begin(), it));
    j = std::clamp<std::size_t>(j, 1, table_x.size() - 1);
    return (table_a[j] - table_a[j - 1]) / (table_x[j] - table_x[j - 1]);
}

double DegenerateCoefficient::log_slope(double x) const
{
    if (x == 0.0 || power_law) return alpha;
    return x * derivative(x) / (*this)(x);
}

Eigen::VectorXd DegenerateCoefficient::sample(const SpatialGrid& grid) const
{
    Eigen::VectorXd a(grid.size());
    for (int i = 0; i < grid.size(); ++i) a[i] = (*this)(grid.x[i]);
    return a;
}

bool ValidationReport::passed() const
{
    return std::all_of(entries.begin(), entries.end(), [](const CheckEntry& e) { return e.passed; });
}

const CheckEntry* ValidationReport::find(const std::string& name) const
{
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

namespace {

// ∫_{x1}^1 a^{-q} by trapezoid plus the power-law tail on (0, x1).
double singular_integral(const DegenerateCoefficient& coef, const SpatialGrid& grid, double q)
{
    const int n = grid.n;
    const double x1 = grid.x[1], x2 = grid.x[2];
    const double a1 = coef(x1), a2 = coef(x2);
    const double local = coef.power_law ? coef.alpha : std::log(a2 / a1) / std::log(x2 / x1);
    const double exponent = q * local;
    if (exponent >= 1.0) return kInf;
    double sum = 0.0;
    for (int i = 1; i < n; ++i)
        sum += 0.5 * grid.h[i] * (std::pow(coef(grid.x[i]), -q) + std::pow(coef(grid.x[i + 1]), -q));
    sum += std::pow(a1, -q) * x1 / (1.0 - exponent);
    return sum;
}

}  // namespace

ValidationReport validate_coefficient(const DegenerateCoefficient& coef, const SpatialGrid& grid)
{
    ValidationReport rep;
    const int n = grid.n;
    const Eigen::VectorXd a = coef.sample(grid);

    {
        CheckEntry e{"a_zero_at_0", std::abs(a[0]) <= 1e-14, a[0], ""};
        if (!e.passed) e.detail = "a(0) must vanish";
        rep.entries.push_back(e);
    }
    {
        const double amin = a.tail(n).minCoeff();
        CheckEntry e{"a_positive", amin > 0.0, amin, ""};
        if (!e.passed) e.detail = "a <= 0 at a node of (0,1]";
        rep.entries.push_back(e);
    }
    {
        double lo = 0.0, hi = 2.0;
        bool lo_open = true;
        std::string range = "(0,2)";
        if (coef.form == Form::DivergenceWD) {
            lo = 0.0, hi = 1.0, lo_open = false, range = "[0,1)";
        } else if (coef.form == Form::DivergenceSD) {
            lo = 1.0, hi = 2.0, lo_open = false, range = "[1,2)";
        }
        const bool ok = (lo_open ? coef.alpha > lo : coef.alpha >= lo) && coef.alpha < hi;
        CheckEntry e{"alpha_range", ok, coef.alpha, ""};
        e.detail = ok ? "alpha in " + range + " for " + to_string(coef.form)
                      : "alpha out of range " + range + " for " + to_string(coef.form);
        rep.entries.push_back(e);
    }
    if (!rep.passed()) return rep;

    {
        double worst = -kInf;
        for (int i = 1; i < n; ++i) {
            const double xi = grid.x[i];
            const double excess = xi * coef.derivative(xi) - coef.alpha * a[i];
            worst = std::max(worst, excess / a[i]);
        }
        CheckEntry e{"xa_prime_le_alpha_a", worst <= 1e-12, worst, "max of (x a' - alpha a)/a"};
        rep.entries.push_back(e);
    }
    {
        double worst = 0.0;
        for (int i = 1; i < n; ++i) {
            const double r0 = std::pow(grid.x[i], coef.alpha) / a[i];
            const double r1 = std::pow(grid.x[i + 1], coef.alpha) / a[i + 1];
            worst = std::min(worst, (r1 - r0) / std::max(std::abs(r0), 1e-300));
        }
        CheckEntry e{"x_alpha_over_a_nondecreasing", worst >= -1e-12, worst, "min relative increment"};
        rep.entries.push_back(e);
    }
    {
        const double v = singular_integral(coef, grid, 1.0);
        const bool finite = std::isfinite(v);
        CheckEntry e{"inv_a_integrable", coef.form == Form::DivergenceWD ? finite : true, v,
                     finite ? "1/a integrable" : "1/a not integrable"};
        rep.entries.push_back(e);
    }
    {
        const double v = singular_integral(coef, grid, 0.5);
        const bool finite = std::isfinite(v);
        CheckEntry e{"inv_sqrt_a_integrable", coef.form == Form::DivergenceSD ? finite : true, v,
                     finite ? "1/sqrt(a) integrable" : "1/sqrt(a) not integrable"};
        rep.entries.push_back(e);
    }
    if (coef.form == Form::NonDivergence) {
        Eigen::VectorXd r(n + 1);
        for (int i = 0; i <= n; ++i) r[i] = coef.log_slope(grid.x[i]);
        double c = 0.0;
        for (int i = 1; i < n; ++i) {
            const double hl = grid.h[i - 1], hr = grid.h[i];
            const double rxx = 2.0 * ((r[i + 1] - r[i]) / hr - (r[i] - r[i - 1]) / hl) / (hl + hr);
            c = std::max(c, a[i] * rxx);
        }
        rep.entries.push_back({"log_slope_second_derivative", std::isfinite(c), c,
                               "smallest admissible c in (x a'/a)_xx <= c/a"});
    }
    if (coef.form == Form::DivergenceSD) {
        const double b = coef.beta_near0;
        const bool range_ok = coef.alpha > 1.0 ? (b > 1.0 && b <= coef.alpha) : (b > 0.0 && b < 1.0);
        double worst = 0.0;
        for (int i = 1; i < n && grid.x[i + 1] <= 0.1 + 1e-12; ++i) {
            const double q0 = a[i] / std::pow(grid.x[i], b);
            const double q1 = a[i + 1] / std::pow(grid.x[i + 1], b);
            worst = std::min(worst, (q1 - q0) / q0);
        }
        CheckEntry e{"near0_monotone", range_ok && worst >= -1e-12, worst, ""};
        e.detail = range_ok ? "a/x^beta nondecreasing on (0,0.1]" : "beta_near0 outside its admissible range";
        rep.entries.push_back(e);
    }
    return rep;
}

ControlRegion ControlRegion::make(double lo, double hi)
{
    const double w = hi - lo;
    return make(lo, hi, lo + 0.25 * w, hi - 0.25 * w);
}

ControlRegion ControlRegion::make(double lo, double hi, double inner_lo, double inner_hi)
{
    if (!(0.0 < lo && lo < hi && hi < 1.0)) throw std::invalid_argument("omega must satisfy 0 < lo < hi < 1");
    if (!(lo < inner_lo && inner_lo < inner_hi && inner_hi < hi))
        throw std::invalid_argument("omega_tilde must lie strictly inside omega");
    return ControlRegion{lo, hi, inner_lo, inner_hi};
}

Eigen::VectorXd ControlRegion::mask(const SpatialGrid& grid) const
{
    Eigen::VectorXd m(grid.size());
    for (int i = 0; i < grid.size(); ++i) m[i] = contains(grid.x[i]) ? 1.0 : 0.0;
    return m;
}

KernelSpec KernelSpec::zero()
{
    return KernelSpec{};
}

KernelSpec KernelSpec::constant(double kappa0, double decay, double T)
{
    KernelSpec k;
    k.variant = Variant::ConstantTimesDecay;
    k.kappa0 = kappa0;
    k.decay = decay;
    k.T = T;
    return k;
}

KernelSpec KernelSpec::separable(std::function<double(double)> k1, std::function<double(double)> k2,
                                 double decay, double T)
{
    KernelSpec k;
    k.variant = Variant::SeparableDecay;
    k.kappa0 = 1.0;
    k.k1 = std::move(k1);
    k.k2 = std::move(k2);
    k.decay = decay;
    k.T = T;
    return k;
}

KernelSpec KernelSpec::tabulated(std::vector<double> times, std::vector<Eigen::MatrixXd> values, double T)
{
    if (times.empty() || times.size() != values.size())
        throw std::invalid_argument("tabulated kernel needs one matrix per stored time");
    for (std::size_t i = 1; i < times.size(); ++i)
        if (!(times[i] > times[i - 1])) throw std::invalid_argument("tabulated kernel times must increase");
    KernelSpec k;
    k.variant = Variant::Tabulated;
    k.table_times = std::move(times);
    k.table_values = std::move(values);
    k.T = T;
    return k;
}

bool KernelSpec::is_zero() const
{
    switch (variant) {
    case Variant::Zero: return true;
    case Variant::ConstantTimesDecay: return kappa0 == 0.0;
    case Variant::SeparableDecay: return kappa0 == 0.0 || !k1 || !k2;
    case Variant::Tabulated:
        return std::all_of(table_values.begin(), table_values.end(),
                           [](const Eigen::MatrixXd& m) { return m.isZero(0.0); });
    }
    return true;
}

double KernelSpec::decay_factor(double t) const
{
    if (decay <= 0.0) return 1.0;
    if (t >= T) return 0.0;
    const double r = T - t;
    return std::exp(-decay / (r * r));
}

namespace {

Eigen::MatrixXd tabulated_at(const KernelSpec& K, double t, const SpatialGrid& grid)
{
    const auto& ts = K.table_times;
    const double tol = 1e-12 * std::max(1.0, std::abs(K.T));
    if (t < ts.front() - tol || t > ts.back() + tol)
        throw std::out_of_range("tabulated kernel has no level covering t = " + fmt(t));
    for (const auto& mtx : K.table_values)
        if (mtx.rows() != grid.size() || mtx.cols() != grid.size())
            throw std::invalid_argument("tabulated kernel does not match the spatial grid");
    if (ts.size() == 1) return K.table_values.front();
    auto it = std::upper_bound(ts.begin(), ts.end(), t);
    std::size_t j = static_cast<std::size_t>(std::distance(ts.begin(), it));
    j = std::clamp<std::size_t>(j, 1, ts.size() - 1);
    const double w = std::clamp((t - ts[j - 1]) / (ts[j] - ts[j - 1]), 0.0, 1.0);
    return (1.0 - w) * K.table_values[j - 1] + w * K.table_values[j];
}

Eigen::VectorXd sample_fn(const std::function<double(double)>& f, const SpatialGrid& grid)
{
    Eigen::VectorXd v(grid.size());
    for (int i = 0; i < grid.size(); ++i) v[i] = f(grid.x[i]);
    return v;
}

}  // namespace

Eigen::MatrixXd KernelSpec::matrix(double t, const SpatialGrid& grid) const
{
    const int N = grid.size();
    switch (variant) {
    case Variant::Zero: return Eigen::MatrixXd::Zero(N, N);
    case Variant::ConstantTimesDecay: return Eigen::MatrixXd::Constant(N, N, kappa0 * decay_factor(t));
    case Variant::SeparableDecay:
        return kappa0 * decay_factor(t) * sample_fn(k1, grid) * sample_fn(k2, grid).transpose();
    case Variant::Tabulated: return tabulated_at(*this, t, grid);
    }
    return Eigen::MatrixXd::Zero(N, N);
}

Profile apply_nonlocal(const KernelSpec& K, const Profile& y, double t, const SpatialGrid& grid, bool transpose)
{
    const int N = grid.size();
    if (y.size() != N) throw std::invalid_argument("profile size does not match the grid");
    const Eigen::VectorXd wy = grid.trapezoid_weights().cwiseProduct(y);
    switch (K.variant) {
    case KernelSpec::Variant::Zero: return Profile::Zero(N);
    case KernelSpec::Variant::ConstantTimesDecay:
        return Profile::Constant(N, K.kappa0 * K.decay_factor(t) * wy.sum());
    case KernelSpec::Variant::SeparableDecay: {
        const Eigen::VectorXd f1 = sample_fn(K.k1, grid), f2 = sample_fn(K.k2, grid);
        const double c = K.kappa0 * K.decay_factor(t);
        return transpose ? Profile(c * f2 * f1.dot(wy)) : Profile(c * f1 * f2.dot(wy));
    }
    case KernelSpec::Variant::Tabulated: {
        const Eigen::MatrixXd mtx = tabulated_at(K, t, grid);
        return transpose ? Profile(mtx.transpose() * wy) : Profile(mtx * wy);
    }
    }
    return Profile::Zero(N);
}

double weighted_inner(const Profile& u, const Profile& v, const DegenerateCoefficient& coef,
                      const SpatialGrid& grid, Weight weight)
{
    const int N = grid.size();
    if (u.size() != N || v.size() != N) throw std::invalid_argument("profile size does not match the grid");
    const Eigen::VectorXd w = grid.trapezoid_weights();
    Eigen::VectorXd F(N);
    for (int i = 1; i < N; ++i) {
        F[i] = u[i] * v[i];
        if (weight == Weight::InvA) F[i] /= coef(grid.x[i]);
        if (!std::isfinite(F[i])) throw std::domain_error("non-finite integrand at node " + std::to_string(i));
    }
    if (weight == Weight::One) {
        F[0] = u[0] * v[0];
    } else {
        F[0] = (u[0] == 0.0 && v[0] == 0.0) ? 0.0 : F[1];
    }
    return w.dot(F);
}

Eigen::VectorXd inverse_coefficient_weights(const DegenerateCoefficient& coef, const SpatialGrid& grid)
{
    const int n = grid.n;
    Eigen::VectorXd q = Eigen::VectorXd::Zero(n + 1);
    static const auto gl = gauss_legendre(8);
    for (int i = 1; i < n; ++i) {
        const double xl = grid.x[i], hw = grid.h[i];
        for (std::size_t k = 0; k < gl.first.size(); ++k) {
            const double r = 0.5 * (gl.first[k] + 1.0);
            const double wk = 0.5 * gl.second[k] * hw / coef(xl + r * hw);
            q[i] += (1.0 - r) * wk;
            q[i + 1] += r * wk;
        }
    }
    const double x1 = grid.x[1], a1 = coef(x1), al = coef.alpha;
    if (al >= 2.0) {
        q[0] = kInf;
        q[1] = kInf;
    } else {
        q[1] += x1 / (a1 * (2.0 - al));
        q[0] = al >= 1.0 ? kInf : x1 / (a1 * (1.0 - al) * (2.0 - al));
    }
    return q;
}

KernelSup kernel_weighted_sup(const KernelSpec& K, const DegenerateCoefficient& coef, const SpatialGrid& grid,
                              const TimeGrid& tgrid, double c_exp, double s, KernelNorm norm)
{
    KernelSup out;
    if (K.is_zero()) return out;

    const Eigen::VectorXd w = grid.trapezoid_weights();
    const Eigen::VectorXd q = norm == KernelNorm::SquaredInvA ? inverse_coefficient_weights(coef, grid) : w;
    auto spatial = [&](const Eigen::MatrixXd& S) {
        if (norm == KernelNorm::SupAbs) return S.cwiseAbs().maxCoeff();
        const Eigen::VectorXd G = S.cwiseAbs2() * w;
        double total = 0.0;
        for (int i = 0; i < G.size(); ++i) {
            if (G[i] == 0.0) continue;
            total += q[i] * G[i];
        }
        return total;
    };

    if (K.variant == KernelSpec::Variant::Tabulated) {
        out.lower_bound = true;
        double best = 0.0;
        for (int k = 0; k <= tgrid.m; ++k) {
            const double t = tgrid.time(k);
            if (t >= tgrid.T) continue;
            const double r = tgrid.T - t;
            best = std::max(best, std::exp(c_exp * s / (r * r)) * spatial(K.matrix(t, grid)));
        }
        out.value = best;
        out.infinite = !std::isfinite(best);
        return out;
    }

    KernelSpec shape = K;
    shape.decay = 0.0;
    const double ns = spatial(shape.matrix(tgrid.start, grid));
    if (ns == 0.0) return out;
    const double power = norm == KernelNorm::SupAbs ? 1.0 : 2.0;
    const double e = c_exp * s - power * K.decay;
    if (e > 0.0 || !std::isfinite(ns)) {
        out.infinite = true;
        out.value = kInf;
        return out;
    }
    const double L = tgrid.T - tgrid.start;
    out.value = ns * std::exp(e / (L * L));
    return out;
}

}  // namespace degen
