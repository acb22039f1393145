#include "degen/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace degen {

using Json = nlohmann::ordered_json;

ScenarioError::ScenarioError(const std::string& origin, int line, const std::string& message)
    : std::runtime_error(origin + ":" + std::to_string(line) + ": " + message), line_(line)
{
}

namespace {

constexpr double kPi = std::numbers::pi;

class Reader {
public:
    Reader(std::string text, std::string origin, std::string base_dir)
        : text_(std::move(text)), origin_(std::move(origin)), base_(std::move(base_dir))
    {
    }

    [[noreturn]] void fail(const std::vector<std::string>& path, const std::string& msg) const
    {
        std::string where;
        for (const auto& p : path) where += (where.empty() ? "" : ".") + p;
        throw ScenarioError(origin_, line_of(path), (where.empty() ? "" : "'" + where + "': ") + msg);
    }

    // Line of the last key of path, following the keys in document order.
    int line_of(const std::vector<std::string>& path) const
    {
        if (text_.empty()) return 0;
        std::size_t pos = 0;
        for (const auto& key : path) {
            const std::size_t p = text_.find("\"" + key + "\"", pos);
            if (p == std::string::npos) break;
            pos = p;
        }
        return 1 + static_cast<int>(std::count(text_.begin(), text_.begin() + pos, '\n'));
    }

    void only(const Json& obj, const std::vector<std::string>& path, std::initializer_list<const char*> keys) const
    {
        if (!obj.is_object()) fail(path, "expected an object");
        const std::set<std::string> allowed(keys.begin(), keys.end());
        for (const auto& [k, v] : obj.items()) {
            if (!allowed.count(k)) {
                auto p = path;
                p.push_back(k);
                fail(p, "unknown key");
            }
        }
    }

    double number(const Json& obj, const std::vector<std::string>& path, const std::string& key, double def) const
    {
        if (!obj.contains(key)) return def;
        auto p = path;
        p.push_back(key);
        if (!obj[key].is_number()) fail(p, "expected a number");
        const double v = obj[key].get<double>();
        if (!std::isfinite(v)) fail(p, "expected a finite number");
        return v;
    }

    int integer(const Json& obj, const std::vector<std::string>& path, const std::string& key, int def) const
    {
        if (!obj.contains(key)) return def;
        auto p = path;
        p.push_back(key);
        if (!obj[key].is_number_integer()) fail(p, "expected an integer");
        return obj[key].get<int>();
    }

    std::string string(const Json& obj, const std::vector<std::string>& path, const std::string& key,
                       const std::string& def) const
    {
        if (!obj.contains(key)) return def;
        auto p = path;
        p.push_back(key);
        if (!obj[key].is_string()) fail(p, "expected a string");
        return obj[key].get<std::string>();
    }

    std::pair<double, double> interval(const Json& obj, const std::vector<std::string>& path, const std::string& key,
                                       std::pair<double, double> def) const
    {
        if (!obj.contains(key)) return def;
        auto p = path;
        p.push_back(key);
        const Json& v = obj[key];
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
            fail(p, "expected [lo, hi]");
        const double lo = v[0].get<double>(), hi = v[1].get<double>();
        if (!(lo < hi)) fail(p, "expected lo < hi");
        return {lo, hi};
    }

    std::string resolve(const std::string& path) const
    {
        const std::filesystem::path p(path);
        return p.is_absolute() ? path : (std::filesystem::path(base_) / p).string();
    }

    const std::string& origin() const { return origin_; }

private:
    std::string text_;
    std::string origin_;
    std::string base_;
};

std::vector<std::vector<double>> read_csv_numbers(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        bool numeric = true;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
            } catch (const std::exception&) {
                numeric = false;
                break;
            }
        }
        if (numeric && !row.empty()) rows.push_back(std::move(row));
    }
    return rows;
}

double bump(double x, double center, double radius)
{
    const double r = (x - center) / radius;
    return std::abs(r) < 1.0 ? std::exp(-1.0 / (1.0 - r * r)) : 0.0;
}

void parse_into(Scenario& sc, const Reader& rd)
{
    const Json& doc = sc.document;
    rd.only(doc, {}, {"form", "coefficient", "omega", "omega_tilde", "T", "n", "m", "grid_ratio", "y0", "f", "kernel",
                      "params", "solver", "verify", "seed"});

    Form form;
    try {
        form = form_from_string(rd.string(doc, {}, "form", "nondiv"));
    } catch (const std::invalid_argument& e) {
        rd.fail({"form"}, e.what());
    }

    const Json coef = doc.value("coefficient", Json::object());
    rd.only(coef, {"coefficient"}, {"type", "alpha", "scale", "path"});
    const std::string ctype = rd.string(coef, {"coefficient"}, "type", "power");
    const double alpha = rd.number(coef, {"coefficient"}, "alpha", 0.5);
    if (ctype == "power") {
        const double scale = rd.number(coef, {"coefficient"}, "scale", 1.0);
        if (!(scale > 0.0)) rd.fail({"coefficient", "scale"}, "scale must be positive");
        sc.coef = DegenerateCoefficient::power(form, alpha, scale);
    } else if (ctype == "table") {
        const std::string path = rd.string(coef, {"coefficient"}, "path", "");
        if (path.empty()) rd.fail({"coefficient", "path"}, "table coefficient needs a path");
        std::vector<std::vector<double>> rows;
        try {
            rows = read_csv_numbers(rd.resolve(path));
        } catch (const std::exception& e) {
            rd.fail({"coefficient", "path"}, e.what());
        }
        std::vector<double> xs, as;
        for (const auto& r : rows) {
            if (r.size() < 2) rd.fail({"coefficient", "path"}, "table rows need x,a");
            xs.push_back(r[0]);
            as.push_back(r[1]);
        }
        try {
            sc.coef = DegenerateCoefficient::tabulated(form, alpha, xs, as);
        } catch (const std::invalid_argument& e) {
            rd.fail({"coefficient", "path"}, e.what());
        }
    } else {
        rd.fail({"coefficient", "type"}, "expected 'power' or 'table'");
    }

    const auto [lo, hi] = rd.interval(doc, {}, "omega", {0.3, 0.8});
    if (!(lo > 0.0 && hi < 1.0)) rd.fail({"omega"}, "omega must lie inside (0, 1)");
    if (doc.contains("omega_tilde")) {
        const auto [ilo, ihi] = rd.interval(doc, {}, "omega_tilde", {0.0, 0.0});
        if (!(ilo > lo && ihi < hi)) rd.fail({"omega_tilde"}, "omega_tilde must lie inside omega");
        sc.region = ControlRegion::make(lo, hi, ilo, ihi);
    } else {
        sc.region = ControlRegion::make(lo, hi);
    }

    const double T = rd.number(doc, {}, "T", 1.0);
    if (!(T > 0.0)) rd.fail({"T"}, "T must be positive");
    const int n = rd.integer(doc, {}, "n", 64), m = rd.integer(doc, {}, "m", 128);
    if (n < 4) rd.fail({"n"}, "n must be at least 4");
    if (m < 4) rd.fail({"m"}, "m must be at least 4");
    const double ratio = rd.number(doc, {}, "grid_ratio", 1.0);
    if (!(ratio > 0.0 && ratio <= 1.0)) rd.fail({"grid_ratio"}, "grid_ratio must lie in (0, 1]");
    sc.grid = SpatialGrid::clustered(n, ratio);
    sc.tgrid = TimeGrid::make(T, m);

    sc.y0 = Profile::Zero(sc.grid.size());
    if (doc.contains("y0")) {
        const Json& y = doc["y0"];
        if (y.is_string()) {
            const std::string name = y.get<std::string>();
            if (name == "sin") {
                for (int i = 0; i <= n; ++i) sc.y0[i] = std::sin(kPi * sc.grid.x[i]);
            } else if (name == "jump") {
                for (int i = 0; i <= n; ++i) sc.y0[i] = sc.grid.x[i] > 0.2 && sc.grid.x[i] < 0.6 ? 1.0 : 0.0;
            } else if (name != "zero") {
                rd.fail({"y0"}, "expected 'sin', 'jump', 'zero' or an object");
            }
        } else {
            rd.only(y, {"y0"}, {"sine", "jump"});
            if (y.contains("sine")) {
                const Json& c = y["sine"];
                if (!c.is_array()) rd.fail({"y0", "sine"}, "expected an array of coefficients");
                for (std::size_t k = 0; k < c.size(); ++k) {
                    if (!c[k].is_number()) rd.fail({"y0", "sine"}, "expected numbers");
                    for (int i = 0; i <= n; ++i) sc.y0[i] += c[k].get<double>() * std::sin((k + 1) * kPi * sc.grid.x[i]);
                }
            }
            if (y.contains("jump")) {
                const auto [jlo, jhi] = rd.interval(y, {"y0"}, "jump", {0.0, 0.0});
                for (int i = 0; i <= n; ++i) sc.y0[i] += sc.grid.x[i] > jlo && sc.grid.x[i] < jhi ? 1.0 : 0.0;
            }
        }
    } else {
        for (int i = 0; i <= n; ++i) sc.y0[i] = std::sin(kPi * sc.grid.x[i]);
    }

    if (doc.contains("f") && !(doc["f"].is_string() && doc["f"] == "zero")) {
        const Json& f = doc["f"];
        if (f.is_string()) rd.fail({"f"}, "expected 'zero' or an object");
        rd.only(f, {"f"}, {"amplitude", "decay"});
        const double amp = rd.number(f, {"f"}, "amplitude", 1.0), decay = rd.number(f, {"f"}, "decay", 0.0);
        if (decay < 0.0) rd.fail({"f", "decay"}, "decay must be nonnegative");
        sc.f = Field::Zero(sc.tgrid.levels(), sc.grid.size());
        for (int k = 0; k <= sc.tgrid.m; ++k) {
            const double r = T - sc.tgrid.time(k);
            const double g = decay == 0.0 ? 1.0 : (r > 0.0 ? std::exp(-decay / (r * r)) : 0.0);
            for (int i = 0; i <= n; ++i) sc.f(k, i) = amp * g * std::sin(kPi * sc.grid.x[i]);
        }
    }

    sc.kernel_json = doc.value("kernel", Json{{"type", "zero"}});
    rd.only(sc.kernel_json, {"kernel"}, {"type", "kappa0", "decay", "center", "radius", "path"});
    sc.kernel_type = rd.string(sc.kernel_json, {"kernel"}, "type", "zero");
    if (sc.kernel_type != "zero" && sc.kernel_type != "constant" && sc.kernel_type != "bump" &&
        sc.kernel_type != "table")
        rd.fail({"kernel", "type"}, "expected 'zero', 'constant', 'bump' or 'table'");
    if (sc.kernel_json.contains("decay")) {
        const Json& d = sc.kernel_json["decay"];
        if (d.is_string()) {
            const std::string e = d.get<std::string>();
            bool ok = e.rfind("c0s", 0) == 0 || e.rfind("c1s", 0) == 0;
            if (ok && e.size() > 3) {
                try {
                    std::size_t used = 0;
                    std::stod(e.substr(3), &used);
                    ok = used == e.size() - 3 && e[3] == '+';
                } catch (const std::exception&) {
                    ok = false;
                }
            }
            if (!ok) rd.fail({"kernel", "decay"}, "expected a number, 'c0s', 'c1s' or 'c0s+<number>'");
        } else if (!d.is_number()) {
            rd.fail({"kernel", "decay"}, "expected a number or an expression string");
        }
    }
    if (sc.kernel_type == "table") {
        const std::string path = rd.string(sc.kernel_json, {"kernel"}, "path", "");
        if (path.empty()) rd.fail({"kernel", "path"}, "table kernel needs a path");
        sc.kernel_json["path"] = rd.resolve(path);
    }

    const Json params = doc.value("params", Json::object());
    rd.only(params, {"params"}, {"s", "lambda", "beta", "rho", "epsilon", "c", "d"});
    ParameterOverrides& ov = sc.overrides;
    ov.s = rd.number(params, {"params"}, "s", 0.0);
    ov.lambda = rd.number(params, {"params"}, "lambda", 0.0);
    ov.beta = rd.number(params, {"params"}, "beta", 0.0);
    ov.rho = rd.number(params, {"params"}, "rho", 0.0);
    ov.epsilon = rd.number(params, {"params"}, "epsilon", 0.0);
    ov.c = rd.number(params, {"params"}, "c", 0.0);
    ov.d = rd.number(params, {"params"}, "d", 0.0);
    for (const auto& [k, v] : params.items())
        if (v.get<double>() <= 0.0) rd.fail({"params", k}, "parameters must be positive");

    const Json solver = doc.value("solver", Json::object());
    rd.only(solver, {"solver"}, {"stepper", "verify_stepper", "cross_check", "tol", "max_iter", "preconditioner",
                                 "stall_iterations", "fp_tol", "max_fp", "t0", "final_ratio_threshold"});
    SolverConfig& so = sc.solver;
    try {
        so.stepper = stepper_from_string(rd.string(solver, {"solver"}, "stepper", "euler"));
    } catch (const std::invalid_argument& e) {
        rd.fail({"solver", "stepper"}, e.what());
    }
    try {
        so.hum.verify_stepper = stepper_from_string(rd.string(solver, {"solver"}, "verify_stepper", "cn"));
    } catch (const std::invalid_argument& e) {
        rd.fail({"solver", "verify_stepper"}, e.what());
    }
    if (solver.contains("cross_check")) {
        if (!solver["cross_check"].is_boolean()) rd.fail({"solver", "cross_check"}, "expected true or false");
        so.hum.cross_check = solver["cross_check"].get<bool>();
    }
    so.hum.cg.tol = rd.number(solver, {"solver"}, "tol", 1e-8);
    so.hum.cg.max_iter = rd.integer(solver, {"solver"}, "max_iter", 5000);
    so.hum.cg.stall_iterations = rd.integer(solver, {"solver"}, "stall_iterations", 200);
    if (!(so.hum.cg.tol > 0.0)) rd.fail({"solver", "tol"}, "tolerance must be positive");
    if (so.hum.cg.max_iter < 0) rd.fail({"solver", "max_iter"}, "max_iter must be nonnegative");
    const std::string pre = rd.string(solver, {"solver"}, "preconditioner", "factorized");
    if (pre == "none") {
        so.hum.cg.preconditioner = Preconditioner::None;
    } else if (pre == "jacobi") {
        so.hum.cg.preconditioner = Preconditioner::Jacobi;
    } else if (pre == "factorized") {
        so.hum.cg.preconditioner = Preconditioner::Factorized;
    } else {
        rd.fail({"solver", "preconditioner"}, "expected 'none', 'jacobi' or 'factorized'");
    }
    so.fp_tol = rd.number(solver, {"solver"}, "fp_tol", 1e-6);
    so.max_fp = rd.integer(solver, {"solver"}, "max_fp", 30);
    if (so.max_fp < 1) rd.fail({"solver", "max_fp"}, "max_fp must be at least 1");
    const double t0 = rd.number(solver, {"solver"}, "t0", 0.25 * T);
    if (!(t0 > 0.0 && t0 < T)) rd.fail({"solver", "t0"}, "t0 must lie in (0, T)");
    so.t0_fraction = t0 / T;
    so.final_ratio_threshold = rd.number(solver, {"solver"}, "final_ratio_threshold", 1e-2);

    const Json verify = doc.value("verify", Json::object());
    rd.only(verify, {"verify"}, {"members", "observability_members", "hardy_members", "modes", "s_points", "ratio_cap",
                                 "omega1", "omega2"});
    VerifyConfig& vc = sc.verify;
    vc.members = rd.integer(verify, {"verify"}, "members", 10);
    vc.observability_members = rd.integer(verify, {"verify"}, "observability_members", 20);
    vc.hardy_members = rd.integer(verify, {"verify"}, "hardy_members", 50);
    vc.modes = rd.integer(verify, {"verify"}, "modes", 6);
    vc.s_points = rd.integer(verify, {"verify"}, "s_points", 5);
    vc.ratio_cap = rd.number(verify, {"verify"}, "ratio_cap", 1e12);
    if (vc.members < 1 || vc.observability_members < 1 || vc.modes < 1 || vc.s_points < 1)
        rd.fail({"verify"}, "ensemble sizes, modes and s_points must be positive");
    std::tie(vc.omega1_lo, vc.omega1_hi) = rd.interval(verify, {"verify"}, "omega1", {0.0, 0.0});
    std::tie(vc.omega2_lo, vc.omega2_hi) = rd.interval(verify, {"verify"}, "omega2", {0.0, 0.0});

    if (doc.contains("seed")) {
        if (!doc["seed"].is_number_unsigned()) rd.fail({"seed"}, "expected a nonnegative integer");
        sc.seed = doc["seed"].get<std::uint64_t>();
    }
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::string& origin, const std::string& base_dir)
{
    Scenario sc;
    sc.origin = origin;
    try {
        sc.document = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        const std::size_t pos = std::min<std::size_t>(e.byte, text.size());
        const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + (pos > 0 ? pos - 1 : 0), '\n'));
        std::string msg = e.what();
        const std::size_t cut = msg.find("syntax error");
        throw ScenarioError(origin, line, cut == std::string::npos ? msg : msg.substr(cut));
    }
    parse_into(sc, Reader(text, origin, base_dir));
    return sc;
}

Scenario load_scenario(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ScenarioError(path, 0, "cannot open config file");
    std::stringstream ss;
    ss << in.rdbuf();
    const std::filesystem::path p(path);
    return parse_scenario(ss.str(), path, p.has_parent_path() ? p.parent_path().string() : ".");
}

Scenario with_value(const Scenario& sc, const std::string& param, double value)
{
    Json doc = sc.document;
    if (param == "s" || param == "epsilon") {
        doc["params"][param] = value;
    } else if (param == "alpha") {
        doc["coefficient"]["alpha"] = value;
    } else if (param == "n" || param == "m") {
        if (value != std::floor(value)) throw std::invalid_argument(param + " must be an integer");
        doc[param] = static_cast<int>(value);
    } else {
        throw std::invalid_argument("unknown sweep parameter '" + param + "' (expected s, epsilon, alpha, n or m)");
    }
    Scenario out;
    out.origin = sc.origin;
    out.document = doc;
    parse_into(out, Reader("", sc.origin, "."));
    return out;
}

ControlProblem build_problem(const Scenario& sc)
{
    ControlProblem pb;
    pb.coef = sc.coef;
    pb.region = sc.region;
    pb.grid = sc.grid;
    pb.tgrid = sc.tgrid;
    pb.params = choose_parameters(sc.coef, sc.region, sc.grid, sc.tgrid, branch_of(sc.coef.form), sc.overrides);

    const Json& k = sc.kernel_json;
    const double T = sc.tgrid.T;
    double decay = 0.0;
    if (k.contains("decay")) {
        if (k["decay"].is_number()) {
            decay = k["decay"].get<double>();
        } else {
            const std::string e = k["decay"].get<std::string>();
            const double c = e[1] == '0' ? pb.params.c0 : pb.params.c1;
            decay = c * pb.params.s + (e.size() > 3 ? std::stod(e.substr(4)) : 0.0);
        }
    }
    const double kappa0 = k.value("kappa0", 0.0);
    if (sc.kernel_type == "constant") {
        pb.kernel = KernelSpec::constant(kappa0, decay, T);
    } else if (sc.kernel_type == "bump") {
        const double c = k.value("center", 0.5 * (sc.region.lo + sc.region.hi));
        const double r = k.value("radius", 0.4 * (sc.region.hi - sc.region.lo));
        auto b = [c, r](double x) { return bump(x, c, r); };
        pb.kernel = KernelSpec::separable(b, b, decay, T);
        pb.kernel.kappa0 = kappa0;
        pb.kernel.support_in_omega = c - r >= sc.region.lo && c + r <= sc.region.hi;
    } else if (sc.kernel_type == "table") {
        const auto rows = read_csv_numbers(k["path"].get<std::string>());
        const int N = sc.grid.size();
        if (static_cast<int>(rows.size()) != N) throw std::invalid_argument("kernel table must have n+1 rows");
        Eigen::MatrixXd K(N, N);
        for (int i = 0; i < N; ++i) {
            if (static_cast<int>(rows[i].size()) != N) throw std::invalid_argument("kernel table must have n+1 columns");
            for (int j = 0; j < N; ++j) K(i, j) = rows[i][j];
        }
        pb.kernel = KernelSpec::tabulated({0.0}, {K}, T);
    } else {
        pb.kernel = KernelSpec::zero();
    }
    return pb;
}

}  // namespace degen
