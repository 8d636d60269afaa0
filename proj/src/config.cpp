#include "truncllt/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "truncllt/expr.hpp"

namespace truncllt {

namespace {

struct RawConfig {
    std::map<std::string, std::string> kv;
    std::vector<std::string> order;
};

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

RawConfig tokenize(const std::string& text, std::vector<std::string>& errs) {
    RawConfig raw;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            errs.push_back("line " + std::to_string(lineno) + ": expected key = value");
            continue;
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty() || val.empty()) {
            errs.push_back("line " + std::to_string(lineno) + ": empty key or value");
            continue;
        }
        if (raw.kv.count(key))
            errs.push_back("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        raw.kv[key] = val;
        raw.order.push_back(key);
    }
    return raw;
}

class Reader {
public:
    Reader(RawConfig raw, std::vector<std::string>& errs) : raw_(std::move(raw)), errs_(errs) {}

    bool has(const std::string& key) const { return raw_.kv.count(key) > 0; }

    std::string str(const std::string& key, const std::string& dflt) {
        mark(key);
        auto it = raw_.kv.find(key);
        return it == raw_.kv.end() ? dflt : it->second;
    }

    double num(const std::string& key, double dflt) {
        mark(key);
        auto it = raw_.kv.find(key);
        if (it == raw_.kv.end()) return dflt;
        try {
            std::size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            errs_.push_back(key + ": not a number: '" + it->second + "'");
            return dflt;
        }
    }

    long integer(const std::string& key, long dflt) {
        const double v = num(key, static_cast<double>(dflt));
        if (v != std::floor(v)) errs_.push_back(key + ": expected an integer");
        return static_cast<long>(v);
    }

    bool flag(const std::string& key, bool dflt) {
        mark(key);
        auto it = raw_.kv.find(key);
        if (it == raw_.kv.end()) return dflt;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        errs_.push_back(key + ": expected true/false");
        return dflt;
    }

    Vec vec(const std::string& key, const Vec& dflt) {
        mark(key);
        auto it = raw_.kv.find(key);
        if (it == raw_.kv.end()) return dflt;
        std::string s = trim(it->second);
        if (s.size() < 2 || s.front() != '[' || s.back() != ']') {
            errs_.push_back(key + ": expected [a, b, ...]");
            return dflt;
        }
        s = s.substr(1, s.size() - 2);
        Vec out;
        std::istringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;
            try {
                out.push_back(std::stod(item));
            } catch (...) {
                errs_.push_back(key + ": bad vector entry '" + item + "'");
            }
        }
        return out;
    }

    // every key consumed by the schema must be marked; leftovers are rejected
    void finish_unknown_keys() {
        for (const auto& key : raw_.order)
            if (!seen_.count(key)) errs_.push_back("unknown key '" + key + "'");
    }

    const std::map<std::string, std::string>& all() const { return raw_.kv; }

private:
    void mark(const std::string& key) { seen_.insert(key); }
    RawConfig raw_;
    std::vector<std::string>& errs_;
    std::set<std::string> seen_;
};

}  // namespace

std::vector<Vec> RunConfig::ygrid_points(std::size_t d) const {
    std::vector<Vec> out;
    if (d == 1) {
        for (double y : ygrid) out.push_back(Vec{y});
        return out;
    }
    const auto& g2 = ygrid2.empty() ? ygrid : ygrid2;
    for (double y1 : ygrid)
        for (double y2 : g2) out.push_back(Vec{y1, y2});
    return out;
}

RunConfig parse_config_text(const std::string& text) {
    std::vector<std::string> errs;
    Reader rd(tokenize(text, errs), errs);
    RunConfig cfg;
    cfg.raw_text = text;

    // model
    cfg.model_name = rd.str("model.name", "");
    const long d = rd.integer("model.d", 1);
    if (d < 1) errs.push_back("model.d: must be >= 1");
    const bool custom = rd.has("model.custom.d");
    if (cfg.model_name.empty() && !custom) errs.push_back("model.name or model.custom.* required");
    if (!cfg.model_name.empty() && custom)
        errs.push_back("model.name and model.custom.* are mutually exclusive");
    if (custom) {
        const long cd = rd.integer("model.custom.d", 1);
        const double gamma = rd.num("model.custom.gamma", 1.0);
        std::vector<std::string> a_exprs, b_exprs;
        for (long i = 1; i <= cd; ++i) {
            const std::string k = "model.custom.a." + std::to_string(i);
            if (!rd.has(k)) errs.push_back(k + ": missing drift expression");
            a_exprs.push_back(rd.str(k, "0"));
        }
        for (long i = 1; i <= cd; ++i)
            for (long j = 1; j <= cd; ++j) {
                const std::string k =
                    "model.custom.b." + std::to_string(i) + "." + std::to_string(j);
                if (!rd.has(k)) errs.push_back(k + ": missing diffusion expression");
                b_exprs.push_back(rd.str(k, i == j ? "1" : "0"));
            }
        if (errs.empty()) {
            try {
                cfg.setup.entry.name = "custom";
                cfg.setup.entry.spec = model_from_expressions(
                    static_cast<std::size_t>(cd), a_exprs, b_exprs, gamma);
            } catch (const std::exception& e) {
                errs.push_back(std::string("model.custom: ") + e.what());
            }
        }
    } else if (!cfg.model_name.empty()) {
        try {
            cfg.setup.entry = model_by_name(cfg.model_name, static_cast<std::size_t>(d));
        } catch (const std::exception& e) {
            errs.push_back(std::string("model.name: ") + e.what());
        }
    }
    const std::size_t dim = cfg.setup.entry.spec.d ? cfg.setup.entry.spec.d : 1;

    // decomposition
    auto& dc = cfg.setup.decomp;
    dc.alpha = rd.num("decomp.alpha", 1.0);
    if (!(dc.alpha > 0.0 && dc.alpha <= 1.0)) errs.push_back("decomp.alpha: must lie in (0, 1]");
    dc.ball.center = rd.vec("decomp.ball.center", Vec(dim, 0.0));
    dc.ball.radius = rd.num("decomp.ball.radius", std::sqrt(static_cast<double>(dim) + 2.0));
    if (dc.ball.radius <= 0.0) errs.push_back("decomp.ball.radius: must be > 0");
    if (dc.ball.center.size() != dim)
        errs.push_back("decomp.ball.center: dimension mismatch with the model");
    const std::string nukind = rd.str("decomp.nu.kind", "none");
    const Vec nupar = rd.vec("decomp.nu.params", {});
    if (nukind == "none") {
        dc.nu.kind = NuSpec::Kind::None;
    } else if (nukind == "point") {
        dc.nu.kind = NuSpec::Kind::Point;
        dc.nu.point = nupar;
        if (nupar.size() != dim) errs.push_back("decomp.nu.params: point needs d entries");
    } else if (nukind == "uniform") {
        dc.nu.kind = NuSpec::Kind::Uniform;
        if (nupar.size() != 2 * dim) {
            errs.push_back("decomp.nu.params: uniform needs lo_1..lo_d hi_1..hi_d");
        } else {
            dc.nu.lo.assign(nupar.begin(), nupar.begin() + dim);
            dc.nu.hi.assign(nupar.begin() + dim, nupar.end());
        }
    } else if (nukind == "ball") {
        dc.nu.kind = NuSpec::Kind::Ball;
        if (nupar.size() != dim + 1) {
            errs.push_back("decomp.nu.params: ball needs center_1..center_d radius");
        } else {
            dc.nu.ball_center.assign(nupar.begin(), nupar.begin() + dim);
            dc.nu.ball_radius = nupar.back();
            if (dc.nu.ball_radius <= 0.0) errs.push_back("decomp.nu.params: radius must be > 0");
        }
    } else if (nukind == "pareto") {
        dc.nu.kind = NuSpec::Kind::Pareto;
        if (nupar.size() != 1) {
            errs.push_back("decomp.nu.params: pareto needs [scale]");
        } else {
            dc.nu.xm = nupar[0];
        }
    } else {
        errs.push_back("decomp.nu.kind: unknown kind '" + nukind + "'");
    }
    dc.kappa = static_cast<int>(rd.integer("decomp.kappa", 4));
    if (dc.kappa < 4) errs.push_back("decomp.kappa: must be >= 4");
    dc.exp_moment = rd.flag("decomp.exp_moment", false);
    dc.delta = rd.num("decomp.delta", 1.0);
    if (dc.nu.kind == NuSpec::Kind::Pareto) dc.nu.exponent = dc.kappa + 0.5;
    if (dc.alpha < 1.0 && dc.nu.kind == NuSpec::Kind::None)
        errs.push_back("decomp.nu.kind: required when alpha < 1");

    // scheme
    auto& sch = cfg.setup.scheme;
    sch.n = static_cast<int>(rd.integer("scheme.n", 64));
    if (sch.n < 1) errs.push_back("scheme.n: must be >= 1");
    sch.t = rd.num("scheme.t", 1.0);
    if (!(sch.t > 0.0 && sch.t <= 1.0)) errs.push_back("scheme.t: must lie in (0, 1]");
    sch.x0 = rd.vec("scheme.x0", Vec(dim, 0.0));
    if (sch.x0.size() != dim) errs.push_back("scheme.x0: dimension mismatch with the model");
    sch.paths = rd.integer("scheme.paths", 100000);
    if (sch.paths < 1) errs.push_back("scheme.paths: must be >= 1");
    sch.c = rd.num("scheme.c", -1.0);
    if (rd.has("scheme.c") && !(sch.c > 0.0 && sch.c < dc.alpha))
        errs.push_back("scheme.c: must lie in (0, alpha)");
    sch.p = static_cast<int>(rd.integer("scheme.p", -1));
    if (rd.has("scheme.p") && sch.p < 1) errs.push_back("scheme.p: must be >= 1");
    sch.seed = static_cast<std::uint64_t>(rd.integer("scheme.seed", 1));
    if (const char* env = std::getenv("TRUNCLLT_SEED")) {
        try {
            sch.seed = std::stoull(env);
        } catch (...) {
            errs.push_back("TRUNCLLT_SEED: not an integer");
        }
    }

    // estimator
    cfg.ygrid = rd.vec("estimator.ygrid", {});
    cfg.ygrid2 = rd.vec("estimator.ygrid2", {});
    const Vec autogrid = rd.vec("estimator.ygrid_auto", {});
    if (!autogrid.empty()) {
        if (autogrid.size() != 3 || autogrid[2] < 2) {
            errs.push_back("estimator.ygrid_auto: expected [min, max, count>=2]");
        } else {
            cfg.ygrid.clear();
            const int cnt = static_cast<int>(autogrid[2]);
            for (int i = 0; i < cnt; ++i)
                cfg.ygrid.push_back(autogrid[0] + (autogrid[1] - autogrid[0]) * i / (cnt - 1));
        }
    }
    cfg.orthant_mode = rd.str("estimator.orthant", "auto");
    if (cfg.orthant_mode != "auto") {
        if (cfg.orthant_mode.size() != dim ||
            cfg.orthant_mode.find_first_not_of("01") != std::string::npos)
            errs.push_back("estimator.orthant: expected 'auto' or a 0/1 pattern of length d");
    }
    cfg.grad_coord = static_cast<std::size_t>(rd.integer("estimator.grad_coord", 1)) - 1;
    if (cfg.grad_coord >= dim) errs.push_back("estimator.grad_coord: out of range");

    // experiment extras
    for (double v : rd.vec("experiment.n_ladder", {}))
        cfg.n_ladder.push_back(static_cast<int>(v));
    cfg.t_grid = rd.vec("experiment.t_grid", {});
    cfg.levels = rd.vec("experiment.levels", {});
    cfg.lambdas = rd.vec("experiment.lambdas", {});
    cfg.wkind = rd.str("experiment.wkind", "bump");
    if (cfg.wkind != "bump" && cfg.wkind != "lebesgue")
        errs.push_back("experiment.wkind: bump or lebesgue");
    cfg.x_prime = rd.vec("experiment.x_prime", {});

    cfg.setup.workers = static_cast<int>(rd.integer("workers", 1));
    if (cfg.setup.workers < 1) errs.push_back("workers: must be >= 1");
    cfg.out_dir = rd.str("out", "out");
    cfg.setup.dump_weights_path = rd.str("dump_weights", "");

    rd.finish_unknown_keys();
    if (!errs.empty()) throw ConfigError(std::move(errs));
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot read config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

}  // namespace truncllt
