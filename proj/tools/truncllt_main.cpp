// Command-line front end: configuration parsing, subcommand dispatch,
// deterministic seeding and report emission. Data goes to files, progress
// goes to stderr, exit codes: 0 success, 1 estimate/check failure,
// 2 schema violation, 3 unreadable file.

#include <cstdio>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "truncllt/check.hpp"
#include "truncllt/config.hpp"
#include "truncllt/experiments.hpp"
#include "truncllt/io.hpp"
#include "truncllt/parallel.hpp"

using namespace truncllt;

namespace {

std::vector<std::string> density_header(std::size_t d) {
    std::vector<std::string> h;
    for (std::size_t i = 1; i <= d; ++i) h.push_back("y_" + std::to_string(i));
    h.insert(h.end(), {"q_hat", "se", "orthant", "n_paths", "n_on_xi", "remainder_hat",
                       "remainder_bound"});
    return h;
}

void write_density_csv(const std::string& path, const std::vector<DensityEstimate>& ests,
                       std::size_t d) {
    CsvWriter csv(path);
    csv.row(density_header(d));
    for (const auto& de : ests) {
        std::vector<std::string> row;
        for (std::size_t i = 0; i < d; ++i) row.push_back(csv_number(de.y[i]));
        std::string orth;
        for (int a : de.orthant) orth += a ? '1' : '0';
        row.push_back(csv_number(de.q_hat));
        row.push_back(csv_number(de.se));
        row.push_back(orth);
        row.push_back(std::to_string(de.n_paths));
        row.push_back(std::to_string(de.n_on_xi));
        row.push_back(csv_number(de.remainder_hat));
        row.push_back(csv_number(de.remainder_bound));
        csv.row(row);
    }
}

int cmd_simulate(const RunConfig& cfg, const std::string& dir) {
    const auto& setup = cfg.setup;
    const int nstar = n_star(setup.entry.spec, setup.decomp);
    CsvWriter csv(dir + "/paths.csv");
    std::vector<std::string> h{"path", "seed_tag", "theta", "eps_count", "witness"};
    for (std::size_t i = 1; i <= setup.entry.spec.d; ++i) h.push_back("x_" + std::to_string(i));
    csv.row(h);
    for (long i = 0; i < setup.scheme.paths; ++i) {
        GridPath path = simulate_path(setup.entry.spec, setup.decomp, setup.scheme.x0,
                                      setup.scheme.n, setup.scheme.seed,
                                      static_cast<std::uint64_t>(i));
        const Vec xt = interpolate(path, setup.scheme.t);
        std::vector<std::string> row{
            std::to_string(i), std::to_string(path.seed_tag), std::to_string(path.theta),
            std::to_string(path.eps_count_at(setup.scheme.t)),
            std::to_string(
                truncation_witness_gated(path, setup.scheme.t, setup.c(), setup.p(), nstar))};
        for (double v : xt) row.push_back(csv_number(v));
        csv.row(row);
    }
    return 0;
}

int cmd_density(const RunConfig& cfg, const std::string& dir, bool gradient) {
    const std::size_t d = cfg.setup.entry.spec.d;
    SliceRequest req;
    req.t = cfg.setup.scheme.t;
    req.ys = cfg.ygrid_points(d);
    req.gradient = gradient;
    req.grad_coord = cfg.grad_coord;
    if (cfg.orthant_mode != "auto")
        for (char c : cfg.orthant_mode) req.fixed_orthant.push_back(c == '1');
    if (req.ys.empty()) {
        std::fprintf(stderr, "density: estimator.ygrid is empty\n");
        return 2;
    }
    try {
        auto slices = run_density(cfg.setup, {req});
        write_density_csv(dir + "/density.csv", slices[0].density, d);
        if (gradient) write_density_csv(dir + "/gradient.csv", slices[0].gradient, d);
        std::fprintf(stderr, "density: %zu points, %ld paths on Xi, remainder %.3g\n",
                     slices[0].density.size(), slices[0].n_on_xi,
                     slices[0].remainder.remainder_hat);
    } catch (const SamplingError& e) {
        std::fprintf(stderr, "density: %s\n", e.what());
        return 1;
    }
    return 0;
}

int cmd_remainder(const RunConfig& cfg, const std::string& dir) {
    RemainderReport rep = remainder_mass(cfg.setup, cfg.setup.scheme.t);
    CsvWriter csv(dir + "/remainder.csv");
    csv.row({"n", "t", "remainder_hat", "se", "remainder_bound", "rho", "eps_kappa",
             "fitted_D"});
    csv.row({std::to_string(cfg.setup.scheme.n), csv_number(cfg.setup.scheme.t),
             csv_number(rep.remainder_hat), csv_number(rep.remainder_se),
             csv_number(rep.remainder_bound), csv_number(rep.rho_used),
             csv_number(rep.eps_kappa), csv_number(rep.fitted_D)});
    return 0;
}

int cmd_iid_llt(const RunConfig& cfg, const std::string& dir) {
    std::vector<int> ladder = cfg.n_ladder.empty() ? std::vector<int>{16, 64}
                                                   : cfg.n_ladder;
    std::vector<double> grid = cfg.ygrid;
    if (grid.empty())
        for (double y = -3.0; y <= 3.0 + 1e-9; y += 0.5) grid.push_back(y);
    IidLltResult res = iid_llt_run(cfg.setup.decomp, ladder, cfg.setup.scheme.paths,
                                   cfg.setup.scheme.seed, cfg.setup.workers, grid);
    CsvWriter csv(dir + "/iid_llt.csv");
    csv.row({"n", "sup_gap", "max_se", "grid_bound", "remainder_hat", "remainder_bound"});
    for (const auto& r : res.rows)
        csv.row({std::to_string(r.n), csv_number(r.sup_gap), csv_number(r.max_se),
                 csv_number(r.grid_bound), csv_number(r.remainder_hat),
                 csv_number(r.remainder_bound)});
    write_density_csv(dir + "/iid_llt_grid.csv", res.last_grid, 1);
    return 0;
}

int cmd_oracle(const RunConfig& cfg, const std::string& dir) {
    const std::vector<double> ts =
        cfg.t_grid.empty() ? std::vector<double>{0.25, 0.5, 1.0} : cfg.t_grid;
    OracleResult res = gaussian_oracle_run(cfg.setup, ts, 3.0,
                                           cfg.setup.entry.spec.d == 1 ? 13 : 9);
    CsvWriter csv(dir + "/oracle.csv");
    csv.row({"t", "sup_gap", "max_se", "peak_q", "peak_oracle"});
    for (const auto& r : res.rows)
        csv.row({csv_number(r.t), csv_number(r.sup_gap), csv_number(r.max_se),
                 csv_number(r.peak_q), csv_number(r.peak_oracle)});
    std::fprintf(stderr, "oracle: peak exponent %.3f (target %.1f)\n", res.peak_exponent,
                 -0.5 * static_cast<double>(cfg.setup.entry.spec.d));
    return 0;
}

int cmd_local_time(const RunConfig& cfg, const std::string& dir) {
    WMeasureSpec w;
    w.d = 1;
    w.kind = cfg.wkind == "bump" ? WMeasureSpec::Kind::DeltaBump
                                 : WMeasureSpec::Kind::LebesgueInterval;
    LocalTimeResult res = local_time_run(w, cfg.setup, true);
    CsvWriter csv(dir + "/local_time.csv");
    csv.row({"phi_mean", "phi_se", "target", "gap", "sup_density_ok", "kernel_ok"});
    csv.row({csv_number(res.phi_mean), csv_number(res.phi_se), csv_number(res.target),
             csv_number(res.gap), std::to_string(res.conditions.sup_density_pass),
             std::to_string(res.conditions.kernel_pass)});
    CsvWriter csv2(dir + "/characteristic.csv");
    csv2.row({"x", "tau", "f_hat", "f_oracle", "q_part", "r_part", "atom_part", "gap"});
    for (const auto& r : res.characteristic)
        csv2.row({csv_number(r.x), csv_number(r.tau), csv_number(r.f_hat),
                  csv_number(r.f_oracle), csv_number(r.q_part), csv_number(r.r_part),
                  csv_number(r.atom_part), csv_number(r.gap)});
    return 0;
}

int cmd_doeblin(const RunConfig& cfg, const std::string& dir) {
    Vec xp = cfg.x_prime.empty() ? Vec(cfg.setup.entry.spec.d, 1.0) : cfg.x_prime;
    std::vector<double> grid = cfg.ygrid;
    if (grid.empty())
        for (double y = -4.0; y <= 5.0 + 1e-9; y += 0.25) grid.push_back(y);
    DoeblinResult res =
        doeblin_overlap(cfg.setup, cfg.setup.scheme.x0, xp, cfg.setup.scheme.t, grid);
    CsvWriter csv(dir + "/doeblin.csv");
    csv.row({"overlap", "se", "oracle"});
    csv.row({csv_number(res.overlap), csv_number(res.se), csv_number(res.oracle)});
    return 0;
}

int cmd_check(const RunConfig& cfg, const std::string& dir) {
    IdentityReport rep = run_identity_suite(cfg.setup, 1000, 100000, cfg.setup.scheme.seed);
    CsvWriter csv(dir + "/check.csv");
    csv.row({"commute_i", "commute_ii", "commute_iii", "inverse", "fd_gap", "ladder_gap",
             "duality_z", "ibp_z", "pass"});
    csv.row({csv_number(rep.max_rel_commute_i), csv_number(rep.max_rel_commute_ii),
             csv_number(rep.max_rel_commute_iii), csv_number(rep.max_rel_inverse),
             csv_number(rep.max_fd_gap), csv_number(rep.max_ladder_gap),
             csv_number(rep.duality_z), csv_number(rep.ibp_z), std::to_string(rep.pass)});
    std::fprintf(stderr,
                 "check: I %.2e  II %.2e  III %.2e  inv %.2e  fd %.2e  ladder %.2e  "
                 "duality %.2fse  ibp %.2fse  -> %s\n",
                 rep.max_rel_commute_i, rep.max_rel_commute_ii, rep.max_rel_commute_iii,
                 rep.max_rel_inverse, rep.max_fd_gap, rep.max_ladder_gap, rep.duality_z,
                 rep.ibp_z, rep.pass ? "pass" : "FAIL");
    return rep.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"truncated-density Monte Carlo toolkit"};
    app.require_subcommand(1);
    std::string config_path;
    std::string out_override;
    std::string dump_weights;
    long seed_override = -1;
    int workers_override = 0;

    std::vector<std::string> names{"simulate", "density",    "gradient", "remainder",
                                   "iid-llt",  "oracle",     "local-time", "doeblin",
                                   "check"};
    for (const auto& nm : names) {
        auto* sub = app.add_subcommand(nm);
        sub->add_option("config", config_path, "run configuration file")->required();
        sub->add_option("--out", out_override, "output directory");
        sub->add_option("--seed", seed_override, "seed override");
        sub->add_option("--workers", workers_override, "worker threads");
        sub->add_option("--dump-weights", dump_weights, "per-path weight debug CSV");
    }

    CLI11_PARSE(app, argc, argv);
    const std::string sub = app.get_subcommands().front()->get_name();

    RunConfig cfg;
    try {
        cfg = parse_config_file(config_path);
    } catch (const FileError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 3;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    }
    if (seed_override >= 0) cfg.setup.scheme.seed = static_cast<std::uint64_t>(seed_override);
    if (workers_override > 0) cfg.setup.workers = workers_override;
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (!dump_weights.empty()) cfg.setup.dump_weights_path = dump_weights;

    try {
        const std::string dir = make_run_dir(cfg.out_dir, sub, cfg);
        write_manifest(dir, sub, cfg);
        if (sub == "simulate") return cmd_simulate(cfg, dir);
        if (sub == "density") return cmd_density(cfg, dir, false);
        if (sub == "gradient") return cmd_density(cfg, dir, true);
        if (sub == "remainder") return cmd_remainder(cfg, dir);
        if (sub == "iid-llt") return cmd_iid_llt(cfg, dir);
        if (sub == "oracle") return cmd_oracle(cfg, dir);
        if (sub == "local-time") return cmd_local_time(cfg, dir);
        if (sub == "doeblin") return cmd_doeblin(cfg, dir);
        if (sub == "check") return cmd_check(cfg, dir);
    } catch (const ContractViolation& e) {
        std::fprintf(stderr, "contract violation: %s\n", e.what());
        return 2;
    } catch (const SamplingError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 2;
}
