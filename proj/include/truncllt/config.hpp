#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "truncllt/estimator.hpp"

namespace truncllt {

// Parse/validation failure carrying every violation, not just the first.
struct ConfigError : std::runtime_error {
    explicit ConfigError(std::vector<std::string> v)
        : std::runtime_error(join(v)), violations(std::move(v)) {}
    std::vector<std::string> violations;

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string s = "configuration invalid:";
        for (const auto& x : v) s += "\n  - " + x;
        return s;
    }
};

struct FileError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    RunSetup setup;
    std::string model_name;
    std::vector<double> ygrid;            // estimator y-grid (first axis)
    std::vector<double> ygrid2;           // second axis for d = 2 product grids
    std::string orthant_mode = "auto";    // "auto" or a bit pattern like "01"
    std::size_t grad_coord = 0;
    // experiment section
    std::vector<int> n_ladder;
    std::vector<double> t_grid;
    std::vector<double> levels;
    std::vector<double> lambdas;
    std::string wkind = "bump";           // local-time measure family
    Vec x_prime;                          // doeblin second start point
    std::string out_dir = "out";
    std::string raw_text;                 // original file content, for the manifest

    std::vector<Vec> ygrid_points(std::size_t d) const;
};

// Parses and validates; throws ConfigError (every violation listed) or
// FileError. The TRUNCLLT_SEED environment variable overrides scheme.seed.
RunConfig parse_config_file(const std::string& path);
RunConfig parse_config_text(const std::string& text);

}  // namespace truncllt
