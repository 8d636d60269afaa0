#pragma once

#include <string>
#include <vector>

#include "truncllt/config.hpp"

namespace truncllt {

// git-style blob hash of arbitrary content (sha1 over "blob <len>\0" + data)
std::string git_blob_sha1(const std::string& content);

// RFC-style CSV quoting; numbers rendered with %.17g for bit-stable replay
std::string csv_quote(const std::string& field);
std::string csv_number(double v);

class CsvWriter {
public:
    explicit CsvWriter(const std::string& path);
    ~CsvWriter();
    void row(const std::vector<std::string>& fields);

private:
    void* file_;
};

// canonical-key-ordered JSON manifest of a run; returns the manifest path
std::string write_manifest(const std::string& out_dir, const std::string& subcommand,
                           const RunConfig& cfg);

// creates out_dir/<run-id> and returns it; run-id is subcommand plus the
// config content hash prefix, so identical runs land in identical places
std::string make_run_dir(const std::string& out_dir, const std::string& subcommand,
                         const RunConfig& cfg);

// Fitted-constant baselines (D, gamma, sup-gaps, ...). First run records the
// value; later runs regression-test against it with a drift tolerance.
class BaselineStore {
public:
    explicit BaselineStore(const std::string& path);
    // returns false if a stored value exists and drifts more than `tol`
    // relatively; records the value when absent
    bool check_or_record(const std::string& key, double value, double tol);
    void save() const;
    bool has(const std::string& key) const;
    double get(const std::string& key) const;

private:
    std::string path_;
    std::map<std::string, double> values_;
    bool dirty_ = false;
};

}  // namespace truncllt
