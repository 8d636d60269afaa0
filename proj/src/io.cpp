#include "truncllt/io.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace truncllt {

namespace {

// compact SHA-1, sufficient for content addressing of config blobs
struct Sha1 {
    std::uint32_t h[5] = {0x67452301u, 0xEFCDAB89u, 0x98BADCFEu, 0x10325476u, 0xC3D2E1F0u};
    std::uint64_t total = 0;
    unsigned char buf[64];
    std::size_t fill = 0;

    static std::uint32_t rol(std::uint32_t x, int k) { return (x << k) | (x >> (32 - k)); }

    void block(const unsigned char* p) {
        std::uint32_t w[80];
        for (int i = 0; i < 16; ++i)
            w[i] = (std::uint32_t(p[4 * i]) << 24) | (std::uint32_t(p[4 * i + 1]) << 16) |
                   (std::uint32_t(p[4 * i + 2]) << 8) | std::uint32_t(p[4 * i + 3]);
        for (int i = 16; i < 80; ++i) w[i] = rol(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);
        std::uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4];
        for (int i = 0; i < 80; ++i) {
            std::uint32_t f, k;
            if (i < 20) {
                f = (b & c) | (~b & d);
                k = 0x5A827999u;
            } else if (i < 40) {
                f = b ^ c ^ d;
                k = 0x6ED9EBA1u;
            } else if (i < 60) {
                f = (b & c) | (b & d) | (c & d);
                k = 0x8F1BBCDCu;
            } else {
                f = b ^ c ^ d;
                k = 0xCA62C1D6u;
            }
            const std::uint32_t t = rol(a, 5) + f + e + k + w[i];
            e = d;
            d = c;
            c = rol(b, 30);
            b = a;
            a = t;
        }
        h[0] += a;
        h[1] += b;
        h[2] += c;
        h[3] += d;
        h[4] += e;
    }

    void update(const void* data, std::size_t len) {
        const unsigned char* p = static_cast<const unsigned char*>(data);
        total += len;
        while (len) {
            const std::size_t take = std::min(len, 64 - fill);
            std::memcpy(buf + fill, p, take);
            fill += take;
            p += take;
            len -= take;
            if (fill == 64) {
                block(buf);
                fill = 0;
            }
        }
    }

    std::string hex() {
        const std::uint64_t bits = total * 8;
        unsigned char pad = 0x80;
        update(&pad, 1);
        unsigned char zero = 0;
        while (fill != 56) update(&zero, 1);
        unsigned char len8[8];
        for (int i = 0; i < 8; ++i) len8[i] = static_cast<unsigned char>(bits >> (56 - 8 * i));
        update(len8, 8);
        char out[41];
        for (int i = 0; i < 5; ++i) std::snprintf(out + 8 * i, 9, "%08x", h[i]);
        return std::string(out, 40);
    }
};

}  // namespace

std::string git_blob_sha1(const std::string& content) {
    Sha1 s;
    char header[64];
    const int n = std::snprintf(header, sizeof header, "blob %zu", content.size());
    s.update(header, static_cast<std::size_t>(n) + 1);  // includes the NUL
    s.update(content.data(), content.size());
    return s.hex();
}

std::string csv_quote(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::string csv_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

CsvWriter::CsvWriter(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw FileError("cannot open for writing: " + path);
    file_ = f;
}

CsvWriter::~CsvWriter() {
    if (file_) std::fclose(static_cast<FILE*>(file_));
}

void CsvWriter::row(const std::vector<std::string>& fields) {
    FILE* f = static_cast<FILE*>(file_);
    for (std::size_t i = 0; i < fields.size(); ++i) {
        const std::string q = csv_quote(fields[i]);
        std::fwrite(q.data(), 1, q.size(), f);
        if (i + 1 < fields.size()) std::fputc(',', f);
    }
    std::fputc('\n', f);
}

BaselineStore::BaselineStore(const std::string& path) : path_(path) {
    std::ifstream in(path);
    if (!in) return;
    nlohmann::json j;
    in >> j;
    for (auto it = j.begin(); it != j.end(); ++it)
        values_[it.key()] = it.value().get<double>();
}

bool BaselineStore::has(const std::string& key) const { return values_.count(key) > 0; }

double BaselineStore::get(const std::string& key) const { return values_.at(key); }

bool BaselineStore::check_or_record(const std::string& key, double value, double tol) {
    auto it = values_.find(key);
    if (it == values_.end()) {
        values_[key] = value;
        dirty_ = true;
        return true;
    }
    const double scale = std::max(std::abs(it->second), 1e-12);
    return std::abs(value - it->second) / scale <= tol;
}

void BaselineStore::save() const {
    if (!dirty_) return;
    nlohmann::json j;
    for (const auto& [k, v] : values_) j[k] = v;
    std::ofstream out(path_);
    out << j.dump(2) << "\n";
}

std::string make_run_dir(const std::string& out_dir, const std::string& subcommand,
                         const RunConfig& cfg) {
    const std::string hash = git_blob_sha1(cfg.raw_text);
    const std::string run_id = subcommand + "-" + hash.substr(0, 12);
    const std::filesystem::path dir = std::filesystem::path(out_dir) / run_id;
    std::filesystem::create_directories(dir);
    return dir.string();
}

std::string write_manifest(const std::string& run_dir, const std::string& subcommand,
                           const RunConfig& cfg) {
    // nlohmann::json keeps keys sorted, which is the canonical order we hash
    nlohmann::json j;
    j["subcommand"] = subcommand;
    j["config_text"] = cfg.raw_text;
    j["config_hash"] = git_blob_sha1(cfg.raw_text);
    j["model"] = cfg.model_name.empty() ? "custom" : cfg.model_name;
    j["d"] = cfg.setup.entry.spec.d;
    j["alpha"] = cfg.setup.decomp.alpha;
    j["kappa"] = cfg.setup.decomp.kappa;
    j["exp_moment"] = cfg.setup.decomp.exp_moment;
    j["n"] = cfg.setup.scheme.n;
    j["t"] = cfg.setup.scheme.t;
    j["paths"] = cfg.setup.scheme.paths;
    j["c"] = cfg.setup.c();
    j["p"] = cfg.setup.p();
    j["seed"] = cfg.setup.scheme.seed;
    j["workers"] = cfg.setup.workers;
    const std::filesystem::path path = std::filesystem::path(run_dir) / "manifest.json";
    std::ofstream out(path);
    if (!out) throw FileError("cannot write manifest: " + path.string());
    out << j.dump(2) << "\n";
    return path.string();
}

}  // namespace truncllt
