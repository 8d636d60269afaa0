#include <doctest.h>

#include <cstdlib>

#include "truncllt/config.hpp"
#include "truncllt/io.hpp"

using namespace truncllt;

namespace {

const char* kMinimal = R"(
# minimal iid run
model.name = iid
decomp.alpha = 1.0
decomp.ball.center = [0.0]
decomp.ball.radius = 1.7320508075688772
scheme.n = 64
scheme.paths = 100000
estimator.ygrid = [-1.0, 0.0, 1.0]
)";

}  // namespace

TEST_CASE("minimal config parses and validates") {
    RunConfig cfg = parse_config_text(kMinimal);
    CHECK(cfg.model_name == "iid");
    CHECK(cfg.setup.scheme.n == 64);
    CHECK(cfg.setup.scheme.paths == 100000);
    CHECK(cfg.setup.decomp.alpha == 1.0);
    CHECK(cfg.ygrid.size() == 3);
    CHECK(cfg.setup.c() == doctest::Approx(0.5));  // default alpha/2
    CHECK(cfg.setup.p() == 16);                    // default 8(d+1)
}

TEST_CASE("violations are all collected") {
    const std::string bad = R"(
model.name = iid
decomp.alpha = 1.5
decomp.kappa = 3
scheme.n = 0
bogus.key = 1
)";
    try {
        parse_config_text(bad);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.violations.size() >= 4);
        bool saw_alpha = false, saw_kappa = false, saw_unknown = false;
        for (const auto& v : e.violations) {
            saw_alpha |= v.find("alpha") != std::string::npos;
            saw_kappa |= v.find("kappa") != std::string::npos;
            saw_unknown |= v.find("bogus.key") != std::string::npos;
        }
        CHECK(saw_alpha);
        CHECK(saw_kappa);
        CHECK(saw_unknown);
    }
}

TEST_CASE("c out of (0, alpha) is rejected") {
    const std::string bad = std::string(kMinimal) + "scheme.c = 1.2\n";
    CHECK_THROWS_AS(parse_config_text(bad), ConfigError);
}

TEST_CASE("kappa below four is rejected") {
    const std::string bad = std::string(kMinimal) + "decomp.kappa = 3\n";
    CHECK_THROWS_AS(parse_config_text(bad), ConfigError);
}

TEST_CASE("nu required when alpha < 1") {
    const std::string bad = R"(
model.name = iid
decomp.alpha = 0.5
scheme.n = 16
scheme.paths = 10
)";
    CHECK_THROWS_AS(parse_config_text(bad), ConfigError);
}

TEST_CASE("custom model expressions load") {
    const std::string text = R"(
model.custom.d = 1
model.custom.gamma = 0.81
model.custom.a.1 = -0.5*tanh(x1)
model.custom.b.1.1 = 1 + 0.1*cos(x1)
scheme.n = 8
scheme.paths = 10
)";
    RunConfig cfg = parse_config_text(text);
    CHECK(cfg.setup.entry.name == "custom");
    CHECK(cfg.setup.entry.spec.a(Vec{0.2})[0] == doctest::Approx(-0.5 * std::tanh(0.2)));
}

TEST_CASE("environment seed override") {
    setenv("TRUNCLLT_SEED", "777", 1);
    RunConfig cfg = parse_config_text(kMinimal);
    CHECK(cfg.setup.scheme.seed == 777);
    unsetenv("TRUNCLLT_SEED");
    RunConfig cfg2 = parse_config_text(kMinimal);
    CHECK(cfg2.setup.scheme.seed == 1);
}

TEST_CASE("ygrid_auto expands") {
    const std::string text = std::string(kMinimal) + "estimator.ygrid_auto = [-2, 2, 5]\n";
    RunConfig cfg = parse_config_text(text);
    CHECK(cfg.ygrid.size() == 5);
    CHECK(cfg.ygrid.front() == doctest::Approx(-2.0));
    CHECK(cfg.ygrid.back() == doctest::Approx(2.0));
    CHECK(cfg.ygrid[2] == doctest::Approx(0.0));
}

TEST_CASE("git blob hash matches the reference value") {
    // sha1("blob 0\0") is the well-known empty-blob id
    CHECK(git_blob_sha1("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    CHECK(git_blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("csv quoting") {
    CHECK(csv_quote("plain") == "plain");
    CHECK(csv_quote("a,b") == "\"a,b\"");
    CHECK(csv_quote("say \"hi\"") == "\"say \"\"hi\"\"\"");
}
