#include "kelab/lab.hpp"

#include <doctest.h>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

using namespace kelab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("kelab_test_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string first_line(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    return line;
}

ExperimentPlan plan_of(const std::string& kind, const std::string& text) {
    ExperimentPlan plan;
    plan.kind = kind;
    plan.config = Config::parse(text);
    return plan;
}

}  // namespace

TEST_CASE("config parse, sections and echo round trip") {
    auto cfg = Config::parse("# comment\nbeta = 0.5\nk=2\n\n[space]\nkind = log_sphere\n");
    CHECK(cfg.get("beta") == "0.5");
    CHECK(cfg.get_long("k", 0) == 2);
    CHECK(cfg.get("space.kind") == "log_sphere");
    CHECK(cfg.get_double("missing", 1.5) == 1.5);
    CHECK(Config::parse(cfg.echo()) == cfg);
    CHECK_THROWS_WITH_AS(Config::parse("a = 1\na = 2\n"), doctest::Contains("config line 2"), ValidationError);
    CHECK_THROWS_WITH_AS(Config::parse("a = 1\nnot a pair\n"), doctest::Contains("config line 2"), ValidationError);
    CHECK_THROWS_AS(Config::parse("k = two").get_long("k", 0), ValidationError);
    CHECK_THROWS_AS(cfg.get("absent"), ValidationError);
}

TEST_CASE("point and list parsing") {
    CHECK(parse_point("inf").at_infinity);
    CHECK(parse_point("infinity").at_infinity);
    CHECK(parse_point("0").z == std::complex<double>(0, 0));
    CHECK(parse_point("-2.5").z == std::complex<double>(-2.5, 0));
    CHECK(parse_point("i").z == std::complex<double>(0, 1));
    CHECK(parse_point("-i").z == std::complex<double>(0, -1));
    CHECK(parse_point("1+2i").z == std::complex<double>(1, 2));
    CHECK(parse_point("3-0.5i").z == std::complex<double>(3, -0.5));
    CHECK_THROWS_AS(parse_point("north"), ValidationError);
    CHECK(split_list("a, b ,c") == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("space configuration forms agree") {
    auto flat = space_from_config(Config::parse("weights = 1/2, 1/3\npoints = 0, inf\n"));
    auto structured = space_from_config(Config::parse("space.kind = log_sphere\nspace.log_points = [[0, 0, \"1/2\"], [\"inf\", \"1/3\"]]\n"));
    CHECK(flat.anticanonical_degree() == structured.anticanonical_degree());
    CHECK(flat.log_normalization() == doctest::Approx(structured.log_normalization()).epsilon(1e-14));
    CHECK(space_from_config(Config()).log_points().empty());
    CHECK_THROWS_AS(space_from_config(Config::parse("space.kind = projective_plane\n")), ValidationError);
    CHECK_THROWS_AS(space_from_config(Config::parse("weights = 1/2\npoints = 0, 1\n")), ValidationError);
    CHECK_THROWS_WITH_AS(space_from_config(Config::parse("weights = 6/5\npoints = 0\n")), doctest::Contains("non-klt pair"),
                         ValidationError);
    auto poly = polytope_from_config(Config::parse("polytope = -1 -1; 2 -1; -1 2\n"));
    REQUIRE(poly.has_value());
    CHECK(poly->reflexive());
    CHECK_FALSE(polytope_from_config(Config()).has_value());
}

TEST_CASE("content hash matches git blob hashes") {
    CHECK(content_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    CHECK(content_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("atomic write leaves only the target") {
    auto dir = scratch("atomic");
    fs::create_directories(dir);
    write_atomic(dir / "a.txt", "first");
    write_atomic(dir / "a.txt", "second");
    CHECK(slurp(dir / "a.txt") == "second");
    int files = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++files;
    CHECK(files == 1);
    fs::remove_all(dir);
}

TEST_CASE("csv headers") {
    EmpiricalStats st;
    st.partition = {2, 1};
    st.histogram = {3, 4};
    CHECK(histogram_csv(st).rfind("band,sector,count\n", 0) == 0);
    CHECK(density_profile_csv({0.0, 1.0}, {1.0, 1.0}).rfind("t,density\n", 0) == 0);
    CHECK(delta_table_csv({{1, Rational(2, 3), "ord_0"}}) == "k,delta_k_num,delta_k_den,witness\n1,2,3,ord_0\n");
    PartitionEstimate est;
    CHECK(beta_scan_csv(est).rfind("beta,neg_log_Z_over_N,stderr\n", 0) == 0);
}

TEST_CASE("exit codes") {
    std::ostringstream err;
    auto dir = scratch("exit");
    CHECK(run_with_exit_code(plan_of("delta", "weights = 6/5\npoints = 0\nk = 2\n"), dir, err) == 2);
    CHECK(err.str().find("error: validation:") == 0);
    CHECK(err.str().find("non-klt pair") != std::string::npos);

    err.str("");
    CHECK(run_with_exit_code(plan_of("fold", ""), dir, err) == 2);
    CHECK(err.str().find("unknown experiment kind") != std::string::npos);

    err.str("");
    CHECK(run_with_exit_code(plan_of("sample", "k = 1\nbeta = -3\nsweeps = 100\n"), dir, err) == 2);
    CHECK(err.str().find("--force") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "manifest.json"));

    // forced sampling past the stability threshold trips the runaway detector
    err.str("");
    auto forced = plan_of("sample", "k = 1\ndegree = 1\nbeta = -3\nsweeps = 3000\nburn_in = 0\nseed = 1\nrunaway_floor = -3\n");
    forced.force = true;
    CHECK(run_with_exit_code(forced, dir, err) == 3);
    CHECK(err.str().find("error: computation:") == 0);
    CHECK(fs::exists(dir / "diagnostics.txt"));
    CHECK_FALSE(fs::exists(dir / "manifest.json"));
    fs::remove_all(dir);
}

TEST_CASE("negative beta gate follows the lct bound") {
    LogSphere round;
    CHECK(negative_beta_gate(round, 1, 0.5).allowed);
    CHECK_FALSE(negative_beta_gate(round, 1, -3.0).allowed);
    CHECK(negative_beta_gate(round, 1, -0.5).allowed);
}

TEST_CASE("runs are reproducible and the manifest lists every output") {
    const std::string text = "weights = 1/2, 1/2\npoints = 0, inf\nk = 2\nbeta = 1\nsweeps = 200\nseed = 11\n";
    auto a = scratch("rep_a"), b = scratch("rep_b");
    auto ma = run(plan_of("sample", text), a);
    auto mb = run(plan_of("sample", text), b);
    REQUIRE(ma.outputs.size() == mb.outputs.size());
    for (std::size_t i = 0; i < ma.outputs.size(); ++i) {
        CHECK(ma.outputs[i].file == mb.outputs[i].file);
        CHECK(ma.outputs[i].hash == mb.outputs[i].hash);
        CHECK(content_hash(slurp(a / ma.outputs[i].file)) == ma.outputs[i].hash);
    }
    auto j = nlohmann::json::parse(slurp(a / "manifest.json"));
    CHECK(j["schema_version"] == kSchemaVersion);
    CHECK(j["kind"] == "sample");
    CHECK(j["seed"] == 11);
    std::vector<std::string> listed;
    for (const auto& o : j["outputs"]) listed.push_back(o["file"]);
    for (const char* f : {"histogram.csv", "density_profile.csv", "energy_trace.csv", "summary.json"})
        CHECK(std::find(listed.begin(), listed.end(), f) != listed.end());
    CHECK(first_line(a / "histogram.csv") == "band,sector,count");
    CHECK(Config::parse(j["config_echo"].get<std::string>()).get("seed") == "11");

    // a different seed changes the chain
    auto c = scratch("rep_c");
    std::string reseeded = text;
    reseeded.replace(reseeded.find("seed = 11"), 9, "seed = 12");
    auto mc = run(plan_of("sample", reseeded), c);
    CHECK(mc.outputs[0].hash != ma.outputs[0].hash);
    for (const auto& d : {a, b, c}) fs::remove_all(d);
}

TEST_CASE("delta run writes the exact table") {
    auto dir = scratch("delta");
    run(plan_of("delta", "weights = 1/3, 1/3, 1/3\npoints = 0, 1, inf\nk = 3\n"), dir);
    CHECK(first_line(dir / "delta_table.csv") == "k,delta_k_num,delta_k_den,witness");
    auto j = nlohmann::json::parse(slurp(dir / "delta.json"));
    // 2(1 − max c)/(2 − Σc)
    CHECK(j["delta"] == "4/3");
    fs::remove_all(dir);
}
