#pragma once

#include "kelab/ensemble.hpp"
#include "kelab/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace kelab {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

// Flat `key = value` text. A `[section]` line prefixes the following keys with `section.`.
// Lines starting with `#` are comments.
class Config {
public:
    static Config parse(const std::string& text);
    static Config load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::string& get(const std::string& key) const;
    std::string get(const std::string& key, const std::string& fallback) const;
    long get_long(const std::string& key, long fallback) const;
    double get_double(const std::string& key, double fallback) const;
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    // Canonical text: one `key = value` line per entry in key order. Re-parses to an equal Config.
    std::string echo() const;
    const std::map<std::string, std::string>& entries() const { return values_; }
    bool operator==(const Config& o) const { return values_ == o.values_; }

private:
    std::map<std::string, std::string> values_;
};

// `0`, `inf`, `1`, `-2.5`, `i`, `1+2i`, `3-0.5i`
SpherePoint parse_point(const std::string& text);
std::vector<std::string> split_list(const std::string& text, char sep = ',');

// Either `space.log_points = [[re, im, c], ["inf", c], …]` or the flat pair `weights` and `points`
// (comma-separated, same length). No log points gives the round sphere.
LogSphere space_from_config(const Config& cfg);
// Either `space.vertices = [[…], …]` or `polytope`: vertices separated by `;`, coordinates by spaces.
std::optional<ToricFano> polytope_from_config(const Config& cfg);

// Git blob hash: SHA-1 of "blob <size>\0" + content, lowercase hex.
std::string content_hash(const std::string& content);

// Writes through a temporary file in the same directory and renames over the target.
void write_atomic(const std::filesystem::path& path, const std::string& content);

struct OutputRecord {
    std::string file;
    std::string hash;
};

struct RunManifest {
    std::string kind;
    std::string config_echo;
    std::uint64_t seed = 0;
    std::string tool_version = kToolVersion;
    std::string input_hash;
    std::vector<OutputRecord> outputs;
    double wall_time = 0.0;

    std::string to_json() const;
};

struct ExperimentPlan {
    std::string kind;  // sample, solve, delta, lct-chain, na-energy, partition, crosscheck
    Config config;
    std::map<std::string, std::string> options;  // command-line flags, echoed into the config
    bool force = false;
    std::ostream* progress = nullptr;             // crosscheck prints one line per criterion here

    void validate() const;
};

// Z_N(β) is known to be finite only when the examined lct bound exceeds −β.
struct NegativeBetaGate {
    bool allowed;
    std::string reason;
};
NegativeBetaGate negative_beta_gate(const LogSphere& space, long k, double beta);

// Runs the plan, writes every artifact into out_dir atomically and the manifest last.
// Throws ValidationError or ComputationError; a ComputationError leaves diagnostics.txt behind.
RunManifest run(const ExperimentPlan& plan, const std::filesystem::path& out_dir);

// Wraps run() with the exit-code contract: 0 success, 2 validation, 3 computation.
int run_with_exit_code(const ExperimentPlan& plan, const std::filesystem::path& out_dir, std::ostream& err);

// CSV writers with the fixed headers documented in docs/formats.md.
std::string histogram_csv(const EmpiricalStats& stats);
std::string density_profile_csv(const std::vector<double>& t, const std::vector<double>& density);
std::string beta_scan_csv(const PartitionEstimate& estimate);

struct DeltaRow {
    long k;
    Rational value;
    std::string witness;
};
std::string delta_table_csv(const std::vector<DeltaRow>& rows);

}  // namespace kelab
