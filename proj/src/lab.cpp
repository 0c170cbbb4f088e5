#include "kelab/lab.hpp"

#include "kelab/acceptance.hpp"
#include "kelab/na_stability.hpp"
#include "kelab/variational.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace kelab {

namespace {

using json = nlohmann::ordered_json;

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::string g17(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

double parse_double(const std::string& key, const std::string& text) {
    std::string t = trim(text);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(t, &used);
    } catch (const std::exception&) {
        throw ValidationError("config key '" + key + "': not a number: " + text);
    }
    if (used != t.size() || !std::isfinite(v)) throw ValidationError("config key '" + key + "': not a number: " + text);
    return v;
}

long parse_long(const std::string& key, const std::string& text) {
    std::string t = trim(text);
    std::size_t used = 0;
    long v = 0;
    try {
        v = std::stol(t, &used);
    } catch (const std::exception&) {
        throw ValidationError("config key '" + key + "': not an integer: " + text);
    }
    if (used != t.size()) throw ValidationError("config key '" + key + "': not an integer: " + text);
    return v;
}

const std::set<std::string>& known_kinds() {
    static const std::set<std::string> k{"sample", "solve", "delta", "lct-chain", "na-energy", "partition", "crosscheck"};
    return k;
}

struct Outputs {
    std::filesystem::path dir;
    std::vector<OutputRecord> records;

    void write(const std::string& name, const std::string& content) {
        write_atomic(dir / name, content);
        records.push_back({name, content_hash(content)});
    }
};

long required_level(const Config& cfg) {
    if (!cfg.has("k")) throw ValidationError("missing required key 'k'");
    long k = cfg.get_long("k", 0);
    if (k < 1) throw ValidationError("level k must be positive");
    return k;
}

double required_beta(const Config& cfg) {
    if (!cfg.has("beta")) throw ValidationError("missing required key 'beta'");
    return cfg.get_double("beta", 0.0);
}

// Optional key `n` must agree with the particle count fixed by the level.
BasisSpec check_particles(const Config& cfg, BasisSpec basis) {
    if (cfg.has("n") && cfg.get_long("n", 0) != basis.size())
        throw ValidationError("n=" + cfg.get("n") + " does not match N=" + std::to_string(basis.size()) + " at level k=" +
                              std::to_string(basis.level));
    return basis;
}

BasisSpec basis_from_config(const Config& cfg, const LogSphere& space) {
    long k = required_level(cfg);
    if (cfg.has("degree")) {
        long m = cfg.get_long("degree", 0);
        if (m < 0) throw ValidationError("degree must be nonnegative");
        return check_particles(cfg, bundle_basis(k, m));
    }
    return check_particles(cfg, full_basis(space, k));
}

GibbsParams gibbs_from_config(const Config& cfg, double beta) {
    GibbsParams p;
    p.beta = beta;
    p.sweeps = cfg.get_long("sweeps", 2000);
    p.burn_in = cfg.get_long("burn_in", p.sweeps / 10);
    p.chains = static_cast<int>(cfg.get_long("chains", 1));
    p.proposal_scale = cfg.get_double("proposal_scale", 0.5);
    p.seed = static_cast<std::uint64_t>(cfg.get_long("seed", 0));
    p.runaway_floor = cfg.get_double("runaway_floor", -100.0);
    p.snapshot_every = 0;
    p.partition.bands = static_cast<int>(cfg.get_long("bands", 64));
    p.partition.sectors = static_cast<int>(cfg.get_long("sectors", 32));
    p.validate();
    return p;
}

void gate_negative_beta(const ExperimentPlan& plan, const LogSphere& space, const BasisSpec& basis, double beta) {
    if (beta >= 0.0 || plan.force) return;
    auto g = negative_beta_gate(space, basis.level, beta);
    if (!g.allowed) throw ValidationError(g.reason + "; rerun with --force to sample anyway");
}

std::vector<double> parse_double_list(const std::string& key, const std::string& text) {
    std::vector<double> out;
    for (const auto& item : split_list(text)) out.push_back(parse_double(key, item));
    return out;
}

// ------------------------------------------------------------------------------------------

void run_sample(const ExperimentPlan& plan, const Config& cfg, Outputs& out) {
    LogSphere space = space_from_config(cfg);
    BasisSpec basis = basis_from_config(cfg, space);
    double beta = required_beta(cfg);
    GibbsParams p = gibbs_from_config(cfg, beta);
    gate_negative_beta(plan, space, basis, beta);
    auto st = mcmc_sample(space, basis, p);
    auto dens = empirical_density(st);
    auto prof = dens.band_profile();
    std::vector<double> t(prof.size());
    for (std::size_t b = 0; b < t.size(); ++b) t[b] = (b + 0.5) / static_cast<double>(t.size());

    out.write("histogram.csv", histogram_csv(st));
    out.write("density_profile.csv", density_profile_csv(t, prof));
    std::ostringstream trace;
    trace << "index,energy\n";
    for (std::size_t i = 0; i < st.energy_trace.size(); ++i) trace << i << "," << g17(st.energy_trace[i]) << "\n";
    out.write("energy_trace.csv", trace.str());

    json j;
    j["particles"] = st.particles;
    j["level"] = basis.level;
    j["degree"] = basis.degree;
    j["beta"] = beta;
    j["retained_sweeps_per_chain"] = st.retained_sweeps;
    j["acceptance_rate"] = st.acceptance_rate;
    j["autocorrelation_time"] = st.autocorrelation_time;
    j["mean_energy"] = st.mean_energy;
    j["energy_stderr"] = st.energy_stderr;
    j["conditional_on_finite_z"] = st.conditional_on_finite_z;
    j["forced"] = beta < 0.0 && plan.force;
    auto chains = json::array();
    for (const auto& c : st.chains)
        chains.push_back({{"acceptance_rate", c.acceptance_rate},
                          {"proposal_scale", c.proposal_scale},
                          {"autocorrelation_time", c.autocorrelation_time},
                          {"mean_energy", c.mean_energy}});
    j["chains"] = chains;
    out.write("summary.json", j.dump(2) + "\n");
}

void run_solve(const ExperimentPlan&, const Config& cfg, Outputs& out) {
    LogSphere space = space_from_config(cfg);
    double beta = required_beta(cfg);
    int elements = static_cast<int>(cfg.get_long("grid.nodes", 401) - 1);
    if (elements < 2) throw ValidationError("grid.nodes must be at least 3");
    auto model = make_model(space, elements);
    KeSolution ke;
    try {
        ke = solve_ke(model, beta);
    } catch (const SolverFailure& f) {
        std::ostringstream os;
        os << f.what() << "\niteration,residual,step\n";
        for (const auto& s : f.log()) os << s.iteration << "," << g17(s.residual) << "," << g17(s.step) << "\n";
        throw ComputationError(os.str());
    }
    out.write("density.csv", density_profile_csv(model->grid().t(), ke.density));
    std::ostringstream pot;
    pot << "t,u\n";
    for (int i = 0; i < model->size(); ++i) pot << g17(model->grid().t()[i]) << "," << g17(ke.u.values[i]) << "\n";
    out.write("potential.csv", pot.str());

    auto fr = functional_report(ke.u, beta);
    json j;
    j["beta"] = beta;
    j["grid_nodes"] = elements + 1;
    j["residual"] = ke.residual;
    j["reconstruction_error"] = ke.reconstruction_error;
    j["log_normalizer"] = ke.log_normalizer;
    j["iterations"] = ke.iterations;
    j["functionals"] = {{"energy", fr.energy},       {"entropy", fr.entropy}, {"free_energy", fr.free_energy},
                        {"mabuchi", fr.mabuchi},     {"ding", fr.ding},       {"ent_star", fr.ent_star},
                        {"script_energy", fr.script_energy}};
    if (cfg.has("scan_betas")) {
        auto rep = coercivity_scan(space, parse_double_list("scan_betas", cfg.get("scan_betas")));
        std::ostringstream cs;
        cs << "beta,min_coarse,min_fine,dives\n";
        for (const auto& r : rep.rows)
            cs << g17(r.beta) << "," << g17(r.min_coarse) << "," << g17(r.min_fine) << "," << (r.dives ? 1 : 0) << "\n";
        out.write("coercivity.csv", cs.str());
        json c;
        c["label"] = rep.label;
        c["estimate"] = rep.estimate;
        c["bracket_width"] = std::isfinite(rep.bracket_width) ? json(rep.bracket_width) : json("inf");
        c["last_stable"] = rep.last_stable ? json(*rep.last_stable) : json(nullptr);
        c["first_dive"] = rep.first_dive ? json(*rep.first_dive) : json(nullptr);
        j["coercivity"] = c;
    }
    auto newton = json::array();
    for (const auto& st : ke.log) newton.push_back({{"iteration", st.iteration}, {"residual", st.residual}, {"step", st.step}});
    j["newton_log"] = newton;
    j["normalization"] = "density is e^{beta u}/Z relative to dV, Z fixed by mass 1";
    out.write("functionals.json", j.dump(2) + "\n");
}

void run_delta(const ExperimentPlan&, const Config& cfg, Outputs& out) {
    long kmax = required_level(cfg);
    int box = static_cast<int>(cfg.get_long("box", 5));
    std::vector<DeltaRow> rows;
    DeltaResult lim;
    auto poly = polytope_from_config(cfg);
    if (poly) {
        for (long k = 1; k <= kmax; ++k) {
            auto d = delta_k(*poly, k, box);
            rows.push_back({k, d.value, d.witness});
        }
        lim = delta(*poly, box);
    } else {
        LogSphere space = space_from_config(cfg);
        for (long k = 1; k <= kmax; ++k) {
            if (!space.level_admissible(k)) continue;
            auto d = delta_k(space, k);
            rows.push_back({k, d.value, d.witness});
        }
        if (rows.empty()) throw ValidationError("no admissible level k <= " + std::to_string(kmax));
        lim = delta(space);
    }
    out.write("delta_table.csv", delta_table_csv(rows));
    json j;
    j["delta"] = rational_string(lim.value);
    j["delta_decimal"] = to_double(lim.value);
    j["witness"] = lim.witness;
    j["interior"] = lim.interior;
    j["warnings"] = lim.warnings;
    if (poly) j["box"] = box;
    j["note"] = "minimum over the candidate valuation set: an upper bound for delta";
    out.write("delta.json", j.dump(2) + "\n");
}

void run_lct_chain(const ExperimentPlan&, const Config& cfg, Outputs& out) {
    LogSphere space = space_from_config(cfg);
    long k = required_level(cfg);
    auto v = gibbs_stability_check(space, k);
    const auto& c = v.chain;
    json j;
    j["level"] = c.level;
    j["particles"] = c.particles;
    j["bound"] = c.bound ? json(rational_string(*c.bound)) : json(nullptr);
    j["witness"] = c.witness;
    j["delta_k"] = rational_string(c.delta_k);
    j["margin"] = c.margin ? json(rational_string(*c.margin)) : json(nullptr);
    j["ordered"] = c.ordered;
    j["examined"] = c.examined;
    j["skipped_zero_energy"] = c.skipped_zero_energy;
    j["mixed_enumerated"] = c.mixed_enumerated;
    j["notes"] = c.notes;
    j["verdict"] = verdict_name(v.verdict);
    j["verdict_note"] = v.note;
    out.write("lct_chain.json", j.dump(2) + "\n");
}

// Lines `<point> [@ scale]` on curves, `<a_1> … <a_n> [@ scale]` on polytopes; `#` starts a comment.
std::vector<std::pair<std::string, Rational>> read_valuation_lines(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ValidationError("cannot read valuations file: " + file.string());
    std::vector<std::pair<std::string, Rational>> out;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line.substr(0, line.find('#')));
        if (line.empty()) continue;
        Rational scale = 1;
        auto at = line.find('@');
        if (at != std::string::npos) {
            scale = parse_rational(line.substr(at + 1));
            line = trim(line.substr(0, at));
        }
        out.push_back({line, scale});
    }
    if (out.empty()) throw ValidationError("valuations file is empty");
    return out;
}

void run_na_energy(const ExperimentPlan&, const Config& cfg, Outputs& out) {
    long k = required_level(cfg);
    if (!cfg.has("valuations")) throw ValidationError("missing --valuations file");
    auto lines = read_valuation_lines(cfg.get("valuations"));
    json j;
    j["level"] = k;
    Rational value;
    auto poly = polytope_from_config(cfg);
    if (poly) {
        std::vector<ToricValuation> prod;
        for (const auto& [text, scale] : lines) {
            std::istringstream is(text);
            std::vector<long> a;
            std::string tok;
            while (is >> tok) a.push_back(parse_long("valuations", tok));
            prod.push_back({a, scale});
        }
        const std::size_t n = lattice_points(*poly, k).size();
        if (prod.size() == 1) prod.assign(n, prod.front());
        j["particles"] = n;
        value = na_energy_per_particle(*poly, prod, k);
    } else {
        LogSphere space = space_from_config(cfg);
        BasisSpec basis = full_basis(space, k);
        std::vector<CurveValuation> prod;
        for (const auto& [text, scale] : lines) prod.push_back({parse_point(text), scale});
        if (prod.size() == 1) prod.assign(basis.size(), prod.front());
        SpherePoint centre = parse_point(cfg.get("centre", "0"));
        j["particles"] = basis.size();
        value = na_energy_per_particle(prod, basis, centre);
    }
    j["value"] = rational_string(value);
    j["value_decimal"] = to_double(value);
    j["label"] = "leading-term assignment value: a lower bound for the valuation of det S";
    out.write("na_energy.json", j.dump(2) + "\n");
}

void run_partition(const ExperimentPlan& plan, const Config& cfg, Outputs& out) {
    LogSphere space = space_from_config(cfg);
    BasisSpec basis = basis_from_config(cfg, space);
    double beta = required_beta(cfg);
    GibbsParams p = gibbs_from_config(cfg, beta);
    gate_negative_beta(plan, space, basis, beta);
    int intervals = static_cast<int>(cfg.get_long("intervals", 20));
    auto est = log_partition(space, basis, beta, p, intervals);
    out.write("beta_scan.csv", beta_scan_csv(est));
    json j;
    j["beta"] = beta;
    j["particles"] = basis.size();
    j["neg_log_Z_over_N"] = est.value;
    j["stderr"] = est.stderr_;
    auto legs = json::array();
    for (const auto& l : est.legs)
        legs.push_back({{"beta", l.beta},
                        {"mean_energy", l.mean_energy},
                        {"stderr", l.stderr_},
                        {"acceptance_rate", l.acceptance_rate}});
    j["legs"] = legs;
    if (basis.size() <= 3) {
        auto bf = brute_force_log_partition(space, basis, beta);
        j["brute_force"] = {{"value", bf.value},
                            {"gibbs_free_energy", bf.gibbs_free_energy},
                            {"inf_tempered", bf.inf_tempered},
                            {"tempered_argmin", bf.tempered_argmin},
                            {"inf_product", bf.inf_product},
                            {"product_argmin", bf.product_argmin},
                            {"reduction", bf.reduction}};
    }
    out.write("partition.json", j.dump(2) + "\n");
}

void run_crosscheck(const ExperimentPlan& plan, const Config& cfg, Outputs& out) {
    std::string suite = cfg.get("suite", "acceptance");
    if (suite != "acceptance") throw ValidationError("unknown suite: " + suite);
    std::vector<std::string> ids = acceptance_ids();
    if (cfg.has("criteria")) {
        ids.clear();
        for (const auto& s : split_list(cfg.get("criteria"))) ids.push_back(s);
    }
    auto results = run_acceptance(ids, [&](const CriterionResult& r) {
        if (plan.progress) *plan.progress << result_line(r) << std::endl;
    });
    out.write("acceptance_report.json", acceptance_json(results));
    std::string failed;
    for (const auto& r : results)
        if (!r.passed) failed += (failed.empty() ? "" : ", ") + r.id;
    if (!failed.empty()) throw ComputationError("acceptance criteria failed: " + failed);
}

}  // namespace

// ------------------------------------------------------------------------------------------

Config Config::parse(const std::string& text) {
    Config c;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ValidationError("config line " + std::to_string(lineno) + ": malformed section");
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw ValidationError("config line " + std::to_string(lineno) + ": empty key");
        if (!section.empty()) key = section + "." + key;
        if (c.values_.count(key)) throw ValidationError("config line " + std::to_string(lineno) + ": duplicate key " + key);
        c.values_[key] = value;
    }
    return c;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read config file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

const std::string& Config::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ValidationError("missing required key '" + key + "'");
    return it->second;
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

long Config::get_long(const std::string& key, long fallback) const {
    return has(key) ? parse_long(key, get(key)) : fallback;
}

double Config::get_double(const std::string& key, double fallback) const {
    return has(key) ? parse_double(key, get(key)) : fallback;
}

std::string Config::echo() const {
    std::string s;
    for (const auto& [k, v] : values_) s += k + " = " + v + "\n";
    return s;
}

std::vector<std::string> split_list(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

SpherePoint parse_point(const std::string& text) {
    std::string s;
    for (char ch : text)
        if (!std::isspace(static_cast<unsigned char>(ch))) s.push_back(ch);
    std::string lower = s;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "inf" || lower == "infinity" || lower == "∞") return SpherePoint::infinity();
    if (s.empty()) throw ValidationError("empty point");
    auto real_of = [&](const std::string& part) { return parse_double("point", part); };
    if (s.back() != 'i') return SpherePoint::finite(real_of(s));
    std::string body = s.substr(0, s.size() - 1);
    std::size_t split = std::string::npos;
    for (std::size_t i = body.size(); i-- > 1;)
        if ((body[i] == '+' || body[i] == '-') && body[i - 1] != 'e' && body[i - 1] != 'E') {
            split = i;
            break;
        }
    std::string re = split == std::string::npos ? "" : body.substr(0, split);
    std::string im = split == std::string::npos ? body : body.substr(split);
    double imv = (im.empty() || im == "+") ? 1.0 : im == "-" ? -1.0 : real_of(im);
    double rev = re.empty() ? 0.0 : real_of(re);
    return SpherePoint::finite({rev, imv});
}

namespace {

json parse_json_value(const std::string& key, const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception&) {
        throw ValidationError("config key '" + key + "': malformed list: " + text);
    }
}

Rational json_rational(const std::string& key, const json& v) {
    if (v.is_string()) return parse_rational(v.get<std::string>());
    if (v.is_number_integer()) return Rational(v.get<long>());
    if (v.is_number()) return rational_from_double(v.get<double>());
    throw ValidationError("config key '" + key + "': expected a number");
}

// [[re, im, c], …] with "inf" in place of the point (either ["inf", c] or ["inf", 0, c]).
std::vector<LogPoint> structured_log_points(const std::string& text) {
    const std::string key = "space.log_points";
    json arr = parse_json_value(key, text);
    if (!arr.is_array()) throw ValidationError("config key '" + key + "': expected a list");
    std::vector<LogPoint> pts;
    for (const auto& e : arr) {
        if (!e.is_array() || e.empty()) throw ValidationError("config key '" + key + "': entries are [re, im, c]");
        if (e[0].is_string()) {
            if (parse_point(e[0].get<std::string>()).at_infinity && e.size() >= 2) {
                pts.push_back({SpherePoint::infinity(), json_rational(key, e.back())});
                continue;
            }
            throw ValidationError("config key '" + key + "': unknown point " + e[0].dump());
        }
        if (e.size() != 3) throw ValidationError("config key '" + key + "': entries are [re, im, c]");
        if (!e[0].is_number() || !e[1].is_number()) throw ValidationError("config key '" + key + "': expected numbers");
        pts.push_back({SpherePoint::finite({e[0].get<double>(), e[1].get<double>()}), json_rational(key, e[2])});
    }
    return pts;
}

}  // namespace

LogSphere space_from_config(const Config& cfg) {
    if (cfg.has("space.kind") && cfg.get("space.kind") != "log_sphere") {
        if (cfg.get("space.kind") == "toric") throw ValidationError("this command needs a log sphere, not a toric space");
        throw ValidationError("unknown space.kind: " + cfg.get("space.kind"));
    }
    if (cfg.has("space.log_points")) {
        if (cfg.has("weights") || cfg.has("points")) throw ValidationError("give either space.log_points or weights/points");
        return LogSphere(structured_log_points(cfg.get("space.log_points")));
    }
    if (!cfg.has("weights")) {
        if (cfg.has("points")) throw ValidationError("points given without weights");
        return LogSphere();
    }
    auto w = split_list(cfg.get("weights"));
    if (!cfg.has("points")) throw ValidationError("missing required key 'points'");
    auto p = split_list(cfg.get("points"));
    if (w.size() != p.size()) throw ValidationError("weights and points have different lengths");
    std::vector<LogPoint> pts;
    for (std::size_t i = 0; i < w.size(); ++i) pts.push_back({parse_point(p[i]), parse_rational(w[i])});
    return LogSphere(pts);
}

std::optional<ToricFano> polytope_from_config(const Config& cfg) {
    if (cfg.has("space.vertices")) {
        if (cfg.has("polytope")) throw ValidationError("give either space.vertices or polytope");
        json arr = parse_json_value("space.vertices", cfg.get("space.vertices"));
        std::vector<std::vector<long>> verts;
        try {
            verts = arr.get<std::vector<std::vector<long>>>();
        } catch (const json::exception&) {
            throw ValidationError("config key 'space.vertices': expected a list of integer vectors");
        }
        return ToricFano(verts);
    }
    if (cfg.has("space.kind") && cfg.get("space.kind") == "toric" && !cfg.has("polytope"))
        throw ValidationError("missing required key 'space.vertices'");
    if (!cfg.has("polytope")) return std::nullopt;
    std::vector<std::vector<long>> verts;
    for (const auto& v : split_list(cfg.get("polytope"), ';')) {
        std::istringstream is(v);
        std::vector<long> x;
        std::string tok;
        while (is >> tok) x.push_back(parse_long("polytope", tok));
        verts.push_back(std::move(x));
    }
    return ToricFano(verts);
}

std::string content_hash(const std::string& content) {
    std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, header.data(), header.size()) != 1 ||
        EVP_DigestUpdate(ctx, content.data(), content.size()) != 1 || EVP_DigestFinal_ex(ctx, md, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw ComputationError("SHA-1 digest failed");
    }
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 15]);
    }
    return out;
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ComputationError("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            out.close();
            std::filesystem::remove(tmp);
            throw ComputationError("write failed: " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw ComputationError("rename failed for " + path.string() + ": " + ec.message());
    }
}

std::string RunManifest::to_json() const {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["kind"] = kind;
    j["tool_version"] = tool_version;
    j["seed"] = seed;
    j["input_hash"] = input_hash;
    j["config_echo"] = config_echo;
    auto arr = json::array();
    for (const auto& o : outputs) arr.push_back({{"file", o.file}, {"sha1", o.hash}});
    j["outputs"] = arr;
    j["wall_time"] = wall_time;
    return j.dump(2) + "\n";
}

void ExperimentPlan::validate() const {
    if (!known_kinds().count(kind)) throw ValidationError("unknown experiment kind: " + kind);
}

NegativeBetaGate negative_beta_gate(const LogSphere& space, long k, double beta) {
    if (beta >= 0.0) return {true, "beta >= 0"};
    auto chain = lct_chain(space, k);
    if (!chain.bound) return {false, "no lct bound available at k=" + std::to_string(k)};
    double b = to_double(*chain.bound);
    if (*chain.bound > rational_from_double(-beta))
        return {true, "lct bound " + rational_string(*chain.bound) + " exceeds -beta"};
    return {false, "Gibbs stability check failed: lct bound " + rational_string(*chain.bound) + " (" + g17(b) +
                       ") <= -beta at k=" + std::to_string(k) + ", Z_N may diverge"};
}

RunManifest run(const ExperimentPlan& plan, const std::filesystem::path& out_dir) {
    plan.validate();
    auto t0 = std::chrono::steady_clock::now();
    Config cfg = plan.config;
    for (const auto& [k, v] : plan.options) cfg.set(k, v);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir))
        throw ValidationError("output directory not writable: " + out_dir.string());

    RunManifest m;
    m.kind = plan.kind;
    m.config_echo = cfg.echo();
    m.seed = static_cast<std::uint64_t>(cfg.get_long("seed", 0));
    m.input_hash = content_hash(m.config_echo);
    Outputs out{out_dir, {}};
    try {
        if (plan.kind == "sample") run_sample(plan, cfg, out);
        else if (plan.kind == "solve") run_solve(plan, cfg, out);
        else if (plan.kind == "delta") run_delta(plan, cfg, out);
        else if (plan.kind == "lct-chain") run_lct_chain(plan, cfg, out);
        else if (plan.kind == "na-energy") run_na_energy(plan, cfg, out);
        else if (plan.kind == "partition") run_partition(plan, cfg, out);
        else run_crosscheck(plan, cfg, out);
    } catch (const ComputationError& e) {
        std::string diag = "kind: " + plan.kind + "\nerror: " + e.what() + "\nconfig:\n" + m.config_echo;
        write_atomic(out_dir / "diagnostics.txt", diag);
        throw;
    }
    m.outputs = out.records;
    m.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_atomic(out_dir / "manifest.json", m.to_json());
    return m;
}

int run_with_exit_code(const ExperimentPlan& plan, const std::filesystem::path& out_dir, std::ostream& err) {
    auto one_line = [](std::string s) {
        auto nl = s.find('\n');
        return nl == std::string::npos ? s : s.substr(0, nl);
    };
    try {
        run(plan, out_dir);
        return 0;
    } catch (const ValidationError& e) {
        err << "error: validation: " << one_line(e.what()) << "\n";
        return 2;
    } catch (const ComputationError& e) {
        err << "error: computation: " << one_line(e.what()) << "\n";
        return 3;
    } catch (const std::exception& e) {
        err << "error: computation: " << one_line(e.what()) << "\n";
        return 3;
    }
}

std::string histogram_csv(const EmpiricalStats& stats) {
    std::ostringstream os;
    os << "band,sector,count\n";
    for (int b = 0; b < stats.partition.bands; ++b)
        for (int s = 0; s < stats.partition.sectors; ++s)
            os << b << "," << s << "," << stats.histogram[b * stats.partition.sectors + s] << "\n";
    return os.str();
}

std::string density_profile_csv(const std::vector<double>& t, const std::vector<double>& density) {
    if (t.size() != density.size()) throw ValidationError("profile size mismatch");
    std::ostringstream os;
    os << "t,density\n";
    for (std::size_t i = 0; i < t.size(); ++i) os << g17(t[i]) << "," << g17(density[i]) << "\n";
    return os.str();
}

std::string beta_scan_csv(const PartitionEstimate& e) {
    std::ostringstream os;
    os << "beta,neg_log_Z_over_N,stderr\n";
    for (const auto& row : e.scan) os << g17(row[0]) << "," << g17(row[1]) << "," << g17(row[2]) << "\n";
    return os.str();
}

std::string delta_table_csv(const std::vector<DeltaRow>& rows) {
    std::ostringstream os;
    os << "k,delta_k_num,delta_k_den,witness\n";
    for (const auto& r : rows) os << r.k << "," << numerator(r.value) << "," << denominator(r.value) << "," << r.witness << "\n";
    return os.str();
}

}  // namespace kelab
