#include "kelab/lab.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct Common {
    std::string config;
    std::string out;
    std::string seed;
    std::string beta;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "configuration file (key = value)")->check(CLI::ExistingFile);
    sub->add_option("--out", c.out, "output directory")->required();
    sub->add_option("--seed", c.seed, "overrides the seed key");
    sub->add_option("--beta", c.beta, "overrides the beta key");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ke-lab: Gibbs ensembles, Kähler–Einstein solvers and non-Archimedean stability on log spheres"};
    app.set_version_flag("--version", std::string(kelab::kToolVersion));
    app.require_subcommand(1);

    Common common;
    std::string k, box, valuations, suite = "acceptance", criteria, n, sweeps, grid;
    bool force = false;

    auto* sample = app.add_subcommand("sample", "Metropolis sampling of the Gibbs ensemble");
    add_common(sample, common);
    sample->add_option("--k", k, "level");
    sample->add_option("--n", n, "particle count, checked against the level");
    sample->add_option("--sweeps", sweeps, "sweeps per chain including burn-in");
    sample->add_flag("--force", force, "sample at beta < 0 even when the stability check does not certify Z_N < inf");

    auto* solve = app.add_subcommand("solve", "Kähler–Einstein solve and functionals on a polar log sphere");
    add_common(solve, common);
    solve->add_option("--grid", grid, "grid nodes");

    auto* delta = app.add_subcommand("delta", "exact delta_k table and delta limit");
    add_common(delta, common);
    delta->add_option("--k", k, "largest level");
    delta->add_option("--box", box, "search radius for toric valuations");

    auto* lct = app.add_subcommand("lct-chain", "lct upper bound for the basis divisor and stability verdict");
    add_common(lct, common);
    lct->add_option("--k", k, "level");

    auto* na = app.add_subcommand("na-energy", "non-Archimedean energy of a product valuation");
    add_common(na, common);
    na->add_option("--k", k, "level");
    na->add_option("--valuations", valuations, "one valuation per line")->check(CLI::ExistingFile);

    auto* part = app.add_subcommand("partition", "-(1/N) log Z_N by thermodynamic integration");
    add_common(part, common);
    part->add_option("--k", k, "level");
    part->add_option("--sweeps", sweeps, "sweeps per leg including burn-in");
    part->add_flag("--force", force, "allow beta < 0 without a stability certificate");

    auto* cross = app.add_subcommand("crosscheck", "acceptance suite");
    add_common(cross, common);
    cross->add_option("--suite", suite, "suite name");
    cross->add_option("--criteria", criteria, "comma-separated subset, e.g. A3,A7");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: validation: " << e.what() << "\n";
        return 2;
    }

    kelab::ExperimentPlan plan;
    plan.kind = app.get_subcommands().front()->get_name();
    plan.force = force;
    plan.progress = &std::cout;
    try {
        if (!common.config.empty()) plan.config = kelab::Config::load(common.config);
    } catch (const kelab::ValidationError& e) {
        std::cerr << "error: validation: " << e.what() << "\n";
        return 2;
    }
    if (!common.seed.empty()) plan.options["seed"] = common.seed;
    if (!common.beta.empty()) plan.options["beta"] = common.beta;
    if (!k.empty()) plan.options["k"] = k;
    if (!n.empty()) plan.options["n"] = n;
    if (!sweeps.empty()) plan.options["sweeps"] = sweeps;
    if (!grid.empty()) plan.options["grid.nodes"] = grid;
    if (!box.empty()) plan.options["box"] = box;
    if (!valuations.empty()) plan.options["valuations"] = valuations;
    if (plan.kind == "crosscheck") {
        plan.options["suite"] = suite;
        if (!criteria.empty()) plan.options["criteria"] = criteria;
    }
    return kelab::run_with_exit_code(plan, common.out, std::cerr);
}
