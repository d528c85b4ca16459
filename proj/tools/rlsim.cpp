#include <cstdint>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rlsim/driver.hpp"

int main(int argc, char** argv) {
    CLI::App app{"desk-scale simulator for disaggregated RL compute/network orchestration"};
    app.require_subcommand(1);

    std::string scenario, out_dir = "out", grid, reference, seeds_arg = "1";
    std::uint64_t seed = 1;

    auto add_common = [&](CLI::App* cmd, bool with_seed) {
        cmd->add_option("--scenario", scenario, "scenario JSON file")->required();
        cmd->add_option("--out", out_dir, "output directory");
        if (with_seed) cmd->add_option("--seed", seed, "workload seed");
    };

    auto* run = app.add_subcommand("run", "run every baseline pair of a scenario");
    add_common(run, true);

    auto* compare = app.add_subcommand("compare", "run baseline pairs over a seed list");
    add_common(compare, false);
    compare->add_option("--seeds", seeds_arg, "comma-separated seed list");
    compare->add_option("--reference", reference, "reference pair, scheduler/fabric");

    auto* sweep = app.add_subcommand("sweep", "cartesian parameter sweep");
    add_common(sweep, false);
    sweep->add_option("--grid", grid, "JSON object: config path -> value list")->required();

    auto* topo = app.add_subcommand("topo-dump", "dump the circuit plan per fabric epoch");
    add_common(topo, true);

    auto* prof = app.add_subcommand("profile-dump", "dump decode throughput curves per mode");
    add_common(prof, false);

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) return rlsim::cmd_run(scenario, seed, out_dir);
    if (compare->parsed()) {
        std::vector<std::uint64_t> seeds;
        std::string cur;
        for (char c : seeds_arg + ",") {
            if (c == ',') {
                if (!cur.empty()) seeds.push_back(std::stoull(cur));
                cur.clear();
            } else {
                cur += c;
            }
        }
        return rlsim::cmd_compare(scenario, seeds, out_dir, reference);
    }
    if (sweep->parsed()) return rlsim::cmd_sweep(scenario, grid, out_dir);
    if (topo->parsed()) return rlsim::cmd_topo_dump(scenario, seed, out_dir);
    if (prof->parsed()) return rlsim::cmd_profile_dump(scenario, out_dir);
    return 0;
}
