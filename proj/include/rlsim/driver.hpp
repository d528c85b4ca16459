#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rlsim/scenario.hpp"

namespace rlsim {

struct RunOutput {
    std::string policy;
    std::string fabric;
    std::uint64_t seed = 0;
    Metrics metrics;
    CostBreakdown cost;

    std::string pair() const { return policy + "__" + fabric; }
};

// One (scheduler, fabric, seed) simulation, in memory.
RunOutput run_one(const ScenarioConfig& sc, const std::string& policy, const std::string& fabric,
                  std::uint64_t seed);

// Writes metrics.csv, summary.json, decisions.jsonl, fabric.jsonl,
// remaining.csv, comm.csv, trace.csv and epochs.json under
// out_dir/<pair>/<seed>/.
void write_run_outputs(const ScenarioConfig& sc, const RunOutput& out, const std::string& out_dir);

// CLI entry points; they print errors and map them to exit codes
// (0 ok, 1 runtime failure, 2 configuration error).
int cmd_run(const std::string& scenario_path, std::uint64_t seed, const std::string& out_dir);
int cmd_compare(const std::string& scenario_path, const std::vector<std::uint64_t>& seeds,
                const std::string& out_dir, const std::string& reference);
int cmd_sweep(const std::string& scenario_path, const std::string& grid_json,
              const std::string& out_dir);
int cmd_topo_dump(const std::string& scenario_path, std::uint64_t seed,
                  const std::string& out_dir);
int cmd_profile_dump(const std::string& scenario_path, const std::string& out_dir);

}  // namespace rlsim
