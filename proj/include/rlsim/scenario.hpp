#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rlsim/simengine.hpp"

namespace rlsim {

// Parsed scenario file: a policy-neutral RunSpec plus the baseline matrix.
struct ScenarioConfig {
    RunSpec base;
    std::vector<std::pair<std::string, std::string>> baselines;  // (scheduler, fabric)
    std::map<std::string, std::string> baseline_defs;            // name -> mode
    double intra_pod_bw_bps = 4.0e11;
    std::uint64_t content_hash = 0;
    std::string source_path;
    std::string raw;  // original JSON text, kept for sweep overrides
};

ScenarioConfig parse_scenario(const std::string& json_text, const std::string& name);
ScenarioConfig load_scenario(const std::string& path);

// Resolves one (scheduler, fabric) pair into a runnable spec. The seed
// overrides the workload seed for provenance.
RunSpec make_run_spec(const ScenarioConfig& sc, const std::string& policy,
                      const std::string& fabric_name, std::uint64_t seed);

}  // namespace rlsim
