#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rlsim/fabric.hpp"
#include "rlsim/netmodel.hpp"
#include "rlsim/scheduler.hpp"
#include "rlsim/workload.hpp"

namespace rlsim {

enum class Paradigm { OneStepAsync, SyncDisaggregated };

struct PipelineConfig {
    Paradigm paradigm = Paradigm::OneStepAsync;
    int n_steps = 4;
    int gen_gpus = 16;
    int train_gpus = 16;

    void validate() const;
};

enum class SchedulerPolicy { Orchestrated, Static };

// Everything one simulation run needs; built from the scenario file.
struct RunSpec {
    WorkloadConfig workload;
    std::vector<ParallelMode> modes;
    CostModel costs;
    SchedulerConfig scheduler;
    SchedulerPolicy policy = SchedulerPolicy::Orchestrated;
    std::string static_mode;        // Static policy: fixed mode name
    std::string initial_mode;       // Orchestrated: starting deployment
    TopologyKind topology = TopologyKind::RFabric;
    std::vector<PodSpec> pods;
    FabricParams fabric;
    PriceTable prices;
    TrainConfig train;
    PipelineConfig pipeline;
    SlackDefaults slacks;
    double prior_mean_response = 4096.0;  // step-0 length guess, tokens
    double prior_sigma = 1.0;             // spread of the step-0 length prior
    double intra_pod_bw_bps = 4.0e11;
    double response_bytes_per_sample = 2.0e4;
    double gen_tp_volume = 1.0e8;
    double gen_ep_volume = 1.0e8;
    double gen_af_volume = 5.0e7;
    std::uint64_t seed = 1;

    const ParallelMode& mode_by_name(const std::string& name) const;
    void validate() const;
};

struct DecisionRecord {
    double t = 0.0;
    int step = 0;
    std::string action;
    double delta_load = 0.0;
    std::vector<double> load_indices;
    int migrations = 0;
    bool planned = false;
    double obj_cur = 0.0;
    double obj_new = 0.0;
    double c_overhead = 0.0;
    bool accepted = false;
    bool kv_relaxed = false;
    std::string infeasible;
};

struct FabricEventRecord {
    double t = 0.0;
    std::string kind;      // materialize | apply | no-reconfig-slack | abort-infeasible
    std::string tmpl;
    int epoch = 0;
    double slack = 0.0;
    double t_ocs = 0.0;
    int circuits = 0;
    bool ok = true;
};

struct CommRecord {
    std::string phase;
    double start = 0.0;
    double duration = 0.0;
    double bytes = 0.0;
    int epoch = 0;
};

struct RemainingPoint {
    int step = 0;
    double t = 0.0;  // seconds since step start
    int remaining = 0;
};

struct TraceRow {
    int step = 0;
    int id = 0;
    int prompt_len = 0;
    int true_total_len = 0;
};

struct StepMetrics {
    int step = 0;
    double gen_makespan = 0.0;
    double train_time = 0.0;
    double sync_time = 0.0;
    double step_time = 0.0;
    long long samples = 0;
    long long tokens = 0;
    double samples_per_s = 0.0;
    double tokens_per_s = 0.0;
    int reconfig_count = 0;
    double reconfig_overhead = 0.0;
    int migrations = 0;
    double busy_max_min_ratio = 1.0;
    std::vector<double> busy_seconds;
    std::map<std::string, double> bytes_by_class;
};

struct Metrics {
    std::vector<StepMetrics> steps;
    std::vector<RemainingPoint> remaining;
    std::vector<DecisionRecord> decisions;
    std::vector<FabricEventRecord> fabric_events;
    std::vector<CommRecord> comms;
    std::vector<TraceRow> trace;
    std::vector<CircuitPlan> epochs;  // circuit plan per fabric epoch
    double total_time = 0.0;
    long long total_samples = 0;
    long long total_tokens = 0;
    double throughput_samples = 0.0;
    double throughput_tokens = 0.0;
};

// Train-side step model: linear compute plus the per-iteration collective
// times over the active topology (materializing templates when slack allows).
double run_train_step(double total_tokens, const TrainConfig& cfg, FabricState& fabric,
                      TopologyKind topology, const GenDeployment& gen, const SlackDefaults& slacks,
                      double now, std::vector<FabricEventRecord>* fabric_log = nullptr,
                      std::vector<CommRecord>* comm_log = nullptr,
                      std::map<std::string, double>* bytes_by_class = nullptr);

// Full deterministic pipeline run.
Metrics run_pipeline(const RunSpec& spec);

}  // namespace rlsim
