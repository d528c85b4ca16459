#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rlsim/perfmodel.hpp"
#include "rlsim/workload.hpp"

namespace rlsim {

// One generation worker. kv_demand is the sum of kv_tokens over all requests
// assigned to it (running and waiting); free KV is capacity minus demand.
struct Instance {
    int id = 0;
    ParallelMode mode;
    std::vector<int> q_run;
    std::vector<int> q_wait;
    double service_rate = 0.0;   // exponentially smoothed observed tokens/s
    long long kv_demand = 0;

    long long free_kv() const { return std::max<long long>(kv_capacity(mode) - kv_demand, 0); }
    int queue_len() const { return static_cast<int>(q_run.size() + q_wait.size()); }
};

struct Cluster {
    std::vector<Instance> instances;
    std::vector<Request> requests;   // indexed by request id

    Request& req(int id) { return requests.at(id); }
    const Request& req(int id) const { return requests.at(id); }
    int pending_count() const;
    bool has_active_requests() const;
    // mean final footprint (kv now + estimated remaining) over pending requests
    double mean_footprint(const LengthDistribution& dist, bool oracle_lengths) const;
};

struct SchedulerConfig {
    double theta = 0.25;        // LoadIndex imbalance threshold
    double dt_pro = 30.0;       // proactive period, sim seconds
    double dt_react = 5.0;      // reactive period, sim seconds
    double epsilon = 1.0;       // plan acceptance margin, seconds
    int g_total = 16;
    KVPolicy kv_policy;
    std::vector<ParallelMode> candidate_modes;

    // wave-lifecycle pruning watermarks
    int early_pending = 256;
    int late_pending = 32;
    int throughput_degree_max = 4;
    int latency_degree_min = 8;
    double skew_threshold = 3.0;  // max/mean remaining marking a long tail

    // solver controls
    double exact_budget = 2.0e6;  // evaluation estimate below which search is exact
    int beam_width = 16;
    int max_slots = 16;

    bool proactive = true;
    bool reactive = true;
    bool oracle_lengths = false;

    void validate() const;
};

struct WaveStats {
    int pending = 0;
    double skew = 1.0;   // max remaining / mean remaining
};

WaveStats wave_stats(const std::vector<Bucket>& buckets);

// Wave-lifecycle candidate pruning: early waves keep throughput-oriented
// modes, drained or long-tailed waves keep latency-optimized ones. Never
// returns an empty set.
std::vector<ParallelMode> prune_candidates(const WaveStats& phase, const SchedulerConfig& cfg);

// ---------------------------------------------------------------------------
// Plan solving

struct SlotState {
    std::optional<std::string> prev_mode;  // mode name if the slot currently runs
};

struct SolveInputs {
    std::vector<Bucket> buckets;
    std::vector<SlotState> slots;
    std::vector<ParallelMode> candidates;
    CostModel cm;
    SchedulerConfig cfg;
};

struct Plan {
    std::vector<int> slot_mode;    // candidate index per slot, -1 inactive
    std::vector<int> bucket_slot;  // slot index per bucket
    double makespan_z = 0.0;       // linearized makespan component
    double migration_total = 0.0;
    double switch_total = 0.0;
    double objective = 0.0;        // z + migration + switch
    bool kv_relaxed = false;
    int n_switches = 0;
    long long n_migrations = 0;
};

enum class InfeasibleReason { None, NoBuckets, NoCandidates, GpuBudget, KvBalance };

std::string to_string(InfeasibleReason r);

struct PlanResult {
    std::optional<Plan> plan;
    InfeasibleReason reason = InfeasibleReason::None;
    bool ok() const { return plan.has_value(); }
};

// Minimizes z + sum(migration) + sum(switch) subject to the GPU budget, the
// KV-balance band and unique assignment. Exact search below the evaluation
// budget, beam search + LPT + local swaps above it.
PlanResult solve_plan(const SolveInputs& in);

// Standalone feasibility validator for a returned plan (budget, KV band,
// unique assignment / activation coupling). Empty result means feasible.
std::vector<std::string> validate_plan(const Plan& plan, const SolveInputs& in);

// Fluid-drain makespan of a plan's assignment (used for plan acceptance).
double plan_fluid_makespan(const Plan& plan, const SolveInputs& in);

// Max fluid completion estimate over instances for their currently assigned
// pending work.
double estimate_makespan(const Cluster& cluster, const LengthDistribution& dist,
                         bool oracle_lengths);

// ---------------------------------------------------------------------------
// Reactive balancing

// Congestion score: normalized queue depth over KV-limited stable concurrency,
// scaled by inverse service rate. Ranking-only metric.
double load_index(const Instance& w, double mean_footprint);

struct Migration {
    int request_id = 0;
    int from_instance = 0;
    int to_instance = 0;
    double seconds = 0.0;
    MigrationMethod method = MigrationMethod::None;
};

// Conservative greedy balancing: moves shortest-context waiting requests from
// the most to the least loaded instance while the LoadIndex spread exceeds
// theta and the destination can host the KV without shrinking its effective
// batch. Mutates queues and KV accounting; returns the migrations applied.
std::vector<Migration> rebalance(Cluster& cluster, const SchedulerConfig& cfg,
                                 const CostModel& cm, double mean_footprint);

// ---------------------------------------------------------------------------
// Orchestration loop

enum class ActionKind { None, Balanced, Reconfigured };

std::string to_string(ActionKind k);

struct TickAction {
    ActionKind kind = ActionKind::None;
    std::vector<Migration> migrations;
    std::optional<Plan> plan;              // accepted plan, if any
    std::vector<Bucket> plan_buckets;      // bucket set the plan indexes into
    std::vector<ParallelMode> plan_candidates;
    bool planned = false;                  // proactive planning ran this tick
    double obj_cur = 0.0;
    double obj_new = 0.0;
    double c_overhead = 0.0;
    double delta_load = 0.0;
    std::vector<double> load_indices;
    InfeasibleReason infeasible = InfeasibleReason::None;
};

class Orchestrator {
public:
    explicit Orchestrator(SchedulerConfig cfg);

    // One reactive-period tick: balances, and every dt_pro re-plans. The
    // first tick always plans. The caller executes accepted plans.
    TickAction tick(double now, Cluster& cluster, const LengthDistribution& dist,
                    const CostModel& cm);

    const SchedulerConfig& config() const { return cfg_; }

private:
    SchedulerConfig cfg_;
    bool first_tick_ = true;
    double t_last_proactive_ = 0.0;
};

}  // namespace rlsim
