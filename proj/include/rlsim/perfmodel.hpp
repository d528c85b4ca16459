#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rlsim/workload.hpp"

namespace rlsim {

enum class ParallelKind { TP, EP, AFD };

std::string to_string(ParallelKind k);

// A candidate deployment shape with its profiled decode-latency parameters.
// A decode round over batch n takes base_step_time + per_request_step_cost*n
// seconds and yields one token per active request.
struct ParallelMode {
    std::string name;
    ParallelKind kind = ParallelKind::TP;
    int degree = 1;
    std::optional<std::pair<int, int>> afd_ratio;  // attention:FFN server ratio
    int gpus_required = 1;
    double base_step_time = 0.02;     // t0, seconds
    double per_request_step_cost = 1e-4;  // c, seconds/request
    long long kv_tokens_per_gpu = 100000;
    double prefill_rate = 40000.0;    // tokens/s
    int max_batch = 1 << 20;          // engine-side concurrent-sequence cap

    void validate() const;            // throws ConfigError
};

struct CostModel {
    double kv_bytes_per_token = 100000.0;
    double link_bw = 5.0e10;          // bytes/s for state migration
    double recompute_rate = 40000.0;  // tokens/s
    // keyed "prev->next" by mode name; "none->X" prices instance activation
    std::map<std::string, double> weight_reshard_time;

    void validate() const;
};

struct KVPolicy {
    double rho = 0.85;    // target utilization
    double delta = 0.5;   // tolerance band
    bool hard = true;     // enforce the band as a hard constraint
    bool soft_fallback = true;  // retry with the band relaxed when infeasible

    void validate() const;
};

// tokens/s of a decode round at the given batch size; 0 for an empty batch.
double decode_throughput(const ParallelMode& mode, int batch);

// Total KV tokens the instance can hold. AFD counts only attention servers.
long long kv_capacity(const ParallelMode& mode);

// KV-headroom-aware stable concurrency: floor(free_kv / mean_footprint).
int stable_concurrency(const ParallelMode& mode, long long free_kv, double mean_footprint);

// Fluid-drain completion estimate for a set of buckets on one instance:
// cohorts finish shortest-remaining-first, concurrency capped by the KV-
// derived stable concurrency. Infinite (sentinel) when throughput is zero.
double instance_completion_estimate(const std::vector<Bucket>& assigned, const ParallelMode& mode);

// Concurrency cap and saturated decode rate used by both the fluid estimate
// and the plan solver; pure in (buckets, mode).
int planning_concurrency_cap(const std::vector<Bucket>& assigned, const ParallelMode& mode);
double saturated_rate(const ParallelMode& mode, const std::vector<Bucket>& pending);

enum class MigrationMethod { None, Transfer, Recompute };

struct MigrationDecision {
    double seconds = 0.0;
    MigrationMethod method = MigrationMethod::None;
    double transfer_seconds = 0.0;
    double recompute_seconds = 0.0;
};

// Cheapest way to restore a request's KV state elsewhere: direct transfer of
// the KV cache vs recomputation of the generated prefix.
MigrationDecision migration_cost(long long kv_tokens, long long ctx_tokens, const CostModel& cm);

inline MigrationDecision migration_cost(const Request& r, const CostModel& cm) {
    return migration_cost(r.kv_tokens(), r.kv_tokens(), cm);
}

// Zero-cost when the request stays on its instance.
MigrationDecision migration_between(const Request& r, int src_instance, int dst_instance,
                                    const CostModel& cm);

// Reshard-table lookup for a mode change; "none" prices activation.
// Unknown pairs are a configuration error.
double reshard_time(const std::optional<std::string>& prev_mode, const std::string& next_mode,
                    const CostModel& cm);

// Mode-switch overhead: weight resharding plus KV-layout migration for the
// requests that stay resident on the reconfigured instance.
double switch_cost(const std::optional<ParallelMode>& prev, const ParallelMode& next,
                   const std::vector<BucketMember>& resident, const CostModel& cm);

}  // namespace rlsim
