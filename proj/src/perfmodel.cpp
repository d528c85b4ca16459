#include "rlsim/perfmodel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rlsim {

std::string to_string(ParallelKind k) {
    switch (k) {
        case ParallelKind::TP: return "TP";
        case ParallelKind::EP: return "EP";
        case ParallelKind::AFD: return "AFD";
    }
    return "?";
}

void ParallelMode::validate() const {
    if (gpus_required < 1) throw ConfigError("mode " + name + ": gpus_required must be >= 1");
    if (!(base_step_time > 0.0)) throw ConfigError("mode " + name + ": base_step_time must be > 0");
    if (per_request_step_cost < 0.0) throw ConfigError("mode " + name + ": per_request_step_cost must be >= 0");
    if (kv_tokens_per_gpu <= 0) throw ConfigError("mode " + name + ": kv_tokens_per_gpu must be > 0");
    if (prefill_rate <= 0.0) throw ConfigError("mode " + name + ": prefill_rate must be > 0");
    if (max_batch < 1) throw ConfigError("mode " + name + ": max_batch must be >= 1");
    if (kind == ParallelKind::TP) {
        // TP stays within one node
        if (degree != 1 && degree != 2 && degree != 4 && degree != 8) {
            throw ConfigError("mode " + name + ": TP degree must be one of {1,2,4,8}");
        }
    }
    if (kind == ParallelKind::AFD) {
        if (!afd_ratio || afd_ratio->first < 1 || afd_ratio->second < 1) {
            throw ConfigError("mode " + name + ": AFD requires an attention:FFN ratio");
        }
    }
}

void CostModel::validate() const {
    if (!(kv_bytes_per_token > 0.0)) throw ConfigError("costs: kv_bytes_per_token must be > 0");
    if (!(link_bw > 0.0)) throw ConfigError("costs: link_bw must be > 0");
    if (!(recompute_rate > 0.0)) throw ConfigError("costs: recompute_rate must be > 0");
}

void KVPolicy::validate() const {
    if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("kv_policy: rho must be in (0,1]");
    if (!(delta >= 0.0 && delta < 1.0)) throw ConfigError("kv_policy: delta must be in [0,1)");
    if ((1.0 + delta) * rho > 1.0 + 1e-9) {
        throw ConfigError("kv_policy: (1+delta)*rho must not exceed 1");
    }
}

double decode_throughput(const ParallelMode& mode, int batch) {
    if (batch <= 0) return 0.0;
    return batch / (mode.base_step_time + mode.per_request_step_cost * batch);
}

long long kv_capacity(const ParallelMode& mode) {
    long long gpus = mode.gpus_required;
    if (mode.kind == ParallelKind::AFD && mode.afd_ratio) {
        // only attention servers hold KV
        long long a = mode.afd_ratio->first;
        long long f = mode.afd_ratio->second;
        gpus = mode.gpus_required * a / (a + f);
    }
    return mode.kv_tokens_per_gpu * gpus;
}

int stable_concurrency(const ParallelMode&, long long free_kv, double mean_footprint) {
    if (free_kv <= 0 || mean_footprint <= 0.0) return 0;
    return static_cast<int>(std::floor(static_cast<double>(free_kv) / mean_footprint));
}

namespace {

// Mean final KV footprint of the assigned work; bucket kv_demand already
// projects each member to its representative completion size.
double mean_final_footprint(const std::vector<Bucket>& assigned) {
    long long n = 0;
    double tot = 0.0;
    for (const auto& b : assigned) {
        n += b.count();
        tot += static_cast<double>(b.kv_demand);
    }
    if (n == 0) return 1.0;
    return std::max(tot / static_cast<double>(n), 1.0);
}

}  // namespace

int planning_concurrency_cap(const std::vector<Bucket>& assigned, const ParallelMode& mode) {
    double fp = mean_final_footprint(assigned);
    int cap = stable_concurrency(mode, kv_capacity(mode), fp);
    cap = std::min(cap, mode.max_batch);
    return std::max(cap, 1);
}

double saturated_rate(const ParallelMode& mode, const std::vector<Bucket>& pending) {
    int cap = planning_concurrency_cap(pending, mode);
    return decode_throughput(mode, cap);
}

double instance_completion_estimate(const std::vector<Bucket>& assigned, const ParallelMode& mode) {
    long long n_total = 0;
    for (const auto& b : assigned) n_total += b.count();
    if (n_total == 0) return 0.0;
    if (decode_throughput(mode, 1) <= 0.0) return std::numeric_limits<double>::infinity();

    int cap = planning_concurrency_cap(assigned, mode);

    // cohort drain: (remaining, count), admitted shortest-first under the cap
    struct Cohort { double remaining; long long count; };
    std::vector<Cohort> waiting;
    for (const auto& b : assigned) {
        if (b.count() > 0) waiting.push_back({static_cast<double>(b.rep_len), b.count()});
    }
    std::sort(waiting.begin(), waiting.end(),
              [](const Cohort& a, const Cohort& b) { return a.remaining < b.remaining; });

    std::vector<Cohort> active;
    std::size_t next = 0;
    long long active_n = 0;
    auto admit = [&]() {
        while (next < waiting.size() && active_n < cap) {
            long long take = std::min<long long>(cap - active_n, waiting[next].count);
            active.push_back({waiting[next].remaining, take});
            active_n += take;
            waiting[next].count -= take;
            if (waiting[next].count == 0) ++next;
        }
    };
    admit();

    double t = 0.0;
    while (active_n > 0) {
        double per_req_rate = 1.0 / (mode.base_step_time +
                                     mode.per_request_step_cost * static_cast<double>(active_n));
        double shortest = std::numeric_limits<double>::infinity();
        for (const auto& c : active) shortest = std::min(shortest, c.remaining);
        double dt = shortest / per_req_rate;
        t += dt;
        for (auto& c : active) c.remaining -= shortest;
        std::vector<Cohort> still;
        for (const auto& c : active) {
            if (c.remaining > 1e-9) {
                still.push_back(c);
            } else {
                active_n -= c.count;
            }
        }
        active = std::move(still);
        admit();
    }
    return t;
}

MigrationDecision migration_cost(long long kv_tokens, long long ctx_tokens, const CostModel& cm) {
    MigrationDecision d;
    d.transfer_seconds = static_cast<double>(kv_tokens) * cm.kv_bytes_per_token / cm.link_bw;
    d.recompute_seconds = static_cast<double>(ctx_tokens) / cm.recompute_rate;
    if (d.transfer_seconds <= d.recompute_seconds) {
        d.seconds = d.transfer_seconds;
        d.method = MigrationMethod::Transfer;
    } else {
        d.seconds = d.recompute_seconds;
        d.method = MigrationMethod::Recompute;
    }
    return d;
}

MigrationDecision migration_between(const Request& r, int src_instance, int dst_instance,
                                    const CostModel& cm) {
    if (src_instance == dst_instance) return {};
    return migration_cost(r, cm);
}

double reshard_time(const std::optional<std::string>& prev_mode, const std::string& next_mode,
                    const CostModel& cm) {
    std::string key = (prev_mode ? *prev_mode : std::string("none")) + "->" + next_mode;
    auto it = cm.weight_reshard_time.find(key);
    if (it == cm.weight_reshard_time.end()) {
        throw ConfigError("costs: no weight_reshard_time entry for '" + key + "'");
    }
    return it->second;
}

double switch_cost(const std::optional<ParallelMode>& prev, const ParallelMode& next,
                   const std::vector<BucketMember>& resident, const CostModel& cm) {
    if (prev && prev->name == next.name) return 0.0;
    double total = reshard_time(prev ? std::optional<std::string>(prev->name) : std::nullopt,
                                next.name, cm);
    for (const auto& m : resident) {
        total += migration_cost(m.kv_tokens, m.ctx_tokens, cm).seconds;
    }
    return total;
}

}  // namespace rlsim
