#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rlsim/fabric.hpp"
#include "rlsim/perfmodel.hpp"

namespace rlsim {

struct ConnectivityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class CollectiveAlgorithm { Ring, Direct };

struct CollectiveSpec {
    Primitive primitive = Primitive::AllReduce;
    std::vector<int> participants;   // global server ids
    double volume_per_rank = 0.0;    // bytes
    CollectiveAlgorithm algorithm = CollectiveAlgorithm::Ring;
    int m_sources = 0;               // M2N: first m participants send (0: half)
};

struct Flow {
    int src = 0;
    int dst = 0;
    double bytes = 0.0;
    double start_time = 0.0;
    std::vector<int> path;  // link ids; empty path = same-server, instantaneous
};

// Immutable per-event view of the active topology for flow calculations.
// Links carry time-dependent capacity so circuits inside a reconfiguration
// window contribute zero bandwidth.
class TopoView {
public:
    static TopoView from_fabric(const FabricState& S);
    static TopoView fat_tree(const FabricState& shape, int oversub_ratio);  // 1 or 3

    int n_servers() const { return n_servers_; }
    int server_id(const EndpointRef& e) const;
    EndpointRef endpoint_of(int server_id) const;

    // link ids along the route, or nullopt when the pair is disconnected
    std::optional<std::vector<int>> route(int src_server, int dst_server) const;

    double capacity(int link, double at_time) const;
    int n_links() const { return static_cast<int>(links_.size()); }
    // capacity change instants after `t` (circuit activations)
    std::vector<double> capacity_events_after(double t) const;

private:
    struct CapacitySlice {
        double active_from = 0.0;
        double bps = 0.0;
    };
    struct Link {
        std::vector<CapacitySlice> slices;
    };

    int add_link();
    void add_capacity(int link, double active_from, double bps);

    std::vector<PodSpec> pods_;
    bool is_fat_tree_ = false;
    int n_servers_ = 0;
    std::vector<Link> links_;
    std::vector<int> server_uplink_;           // per server
    std::vector<int> tor_uplink_;              // per tor (fat-tree oversub or trunk)
    std::vector<std::vector<int>> agg_pair_;   // dense [tor][tor] -> link id (-1 none)
    std::vector<std::vector<int>> core_pair_;  // dense [pod][pod] -> link id (-1 none)
    std::vector<int> server_pod_, server_tor_;
};

// Progressive-filling max-min fair rates (bits/s per flow) at one instant.
std::vector<double> max_min_rates(const std::vector<Flow>& flows, const TopoView& topo,
                                  double at_time = 0.0);

// Advances the flow set to completion; returns the makespan (seconds from
// start_time). `watched` restricts the makespan to a subset of flows while
// the rest keep contending (empty = all).
double flow_set_makespan(std::vector<Flow> flows, const TopoView& topo, double start_time = 0.0,
                         const std::vector<int>& watched = {});

// Communication time of one collective over the active topology.
double collective_time(const CollectiveSpec& spec, const TopoView& topo, double at_time = 0.0);

// Two-stage weight synchronization over a materialized distribution tree:
// pipelined transfer to each Gen pod root, then a local broadcast at the
// provisioned intra-pod bandwidth.
double weight_sync_time_tree(double params_bytes, const FabricState& S, const CircuitPlan& plan,
                             double intra_pod_bw_bps);

// Same transfer expressed as unicast flows over a static fabric (baselines);
// background flows keep contending but are not waited on.
double weight_sync_time_static(double params_bytes, const FabricState& shape,
                               const TopoView& topo, double intra_pod_bw_bps,
                               const std::vector<Flow>& background = {});

// Conservative slack from observed inter-phase gaps: min gap scaled by a
// safety factor. No history forces 0 (and therefore NoReconfig).
double slack_estimate(const std::vector<double>& gaps, double safety_factor = 0.8);

// ---------------------------------------------------------------------------
// Phase intents (per-iteration traffic classes)

struct TrainConfig {
    int dp = 2;
    int tp = 8;
    int pp = 1;
    int cp = 1;
    int ep = 1;
    int layers = 48;
    double param_bytes = 2.8e10;
    double grad_bytes = 2.8e10;
    double tp_volume_per_layer = 2.0e8;
    double pp_boundary_bytes = 1.0e8;
    double cp_volume = 5.0e8;
    double ep_volume = 5.0e8;
    double compute_base_s = 5.0;
    double compute_per_token_s = 1.0e-5;
    bool cp_all_to_all = false;  // CP defaults to P2P

    void validate() const;
};

struct SlackDefaults {
    double gen_small = 0.0005;    // sub-millisecond
    double train_medium = 0.05;   // tens of milliseconds
    double train_large = 0.3;     // hundreds of milliseconds
    double inter_stage = 3.0;     // seconds
    double gen_pd = 1.0;
};

struct GenInstancePlacement {
    ParallelKind kind = ParallelKind::TP;
    std::vector<EndpointRef> servers;
    int attention_servers = 0;  // AFD only
};

struct GenDeployment {
    std::vector<GenInstancePlacement> instances;
    double gen_tp_volume = 1.0e8;
    double gen_ep_volume = 1.0e8;
    double gen_af_volume = 5.0e7;
    double response_bytes = 1.0e7;
};

std::vector<PhaseIntent> build_phase_intents(const TrainConfig& train, const GenDeployment& gen,
                                             const FabricState& shape,
                                             const SlackDefaults& slack = {});

// Proxy-side demand summary for one intent: per-pair bytes normalized to a
// 1 s window at the sources' peak injection rate, at the granularity the
// target OCS layer plans on.
DemandSummary demand_from_intent(const PhaseIntent& intent, const FabricState& shape,
                                 DemandGranularity granularity);

// Collective realization of an intent over a topology view.
CollectiveSpec spec_from_intent(const PhaseIntent& intent, const TopoView& topo);

}  // namespace rlsim
