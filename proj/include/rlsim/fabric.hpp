#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rlsim/workload.hpp"  // ConfigError

namespace rlsim {

enum class PodRole { Train, Gen };

struct PodSpec {
    std::string name;
    PodRole role = PodRole::Gen;
    int tors = 2;
    int servers_per_tor = 4;
    int nics_per_server = 8;
};

struct EndpointRef {
    int pod = 0;
    int tor = 0;     // local to pod
    int server = 0;  // local to tor

    bool operator==(const EndpointRef& o) const {
        return pod == o.pod && tor == o.tor && server == o.server;
    }
};

enum class OcsLayer { Agg, Core };

// One optical cross-connect. Agg circuits join two ToRs (global ids); core
// circuits join two pods. demand_bps orders repair decisions.
struct Circuit {
    OcsLayer layer = OcsLayer::Core;
    int port_a = 0;
    int port_b = 0;
    int entity_a = 0;  // global tor id (agg) or pod id (core)
    int entity_b = 0;
    double bandwidth_bps = 0.0;
    double demand_bps = 0.0;
    double active_from = 0.0;  // carries zero bandwidth before this time
};

enum class TemplateKind { InterPodMesh, IntraPodIsolated, MulticastTree, BipartiteM2N };

std::string to_string(TemplateKind t);

struct CircuitPlan {
    std::vector<Circuit> circuits;
    TemplateKind tmpl = TemplateKind::InterPodMesh;
    int epoch = 0;
    bool feasible = true;  // false when port budgets truncated the plan
};

enum class DemandGranularity { PodLevel, TorLevel };

struct DemandEntry {
    int src = 0;  // pod id or global tor id
    int dst = 0;
    double bytes = 0.0;
};

struct DemandSummary {
    DemandGranularity granularity = DemandGranularity::PodLevel;
    std::vector<DemandEntry> entries;
    double window_s = 1.0;  // observation window the bytes were gathered over
};

struct DemandEdge {
    int a = 0;
    int b = 0;
    double rate_bps = 0.0;
    int circuits = 0;
};

struct DemandGraph {
    DemandGranularity granularity = DemandGranularity::PodLevel;
    std::vector<DemandEdge> edges;  // sorted by descending rate
};

enum class PhaseKind {
    TrainDP, TrainTP, TrainPP, TrainCP, TrainEP,
    GenTP, GenEP, GenPD, GenAF,
    WeightSync, ResponseStream,
};

std::string to_string(PhaseKind p);

enum class Primitive { AllReduce, AllToAll, P2P, M2N, T2G, G2T, Broadcast };

std::string to_string(Primitive p);

// A communication phase descriptor: what is about to happen on the wire and
// how much slack exists before it starts.
struct PhaseIntent {
    PhaseKind phase = PhaseKind::TrainDP;
    Primitive primitive = Primitive::AllReduce;
    std::vector<EndpointRef> group;
    double volume_bytes = 0.0;
    double slack_s = 0.0;   // W
    int m_sources = 0;      // M2N: leading senders in group (0: half)

    void validate() const;
};

struct OcsProfile {
    std::string name;
    double reconfig_delay_s = 0.010;
    int radix = 320;
};

// Named device profiles; defaults to the 3D MEMS row.
const std::vector<OcsProfile>& ocs_profiles();
OcsProfile ocs_profile_by_name(const std::string& name);

struct FabricParams {
    double b_link_bps = 4.0e11;  // 400 Gb/s
    double t_ocs_s = 0.010;
    int ocs_radix = 320;
    int agg_ports_per_tor = 8;
    int core_ports_per_pod = 24;
    double prune_frac = 0.05;          // of b_link
    double stream_slice_bps = 4.0e11;  // reserved Gen->Train response slice
    int sync_fanout = 0;               // 0: ports permitting, a star
    double sync_chunk_bytes = 1 << 26;

    void validate() const;
};

// Fabric state: pod shapes, the two logical OCS layers, and the currently
// materialized plan per template slot.
struct FabricState {
    std::vector<PodSpec> pods;
    FabricParams params;
    int epoch = 0;
    std::map<TemplateKind, CircuitPlan> active;

    int n_pods() const { return static_cast<int>(pods.size()); }
    int n_tors() const;
    int tor_global(int pod, int tor_local) const;
    int pod_of_tor(int tor_global) const;
    int tor_local(int tor_global) const;
    std::vector<int> pods_with_role(PodRole role) const;

    std::vector<const Circuit*> all_circuits() const;
    // invariant sweep: port exclusivity, radix bounds, endpoint sanity
    std::vector<std::string> check_invariants() const;
};

FabricState make_fabric(const std::vector<PodSpec>& pods, const FabricParams& params);

// Algorithm-2 steps -------------------------------------------------------

TemplateKind select_template(const PhaseIntent& intent);

DemandGraph aggregate_prune_quantize(const DemandSummary& D, const PhaseIntent& intent,
                                     double b_link_bps, double prune_frac);

// Greedy largest-demand-first circuit allocation under port budgets. Ports
// held by the same template's previous plan count as free (that plan is
// being replaced).
CircuitPlan allocate_circuits(TemplateKind tpl, const DemandGraph& G, const FabricState& S);

struct RepairResult {
    CircuitPlan plan;
    bool ok = true;
    std::vector<std::string> dropped;  // human-readable drop reasons
};

RepairResult validate_and_repair(const CircuitPlan& plan, const FabricState& S);

enum class CommitDecision { Commit, NoReconfigSlack, AbortInfeasible };

std::string to_string(CommitDecision d);

struct Schedule {
    CommitDecision decision = CommitDecision::NoReconfigSlack;
    double start = 0.0;  // reconfiguration window start
    double ready = 0.0;  // circuits usable from here
    bool committed() const { return decision == CommitDecision::Commit; }
};

// Gate: no commit when the slack cannot absorb the OCS delay.
Schedule lookahead_commit(const CircuitPlan& plan, bool plan_ok, double slack_s,
                          const FabricState& S, double now);

// Installs the plan into its template slot at commit_time. Circuits changed
// by the swap carry zero bandwidth until commit_time + T_ocs.
void apply_plan(FabricState& S, const CircuitPlan& plan, double commit_time);

// Full Algorithm-2 pipeline; applies the plan when the gate commits.
struct MaterializeResult {
    TemplateKind tmpl = TemplateKind::InterPodMesh;
    CircuitPlan plan;
    Schedule schedule;
    bool repaired_ok = true;
    bool applied = false;
};

MaterializeResult materialize_topology(const PhaseIntent& intent, const DemandSummary& D,
                                       double slack_s, FabricState& S, double now);

// Cost model ---------------------------------------------------------------

enum class TopologyKind { FatTree, FatTreeOs3, RFabric };

std::string to_string(TopologyKind k);
TopologyKind topology_from_string(const std::string& s);

struct PriceTable {
    std::map<int, double> eps_per_radix;
    std::map<int, double> ocs_per_radix;
    double transceiver_per_port = 2000.0;
    int eps_radix = 64;

    void validate() const;
};

struct CostBreakdown {
    long long eps_switches = 0;
    long long ocs_devices = 0;
    long long transceivers = 0;
    double eps_cost = 0.0;
    double ocs_cost = 0.0;
    double transceiver_cost = 0.0;
    double total = 0.0;
};

// Device and transceiver counts from closed-form Clos sizing (electrical
// fabrics) or the ToR+OCS layering (rfabric).
CostBreakdown network_cost(TopologyKind kind, const std::vector<PodSpec>& pods,
                           const FabricParams& params, const PriceTable& price);

}  // namespace rlsim
