#include "rlsim/fabric.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "rlsim/util.hpp"

namespace rlsim {

std::string to_string(TemplateKind t) {
    switch (t) {
        case TemplateKind::InterPodMesh: return "inter-pod-mesh";
        case TemplateKind::IntraPodIsolated: return "intra-pod-isolated";
        case TemplateKind::MulticastTree: return "multicast-tree";
        case TemplateKind::BipartiteM2N: return "bipartite-m2n";
    }
    return "?";
}

std::string to_string(PhaseKind p) {
    switch (p) {
        case PhaseKind::TrainDP: return "train-dp";
        case PhaseKind::TrainTP: return "train-tp";
        case PhaseKind::TrainPP: return "train-pp";
        case PhaseKind::TrainCP: return "train-cp";
        case PhaseKind::TrainEP: return "train-ep";
        case PhaseKind::GenTP: return "gen-tp";
        case PhaseKind::GenEP: return "gen-ep";
        case PhaseKind::GenPD: return "gen-pd";
        case PhaseKind::GenAF: return "gen-af";
        case PhaseKind::WeightSync: return "weight-sync";
        case PhaseKind::ResponseStream: return "response-stream";
    }
    return "?";
}

std::string to_string(Primitive p) {
    switch (p) {
        case Primitive::AllReduce: return "allreduce";
        case Primitive::AllToAll: return "alltoall";
        case Primitive::P2P: return "p2p";
        case Primitive::M2N: return "m2n";
        case Primitive::T2G: return "t2g";
        case Primitive::G2T: return "g2t";
        case Primitive::Broadcast: return "broadcast";
    }
    return "?";
}

std::string to_string(CommitDecision d) {
    switch (d) {
        case CommitDecision::Commit: return "commit";
        case CommitDecision::NoReconfigSlack: return "no-reconfig-slack";
        case CommitDecision::AbortInfeasible: return "abort-infeasible";
    }
    return "?";
}

std::string to_string(TopologyKind k) {
    switch (k) {
        case TopologyKind::FatTree: return "fat-tree";
        case TopologyKind::FatTreeOs3: return "fat-tree-os3";
        case TopologyKind::RFabric: return "rfabric";
    }
    return "?";
}

TopologyKind topology_from_string(const std::string& s) {
    if (s == "fat-tree") return TopologyKind::FatTree;
    if (s == "fat-tree-os3") return TopologyKind::FatTreeOs3;
    if (s == "rfabric") return TopologyKind::RFabric;
    throw ConfigError("unknown topology kind '" + s + "'");
}

void PhaseIntent::validate() const {
    if (group.empty()) throw ConfigError("phase intent: empty group");
    if (volume_bytes < 0.0) throw ConfigError("phase intent: negative volume");
    if (slack_s < 0.0) throw ConfigError("phase intent: negative slack");
}

const std::vector<OcsProfile>& ocs_profiles() {
    static const std::vector<OcsProfile> profiles = {
        {"rotornet", 0.00001, 128},
        {"3d-mems", 0.010, 320},
        {"piezo", 0.025, 576},
        {"liquid-crystal", 0.100, 512},
        {"robotic", 120.0, 1008},
    };
    return profiles;
}

OcsProfile ocs_profile_by_name(const std::string& name) {
    for (const auto& p : ocs_profiles()) {
        if (p.name == name) return p;
    }
    throw ConfigError("unknown OCS profile '" + name + "'");
}

void FabricParams::validate() const {
    if (!(b_link_bps > 0.0)) throw ConfigError("fabric: b_link must be > 0");
    if (t_ocs_s < 0.0) throw ConfigError("fabric: t_ocs must be >= 0");
    if (ocs_radix < 2) throw ConfigError("fabric: ocs_radix must be >= 2");
    if (agg_ports_per_tor < 1) throw ConfigError("fabric: agg_ports_per_tor must be >= 1");
    if (core_ports_per_pod < 1) throw ConfigError("fabric: core_ports_per_pod must be >= 1");
    if (prune_frac < 0.0 || prune_frac >= 1.0) throw ConfigError("fabric: prune_frac in [0,1)");
}

int FabricState::n_tors() const {
    int n = 0;
    for (const auto& p : pods) n += p.tors;
    return n;
}

int FabricState::tor_global(int pod, int tor_local) const {
    int base = 0;
    for (int i = 0; i < pod; ++i) base += pods[i].tors;
    return base + tor_local;
}

int FabricState::pod_of_tor(int tor) const {
    int base = 0;
    for (int i = 0; i < n_pods(); ++i) {
        if (tor < base + pods[i].tors) return i;
        base += pods[i].tors;
    }
    return -1;
}

int FabricState::tor_local(int tor) const {
    int pod = pod_of_tor(tor);
    int base = 0;
    for (int i = 0; i < pod; ++i) base += pods[i].tors;
    return tor - base;
}

std::vector<int> FabricState::pods_with_role(PodRole role) const {
    std::vector<int> out;
    for (int i = 0; i < n_pods(); ++i) {
        if (pods[i].role == role) out.push_back(i);
    }
    return out;
}

std::vector<const Circuit*> FabricState::all_circuits() const {
    std::vector<const Circuit*> out;
    for (const auto& [tmpl, plan] : active) {
        for (const auto& c : plan.circuits) out.push_back(&c);
    }
    return out;
}

namespace {

int port_owner_entity(const FabricState& S, OcsLayer layer, int port) {
    if (layer == OcsLayer::Agg) return port / S.params.agg_ports_per_tor;
    return port / S.params.core_ports_per_pod;
}

int ports_per_entity(const FabricState& S, OcsLayer layer) {
    return layer == OcsLayer::Agg ? S.params.agg_ports_per_tor : S.params.core_ports_per_pod;
}

int entity_count(const FabricState& S, OcsLayer layer) {
    return layer == OcsLayer::Agg ? S.n_tors() : S.n_pods();
}

}  // namespace

std::vector<std::string> FabricState::check_invariants() const {
    std::vector<std::string> errs;
    std::set<std::pair<int, int>> used;  // (layer, port)
    int conns[2] = {0, 0};
    for (const Circuit* c : all_circuits()) {
        int layer = static_cast<int>(c->layer);
        conns[layer]++;
        for (int port : {c->port_a, c->port_b}) {
            if (port < 0 || port >= params.ocs_radix) {
                errs.push_back("port " + std::to_string(port) + " outside radix");
            }
            if (!used.insert({layer, port}).second) {
                errs.push_back("port " + std::to_string(port) + " reused on layer " +
                               std::to_string(layer));
            }
        }
        if (c->port_a == c->port_b) errs.push_back("degenerate circuit (same port)");
        int ea = port_owner_entity(*this, c->layer, c->port_a);
        int eb = port_owner_entity(*this, c->layer, c->port_b);
        if (ea != c->entity_a || eb != c->entity_b) {
            errs.push_back("circuit endpoint/port ownership mismatch");
        }
    }
    for (int layer = 0; layer < 2; ++layer) {
        if (conns[layer] > params.ocs_radix / 2) {
            errs.push_back("layer " + std::to_string(layer) + " exceeds radix/2 cross-connects");
        }
    }
    return errs;
}

FabricState make_fabric(const std::vector<PodSpec>& pods, const FabricParams& params) {
    params.validate();
    FabricState s;
    s.pods = pods;
    s.params = params;
    if (s.n_tors() * params.agg_ports_per_tor > params.ocs_radix) {
        throw ConfigError("fabric: ToR agg ports exceed agg OCS radix");
    }
    if (s.n_pods() * params.core_ports_per_pod > params.ocs_radix) {
        throw ConfigError("fabric: pod core ports exceed core OCS radix");
    }
    return s;
}

TemplateKind select_template(const PhaseIntent& intent) {
    switch (intent.phase) {
        case PhaseKind::TrainDP:
            return TemplateKind::InterPodMesh;
        case PhaseKind::TrainTP:
        case PhaseKind::TrainPP:
        case PhaseKind::TrainCP:
        case PhaseKind::TrainEP:
        case PhaseKind::GenTP:
        case PhaseKind::GenEP:
        case PhaseKind::ResponseStream:
            return TemplateKind::IntraPodIsolated;
        case PhaseKind::GenPD:
        case PhaseKind::GenAF:
            return TemplateKind::BipartiteM2N;
        case PhaseKind::WeightSync:
            return TemplateKind::MulticastTree;
    }
    throw ConfigError("select_template: unknown phase");
}

DemandGraph aggregate_prune_quantize(const DemandSummary& D, const PhaseIntent&,
                                     double b_link_bps, double prune_frac) {
    DemandGraph g;
    g.granularity = D.granularity;
    double window = D.window_s > 0.0 ? D.window_s : 1.0;
    std::map<std::pair<int, int>, double> agg;
    for (const auto& e : D.entries) {
        if (e.src == e.dst || e.bytes <= 0.0) continue;
        auto key = std::minmax(e.src, e.dst);
        agg[{key.first, key.second}] += e.bytes;
    }
    for (const auto& [key, bytes] : agg) {
        double rate = bytes * 8.0 / window;
        if (rate < prune_frac * b_link_bps) continue;
        DemandEdge edge;
        edge.a = key.first;
        edge.b = key.second;
        edge.rate_bps = rate;
        edge.circuits = static_cast<int>(std::ceil(rate / b_link_bps));
        g.edges.push_back(edge);
    }
    std::sort(g.edges.begin(), g.edges.end(), [](const DemandEdge& x, const DemandEdge& y) {
        if (x.rate_bps != y.rate_bps) return x.rate_bps > y.rate_bps;
        if (x.a != y.a) return x.a < y.a;
        return x.b < y.b;
    });
    return g;
}

namespace {

// Port occupancy for one allocation run: ports held by other templates are
// busy; the slot being replaced is free.
struct PortBook {
    const FabricState& S;
    TemplateKind replacing;
    std::set<std::pair<int, int>> busy;  // (layer, port)

    PortBook(const FabricState& s, TemplateKind tmpl) : S(s), replacing(tmpl) {
        for (const auto& [t, plan] : S.active) {
            if (t == replacing) continue;
            for (const auto& c : plan.circuits) {
                busy.insert({static_cast<int>(c.layer), c.port_a});
                busy.insert({static_cast<int>(c.layer), c.port_b});
            }
        }
    }

    // lowest free port owned by the entity, -1 when exhausted
    int take(OcsLayer layer, int entity) {
        int per = ports_per_entity(S, layer);
        if (entity < 0 || entity >= entity_count(S, layer)) return -1;
        for (int p = entity * per; p < (entity + 1) * per; ++p) {
            if (p >= S.params.ocs_radix) break;
            if (busy.insert({static_cast<int>(layer), p}).second) return p;
        }
        return -1;
    }

    int free_count(OcsLayer layer, int entity) const {
        int per = ports_per_entity(S, layer);
        int n = 0;
        for (int p = entity * per; p < (entity + 1) * per; ++p) {
            if (p >= S.params.ocs_radix) break;
            if (!busy.count({static_cast<int>(layer), p})) ++n;
        }
        return n;
    }
};

bool add_circuit(CircuitPlan& plan, PortBook& book, OcsLayer layer, int ea, int eb,
                 double b_link, double demand) {
    int pa = book.take(layer, ea);
    if (pa < 0) return false;
    int pb = book.take(layer, eb);
    if (pb < 0) return false;  // pa stays consumed; plan is flagged infeasible anyway
    Circuit c;
    c.layer = layer;
    c.port_a = pa;
    c.port_b = pb;
    c.entity_a = ea;
    c.entity_b = eb;
    c.bandwidth_bps = b_link;
    c.demand_bps = demand;
    plan.circuits.push_back(c);
    return true;
}

void allocate_from_edges(CircuitPlan& plan, PortBook& book, OcsLayer layer,
                         const DemandGraph& G, double b_link) {
    for (const auto& e : G.edges) {
        for (int i = 0; i < e.circuits; ++i) {
            if (!add_circuit(plan, book, layer, e.a, e.b, b_link, e.rate_bps)) {
                plan.feasible = false;
                return;
            }
        }
    }
}

}  // namespace

CircuitPlan allocate_circuits(TemplateKind tpl, const DemandGraph& G, const FabricState& S) {
    CircuitPlan plan;
    plan.tmpl = tpl;
    plan.epoch = S.epoch + 1;
    PortBook book(S, tpl);
    double b_link = S.params.b_link_bps;

    switch (tpl) {
        case TemplateKind::InterPodMesh: {
            if (G.granularity != DemandGranularity::PodLevel) {
                throw ConfigError("inter-pod mesh expects pod-level demand");
            }
            allocate_from_edges(plan, book, OcsLayer::Core, G, b_link);
            break;
        }
        case TemplateKind::BipartiteM2N:
        case TemplateKind::IntraPodIsolated: {
            if (G.granularity != DemandGranularity::TorLevel) {
                throw ConfigError("intra-pod templates expect tor-level demand");
            }
            allocate_from_edges(plan, book, OcsLayer::Agg, G, b_link);
            if (tpl == TemplateKind::IntraPodIsolated) {
                // reserved core slice for streaming responses back to Train,
                // spread round-robin over the Train pods
                auto train = S.pods_with_role(PodRole::Train);
                auto gen = S.pods_with_role(PodRole::Gen);
                if (!train.empty()) {
                    int per_pod = std::max(1, static_cast<int>(std::ceil(
                                                  S.params.stream_slice_bps / b_link)));
                    for (std::size_t gi = 0; gi < gen.size(); ++gi) {
                        int tp = train[gi % train.size()];
                        for (int i = 0; i < per_pod; ++i) {
                            if (!add_circuit(plan, book, OcsLayer::Core, gen[gi], tp, b_link,
                                             S.params.stream_slice_bps)) {
                                plan.feasible = false;
                            }
                        }
                    }
                }
            }
            break;
        }
        case TemplateKind::MulticastTree: {
            // point-to-point circuits in a tree layout from the Train DP
            // source to each Gen pod's designated root
            auto train = S.pods_with_role(PodRole::Train);
            auto gen = S.pods_with_role(PodRole::Gen);
            if (train.empty() || gen.empty()) break;
            int root = train.front();
            std::vector<int> frontier{root};
            std::size_t next_child = 0;
            while (next_child < gen.size()) {
                std::vector<int> new_frontier;
                bool progress = false;
                for (int parent : frontier) {
                    int budget = book.free_count(OcsLayer::Core, parent);
                    if (parent != root) budget = std::max(budget, 0);
                    if (S.params.sync_fanout > 0) budget = std::min(budget, S.params.sync_fanout);
                    while (budget-- > 0 && next_child < gen.size()) {
                        int child = gen[next_child];
                        if (!add_circuit(plan, book, OcsLayer::Core, parent, child, b_link,
                                         b_link)) {
                            plan.feasible = false;
                            return plan;
                        }
                        ++next_child;
                        new_frontier.push_back(child);
                        progress = true;
                    }
                }
                if (!progress) {
                    plan.feasible = false;
                    break;
                }
                frontier = std::move(new_frontier);
            }
            break;
        }
    }
    return plan;
}

RepairResult validate_and_repair(const CircuitPlan& plan, const FabricState& S) {
    RepairResult res;
    res.plan = plan;

    // demanded pairs present before repair, to detect total loss
    std::set<std::pair<int, int>> demanded;
    for (const auto& c : plan.circuits) {
        demanded.insert(std::minmax(c.entity_a, c.entity_b));
    }

    // busy ports held by other templates
    std::set<std::pair<int, int>> external;
    for (const auto& [t, p] : S.active) {
        if (t == plan.tmpl) continue;
        for (const auto& c : p.circuits) {
            external.insert({static_cast<int>(c.layer), c.port_a});
            external.insert({static_cast<int>(c.layer), c.port_b});
        }
    }

    // drop lowest-demand conflicting circuits until constraints hold
    std::vector<Circuit> keep = res.plan.circuits;
    std::stable_sort(keep.begin(), keep.end(), [](const Circuit& a, const Circuit& b) {
        return a.demand_bps > b.demand_bps;
    });
    std::vector<Circuit> accepted;
    std::set<std::pair<int, int>> used = external;
    int conns[2] = {0, 0};
    for (const auto& [t, p] : S.active) {
        if (t == plan.tmpl) continue;
        for (const auto& c : p.circuits) conns[static_cast<int>(c.layer)]++;
    }
    for (const auto& c : keep) {
        int layer = static_cast<int>(c.layer);
        bool bad = false;
        std::string why;
        if (c.port_a < 0 || c.port_a >= S.params.ocs_radix || c.port_b < 0 ||
            c.port_b >= S.params.ocs_radix) {
            bad = true;
            why = "port outside radix";
        } else if (c.port_a == c.port_b) {
            bad = true;
            why = "degenerate circuit";
        } else if (used.count({layer, c.port_a}) || used.count({layer, c.port_b})) {
            bad = true;
            why = "port conflict";
        } else if (conns[layer] + 1 > S.params.ocs_radix / 2) {
            bad = true;
            why = "radix cross-connect budget";
        } else if (port_owner_entity(S, c.layer, c.port_a) != c.entity_a ||
                   port_owner_entity(S, c.layer, c.port_b) != c.entity_b) {
            bad = true;
            why = "port ownership mismatch";
        }
        if (bad) {
            res.dropped.push_back(why + " (" + std::to_string(c.entity_a) + "-" +
                                  std::to_string(c.entity_b) + ")");
            continue;
        }
        used.insert({layer, c.port_a});
        used.insert({layer, c.port_b});
        conns[layer]++;
        accepted.push_back(c);
    }
    res.plan.circuits = std::move(accepted);

    std::set<std::pair<int, int>> surviving;
    for (const auto& c : res.plan.circuits) {
        surviving.insert(std::minmax(c.entity_a, c.entity_b));
    }
    for (const auto& pair : demanded) {
        if (!surviving.count(pair)) {
            res.ok = false;
            break;
        }
    }
    if (!plan.feasible) res.ok = false;
    return res;
}

Schedule lookahead_commit(const CircuitPlan&, bool plan_ok, double slack_s,
                          const FabricState& S, double now) {
    Schedule sch;
    if (slack_s < S.params.t_ocs_s) {
        sch.decision = CommitDecision::NoReconfigSlack;
        return sch;
    }
    if (!plan_ok) {
        sch.decision = CommitDecision::AbortInfeasible;
        return sch;
    }
    sch.decision = CommitDecision::Commit;
    sch.start = now;
    sch.ready = now + S.params.t_ocs_s;
    return sch;
}

void apply_plan(FabricState& S, const CircuitPlan& plan, double commit_time) {
    CircuitPlan installed = plan;
    installed.epoch = ++S.epoch;

    // circuits identical to the previous plan keep their activation time
    auto prev = S.active.find(plan.tmpl);
    for (auto& c : installed.circuits) {
        c.active_from = commit_time + S.params.t_ocs_s;
        if (prev != S.active.end()) {
            for (const auto& old : prev->second.circuits) {
                if (old.layer == c.layer && old.port_a == c.port_a && old.port_b == c.port_b &&
                    old.entity_a == c.entity_a && old.entity_b == c.entity_b) {
                    c.active_from = old.active_from;
                    break;
                }
            }
        }
    }
    S.active[plan.tmpl] = std::move(installed);
}

MaterializeResult materialize_topology(const PhaseIntent& intent, const DemandSummary& D,
                                       double slack_s, FabricState& S, double now) {
    MaterializeResult res;
    if (slack_s < S.params.t_ocs_s) {
        res.schedule.decision = CommitDecision::NoReconfigSlack;
        auto it = S.active.find(select_template(intent));
        if (it != S.active.end()) res.plan = it->second;
        res.tmpl = select_template(intent);
        return res;
    }
    res.tmpl = select_template(intent);
    DemandGraph g = aggregate_prune_quantize(D, intent, S.params.b_link_bps, S.params.prune_frac);
    CircuitPlan c0 = allocate_circuits(res.tmpl, g, S);
    RepairResult rep = validate_and_repair(c0, S);
    res.plan = rep.plan;
    res.repaired_ok = rep.ok;
    res.schedule = lookahead_commit(rep.plan, rep.ok, slack_s, S, now);
    if (res.schedule.committed()) {
        apply_plan(S, rep.plan, res.schedule.start);
        res.applied = true;
    }
    return res;
}

void PriceTable::validate() const {
    if (transceiver_per_port < 0.0) throw ConfigError("price: negative transceiver price");
    if (eps_per_radix.empty()) throw ConfigError("price: eps_per_radix table empty");
}

namespace {

double price_for(const std::map<int, double>& table, int radix, const char* what) {
    auto it = table.find(radix);
    if (it == table.end()) {
        throw ConfigError(std::string("price: no ") + what + " entry for radix " +
                          std::to_string(radix));
    }
    return it->second;
}

long long ceil_div(long long a, long long b) { return b > 0 ? (a + b - 1) / b : 0; }

}  // namespace

CostBreakdown network_cost(TopologyKind kind, const std::vector<PodSpec>& pods,
                           const FabricParams& params, const PriceTable& price) {
    price.validate();
    CostBreakdown out;
    long long endpoints = 0;
    long long tors = 0;
    for (const auto& p : pods) {
        endpoints += static_cast<long long>(p.tors) * p.servers_per_tor * p.nics_per_server;
        tors += p.tors;
    }
    if (endpoints == 0) return out;

    long long r = price.eps_radix;
    if (kind == TopologyKind::FatTree || kind == TopologyKind::FatTreeOs3) {
        long long o = kind == TopologyKind::FatTreeOs3 ? 3 : 1;
        long long down_e = r * o / (o + 1);
        long long up_e = r - down_e;
        long long n_edge = ceil_div(endpoints, down_e);
        long long g_e = r / 2;  // edges per pod
        long long n_pod = ceil_div(n_edge, g_e);
        long long a_pp = ceil_div(g_e * up_e, r / 2);
        long long n_agg = n_pod * a_pp;
        long long pod_uplinks = a_pp * (r / 2);
        long long n_core = 0;
        long long l3 = 0;
        if (n_pod > 1) {
            long long per_core = std::max<long long>(1, r / n_pod);
            n_core = ceil_div(pod_uplinks, per_core);
            l3 = n_pod * pod_uplinks;
        }
        long long l1 = endpoints;
        long long l2 = n_edge * up_e;
        out.eps_switches = n_edge + n_agg + n_core;
        out.transceivers = 2 * (l1 + l2 + l3);
        out.eps_cost = static_cast<double>(out.eps_switches) *
                       price_for(price.eps_per_radix, static_cast<int>(r), "eps");
    } else {
        // ToR EPS substrate plus passive OCS aggregation/core; optical light
        // terminates only at the ToRs, so circuits cost two transceivers
        // end-to-end regardless of the layers traversed.
        long long agg_ports = tors * params.agg_ports_per_tor;
        long long core_ports = static_cast<long long>(pods.size()) * params.core_ports_per_pod;
        out.eps_switches = tors;
        out.ocs_devices = ceil_div(agg_ports, params.ocs_radix) +
                          ceil_div(core_ports, params.ocs_radix);
        out.transceivers = 2 * endpoints + agg_ports;
        out.eps_cost = static_cast<double>(out.eps_switches) *
                       price_for(price.eps_per_radix, static_cast<int>(r), "eps");
        out.ocs_cost = static_cast<double>(out.ocs_devices) *
                       price_for(price.ocs_per_radix, params.ocs_radix, "ocs");
    }
    out.transceiver_cost = static_cast<double>(out.transceivers) * price.transceiver_per_port;
    out.total = out.eps_cost + out.ocs_cost + out.transceiver_cost;
    return out;
}

}  // namespace rlsim
