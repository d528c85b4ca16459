#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "rlsim/fabric.hpp"
#include "rlsim/util.hpp"

using namespace rlsim;

namespace {

FabricState small_fabric(int train_pods = 1, int gen_pods = 2) {
    std::vector<PodSpec> pods;
    for (int i = 0; i < train_pods; ++i) {
        pods.push_back(PodSpec{"t" + std::to_string(i), PodRole::Train, 2, 4, 8});
    }
    for (int i = 0; i < gen_pods; ++i) {
        pods.push_back(PodSpec{"g" + std::to_string(i), PodRole::Gen, 2, 4, 8});
    }
    FabricParams params;
    params.b_link_bps = 4.0e11;
    params.t_ocs_s = 0.010;
    params.ocs_radix = 320;
    params.agg_ports_per_tor = 8;
    params.core_ports_per_pod = 24;
    return make_fabric(pods, params);
}

PhaseIntent intent_of(PhaseKind phase, Primitive prim, double volume, double slack) {
    PhaseIntent it;
    it.phase = phase;
    it.primitive = prim;
    it.group = {EndpointRef{0, 0, 0}, EndpointRef{1, 0, 0}};
    it.volume_bytes = volume;
    it.slack_s = slack;
    return it;
}

}  // namespace

TEST_CASE("select_template: phase mapping") {
    CHECK(select_template(intent_of(PhaseKind::TrainDP, Primitive::AllReduce, 1e9, 1.0)) ==
          TemplateKind::InterPodMesh);
    CHECK(select_template(intent_of(PhaseKind::GenEP, Primitive::AllToAll, 1e8, 0.001)) ==
          TemplateKind::IntraPodIsolated);
    CHECK(select_template(intent_of(PhaseKind::WeightSync, Primitive::T2G, 1e10, 3.0)) ==
          TemplateKind::MulticastTree);
    CHECK(select_template(intent_of(PhaseKind::GenPD, Primitive::M2N, 1e8, 1.0)) ==
          TemplateKind::BipartiteM2N);
    CHECK(select_template(intent_of(PhaseKind::GenAF, Primitive::M2N, 1e8, 0.001)) ==
          TemplateKind::BipartiteM2N);
}

TEST_CASE("ocs profiles: reconfiguration delays and radix") {
    auto mems = ocs_profile_by_name("3d-mems");
    CHECK(mems.reconfig_delay_s == doctest::Approx(0.010));
    CHECK(mems.radix == 320);
    CHECK(ocs_profile_by_name("rotornet").reconfig_delay_s == doctest::Approx(1e-5));
    CHECK(ocs_profile_by_name("piezo").radix == 576);
    CHECK(ocs_profile_by_name("liquid-crystal").reconfig_delay_s == doctest::Approx(0.1));
    CHECK(ocs_profile_by_name("robotic").radix == 1008);
    CHECK_THROWS_AS(ocs_profile_by_name("no-such"), ConfigError);
}

TEST_CASE("aggregate_prune_quantize: empty, ceiling arithmetic, recompute oracle") {
    FabricState S = small_fabric();
    auto it = intent_of(PhaseKind::TrainDP, Primitive::AllReduce, 1e9, 1.0);

    DemandSummary empty;
    CHECK(aggregate_prune_quantize(empty, it, 4e11, 0.05).edges.empty());

    // 900 Gb/s at 400 Gb/s per link -> 3 circuits
    DemandSummary d;
    d.granularity = DemandGranularity::PodLevel;
    d.window_s = 1.0;
    d.entries.push_back(DemandEntry{0, 1, 900.0e9 / 8.0});
    auto g = aggregate_prune_quantize(d, it, 4.0e11, 0.05);
    REQUIRE(g.edges.size() == 1);
    CHECK(g.edges[0].circuits == 3);

    // random demands: per-pair ceil oracle and prune predicate
    Rng rng(17);
    DemandSummary rd;
    rd.granularity = DemandGranularity::PodLevel;
    rd.window_s = 2.0;
    std::map<std::pair<int, int>, double> truth;
    for (int i = 0; i < 60; ++i) {
        int a = rng.uniform_int(0, 4), b = rng.uniform_int(0, 4);
        double bytes = rng.uniform(0.0, 4e11);
        rd.entries.push_back(DemandEntry{a, b, bytes});
        if (a != b && bytes > 0) truth[std::minmax(a, b)] += bytes;
    }
    auto rg = aggregate_prune_quantize(rd, it, 4.0e11, 0.05);
    std::set<std::pair<int, int>> seen;
    for (const auto& e : rg.edges) {
        auto key = std::minmax(e.a, e.b);
        seen.insert(key);
        double rate = truth.at(key) * 8.0 / rd.window_s;
        CHECK(rate >= 0.05 * 4.0e11);  // survived the prune
        CHECK(e.circuits == static_cast<int>(std::ceil(rate / 4.0e11)));
        CHECK(e.rate_bps == doctest::Approx(rate));
    }
    for (const auto& [key, bytes] : truth) {
        double rate = bytes * 8.0 / rd.window_s;
        if (rate >= 0.05 * 4.0e11) CHECK(seen.count(key) == 1);
    }
}

TEST_CASE("allocate_circuits: empty demand yields an empty plan") {
    FabricState S = small_fabric();
    DemandGraph g;
    g.granularity = DemandGranularity::PodLevel;
    auto plan = allocate_circuits(TemplateKind::InterPodMesh, g, S);
    CHECK(plan.circuits.empty());
    CHECK(plan.feasible);
}

TEST_CASE("allocate_circuits: tiny full mesh matches the exact matching oracle") {
    FabricState S = small_fabric(3, 0);
    DemandGraph g;
    g.granularity = DemandGranularity::PodLevel;
    for (int a = 0; a < 3; ++a) {
        for (int b = a + 1; b < 3; ++b) {
            g.edges.push_back(DemandEdge{a, b, 4.0e11, 1});
        }
    }
    auto plan = allocate_circuits(TemplateKind::InterPodMesh, g, S);
    CHECK(plan.feasible);
    CHECK(plan.circuits.size() == 3);
    // exactly one circuit per pod pair, each pod uses two ports
    std::map<std::pair<int, int>, int> per_pair;
    std::map<int, int> per_pod;
    for (const auto& c : plan.circuits) {
        CHECK(c.layer == OcsLayer::Core);
        per_pair[std::minmax(c.entity_a, c.entity_b)] += 1;
        per_pod[c.entity_a] += 1;
        per_pod[c.entity_b] += 1;
    }
    CHECK(per_pair.size() == 3);
    for (const auto& [k, v] : per_pair) CHECK(v == 1);
    for (const auto& [k, v] : per_pod) CHECK(v == 2);
}

TEST_CASE("allocate_circuits: gen isolation reserves one stream circuit per gen pod") {
    FabricState S = small_fabric(1, 3);
    DemandGraph g;
    g.granularity = DemandGranularity::TorLevel;
    auto plan = allocate_circuits(TemplateKind::IntraPodIsolated, g, S);
    CHECK(plan.feasible);
    auto train = S.pods_with_role(PodRole::Train);
    auto gen = S.pods_with_role(PodRole::Gen);
    std::map<int, int> stream_per_gen;
    for (const auto& c : plan.circuits) {
        if (c.layer != OcsLayer::Core) continue;
        CHECK(c.bandwidth_bps == doctest::Approx(4.0e11));
        int gp = std::count(gen.begin(), gen.end(), c.entity_a) ? c.entity_a : c.entity_b;
        int tp = gp == c.entity_a ? c.entity_b : c.entity_a;
        CHECK(std::count(train.begin(), train.end(), tp) == 1);
        stream_per_gen[gp] += 1;
    }
    CHECK(stream_per_gen.size() == gen.size());
    for (int gp : gen) CHECK(stream_per_gen[gp] == 1);
}

TEST_CASE("allocate_circuits: multicast tree spans every gen pod from the train root") {
    FabricState S = small_fabric(2, 5);
    DemandGraph g;
    g.granularity = DemandGranularity::PodLevel;
    auto plan = allocate_circuits(TemplateKind::MulticastTree, g, S);
    CHECK(plan.feasible);

    // connected acyclic cover rooted at the first train pod
    auto gen = S.pods_with_role(PodRole::Gen);
    int root = S.pods_with_role(PodRole::Train).front();
    std::map<int, std::vector<int>> adj;
    for (const auto& c : plan.circuits) {
        adj[c.entity_a].push_back(c.entity_b);
        adj[c.entity_b].push_back(c.entity_a);
    }
    CHECK(plan.circuits.size() == gen.size());  // tree edge count == leaves covered
    std::set<int> visited{root};
    std::vector<int> frontier{root};
    while (!frontier.empty()) {
        std::vector<int> next;
        for (int u : frontier) {
            for (int v : adj[u]) {
                if (visited.insert(v).second) next.push_back(v);
            }
        }
        frontier = std::move(next);
    }
    for (int gp : gen) CHECK(visited.count(gp) == 1);
    // |edges| == |vertices| - 1 for the covered component: acyclic
    CHECK(plan.circuits.size() == visited.size() - 1);
}

TEST_CASE("allocate_circuits: deterministic for identical inputs") {
    FabricState S = small_fabric(2, 2);
    DemandGraph g;
    g.granularity = DemandGranularity::PodLevel;
    g.edges.push_back(DemandEdge{0, 1, 8.0e11, 2});
    g.edges.push_back(DemandEdge{2, 3, 4.0e11, 1});
    auto a = allocate_circuits(TemplateKind::InterPodMesh, g, S);
    auto b = allocate_circuits(TemplateKind::InterPodMesh, g, S);
    REQUIRE(a.circuits.size() == b.circuits.size());
    for (std::size_t i = 0; i < a.circuits.size(); ++i) {
        CHECK(a.circuits[i].port_a == b.circuits[i].port_a);
        CHECK(a.circuits[i].port_b == b.circuits[i].port_b);
    }
}

TEST_CASE("validate_and_repair: identity on a valid plan") {
    FabricState S = small_fabric(3, 0);
    DemandGraph g;
    g.granularity = DemandGranularity::PodLevel;
    g.edges.push_back(DemandEdge{0, 1, 4.0e11, 1});
    g.edges.push_back(DemandEdge{1, 2, 4.0e11, 1});
    auto plan = allocate_circuits(TemplateKind::InterPodMesh, g, S);
    auto rep = validate_and_repair(plan, S);
    CHECK(rep.ok);
    CHECK(rep.plan.circuits.size() == plan.circuits.size());
    CHECK(rep.dropped.empty());
}

TEST_CASE("validate_and_repair: duplicated port dropped, then re-validates") {
    FabricState S = small_fabric(3, 0);
    DemandGraph g;
    g.granularity = DemandGranularity::PodLevel;
    g.edges.push_back(DemandEdge{0, 1, 8.0e11, 1});
    auto plan = allocate_circuits(TemplateKind::InterPodMesh, g, S);
    REQUIRE(plan.circuits.size() == 1);
    // inject a conflicting circuit that reuses port_a with lower demand
    Circuit dup = plan.circuits[0];
    dup.port_b = plan.circuits[0].port_b + 1;
    dup.demand_bps = plan.circuits[0].demand_bps / 2;
    plan.circuits.push_back(dup);
    auto rep = validate_and_repair(plan, S);
    CHECK(rep.plan.circuits.size() == 1);
    CHECK_FALSE(rep.dropped.empty());
    auto again = validate_and_repair(rep.plan, S);
    CHECK(again.dropped.empty());
    CHECK(again.plan.circuits.size() == 1);
    // the surviving circuit is the higher-demand one
    CHECK(rep.plan.circuits[0].demand_bps == doctest::Approx(plan.circuits[0].demand_bps));
}

TEST_CASE("validate_and_repair: losing every circuit of a pair reports not-ok") {
    FabricState S = small_fabric(2, 0);
    CircuitPlan plan;
    plan.tmpl = TemplateKind::InterPodMesh;
    Circuit bad;
    bad.layer = OcsLayer::Core;
    bad.port_a = 500;  // outside radix
    bad.port_b = 501;
    bad.entity_a = 0;
    bad.entity_b = 1;
    bad.bandwidth_bps = 4e11;
    plan.circuits.push_back(bad);
    auto rep = validate_and_repair(plan, S);
    CHECK_FALSE(rep.ok);
    CHECK(rep.plan.circuits.empty());
}

TEST_CASE("lookahead_commit: slack below T_ocs never commits") {
    FabricState S = small_fabric();
    CircuitPlan plan;
    auto sch = lookahead_commit(plan, true, 0.005, S, 100.0);
    CHECK(sch.decision == CommitDecision::NoReconfigSlack);
    CHECK_FALSE(sch.committed());

    auto ok = lookahead_commit(plan, true, 0.050, S, 100.0);
    CHECK(ok.decision == CommitDecision::Commit);
    CHECK(ok.start == doctest::Approx(100.0));
    CHECK(ok.ready == doctest::Approx(100.010));
    CHECK(ok.ready - ok.start == doctest::Approx(S.params.t_ocs_s));
    CHECK(ok.ready <= 100.0 + 0.050);  // completes inside the slack window

    auto abort = lookahead_commit(plan, false, 0.050, S, 100.0);
    CHECK(abort.decision == CommitDecision::AbortInfeasible);
}

TEST_CASE("apply_plan: identical re-apply keeps activation times, bumps the epoch") {
    FabricState S = small_fabric(3, 0);
    DemandGraph g;
    g.granularity = DemandGranularity::PodLevel;
    g.edges.push_back(DemandEdge{0, 1, 4.0e11, 1});
    auto plan = allocate_circuits(TemplateKind::InterPodMesh, g, S);
    apply_plan(S, plan, 10.0);
    int epoch1 = S.epoch;
    double act1 = S.active.at(TemplateKind::InterPodMesh).circuits[0].active_from;
    CHECK(act1 == doctest::Approx(10.010));

    auto plan2 = allocate_circuits(TemplateKind::InterPodMesh, g, S);
    apply_plan(S, plan2, 50.0);
    CHECK(S.epoch == epoch1 + 1);
    // unchanged circuit: no new dead window
    CHECK(S.active.at(TemplateKind::InterPodMesh).circuits[0].active_from == doctest::Approx(10.010));
    CHECK(S.check_invariants().empty());
}

TEST_CASE("apply_plan: swapped circuit carries zero bandwidth inside the window") {
    FabricState S = small_fabric(3, 0);
    DemandGraph g;
    g.granularity = DemandGranularity::PodLevel;
    g.edges.push_back(DemandEdge{0, 1, 4.0e11, 1});
    auto plan = allocate_circuits(TemplateKind::InterPodMesh, g, S);
    apply_plan(S, plan, 0.0);

    DemandGraph g2;
    g2.granularity = DemandGranularity::PodLevel;
    g2.edges.push_back(DemandEdge{0, 2, 4.0e11, 1});
    auto plan2 = allocate_circuits(TemplateKind::InterPodMesh, g2, S);
    apply_plan(S, plan2, 100.0);
    const auto& act = S.active.at(TemplateKind::InterPodMesh);
    REQUIRE(act.circuits.size() == 1);
    CHECK(act.circuits[0].active_from == doctest::Approx(100.010));
    CHECK(S.check_invariants().empty());
}

TEST_CASE("fabric invariants: port exclusivity catches cross-template conflicts") {
    FabricState S = small_fabric(3, 0);
    DemandGraph g;
    g.granularity = DemandGranularity::PodLevel;
    g.edges.push_back(DemandEdge{0, 1, 4.0e11, 1});
    auto plan = allocate_circuits(TemplateKind::InterPodMesh, g, S);
    apply_plan(S, plan, 0.0);
    CHECK(S.check_invariants().empty());

    // force a conflicting plan into another slot
    CircuitPlan evil = plan;
    evil.tmpl = TemplateKind::MulticastTree;
    S.active[TemplateKind::MulticastTree] = evil;
    CHECK_FALSE(S.check_invariants().empty());
}

TEST_CASE("network_cost: zero devices cost zero") {
    PriceTable price;
    price.eps_per_radix = {{64, 20000.0}};
    price.ocs_per_radix = {{320, 100000.0}};
    FabricParams params;
    auto out = network_cost(TopologyKind::FatTree, {}, params, price);
    CHECK(out.total == 0.0);
    CHECK(out.eps_switches == 0);
}

TEST_CASE("network_cost: fat-tree counts equal the closed-form Clos oracle") {
    PriceTable price;
    price.eps_per_radix = {{64, 20000.0}};
    price.ocs_per_radix = {{320, 100000.0}};
    price.transceiver_per_port = 2000.0;
    price.eps_radix = 64;
    FabricParams params;

    std::vector<PodSpec> pods;
    for (int i = 0; i < 8; ++i) {
        pods.push_back(PodSpec{"p" + std::to_string(i),
                               i < 4 ? PodRole::Train : PodRole::Gen, 4, 8, 8});
    }
    // independent Clos arithmetic for E endpoints at radix r, oversub o
    auto clos = [](long long E, long long r, long long o) {
        auto ceil_div = [](long long a, long long b) { return (a + b - 1) / b; };
        long long down = r * o / (o + 1);
        long long up = r - down;
        long long n_edge = ceil_div(E, down);
        long long n_pod = ceil_div(n_edge, r / 2);
        long long a_pp = ceil_div((r / 2) * up, r / 2);
        long long n_agg = n_pod * a_pp;
        long long uplinks = a_pp * (r / 2);
        long long n_core = 0, l3 = 0;
        if (n_pod > 1) {
            n_core = ceil_div(uplinks, std::max<long long>(1, r / n_pod));
            l3 = n_pod * uplinks;
        }
        long long trans = 2 * (E + n_edge * up + l3);
        return std::make_pair(n_edge + n_agg + n_core, trans);
    };
    long long E = 8LL * 4 * 8 * 8;
    auto [sw1, tr1] = clos(E, 64, 1);
    auto ft = network_cost(TopologyKind::FatTree, pods, params, price);
    CHECK(ft.eps_switches == sw1);
    CHECK(ft.transceivers == tr1);
    CHECK(ft.total == doctest::Approx(sw1 * 20000.0 + tr1 * 2000.0));

    auto [sw3, tr3] = clos(E, 64, 3);
    auto os3 = network_cost(TopologyKind::FatTreeOs3, pods, params, price);
    CHECK(os3.eps_switches == sw3);
    CHECK(os3.transceivers == tr3);
    CHECK(os3.total < ft.total);
}

TEST_CASE("network_cost: rfabric uses strictly fewer transceivers than fat-tree") {
    PriceTable price;
    price.eps_per_radix = {{64, 20000.0}};
    price.ocs_per_radix = {{320, 100000.0}};
    price.transceiver_per_port = 2000.0;
    FabricParams params;
    params.agg_ports_per_tor = 8;
    params.core_ports_per_pod = 24;
    params.ocs_radix = 320;

    std::vector<PodSpec> pods;
    for (int i = 0; i < 8; ++i) {
        pods.push_back(PodSpec{"p" + std::to_string(i),
                               i < 4 ? PodRole::Train : PodRole::Gen, 2, 4, 8});
    }
    auto ft = network_cost(TopologyKind::FatTree, pods, params, price);
    auto rf = network_cost(TopologyKind::RFabric, pods, params, price);
    CHECK(rf.transceivers < ft.transceivers);
    CHECK(rf.ocs_devices > 0);
    CHECK(rf.total < ft.total);
}

TEST_CASE("fuzz: random intent/demand sequences keep every invariant") {
    Rng rng(4242);
    for (int seq = 0; seq < 400; ++seq) {
        FabricState S = small_fabric(rng.uniform_int(1, 2), rng.uniform_int(1, 3));
        double now = 0.0;
        for (int ev = 0; ev < 8; ++ev) {
            PhaseKind phases[] = {PhaseKind::TrainDP, PhaseKind::GenEP, PhaseKind::WeightSync,
                                  PhaseKind::GenAF, PhaseKind::TrainPP, PhaseKind::ResponseStream};
            PhaseKind ph = phases[rng.uniform_int(0, 5)];
            PhaseIntent it;
            it.phase = ph;
            it.primitive = Primitive::AllReduce;
            it.group = {EndpointRef{0, 0, 0}};
            it.volume_bytes = rng.uniform(0.0, 1e10);
            it.slack_s = rng.uniform(0.0, 0.05);
            it.m_sources = 1;

            DemandSummary D;
            D.granularity = select_template(it) == TemplateKind::InterPodMesh
                                ? DemandGranularity::PodLevel
                                : DemandGranularity::TorLevel;
            D.window_s = 1.0;
            int entities = D.granularity == DemandGranularity::PodLevel ? S.n_pods() : S.n_tors();
            for (int e = 0; e < 5; ++e) {
                int a = rng.uniform_int(0, entities - 1);
                int b = rng.uniform_int(0, entities - 1);
                if (a == b) continue;
                D.entries.push_back(DemandEntry{a, b, rng.uniform(0.0, 2.0e11)});
            }
            auto res = materialize_topology(it, D, it.slack_s, S, now);
            // gating soundness
            if (it.slack_s < S.params.t_ocs_s) {
                CHECK(res.schedule.decision == CommitDecision::NoReconfigSlack);
                CHECK_FALSE(res.applied);
            }
            if (res.applied) {
                CHECK(res.schedule.committed());
                CHECK(it.slack_s >= S.params.t_ocs_s);
            }
            auto errs = S.check_invariants();
            if (!errs.empty()) CAPTURE(errs.front());
            CHECK(errs.empty());
            // repair output re-validates clean
            auto again = validate_and_repair(res.plan, S);
            (void)again;
            now += rng.uniform(0.01, 1.0);
        }
    }
}
