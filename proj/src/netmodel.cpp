#include "rlsim/netmodel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "rlsim/util.hpp"

namespace rlsim {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kByteEps = 1e-6;
}  // namespace

int TopoView::add_link() {
    links_.push_back({});
    return static_cast<int>(links_.size()) - 1;
}

void TopoView::add_capacity(int link, double active_from, double bps) {
    links_[link].slices.push_back({active_from, bps});
}

int TopoView::server_id(const EndpointRef& e) const {
    int id = 0;
    for (int p = 0; p < static_cast<int>(pods_.size()); ++p) {
        if (p == e.pod) {
            return id + e.tor * pods_[p].servers_per_tor + e.server;
        }
        id += pods_[p].tors * pods_[p].servers_per_tor;
    }
    throw ConnectivityError("endpoint pod out of range");
}

EndpointRef TopoView::endpoint_of(int server) const {
    int id = server;
    for (int p = 0; p < static_cast<int>(pods_.size()); ++p) {
        int count = pods_[p].tors * pods_[p].servers_per_tor;
        if (id < count) {
            return EndpointRef{p, id / pods_[p].servers_per_tor, id % pods_[p].servers_per_tor};
        }
        id -= count;
    }
    throw ConnectivityError("server id out of range");
}

TopoView TopoView::from_fabric(const FabricState& S) {
    TopoView v;
    v.pods_ = S.pods;
    v.is_fat_tree_ = false;
    int n_tors = S.n_tors();
    for (const auto& p : S.pods) v.n_servers_ += p.tors * p.servers_per_tor;

    v.server_uplink_.resize(v.n_servers_);
    v.server_pod_.resize(v.n_servers_);
    v.server_tor_.resize(v.n_servers_);
    int sid = 0;
    for (int p = 0; p < S.n_pods(); ++p) {
        for (int t = 0; t < S.pods[p].tors; ++t) {
            for (int s = 0; s < S.pods[p].servers_per_tor; ++s) {
                int link = v.add_link();
                v.add_capacity(link, 0.0, S.pods[p].nics_per_server * S.params.b_link_bps);
                v.server_uplink_[sid] = link;
                v.server_pod_[sid] = p;
                v.server_tor_[sid] = S.tor_global(p, t);
                ++sid;
            }
        }
    }
    v.tor_uplink_.resize(n_tors);
    for (int t = 0; t < n_tors; ++t) {
        int link = v.add_link();
        v.add_capacity(link, 0.0, S.params.agg_ports_per_tor * S.params.b_link_bps);
        v.tor_uplink_[t] = link;
    }
    v.agg_pair_.assign(n_tors, std::vector<int>(n_tors, -1));
    v.core_pair_.assign(S.n_pods(), std::vector<int>(S.n_pods(), -1));
    for (const Circuit* c : S.all_circuits()) {
        auto& table = c->layer == OcsLayer::Agg ? v.agg_pair_ : v.core_pair_;
        int a = c->entity_a, b = c->entity_b;
        if (a == b) continue;
        if (table[a][b] < 0) {
            int link = v.add_link();
            table[a][b] = link;
            table[b][a] = link;
        }
        v.add_capacity(table[a][b], c->active_from, c->bandwidth_bps);
    }
    return v;
}

TopoView TopoView::fat_tree(const FabricState& shape, int oversub_ratio) {
    TopoView v;
    v.pods_ = shape.pods;
    v.is_fat_tree_ = true;
    int n_tors = shape.n_tors();
    for (const auto& p : shape.pods) v.n_servers_ += p.tors * p.servers_per_tor;

    v.server_uplink_.resize(v.n_servers_);
    v.server_pod_.resize(v.n_servers_);
    v.server_tor_.resize(v.n_servers_);
    int sid = 0;
    for (int p = 0; p < shape.n_pods(); ++p) {
        for (int t = 0; t < shape.pods[p].tors; ++t) {
            for (int s = 0; s < shape.pods[p].servers_per_tor; ++s) {
                int link = v.add_link();
                v.add_capacity(link, 0.0, shape.pods[p].nics_per_server * shape.params.b_link_bps);
                v.server_uplink_[sid] = link;
                v.server_pod_[sid] = p;
                v.server_tor_[sid] = shape.tor_global(p, t);
                ++sid;
            }
        }
    }
    v.tor_uplink_.resize(n_tors);
    int t_global = 0;
    for (int p = 0; p < shape.n_pods(); ++p) {
        double attached = static_cast<double>(shape.pods[p].servers_per_tor) *
                          shape.pods[p].nics_per_server * shape.params.b_link_bps;
        for (int t = 0; t < shape.pods[p].tors; ++t) {
            int link = v.add_link();
            v.add_capacity(link, 0.0, attached / oversub_ratio);
            v.tor_uplink_[t_global++] = link;
        }
    }
    return v;
}

std::optional<std::vector<int>> TopoView::route(int src, int dst) const {
    if (src == dst) return std::vector<int>{};
    std::vector<int> path{server_uplink_[src]};
    int ta = server_tor_[src], tb = server_tor_[dst];
    int pa = server_pod_[src], pb = server_pod_[dst];
    if (ta == tb) {
        path.push_back(server_uplink_[dst]);
        return path;
    }
    if (is_fat_tree_) {
        path.push_back(tor_uplink_[ta]);
        path.push_back(tor_uplink_[tb]);
        path.push_back(server_uplink_[dst]);
        return path;
    }
    if (pa == pb) {
        int link = agg_pair_[ta][tb];
        if (link < 0) return std::nullopt;
        path.push_back(link);
        path.push_back(server_uplink_[dst]);
        return path;
    }
    int core = core_pair_[pa][pb];
    if (core < 0) return std::nullopt;
    path.push_back(tor_uplink_[ta]);
    path.push_back(core);
    path.push_back(tor_uplink_[tb]);
    path.push_back(server_uplink_[dst]);
    return path;
}

double TopoView::capacity(int link, double at_time) const {
    double c = 0.0;
    for (const auto& s : links_[link].slices) {
        if (at_time >= s.active_from - 1e-12) c += s.bps;
    }
    return c;
}

std::vector<double> TopoView::capacity_events_after(double t) const {
    std::set<double> evs;
    for (const auto& l : links_) {
        for (const auto& s : l.slices) {
            if (s.active_from > t + 1e-12) evs.insert(s.active_from);
        }
    }
    return {evs.begin(), evs.end()};
}

std::vector<double> max_min_rates(const std::vector<Flow>& flows, const TopoView& topo,
                                  double at_time) {
    int n = static_cast<int>(flows.size());
    std::vector<double> rate(n, 0.0);
    std::vector<bool> frozen(n, false);
    // flows with an empty path never traverse a link
    for (int f = 0; f < n; ++f) {
        if (flows[f].path.empty()) {
            rate[f] = kInf;
            frozen[f] = true;
        }
    }
    std::map<int, std::vector<int>> members;  // link -> flow indices
    for (int f = 0; f < n; ++f) {
        if (frozen[f]) continue;
        for (int l : flows[f].path) members[l].push_back(f);
    }
    double level = 0.0;
    int remaining = 0;
    for (int f = 0; f < n; ++f) {
        if (!frozen[f]) ++remaining;
    }
    std::set<int> saturated;
    while (remaining > 0) {
        double next_level = kInf;
        int bottleneck = -1;
        for (const auto& [l, fl] : members) {
            if (saturated.count(l)) continue;
            int unfrozen = 0;
            double frozen_sum = 0.0;
            for (int f : fl) {
                if (frozen[f]) {
                    frozen_sum += rate[f];
                } else {
                    ++unfrozen;
                }
            }
            if (unfrozen == 0) continue;
            double cap = topo.capacity(l, at_time);
            double lvl = (cap - frozen_sum) / unfrozen;
            if (lvl < next_level) {
                next_level = lvl;
                bottleneck = l;
            }
        }
        if (bottleneck < 0) {
            // no capacity-constrained link left; unconstrained flows are capped
            // by nothing in the fluid model (cannot happen with server uplinks)
            for (int f = 0; f < n; ++f) {
                if (!frozen[f]) {
                    rate[f] = kInf;
                    frozen[f] = true;
                }
            }
            break;
        }
        level = std::max(next_level, 0.0);
        for (int f : members[bottleneck]) {
            if (!frozen[f]) {
                rate[f] = level;
                frozen[f] = true;
                --remaining;
            }
        }
        saturated.insert(bottleneck);
    }
    return rate;
}

double flow_set_makespan(std::vector<Flow> flows, const TopoView& topo, double start_time,
                         const std::vector<int>& watched) {
    std::vector<double> remaining(flows.size());
    std::vector<bool> active(flows.size(), true);
    std::set<int> watch(watched.begin(), watched.end());
    bool watch_all = watch.empty();
    int watch_left = 0;
    for (std::size_t f = 0; f < flows.size(); ++f) {
        remaining[f] = flows[f].bytes;
        if (remaining[f] <= kByteEps) active[f] = false;
        if (active[f] && (watch_all || watch.count(static_cast<int>(f)))) ++watch_left;
    }
    if (watch_left == 0) return 0.0;

    double t = start_time;
    std::vector<double> cap_events = topo.capacity_events_after(t);
    std::size_t next_ev = 0;

    int guard = static_cast<int>(flows.size()) * 4 + static_cast<int>(cap_events.size()) + 16;
    while (watch_left > 0 && guard-- > 0) {
        std::vector<Flow> live;
        std::vector<int> live_ids;
        for (std::size_t f = 0; f < flows.size(); ++f) {
            if (active[f]) {
                live.push_back(flows[f]);
                live_ids.push_back(static_cast<int>(f));
            }
        }
        std::vector<double> rates = max_min_rates(live, topo, t);
        double dt = kInf;
        for (std::size_t i = 0; i < live.size(); ++i) {
            if (rates[i] <= 0.0) continue;
            if (std::isinf(rates[i])) {
                dt = 0.0;
                break;
            }
            dt = std::min(dt, remaining[live_ids[i]] * 8.0 / rates[i]);
        }
        while (next_ev < cap_events.size() && cap_events[next_ev] <= t + 1e-12) ++next_ev;
        if (next_ev < cap_events.size()) dt = std::min(dt, cap_events[next_ev] - t);
        if (std::isinf(dt)) {
            throw ConnectivityError("flow set stalled with zero bandwidth and no future capacity");
        }
        t += dt;
        for (std::size_t i = 0; i < live.size(); ++i) {
            int f = live_ids[i];
            if (std::isinf(rates[i])) {
                remaining[f] = 0.0;
            } else {
                remaining[f] -= rates[i] * dt / 8.0;
            }
            if (remaining[f] <= kByteEps) {
                active[f] = false;
                if (watch_all || watch.count(f)) --watch_left;
            }
        }
    }
    if (watch_left > 0) throw ConnectivityError("flow set failed to converge");
    return t - start_time;
}

namespace {

std::string pair_name(const TopoView& topo, int a, int b) {
    EndpointRef ea = topo.endpoint_of(a), eb = topo.endpoint_of(b);
    return "(pod " + std::to_string(ea.pod) + " tor " + std::to_string(ea.tor) + " srv " +
           std::to_string(ea.server) + ") -> (pod " + std::to_string(eb.pod) + " tor " +
           std::to_string(eb.tor) + " srv " + std::to_string(eb.server) + ")";
}

Flow make_flow(const TopoView& topo, int src, int dst, double bytes) {
    auto path = topo.route(src, dst);
    if (!path) {
        throw ConnectivityError("unreachable participant pair " + pair_name(topo, src, dst));
    }
    Flow f;
    f.src = src;
    f.dst = dst;
    f.bytes = bytes;
    f.path = std::move(*path);
    return f;
}

}  // namespace

double collective_time(const CollectiveSpec& spec, const TopoView& topo, double at_time) {
    const auto& g = spec.participants;
    int n = static_cast<int>(g.size());
    if (n <= 1 || spec.volume_per_rank <= 0.0) return 0.0;

    std::vector<Flow> flows;
    switch (spec.primitive) {
        case Primitive::AllReduce: {
            if (spec.algorithm == CollectiveAlgorithm::Ring) {
                double per_edge = 2.0 * (n - 1) / n * spec.volume_per_rank;
                for (int i = 0; i < n; ++i) {
                    flows.push_back(make_flow(topo, g[i], g[(i + 1) % n], per_edge));
                }
            } else {
                // direct: reduce to the first rank, then broadcast back
                std::vector<Flow> up, down;
                for (int i = 1; i < n; ++i) {
                    up.push_back(make_flow(topo, g[i], g[0], spec.volume_per_rank));
                    down.push_back(make_flow(topo, g[0], g[i], spec.volume_per_rank));
                }
                return flow_set_makespan(up, topo, at_time) +
                       flow_set_makespan(down, topo, at_time);
            }
            break;
        }
        case Primitive::AllToAll: {
            double per_pair = spec.volume_per_rank / n;
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    if (i != j) flows.push_back(make_flow(topo, g[i], g[j], per_pair));
                }
            }
            break;
        }
        case Primitive::P2P: {
            for (int i = 0; i + 1 < n; ++i) {
                flows.push_back(make_flow(topo, g[i], g[i + 1], spec.volume_per_rank));
            }
            break;
        }
        case Primitive::M2N: {
            int m = spec.m_sources > 0 ? spec.m_sources : n / 2;
            m = std::clamp(m, 1, n - 1);
            int sinks = n - m;
            for (int i = 0; i < m; ++i) {
                for (int j = m; j < n; ++j) {
                    flows.push_back(make_flow(topo, g[i], g[j], spec.volume_per_rank / sinks));
                }
            }
            break;
        }
        case Primitive::T2G:
        case Primitive::Broadcast: {
            for (int i = 1; i < n; ++i) {
                flows.push_back(make_flow(topo, g[0], g[i], spec.volume_per_rank));
            }
            break;
        }
        case Primitive::G2T: {
            for (int i = 0; i + 1 < n; ++i) {
                flows.push_back(make_flow(topo, g[i], g[n - 1], spec.volume_per_rank));
            }
            break;
        }
    }
    return flow_set_makespan(flows, topo, at_time);
}

double weight_sync_time_tree(double params_bytes, const FabricState& S, const CircuitPlan& plan,
                             double intra_pod_bw_bps) {
    if (params_bytes <= 0.0) return 0.0;
    auto train = S.pods_with_role(PodRole::Train);
    auto gen = S.pods_with_role(PodRole::Gen);
    if (train.empty() || gen.empty()) return 0.0;
    int root = train.front();

    // pod-level adjacency with aggregated edge bandwidth
    std::map<std::pair<int, int>, double> edge_bw;
    for (const auto& c : plan.circuits) {
        if (c.layer != OcsLayer::Core) continue;
        auto key = std::minmax(c.entity_a, c.entity_b);
        edge_bw[{key.first, key.second}] += c.bandwidth_bps;
    }
    std::map<int, std::vector<int>> adj;
    for (const auto& [key, bw] : edge_bw) {
        adj[key.first].push_back(key.second);
        adj[key.second].push_back(key.first);
    }
    std::map<int, int> depth;
    depth[root] = 0;
    std::vector<int> frontier{root};
    while (!frontier.empty()) {
        std::vector<int> next;
        for (int u : frontier) {
            for (int v : adj[u]) {
                if (!depth.count(v)) {
                    depth[v] = depth[u] + 1;
                    next.push_back(v);
                }
            }
        }
        frontier = std::move(next);
    }
    int max_depth = 0;
    double bottleneck = kInf;
    for (int gp : gen) {
        if (!depth.count(gp)) {
            throw ConnectivityError("weight-sync tree misses Gen pod " + std::to_string(gp));
        }
        max_depth = std::max(max_depth, depth[gp]);
    }
    for (const auto& [key, bw] : edge_bw) bottleneck = std::min(bottleneck, bw);
    if (!std::isfinite(bottleneck) || bottleneck <= 0.0) {
        throw ConnectivityError("weight-sync tree has no usable circuits");
    }
    double stage1 = params_bytes * 8.0 / bottleneck;
    if (max_depth > 1) {
        stage1 += (max_depth - 1) * S.params.sync_chunk_bytes * 8.0 / bottleneck;
    }
    double stage2 = intra_pod_bw_bps > 0.0 ? params_bytes * 8.0 / intra_pod_bw_bps : 0.0;
    return stage1 + stage2;
}

double weight_sync_time_static(double params_bytes, const FabricState& shape,
                               const TopoView& topo, double intra_pod_bw_bps,
                               const std::vector<Flow>& background) {
    if (params_bytes <= 0.0) return 0.0;
    auto train = shape.pods_with_role(PodRole::Train);
    auto gen = shape.pods_with_role(PodRole::Gen);
    if (train.empty() || gen.empty()) return 0.0;
    int src = topo.server_id(EndpointRef{train.front(), 0, 0});

    std::vector<Flow> flows;
    std::vector<int> watched;
    for (int gp : gen) {
        int dst = topo.server_id(EndpointRef{gp, 0, 0});
        flows.push_back(make_flow(topo, src, dst, params_bytes));
        watched.push_back(static_cast<int>(flows.size()) - 1);
    }
    for (const auto& bg : background) flows.push_back(bg);
    double stage1 = flow_set_makespan(flows, topo, 0.0, watched);
    double stage2 = intra_pod_bw_bps > 0.0 ? params_bytes * 8.0 / intra_pod_bw_bps : 0.0;
    return stage1 + stage2;
}

double slack_estimate(const std::vector<double>& gaps, double safety_factor) {
    if (gaps.empty()) return 0.0;
    double mn = *std::min_element(gaps.begin(), gaps.end());
    return std::max(mn, 0.0) * safety_factor;
}

void TrainConfig::validate() const {
    if (dp < 1 || tp < 1 || pp < 1 || cp < 1 || ep < 1) {
        throw ConfigError("train: parallel degrees must be >= 1");
    }
    if (layers < 1) throw ConfigError("train: layers must be >= 1");
    if (param_bytes < 0 || grad_bytes < 0) throw ConfigError("train: negative model size");
    if (compute_base_s < 0 || compute_per_token_s < 0) throw ConfigError("train: negative compute");
}

namespace {

EndpointRef nth_server(const FabricState& S, int pod, int n) {
    const auto& p = S.pods[pod];
    int per_pod = p.tors * p.servers_per_tor;
    n = n % std::max(per_pod, 1);
    // spread across ToRs first
    return EndpointRef{pod, n % p.tors, n / p.tors};
}

}  // namespace

std::vector<PhaseIntent> build_phase_intents(const TrainConfig& train, const GenDeployment& gen,
                                             const FabricState& shape,
                                             const SlackDefaults& slack) {
    train.validate();
    std::vector<PhaseIntent> out;
    auto train_pods = shape.pods_with_role(PodRole::Train);
    auto gen_pods = shape.pods_with_role(PodRole::Gen);

    if (!train_pods.empty()) {
        int ntp = static_cast<int>(train_pods.size());
        if (train.dp > 1) {
            PhaseIntent it;
            it.phase = PhaseKind::TrainDP;
            it.primitive = Primitive::AllReduce;
            for (int r = 0; r < train.dp; ++r) {
                it.group.push_back(nth_server(shape, train_pods[r % ntp], r / ntp));
            }
            it.volume_bytes = train.grad_bytes;
            it.slack_s = slack.train_large;
            out.push_back(std::move(it));
        }
        if (train.tp > 1) {
            PhaseIntent it;
            it.phase = PhaseKind::TrainTP;
            it.primitive = Primitive::AllReduce;
            int servers = std::max(1, (train.tp + shape.pods[train_pods[0]].nics_per_server - 1) /
                                          shape.pods[train_pods[0]].nics_per_server);
            for (int s = 0; s < servers; ++s) {
                it.group.push_back(nth_server(shape, train_pods[0], s));
            }
            it.volume_bytes = train.tp_volume_per_layer * train.layers;
            it.slack_s = slack.train_medium;
            out.push_back(std::move(it));
        }
        if (train.pp > 1) {
            PhaseIntent it;
            it.phase = PhaseKind::TrainPP;
            it.primitive = Primitive::P2P;
            for (int s = 0; s < train.pp; ++s) {
                it.group.push_back(nth_server(shape, train_pods[0], s));
            }
            it.volume_bytes = train.pp_boundary_bytes;
            it.slack_s = slack.train_large;
            out.push_back(std::move(it));
        }
        if (train.cp > 1) {
            PhaseIntent it;
            it.phase = PhaseKind::TrainCP;
            it.primitive = train.cp_all_to_all ? Primitive::AllToAll : Primitive::P2P;
            for (int s = 0; s < train.cp; ++s) {
                it.group.push_back(nth_server(shape, train_pods[0], s));
            }
            it.volume_bytes = train.cp_volume;
            it.slack_s = slack.train_medium;
            out.push_back(std::move(it));
        }
        if (train.ep > 1) {
            PhaseIntent it;
            it.phase = PhaseKind::TrainEP;
            it.primitive = Primitive::AllToAll;
            for (int s = 0; s < train.ep; ++s) {
                it.group.push_back(nth_server(shape, train_pods[0], s));
            }
            it.volume_bytes = train.ep_volume;
            it.slack_s = slack.train_medium;
            out.push_back(std::move(it));
        }
    }

    if (!train_pods.empty() && !gen_pods.empty()) {
        PhaseIntent ws;
        ws.phase = PhaseKind::WeightSync;
        ws.primitive = Primitive::T2G;
        ws.group.push_back(nth_server(shape, train_pods[0], 0));
        for (int gp : gen_pods) ws.group.push_back(nth_server(shape, gp, 0));
        ws.volume_bytes = train.param_bytes;
        ws.slack_s = slack.inter_stage;
        out.push_back(std::move(ws));

        PhaseIntent rs;
        rs.phase = PhaseKind::ResponseStream;
        rs.primitive = Primitive::G2T;
        for (int gp : gen_pods) rs.group.push_back(nth_server(shape, gp, 0));
        rs.group.push_back(nth_server(shape, train_pods[0], 0));
        rs.volume_bytes = gen.response_bytes;
        rs.slack_s = slack.inter_stage;
        out.push_back(std::move(rs));
    }

    for (const auto& inst : gen.instances) {
        if (inst.servers.empty()) continue;
        PhaseIntent it;
        it.group = inst.servers;
        it.slack_s = slack.gen_small;
        switch (inst.kind) {
            case ParallelKind::TP:
                it.phase = PhaseKind::GenTP;
                it.primitive = Primitive::AllReduce;
                it.volume_bytes = gen.gen_tp_volume;
                break;
            case ParallelKind::EP:
                it.phase = PhaseKind::GenEP;
                it.primitive = Primitive::AllToAll;
                it.volume_bytes = gen.gen_ep_volume;
                break;
            case ParallelKind::AFD:
                it.phase = PhaseKind::GenAF;
                it.primitive = Primitive::M2N;
                it.volume_bytes = gen.gen_af_volume;
                it.m_sources = std::max(inst.attention_servers, 1);
                break;
        }
        out.push_back(std::move(it));
    }
    return out;
}

namespace {

// server-level (src, dst, bytes, concurrent-out-degree share) pairs per primitive
std::vector<std::tuple<EndpointRef, EndpointRef, double>> intent_pairs(const PhaseIntent& it) {
    std::vector<std::tuple<EndpointRef, EndpointRef, double>> pairs;
    const auto& g = it.group;
    int n = static_cast<int>(g.size());
    if (n <= 1 || it.volume_bytes <= 0.0) return pairs;
    switch (it.primitive) {
        case Primitive::AllReduce: {
            double per_edge = 2.0 * (n - 1) / n * it.volume_bytes;
            for (int i = 0; i < n; ++i) pairs.push_back({g[i], g[(i + 1) % n], per_edge});
            break;
        }
        case Primitive::AllToAll: {
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    if (i != j) pairs.push_back({g[i], g[j], it.volume_bytes / n});
                }
            }
            break;
        }
        case Primitive::P2P: {
            for (int i = 0; i + 1 < n; ++i) pairs.push_back({g[i], g[i + 1], it.volume_bytes});
            break;
        }
        case Primitive::M2N: {
            int m = it.m_sources > 0 ? it.m_sources : n / 2;
            m = std::clamp(m, 1, n - 1);
            for (int i = 0; i < m; ++i) {
                for (int j = m; j < n; ++j) {
                    pairs.push_back({g[i], g[j], it.volume_bytes / (n - m)});
                }
            }
            break;
        }
        case Primitive::T2G:
        case Primitive::Broadcast: {
            for (int i = 1; i < n; ++i) pairs.push_back({g[0], g[i], it.volume_bytes});
            break;
        }
        case Primitive::G2T: {
            for (int i = 0; i + 1 < n; ++i) pairs.push_back({g[i], g[n - 1], it.volume_bytes});
            break;
        }
    }
    return pairs;
}

}  // namespace

DemandSummary demand_from_intent(const PhaseIntent& intent, const FabricState& shape,
                                 DemandGranularity granularity) {
    DemandSummary D;
    D.granularity = granularity;
    D.window_s = 1.0;

    auto pairs = intent_pairs(intent);
    if (pairs.empty()) return D;

    // out-degree per source server: concurrent flows share the NIC bundle
    std::map<std::pair<int, int>, int> out_degree;  // (pod, tor*K+server) -> fan-out
    auto key_of = [&](const EndpointRef& e) {
        return std::make_pair(e.pod, e.tor * 4096 + e.server);
    };
    for (const auto& [src, dst, bytes] : pairs) {
        (void)dst;
        (void)bytes;
        out_degree[key_of(src)]++;
    }

    std::map<std::pair<int, int>, double> entity_bytes;
    for (const auto& [src, dst, bytes] : pairs) {
        (void)bytes;
        int ea, eb;
        if (granularity == DemandGranularity::PodLevel) {
            ea = src.pod;
            eb = dst.pod;
        } else {
            ea = shape.tor_global(src.pod, src.tor);
            eb = shape.tor_global(dst.pod, dst.tor);
        }
        if (ea == eb) continue;
        double inject_bps = static_cast<double>(shape.pods[src.pod].nics_per_server) *
                            shape.params.b_link_bps / out_degree[key_of(src)];
        // bytes normalized to a 1 s window at the flow's peak injection rate
        entity_bytes[std::minmax(ea, eb)] += inject_bps / 8.0;
    }
    for (const auto& [key, bytes] : entity_bytes) {
        D.entries.push_back(DemandEntry{key.first, key.second, bytes});
    }
    return D;
}

CollectiveSpec spec_from_intent(const PhaseIntent& intent, const TopoView& topo) {
    CollectiveSpec spec;
    spec.primitive = intent.primitive;
    spec.volume_per_rank = intent.volume_bytes;
    spec.m_sources = intent.m_sources;
    spec.participants.reserve(intent.group.size());
    for (const auto& e : intent.group) spec.participants.push_back(topo.server_id(e));
    return spec;
}

}  // namespace rlsim
