#include "rlsim/simengine.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>

#include "rlsim/util.hpp"

namespace rlsim {

void PipelineConfig::validate() const {
    if (n_steps < 1) throw ConfigError("pipeline: n_steps must be >= 1");
    if (gen_gpus < 1 || train_gpus < 1) throw ConfigError("pipeline: GPU counts must be positive");
}

const ParallelMode& RunSpec::mode_by_name(const std::string& name) const {
    for (const auto& m : modes) {
        if (m.name == name) return m;
    }
    throw ConfigError("unknown mode '" + name + "'");
}

void RunSpec::validate() const {
    workload.validate();
    if (modes.empty()) throw ConfigError("spec: mode table is empty");
    for (const auto& m : modes) m.validate();
    costs.validate();
    scheduler.validate();
    train.validate();
    pipeline.validate();
    fabric.validate();
    if (pods.empty()) throw ConfigError("spec: pod list is empty");
    long long gen_capacity = 0;
    bool has_gen = false;
    for (const auto& p : pods) {
        if (p.role == PodRole::Gen) {
            has_gen = true;
            gen_capacity += static_cast<long long>(p.tors) * p.servers_per_tor * p.nics_per_server;
        }
    }
    if (!has_gen) throw ConfigError("spec: need at least one Gen pod");
    if (scheduler.g_total > gen_capacity) {
        throw ConfigError("spec: scheduler g_total exceeds Gen pod GPU capacity");
    }
    if (policy == SchedulerPolicy::Static) {
        mode_by_name(static_mode);
    } else {
        if (scheduler.candidate_modes.empty()) {
            throw ConfigError("spec: orchestrated policy needs candidate modes");
        }
        if (!initial_mode.empty()) mode_by_name(initial_mode);
    }
}

namespace {

// Fixed tie order among simultaneous events; ReconfigEnd runs before
// PhaseStart runs before DecodeRound, ticks precede decode rounds.
enum class EventKind : int {
    ReconfigEnd = 0,
    PhaseStart = 1,
    OrchestratorTick = 2,
    DecodeRound = 3,
    PhaseEnd = 4,
    ReconfigStart = 5,
    WeightSyncStart = 6,
    StepBoundary = 7,
};

struct SimEvent {
    double time = 0.0;
    EventKind kind = EventKind::DecodeRound;
    int instance = -1;
    int epoch = 0;
    long long seq = 0;
};

struct EventCmp {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
        if (a.time != b.time) return a.time > b.time;
        if (a.kind != b.kind) return static_cast<int>(a.kind) > static_cast<int>(b.kind);
        return a.seq > b.seq;
    }
};

struct InstanceRuntime {
    double stall_until = 0.0;
    long long reserved_kv = 0;
    double busy = 0.0;
    bool round_scheduled = false;
};

GenDeployment gen_deployment_of(const Cluster& cluster, const RunSpec& spec,
                                const FabricState& shape) {
    GenDeployment d;
    d.gen_tp_volume = spec.gen_tp_volume;
    d.gen_ep_volume = spec.gen_ep_volume;
    d.gen_af_volume = spec.gen_af_volume;
    d.response_bytes = spec.response_bytes_per_sample;

    auto gen_pods = shape.pods_with_role(PodRole::Gen);
    std::size_t pod_idx = 0;
    int tor = 0, srv = 0;
    auto next_server = [&]() -> EndpointRef {
        while (pod_idx < gen_pods.size()) {
            const auto& p = shape.pods[gen_pods[pod_idx]];
            if (tor < p.tors && srv < p.servers_per_tor) {
                EndpointRef e{gen_pods[pod_idx], tor, srv};
                if (++srv >= p.servers_per_tor) {
                    srv = 0;
                    ++tor;
                }
                return e;
            }
            tor = 0;
            srv = 0;
            ++pod_idx;
        }
        throw ConfigError("gen deployment exceeds Gen pod capacity");
    };

    for (const auto& inst : cluster.instances) {
        GenInstancePlacement pl;
        pl.kind = inst.mode.kind;
        int gpus_per_server = shape.pods[gen_pods.front()].nics_per_server;
        int servers = std::max(1, (inst.mode.gpus_required + gpus_per_server - 1) / gpus_per_server);
        for (int s = 0; s < servers; ++s) pl.servers.push_back(next_server());
        if (inst.mode.kind == ParallelKind::AFD && inst.mode.afd_ratio) {
            long long a = inst.mode.afd_ratio->first;
            long long f = inst.mode.afd_ratio->second;
            pl.attention_servers = std::max<int>(1, static_cast<int>(servers * a / (a + f)));
        }
        d.instances.push_back(std::move(pl));
    }
    return d;
}

std::string fabric_event_kind(const MaterializeResult& r) {
    if (r.applied) return "apply";
    return to_string(r.schedule.decision);
}

// One generation step driven by the discrete-event loop.
class GenStep {
public:
    GenStep(const RunSpec& spec, Cluster& cluster, FabricState& fabric, Metrics& metrics,
            int step, double step_start, const LengthDistribution& prior)
        : spec_(spec),
          cluster_(cluster),
          fabric_(fabric),
          metrics_(metrics),
          step_(step),
          step_start_(step_start),
          dist_(prior) {}

    double run(std::vector<Request> requests, StepMetrics& sm) {
        cluster_.requests = std::move(requests);
        place_requests();
        runtime_.assign(cluster_.instances.size(), InstanceRuntime{});
        available_at_.assign(cluster_.requests.size(), step_start_);
        for (std::size_t i = 0; i < cluster_.instances.size(); ++i) reset_runtime(i);

        pending_ = cluster_.pending_count();
        record_remaining(step_start_);
        if (pending_ == 0) return 0.0;

        if (spec_.policy == SchedulerPolicy::Orchestrated) {
            orchestrator_.emplace(spec_.scheduler);
            push(step_start_, EventKind::OrchestratorTick, -1);
        }
        for (std::size_t i = 0; i < cluster_.instances.size(); ++i) {
            schedule_round(static_cast<int>(i), step_start_);
        }

        double last_completion = step_start_;
        while (!queue_.empty() && pending_ > 0) {
            SimEvent ev = queue_.top();
            queue_.pop();
            if (ev.time < now_ - 1e-9) throw std::logic_error("event clock moved backward");
            now_ = std::max(now_, ev.time);
            switch (ev.kind) {
                case EventKind::DecodeRound:
                    if (ev.epoch == deploy_epoch_ && ev.instance >= 0 &&
                        ev.instance < static_cast<int>(cluster_.instances.size())) {
                        runtime_[ev.instance].round_scheduled = false;
                        on_decode(ev.instance, ev.time, &last_completion);
                    }
                    break;
                case EventKind::OrchestratorTick:
                    on_tick(ev.time);
                    break;
                default:
                    break;
            }
        }
        if (pending_ > 0) {
            throw std::runtime_error(deadlock_report());
        }
        sm.reconfig_count = reconfig_count_;
        sm.reconfig_overhead = reconfig_overhead_;
        sm.migrations = migration_count_;
        sm.busy_seconds.clear();
        double mx = 0.0, mn = std::numeric_limits<double>::infinity();
        for (const auto& rt : runtime_) {
            sm.busy_seconds.push_back(rt.busy);
            mx = std::max(mx, rt.busy);
            mn = std::min(mn, rt.busy);
        }
        sm.busy_max_min_ratio = (mn > 1e-9) ? mx / mn : (mx > 0 ? std::numeric_limits<double>::infinity() : 1.0);
        sm.bytes_by_class["response-stream"] +=
            static_cast<double>(cluster_.requests.size()) * spec_.response_bytes_per_sample;
        return last_completion - step_start_;
    }

    const std::vector<int>& realized_lengths() const { return realized_; }

private:
    void push(double t, EventKind kind, int instance) {
        queue_.push(SimEvent{t, kind, instance, deploy_epoch_, seq_++});
    }

    void place_requests() {
        for (auto& inst : cluster_.instances) {
            inst.q_run.clear();
            inst.q_wait.clear();
            inst.kv_demand = 0;
            inst.service_rate = 0.0;
        }
        int n = static_cast<int>(cluster_.instances.size());
        for (auto& r : cluster_.requests) {
            r.generated_len = 0;
            if (r.response_len() <= 0) {
                r.state = RequestState::Done;
                realized_.push_back(0);
                continue;
            }
            r.state = RequestState::Waiting;
            int target = r.id % n;
            r.home_instance = cluster_.instances[target].id;
            cluster_.instances[target].q_wait.push_back(r.id);
            cluster_.instances[target].kv_demand += r.kv_tokens();
        }
    }

    void reset_runtime(std::size_t i) {
        Instance& inst = cluster_.instances[i];
        InstanceRuntime& rt = runtime_[i];
        rt.reserved_kv = 0;
        for (int id : inst.q_wait) rt.reserved_kv += cluster_.req(id).kv_tokens();
        for (int id : inst.q_run) {
            rt.reserved_kv += cluster_.req(id).true_total_len;  // final footprint held
        }
        sort_wait_queue(i);
    }

    double est_remaining(const Request& r) const {
        if (spec_.scheduler.oracle_lengths) return static_cast<double>(r.remaining_true());
        return estimate_remaining(dist_, r.generated_len);
    }

    void sort_wait_queue(std::size_t i) {
        auto& q = cluster_.instances[i].q_wait;
        std::vector<std::pair<double, int>> keyed;
        keyed.reserve(q.size());
        for (int id : q) keyed.push_back({est_remaining(cluster_.req(id)), id});
        std::stable_sort(keyed.begin(), keyed.end());
        for (std::size_t j = 0; j < q.size(); ++j) q[j] = keyed[j].second;
    }

    // admit waiting requests whose full KV footprint fits the reservation
    int admit(std::size_t i, double at, double* prefill_tokens) {
        Instance& inst = cluster_.instances[i];
        InstanceRuntime& rt = runtime_[i];
        long long cap = kv_capacity(inst.mode);
        int admitted = 0;
        std::vector<int> still_waiting;
        for (int id : inst.q_wait) {
            Request& r = cluster_.req(id);
            long long extra = static_cast<long long>(r.true_total_len) - r.kv_tokens();
            if (static_cast<int>(inst.q_run.size()) < inst.mode.max_batch &&
                available_at_[id] <= at + 1e-12 && rt.reserved_kv + extra <= cap) {
                rt.reserved_kv += extra;
                inst.q_run.push_back(id);
                r.state = RequestState::Running;
                *prefill_tokens += r.prompt_len;
                ++admitted;
            } else {
                still_waiting.push_back(id);
            }
        }
        inst.q_wait = std::move(still_waiting);
        return admitted;
    }

    void schedule_round(int i, double at) {
        if (runtime_[i].round_scheduled) return;
        const Instance& inst = cluster_.instances[i];
        if (inst.q_run.empty() && inst.q_wait.empty()) return;
        double t = std::max(at, runtime_[i].stall_until);
        runtime_[i].round_scheduled = true;
        push(t, EventKind::DecodeRound, i);
    }

    void on_decode(int i, double t, double* last_completion) {
        Instance& inst = cluster_.instances[i];
        InstanceRuntime& rt = runtime_[i];
        double prefill_tokens = 0.0;
        admit(static_cast<std::size_t>(i), t, &prefill_tokens);
        int n_active = static_cast<int>(inst.q_run.size());
        if (n_active == 0) {
            if (!inst.q_wait.empty()) {
                // nothing admissible: either a request can never fit (true
                // deadlock) or arrivals are gated by availability times
                double next_avail = std::numeric_limits<double>::infinity();
                long long cap = kv_capacity(inst.mode);
                for (int id : inst.q_wait) {
                    const Request& r = cluster_.req(id);
                    next_avail = std::min(next_avail, available_at_[id]);
                    if (static_cast<long long>(r.true_total_len) > cap) {
                        throw std::runtime_error(deadlock_report());
                    }
                }
                if (std::isfinite(next_avail) && next_avail > t) {
                    rt.round_scheduled = true;
                    push(next_avail, EventKind::DecodeRound, i);
                    return;
                }
                throw std::runtime_error(deadlock_report());
            }
            return;
        }

        double duration = inst.mode.base_step_time +
                          inst.mode.per_request_step_cost * n_active +
                          prefill_tokens / inst.mode.prefill_rate;
        double done_t = t + duration;
        rt.busy += duration;

        std::vector<int> still_running;
        std::vector<int> completed;
        for (int id : inst.q_run) {
            Request& r = cluster_.req(id);
            r.generated_len += 1;
            inst.kv_demand += 1;
            if (r.done()) {
                completed.push_back(id);
            } else {
                still_running.push_back(id);
            }
        }
        for (int id : completed) {
            Request& r = cluster_.req(id);
            r.state = RequestState::Done;
            inst.kv_demand -= r.kv_tokens();
            rt.reserved_kv -= r.true_total_len;
            realized_.push_back(r.response_len());
            dist_ = condition_on_completions(dist_, {r.response_len()});
            --pending_;
            record_remaining(done_t);
            *last_completion = std::max(*last_completion, done_t);
        }
        inst.q_run = std::move(still_running);

        double obs = n_active / duration;  // tokens/s this round
        inst.service_rate = inst.service_rate <= 0.0
                                ? obs
                                : 0.3 * obs + 0.7 * inst.service_rate;

        schedule_round(i, done_t);
    }

    void on_tick(double t) {
        if (!orchestrator_ || pending_ == 0) return;
        TickAction a = orchestrator_->tick(t, cluster_, dist_, spec_.costs);

        DecisionRecord rec;
        rec.t = t;
        rec.step = step_;
        rec.action = to_string(a.kind);
        rec.delta_load = a.delta_load;
        rec.load_indices = a.load_indices;
        rec.migrations = static_cast<int>(a.migrations.size());
        rec.planned = a.planned;
        rec.obj_cur = a.obj_cur;
        rec.obj_new = a.obj_new;
        rec.c_overhead = a.c_overhead;
        rec.accepted = a.plan.has_value();
        rec.kv_relaxed = a.plan && a.plan->kv_relaxed;
        rec.infeasible = to_string(a.infeasible);
        metrics_.decisions.push_back(rec);

        if (!a.migrations.empty()) {
            migration_count_ += static_cast<int>(a.migrations.size());
            for (const auto& m : a.migrations) {
                // reservations move with the request; arrival gated by the
                // transfer/recompute time
                int from = instance_index(m.from_instance);
                int to = instance_index(m.to_instance);
                const Request& r = cluster_.req(m.request_id);
                if (from >= 0) runtime_[from].reserved_kv -= r.kv_tokens();
                if (to >= 0) runtime_[to].reserved_kv += r.kv_tokens();
                available_at_[m.request_id] = t + m.seconds;
            }
            for (std::size_t i = 0; i < cluster_.instances.size(); ++i) sort_wait_queue(i);
        }
        if (a.plan) {
            execute_reconfiguration(a, t);
        } else {
            for (std::size_t i = 0; i < cluster_.instances.size(); ++i) {
                schedule_round(static_cast<int>(i), t);
            }
        }
        if (pending_ > 0) push(t + spec_.scheduler.dt_react, EventKind::OrchestratorTick, -1);
    }

    int instance_index(int id) const {
        for (std::size_t i = 0; i < cluster_.instances.size(); ++i) {
            if (cluster_.instances[i].id == id) return static_cast<int>(i);
        }
        return -1;
    }

    void execute_reconfiguration(const TickAction& a, double t) {
        const Plan& plan = *a.plan;
        SolveInputs in;
        in.buckets = a.plan_buckets;
        in.candidates = a.plan_candidates;
        in.cfg = spec_.scheduler;
        in.cm = spec_.costs;
        in.slots.resize(plan.slot_mode.size());
        for (std::size_t k = 0; k < cluster_.instances.size() && k < in.slots.size(); ++k) {
            in.slots[k].prev_mode = cluster_.instances[k].mode.name;
        }
        auto errs = validate_plan(plan, in);
        if (!errs.empty()) {
            std::string msg = "reconfiguration plan rejected:";
            for (const auto& e : errs) msg += " " + e;
            throw std::runtime_error(msg);
        }

        double wall = plan.switch_total + plan.migration_total;
        reconfig_count_ += 1;
        reconfig_overhead_ += wall;

        // rebuild the active instance set, densely renumbered in slot order
        std::vector<Instance> fresh;
        std::vector<int> slot_to_dense(plan.slot_mode.size(), -1);
        for (std::size_t k = 0; k < plan.slot_mode.size(); ++k) {
            if (plan.slot_mode[k] < 0) continue;
            Instance inst;
            inst.id = static_cast<int>(fresh.size());
            inst.mode = in.candidates[plan.slot_mode[k]];
            slot_to_dense[k] = inst.id;
            fresh.push_back(std::move(inst));
        }
        for (std::size_t b = 0; b < in.buckets.size(); ++b) {
            int dense = slot_to_dense[plan.bucket_slot[b]];
            for (const auto& m : in.buckets[b].members) {
                Request& r = cluster_.req(m.request_id);
                r.state = RequestState::Waiting;
                r.home_instance = dense;
                fresh[dense].q_wait.push_back(m.request_id);
                fresh[dense].kv_demand += r.kv_tokens();
            }
        }
        cluster_.instances = std::move(fresh);
        runtime_.assign(cluster_.instances.size(), InstanceRuntime{});
        deploy_epoch_ += 1;
        for (std::size_t i = 0; i < cluster_.instances.size(); ++i) {
            reset_runtime(i);
            runtime_[i].stall_until = t + wall;
            schedule_round(static_cast<int>(i), t + wall);
        }

        // the compute-side stall is the fabric's reconfiguration slack
        materialize_gen_templates(std::max(wall, 0.0), t);
    }

    void materialize_gen_templates(double slack, double t) {
        if (spec_.topology != TopologyKind::RFabric) return;
        GenDeployment dep = gen_deployment_of(cluster_, spec_, fabric_);
        auto intents = build_phase_intents(TrainConfig{1, 1, 1, 1, 1}, dep, fabric_, spec_.slacks);
        bool saw_isolated = false;
        for (auto& it : intents) {
            if (it.phase != PhaseKind::GenEP && it.phase != PhaseKind::GenAF &&
                it.phase != PhaseKind::GenTP) {
                continue;
            }
            if (it.phase == PhaseKind::GenTP || it.phase == PhaseKind::GenEP) {
                if (saw_isolated) continue;  // one isolated-template pass per deployment
                saw_isolated = true;
            }
            it.slack_s = slack;
            DemandGranularity gran = DemandGranularity::TorLevel;
            DemandSummary D = demand_from_intent(it, fabric_, gran);
            MaterializeResult r = materialize_topology(it, D, slack, fabric_, t);
            log_fabric(r, t, slack);
        }
    }

    void log_fabric(const MaterializeResult& r, double t, double slack) {
        FabricEventRecord rec;
        rec.t = t;
        rec.kind = fabric_event_kind(r);
        rec.tmpl = to_string(r.tmpl);
        rec.epoch = fabric_.epoch;
        rec.slack = slack;
        rec.t_ocs = fabric_.params.t_ocs_s;
        rec.circuits = static_cast<int>(r.plan.circuits.size());
        rec.ok = r.repaired_ok;
        metrics_.fabric_events.push_back(rec);
        if (r.applied) metrics_.epochs.push_back(fabric_.active.at(r.tmpl));
    }

    void record_remaining(double t) {
        metrics_.remaining.push_back(RemainingPoint{step_, t - step_start_, pending_});
    }

    std::string deadlock_report() const {
        std::ostringstream os;
        os << "gen step deadlock: no instance can host a pending request; KV state:";
        for (const auto& inst : cluster_.instances) {
            os << " [inst " << inst.id << " mode " << inst.mode.name << " cap "
               << kv_capacity(inst.mode) << " demand " << inst.kv_demand << " run "
               << inst.q_run.size() << " wait " << inst.q_wait.size() << "]";
        }
        return os.str();
    }

    const RunSpec& spec_;
    Cluster& cluster_;
    FabricState& fabric_;
    Metrics& metrics_;
    int step_;
    double step_start_;
    LengthDistribution dist_;

    std::priority_queue<SimEvent, std::vector<SimEvent>, EventCmp> queue_;
    std::vector<InstanceRuntime> runtime_;
    std::vector<double> available_at_;
    std::vector<int> realized_;
    std::optional<Orchestrator> orchestrator_;
    long long seq_ = 0;
    int deploy_epoch_ = 0;
    int pending_ = 0;
    double now_ = 0.0;
    int reconfig_count_ = 0;
    double reconfig_overhead_ = 0.0;
    int migration_count_ = 0;

    friend Metrics run_pipeline(const RunSpec&);
};

}  // namespace

double run_train_step(double total_tokens, const TrainConfig& cfg, FabricState& fabric,
                      TopologyKind topology, const GenDeployment& gen, const SlackDefaults& slacks,
                      double now, std::vector<FabricEventRecord>* fabric_log,
                      std::vector<CommRecord>* comm_log,
                      std::map<std::string, double>* bytes_by_class) {
    if (total_tokens <= 0.0) return 0.0;
    double compute = cfg.compute_base_s + cfg.compute_per_token_s * total_tokens;

    auto intents = build_phase_intents(cfg, gen, fabric, slacks);
    double comm = 0.0;
    for (const auto& it : intents) {
        bool train_phase = it.phase == PhaseKind::TrainDP || it.phase == PhaseKind::TrainTP ||
                           it.phase == PhaseKind::TrainPP || it.phase == PhaseKind::TrainCP ||
                           it.phase == PhaseKind::TrainEP;
        if (!train_phase) continue;
        if (topology == TopologyKind::RFabric) {
            DemandGranularity gran = select_template(it) == TemplateKind::InterPodMesh
                                         ? DemandGranularity::PodLevel
                                         : DemandGranularity::TorLevel;
            DemandSummary D = demand_from_intent(it, fabric, gran);
            MaterializeResult r = materialize_topology(it, D, it.slack_s, fabric, now + comm);
            if (fabric_log) {
                FabricEventRecord rec;
                rec.t = now + comm;
                rec.kind = fabric_event_kind(r);
                rec.tmpl = to_string(r.tmpl);
                rec.epoch = fabric.epoch;
                rec.slack = it.slack_s;
                rec.t_ocs = fabric.params.t_ocs_s;
                rec.circuits = static_cast<int>(r.plan.circuits.size());
                rec.ok = r.repaired_ok;
                fabric_log->push_back(rec);
            }
        }
        TopoView topo = topology == TopologyKind::RFabric
                            ? TopoView::from_fabric(fabric)
                            : TopoView::fat_tree(fabric, topology == TopologyKind::FatTreeOs3 ? 3 : 1);
        CollectiveSpec spec = spec_from_intent(it, topo);
        double dur = collective_time(spec, topo, now + comm + fabric.params.t_ocs_s);
        if (comm_log) {
            comm_log->push_back(CommRecord{to_string(it.phase), now + comm, dur, it.volume_bytes,
                                           fabric.epoch});
        }
        if (bytes_by_class) (*bytes_by_class)[to_string(it.phase)] += it.volume_bytes;
        comm += dur;
    }
    return compute + comm;
}

Metrics run_pipeline(const RunSpec& spec) {
    spec.validate();
    Metrics metrics;
    FabricState fabric = make_fabric(spec.pods, spec.fabric);

    // initial deployment
    Cluster cluster;
    std::string mode_name = spec.policy == SchedulerPolicy::Static
                                ? spec.static_mode
                                : (spec.initial_mode.empty() ? spec.scheduler.candidate_modes[0].name
                                                             : spec.initial_mode);
    const ParallelMode& m0 = spec.mode_by_name(mode_name);
    int count = std::max(1, spec.scheduler.g_total / m0.gpus_required);
    for (int i = 0; i < count; ++i) {
        Instance inst;
        inst.id = i;
        inst.mode = m0;
        cluster.instances.push_back(inst);
    }

    std::vector<LengthDistribution> history;
    double clock = 0.0;
    double prev_batch_tokens = 0.0;

    for (int step = 0; step < spec.pipeline.n_steps; ++step) {
        auto requests = sample_trace(spec.workload, step);
        for (const auto& r : requests) {
            metrics.trace.push_back(TraceRow{step, r.id, r.prompt_len, r.true_total_len});
        }

        LengthDistribution prior;
        if (!history.empty()) {
            Predictor p = Predictor::fit(history);
            prior = p.forecast(static_cast<double>(requests.size()));
        } else {
            // lognormal-shaped operator prior with the configured mean
            prior.bucket_width = spec.workload.bucket_width;
            double sigma = std::max(spec.prior_sigma, 1e-3);
            double mu = std::log(std::max(spec.prior_mean_response, 1.0)) - sigma * sigma / 2.0;
            auto cdf = [&](double x) {
                if (x <= 0.0) return 0.0;
                return 0.5 * (1.0 + std::erf((std::log(x) - mu) / (sigma * std::sqrt(2.0))));
            };
            double hi = std::exp(mu + 4.0 * sigma);
            int n_buckets = std::max(1, prior.bucket_of(static_cast<int>(hi)) + 1);
            prior.counts.assign(n_buckets, 0.0);
            double total = static_cast<double>(requests.size());
            double prev = 0.0;
            for (int b = 0; b < n_buckets; ++b) {
                double upper = cdf(static_cast<double>((b + 1) * prior.bucket_width));
                if (b == n_buckets - 1) upper = 1.0;
                prior.counts[b] = (upper - prev) * total;
                prev = upper;
            }
            prior.total = total;
        }

        StepMetrics sm;
        sm.step = step;
        sm.samples = static_cast<long long>(requests.size());
        long long resp_tokens = 0;
        for (const auto& r : requests) resp_tokens += r.response_len();
        sm.tokens = resp_tokens;

        GenStep gen(spec, cluster, fabric, metrics, step, clock, prior);
        // materialize the Gen-side topology for the starting deployment
        if (spec.topology == TopologyKind::RFabric) {
            GenDeployment dep0 = gen_deployment_of(cluster, spec, fabric);
            auto intents = build_phase_intents(TrainConfig{1, 1, 1, 1, 1}, dep0, fabric, spec.slacks);
            for (auto& it : intents) {
                if (it.phase != PhaseKind::GenTP && it.phase != PhaseKind::GenEP &&
                    it.phase != PhaseKind::GenAF) {
                    continue;
                }
                DemandSummary D = demand_from_intent(it, fabric, DemandGranularity::TorLevel);
                MaterializeResult r = materialize_topology(it, D, spec.slacks.inter_stage, fabric, clock);
                FabricEventRecord rec;
                rec.t = clock;
                rec.kind = fabric_event_kind(r);
                rec.tmpl = to_string(r.tmpl);
                rec.epoch = fabric.epoch;
                rec.slack = spec.slacks.inter_stage;
                rec.t_ocs = fabric.params.t_ocs_s;
                rec.circuits = static_cast<int>(r.plan.circuits.size());
                rec.ok = r.repaired_ok;
                metrics.fabric_events.push_back(rec);
                if (r.applied) metrics.epochs.push_back(fabric.active.at(r.tmpl));
                break;  // one isolated-template materialization per step start
            }
        }
        sm.gen_makespan = gen.run(std::move(requests), sm);

        GenDeployment dep = gen_deployment_of(cluster, spec, fabric);
        sm.train_time = fabric.pods_with_role(PodRole::Train).empty()
                            ? 0.0
                            : run_train_step(prev_batch_tokens, spec.train, fabric, spec.topology,
                                             dep, spec.slacks, clock, &metrics.fabric_events,
                                             &metrics.comms, &sm.bytes_by_class);

        // weight synchronization at the step boundary
        double boundary = clock + std::max(sm.gen_makespan, sm.train_time);
        bool can_sync = !fabric.pods_with_role(PodRole::Train).empty() &&
                        spec.train.param_bytes > 0.0;
        if (!can_sync) {
            sm.sync_time = 0.0;
        } else if (spec.topology == TopologyKind::RFabric) {
            PhaseIntent ws;
            ws.phase = PhaseKind::WeightSync;
            ws.primitive = Primitive::T2G;
            auto tp = fabric.pods_with_role(PodRole::Train);
            auto gp = fabric.pods_with_role(PodRole::Gen);
            ws.group.push_back(EndpointRef{tp.front(), 0, 0});
            for (int g : gp) ws.group.push_back(EndpointRef{g, 0, 0});
            ws.volume_bytes = spec.train.param_bytes;
            ws.slack_s = spec.slacks.inter_stage;
            DemandSummary D = demand_from_intent(ws, fabric, DemandGranularity::PodLevel);
            MaterializeResult r = materialize_topology(ws, D, ws.slack_s, fabric, boundary);
            FabricEventRecord rec;
            rec.t = boundary;
            rec.kind = fabric_event_kind(r);
            rec.tmpl = to_string(r.tmpl);
            rec.epoch = fabric.epoch;
            rec.slack = ws.slack_s;
            rec.t_ocs = fabric.params.t_ocs_s;
            rec.circuits = static_cast<int>(r.plan.circuits.size());
            rec.ok = r.repaired_ok;
            metrics.fabric_events.push_back(rec);
            if (r.applied) metrics.epochs.push_back(fabric.active.at(r.tmpl));
            const CircuitPlan& tree = r.applied ? fabric.active.at(TemplateKind::MulticastTree)
                                                : r.plan;
            sm.sync_time = weight_sync_time_tree(spec.train.param_bytes, fabric, tree,
                                                 spec.intra_pod_bw_bps);
        } else {
            TopoView topo = TopoView::fat_tree(fabric, spec.topology == TopologyKind::FatTreeOs3 ? 3 : 1);
            sm.sync_time = weight_sync_time_static(spec.train.param_bytes, fabric, topo,
                                                   spec.intra_pod_bw_bps);
        }
        if (can_sync) {
            metrics.comms.push_back(CommRecord{"weight-sync", boundary, sm.sync_time,
                                               spec.train.param_bytes, fabric.epoch});
            sm.bytes_by_class["weight-sync"] += spec.train.param_bytes;
        }

        sm.step_time = spec.pipeline.paradigm == Paradigm::OneStepAsync
                           ? std::max(sm.gen_makespan, sm.train_time) + sm.sync_time
                           : sm.gen_makespan + sm.train_time + sm.sync_time;
        sm.samples_per_s = sm.step_time > 0.0 ? sm.samples / sm.step_time : 0.0;
        sm.tokens_per_s = sm.step_time > 0.0 ? sm.tokens / sm.step_time : 0.0;

        history.push_back(histogram_of(cluster.requests, spec.workload.bucket_width));
        prev_batch_tokens = 0.0;
        for (const auto& r : cluster.requests) prev_batch_tokens += r.true_total_len;

        clock += sm.step_time;
        metrics.total_samples += sm.samples;
        metrics.total_tokens += sm.tokens;
        metrics.steps.push_back(std::move(sm));
    }
    metrics.total_time = clock;
    metrics.throughput_samples = clock > 0.0 ? metrics.total_samples / clock : 0.0;
    metrics.throughput_tokens = clock > 0.0 ? metrics.total_tokens / clock : 0.0;
    return metrics;
}

}  // namespace rlsim
