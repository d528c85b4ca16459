#include "rlsim/scenario.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rlsim/util.hpp"

namespace rlsim {

using nlohmann::json;

namespace {

LengthModel parse_length_model(const json& j, const std::string& where) {
    LengthModel m;
    if (!j.contains("components") || !j["components"].is_array() || j["components"].empty()) {
        throw ConfigError(where + ": length model needs a non-empty components array");
    }
    m.components.clear();
    for (const auto& c : j["components"]) {
        LognormalSpec s;
        s.mu = c.at("mu").get<double>();
        s.sigma = c.at("sigma").get<double>();
        s.weight = c.value("weight", 1.0);
        m.components.push_back(s);
    }
    if (m.components.size() == 1) m.components[0].weight = 1.0;
    m.min_len = j.value("min_len", 1);
    m.max_len = j.value("max_len", 1 << 20);
    return m;
}

ParallelKind parse_kind(const std::string& s, const std::string& where) {
    if (s == "TP") return ParallelKind::TP;
    if (s == "EP") return ParallelKind::EP;
    if (s == "AFD") return ParallelKind::AFD;
    throw ConfigError(where + ": unknown parallel kind '" + s + "'");
}

ParallelMode parse_mode(const json& j) {
    ParallelMode m;
    m.name = j.at("name").get<std::string>();
    m.kind = parse_kind(j.value("kind", "TP"), "modes." + m.name);
    m.degree = j.value("degree", 1);
    m.gpus_required = j.value("gpus", m.degree);
    if (j.contains("afd_ratio")) {
        auto r = j["afd_ratio"];
        m.afd_ratio = std::make_pair(r.at(0).get<int>(), r.at(1).get<int>());
    }
    m.base_step_time = j.at("t0").get<double>();
    m.per_request_step_cost = j.at("c").get<double>();
    m.kv_tokens_per_gpu = j.value("kv_tokens_per_gpu", 100000LL);
    m.prefill_rate = j.value("prefill_rate", 50000.0);
    m.max_batch = j.value("max_batch", 1 << 20);
    m.validate();
    return m;
}

PodRole parse_role(const std::string& s) {
    if (s == "train") return PodRole::Train;
    if (s == "gen") return PodRole::Gen;
    throw ConfigError("fabric.pods: unknown role '" + s + "' (train|gen)");
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& text, const std::string& name) {
    ScenarioConfig sc;
    sc.raw = text;
    sc.source_path = name;
    sc.content_hash = fnv1a64(text);

    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(name + ": " + e.what());
    }

    RunSpec& s = sc.base;
    try {
        // workload
        const json& w = j.at("workload");
        s.workload.n_requests = w.at("n_requests").get<int>();
        s.workload.seed = w.value("seed", 1ull);
        s.workload.bucket_width = w.value("bucket_width", 256);
        s.workload.drift = w.value("drift", 1.0);
        s.workload.length_model = parse_length_model(w.at("length_model"), "workload.length_model");
        if (w.contains("prompt_len_model")) {
            s.workload.prompt_len_model =
                parse_length_model(w["prompt_len_model"], "workload.prompt_len_model");
        } else {
            s.workload.prompt_len_model.components = {{5.8, 0.4, 1.0}};
            s.workload.prompt_len_model.min_len = 16;
            s.workload.prompt_len_model.max_len = 4096;
        }

        // modes
        for (const auto& mj : j.at("modes")) s.modes.push_back(parse_mode(mj));

        // costs
        const json& c = j.at("costs");
        s.costs.kv_bytes_per_token = c.value("kv_bytes_per_token", 163840.0);
        s.costs.link_bw = c.value("link_bw", 2.5e10);
        s.costs.recompute_rate = c.value("recompute_rate", 50000.0);
        if (c.contains("weight_reshard_time")) {
            for (auto& [key, v] : c["weight_reshard_time"].items()) {
                s.costs.weight_reshard_time[key] = v.get<double>();
            }
        }

        // scheduler
        const json& sch = j.at("scheduler");
        s.scheduler.theta = sch.value("theta", 0.25);
        s.scheduler.dt_pro = sch.value("dt_pro", 30.0);
        s.scheduler.dt_react = sch.value("dt_react", 5.0);
        s.scheduler.epsilon = sch.value("epsilon", 1.0);
        s.scheduler.g_total = sch.at("g_total").get<int>();
        if (sch.contains("kv_policy")) {
            const json& kp = sch["kv_policy"];
            s.scheduler.kv_policy.rho = kp.value("rho", 0.85);
            s.scheduler.kv_policy.delta = kp.value("delta", 0.5);
            s.scheduler.kv_policy.hard = kp.value("hard", true);
            s.scheduler.kv_policy.soft_fallback = kp.value("soft_fallback", true);
        }
        for (const auto& cname : sch.at("candidates")) {
            bool found = false;
            for (const auto& m : s.modes) {
                if (m.name == cname.get<std::string>()) {
                    s.scheduler.candidate_modes.push_back(m);
                    found = true;
                }
            }
            if (!found) {
                throw ConfigError("scheduler.candidates: unknown mode '" +
                                  cname.get<std::string>() + "'");
            }
        }
        if (sch.contains("watermarks")) {
            const json& wm = sch["watermarks"];
            s.scheduler.early_pending = wm.value("early_pending", 256);
            s.scheduler.late_pending = wm.value("late_pending", 32);
            s.scheduler.throughput_degree_max = wm.value("throughput_degree_max", 4);
            s.scheduler.latency_degree_min = wm.value("latency_degree_min", 8);
            s.scheduler.skew_threshold = wm.value("skew_threshold", 3.0);
        }
        s.scheduler.exact_budget = sch.value("exact_budget", 2.0e6);
        s.scheduler.beam_width = sch.value("beam_width", 16);
        s.scheduler.max_slots = sch.value("max_slots", 16);
        s.scheduler.proactive = sch.value("proactive", true);
        s.scheduler.reactive = sch.value("reactive", true);
        s.scheduler.oracle_lengths = sch.value("oracle_lengths", false);

        // fabric
        const json& f = j.at("fabric");
        for (const auto& pj : f.at("pods")) {
            PodSpec p;
            p.name = pj.value("name", "pod" + std::to_string(s.pods.size()));
            p.role = parse_role(pj.at("role").get<std::string>());
            p.tors = pj.value("tors", 2);
            p.servers_per_tor = pj.value("servers_per_tor", 4);
            p.nics_per_server = pj.value("nics_per_server", 8);
            s.pods.push_back(p);
        }
        if (f.contains("ocs")) {
            OcsProfile prof = ocs_profile_by_name(f["ocs"].get<std::string>());
            s.fabric.t_ocs_s = prof.reconfig_delay_s;
            s.fabric.ocs_radix = prof.radix;
        }
        s.fabric.b_link_bps = f.value("b_link", 4.0e11);
        s.fabric.t_ocs_s = f.value("t_ocs", s.fabric.t_ocs_s);
        s.fabric.ocs_radix = f.value("ocs_radix", s.fabric.ocs_radix);
        s.fabric.agg_ports_per_tor = f.value("agg_ports_per_tor", 8);
        s.fabric.core_ports_per_pod = f.value("core_ports_per_pod", 24);
        s.fabric.prune_frac = f.value("prune_frac", 0.05);
        s.fabric.stream_slice_bps = f.value("stream_slice_bps", 4.0e11);
        s.fabric.sync_fanout = f.value("sync_fanout", 0);
        s.fabric.sync_chunk_bytes = f.value("sync_chunk_bytes", 67108864.0);
        sc.intra_pod_bw_bps = f.value("intra_pod_bw", 4.0e11);
        s.intra_pod_bw_bps = sc.intra_pod_bw_bps;
        if (f.contains("price_table")) {
            const json& pt = f["price_table"];
            if (pt.contains("eps_per_radix")) {
                for (auto& [k, v] : pt["eps_per_radix"].items()) {
                    s.prices.eps_per_radix[std::stoi(k)] = v.get<double>();
                }
            }
            if (pt.contains("ocs_per_radix")) {
                for (auto& [k, v] : pt["ocs_per_radix"].items()) {
                    s.prices.ocs_per_radix[std::stoi(k)] = v.get<double>();
                }
            }
            s.prices.transceiver_per_port = pt.value("transceiver_per_port", 2000.0);
            s.prices.eps_radix = pt.value("eps_radix", 64);
        } else {
            s.prices.eps_per_radix = {{64, 20000.0}, {128, 52000.0}};
            s.prices.ocs_per_radix = {{128, 40000.0}, {320, 100000.0}, {512, 140000.0},
                                      {576, 150000.0}, {1008, 240000.0}};
        }

        // train
        if (j.contains("train")) {
            const json& t = j["train"];
            s.train.dp = t.value("dp", 2);
            s.train.tp = t.value("tp", 8);
            s.train.pp = t.value("pp", 1);
            s.train.cp = t.value("cp", 1);
            s.train.ep = t.value("ep", 1);
            s.train.layers = t.value("layers", 48);
            s.train.param_bytes = t.value("param_bytes", 2.8e10);
            s.train.grad_bytes = t.value("grad_bytes", 2.8e10);
            s.train.tp_volume_per_layer = t.value("tp_volume_per_layer", 2.0e8);
            s.train.pp_boundary_bytes = t.value("pp_boundary_bytes", 1.0e8);
            s.train.cp_volume = t.value("cp_volume", 5.0e8);
            s.train.ep_volume = t.value("ep_volume", 5.0e8);
            s.train.compute_base_s = t.value("compute_base", 5.0);
            s.train.compute_per_token_s = t.value("compute_per_token", 1.0e-5);
            s.train.cp_all_to_all = t.value("cp_all_to_all", false);
        }

        // pipeline
        if (j.contains("pipeline")) {
            const json& p = j["pipeline"];
            std::string par = p.value("paradigm", "one-step-async");
            if (par == "one-step-async") {
                s.pipeline.paradigm = Paradigm::OneStepAsync;
            } else if (par == "sync") {
                s.pipeline.paradigm = Paradigm::SyncDisaggregated;
            } else {
                throw ConfigError("pipeline.paradigm: unknown '" + par + "'");
            }
            s.pipeline.n_steps = p.value("n_steps", 4);
            s.pipeline.gen_gpus = p.value("gen_gpus", s.scheduler.g_total);
            s.pipeline.train_gpus = p.value("train_gpus", 16);
        }

        if (j.contains("gen_comm")) {
            const json& g = j["gen_comm"];
            s.gen_tp_volume = g.value("tp_volume", 1.0e8);
            s.gen_ep_volume = g.value("ep_volume", 1.0e8);
            s.gen_af_volume = g.value("af_volume", 5.0e7);
            s.response_bytes_per_sample = g.value("response_bytes_per_sample", 2.0e4);
        }
        if (j.contains("slacks")) {
            const json& sl = j["slacks"];
            s.slacks.gen_small = sl.value("gen_small", 0.0005);
            s.slacks.train_medium = sl.value("train_medium", 0.05);
            s.slacks.train_large = sl.value("train_large", 0.3);
            s.slacks.inter_stage = sl.value("inter_stage", 3.0);
            s.slacks.gen_pd = sl.value("gen_pd", 1.0);
        }
        s.prior_mean_response = j.value("prior_mean_response", 4096.0);
        s.prior_sigma = j.value("prior_sigma", 1.0);

        // baselines
        if (j.contains("baselines")) {
            for (const auto& b : j["baselines"]) {
                sc.baselines.push_back({b.at(0).get<std::string>(), b.at(1).get<std::string>()});
            }
        } else {
            sc.baselines = {{"orchestrrl", "rfabric"}};
        }
        if (j.contains("baseline_defs")) {
            for (auto& [k, v] : j["baseline_defs"].items()) {
                sc.baseline_defs[k] = v.get<std::string>();
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(name + ": " + e.what());
    }
    return sc;
}

ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str(), path);
}

RunSpec make_run_spec(const ScenarioConfig& sc, const std::string& policy,
                      const std::string& fabric_name, std::uint64_t seed) {
    RunSpec spec = sc.base;
    spec.topology = topology_from_string(fabric_name);
    spec.seed = seed;
    spec.workload.seed = seed;

    auto mode_def = [&](const std::string& key, const std::string& fallback) {
        auto it = sc.baseline_defs.find(key);
        return it != sc.baseline_defs.end() ? it->second : fallback;
    };
    if (policy == "orchestrrl") {
        spec.policy = SchedulerPolicy::Orchestrated;
        spec.initial_mode = mode_def("initial", spec.scheduler.candidate_modes.empty()
                                                    ? spec.modes.front().name
                                                    : spec.scheduler.candidate_modes.front().name);
    } else if (policy == "verl-to" || policy == "verl-lo") {
        spec.policy = SchedulerPolicy::Static;
        spec.static_mode = mode_def(policy, "");
        if (spec.static_mode.empty()) {
            throw ConfigError("baseline_defs missing mode for '" + policy + "'");
        }
    } else {
        throw ConfigError("unknown baseline scheduler '" + policy + "'");
    }
    spec.validate();
    return spec;
}

}  // namespace rlsim
