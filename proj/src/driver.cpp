#include "rlsim/driver.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "rlsim/util.hpp"

namespace rlsim {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string hash_hex(std::uint64_t h) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string provenance_line(const ScenarioConfig& sc, const RunOutput& out) {
    return "# scenario=" + hash_hex(sc.content_hash) + " seed=" + std::to_string(out.seed) +
           " pair=" + out.pair();
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << content;
}

json plan_to_json(const CircuitPlan& plan) {
    json out;
    out["template"] = to_string(plan.tmpl);
    out["epoch"] = plan.epoch;
    out["feasible"] = plan.feasible;
    json circuits = json::array();
    for (const auto& c : plan.circuits) {
        json cj;
        cj["layer"] = c.layer == OcsLayer::Agg ? "agg" : "core";
        cj["port_a"] = c.port_a;
        cj["port_b"] = c.port_b;
        cj["entity_a"] = c.entity_a;
        cj["entity_b"] = c.entity_b;
        cj["bandwidth_bps"] = c.bandwidth_bps;
        cj["active_from"] = c.active_from;
        circuits.push_back(cj);
    }
    out["circuits"] = circuits;
    return out;
}

}  // namespace

RunOutput run_one(const ScenarioConfig& sc, const std::string& policy, const std::string& fabric,
                  std::uint64_t seed) {
    RunOutput out;
    out.policy = policy;
    out.fabric = fabric;
    out.seed = seed;
    RunSpec spec = make_run_spec(sc, policy, fabric, seed);
    out.metrics = run_pipeline(spec);
    out.cost = network_cost(spec.topology, spec.pods, spec.fabric, spec.prices);
    return out;
}

void write_run_outputs(const ScenarioConfig& sc, const RunOutput& out, const std::string& out_dir) {
    fs::path dir = fs::path(out_dir) / out.pair() / std::to_string(out.seed);
    fs::create_directories(dir);
    const Metrics& m = out.metrics;
    std::string prov = provenance_line(sc, out);

    {
        std::ostringstream csv;
        csv << prov << "\n";
        csv << "step,gen_makespan,train_time,sync_time,step_time,samples,tokens,"
               "samples_per_s,tokens_per_s,reconfig_count,reconfig_overhead,migrations,"
               "busy_max_min_ratio\n";
        for (const auto& s : m.steps) {
            csv << s.step << ',' << fmt_double(s.gen_makespan) << ',' << fmt_double(s.train_time)
                << ',' << fmt_double(s.sync_time) << ',' << fmt_double(s.step_time) << ','
                << s.samples << ',' << s.tokens << ',' << fmt_double(s.samples_per_s) << ','
                << fmt_double(s.tokens_per_s) << ',' << s.reconfig_count << ','
                << fmt_double(s.reconfig_overhead) << ',' << s.migrations << ','
                << fmt_double(s.busy_max_min_ratio) << "\n";
        }
        write_file(dir / "metrics.csv", csv.str());
    }
    {
        json sj;
        sj["scenario"] = hash_hex(sc.content_hash);
        sj["seed"] = out.seed;
        sj["pair"] = out.pair();
        sj["total_time"] = m.total_time;
        sj["total_samples"] = m.total_samples;
        sj["total_tokens"] = m.total_tokens;
        sj["throughput_samples_per_s"] = m.throughput_samples;
        sj["throughput_tokens_per_s"] = m.throughput_tokens;
        sj["network_cost_total"] = out.cost.total;
        sj["network_cost"] = {{"eps_switches", out.cost.eps_switches},
                              {"ocs_devices", out.cost.ocs_devices},
                              {"transceivers", out.cost.transceivers},
                              {"eps_cost", out.cost.eps_cost},
                              {"ocs_cost", out.cost.ocs_cost},
                              {"transceiver_cost", out.cost.transceiver_cost}};
        json steps = json::array();
        for (const auto& s : m.steps) {
            json st;
            st["step"] = s.step;
            st["gen_makespan"] = s.gen_makespan;
            st["train_time"] = s.train_time;
            st["sync_time"] = s.sync_time;
            st["step_time"] = s.step_time;
            st["samples"] = s.samples;
            st["tokens"] = s.tokens;
            st["reconfig_count"] = s.reconfig_count;
            st["reconfig_overhead"] = s.reconfig_overhead;
            st["migrations"] = s.migrations;
            st["busy_max_min_ratio"] = s.busy_max_min_ratio;
            st["busy_seconds"] = s.busy_seconds;
            st["bytes_by_class"] = s.bytes_by_class;
            steps.push_back(st);
        }
        sj["steps"] = steps;
        write_file(dir / "summary.json", sj.dump(2) + "\n");
    }
    {
        std::ostringstream js;
        for (const auto& d : m.decisions) {
            json dj;
            dj["t"] = d.t;
            dj["step"] = d.step;
            dj["action"] = d.action;
            dj["delta_load"] = d.delta_load;
            dj["load_indices"] = d.load_indices;
            dj["migrations"] = d.migrations;
            dj["planned"] = d.planned;
            dj["obj_cur"] = d.obj_cur;
            dj["obj_new"] = d.obj_new;
            dj["c_overhead"] = d.c_overhead;
            dj["accepted"] = d.accepted;
            dj["kv_relaxed"] = d.kv_relaxed;
            dj["infeasible"] = d.infeasible;
            js << dj.dump() << "\n";
        }
        write_file(dir / "decisions.jsonl", js.str());
    }
    {
        std::ostringstream js;
        for (const auto& e : m.fabric_events) {
            json ej;
            ej["t"] = e.t;
            ej["kind"] = e.kind;
            ej["template"] = e.tmpl;
            ej["epoch"] = e.epoch;
            ej["slack"] = e.slack;
            ej["t_ocs"] = e.t_ocs;
            ej["circuits"] = e.circuits;
            ej["ok"] = e.ok;
            js << ej.dump() << "\n";
        }
        write_file(dir / "fabric.jsonl", js.str());
    }
    {
        std::ostringstream csv;
        csv << prov << "\nstep,t,remaining\n";
        for (const auto& r : m.remaining) {
            csv << r.step << ',' << fmt_double(r.t) << ',' << r.remaining << "\n";
        }
        write_file(dir / "remaining.csv", csv.str());
    }
    {
        std::ostringstream csv;
        csv << prov << "\nphase,start,duration,bytes,epoch\n";
        for (const auto& c : m.comms) {
            csv << c.phase << ',' << fmt_double(c.start) << ',' << fmt_double(c.duration) << ','
                << fmt_double(c.bytes) << ',' << c.epoch << "\n";
        }
        write_file(dir / "comm.csv", csv.str());
    }
    {
        std::ostringstream csv;
        csv << prov << "\nstep,id,prompt_len,true_total_len\n";
        for (const auto& t : m.trace) {
            csv << t.step << ',' << t.id << ',' << t.prompt_len << ',' << t.true_total_len << "\n";
        }
        write_file(dir / "trace.csv", csv.str());
    }
    {
        json ej = json::array();
        for (const auto& plan : m.epochs) ej.push_back(plan_to_json(plan));
        json top;
        top["scenario"] = hash_hex(sc.content_hash);
        top["seed"] = out.seed;
        top["pair"] = out.pair();
        top["epochs"] = ej;
        write_file(dir / "epochs.json", top.dump(2) + "\n");
    }
}

namespace {

int guarded(const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "rlsim: configuration error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "rlsim: runtime error: %s\n", e.what());
        return 1;
    }
}

}  // namespace

int cmd_run(const std::string& scenario_path, std::uint64_t seed, const std::string& out_dir) {
    return guarded([&] {
        ScenarioConfig sc = load_scenario(scenario_path);
        for (const auto& [policy, fabric] : sc.baselines) {
            RunOutput out = run_one(sc, policy, fabric, seed);
            write_run_outputs(sc, out, out_dir);
            log_msg(LogLevel::Info, "run " + out.pair() + " seed " + std::to_string(seed) +
                                        " throughput " + fmt_double(out.metrics.throughput_samples));
        }
    });
}

int cmd_compare(const std::string& scenario_path, const std::vector<std::uint64_t>& seeds,
                const std::string& out_dir, const std::string& reference) {
    return guarded([&] {
        ScenarioConfig sc = load_scenario(scenario_path);
        if (sc.baselines.size() < 2) {
            throw ConfigError("compare needs >= 2 baseline pairs in the scenario");
        }
        std::string ref = reference.empty() ? "orchestrrl/fat-tree" : reference;
        auto slash = ref.find('/');
        if (slash == std::string::npos) throw ConfigError("reference must be scheduler/fabric");
        std::string ref_policy = ref.substr(0, slash);
        std::string ref_fabric = ref.substr(slash + 1);

        fs::create_directories(out_dir);
        std::ostringstream csv;
        csv << "# scenario=" << hash_hex(sc.content_hash) << " reference=" << ref << "\n";
        csv << "policy,fabric,seed,samples_per_s,tokens_per_s,norm_throughput,network_cost,"
               "cost_efficiency\n";

        json agg = json::object();
        for (std::uint64_t seed : seeds) {
            RunOutput refrun = run_one(sc, ref_policy, ref_fabric, seed);
            double ref_tput = refrun.metrics.throughput_samples;
            for (const auto& [policy, fabric] : sc.baselines) {
                RunOutput out = (policy == ref_policy && fabric == ref_fabric)
                                    ? refrun
                                    : run_one(sc, policy, fabric, seed);
                write_run_outputs(sc, out, out_dir);
                double norm = ref_tput > 0.0 ? out.metrics.throughput_samples / ref_tput : 0.0;
                double cost_eff = out.cost.total > 0.0 ? norm / (out.cost.total / 1.0e6) : 0.0;
                csv << policy << ',' << fabric << ',' << seed << ','
                    << fmt_double(out.metrics.throughput_samples) << ','
                    << fmt_double(out.metrics.throughput_tokens) << ',' << fmt_double(norm) << ','
                    << fmt_double(out.cost.total) << ',' << fmt_double(cost_eff) << "\n";
                std::string key = out.pair();
                agg[key]["norm_sum"] = agg[key].value("norm_sum", 0.0) + norm;
                agg[key]["n"] = agg[key].value("n", 0) + 1;
                agg[key]["cost"] = out.cost.total;
            }
        }
        for (auto& [key, v] : agg.items()) {
            v["norm_mean"] = v["norm_sum"].get<double>() / v["n"].get<int>();
        }
        write_file(fs::path(out_dir) / "comparison.csv", csv.str());
        json top;
        top["scenario"] = hash_hex(sc.content_hash);
        top["reference"] = ref;
        top["pairs"] = agg;
        write_file(fs::path(out_dir) / "comparison.json", top.dump(2) + "\n");
    });
}

int cmd_sweep(const std::string& scenario_path, const std::string& grid_json,
              const std::string& out_dir) {
    return guarded([&] {
        ScenarioConfig sc = load_scenario(scenario_path);
        json grid;
        try {
            grid = grid_json.empty() ? json::object() : json::parse(grid_json);
        } catch (const json::parse_error& e) {
            throw ConfigError(std::string("grid: ") + e.what());
        }
        if (!grid.is_object()) throw ConfigError("grid must be a JSON object of path -> values");

        std::vector<std::string> keys;
        std::vector<std::vector<json>> values;
        for (auto& [k, v] : grid.items()) {
            if (!v.is_array() || v.empty()) throw ConfigError("grid '" + k + "' needs values");
            keys.push_back(k);
            values.push_back(std::vector<json>(v.begin(), v.end()));
        }

        json base = json::parse(sc.raw);
        // validate grid keys against the scenario document
        for (const auto& k : keys) {
            std::string ptr = "/" + k;
            for (auto& ch : ptr) {
                if (ch == '.') ch = '/';
            }
            if (!base.contains(json::json_pointer(ptr))) {
                throw ConfigError("grid key '" + k + "' not present in scenario");
            }
        }

        fs::create_directories(out_dir);
        std::ostringstream csv;
        csv << "# scenario=" << hash_hex(sc.content_hash) << "\n";
        csv << "point";
        for (const auto& k : keys) csv << ',' << k;
        csv << ",policy,fabric,samples_per_s,tokens_per_s,sync_time_mean,migrations,network_cost\n";

        std::vector<std::size_t> idx(keys.size(), 0);
        int point = 0;
        while (true) {
            json doc = base;
            for (std::size_t i = 0; i < keys.size(); ++i) {
                std::string ptr = "/" + keys[i];
                for (auto& ch : ptr) {
                    if (ch == '.') ch = '/';
                }
                doc[json::json_pointer(ptr)] = values[i][idx[i]];
            }
            ScenarioConfig point_sc = parse_scenario(doc.dump(), sc.source_path + "#" +
                                                                     std::to_string(point));
            for (const auto& [policy, fabric] : point_sc.baselines) {
                RunOutput out = run_one(point_sc, policy, fabric, point_sc.base.workload.seed);
                double sync_mean = 0.0;
                int migs = 0;
                for (const auto& s : out.metrics.steps) {
                    sync_mean += s.sync_time;
                    migs += s.migrations;
                }
                if (!out.metrics.steps.empty()) sync_mean /= out.metrics.steps.size();
                csv << point;
                for (std::size_t i = 0; i < keys.size(); ++i) csv << ',' << values[i][idx[i]].dump();
                csv << ',' << policy << ',' << fabric << ','
                    << fmt_double(out.metrics.throughput_samples) << ','
                    << fmt_double(out.metrics.throughput_tokens) << ',' << fmt_double(sync_mean)
                    << ',' << migs << ',' << fmt_double(out.cost.total) << "\n";
            }
            ++point;
            // advance the cartesian counter
            std::size_t d = 0;
            for (; d < idx.size(); ++d) {
                if (++idx[d] < values[d].size()) break;
                idx[d] = 0;
            }
            if (keys.empty() || d == idx.size()) break;
        }
        write_file(fs::path(out_dir) / "sweep.csv", csv.str());
    });
}

int cmd_topo_dump(const std::string& scenario_path, std::uint64_t seed,
                  const std::string& out_dir) {
    return guarded([&] {
        ScenarioConfig sc = load_scenario(scenario_path);
        // prefer an rfabric pair; fall back to the first baseline
        std::string policy = sc.baselines.front().first;
        std::string fabric = sc.baselines.front().second;
        for (const auto& [p, f] : sc.baselines) {
            if (f == "rfabric") {
                policy = p;
                fabric = f;
                break;
            }
        }
        RunOutput out = run_one(sc, policy, fabric, seed);
        fs::create_directories(out_dir);
        json ej = json::array();
        for (const auto& plan : out.metrics.epochs) ej.push_back(plan_to_json(plan));
        json top;
        top["scenario"] = hash_hex(sc.content_hash);
        top["seed"] = seed;
        top["pair"] = out.pair();
        top["epochs"] = ej;
        write_file(fs::path(out_dir) / "topo.json", top.dump(2) + "\n");
    });
}

int cmd_profile_dump(const std::string& scenario_path, const std::string& out_dir) {
    return guarded([&] {
        ScenarioConfig sc = load_scenario(scenario_path);
        fs::create_directories(out_dir);
        std::ostringstream csv;
        csv << "# scenario=" << hash_hex(sc.content_hash) << "\n";
        csv << "mode,batch,tokens_per_s\n";
        for (const auto& m : sc.base.modes) {
            for (int batch : {1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024}) {
                csv << m.name << ',' << batch << ',' << fmt_double(decode_throughput(m, batch))
                    << "\n";
            }
        }
        write_file(fs::path(out_dir) / "profiles.csv", csv.str());
    });
}

}  // namespace rlsim
