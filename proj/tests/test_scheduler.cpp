#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "rlsim/scheduler.hpp"
#include "rlsim/util.hpp"

using namespace rlsim;

namespace {

ParallelMode tp_mode(const std::string& name, int degree, double t0, double c,
                     long long kv_per_gpu = 100000) {
    ParallelMode m;
    m.name = name;
    m.kind = ParallelKind::TP;
    m.degree = degree;
    m.gpus_required = degree;
    m.base_step_time = t0;
    m.per_request_step_cost = c;
    m.kv_tokens_per_gpu = kv_per_gpu;
    return m;
}

SchedulerConfig base_cfg(std::vector<ParallelMode> cands, int g_total) {
    SchedulerConfig cfg;
    cfg.g_total = g_total;
    cfg.candidate_modes = std::move(cands);
    cfg.kv_policy.rho = 0.6;
    cfg.kv_policy.delta = 0.5;
    cfg.kv_policy.hard = true;
    cfg.kv_policy.soft_fallback = true;
    cfg.epsilon = 0.0;
    cfg.theta = 0.25;
    cfg.dt_pro = 30.0;
    cfg.dt_react = 5.0;
    return cfg;
}

Bucket rand_bucket(Rng& rng, int slots) {
    Bucket b;
    b.index = rng.uniform_int(0, 12);
    b.rep_len = (b.index + 1) * 256;
    int count = rng.uniform_int(1, 6);
    for (int i = 0; i < count; ++i) {
        BucketMember m;
        m.request_id = i;
        m.home_instance = rng.uniform_int(-1, slots - 1);
        m.kv_tokens = rng.uniform_int(100, 12000);
        m.ctx_tokens = m.kv_tokens;
        b.members.push_back(m);
        b.kv_demand += m.kv_tokens + b.rep_len;
    }
    return b;
}

CostModel full_cost_table(const std::vector<ParallelMode>& modes) {
    CostModel cm;
    cm.kv_bytes_per_token = 150000.0;
    cm.link_bw = 2.5e10;
    cm.recompute_rate = 50000.0;
    for (const auto& a : modes) {
        cm.weight_reshard_time["none->" + a.name] = 1.5 + 0.1 * a.degree;
        for (const auto& b : modes) {
            if (a.name != b.name) {
                cm.weight_reshard_time[a.name + "->" + b.name] = 2.0 + 0.2 * (a.degree + b.degree);
            }
        }
    }
    return cm;
}

// -----------------------------------------------------------------------
// Independent exhaustive oracle: odometer enumeration over y and x with its
// own cost arithmetic, mirroring the documented objective and constraints.
struct OracleOut {
    bool feasible = false;
    double objective = std::numeric_limits<double>::infinity();
    bool relaxed = false;
};

double oracle_rate(const ParallelMode& mode, const std::vector<Bucket>& buckets) {
    long long n = 0;
    double fp = 0.0;
    for (const auto& b : buckets) {
        n += b.count();
        fp += static_cast<double>(b.kv_demand) +
              static_cast<double>(b.rep_len) * b.count();
    }
    double mean_fp = n > 0 ? std::max(fp / n, 1.0) : 1.0;
    long long cap = kv_capacity(mode);
    int conc = static_cast<int>(std::floor(cap / mean_fp));
    conc = std::max(1, std::min(conc, mode.max_batch));
    return conc / (mode.base_step_time + mode.per_request_step_cost * conc);
}

OracleOut oracle_pass(const SolveInputs& in, bool relaxed) {
    OracleOut out;
    out.relaxed = relaxed;
    int ns = static_cast<int>(in.slots.size());
    int nc = static_cast<int>(in.candidates.size());
    int nb = static_cast<int>(in.buckets.size());

    std::vector<double> rate(nc);
    std::vector<double> lo(nc), hi(nc);
    for (int j = 0; j < nc; ++j) {
        rate[j] = oracle_rate(in.candidates[j], in.buckets);
        double cap = static_cast<double>(kv_capacity(in.candidates[j]));
        lo[j] = relaxed ? 0.0 : (1.0 - in.cfg.kv_policy.delta) * in.cfg.kv_policy.rho * cap;
        hi[j] = relaxed ? cap : (1.0 + in.cfg.kv_policy.delta) * in.cfg.kv_policy.rho * cap;
    }

    std::vector<int> y(ns, -1);
    while (true) {
        // GPU budget
        int gpus = 0;
        bool any = false;
        for (int k = 0; k < ns; ++k) {
            if (y[k] >= 0) {
                gpus += in.candidates[y[k]].gpus_required;
                any = true;
            }
        }
        if (any && gpus <= in.cfg.g_total) {
            std::vector<int> x(nb, -1);
            std::vector<int> active;
            for (int k = 0; k < ns; ++k) {
                if (y[k] >= 0) active.push_back(k);
            }
            std::vector<int> xi(nb, 0);
            while (true) {
                for (int i = 0; i < nb; ++i) x[i] = active[xi[i]];
                // evaluate
                std::vector<double> load(ns, 0.0), dkv(ns, 0.0);
                double mig = 0.0, sw = 0.0;
                for (int k = 0; k < ns; ++k) {
                    if (y[k] < 0) continue;
                    const auto& prev = in.slots[k].prev_mode;
                    bool changed = !prev || *prev != in.candidates[y[k]].name;
                    if (changed) {
                        std::string key =
                            (prev ? *prev : std::string("none")) + "->" + in.candidates[y[k]].name;
                        sw += in.cm.weight_reshard_time.at(key);
                    }
                }
                for (int i = 0; i < nb; ++i) {
                    int k = x[i];
                    load[k] += static_cast<double>(in.buckets[i].rep_len) * in.buckets[i].count();
                    dkv[k] += static_cast<double>(in.buckets[i].kv_demand);
                    const auto& prev = in.slots[k].prev_mode;
                    bool changed = !prev || *prev != in.candidates[y[k]].name;
                    for (const auto& m : in.buckets[i].members) {
                        double c =
                            std::min(m.kv_tokens * in.cm.kv_bytes_per_token / in.cm.link_bw,
                                     m.ctx_tokens / in.cm.recompute_rate);
                        if (m.home_instance == k) {
                            if (changed) sw += c;
                        } else if (m.home_instance >= 0) {
                            mig += c;
                        }
                    }
                }
                bool ok = true;
                double z = 0.0;
                for (int k = 0; k < ns && ok; ++k) {
                    if (y[k] < 0) continue;
                    if (dkv[k] > hi[y[k]] + 1e-9 || dkv[k] < lo[y[k]] - 1e-9) ok = false;
                    if (load[k] > 0.0) z = std::max(z, load[k] / rate[y[k]]);
                }
                if (ok) {
                    double obj = z + mig + sw;
                    if (obj < out.objective) {
                        out.objective = obj;
                        out.feasible = true;
                    }
                }
                // odometer over x
                int d = 0;
                for (; d < nb; ++d) {
                    if (++xi[d] < static_cast<int>(active.size())) break;
                    xi[d] = 0;
                }
                if (nb == 0 || d == nb) break;
            }
        }
        // odometer over y
        int d = 0;
        for (; d < ns; ++d) {
            if (++y[d] < nc) break;
            y[d] = -1;
        }
        if (d == ns) break;
    }
    return out;
}

OracleOut oracle_solve(const SolveInputs& in) {
    if (in.cfg.kv_policy.hard) {
        OracleOut hard = oracle_pass(in, false);
        if (hard.feasible || !in.cfg.kv_policy.soft_fallback) return hard;
    }
    return oracle_pass(in, true);
}

SolveInputs random_instance(Rng& rng) {
    int slots = rng.uniform_int(1, 3);
    int ncand = rng.uniform_int(1, 3);
    int nbuckets = rng.uniform_int(1, 8);

    SolveInputs in;
    std::vector<ParallelMode> modes;
    int degrees[] = {1, 2, 4, 8};
    for (int j = 0; j < ncand; ++j) {
        int d = degrees[rng.uniform_int(0, 3)];
        auto m = tp_mode("M" + std::to_string(j) + "d" + std::to_string(d), d,
                         rng.uniform(0.01, 0.08), rng.uniform(5e-5, 6e-4),
                         rng.uniform_int(20000, 120000));
        modes.push_back(m);
    }
    in.candidates = modes;
    in.cfg = base_cfg(modes, rng.uniform_int(4, 20));
    in.cfg.kv_policy.rho = rng.uniform(0.4, 0.85);
    double dmax = std::min(0.95, 1.0 / in.cfg.kv_policy.rho - 1.0);
    in.cfg.kv_policy.delta = rng.uniform(0.0, dmax);
    in.cm = full_cost_table(modes);
    in.slots.resize(slots);
    for (int k = 0; k < slots; ++k) {
        if (rng.uniform() < 0.7) in.slots[k].prev_mode = modes[rng.uniform_int(0, ncand - 1)].name;
    }
    for (int i = 0; i < nbuckets; ++i) in.buckets.push_back(rand_bucket(rng, slots));
    return in;
}

Cluster two_instance_cluster(const ParallelMode& mode, int n_requests, int response_len) {
    Cluster c;
    for (int i = 0; i < 2; ++i) {
        Instance inst;
        inst.id = i;
        inst.mode = mode;
        c.instances.push_back(inst);
    }
    for (int i = 0; i < n_requests; ++i) {
        Request r;
        r.id = i;
        r.prompt_len = 100;
        r.true_total_len = 100 + response_len;
        r.state = RequestState::Waiting;
        c.requests.push_back(r);
    }
    return c;
}

LengthDistribution flat_dist(int n, int rep_bucket = 3) {
    LengthDistribution d;
    d.bucket_width = 256;
    d.counts.assign(rep_bucket + 1, 0.0);
    d.counts[rep_bucket] = n;
    d.total = n;
    return d;
}

}  // namespace

TEST_CASE("prune_candidates: wave lifecycle rule table") {
    auto tp2 = tp_mode("TP2", 2, 0.04, 4e-4);
    auto tp4 = tp_mode("TP4", 4, 0.03, 2e-4);
    auto tp8 = tp_mode("TP8", 8, 0.016, 1e-4);
    auto cfg = base_cfg({tp2, tp4, tp8}, 16);

    WaveStats early{512, 1.2};
    auto kept = prune_candidates(early, cfg);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].name == "TP2");
    CHECK(kept[1].name == "TP4");

    WaveStats late{8, 4.0};
    kept = prune_candidates(late, cfg);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].name == "TP8");

    WaveStats mid{100, 1.5};
    kept = prune_candidates(mid, cfg);
    CHECK(kept.size() == 3);

    // single candidate passes through unchanged
    auto single = base_cfg({tp2}, 16);
    kept = prune_candidates(early, single);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].name == "TP2");

    auto empty = base_cfg({}, 16);
    CHECK_THROWS_AS(prune_candidates(early, empty), ConfigError);
}

TEST_CASE("solve_plan: single-choice instance gives z = W/R") {
    auto tp2 = tp_mode("TP2", 2, 0.04, 4e-4, 10000000);
    SolveInputs in;
    in.candidates = {tp2};
    in.cfg = base_cfg({tp2}, 2);
    in.cfg.kv_policy.hard = false;  // capacity-only for the closed form
    in.cm = full_cost_table({tp2});
    in.slots.resize(1);
    in.slots[0].prev_mode = "TP2";
    Bucket b;
    b.index = 3;
    b.rep_len = 1024;
    for (int i = 0; i < 4; ++i) {
        BucketMember m;
        m.request_id = i;
        m.home_instance = 0;
        m.kv_tokens = 500;
        m.ctx_tokens = 500;
        b.members.push_back(m);
        b.kv_demand += 500 + b.rep_len;
    }
    in.buckets = {b};

    auto res = solve_plan(in);
    REQUIRE(res.ok());
    double rate = saturated_rate(tp2, in.buckets);
    CHECK(res.plan->makespan_z == doctest::Approx(4096.0 / rate));
    CHECK(res.plan->objective == doctest::Approx(res.plan->makespan_z));
    CHECK(res.plan->switch_total == 0.0);
    CHECK(res.plan->migration_total == 0.0);
    CHECK(validate_plan(*res.plan, in).empty());
}

TEST_CASE("solve_plan: matches the exhaustive oracle on 120 random instances") {
    Rng rng(2024);
    int checked = 0;
    for (int trial = 0; trial < 120; ++trial) {
        SolveInputs in = random_instance(rng);
        auto res = solve_plan(in);
        auto oracle = oracle_solve(in);
        if (!res.ok()) {
            CHECK_FALSE(oracle.feasible);
            continue;
        }
        REQUIRE(oracle.feasible);
        CHECK(res.plan->objective ==
              doctest::Approx(oracle.objective).epsilon(1e-9).scale(1.0));
        CHECK(res.plan->kv_relaxed == oracle.relaxed);
        ++checked;
    }
    CHECK(checked > 60);  // most random instances should be feasible
}

TEST_CASE("solve_plan: feasibility validator passes on 400 random plans") {
    Rng rng(77);
    int returned = 0;
    for (int trial = 0; trial < 400; ++trial) {
        SolveInputs in = random_instance(rng);
        auto res = solve_plan(in);
        if (!res.ok()) continue;
        ++returned;
        auto errs = validate_plan(*res.plan, in);
        if (!errs.empty()) {
            CAPTURE(errs.front());
            CHECK(errs.empty());
        }
    }
    CHECK(returned > 200);
}

TEST_CASE("solve_plan: enlarging the candidate set never worsens the objective") {
    Rng rng(11);
    for (int trial = 0; trial < 40; ++trial) {
        SolveInputs in = random_instance(rng);
        if (in.candidates.size() < 2) continue;
        in.cfg.kv_policy.hard = false;  // single constraint regime
        SolveInputs smaller = in;
        smaller.candidates.pop_back();
        smaller.cfg.candidate_modes = smaller.candidates;
        auto big = solve_plan(in);
        auto small = solve_plan(smaller);
        if (big.ok() && small.ok()) {
            CHECK(big.plan->objective <= small.plan->objective + 1e-9);
        }
        if (!big.ok()) CHECK_FALSE(small.ok());
    }
}

TEST_CASE("solve_plan: KV band impossible for every assignment reports kv-balance") {
    auto tp2 = tp_mode("TP2", 2, 0.04, 4e-4, 100000);
    SolveInputs in;
    in.candidates = {tp2};
    in.cfg = base_cfg({tp2}, 4);
    in.cfg.kv_policy.rho = 1e-6;
    in.cfg.kv_policy.delta = 0.0;
    in.cfg.kv_policy.hard = true;
    in.cfg.kv_policy.soft_fallback = false;
    in.cm = full_cost_table({tp2});
    in.slots.resize(2);
    Bucket b;
    b.index = 0;
    b.rep_len = 256;
    BucketMember m;
    m.kv_tokens = 50000;
    m.ctx_tokens = 50000;
    b.members.push_back(m);
    b.kv_demand = 50000 + b.rep_len;
    in.buckets = {b};

    auto res = solve_plan(in);
    CHECK_FALSE(res.ok());
    CHECK(res.reason == InfeasibleReason::KvBalance);

    // with the fallback enabled the relaxed plan is capacity-feasible
    in.cfg.kv_policy.soft_fallback = true;
    auto relaxed = solve_plan(in);
    REQUIRE(relaxed.ok());
    CHECK(relaxed.plan->kv_relaxed);
    CHECK(validate_plan(*relaxed.plan, in).empty());
}

TEST_CASE("estimate_makespan: empty, balanced and skewed cases") {
    auto tp2 = tp_mode("TP2", 2, 0.04, 4e-4, 10000000);
    auto dist = flat_dist(8);

    Cluster empty = two_instance_cluster(tp2, 0, 1024);
    CHECK(estimate_makespan(empty, dist, false) == 0.0);

    // balanced two-instance case equals the single-instance estimate
    Cluster c = two_instance_cluster(tp2, 8, 1023);
    for (int i = 0; i < 8; ++i) {
        int inst = i % 2;
        c.instances[inst].q_wait.push_back(i);
        c.instances[inst].kv_demand += c.requests[i].kv_tokens();
    }
    double both = estimate_makespan(c, dist, true);

    Cluster single = two_instance_cluster(tp2, 4, 1023);
    single.instances.pop_back();
    for (int i = 0; i < 4; ++i) {
        single.instances[0].q_wait.push_back(i);
        single.instances[0].kv_demand += single.requests[i].kv_tokens();
    }
    double one = estimate_makespan(single, dist, true);
    CHECK(both == doctest::Approx(one));

    // skewed assignment: the slowest instance dominates
    Cluster skew = two_instance_cluster(tp2, 8, 1023);
    for (int i = 0; i < 8; ++i) {
        int inst = i < 7 ? 0 : 1;
        skew.instances[inst].q_wait.push_back(i);
        skew.instances[inst].kv_demand += skew.requests[i].kv_tokens();
    }
    std::vector<Request> heavy7(skew.requests.begin(), skew.requests.begin() + 7);
    auto b7 = bucketize(heavy7, dist, BucketizeOptions{true});
    CHECK(estimate_makespan(skew, dist, true) ==
          doctest::Approx(instance_completion_estimate(b7, tp2)));
}

TEST_CASE("load_index: direct formula and ranking properties") {
    auto tp2 = tp_mode("TP2", 2, 0.04, 4e-4, 50000);
    Instance w;
    w.id = 0;
    w.mode = tp2;
    CHECK(load_index(w, 5000.0) == 0.0);  // empty queues

    for (int i = 0; i < 10; ++i) w.q_run.push_back(i);
    for (int i = 10; i < 16; ++i) w.q_wait.push_back(i);
    w.kv_demand = kv_capacity(tp2) - 40000;  // free 40000, bcap = 8 at fp 5000
    w.service_rate = 2000.0;
    CHECK(load_index(w, 5000.0) == doctest::Approx((16.0 / 8.0) / 2000.0));

    // halved service rate doubles the index
    Instance slower = w;
    slower.service_rate = 1000.0;
    CHECK(load_index(slower, 5000.0) == doctest::Approx(2.0 * load_index(w, 5000.0)));

    // scaling every rate by a common factor preserves the ranking
    std::vector<Instance> ws;
    Rng rng(9);
    for (int i = 0; i < 6; ++i) {
        Instance v = w;
        v.id = i;
        v.q_wait.resize(rng.uniform_int(0, 6));
        v.service_rate = rng.uniform(500.0, 4000.0);
        ws.push_back(v);
    }
    auto rank_of = [&](double scale) {
        int arg = 0;
        double best = -1.0;
        for (int i = 0; i < 6; ++i) {
            Instance v = ws[i];
            v.service_rate *= scale;
            double li = load_index(v, 5000.0);
            if (li > best) {
                best = li;
                arg = i;
            }
        }
        return arg;
    };
    CHECK(rank_of(1.0) == rank_of(3.7));
}

TEST_CASE("rebalance: below threshold is a no-op") {
    auto tp2 = tp_mode("TP2", 2, 0.04, 4e-4, 1000000);
    auto cfg = base_cfg({tp2}, 4);
    auto cm = full_cost_table({tp2});
    Cluster c = two_instance_cluster(tp2, 8, 1000);
    for (int i = 0; i < 8; ++i) {
        int inst = i % 2;
        c.instances[inst].q_wait.push_back(i);
        c.instances[inst].kv_demand += c.requests[i].kv_tokens();
        c.instances[inst].service_rate = 1000.0;
    }
    auto migs = rebalance(c, cfg, cm, 2000.0);
    CHECK(migs.empty());
}

TEST_CASE("rebalance: drains the spread and matches a greedy re-execution") {
    auto tp2 = tp_mode("TP2", 2, 0.04, 4e-4, 1000000);
    auto cfg = base_cfg({tp2}, 4);
    cfg.theta = 0.25;  // relative spread threshold
    const double fp = 200000.0;  // B_cap around 9: the index spread is visible
    auto cm = full_cost_table({tp2});

    Cluster c = two_instance_cluster(tp2, 10, 1000);
    for (int i = 0; i < 10; ++i) {
        c.instances[0].q_wait.push_back(i);
        c.instances[0].kv_demand += c.requests[i].kv_tokens();
    }
    c.instances[0].service_rate = 1000.0;
    c.instances[1].service_rate = 1000.0;

    Cluster ref = c;  // oracle replays the documented greedy on a copy
    auto migs = rebalance(c, cfg, cm, fp);
    CHECK_FALSE(migs.empty());

    // oracle: repeatedly move the shortest-context waiting request from the
    // most to the least loaded instance while the spread exceeds theta
    auto rel_spread = [](double a, double b) {
        double mx = std::max(a, b);
        return mx > 0.0 ? (mx - std::min(a, b)) / mx : 0.0;
    };
    std::vector<int> oracle_moves;
    while (true) {
        double li0 = load_index(ref.instances[0], fp);
        double li1 = load_index(ref.instances[1], fp);
        double delta = rel_spread(li0, li1);
        if (delta <= cfg.theta) break;
        int hi = li0 >= li1 ? 0 : 1, lo = 1 - hi;
        auto& src = ref.instances[hi];
        auto& dst = ref.instances[lo];
        if (src.q_wait.empty()) break;
        int pick = src.q_wait.front();
        for (int id : src.q_wait) {
            if (ref.req(id).kv_tokens() < ref.req(pick).kv_tokens()) pick = id;
        }
        if (dst.free_kv() < ref.req(pick).kv_tokens()) break;
        // strict spread decrease check mirrors the implementation
        Instance s2 = src, d2 = dst;
        s2.q_wait.erase(std::find(s2.q_wait.begin(), s2.q_wait.end(), pick));
        s2.kv_demand -= ref.req(pick).kv_tokens();
        d2.q_wait.push_back(pick);
        d2.kv_demand += ref.req(pick).kv_tokens();
        double nd = rel_spread(load_index(s2, fp), load_index(d2, fp));
        if (nd >= delta) break;
        src = s2;
        dst = d2;
        oracle_moves.push_back(pick);
    }
    REQUIRE(migs.size() == oracle_moves.size());
    for (std::size_t i = 0; i < migs.size(); ++i) CHECK(migs[i].request_id == oracle_moves[i]);

    double li0 = load_index(c.instances[0], fp);
    double li1 = load_index(c.instances[1], fp);
    CHECK(rel_spread(li0, li1) <= cfg.theta + 1e-12);
}

TEST_CASE("rebalance: zero destination headroom blocks migration") {
    auto tp2 = tp_mode("TP2", 2, 0.04, 4e-4, 1000);  // capacity 2000 tokens
    auto cfg = base_cfg({tp2}, 4);
    cfg.theta = 0.25;
    auto cm = full_cost_table({tp2});
    Cluster c = two_instance_cluster(tp2, 6, 1000);
    for (int i = 0; i < 6; ++i) {
        c.instances[0].q_wait.push_back(i);
        c.instances[0].kv_demand += c.requests[i].kv_tokens();
    }
    c.instances[0].service_rate = 1000.0;
    c.instances[1].service_rate = 1000.0;
    c.instances[1].kv_demand = kv_capacity(tp2);  // no headroom at the destination
    auto migs = rebalance(c, cfg, cm, 2000.0);
    CHECK(migs.empty());
}

TEST_CASE("orchestration_tick: first call plans regardless of timers") {
    auto tp2 = tp_mode("TP2", 2, 0.04, 4e-4, 500000);
    auto tp8 = tp_mode("TP8", 8, 0.016, 1e-4, 500000);
    auto cfg = base_cfg({tp2, tp8}, 16);
    cfg.kv_policy.hard = false;
    auto cm = full_cost_table({tp2, tp8});

    Cluster c = two_instance_cluster(tp2, 32, 2000);
    for (int i = 0; i < 32; ++i) {
        int inst = i % 2;
        c.instances[inst].q_wait.push_back(i);
        c.instances[inst].kv_demand += c.requests[i].kv_tokens();
        c.requests[i].home_instance = inst;
    }
    auto dist = flat_dist(32, 7);

    Orchestrator orch(cfg);
    auto a0 = orch.tick(0.0, c, dist, cm);
    CHECK(a0.planned);

    auto a1 = orch.tick(5.0, c, dist, cm);
    CHECK_FALSE(a1.planned);  // dt_pro = 30 not yet elapsed

    auto a2 = orch.tick(30.0, c, dist, cm);
    CHECK(a2.planned);
}

TEST_CASE("orchestration_tick: equal objective is not accepted (strict inequality)") {
    auto tp2 = tp_mode("TP2", 2, 0.04, 4e-4, 500000);
    auto cfg = base_cfg({tp2}, 4);
    cfg.kv_policy.hard = false;
    cfg.epsilon = 0.0;
    auto cm = full_cost_table({tp2});

    // two identical instances, balanced assignment: the only plan the solver
    // can produce matches the current deployment, so obj_new == obj_cur
    Cluster c = two_instance_cluster(tp2, 8, 1000);
    for (int i = 0; i < 8; ++i) {
        int inst = i % 2;
        c.instances[inst].q_wait.push_back(i);
        c.instances[inst].kv_demand += c.requests[i].kv_tokens();
        c.requests[i].home_instance = inst;
    }
    auto dist = flat_dist(8, 3);
    Orchestrator orch(cfg);
    auto a = orch.tick(0.0, c, dist, cm);
    CHECK(a.planned);
    CHECK(a.kind != ActionKind::Reconfigured);
}
