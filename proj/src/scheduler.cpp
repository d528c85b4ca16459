#include "rlsim/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "rlsim/util.hpp"

namespace rlsim {

int Cluster::pending_count() const {
    int n = 0;
    for (const auto& r : requests) {
        if (r.state != RequestState::Done && !r.done()) ++n;
    }
    return n;
}

bool Cluster::has_active_requests() const { return pending_count() > 0; }

double Cluster::mean_footprint(const LengthDistribution& dist, bool oracle_lengths) const {
    long long n = 0;
    double tot = 0.0;
    for (const auto& r : requests) {
        if (r.state == RequestState::Done || r.done()) continue;
        double remaining = oracle_lengths ? static_cast<double>(r.remaining_true())
                                          : estimate_remaining(dist, r.generated_len);
        tot += r.kv_tokens() + remaining;
        ++n;
    }
    if (n == 0) return 1.0;
    return std::max(tot / n, 1.0);
}

void SchedulerConfig::validate() const {
    if (!(theta > 0.0)) throw ConfigError("scheduler: theta must be > 0");
    if (!(dt_react > 0.0) || !(dt_pro > 0.0)) throw ConfigError("scheduler: periods must be > 0");
    if (dt_react > dt_pro) throw ConfigError("scheduler: dt_react must be <= dt_pro");
    if (epsilon < 0.0) throw ConfigError("scheduler: epsilon must be >= 0");
    if (g_total < 1) throw ConfigError("scheduler: g_total must be >= 1");
    if (max_slots < 1) throw ConfigError("scheduler: max_slots must be >= 1");
    kv_policy.validate();
    for (const auto& m : candidate_modes) m.validate();
}

WaveStats wave_stats(const std::vector<Bucket>& buckets) {
    WaveStats s;
    long long n = 0;
    double tot = 0.0;
    double mx = 0.0;
    for (const auto& b : buckets) {
        n += b.count();
        tot += static_cast<double>(b.work_tokens());
        mx = std::max(mx, static_cast<double>(b.rep_len));
    }
    s.pending = static_cast<int>(n);
    double mean = n > 0 ? tot / n : 0.0;
    s.skew = mean > 0.0 ? mx / mean : 1.0;
    return s;
}

std::vector<ParallelMode> prune_candidates(const WaveStats& phase, const SchedulerConfig& cfg) {
    if (cfg.candidate_modes.empty()) throw ConfigError("scheduler: empty candidate mode set");
    std::vector<ParallelMode> kept;
    if (phase.pending >= cfg.early_pending) {
        for (const auto& m : cfg.candidate_modes) {
            if (m.degree <= cfg.throughput_degree_max) kept.push_back(m);
        }
    } else if (phase.pending <= cfg.late_pending || phase.skew > cfg.skew_threshold) {
        for (const auto& m : cfg.candidate_modes) {
            if (m.degree >= cfg.latency_degree_min) kept.push_back(m);
        }
    } else {
        kept = cfg.candidate_modes;
    }
    if (kept.empty()) kept = cfg.candidate_modes;
    return kept;
}

std::string to_string(InfeasibleReason r) {
    switch (r) {
        case InfeasibleReason::None: return "none";
        case InfeasibleReason::NoBuckets: return "no-buckets";
        case InfeasibleReason::NoCandidates: return "no-candidates";
        case InfeasibleReason::GpuBudget: return "gpu-budget";
        case InfeasibleReason::KvBalance: return "kv-balance";
    }
    return "?";
}

std::string to_string(ActionKind k) {
    switch (k) {
        case ActionKind::None: return "none";
        case ActionKind::Balanced: return "balanced";
        case ActionKind::Reconfigured: return "reconfigured";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Plan solving

namespace {

constexpr double kTieEps = 1e-12;

struct SolveCtx {
    const SolveInputs& in;
    int n_buckets;
    int n_slots;
    int n_cands;
    bool relaxed;  // KV band replaced by raw capacity

    std::vector<double> rate;         // saturated rate per candidate
    std::vector<long long> capacity;  // kv capacity per candidate
    std::vector<double> kv_lo, kv_hi;
    std::vector<double> work;         // per bucket, representative tokens
    std::vector<long long> kv;        // per bucket, current kv demand
    std::vector<std::vector<double>> mig;        // [bucket][slot] cross-instance cost
    std::vector<std::vector<double>> res_extra;  // [bucket][slot] resident reshard cost
    std::vector<std::vector<long long>> mig_n;   // [bucket][slot] migrated request count
    std::vector<double> floor_cost;   // per bucket, min over slots of mig (bound helper)

    explicit SolveCtx(const SolveInputs& input, bool relax) : in(input), relaxed(relax) {
        n_buckets = static_cast<int>(in.buckets.size());
        n_slots = static_cast<int>(in.slots.size());
        n_cands = static_cast<int>(in.candidates.size());
        rate.resize(n_cands);
        capacity.resize(n_cands);
        kv_lo.resize(n_cands);
        kv_hi.resize(n_cands);
        const auto& pol = in.cfg.kv_policy;
        for (int j = 0; j < n_cands; ++j) {
            rate[j] = saturated_rate(in.candidates[j], in.buckets);
            capacity[j] = kv_capacity(in.candidates[j]);
            if (relaxed) {
                kv_lo[j] = 0.0;
                kv_hi[j] = static_cast<double>(capacity[j]);
            } else {
                kv_lo[j] = (1.0 - pol.delta) * pol.rho * static_cast<double>(capacity[j]);
                kv_hi[j] = (1.0 + pol.delta) * pol.rho * static_cast<double>(capacity[j]);
            }
        }
        work.resize(n_buckets);
        kv.resize(n_buckets);
        mig.assign(n_buckets, std::vector<double>(n_slots, 0.0));
        res_extra.assign(n_buckets, std::vector<double>(n_slots, 0.0));
        mig_n.assign(n_buckets, std::vector<long long>(n_slots, 0));
        floor_cost.assign(n_buckets, 0.0);
        for (int i = 0; i < n_buckets; ++i) {
            const Bucket& b = in.buckets[i];
            work[i] = static_cast<double>(b.work_tokens());
            kv[i] = b.kv_demand;
            double fl = std::numeric_limits<double>::infinity();
            for (int k = 0; k < n_slots; ++k) {
                double m = 0.0, re = 0.0;
                long long cnt = 0;
                for (const auto& mem : b.members) {
                    double c = migration_cost(mem.kv_tokens, mem.ctx_tokens, in.cm).seconds;
                    if (mem.home_instance == k) {
                        re += c;  // billed only if the slot's mode changes
                    } else if (mem.home_instance >= 0) {
                        m += c;
                        ++cnt;
                    }
                }
                mig[i][k] = m;
                res_extra[i][k] = re;
                mig_n[i][k] = cnt;
                fl = std::min(fl, m);
            }
            floor_cost[i] = n_slots > 0 ? fl : 0.0;
        }
    }

    bool mode_changed(int slot, int cand) const {
        const auto& prev = in.slots[slot].prev_mode;
        return !prev || *prev != in.candidates[cand].name;
    }

    double base_switch(int slot, int cand) const {
        if (!mode_changed(slot, cand)) return 0.0;
        const auto& prev = in.slots[slot].prev_mode;
        return reshard_time(prev, in.candidates[cand].name, in.cm);
    }

    int switches_for(const std::vector<int>& y) const {
        int n = 0;
        for (int k = 0; k < n_slots; ++k) {
            const auto& prev = in.slots[k].prev_mode;
            std::string now = y[k] >= 0 ? in.candidates[y[k]].name : std::string();
            std::string before = prev ? *prev : std::string();
            if (now != before) ++n;
        }
        return n;
    }
};

struct Candidate {
    double objective = std::numeric_limits<double>::infinity();
    Plan plan;
    bool valid = false;
};

bool better_than(const Plan& a, const Plan& b) {
    if (a.objective < b.objective - kTieEps) return true;
    if (a.objective > b.objective + kTieEps) return false;
    if (a.n_switches != b.n_switches) return a.n_switches < b.n_switches;
    if (a.n_migrations != b.n_migrations) return a.n_migrations < b.n_migrations;
    auto key = [](int v) { return v < 0 ? std::numeric_limits<int>::max() : v; };
    for (std::size_t k = 0; k < a.slot_mode.size(); ++k) {
        if (key(a.slot_mode[k]) != key(b.slot_mode[k])) {
            return key(a.slot_mode[k]) < key(b.slot_mode[k]);
        }
    }
    return false;
}

// Full objective for a complete assignment; infeasible -> nullopt.
std::optional<Plan> evaluate(const SolveCtx& ctx, const std::vector<int>& y,
                             const std::vector<int>& x, bool check_kv_lower = true) {
    const int ns = ctx.n_slots;
    std::vector<double> load(ns, 0.0);
    std::vector<double> dkv(ns, 0.0);
    double mig_total = 0.0, sw_total = 0.0;
    long long mig_count = 0;

    for (int k = 0; k < ns; ++k) {
        if (y[k] >= 0) sw_total += ctx.base_switch(k, y[k]);
    }
    for (int i = 0; i < ctx.n_buckets; ++i) {
        int k = x[i];
        if (k < 0 || k >= ns || y[k] < 0) return std::nullopt;
        load[k] += ctx.work[i];
        dkv[k] += static_cast<double>(ctx.kv[i]);
        mig_total += ctx.mig[i][k];
        mig_count += ctx.mig_n[i][k];
        if (ctx.mode_changed(k, y[k])) sw_total += ctx.res_extra[i][k];
    }
    double z = 0.0;
    for (int k = 0; k < ns; ++k) {
        if (y[k] < 0) continue;
        int j = y[k];
        if (dkv[k] > ctx.kv_hi[j] + 1e-9) return std::nullopt;
        if (check_kv_lower && dkv[k] < ctx.kv_lo[j] - 1e-9) return std::nullopt;
        if (load[k] > 0.0) z = std::max(z, load[k] / ctx.rate[j]);
    }
    Plan p;
    p.slot_mode = y;
    p.bucket_slot = x;
    p.makespan_z = z;
    p.migration_total = mig_total;
    p.switch_total = sw_total;
    p.objective = z + mig_total + sw_total;
    p.kv_relaxed = ctx.relaxed;
    p.n_switches = ctx.switches_for(y);
    p.n_migrations = mig_count;
    return p;
}

// Exhaustive assignment search with admissible branch-and-bound pruning for
// one candidate configuration y.
struct AssignSearch {
    const SolveCtx& ctx;
    const std::vector<int>& y;
    std::vector<int> active;  // slot ids with a mode
    std::vector<int> x;
    std::vector<double> load, dkv;
    double mig_so_far = 0.0, sw_extra_so_far = 0.0;
    double sw_base = 0.0;
    double suffix_floor = 0.0;  // sum of floor_cost for buckets >= depth
    Candidate* best;
    std::vector<double> suffix;

    AssignSearch(const SolveCtx& c, const std::vector<int>& yy, Candidate* b)
        : ctx(c), y(yy), best(b) {
        for (int k = 0; k < ctx.n_slots; ++k) {
            if (y[k] >= 0) {
                active.push_back(k);
                sw_base += ctx.base_switch(k, y[k]);
            }
        }
        x.assign(ctx.n_buckets, -1);
        load.assign(ctx.n_slots, 0.0);
        dkv.assign(ctx.n_slots, 0.0);
        suffix.assign(ctx.n_buckets + 1, 0.0);
        for (int i = ctx.n_buckets - 1; i >= 0; --i) {
            suffix[i] = suffix[i + 1] + ctx.floor_cost[i];
        }
    }

    double current_z() const {
        double z = 0.0;
        for (int k : active) {
            if (load[k] > 0.0) z = std::max(z, load[k] / ctx.rate[y[k]]);
        }
        return z;
    }

    void rec(int depth) {
        if (depth == ctx.n_buckets) {
            auto plan = evaluate(ctx, y, x);
            if (plan && (!best->valid || better_than(*plan, best->plan))) {
                best->valid = true;
                best->plan = *plan;
                best->objective = plan->objective;
            }
            return;
        }
        double bound_base = sw_base + sw_extra_so_far + mig_so_far + suffix[depth];
        for (int k : active) {
            int j = y[k];
            double nkv = dkv[k] + static_cast<double>(ctx.kv[depth]);
            if (nkv > ctx.kv_hi[j] + 1e-9) continue;
            double add_extra = ctx.mode_changed(k, j) ? ctx.res_extra[depth][k] : 0.0;
            double nload = load[k] + ctx.work[depth];
            double z_lb = std::max(current_z(), nload / ctx.rate[j]);
            double lb = bound_base + ctx.mig[depth][k] + add_extra - ctx.floor_cost[depth] + z_lb;
            if (best->valid && lb > best->objective + kTieEps) continue;

            x[depth] = k;
            load[k] = nload;
            dkv[k] = nkv;
            mig_so_far += ctx.mig[depth][k];
            sw_extra_so_far += add_extra;
            rec(depth + 1);
            sw_extra_so_far -= add_extra;
            mig_so_far -= ctx.mig[depth][k];
            dkv[k] -= static_cast<double>(ctx.kv[depth]);
            load[k] -= ctx.work[depth];
            x[depth] = -1;
        }
    }
};

struct SearchOutcome {
    Candidate best;
    bool saw_gpu_feasible_y = false;
};

void exact_enumerate_y(const SolveCtx& ctx, std::vector<int>& y, int slot, int gpus_used,
                       SearchOutcome* out) {
    if (slot == ctx.n_slots) {
        bool any_active = false;
        for (int v : y) {
            if (v >= 0) any_active = true;
        }
        if (!any_active) return;
        out->saw_gpu_feasible_y = true;
        // necessary KV-mass condition before the expensive assignment search
        double total_kv = 0.0;
        for (long long v : ctx.kv) total_kv += static_cast<double>(v);
        double lo_sum = 0.0;
        bool hi_possible = true;
        double hi_sum = 0.0;
        for (int k = 0; k < ctx.n_slots; ++k) {
            if (y[k] >= 0) {
                lo_sum += ctx.kv_lo[y[k]];
                hi_sum += ctx.kv_hi[y[k]];
            }
        }
        if (total_kv < lo_sum - 1e-9 || total_kv > hi_sum + 1e-9) hi_possible = false;
        if (!hi_possible) return;
        AssignSearch s(ctx, y, &out->best);
        s.rec(0);
        return;
    }
    // inactive first, then candidates in declared order: gives lexicographic
    // exploration and deterministic tie behavior
    y[slot] = -1;
    exact_enumerate_y(ctx, y, slot + 1, gpus_used, out);
    for (int j = 0; j < ctx.n_cands; ++j) {
        int g = ctx.in.candidates[j].gpus_required;
        if (gpus_used + g > ctx.in.cfg.g_total) continue;
        y[slot] = j;
        exact_enumerate_y(ctx, y, slot + 1, gpus_used + g, out);
    }
    y[slot] = -1;
}

// Greedy LPT assignment plus local-search improvement for one y.
std::optional<Plan> heuristic_assign(const SolveCtx& ctx, const std::vector<int>& y) {
    std::vector<int> active;
    for (int k = 0; k < ctx.n_slots; ++k) {
        if (y[k] >= 0) active.push_back(k);
    }
    if (active.empty()) return std::nullopt;

    std::vector<int> order(ctx.n_buckets);
    for (int i = 0; i < ctx.n_buckets; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (ctx.work[a] != ctx.work[b]) return ctx.work[a] > ctx.work[b];
        return a < b;
    });

    std::vector<int> x(ctx.n_buckets, -1);
    std::vector<double> load(ctx.n_slots, 0.0), dkv(ctx.n_slots, 0.0);
    for (int i : order) {
        int pick = -1;
        double pick_score = std::numeric_limits<double>::infinity();
        for (int k : active) {
            int j = y[k];
            if (dkv[k] + static_cast<double>(ctx.kv[i]) > ctx.kv_hi[j] + 1e-9) continue;
            double extra = ctx.mode_changed(k, j) ? ctx.res_extra[i][k] : 0.0;
            double score = (load[k] + ctx.work[i]) / ctx.rate[j] + ctx.mig[i][k] + extra;
            if (score < pick_score - 1e-15) {
                pick_score = score;
                pick = k;
            }
        }
        if (pick < 0) return std::nullopt;  // KV capacity exhausted
        x[i] = pick;
        load[pick] += ctx.work[i];
        dkv[pick] += static_cast<double>(ctx.kv[i]);
    }

    // repair KV lower bounds: pull small buckets into deficient slots
    if (!ctx.relaxed) {
        for (int pass = 0; pass < 4 * ctx.n_slots; ++pass) {
            int deficient = -1;
            for (int k : active) {
                if (dkv[k] < ctx.kv_lo[y[k]] - 1e-9) {
                    deficient = k;
                    break;
                }
            }
            if (deficient < 0) break;
            int best_i = -1;
            for (int i = 0; i < ctx.n_buckets; ++i) {
                int src = x[i];
                if (src == deficient) continue;
                if (dkv[src] - static_cast<double>(ctx.kv[i]) < ctx.kv_lo[y[src]] - 1e-9) continue;
                if (dkv[deficient] + static_cast<double>(ctx.kv[i]) > ctx.kv_hi[y[deficient]] + 1e-9) continue;
                if (best_i < 0 || ctx.kv[i] > ctx.kv[best_i]) best_i = i;
            }
            if (best_i < 0) break;
            dkv[x[best_i]] -= static_cast<double>(ctx.kv[best_i]);
            load[x[best_i]] -= ctx.work[best_i];
            x[best_i] = deficient;
            dkv[deficient] += static_cast<double>(ctx.kv[best_i]);
            load[deficient] += ctx.work[best_i];
        }
    }

    auto current = evaluate(ctx, y, x);
    if (!current) return std::nullopt;

    // incremental relocation passes: cost deltas are additive except for the
    // makespan term, which is recomputed as a max over per-slot loads
    auto cost_terms = [&](int i, int k) {
        double extra = ctx.mode_changed(k, y[k]) ? ctx.res_extra[i][k] : 0.0;
        return ctx.mig[i][k] + extra;
    };
    auto z_of = [&](const std::vector<double>& ld) {
        double z = 0.0;
        for (int k : active) {
            if (ld[k] > 0.0) z = std::max(z, ld[k] / ctx.rate[y[k]]);
        }
        return z;
    };
    double addcost = 0.0;
    for (int i = 0; i < ctx.n_buckets; ++i) addcost += cost_terms(i, x[i]);
    double best_obj = current->objective;
    bool improved = true;
    int guard = 0;
    while (improved && guard++ < 64) {
        improved = false;
        for (int i = 0; i < ctx.n_buckets; ++i) {
            int from = x[i];
            for (int k : active) {
                if (k == from) continue;
                if (dkv[k] + static_cast<double>(ctx.kv[i]) > ctx.kv_hi[y[k]] + 1e-9) continue;
                if (!ctx.relaxed &&
                    dkv[from] - static_cast<double>(ctx.kv[i]) < ctx.kv_lo[y[from]] - 1e-9) {
                    continue;
                }
                load[from] -= ctx.work[i];
                load[k] += ctx.work[i];
                double trial_obj = z_of(load) + addcost - cost_terms(i, from) + cost_terms(i, k);
                if (trial_obj < best_obj - 1e-12) {
                    dkv[from] -= static_cast<double>(ctx.kv[i]);
                    dkv[k] += static_cast<double>(ctx.kv[i]);
                    addcost += cost_terms(i, k) - cost_terms(i, from);
                    x[i] = k;
                    from = k;
                    best_obj = trial_obj;
                    improved = true;
                } else {
                    load[from] += ctx.work[i];
                    load[k] -= ctx.work[i];
                }
            }
        }
    }
    return evaluate(ctx, y, x);
}

SearchOutcome beam_search(const SolveCtx& ctx) {
    SearchOutcome out;
    struct State {
        std::vector<int> y;
        int gpus = 0;
        double sw = 0.0;
        double rate_sum = 0.0;
    };
    double total_work = 0.0;
    for (double w : ctx.work) total_work += w;
    double max_rate = 0.0;
    for (double r : ctx.rate) max_rate = std::max(max_rate, r);

    std::vector<State> beam{State{std::vector<int>(ctx.n_slots, -1), 0, 0.0, 0.0}};
    for (int slot = 0; slot < ctx.n_slots; ++slot) {
        std::vector<State> next;
        for (const auto& st : beam) {
            next.push_back(st);  // leave slot inactive
            for (int j = 0; j < ctx.n_cands; ++j) {
                int g = ctx.in.candidates[j].gpus_required;
                if (st.gpus + g > ctx.in.cfg.g_total) continue;
                State ns = st;
                ns.y[slot] = j;
                ns.gpus += g;
                ns.sw += ctx.base_switch(slot, j);
                ns.rate_sum += ctx.rate[j];
                next.push_back(std::move(ns));
            }
        }
        int slots_left = ctx.n_slots - slot - 1;
        auto score = [&](const State& s) {
            double opt_rate = s.rate_sum + slots_left * max_rate;
            double z = opt_rate > 0.0 ? total_work / opt_rate
                                      : std::numeric_limits<double>::infinity();
            return s.sw + z;
        };
        std::stable_sort(next.begin(), next.end(),
                         [&](const State& a, const State& b) { return score(a) < score(b); });
        if (static_cast<int>(next.size()) > ctx.in.cfg.beam_width) {
            next.resize(ctx.in.cfg.beam_width);
        }
        beam = std::move(next);
    }

    // also evaluate the stay-put configuration when it exists
    {
        State stay{std::vector<int>(ctx.n_slots, -1), 0, 0.0, 0.0};
        bool any = false, ok = true;
        for (int k = 0; k < ctx.n_slots && ok; ++k) {
            if (!ctx.in.slots[k].prev_mode) continue;
            int j = -1;
            for (int c = 0; c < ctx.n_cands; ++c) {
                if (ctx.in.candidates[c].name == *ctx.in.slots[k].prev_mode) j = c;
            }
            if (j < 0) continue;  // current mode not in the pruned candidate set
            int g = ctx.in.candidates[j].gpus_required;
            if (stay.gpus + g > ctx.in.cfg.g_total) {
                ok = false;
                break;
            }
            stay.y[k] = j;
            stay.gpus += g;
            any = true;
        }
        if (ok && any) beam.push_back(std::move(stay));
    }

    for (const auto& st : beam) {
        bool any = false;
        for (int v : st.y) {
            if (v >= 0) any = true;
        }
        if (!any) continue;
        out.saw_gpu_feasible_y = true;
        auto plan = heuristic_assign(ctx, st.y);
        if (plan && (!out.best.valid || better_than(*plan, out.best.plan))) {
            out.best.valid = true;
            out.best.plan = *plan;
            out.best.objective = plan->objective;
        }
    }
    return out;
}

double estimated_evaluations(const SolveCtx& ctx) {
    double y_count = 1.0;
    for (int k = 0; k < ctx.n_slots; ++k) y_count *= (1.0 + ctx.n_cands);
    int min_g = std::numeric_limits<int>::max();
    for (const auto& c : ctx.in.candidates) min_g = std::min(min_g, c.gpus_required);
    double max_active = std::min<double>(ctx.n_slots,
                                         min_g > 0 ? ctx.in.cfg.g_total / min_g : ctx.n_slots);
    max_active = std::max(max_active, 1.0);
    return y_count * std::pow(max_active, ctx.n_buckets);
}

SearchOutcome run_search(const SolveInputs& in, bool relaxed) {
    SolveCtx ctx(in, relaxed);
    if (estimated_evaluations(ctx) <= in.cfg.exact_budget) {
        SearchOutcome out;
        std::vector<int> y(ctx.n_slots, -1);
        exact_enumerate_y(ctx, y, 0, 0, &out);
        return out;
    }
    return beam_search(ctx);
}

}  // namespace

PlanResult solve_plan(const SolveInputs& in) {
    PlanResult res;
    if (in.candidates.empty()) {
        res.reason = InfeasibleReason::NoCandidates;
        return res;
    }
    if (in.buckets.empty()) {
        res.reason = InfeasibleReason::NoBuckets;
        return res;
    }
    int min_g = std::numeric_limits<int>::max();
    for (const auto& c : in.candidates) min_g = std::min(min_g, c.gpus_required);
    if (min_g > in.cfg.g_total) {
        res.reason = InfeasibleReason::GpuBudget;
        return res;
    }

    bool hard_first = in.cfg.kv_policy.hard;
    if (hard_first) {
        SearchOutcome out = run_search(in, /*relaxed=*/false);
        if (out.best.valid) {
            res.plan = out.best.plan;
            return res;
        }
        res.reason = out.saw_gpu_feasible_y ? InfeasibleReason::KvBalance
                                            : InfeasibleReason::GpuBudget;
        if (!in.cfg.kv_policy.soft_fallback) return res;
        log_msg(LogLevel::Info, "solve_plan: KV band infeasible, retrying relaxed");
    }
    SearchOutcome out = run_search(in, /*relaxed=*/true);
    if (out.best.valid) {
        res.plan = out.best.plan;
        res.reason = InfeasibleReason::None;
        return res;
    }
    res.reason = out.saw_gpu_feasible_y ? InfeasibleReason::KvBalance : InfeasibleReason::GpuBudget;
    return res;
}

std::vector<std::string> validate_plan(const Plan& plan, const SolveInputs& in) {
    std::vector<std::string> errs;
    int ns = static_cast<int>(in.slots.size());
    if (static_cast<int>(plan.slot_mode.size()) != ns) {
        errs.push_back("plan slot count mismatch");
        return errs;
    }
    // Eq. 2: GPU budget
    int gpus = 0;
    for (int k = 0; k < ns; ++k) {
        int j = plan.slot_mode[k];
        if (j < 0) continue;
        if (j >= static_cast<int>(in.candidates.size())) {
            errs.push_back("slot " + std::to_string(k) + " references unknown mode");
            continue;
        }
        gpus += in.candidates[j].gpus_required;
    }
    if (gpus > in.cfg.g_total) {
        errs.push_back("GPU budget exceeded: " + std::to_string(gpus) + " > " +
                       std::to_string(in.cfg.g_total));
    }
    // Eq. 4: unique assignment onto activated slots
    if (plan.bucket_slot.size() != in.buckets.size()) {
        errs.push_back("bucket assignment count mismatch");
        return errs;
    }
    std::vector<double> dkv(ns, 0.0);
    for (std::size_t i = 0; i < in.buckets.size(); ++i) {
        int k = plan.bucket_slot[i];
        if (k < 0 || k >= ns) {
            errs.push_back("bucket " + std::to_string(i) + " unassigned");
            continue;
        }
        if (plan.slot_mode[k] < 0) {
            errs.push_back("bucket " + std::to_string(i) + " assigned to inactive slot");
            continue;
        }
        dkv[k] += static_cast<double>(in.buckets[i].kv_demand);
    }
    // Eq. 3: KV balance band (capacity only when the plan was relaxed)
    const auto& pol = in.cfg.kv_policy;
    for (int k = 0; k < ns; ++k) {
        int j = plan.slot_mode[k];
        if (j < 0) continue;
        double cap = static_cast<double>(kv_capacity(in.candidates[j]));
        double lo = plan.kv_relaxed ? 0.0 : (1.0 - pol.delta) * pol.rho * cap;
        double hi = plan.kv_relaxed ? cap : (1.0 + pol.delta) * pol.rho * cap;
        if (dkv[k] > hi + 1e-6) {
            errs.push_back("slot " + std::to_string(k) + " KV above band: " +
                           fmt_double(dkv[k]) + " > " + fmt_double(hi));
        }
        if (dkv[k] < lo - 1e-6) {
            errs.push_back("slot " + std::to_string(k) + " KV below band: " +
                           fmt_double(dkv[k]) + " < " + fmt_double(lo));
        }
    }
    return errs;
}

double plan_fluid_makespan(const Plan& plan, const SolveInputs& in) {
    double worst = 0.0;
    for (int k = 0; k < static_cast<int>(in.slots.size()); ++k) {
        int j = plan.slot_mode[k];
        if (j < 0) continue;
        std::vector<Bucket> mine;
        for (std::size_t i = 0; i < in.buckets.size(); ++i) {
            if (plan.bucket_slot[i] == k) mine.push_back(in.buckets[i]);
        }
        worst = std::max(worst, instance_completion_estimate(mine, in.candidates[j]));
    }
    return worst;
}

double estimate_makespan(const Cluster& cluster, const LengthDistribution& dist,
                         bool oracle_lengths) {
    double worst = 0.0;
    BucketizeOptions opt{oracle_lengths};
    for (const auto& inst : cluster.instances) {
        std::vector<Request> mine;
        for (int id : inst.q_run) mine.push_back(cluster.req(id));
        for (int id : inst.q_wait) mine.push_back(cluster.req(id));
        auto buckets = bucketize(mine, dist, opt);
        worst = std::max(worst, instance_completion_estimate(buckets, inst.mode));
    }
    return worst;
}

double load_index(const Instance& w, double mean_footprint) {
    int q = w.queue_len();
    if (q == 0) return 0.0;
    int bcap = std::max(1, stable_concurrency(w.mode, w.free_kv(), mean_footprint));
    double rate = std::max(w.service_rate, 1e-9);
    return (static_cast<double>(q) / bcap) / rate;
}

namespace {

// Feasibility gate: destination headroom must host the KV and the move must
// not shrink the destination's effective batch.
bool migration_feasible(const Instance& dst, const Request& r, double mean_footprint) {
    long long kv = r.kv_tokens();
    long long freed = dst.free_kv();
    if (freed < kv) return false;
    int b_before = stable_concurrency(dst.mode, freed, mean_footprint);
    int b_after = stable_concurrency(dst.mode, freed - kv, mean_footprint);
    int q = dst.queue_len();
    return std::min(q + 1, b_after) >= std::min(q, b_before);
}

}  // namespace

static double load_spread(const std::vector<double>& li) {
    if (li.size() < 2) return 0.0;
    double mx = *std::max_element(li.begin(), li.end());
    double mn = *std::min_element(li.begin(), li.end());
    if (mx <= 0.0) return 0.0;
    return (mx - mn) / mx;  // theta is a relative threshold
}

std::vector<Migration> rebalance(Cluster& cluster, const SchedulerConfig& cfg,
                                 const CostModel& cm, double mean_footprint) {
    std::vector<Migration> out;
    int n = static_cast<int>(cluster.instances.size());
    if (n < 2) return out;

    auto indices = [&](std::vector<double>& li) {
        li.resize(n);
        for (int i = 0; i < n; ++i) li[i] = load_index(cluster.instances[i], mean_footprint);
    };

    int guard = static_cast<int>(cluster.requests.size()) * 4 + 16;
    while (guard-- > 0) {
        std::vector<double> li;
        indices(li);
        int hi = 0, lo = 0;
        for (int i = 1; i < n; ++i) {
            if (li[i] > li[hi]) hi = i;
            if (li[i] < li[lo]) lo = i;
        }
        double delta = load_spread(li);
        if (delta <= cfg.theta || hi == lo) break;

        Instance& src = cluster.instances[hi];
        Instance& dst = cluster.instances[lo];
        // short-context-first over the waiting queue
        std::vector<int> waiting = src.q_wait;
        std::sort(waiting.begin(), waiting.end(), [&](int a, int b) {
            const Request& ra = cluster.req(a);
            const Request& rb = cluster.req(b);
            if (ra.kv_tokens() != rb.kv_tokens()) return ra.kv_tokens() < rb.kv_tokens();
            return a < b;
        });
        int chosen = -1;
        for (int id : waiting) {
            const Request& r = cluster.req(id);
            if (!migration_feasible(dst, r, mean_footprint)) continue;
            // simulate: the move must strictly reduce the spread
            long long kv = r.kv_tokens();
            Instance s2 = src, d2 = dst;
            s2.q_wait.erase(std::find(s2.q_wait.begin(), s2.q_wait.end(), id));
            s2.kv_demand -= kv;
            d2.q_wait.push_back(id);
            d2.kv_demand += kv;
            std::vector<double> li2(n);
            for (int i = 0; i < n; ++i) {
                const Instance& w = (i == hi) ? s2 : (i == lo) ? d2 : cluster.instances[i];
                li2[i] = load_index(w, mean_footprint);
            }
            if (load_spread(li2) < delta - 1e-12) {
                chosen = id;
                break;
            }
        }
        if (chosen < 0) break;

        Request& r = cluster.req(chosen);
        long long kv = r.kv_tokens();
        src.q_wait.erase(std::find(src.q_wait.begin(), src.q_wait.end(), chosen));
        src.kv_demand -= kv;
        dst.q_wait.push_back(chosen);
        dst.kv_demand += kv;
        auto mc = migration_between(r, src.id, dst.id, cm);
        r.home_instance = dst.id;
        out.push_back(Migration{chosen, src.id, dst.id, mc.seconds, mc.method});
    }
    return out;
}

Orchestrator::Orchestrator(SchedulerConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
}

TickAction Orchestrator::tick(double now, Cluster& cluster, const LengthDistribution& dist,
                              const CostModel& cm) {
    TickAction a;
    double mean_fp = cluster.mean_footprint(dist, cfg_.oracle_lengths);

    a.load_indices.reserve(cluster.instances.size());
    for (const auto& w : cluster.instances) a.load_indices.push_back(load_index(w, mean_fp));
    a.delta_load = load_spread(a.load_indices);

    if (cfg_.reactive) {
        a.migrations = rebalance(cluster, cfg_, cm, mean_fp);
        if (!a.migrations.empty()) a.kind = ActionKind::Balanced;
    }

    bool due = first_tick_ || (now - t_last_proactive_ >= cfg_.dt_pro - 1e-9);
    if (cfg_.proactive && due) {
        first_tick_ = false;
        t_last_proactive_ = now;
        a.planned = true;

        BucketizeOptions opt{cfg_.oracle_lengths};
        auto buckets = bucketize(cluster.requests, dist, opt);
        if (!buckets.empty()) {
            WaveStats stats = wave_stats(buckets);
            auto cands = prune_candidates(stats, cfg_);

            SolveInputs in;
            in.buckets = std::move(buckets);
            int min_g = std::numeric_limits<int>::max();
            for (const auto& c : cfg_.candidate_modes) min_g = std::min(min_g, c.gpus_required);
            int slots = std::max<int>(static_cast<int>(cluster.instances.size()),
                                      min_g > 0 ? cfg_.g_total / min_g : 1);
            slots = std::min(slots, cfg_.max_slots);
            in.slots.resize(slots);
            for (std::size_t k = 0; k < cluster.instances.size() && k < in.slots.size(); ++k) {
                in.slots[k].prev_mode = cluster.instances[k].mode.name;
            }
            in.candidates = std::move(cands);
            in.cm = cm;
            in.cfg = cfg_;

            PlanResult res = solve_plan(in);
            a.obj_cur = estimate_makespan(cluster, dist, cfg_.oracle_lengths);
            if (res.ok()) {
                a.obj_new = plan_fluid_makespan(*res.plan, in);
                a.c_overhead = res.plan->migration_total + res.plan->switch_total;
                if (a.obj_new + a.c_overhead < a.obj_cur - cfg_.epsilon) {
                    a.plan = std::move(res.plan);
                    a.plan_buckets = in.buckets;
                    a.plan_candidates = in.candidates;
                    a.kind = ActionKind::Reconfigured;
                }
            } else {
                a.infeasible = res.reason;
            }
        }
    }
    return a;
}

}  // namespace rlsim
