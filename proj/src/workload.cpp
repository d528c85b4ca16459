#include "rlsim/workload.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rlsim/util.hpp"

namespace rlsim {

double LengthDistribution::sum_counts() const {
    return std::accumulate(counts.begin(), counts.end(), 0.0);
}

bool LengthDistribution::valid(double tol) const {
    for (double c : counts) {
        if (c < -tol || !std::isfinite(c)) return false;
    }
    return std::fabs(sum_counts() - total) <= tol * std::max(1.0, total);
}

void WorkloadConfig::validate() const {
    if (n_requests < 0) throw ConfigError("workload: n_requests must be >= 0");
    if (bucket_width <= 0) throw ConfigError("workload: bucket_width must be > 0");
    if (!(drift > 0.0) || !std::isfinite(drift)) throw ConfigError("workload: drift must be positive and finite");
    for (const LengthModel* m : {&length_model, &prompt_len_model}) {
        if (m->components.empty()) throw ConfigError("workload: length model needs >= 1 component");
        double wsum = 0.0;
        for (const auto& c : m->components) {
            if (!std::isfinite(c.mu) || !std::isfinite(c.sigma) || c.sigma < 0.0) {
                throw ConfigError("workload: non-finite or negative distribution parameters");
            }
            if (c.weight < 0.0) throw ConfigError("workload: negative mixture weight");
            wsum += c.weight;
        }
        if (std::fabs(wsum - 1.0) > 1e-6) throw ConfigError("workload: mixture weights must sum to 1");
        if (m->min_len < 0 || m->max_len < m->min_len) throw ConfigError("workload: bad length bounds");
    }
}

namespace {

int sample_length(const LengthModel& model, Rng& rng, double mu_scale) {
    double pick = rng.uniform();
    const LognormalSpec* chosen = &model.components.back();
    double acc = 0.0;
    for (const auto& c : model.components) {
        acc += c.weight;
        if (pick < acc) {
            chosen = &c;
            break;
        }
    }
    double v = rng.lognormal(chosen->mu * mu_scale, chosen->sigma);
    long long len = static_cast<long long>(std::llround(v));
    len = std::clamp<long long>(len, model.min_len, model.max_len);
    return static_cast<int>(len);
}

}  // namespace

std::vector<Request> sample_trace(const WorkloadConfig& cfg, int step) {
    cfg.validate();
    if (step < 0) throw ConfigError("workload: step must be >= 0");
    double mu_scale = std::pow(cfg.drift, step);
    std::vector<Request> out;
    out.reserve(cfg.n_requests);
    std::uint64_t base = hash_combine(cfg.seed, static_cast<std::uint64_t>(step) + 0x9e37ull);
    for (int i = 0; i < cfg.n_requests; ++i) {
        Rng rng(hash_combine(base, static_cast<std::uint64_t>(i)));
        Request r;
        r.id = i;
        r.prompt_len = sample_length(cfg.prompt_len_model, rng, 1.0);
        int response = sample_length(cfg.length_model, rng, mu_scale);
        r.true_total_len = r.prompt_len + response;
        out.push_back(r);
    }
    return out;
}

LengthDistribution histogram_of(const std::vector<Request>& requests, int bucket_width) {
    LengthDistribution d;
    d.bucket_width = bucket_width;
    for (const auto& r : requests) {
        int b = d.bucket_of(r.response_len());
        if (b >= static_cast<int>(d.counts.size())) d.counts.resize(b + 1, 0.0);
        d.counts[b] += 1.0;
        d.total += 1.0;
    }
    return d;
}

LengthDistribution condition_on_completions(const LengthDistribution& dist,
                                            const std::vector<int>& completed) {
    LengthDistribution d = dist;
    for (int len : completed) {
        if (d.total <= 0.0) break;
        int b = d.bucket_of(len);
        if (b >= static_cast<int>(d.counts.size())) b = static_cast<int>(d.counts.size()) - 1;
        if (b < 0) b = 0;
        if (d.counts.empty()) break;
        if (d.counts[b] < 1.0 - 1e-9) {
            // nearest non-empty bucket; ties resolve to the lower index
            int best = -1;
            for (int off = 0; off < static_cast<int>(d.counts.size()); ++off) {
                int lo = b - off, hi = b + off;
                if (lo >= 0 && d.counts[lo] >= 1.0 - 1e-9) { best = lo; break; }
                if (hi < static_cast<int>(d.counts.size()) && d.counts[hi] >= 1.0 - 1e-9) { best = hi; break; }
            }
            if (best < 0) {
                // histogram has only fractional mass left; take the largest
                best = static_cast<int>(std::max_element(d.counts.begin(), d.counts.end()) - d.counts.begin());
                double dec = std::min(1.0, d.counts[best]);
                d.counts[best] -= dec;
                d.total = std::max(0.0, d.total - 1.0);
                continue;
            }
            b = best;
        }
        d.counts[b] -= 1.0;
        if (d.counts[b] < 0.0) d.counts[b] = 0.0;
        d.total = std::max(0.0, d.total - 1.0);
    }
    return d;
}

double estimate_remaining(const LengthDistribution& dist, int generated_len) {
    double mass = 0.0, ev = 0.0;
    for (int b = 0; b < static_cast<int>(dist.counts.size()); ++b) {
        int rep = dist.representative(b);
        if (rep <= generated_len) continue;
        mass += dist.counts[b];
        ev += dist.counts[b] * rep;
    }
    if (mass <= 1e-9) return dist.bucket_width;
    double expected_total = ev / mass;
    return std::max(expected_total - generated_len, 1.0);
}

std::vector<Bucket> bucketize(const std::vector<Request>& requests,
                              const LengthDistribution& dist,
                              const BucketizeOptions& opt) {
    int width = dist.bucket_width > 0 ? dist.bucket_width : 256;
    std::vector<Bucket> buckets;
    auto bucket_for = [&](int index) -> Bucket& {
        for (auto& b : buckets) {
            if (b.index == index) return b;
        }
        Bucket nb;
        nb.index = index;
        nb.rep_len = (index + 1) * width;
        buckets.push_back(nb);
        return buckets.back();
    };
    for (const auto& r : requests) {
        if (r.state == RequestState::Done || r.done()) continue;
        double remaining = opt.oracle_lengths
                               ? static_cast<double>(std::max(r.remaining_true(), 0))
                               : estimate_remaining(dist, r.generated_len);
        int idx = static_cast<int>(remaining) / width;
        if (remaining < 0) idx = 0;
        Bucket& b = bucket_for(idx);
        BucketMember m;
        m.request_id = r.id;
        m.home_instance = r.home_instance.value_or(-1);
        m.kv_tokens = r.kv_tokens();
        m.ctx_tokens = r.kv_tokens();
        b.members.push_back(m);
        b.kv_demand += m.kv_tokens + b.rep_len;
    }
    std::sort(buckets.begin(), buckets.end(),
              [](const Bucket& a, const Bucket& b) { return a.index < b.index; });
    return buckets;
}

Predictor Predictor::fit(const std::vector<LengthDistribution>& history, ArimaOrder order) {
    Predictor p;
    if (history.empty()) {
        p.fallback_ = true;
        return p;
    }
    p.bucket_width_ = history.back().bucket_width;
    std::size_t n_buckets = 0;
    for (const auto& d : history) n_buckets = std::max(n_buckets, d.counts.size());

    p.freq_history_.assign(n_buckets, {});
    p.mean_history_.clear();
    for (const auto& d : history) {
        double total = std::max(d.total, 1e-9);
        double mean = 0.0;
        for (std::size_t b = 0; b < n_buckets; ++b) {
            double c = b < d.counts.size() ? d.counts[b] : 0.0;
            p.freq_history_[b].push_back(c / total);
            mean += c * d.representative(static_cast<int>(b));
        }
        p.mean_history_.push_back(mean / total);
    }

    if (history.size() < 3) {
        p.fallback_ = true;  // last observation carried forward
        return p;
    }
    p.bucket_models_.reserve(n_buckets);
    for (std::size_t b = 0; b < n_buckets; ++b) {
        p.bucket_models_.push_back(ArimaModel::fit(p.freq_history_[b], order));
    }
    p.mean_model_ = ArimaModel::fit(p.mean_history_, order);
    return p;
}

double Predictor::forecast_mean() const {
    if (mean_history_.empty()) return 0.0;
    if (fallback_) return mean_history_.back();
    return std::max(mean_model_.forecast(mean_history_), 1.0);
}

LengthDistribution Predictor::forecast(double total) const {
    LengthDistribution d;
    d.bucket_width = bucket_width_;
    std::size_t n = freq_history_.size();
    d.counts.assign(n, 0.0);
    if (n == 0 || total <= 0.0) return d;

    std::vector<double> freqs(n, 0.0);
    double sum = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
        double f = fallback_ ? freq_history_[b].back() : bucket_models_[b].forecast(freq_history_[b]);
        f = std::max(f, 0.0);
        freqs[b] = f;
        sum += f;
    }
    if (sum <= 1e-12) {
        // degenerate forecast: fall back to the last observed shape
        sum = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
            freqs[b] = freq_history_[b].back();
            sum += freqs[b];
        }
        if (sum <= 1e-12) return d;
    }
    // normalize and apportion to integer-ish counts summing to total
    double acc = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
        freqs[b] /= sum;
        d.counts[b] = freqs[b] * total;
        acc += d.counts[b];
    }
    d.total = acc;  // == total up to fp rounding
    return d;
}

}  // namespace rlsim
