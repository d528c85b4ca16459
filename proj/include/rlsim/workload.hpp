#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "rlsim/arima.hpp"

namespace rlsim {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class RequestState { Waiting, Running, Done };

// One prompt/response unit. true_total_len is the simulation oracle and is
// never read by the scheduler unless oracle lengths are explicitly enabled.
struct Request {
    int id = 0;
    int prompt_len = 0;
    int true_total_len = 0;   // prompt + full response
    int generated_len = 0;
    RequestState state = RequestState::Waiting;
    std::optional<int> home_instance;

    int response_len() const { return true_total_len - prompt_len; }
    int remaining_true() const { return response_len() - generated_len; }
    int kv_tokens() const { return prompt_len + generated_len; }
    bool done() const { return generated_len >= response_len(); }
};

// Histogram over response-length buckets for the pending requests of a step.
struct LengthDistribution {
    int bucket_width = 256;
    std::vector<double> counts;   // index b covers [b*width, (b+1)*width)
    double total = 0.0;

    double sum_counts() const;
    bool valid(double tol = 1e-6) const;
    int bucket_of(int length) const { return length < 0 ? 0 : length / bucket_width; }
    int representative(int bucket) const { return (bucket + 1) * bucket_width; }
};

struct LognormalSpec {
    double mu = 8.0;
    double sigma = 0.8;
    double weight = 1.0;
};

struct LengthModel {
    std::vector<LognormalSpec> components;  // weights must sum to 1
    int min_len = 1;
    int max_len = 1 << 20;
};

struct WorkloadConfig {
    int n_requests = 0;
    LengthModel length_model;
    LengthModel prompt_len_model;
    double drift = 1.0;          // per-step multiplicative trend on mu
    int bucket_width = 256;
    std::uint64_t seed = 1;

    void validate() const;       // throws ConfigError
};

// Deterministic in (cfg.seed, step); per-request substreams make the trace
// independent of sampling order.
std::vector<Request> sample_trace(const WorkloadConfig& cfg, int step);

// Histogram of full response lengths for a request set.
LengthDistribution histogram_of(const std::vector<Request>& requests, int bucket_width);

// Removes realized response lengths from the histogram. A completion landing
// in an empty bucket decrements the nearest non-empty one instead.
LengthDistribution condition_on_completions(const LengthDistribution& dist,
                                            const std::vector<int>& completed);

// Expected remaining tokens for a request that has generated `generated_len`
// response tokens, conditioning the step distribution on length >= generated.
// Empty conditional mass falls back to one bucket width.
double estimate_remaining(const LengthDistribution& dist, int generated_len);

struct BucketMember {
    int request_id = 0;
    int home_instance = -1;      // -1: not yet placed
    long long kv_tokens = 0;     // prompt + generated now
    long long ctx_tokens = 0;    // tokens a recompute would replay
};

// 256-token remaining-length class; the planner's unit of assignment.
struct Bucket {
    int index = 0;
    int rep_len = 0;             // bucket upper bound, conservative proxy
    long long kv_demand = 0;     // projected KV at completion: kv now + rep_len each
    std::vector<BucketMember> members;

    int count() const { return static_cast<int>(members.size()); }
    long long work_tokens() const { return static_cast<long long>(rep_len) * count(); }
};

struct BucketizeOptions {
    bool oracle_lengths = false;  // use true remaining instead of the estimate
};

// Partitions pending (non-Done) requests into remaining-length buckets.
std::vector<Bucket> bucketize(const std::vector<Request>& requests,
                              const LengthDistribution& dist,
                              const BucketizeOptions& opt = {});

// Step-level predictor over bucket statistics: one ARIMA per bucket frequency
// series plus one for the step mean response length.
class Predictor {
public:
    static Predictor fit(const std::vector<LengthDistribution>& history,
                         ArimaOrder order = {});

    bool fallback() const { return fallback_; }
    double forecast_mean() const;
    // Forecast histogram scaled to `total` pending requests; counts are
    // non-negative and sum to total exactly.
    LengthDistribution forecast(double total) const;

private:
    bool fallback_ = false;
    int bucket_width_ = 256;
    std::vector<ArimaModel> bucket_models_;
    std::vector<std::vector<double>> freq_history_;   // per bucket
    ArimaModel mean_model_;
    std::vector<double> mean_history_;
};

}  // namespace rlsim
