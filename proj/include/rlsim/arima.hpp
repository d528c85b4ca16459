#pragma once

#include <vector>

namespace rlsim {

struct ArimaOrder {
    int p = 1;
    int d = 1;
    int q = 1;
};

// ARIMA(p,d,q) with p,q <= 1, fitted by conditional sum of squares.
// Small fixed-order models are all the step-level length predictor needs;
// the optimizer consumes one fitted model per tracked series.
class ArimaModel {
public:
    // Fits on the full series. Series shorter than 3 observations fall back
    // to last-observation-carried-forward (fallback() reports this).
    static ArimaModel fit(const std::vector<double>& series, ArimaOrder order = {});

    // One-step-ahead forecast given the observed history (which may extend
    // past the fitting window). History must be non-empty.
    double forecast(const std::vector<double>& history) const;

    bool fallback() const { return fallback_; }
    double phi() const { return phi_; }
    double theta() const { return theta_; }
    double intercept() const { return intercept_; }

private:
    ArimaOrder order_;
    double phi_ = 0.0;
    double theta_ = 0.0;
    double intercept_ = 0.0;
    bool fallback_ = false;
};

}  // namespace rlsim
