#include "rlsim/arima.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rlsim {

namespace {

std::vector<double> difference(const std::vector<double>& y, int d) {
    std::vector<double> w = y;
    for (int k = 0; k < d; ++k) {
        std::vector<double> next;
        next.reserve(w.size() > 0 ? w.size() - 1 : 0);
        for (std::size_t i = 1; i < w.size(); ++i) next.push_back(w[i] - w[i - 1]);
        w = std::move(next);
    }
    return w;
}

// CSS residual recursion for ARMA(1,1): e_t = w_t - c - phi*w_{t-1} - theta*e_{t-1}.
// e_t is affine in c (e_t = a_t - b_t*c), so the optimal intercept for fixed
// (phi, theta) has a closed form.
struct CssResult {
    double c;
    double sse;
};

CssResult css_for(const std::vector<double>& w, double phi, double theta) {
    double a_prev = 0.0, b_prev = 0.0;
    double sab = 0.0, sbb = 0.0;
    std::vector<double> as(w.size(), 0.0), bs(w.size(), 0.0);
    for (std::size_t t = 1; t < w.size(); ++t) {
        double a = w[t] - phi * w[t - 1] - theta * a_prev;
        double b = 1.0 - theta * b_prev;
        as[t] = a;
        bs[t] = b;
        sab += a * b;
        sbb += b * b;
        a_prev = a;
        b_prev = b;
    }
    double c = sbb > 1e-12 ? sab / sbb : 0.0;
    double sse = 0.0;
    for (std::size_t t = 1; t < w.size(); ++t) {
        double e = as[t] - bs[t] * c;
        sse += e * e;
    }
    return {c, sse};
}

}  // namespace

ArimaModel ArimaModel::fit(const std::vector<double>& series, ArimaOrder order) {
    ArimaModel m;
    m.order_ = order;
    if (series.size() < 3) {
        m.fallback_ = true;
        return m;
    }
    std::vector<double> w = difference(series, order.d);
    if (w.size() < 2) {
        m.fallback_ = true;
        return m;
    }

    const double bound = 0.98;
    // ridge toward (0,0): short or noise-dominated series degrade gracefully
    // to a random walk with drift instead of chasing residual noise
    const double ridge = 0.5 * css_for(w, 0.0, 0.0).sse / std::max<std::size_t>(w.size(), 1);
    double best_phi = 0.0, best_theta = 0.0, best_c = 0.0;
    double best_sse = std::numeric_limits<double>::infinity();
    auto consider = [&](double phi, double theta) {
        if (order.p == 0) phi = 0.0;
        if (order.q == 0) theta = 0.0;
        CssResult r = css_for(w, phi, theta);
        double score = r.sse + ridge * (phi * phi + theta * theta);
        if (score < best_sse - 1e-15) {
            best_sse = score;
            best_phi = phi;
            best_theta = theta;
            best_c = r.c;
        }
    };

    // coarse grid then two refinement passes around the incumbent
    for (double phi = -bound; phi <= bound + 1e-9; phi += 0.14) {
        for (double theta = -bound; theta <= bound + 1e-9; theta += 0.14) {
            consider(phi, theta);
        }
    }
    double step = 0.07;
    for (int pass = 0; pass < 3; ++pass) {
        double p0 = best_phi, t0 = best_theta;
        for (double dp = -2; dp <= 2; ++dp) {
            for (double dt = -2; dt <= 2; ++dt) {
                double phi = std::clamp(p0 + dp * step, -bound, bound);
                double theta = std::clamp(t0 + dt * step, -bound, bound);
                consider(phi, theta);
            }
        }
        step /= 4.0;
    }

    m.phi_ = best_phi;
    m.theta_ = best_theta;
    m.intercept_ = best_c;
    return m;
}

double ArimaModel::forecast(const std::vector<double>& history) const {
    if (history.empty()) return 0.0;
    if (fallback_ || history.size() < 2) return history.back();

    std::vector<double> w = difference(history, order_.d);
    if (w.empty()) return history.back();

    // run the residual filter over the differenced history
    double e_prev = 0.0;
    for (std::size_t t = 1; t < w.size(); ++t) {
        double e = w[t] - intercept_ - phi_ * w[t - 1] - theta_ * e_prev;
        e_prev = e;
    }
    double w_next = intercept_ + phi_ * w.back() + theta_ * e_prev;
    return history.back() + w_next;
}

}  // namespace rlsim
