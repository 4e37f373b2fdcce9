#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "segpf/math.hpp"
#include "segpf/model.hpp"

namespace segpf {

// Exact scalar Kalman recursion for the linear-Gaussian model, stationary
// initialization. Index t-1 of each vector holds the stage-t quantity.
struct KalmanState {
    std::vector<double> pred_mean, pred_var; // E(X_t|Y_{1:t-1}), Var(X_t|Y_{1:t-1})
    std::vector<double> filt_mean, filt_var; // E(X_t|Y_{1:t}),   Var(X_t|Y_{1:t})
    double log_likelihood = 0.0;             // log p(Y_{1:U})
};

inline KalmanState kalman_filter(const ModelParams& p, std::span<const double> obs) {
    p.validate();
    if (obs.empty()) throw std::invalid_argument("kalman_filter: need at least one observation");
    const std::size_t u_len = obs.size();
    const double ivar = p.innovation_var();
    KalmanState ks;
    ks.pred_mean.resize(u_len);
    ks.pred_var.resize(u_len);
    ks.filt_mean.resize(u_len);
    ks.filt_var.resize(u_len);
    double m = 0.0, v = p.sigma_x2; // stationary prior on X_1
    for (std::size_t t = 0; t < u_len; ++t) {
        if (t > 0) {
            m = p.a * m;
            v = p.a * p.a * v + ivar;
        }
        ks.pred_mean[t] = m;
        ks.pred_var[t] = v;
        const double s = v + p.sigma_y2; // innovation variance
        ks.log_likelihood += log_normal_pdf(obs[t], m, s);
        const double gain = v / s;
        m = m + gain * (obs[t] - m);
        v = (1.0 - gain) * v;
        ks.filt_mean[t] = m;
        ks.filt_var[t] = v;
    }
    return ks;
}

struct SmootherState {
    std::vector<double> mean, var; // E(X_u|Y_{1:U}), Var(X_u|Y_{1:U})
};

// Rauch-Tung-Striebel backward pass over a completed filter run.
inline SmootherState rts_smoother(const ModelParams& p, const KalmanState& ks) {
    const std::size_t u_len = ks.filt_mean.size();
    if (u_len == 0) throw std::invalid_argument("rts_smoother: empty filter state");
    SmootherState ss;
    ss.mean = ks.filt_mean;
    ss.var = ks.filt_var;
    for (std::size_t t = u_len - 1; t-- > 0;) {
        const double c = p.a * ks.filt_var[t] / ks.pred_var[t + 1]; // smoother gain
        ss.mean[t] = ks.filt_mean[t] + c * (ss.mean[t + 1] - ks.pred_mean[t + 1]);
        ss.var[t] = ks.filt_var[t] + c * c * (ss.var[t + 1] - ks.pred_var[t + 1]);
    }
    return ss;
}

} // namespace segpf
