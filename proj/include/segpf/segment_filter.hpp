#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "segpf/errors.hpp"
#include "segpf/math.hpp"
#include "segpf/model.hpp"
#include "segpf/rng.hpp"

namespace segpf {

struct ResampleResult {
    std::vector<int> indices;  // K_out draws, 0-based
    std::vector<double> probs; // normalized W_j
    double log_wbar = 0.0;     // log of the mean weight
};

// Multinomial resampling per Eq.-style normalized weights: indices are i.i.d.
// with P{B=j} = w_j / sum_i w_i, computed with max-subtraction.
inline ResampleResult multinomial_resample(std::span<const double> log_weights, int k_out, Rng& rng) {
    const int k_in = static_cast<int>(log_weights.size());
    if (k_in < 1) throw std::invalid_argument("multinomial_resample: empty weight vector");
    if (k_out < 1) throw std::invalid_argument("multinomial_resample: K_out must be >= 1");

    double m = neg_inf;
    for (double lw : log_weights) {
        if (std::isnan(lw)) throw std::invalid_argument("multinomial_resample: NaN log-weight");
        m = std::max(m, lw);
    }
    if (m == neg_inf)
        throw degenerate_weights_error("multinomial_resample: all weights are zero");

    ResampleResult out;
    out.probs.resize(k_in);
    double total = 0.0;
    for (int j = 0; j < k_in; ++j) {
        out.probs[j] = std::exp(log_weights[j] - m);
        total += out.probs[j];
    }
    for (int j = 0; j < k_in; ++j) out.probs[j] /= total;
    out.log_wbar = m + std::log(total) - std::log(static_cast<double>(k_in));

    std::vector<double> cdf(k_in);
    double acc = 0.0;
    for (int j = 0; j < k_in; ++j) {
        acc += out.probs[j];
        cdf[j] = acc;
    }

    out.indices.resize(k_out);
    for (int k = 0; k < k_out; ++k) {
        const double u = draw_uniform01(rng) * acc;
        int idx = static_cast<int>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        if (idx >= k_in) idx = k_in - 1;
        while (idx > 0 && out.probs[idx] == 0.0) --idx; // never land on zero-mass atoms
        out.indices[k] = idx;
    }
    return out;
}

struct SegmentConfig {
    int segment_index = 1;  // m, 1-based
    int first_stage = 1;    // global stage (m-1)T+1
    int last_stage = 1;     // global stage mT
    int particle_count = 0; // K_m
    SegmentInitializer initializer;
    ProposalSpec proposal;
    Rng rng; // caller-derived stream; copied, so the config stays reusable

    int stage_count() const { return last_stage - first_stage + 1; }

    void validate() const {
        if (segment_index < 1) throw std::invalid_argument("SegmentConfig: segment_index must be >= 1");
        if (first_stage < 1 || last_stage < first_stage)
            throw std::invalid_argument("SegmentConfig: invalid stage range");
        if (particle_count < 1) throw std::invalid_argument("SegmentConfig: need at least one particle");
        if (!initializer.log_density || !initializer.sample)
            throw std::invalid_argument("SegmentConfig: initializer is incomplete");
        if (!proposal.log_weight) throw std::invalid_argument("SegmentConfig: proposal lacks a weight function");
        if (stage_count() > 1 && !proposal.sample)
            throw std::invalid_argument("SegmentConfig: proposal lacks a sampler");
    }
};

// One filter's product, after the final resampling step.
struct SegmentOutput {
    int segment_index = 1;
    int first_stage = 1;
    int stage_count = 0;    // T
    int particle_count = 0; // K

    std::vector<double> paths;           // K x T, row-major; full surviving paths
    std::vector<double> first_states;    // paths[k][0]
    std::vector<double> last_states;     // paths[k][T-1]
    std::vector<int> ancestors;          // A_{m,mT}^k, 0-based first-generation labels
    std::vector<double> log_wbar;        // per-stage log mean weight
    std::vector<double> log_history;     // log H_{m,mT}^k
    std::vector<double> log_weight_traj; // K x T, log w_t along each surviving ancestral line

    double state(int k, int local_t) const {
        return paths[static_cast<std::size_t>(k) * stage_count + local_t];
    }
    double traj(int k, int local_t) const {
        return log_weight_traj[static_cast<std::size_t>(k) * stage_count + local_t];
    }
    double log_wbar_sum() const {
        double s = 0.0;
        for (double v : log_wbar) s += v;
        return s;
    }
};

// Runs PF_m: per stage, importance sampling, multinomial resampling (every
// stage, including the last), then path/ancestor/history updates
//   log H_new[k] = log H[B(k)] + log wbar_t - log w_t(B(k)),
// which telescopes to log H = sum_t (log wbar_t - log w_t(ancestral line)).
// Observations are the global sequence Y_1..Y_U (0-based storage).
inline SegmentOutput run_segment(const SegmentConfig& cfg, std::span<const double> observations) {
    cfg.validate();
    if (static_cast<int>(observations.size()) < cfg.last_stage)
        throw std::invalid_argument("run_segment: observations do not cover the segment");

    const int k_count = cfg.particle_count;
    const int t_count = cfg.stage_count();
    const std::size_t kt = static_cast<std::size_t>(k_count) * t_count;
    Rng rng = cfg.rng;

    std::vector<double> paths(kt), new_paths(kt);
    std::vector<double> traj(kt), new_traj(kt);
    std::vector<double> log_h(k_count, 0.0), new_log_h(k_count);
    std::vector<int> anc(k_count), new_anc(k_count);
    std::vector<double> proposals(k_count), lw(k_count);
    std::vector<double> wbar(t_count);

    for (int lt = 0; lt < t_count; ++lt) {
        const int t = cfg.first_stage + lt;
        const double y = observations[t - 1];

        for (int k = 0; k < k_count; ++k) {
            std::span<const double> prefix(paths.data() + static_cast<std::size_t>(k) * t_count,
                                           static_cast<std::size_t>(lt));
            const double x = (lt == 0) ? cfg.initializer.sample(rng) : cfg.proposal.sample(prefix, t, rng);
            proposals[k] = x;
            lw[k] = cfg.proposal.log_weight(prefix, x, y, t);
        }

        ResampleResult rs = multinomial_resample(lw, k_count, rng);
        wbar[lt] = rs.log_wbar;

        for (int k = 0; k < k_count; ++k) {
            const int j = rs.indices[k];
            const double* src = paths.data() + static_cast<std::size_t>(j) * t_count;
            double* dst = new_paths.data() + static_cast<std::size_t>(k) * t_count;
            std::copy(src, src + lt, dst);
            dst[lt] = proposals[j];
            const double* tsrc = traj.data() + static_cast<std::size_t>(j) * t_count;
            double* tdst = new_traj.data() + static_cast<std::size_t>(k) * t_count;
            std::copy(tsrc, tsrc + lt, tdst);
            tdst[lt] = lw[j];
            new_log_h[k] = log_h[j] + rs.log_wbar - lw[j];
            new_anc[k] = (lt == 0) ? j : anc[j];
        }
        paths.swap(new_paths);
        traj.swap(new_traj);
        log_h.swap(new_log_h);
        anc.swap(new_anc);
    }

    SegmentOutput out;
    out.segment_index = cfg.segment_index;
    out.first_stage = cfg.first_stage;
    out.stage_count = t_count;
    out.particle_count = k_count;
    out.paths = std::move(paths);
    out.log_weight_traj = std::move(traj);
    out.log_history = std::move(log_h);
    out.ancestors = std::move(anc);
    out.log_wbar = std::move(wbar);
    out.first_states.resize(k_count);
    out.last_states.resize(k_count);
    for (int k = 0; k < k_count; ++k) {
        out.first_states[k] = out.state(k, 0);
        out.last_states[k] = out.state(k, t_count - 1);
    }
    return out;
}

// Fits (mu_m, sigma_m^2) for a window-estimated initializer: an auxiliary
// bootstrap filter over Y_{(m-1)T-r .. (m-1)T} started from the stationary
// prior, followed by one transition propagation; returns the sample moments
// of the propagated cloud.
inline SegmentInitializer estimate_initializer(const ModelParams& p,
                                               std::span<const double> window,
                                               int k_aux, Rng rng) {
    p.validate();
    if (window.empty()) throw std::invalid_argument("estimate_initializer: empty window");
    if (k_aux < 2) throw std::invalid_argument("estimate_initializer: K_aux must be >= 2");

    const double isd = std::sqrt(p.innovation_var());
    const double xsd = std::sqrt(p.sigma_x2);
    std::vector<double> x(k_aux), lw(k_aux), resampled(k_aux);
    for (int k = 0; k < k_aux; ++k) x[k] = draw_normal(rng, 0.0, xsd);
    for (std::size_t j = 0; j < window.size(); ++j) {
        if (j > 0)
            for (int k = 0; k < k_aux; ++k) x[k] = draw_normal(rng, p.a * x[k], isd);
        for (int k = 0; k < k_aux; ++k) lw[k] = bootstrap_log_weight(x[k], window[j], p);
        ResampleResult rs = multinomial_resample(lw, k_aux, rng);
        for (int k = 0; k < k_aux; ++k) resampled[k] = x[rs.indices[k]];
        x.swap(resampled);
    }
    for (int k = 0; k < k_aux; ++k) x[k] = draw_normal(rng, p.a * x[k], isd);

    const double mu = mean(x);
    double s2 = sample_variance(x);
    s2 = std::max(s2, 1e-8 * p.sigma_x2);
    SegmentInitializer r = gaussian_initializer(InitializerKind::window_estimated, mu, s2);
    return r;
}

} // namespace segpf
