#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "segpf/math.hpp"
#include "segpf/rng.hpp"

namespace segpf {

// theta = (a, sigma_x2, sigma_y2) for the stationary AR(1)-plus-noise model
//   X_1 ~ N(0, sigma_x2),  X_t = a X_{t-1} + eps_t,  eps_t ~ N(0, (1-a^2) sigma_x2),
//   Y_t = X_t + eta_t,     eta_t ~ N(0, sigma_y2).
struct ModelParams {
    double a = 0.8;
    double sigma_x2 = 1.0;
    double sigma_y2 = 1.0;

    double innovation_var() const { return (1.0 - a * a) * sigma_x2; }

    void validate() const {
        if (!(a > 0.0) || !(a < 1.0))
            throw std::invalid_argument("ModelParams: a must lie in (0,1)");
        if (!(sigma_x2 > 0.0))
            throw std::invalid_argument("ModelParams: sigma_x2 must be positive");
        if (!(sigma_y2 > 0.0))
            throw std::invalid_argument("ModelParams: sigma_y2 must be positive");
    }
};

// Generic scalar HMM interface. Stage indices t are global and 1-based.
struct HmmSpec {
    std::function<double(double x_prev, double x, int t)> transition_log_density;
    std::function<double(double x, double y, int t)> emission_log_density;
    std::function<double(double x_prev, int t, Rng&)> transition_sampler;
    std::function<double(double x)> initial_log_density;
    std::function<double(Rng&)> initial_sampler;
};

inline HmmSpec linear_gaussian_hmm(const ModelParams& p) {
    p.validate();
    const double ivar = p.innovation_var();
    HmmSpec h;
    h.transition_log_density = [p, ivar](double xp, double x, int) {
        return log_normal_pdf(x, p.a * xp, ivar);
    };
    h.emission_log_density = [p](double x, double y, int) {
        return log_normal_pdf(y, x, p.sigma_y2);
    };
    h.transition_sampler = [p, ivar](double xp, int, Rng& rng) {
        return draw_normal(rng, p.a * xp, std::sqrt(ivar));
    };
    h.initial_log_density = [p](double x) { return log_normal_pdf(x, 0.0, p.sigma_x2); };
    h.initial_sampler = [p](Rng& rng) { return draw_normal(rng, 0.0, std::sqrt(p.sigma_x2)); };
    return h;
}

struct SimulatedPath {
    std::vector<double> latent;       // X_1..X_U
    std::vector<double> observations; // Y_1..Y_U
};

inline SimulatedPath simulate_hmm(const ModelParams& p, int u_len, Rng& rng) {
    p.validate();
    if (u_len < 1) throw std::invalid_argument("simulate_hmm: U must be >= 1");
    const double isd = std::sqrt(p.innovation_var());
    const double ysd = std::sqrt(p.sigma_y2);
    SimulatedPath out;
    out.latent.resize(static_cast<std::size_t>(u_len));
    out.observations.resize(static_cast<std::size_t>(u_len));
    double x = draw_normal(rng, 0.0, std::sqrt(p.sigma_x2));
    for (int t = 0; t < u_len; ++t) {
        if (t > 0) x = draw_normal(rng, p.a * x, isd);
        out.latent[t] = x;
        out.observations[t] = draw_normal(rng, x, ysd);
    }
    return out;
}

inline SimulatedPath simulate_hmm(const ModelParams& p, int u_len, std::uint64_t seed) {
    Rng rng = derive_stream(seed, {stream_tag::observations});
    return simulate_hmm(p, u_len, rng);
}

// Unnormalized bootstrap log-weight: -(y-x)^2 / (2 sigma_y2).
// The Gaussian constant is deliberately omitted, so likelihood estimates built
// from these weights carry a known factor (2 pi sigma_y2)^{U/2} that callers
// remove when comparing against a normalized likelihood.
inline double bootstrap_log_weight(double x, double y, const ModelParams& p) {
    const double d = y - x;
    return -d * d / (2.0 * p.sigma_y2);
}

// Proposal for one segment. `prefix` is the segment-local path so far,
// excluding the point being scored/sampled; it is empty at the segment's
// first stage, which run_segment always draws from the segment initializer
// (i.e. q at the boundary stage is r_m itself).
struct ProposalSpec {
    std::function<double(std::span<const double> prefix, double x, int t)> log_density;
    std::function<double(std::span<const double> prefix, int t, Rng&)> sample;
    std::function<double(std::span<const double> prefix, double x, double y, int t)> log_weight;
};

inline ProposalSpec bootstrap_proposal(const ModelParams& p) {
    p.validate();
    const double ivar = p.innovation_var();
    ProposalSpec q;
    q.log_density = [p, ivar](std::span<const double> prefix, double x, int) {
        if (prefix.empty())
            throw std::invalid_argument("bootstrap proposal: first stage is drawn from the initializer");
        return log_normal_pdf(x, p.a * prefix.back(), ivar);
    };
    q.sample = [p, ivar](std::span<const double> prefix, int, Rng& rng) {
        if (prefix.empty())
            throw std::invalid_argument("bootstrap proposal: first stage is drawn from the initializer");
        return draw_normal(rng, p.a * prefix.back(), std::sqrt(ivar));
    };
    // q = p cancels the transition, leaving the emission kernel at every stage
    // (including the first, where the initializer stands in for the proposal).
    q.log_weight = [p](std::span<const double>, double x, double y, int) {
        return bootstrap_log_weight(x, y, p);
    };
    return q;
}

enum class InitializerKind { model_prior, fixed_gaussian, window_estimated, predictor_mixture };

// r_m: the proper density replacing the unavailable cross-segment transition
// at the segment's first stage. Must dominate p(. | x_prev) for the join to
// be well defined.
struct SegmentInitializer {
    InitializerKind kind = InitializerKind::model_prior;
    double mu = 0.0;     // gaussian kinds only
    double sigma2 = 0.0; // gaussian kinds only
    std::function<double(double x)> log_density;
    std::function<double(Rng&)> sample;
};

inline SegmentInitializer gaussian_initializer(InitializerKind kind, double mu, double sigma2) {
    if (!(sigma2 > 0.0))
        throw std::invalid_argument("gaussian initializer: variance must be positive");
    SegmentInitializer r;
    r.kind = kind;
    r.mu = mu;
    r.sigma2 = sigma2;
    r.log_density = [mu, sigma2](double x) { return log_normal_pdf(x, mu, sigma2); };
    r.sample = [mu, sigma2](Rng& rng) { return draw_normal(rng, mu, std::sqrt(sigma2)); };
    return r;
}

inline SegmentInitializer model_prior_initializer(const ModelParams& p) {
    p.validate();
    return gaussian_initializer(InitializerKind::model_prior, 0.0, p.sigma_x2);
}

inline SegmentInitializer fixed_gaussian_initializer(double mu, double sigma2) {
    return gaussian_initializer(InitializerKind::fixed_gaussian, mu, sigma2);
}

// r_m(x) = K^{-1} sum_k p(x | last-state k of the previous segment): the
// mixture of one-step predictors, which makes every boundary-matrix column
// mean exactly one.
inline SegmentInitializer predictor_mixture_initializer(const ModelParams& p,
                                                        std::vector<double> prev_last_states) {
    p.validate();
    if (prev_last_states.empty())
        throw std::invalid_argument("predictor mixture: need at least one previous-segment state");
    const double ivar = p.innovation_var();
    const double isd = std::sqrt(ivar);
    const double a = p.a;
    auto states = std::make_shared<const std::vector<double>>(std::move(prev_last_states));
    SegmentInitializer r;
    r.kind = InitializerKind::predictor_mixture;
    r.log_density = [states, a, ivar](double x) {
        double m = neg_inf;
        for (double s : *states) {
            const double d = x - a * s;
            m = std::max(m, -d * d / (2.0 * ivar));
        }
        double acc = 0.0;
        for (double s : *states) {
            const double d = x - a * s;
            acc += std::exp(-d * d / (2.0 * ivar) - m);
        }
        return m + std::log(acc) - 0.5 * (log_two_pi + std::log(ivar)) -
               std::log(static_cast<double>(states->size()));
    };
    r.sample = [states, a, isd](Rng& rng) {
        std::uniform_int_distribution<std::size_t> pick(0, states->size() - 1);
        return draw_normal(rng, a * (*states)[pick(rng)], isd);
    };
    return r;
}

} // namespace segpf
