#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "segpf/errors.hpp"
#include "segpf/math.hpp"
#include "segpf/model.hpp"
#include "segpf/segment_filter.hpp"

namespace segpf {

enum class PairSamplerKind { uniform, stratified };

// A positive distribution beta over index pairs (k, l) in {1..K1} x {1..K2}.
// Uniform: beta = 1/(K1 K2). Stratified: k uniform, l proportional to the
// cheap proxy p(first_2^l | mean of segment-1 last states), so promising
// columns are drawn more often.
struct PairSampler {
    PairSamplerKind kind = PairSamplerKind::uniform;
    int rows = 0, cols = 0; // K1, K2
    long draw_count = 0;    // V
    std::vector<double> col_probs, col_cdf; // stratified only

    double log_beta(int k, int l) const {
        if (k < 0 || k >= rows || l < 0 || l >= cols)
            throw std::invalid_argument("PairSampler: index out of range");
        if (kind == PairSamplerKind::uniform)
            return -std::log(static_cast<double>(rows)) - std::log(static_cast<double>(cols));
        return std::log(col_probs[l]) - std::log(static_cast<double>(rows));
    }

    std::pair<int, int> draw(Rng& rng) const {
        std::uniform_int_distribution<int> row_pick(0, rows - 1);
        const int k = row_pick(rng);
        if (kind == PairSamplerKind::uniform) {
            std::uniform_int_distribution<int> col_pick(0, cols - 1);
            return {k, col_pick(rng)};
        }
        const double u = draw_uniform01(rng) * col_cdf.back();
        int l = static_cast<int>(std::upper_bound(col_cdf.begin(), col_cdf.end(), u) - col_cdf.begin());
        if (l >= cols) l = cols - 1;
        while (l > 0 && col_probs[l] == 0.0) --l;
        return {k, l};
    }
};

inline long default_draw_count(int k, double s) {
    if (k < 1) throw std::invalid_argument("default_draw_count: K must be >= 1");
    if (!(s > 0.0)) throw std::invalid_argument("default_draw_count: s must be positive");
    return static_cast<long>(std::ceil(std::pow(static_cast<double>(k), s)));
}

inline PairSampler uniform_pair_sampler(int k1, int k2, long draws) {
    if (k1 < 1 || k2 < 1) throw std::invalid_argument("uniform_pair_sampler: empty index set");
    if (draws < 1) throw std::invalid_argument("uniform_pair_sampler: V must be >= 1");
    PairSampler s;
    s.kind = PairSamplerKind::uniform;
    s.rows = k1;
    s.cols = k2;
    s.draw_count = draws;
    return s;
}

inline PairSampler stratified_pair_sampler(const SegmentOutput& seg1, const SegmentOutput& seg2,
                                           const HmmSpec& hmm, long draws) {
    if (draws < 1) throw std::invalid_argument("stratified_pair_sampler: V must be >= 1");
    PairSampler s;
    s.kind = PairSamplerKind::stratified;
    s.rows = seg1.particle_count;
    s.cols = seg2.particle_count;
    s.draw_count = draws;

    const double center = mean(seg1.last_states);
    const int t = seg2.first_stage;
    std::vector<double> lp(s.cols);
    double m = neg_inf;
    for (int l = 0; l < s.cols; ++l) {
        lp[l] = hmm.transition_log_density(center, seg2.first_states[l], t);
        m = std::max(m, lp[l]);
    }
    if (m == neg_inf)
        throw std::invalid_argument("stratified_pair_sampler: proxy density vanished everywhere");
    s.col_probs.resize(s.cols);
    double total = 0.0;
    for (int l = 0; l < s.cols; ++l) {
        // floor keeps beta strictly positive even when the proxy underflows
        s.col_probs[l] = std::max(std::exp(lp[l] - m), 1e-300);
        total += s.col_probs[l];
    }
    s.col_cdf.resize(s.cols);
    double acc = 0.0;
    for (int l = 0; l < s.cols; ++l) {
        s.col_probs[l] /= total;
        acc += s.col_probs[l];
        s.col_cdf[l] = acc;
    }
    return s;
}

// The O(V) unbiased likelihood estimator for M=2:
//   log lambda*-hat = sum_t log wbar_t
//                     + log[ (K1 K2 V)^{-1} sum_v ratio(k_v, l_v) / beta(k_v, l_v) ]
// with ratio(k,l) = p(first_2^l | last_1^k) / r_2(first_2^l). Only the V drawn
// entries are evaluated; the K1 x K2 matrix is never materialized.
inline double subsampled_log_likelihood(const SegmentOutput& seg1, const SegmentOutput& seg2,
                                        const SegmentInitializer& init2, const HmmSpec& hmm,
                                        const PairSampler& sampler, Rng& rng) {
    if (sampler.rows != seg1.particle_count || sampler.cols != seg2.particle_count)
        throw std::invalid_argument("subsampled_log_likelihood: sampler does not match segments");
    if (sampler.draw_count < 1) throw std::invalid_argument("subsampled_log_likelihood: V must be >= 1");
    const int t = seg2.first_stage;
    if (t != seg1.first_stage + seg1.stage_count)
        throw std::invalid_argument("subsampled_log_likelihood: segments are not adjacent");

    std::vector<double> log_r(seg2.particle_count, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> terms(static_cast<std::size_t>(sampler.draw_count));
    for (long v = 0; v < sampler.draw_count; ++v) {
        auto [k, l] = sampler.draw(rng);
        const double lb = sampler.log_beta(k, l);
        if (lb == neg_inf)
            throw std::logic_error("subsampled_log_likelihood: drew a zero-probability pair");
        if (std::isnan(log_r[l])) log_r[l] = init2.log_density(seg2.first_states[l]);
        const double ratio =
            hmm.transition_log_density(seg1.last_states[k], seg2.first_states[l], t) - log_r[l];
        terms[v] = ratio - lb;
    }
    const double lse = log_sum_exp(terms);
    if (lse == neg_inf) throw degenerate_join_error("subsampled likelihood is zero");
    return seg1.log_wbar_sum() + seg2.log_wbar_sum() + lse -
           std::log(static_cast<double>(seg1.particle_count)) -
           std::log(static_cast<double>(seg2.particle_count)) -
           std::log(static_cast<double>(sampler.draw_count));
}

} // namespace segpf
