#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "segpf/errors.hpp"
#include "segpf/math.hpp"
#include "segpf/model.hpp"
#include "segpf/segment_filter.hpp"

namespace segpf {

// K_{m-1} x K_m array of log correction ratios
//   log B_m(i,j) = log p(first_m^j | last_{m-1}^i) - log r_m(first_m^j),
// stored as exp(log_entry - log_offset) for stable linear algebra.
struct BoundaryMatrix {
    int boundary_index = 2; // m, couples segments m-1 and m (1-based)
    int rows = 0, cols = 0;
    std::vector<double> scaled; // row-major
    double log_offset = 0.0;

    double scaled_at(int i, int j) const {
        return scaled[static_cast<std::size_t>(i) * cols + j];
    }
    double log_entry(int i, int j) const {
        const double s = scaled_at(i, j);
        return s > 0.0 ? std::log(s) + log_offset : neg_inf;
    }
};

inline BoundaryMatrix boundary_matrix(const SegmentOutput& prev, const SegmentOutput& next,
                                      const SegmentInitializer& init_next, const HmmSpec& hmm) {
    if (next.first_stage != prev.first_stage + prev.stage_count)
        throw std::invalid_argument("boundary_matrix: segments are not adjacent");
    const int rows = prev.particle_count, cols = next.particle_count;
    const int t = next.first_stage;

    std::vector<double> log_r(cols);
    for (int j = 0; j < cols; ++j) {
        log_r[j] = init_next.log_density(next.first_states[j]);
        if (log_r[j] == neg_inf)
            throw dominance_violation_error(
                "boundary_matrix: initializer has zero mass on a proposed first state");
    }

    BoundaryMatrix b;
    b.boundary_index = next.segment_index;
    b.rows = rows;
    b.cols = cols;
    b.scaled.resize(static_cast<std::size_t>(rows) * cols);
    std::vector<double> col_max(cols, neg_inf);
    double global_max = neg_inf;
    for (int i = 0; i < rows; ++i) {
        const double xp = prev.last_states[i];
        double* row = b.scaled.data() + static_cast<std::size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) {
            const double v = hmm.transition_log_density(xp, next.first_states[j], t) - log_r[j];
            row[j] = v;
            col_max[j] = std::max(col_max[j], v);
            global_max = std::max(global_max, v);
        }
    }
    for (int j = 0; j < cols; ++j)
        if (col_max[j] == neg_inf)
            throw dominance_violation_error("boundary_matrix: column is entirely zero");
    b.log_offset = global_max;
    for (double& v : b.scaled) v = std::exp(v - global_max);
    return b;
}

// log of sum_{i,j} B(i,j) over the linear entries.
inline double log_double_sum(const BoundaryMatrix& b) {
    long double acc = 0.0L;
    for (double v : b.scaled) acc += v;
    if (acc <= 0.0L) throw degenerate_join_error("boundary matrix sums to zero");
    return static_cast<double>(std::log(acc)) + b.log_offset;
}

// Same double sum for inputs too large to materialize: streams the K_prev x
// K_next entries with online max-rescaling, never storing the matrix.
inline double log_double_sum_streaming(const SegmentOutput& prev, const SegmentOutput& next,
                                       const SegmentInitializer& init_next, const HmmSpec& hmm) {
    const int t = next.first_stage;
    std::vector<double> log_r(next.particle_count);
    for (int j = 0; j < next.particle_count; ++j) {
        log_r[j] = init_next.log_density(next.first_states[j]);
        if (log_r[j] == neg_inf)
            throw dominance_violation_error(
                "log_double_sum_streaming: initializer has zero mass on a proposed first state");
    }
    double cur_max = neg_inf;
    long double acc = 0.0L;
    for (int i = 0; i < prev.particle_count; ++i) {
        const double xp = prev.last_states[i];
        for (int j = 0; j < next.particle_count; ++j) {
            const double v = hmm.transition_log_density(xp, next.first_states[j], t) - log_r[j];
            if (v == neg_inf) continue;
            if (v <= cur_max) {
                acc += std::exp(v - cur_max);
            } else {
                acc = (cur_max == neg_inf) ? 1.0L : acc * std::exp((long double)(cur_max - v)) + 1.0L;
                cur_max = v;
            }
        }
    }
    if (!(acc > 0.0L)) throw degenerate_join_error("streaming double sum is zero");
    return static_cast<double>(std::log(acc)) + cur_max;
}

// A vector held as values * exp(log_scale); values are kept near unit
// magnitude by max-|.| rescaling after every matrix product.
struct ScaledVector {
    std::vector<double> values;
    double log_scale = 0.0;
};

inline ScaledVector ones_vector(int n) {
    ScaledVector v;
    v.values.assign(static_cast<std::size_t>(n), 1.0);
    return v;
}

inline void rescale_max(ScaledVector& v) {
    double m = 0.0;
    for (double x : v.values) m = std::max(m, std::abs(x));
    if (m == 0.0) return; // exact zero vector: leave as is
    for (double& x : v.values) x /= m;
    v.log_scale += std::log(m);
}

// row' = row^T B
inline ScaledVector forward_apply(const ScaledVector& row, const BoundaryMatrix& b) {
    if (static_cast<int>(row.values.size()) != b.rows)
        throw std::invalid_argument("forward_apply: dimension mismatch");
    ScaledVector out;
    out.values.assign(static_cast<std::size_t>(b.cols), 0.0);
    for (int i = 0; i < b.rows; ++i) {
        const double ri = row.values[i];
        if (ri == 0.0) continue;
        const double* brow = b.scaled.data() + static_cast<std::size_t>(i) * b.cols;
        for (int j = 0; j < b.cols; ++j) out.values[j] += ri * brow[j];
    }
    out.log_scale = row.log_scale + b.log_offset;
    rescale_max(out);
    return out;
}

// col' = B col
inline ScaledVector backward_apply(const BoundaryMatrix& b, const ScaledVector& col) {
    if (static_cast<int>(col.values.size()) != b.cols)
        throw std::invalid_argument("backward_apply: dimension mismatch");
    ScaledVector out;
    out.values.assign(static_cast<std::size_t>(b.rows), 0.0);
    for (int i = 0; i < b.rows; ++i) {
        const double* brow = b.scaled.data() + static_cast<std::size_t>(i) * b.cols;
        double acc = 0.0;
        for (int j = 0; j < b.cols; ++j) acc += brow[j] * col.values[j];
        out.values[i] = acc;
    }
    out.log_scale = col.log_scale + b.log_offset;
    rescale_max(out);
    return out;
}

// Prefix/suffix chain products shared by the joined estimators:
//   prefix[s] = 1^T B_2 .. B_{s+1}   (prefix[0] = ones over segment 1)
//   suffix[s] = B_{s+2} .. B_M 1     (suffix[M-1] = ones over segment M)
// plus the total chain sum D = 1^T B_2..B_M 1 as (value, log_scale).
struct JoinContext {
    std::vector<ScaledVector> prefix, suffix;
    double d_value = 0.0;
    double d_log_scale = 0.0;

    double log_total() const { return std::log(d_value) + d_log_scale; }
};

inline void check_join_inputs(std::span<const SegmentOutput> segments,
                              std::span<const BoundaryMatrix> boundaries) {
    if (segments.empty()) throw std::invalid_argument("join: need at least one segment");
    if (boundaries.size() + 1 != segments.size())
        throw std::invalid_argument("join: need exactly M-1 boundary matrices");
    for (std::size_t s = 0; s + 1 < segments.size(); ++s) {
        if (boundaries[s].rows != segments[s].particle_count ||
            boundaries[s].cols != segments[s + 1].particle_count)
            throw std::invalid_argument("join: boundary dimensions do not match segments");
    }
}

inline JoinContext make_join_context(std::span<const SegmentOutput> segments,
                                     std::span<const BoundaryMatrix> boundaries) {
    check_join_inputs(segments, boundaries);
    const std::size_t m_count = segments.size();
    JoinContext ctx;
    ctx.prefix.resize(m_count);
    ctx.suffix.resize(m_count);
    ctx.prefix[0] = ones_vector(segments[0].particle_count);
    for (std::size_t s = 1; s < m_count; ++s)
        ctx.prefix[s] = forward_apply(ctx.prefix[s - 1], boundaries[s - 1]);
    ctx.suffix[m_count - 1] = ones_vector(segments[m_count - 1].particle_count);
    for (std::size_t s = m_count - 1; s-- > 0;)
        ctx.suffix[s] = backward_apply(boundaries[s], ctx.suffix[s + 1]);

    double acc = 0.0;
    for (double v : ctx.prefix[m_count - 1].values) acc += v;
    if (!(acc > 0.0)) throw degenerate_join_error("chain of boundary matrices sums to zero");
    ctx.d_value = acc;
    ctx.d_log_scale = ctx.prefix[m_count - 1].log_scale;
    return ctx;
}

enum class LikelihoodForm { chain, product };

// log lambda-hat in the weight convention of the segments' proposal. Chain:
//   sum_t log wbar_t + log(1^T B_2..B_M 1) - sum_m log K_m.
// Product: per-boundary double sums, sum_t log wbar_t
//   + sum_m [log sum_{ij} B_m(i,j) - log(K_{m-1} K_m)].
// The two coincide for M <= 2 and generally differ for M >= 3.
inline double likelihood_estimate(std::span<const SegmentOutput> segments,
                                  std::span<const BoundaryMatrix> boundaries,
                                  LikelihoodForm form) {
    check_join_inputs(segments, boundaries);
    double log_wbar = 0.0;
    for (const SegmentOutput& seg : segments) log_wbar += seg.log_wbar_sum();
    if (form == LikelihoodForm::chain) {
        JoinContext ctx = make_join_context(segments, boundaries);
        double log_k = 0.0;
        for (const SegmentOutput& seg : segments)
            log_k += std::log(static_cast<double>(seg.particle_count));
        return log_wbar + ctx.log_total() - log_k;
    }
    double out = log_wbar;
    for (std::size_t s = 0; s < boundaries.size(); ++s) {
        out += log_double_sum(boundaries[s]);
        out -= std::log(static_cast<double>(segments[s].particle_count)) +
               std::log(static_cast<double>(segments[s + 1].particle_count));
    }
    return out;
}

// psi(x_{1:U}) = sum over listed coordinates u of x_u; a single coordinate is
// the common case.
struct FunctionalSpec {
    std::vector<int> coordinates; // global 1-based stage indices

    static FunctionalSpec coordinate(int u) { return FunctionalSpec{{u}}; }
    static FunctionalSpec additive(std::vector<int> us) { return FunctionalSpec{std::move(us)}; }
};

// Maps a global coordinate to (segment index s, local offset) or throws.
inline std::pair<std::size_t, int> locate_coordinate(std::span<const SegmentOutput> segments, int u) {
    for (std::size_t s = 0; s < segments.size(); ++s) {
        const SegmentOutput& seg = segments[s];
        if (u >= seg.first_stage && u < seg.first_stage + seg.stage_count)
            return {s, u - seg.first_stage};
    }
    throw std::invalid_argument("psi coordinate outside the covered stage range");
}

namespace detail {

// sum_l a[l] * psi[l] * b[l] accumulated in double (order matters for the
// exact M=1 reduction to the plain particle average).
struct ScaledValue {
    double value = 0.0;
    double log_scale = 0.0;
};

inline ScaledValue psi_dot(const ScaledVector& a, std::span<const double> psi, const ScaledVector& b) {
    double acc = 0.0;
    for (std::size_t l = 0; l < psi.size(); ++l) acc += a.values[l] * psi[l] * b.values[l];
    return {acc, a.log_scale + b.log_scale};
}

inline std::vector<double> coordinate_values(const SegmentOutput& seg, int local_t) {
    std::vector<double> out(static_cast<std::size_t>(seg.particle_count));
    for (int k = 0; k < seg.particle_count; ++k) out[k] = seg.state(k, local_t);
    return out;
}

// Numerator chain sum N = sum over coordinates of (prefix . diag(psi_u) . suffix).
inline ScaledValue numerator_sum(std::span<const SegmentOutput> segments, const JoinContext& ctx,
                                 const FunctionalSpec& psi) {
    if (psi.coordinates.empty()) throw std::invalid_argument("psi has no coordinates");
    std::vector<ScaledValue> parts;
    parts.reserve(psi.coordinates.size());
    for (int u : psi.coordinates) {
        auto [s, local_t] = locate_coordinate(segments, u);
        const std::vector<double> vals = coordinate_values(segments[s], local_t);
        parts.push_back(psi_dot(ctx.prefix[s], vals, ctx.suffix[s]));
    }
    if (parts.size() == 1) return parts[0];
    double base = neg_inf;
    for (const ScaledValue& p : parts)
        if (p.value != 0.0) base = std::max(base, p.log_scale);
    if (base == neg_inf) return {0.0, ctx.d_log_scale};
    double acc = 0.0;
    for (const ScaledValue& p : parts)
        if (p.value != 0.0) acc += p.value * std::exp(p.log_scale - base);
    return {acc, base};
}

} // namespace detail

// The ratio estimator psi-tilde = N / D over the boundary-matrix chain.
inline double latent_estimate(std::span<const SegmentOutput> segments, const JoinContext& ctx,
                              const FunctionalSpec& psi) {
    detail::ScaledValue n = detail::numerator_sum(segments, ctx, psi);
    return (n.value / ctx.d_value) * std::exp(n.log_scale - ctx.d_log_scale);
}

inline double latent_estimate(std::span<const SegmentOutput> segments,
                              std::span<const BoundaryMatrix> boundaries,
                              const FunctionalSpec& psi) {
    JoinContext ctx = make_join_context(segments, boundaries);
    return latent_estimate(segments, ctx, psi);
}

struct VarianceEstimate {
    std::vector<double> sigma2_pm; // per-filter asymptotic variance estimates
    double stderr_value = 0.0;     // sqrt(sum_m sigma2_pm / K_m)
};

// In-sample variance estimates from the resampling genealogy. For segment m,
// particles are grouped by first-generation ancestor; per-particle terms
//   c_l = sum_u (chain with psi_u folded in at its owner)_l - psi_tilde * (prefix . suffix)_l
// are summed per ancestor class into Q_j, normalized by the plug-in
//   Q-hat_j = K_m * (class sum) / D
// where D is the total chain sum (the per-tuple normalizer lambda-hat implies,
// divided by the count of tuples sharing a segment-m particle), and
//   sigma2_Pm = K_m^{-1} sum_j Q-hat_j^2.
inline VarianceEstimate variance_estimate(std::span<const SegmentOutput> segments,
                                          const JoinContext& ctx, const FunctionalSpec& psi,
                                          std::span<const BoundaryMatrix> boundaries,
                                          double psi_tilde) {
    const std::size_t m_count = segments.size();
    const std::size_t u_count = psi.coordinates.size();
    if (u_count == 0) throw std::invalid_argument("psi has no coordinates");

    // fwd[u][s] for s >= owner(u): prefix with diag(psi_u) folded in;
    // bwd[u][s] for s <= owner(u): suffix with diag(psi_u) folded in.
    std::vector<std::size_t> owner(u_count);
    std::vector<std::vector<ScaledVector>> fwd(u_count), bwd(u_count);
    for (std::size_t ui = 0; ui < u_count; ++ui) {
        auto [s, local_t] = locate_coordinate(segments, psi.coordinates[ui]);
        owner[ui] = s;
        const std::vector<double> vals = detail::coordinate_values(segments[s], local_t);
        fwd[ui].resize(m_count);
        bwd[ui].resize(m_count);
        ScaledVector seed;
        seed.values.resize(vals.size());
        for (std::size_t l = 0; l < vals.size(); ++l)
            seed.values[l] = ctx.prefix[s].values[l] * vals[l];
        seed.log_scale = ctx.prefix[s].log_scale;
        rescale_max(seed);
        fwd[ui][s] = seed;
        for (std::size_t n = s + 1; n < m_count; ++n)
            fwd[ui][n] = forward_apply(fwd[ui][n - 1], boundaries[n - 1]);
        ScaledVector bseed;
        bseed.values.resize(vals.size());
        for (std::size_t l = 0; l < vals.size(); ++l)
            bseed.values[l] = vals[l] * ctx.suffix[s].values[l];
        bseed.log_scale = ctx.suffix[s].log_scale;
        rescale_max(bseed);
        bwd[ui][s] = bseed;
        for (std::size_t n = s; n-- > 0;)
            bwd[ui][n] = backward_apply(boundaries[n], bwd[ui][n + 1]);
    }

    const double log_d = ctx.log_total();
    VarianceEstimate out;
    out.sigma2_pm.resize(m_count, 0.0);
    for (std::size_t s = 0; s < m_count; ++s) {
        const SegmentOutput& seg = segments[s];
        const int k_count = seg.particle_count;

        // per-term (vector, coefficient, scale) triplets entering c
        struct Term {
            const double* a;
            const double* b;
            double coeff;
            double log_scale;
        };
        std::vector<Term> terms;
        terms.reserve(u_count + 1);
        for (std::size_t ui = 0; ui < u_count; ++ui) {
            if (owner[ui] <= s)
                terms.push_back({fwd[ui][s].values.data(), ctx.suffix[s].values.data(), 1.0,
                                 fwd[ui][s].log_scale + ctx.suffix[s].log_scale});
            else
                terms.push_back({ctx.prefix[s].values.data(), bwd[ui][s].values.data(), 1.0,
                                 ctx.prefix[s].log_scale + bwd[ui][s].log_scale});
        }
        terms.push_back({ctx.prefix[s].values.data(), ctx.suffix[s].values.data(), -psi_tilde,
                         ctx.prefix[s].log_scale + ctx.suffix[s].log_scale});

        double base = neg_inf;
        for (const Term& t : terms)
            if (t.coeff != 0.0) base = std::max(base, t.log_scale);
        if (base == neg_inf) base = 0.0;

        std::vector<double> qsum(static_cast<std::size_t>(k_count), 0.0);
        std::vector<double> c(static_cast<std::size_t>(k_count), 0.0);
        for (const Term& t : terms) {
            const double w = t.coeff * std::exp(t.log_scale - base);
            if (w == 0.0) continue;
            for (int l = 0; l < k_count; ++l) c[l] += w * t.a[l] * t.b[l];
        }
        for (int l = 0; l < k_count; ++l) qsum[seg.ancestors[l]] += c[l];

        const double factor = std::exp(std::log(static_cast<double>(k_count)) + base - log_d);
        double acc = 0.0;
        for (int j = 0; j < k_count; ++j) {
            const double q = qsum[j] * factor;
            acc += q * q;
        }
        out.sigma2_pm[s] = acc / static_cast<double>(k_count);
    }

    double v = 0.0;
    for (std::size_t s = 0; s < m_count; ++s)
        v += out.sigma2_pm[s] / static_cast<double>(segments[s].particle_count);
    out.stderr_value = std::sqrt(v);
    return out;
}

inline VarianceEstimate variance_estimate(std::span<const SegmentOutput> segments,
                                          std::span<const BoundaryMatrix> boundaries,
                                          const FunctionalSpec& psi, double psi_tilde) {
    JoinContext ctx = make_join_context(segments, boundaries);
    return variance_estimate(segments, ctx, psi, boundaries, psi_tilde);
}

// Neyman split of the particle budget: K_m proportional to sigma_Pm, largest-
// remainder rounding (ties to the lower index), every filter floored at 2.
inline std::vector<int> allocate_particles(std::span<const double> sigma2_pm, int budget) {
    const int m_count = static_cast<int>(sigma2_pm.size());
    if (m_count < 1) throw std::invalid_argument("allocate_particles: need at least one filter");
    if (budget < 2 * m_count)
        throw std::invalid_argument("allocate_particles: budget below 2 per filter");
    std::vector<double> sigma(m_count);
    double total = 0.0;
    for (int m = 0; m < m_count; ++m) {
        if (!(sigma2_pm[m] >= 0.0))
            throw std::invalid_argument("allocate_particles: variances must be nonnegative");
        sigma[m] = std::sqrt(sigma2_pm[m]);
        total += sigma[m];
    }
    std::vector<int> alloc(m_count);
    std::vector<std::pair<double, int>> frac(m_count); // (-remainder, index) for stable ordering
    int assigned = 0;
    for (int m = 0; m < m_count; ++m) {
        const double share = total > 0.0
                                 ? budget * sigma[m] / total
                                 : static_cast<double>(budget) / m_count;
        alloc[m] = static_cast<int>(std::floor(share));
        frac[m] = {-(share - alloc[m]), m};
        assigned += alloc[m];
    }
    std::sort(frac.begin(), frac.end());
    for (int i = 0; i < budget - assigned; ++i) ++alloc[frac[i % m_count].second];

    // lift sub-floor filters, taking the deficit from the largest allocations
    for (int m = 0; m < m_count; ++m) {
        while (alloc[m] < 2) {
            int donor = -1;
            for (int n = 0; n < m_count; ++n)
                if (alloc[n] > 2 && (donor < 0 || alloc[n] > alloc[donor])) donor = n;
            if (donor < 0) throw std::logic_error("allocate_particles: no donor despite feasible budget");
            ++alloc[m];
            --alloc[donor];
        }
    }
    return alloc;
}

struct EstimateReport {
    double psi_tilde = 0.0;
    double log_lambda_chain = 0.0;
    double log_lambda_product = 0.0;
    std::vector<double> sigma2_pm;
    double stderr_value = 0.0;
    std::vector<int> allocation;
};

inline EstimateReport estimate_report(std::span<const SegmentOutput> segments,
                                      std::span<const BoundaryMatrix> boundaries,
                                      const FunctionalSpec& psi) {
    JoinContext ctx = make_join_context(segments, boundaries);
    EstimateReport r;
    r.psi_tilde = latent_estimate(segments, ctx, psi);
    double log_wbar = 0.0, log_k = 0.0;
    int budget = 0;
    for (const SegmentOutput& seg : segments) {
        log_wbar += seg.log_wbar_sum();
        log_k += std::log(static_cast<double>(seg.particle_count));
        budget += seg.particle_count;
    }
    r.log_lambda_chain = log_wbar + ctx.log_total() - log_k;
    r.log_lambda_product = likelihood_estimate(segments, boundaries, LikelihoodForm::product);
    VarianceEstimate v = variance_estimate(segments, ctx, psi, boundaries, r.psi_tilde);
    r.sigma2_pm = std::move(v.sigma2_pm);
    r.stderr_value = v.stderr_value;
    r.allocation = allocate_particles(r.sigma2_pm, budget);
    return r;
}

} // namespace segpf
