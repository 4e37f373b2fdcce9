#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "segpf/errors.hpp"
#include "segpf/join.hpp"
#include "segpf/kalman.hpp"
#include "segpf/math.hpp"
#include "segpf/model.hpp"
#include "segpf/rng.hpp"
#include "segpf/segment_filter.hpp"
#include "segpf/subsample.hpp"

namespace segpf {

enum class InitializerMode { standard, fixed_gaussian, window_estimated };
enum class EstimatorForm { chain, product, both };

struct ExperimentConfig {
    ModelParams params{0.8, 1.0, 1.0};
    int u_len = 50;
    int segment_count = 5;
    int particle_count = 500;
    std::vector<int> particle_counts; // optional per-segment K_m
    int replicates = 100;
    InitializerMode initializer_mode = InitializerMode::fixed_gaussian;
    double init_mu = 0.0;
    double init_sigma2 = 0.0; // <= 0 means "use sigma_x2"
    int window_r = 4;
    int aux_particles = 0; // 0 means "use particle_count"
    std::vector<int> psi_coordinates; // default: {u_len}
    std::uint64_t seed = 1;
    std::string out_path = "segpf_out.csv";
    EstimatorForm estimator = EstimatorForm::both;
    bool frozen_y = false;
    bool subsample = false;
    PairSamplerKind subsample_kind = PairSamplerKind::uniform;
    double subsample_s = 1.0;
    long subsample_draws = 0; // 0 means ceil(K^s)
    int inner_replicates = 400;
    std::vector<int> u_values;      // table1 row grid
    std::vector<int> u_len_values;  // stability sweep U grid
    std::vector<double> s_values;   // subsample sweep exponents
    int workers = 1;

    int stage_count() const { return u_len / segment_count; }

    std::vector<int> resolved_particle_counts() const {
        if (particle_counts.empty())
            return std::vector<int>(static_cast<std::size_t>(segment_count), particle_count);
        return particle_counts;
    }

    std::vector<int> resolved_psi() const {
        if (psi_coordinates.empty()) return {u_len};
        return psi_coordinates;
    }

    void validate() const {
        params.validate();
        if (u_len < 1) throw config_error("u_len must be >= 1");
        if (segment_count < 1) throw config_error("segment_count must be >= 1");
        if (u_len % segment_count != 0)
            throw config_error("u_len must be an integer multiple of segment_count");
        if (replicates < 1) throw config_error("replicates must be >= 1");
        if (workers < 1) throw config_error("workers must be >= 1");
        const std::vector<int> ks = resolved_particle_counts();
        if (static_cast<int>(ks.size()) != segment_count)
            throw config_error("particle_counts must list one entry per segment");
        for (int k : ks)
            if (k < 2) throw config_error("particle counts must be >= 2");
        for (int u : resolved_psi())
            if (u < 1 || u > u_len) throw config_error("psi coordinate outside 1..u_len");
        if (initializer_mode == InitializerMode::standard && segment_count != 1)
            throw config_error("initializer=standard requires segment_count=1");
        if (initializer_mode == InitializerMode::window_estimated && window_r < 0)
            throw config_error("window_r must be >= 0");
        if (aux_particles != 0 && aux_particles < 2)
            throw config_error("aux_particles must be >= 2 when set");
        if (subsample && segment_count != 2)
            throw config_error("subsample mode requires segment_count=2");
        if (!(subsample_s > 0.0)) throw config_error("subsample_s must be positive");
        if (subsample_draws < 0) throw config_error("subsample_draws must be >= 0");
        if (inner_replicates < 2) throw config_error("inner_replicates must be >= 2");
        for (int u : u_values)
            if (u < 1 || u > u_len) throw config_error("u_values entries must lie in 1..u_len");
        for (double s : s_values)
            if (!(s > 0.0)) throw config_error("s_values entries must be positive");
    }
};

// --- config file parsing: flat "key = value" lines, '#' comments ----------

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw config_error("config key '" + key + "': cannot parse number '" + v + "'");
    }
}

inline long long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        long long out = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw config_error("config key '" + key + "': cannot parse integer '" + v + "'");
    }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        unsigned long long out = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw config_error("config key '" + key + "': cannot parse unsigned integer '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw config_error("config key '" + key + "': cannot parse boolean '" + v + "'");
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& key, const std::string& v, Parse parse) {
    std::vector<T> out;
    std::size_t start = 0;
    while (start <= v.size()) {
        std::size_t comma = v.find(',', start);
        const std::string item = trim(v.substr(start, comma == std::string::npos ? std::string::npos
                                                                                 : comma - start));
        if (!item.empty()) out.push_back(parse(key, item));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (out.empty()) throw config_error("config key '" + key + "': empty list");
    return out;
}

} // namespace detail

inline void apply_config_entry(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    using namespace detail;
    if (key == "a") cfg.params.a = parse_double(key, value);
    else if (key == "sigma_x2") cfg.params.sigma_x2 = parse_double(key, value);
    else if (key == "sigma_y2") cfg.params.sigma_y2 = parse_double(key, value);
    else if (key == "u_len") cfg.u_len = static_cast<int>(parse_int(key, value));
    else if (key == "segment_count") cfg.segment_count = static_cast<int>(parse_int(key, value));
    else if (key == "particle_count") cfg.particle_count = static_cast<int>(parse_int(key, value));
    else if (key == "particle_counts")
        cfg.particle_counts = parse_list<int>(key, value, [](const std::string& k, const std::string& s) {
            return static_cast<int>(parse_int(k, s));
        });
    else if (key == "replicates") cfg.replicates = static_cast<int>(parse_int(key, value));
    else if (key == "initializer") {
        if (value == "standard") cfg.initializer_mode = InitializerMode::standard;
        else if (value == "fixed-gaussian" || value == "fixed_gaussian")
            cfg.initializer_mode = InitializerMode::fixed_gaussian;
        else if (value == "window-estimated" || value == "window_estimated")
            cfg.initializer_mode = InitializerMode::window_estimated;
        else throw config_error("config key 'initializer': unknown mode '" + value + "'");
    } else if (key == "init_mu") cfg.init_mu = parse_double(key, value);
    else if (key == "init_sigma2") cfg.init_sigma2 = parse_double(key, value);
    else if (key == "window_r") cfg.window_r = static_cast<int>(parse_int(key, value));
    else if (key == "aux_particles") cfg.aux_particles = static_cast<int>(parse_int(key, value));
    else if (key == "psi_coordinates")
        cfg.psi_coordinates = parse_list<int>(key, value, [](const std::string& k, const std::string& s) {
            return static_cast<int>(parse_int(k, s));
        });
    else if (key == "seed") cfg.seed = parse_u64(key, value);
    else if (key == "out") cfg.out_path = value;
    else if (key == "estimator") {
        if (value == "chain") cfg.estimator = EstimatorForm::chain;
        else if (value == "product") cfg.estimator = EstimatorForm::product;
        else if (value == "both") cfg.estimator = EstimatorForm::both;
        else throw config_error("config key 'estimator': unknown form '" + value + "'");
    } else if (key == "frozen_y") cfg.frozen_y = parse_bool(key, value);
    else if (key == "subsample") cfg.subsample = parse_bool(key, value);
    else if (key == "subsample_kind") {
        if (value == "uniform") cfg.subsample_kind = PairSamplerKind::uniform;
        else if (value == "stratified") cfg.subsample_kind = PairSamplerKind::stratified;
        else throw config_error("config key 'subsample_kind': unknown kind '" + value + "'");
    } else if (key == "subsample_s") cfg.subsample_s = parse_double(key, value);
    else if (key == "subsample_draws") cfg.subsample_draws = parse_int(key, value);
    else if (key == "inner_replicates") cfg.inner_replicates = static_cast<int>(parse_int(key, value));
    else if (key == "u_values")
        cfg.u_values = parse_list<int>(key, value, [](const std::string& k, const std::string& s) {
            return static_cast<int>(parse_int(k, s));
        });
    else if (key == "u_len_values")
        cfg.u_len_values = parse_list<int>(key, value, [](const std::string& k, const std::string& s) {
            return static_cast<int>(parse_int(k, s));
        });
    else if (key == "s_values")
        cfg.s_values = parse_list<double>(key, value, [](const std::string& k, const std::string& s) {
            return parse_double(k, s);
        });
    else if (key == "workers") cfg.workers = static_cast<int>(parse_int(key, value));
    else throw config_error("unknown config key: " + key);
}

inline ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw config_error("cannot open config file: " + path);
    ExperimentConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::string stripped = detail::trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw config_error(path + ":" + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = detail::trim(stripped.substr(0, eq));
        const std::string value = detail::trim(stripped.substr(eq + 1));
        if (key.empty()) throw config_error(path + ":" + std::to_string(line_no) + ": empty key");
        apply_config_entry(cfg, key, value);
    }
    return cfg;
}

// --- deterministic worker pool ---------------------------------------------

namespace detail {

template <typename Fn>
void parallel_for(int n, int workers, Fn&& fn) {
    if (workers <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex err_mu;
    std::exception_ptr err;
    auto work = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> g(err_mu);
                if (!err) err = std::current_exception();
                next.store(n);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const int spawn = std::min(workers, n);
    pool.reserve(static_cast<std::size_t>(spawn));
    for (int w = 0; w < spawn; ++w) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

} // namespace detail

// --- one replicate of the segmented pipeline --------------------------------

struct SegmentedRun {
    std::vector<SegmentOutput> segments;
    std::vector<SegmentInitializer> initializers;
    std::vector<BoundaryMatrix> boundaries;
};

inline SegmentInitializer make_segment_initializer(const ExperimentConfig& cfg, int m,
                                                   std::span<const double> obs,
                                                   std::uint64_t rep, std::uint64_t salt) {
    if (m == 1) return model_prior_initializer(cfg.params);
    if (cfg.initializer_mode == InitializerMode::window_estimated) {
        const int t_boundary = (m - 1) * cfg.stage_count(); // stage (m-1)T, 1-based
        const int start = std::max(1, t_boundary - cfg.window_r);
        const int k_aux = cfg.aux_particles > 0 ? cfg.aux_particles : cfg.particle_count;
        Rng rng = derive_stream(cfg.seed,
                                {stream_tag::initializer, rep, static_cast<std::uint64_t>(m), salt});
        return estimate_initializer(cfg.params,
                                    obs.subspan(static_cast<std::size_t>(start - 1),
                                                static_cast<std::size_t>(t_boundary - start + 1)),
                                    k_aux, rng);
    }
    const double s2 = cfg.init_sigma2 > 0.0 ? cfg.init_sigma2 : cfg.params.sigma_x2;
    return fixed_gaussian_initializer(cfg.init_mu, s2);
}

inline SegmentedRun run_segmented(const ExperimentConfig& cfg, const HmmSpec& hmm,
                                  std::span<const double> obs, std::uint64_t rep,
                                  std::uint64_t salt = 0) {
    const int m_count = cfg.segment_count;
    const int t_len = cfg.stage_count();
    const std::vector<int> ks = cfg.resolved_particle_counts();
    SegmentedRun run;
    run.segments.reserve(static_cast<std::size_t>(m_count));
    run.initializers.reserve(static_cast<std::size_t>(m_count));
    for (int m = 1; m <= m_count; ++m) {
        SegmentConfig sc;
        sc.segment_index = m;
        sc.first_stage = (m - 1) * t_len + 1;
        sc.last_stage = m * t_len;
        sc.particle_count = ks[static_cast<std::size_t>(m - 1)];
        sc.initializer = make_segment_initializer(cfg, m, obs, rep, salt);
        sc.proposal = bootstrap_proposal(cfg.params);
        sc.rng = derive_stream(cfg.seed, {stream_tag::segment, rep, static_cast<std::uint64_t>(m), salt});
        run.initializers.push_back(sc.initializer);
        run.segments.push_back(run_segment(sc, obs));
    }
    run.boundaries.reserve(static_cast<std::size_t>(m_count - 1));
    for (int m = 2; m <= m_count; ++m)
        run.boundaries.push_back(boundary_matrix(run.segments[static_cast<std::size_t>(m - 2)],
                                                 run.segments[static_cast<std::size_t>(m - 1)],
                                                 run.initializers[static_cast<std::size_t>(m - 1)], hmm));
    return run;
}

// log of the emission constant (2 pi sigma_y2)^{U/2} dropped by the
// unnormalized weight convention; subtract from log lambda-hat before
// comparing against a normalized likelihood.
inline double log_emission_constant(const ModelParams& p, int u_len) {
    return 0.5 * u_len * (log_two_pi + std::log(p.sigma_y2));
}

struct ReplicateResult {
    std::uint64_t replicate = 0;
    double log_lambda_chain = 0.0;
    double log_lambda_product = 0.0;
    double log_lambda_adjusted = 0.0; // primary form, emission constant restored
    double log_lambda_kalman = 0.0;
    double log_lambda_subsample = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> psi_tilde;   // per psi coordinate
    std::vector<double> stderr_est;   // per psi coordinate
    std::vector<double> oracle_mean; // per psi coordinate (RTS smoothed mean)
    std::vector<double> sigma2_pm;   // for the first psi coordinate
    std::vector<int> allocation;     // Neyman suggestion from sigma2_pm
};

inline ReplicateResult evaluate_replicate(const ExperimentConfig& cfg, const HmmSpec& hmm,
                                          std::span<const double> obs, const SmootherState& rts,
                                          double log_lambda_kalman, std::uint64_t rep) {
    SegmentedRun run = run_segmented(cfg, hmm, obs, rep);
    JoinContext ctx = make_join_context(run.segments, run.boundaries);

    ReplicateResult r;
    r.replicate = rep;
    double log_wbar = 0.0, log_k = 0.0;
    int budget = 0;
    for (const SegmentOutput& seg : run.segments) {
        log_wbar += seg.log_wbar_sum();
        log_k += std::log(static_cast<double>(seg.particle_count));
        budget += seg.particle_count;
    }
    r.log_lambda_chain = log_wbar + ctx.log_total() - log_k;
    r.log_lambda_product = likelihood_estimate(run.segments, run.boundaries, LikelihoodForm::product);
    const double primary =
        cfg.estimator == EstimatorForm::product ? r.log_lambda_product : r.log_lambda_chain;
    r.log_lambda_adjusted = primary - log_emission_constant(cfg.params, cfg.u_len);
    r.log_lambda_kalman = log_lambda_kalman;

    const std::vector<int> us = cfg.resolved_psi();
    for (std::size_t i = 0; i < us.size(); ++i) {
        const FunctionalSpec psi = FunctionalSpec::coordinate(us[i]);
        const double pt = latent_estimate(run.segments, ctx, psi);
        const VarianceEstimate ve = variance_estimate(run.segments, ctx, psi, run.boundaries, pt);
        r.psi_tilde.push_back(pt);
        r.stderr_est.push_back(ve.stderr_value);
        r.oracle_mean.push_back(rts.mean[static_cast<std::size_t>(us[i] - 1)]);
        if (i == 0) {
            r.sigma2_pm = ve.sigma2_pm;
            r.allocation = allocate_particles(r.sigma2_pm, budget);
        }
    }

    if (cfg.subsample) {
        const long v = cfg.subsample_draws > 0 ? cfg.subsample_draws
                                               : default_draw_count(cfg.particle_count, cfg.subsample_s);
        const PairSampler sampler =
            cfg.subsample_kind == PairSamplerKind::uniform
                ? uniform_pair_sampler(run.segments[0].particle_count,
                                       run.segments[1].particle_count, v)
                : stratified_pair_sampler(run.segments[0], run.segments[1], hmm, v);
        Rng rng = derive_stream(cfg.seed, {stream_tag::pair_draws, rep});
        r.log_lambda_subsample = subsampled_log_likelihood(run.segments[0], run.segments[1],
                                                           run.initializers[1], hmm, sampler, rng);
    }
    return r;
}

inline std::vector<ReplicateResult> run_replicates(const ExperimentConfig& cfg) {
    cfg.validate();
    const HmmSpec hmm = linear_gaussian_hmm(cfg.params);
    std::vector<ReplicateResult> out(static_cast<std::size_t>(cfg.replicates));

    SimulatedPath frozen;
    KalmanState frozen_ks;
    SmootherState frozen_rts;
    if (cfg.frozen_y) {
        Rng rng = derive_stream(cfg.seed, {stream_tag::observations, 0});
        frozen = simulate_hmm(cfg.params, cfg.u_len, rng);
        frozen_ks = kalman_filter(cfg.params, frozen.observations);
        frozen_rts = rts_smoother(cfg.params, frozen_ks);
    }

    detail::parallel_for(cfg.replicates, cfg.workers, [&](int i) {
        const std::uint64_t rep = static_cast<std::uint64_t>(i) + 1;
        if (cfg.frozen_y) {
            out[static_cast<std::size_t>(i)] = evaluate_replicate(
                cfg, hmm, frozen.observations, frozen_rts, frozen_ks.log_likelihood, rep);
        } else {
            Rng rng = derive_stream(cfg.seed, {stream_tag::observations, rep});
            const SimulatedPath sim = simulate_hmm(cfg.params, cfg.u_len, rng);
            const KalmanState ks = kalman_filter(cfg.params, sim.observations);
            const SmootherState rts = rts_smoother(cfg.params, ks);
            out[static_cast<std::size_t>(i)] =
                evaluate_replicate(cfg, hmm, sim.observations, rts, ks.log_likelihood, rep);
        }
    });
    return out;
}

// --- CSV / summary emission --------------------------------------------------

inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
}

inline void write_text_file(const std::string& path, const std::string& contents) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open output file: " + path);
    os << contents;
    os.flush();
    if (!os) throw std::runtime_error("failed writing output file: " + path);
}

inline std::string replicates_csv(const ExperimentConfig& cfg,
                                  const std::vector<ReplicateResult>& rows) {
    const std::vector<int> us = cfg.resolved_psi();
    const bool chain_col = cfg.estimator != EstimatorForm::product;
    const bool product_col = cfg.estimator != EstimatorForm::chain;
    std::ostringstream os;
    os << "replicate";
    for (int u : us)
        os << ",psi_tilde_u" << u << ",stderr_u" << u << ",oracle_mean_u" << u;
    if (chain_col) os << ",log_lambda_chain";
    if (product_col) os << ",log_lambda_product";
    os << ",log_lambda_adjusted,log_lambda_kalman";
    if (cfg.subsample) os << ",log_lambda_subsample";
    for (int m = 1; m <= cfg.segment_count; ++m) os << ",sigma2_pm_" << m;
    for (int m = 1; m <= cfg.segment_count; ++m) os << ",alloc_" << m;
    os << "\n";
    for (const ReplicateResult& r : rows) {
        os << r.replicate;
        for (std::size_t i = 0; i < us.size(); ++i)
            os << ',' << format_g17(r.psi_tilde[i]) << ',' << format_g17(r.stderr_est[i]) << ','
               << format_g17(r.oracle_mean[i]);
        if (chain_col) os << ',' << format_g17(r.log_lambda_chain);
        if (product_col) os << ',' << format_g17(r.log_lambda_product);
        os << ',' << format_g17(r.log_lambda_adjusted) << ',' << format_g17(r.log_lambda_kalman);
        if (cfg.subsample) os << ',' << format_g17(r.log_lambda_subsample);
        for (double v : r.sigma2_pm) os << ',' << format_g17(v);
        for (int v : r.allocation) os << ',' << v;
        os << "\n";
    }
    return os.str();
}

inline std::string replicates_summary(const ExperimentConfig& cfg,
                                      const std::vector<ReplicateResult>& rows) {
    const std::vector<int> us = cfg.resolved_psi();
    const std::size_t n = rows.size();
    std::ostringstream os;
    os << "replicates = " << n << "\n";
    os << "u_len = " << cfg.u_len << "\n";
    os << "segment_count = " << cfg.segment_count << "\n";
    os << "particle_count = " << cfg.particle_count << "\n";
    os << "frozen_y = " << (cfg.frozen_y ? "true" : "false") << "\n";
    os << "seed = " << cfg.seed << "\n";

    for (std::size_t i = 0; i < us.size(); ++i) {
        std::vector<double> pt(n), estv(n);
        for (std::size_t r = 0; r < n; ++r) {
            pt[r] = rows[r].psi_tilde[i];
            estv[r] = rows[r].stderr_est[i] * rows[r].stderr_est[i];
        }
        const std::string tag = "_u" + std::to_string(us[i]);
        os << "mean_psi_tilde" << tag << " = " << format_g17(mean(pt)) << "\n";
        if (n >= 2) {
            const double ev = sample_variance(pt);
            os << "empirical_var" << tag << " = " << format_g17(ev) << "\n";
            os << "empirical_stderr" << tag << " = " << format_g17(std::sqrt(ev)) << "\n";
            os << "mean_est_var" << tag << " = " << format_g17(mean(estv)) << "\n";
            os << "median_est_var" << tag << " = " << format_g17(median(estv)) << "\n";
            if (ev > 0.0)
                os << "est_var_ratio_median" << tag << " = " << format_g17(median(estv) / ev) << "\n";
        }
        if (cfg.frozen_y && n >= 4) {
            std::vector<double> z(n);
            for (std::size_t r = 0; r < n; ++r)
                z[r] = (rows[r].psi_tilde[i] - rows[r].oracle_mean[i]) / rows[r].stderr_est[i];
            os << "standardized_mean" << tag << " = " << format_g17(mean(z)) << "\n";
            os << "standardized_skewness" << tag << " = " << format_g17(skewness(z)) << "\n";
            os << "standardized_excess_kurtosis" << tag << " = " << format_g17(excess_kurtosis(z))
               << "\n";
        }
    }

    std::vector<double> ratio(n), chain(n), product(n);
    double max_diff = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        ratio[r] = std::exp(rows[r].log_lambda_adjusted - rows[r].log_lambda_kalman);
        chain[r] = rows[r].log_lambda_chain;
        product[r] = rows[r].log_lambda_product;
        max_diff = std::max(max_diff, std::abs(chain[r] - product[r]));
    }
    os << "mean_lambda_ratio = " << format_g17(mean(ratio)) << "\n";
    if (n >= 2)
        os << "stderr_lambda_ratio = "
           << format_g17(std::sqrt(sample_variance(ratio) / static_cast<double>(n))) << "\n";
    os << "mean_log_lambda_chain = " << format_g17(mean(chain)) << "\n";
    os << "mean_log_lambda_product = " << format_g17(mean(product)) << "\n";
    os << "max_abs_chain_product_diff = " << format_g17(max_diff) << "\n";
    if (cfg.subsample) {
        std::vector<double> sub(n);
        for (std::size_t r = 0; r < n; ++r) sub[r] = rows[r].log_lambda_subsample;
        os << "mean_log_lambda_subsample = " << format_g17(mean(sub)) << "\n";
    }
    return os.str();
}

// --- Table 1 -----------------------------------------------------------------

struct Table1Cell {
    double mse = 0.0;
    double se = 0.0;
};

struct Table1Row {
    int u = 0;
    Table1Cell standard, seg_fixed, seg_window;
};

inline std::vector<int> table1_u_grid(const ExperimentConfig& cfg) {
    if (!cfg.u_values.empty()) return cfg.u_values;
    const int step = std::max(1, cfg.u_len / 10);
    std::vector<int> us;
    for (int u = step; u <= cfg.u_len; u += step) us.push_back(u);
    return us;
}

inline std::vector<Table1Row> run_table1(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.segment_count < 2) throw config_error("table1 requires segment_count >= 2");
    const HmmSpec hmm = linear_gaussian_hmm(cfg.params);
    const std::vector<int> us = table1_u_grid(cfg);

    ExperimentConfig std_cfg = cfg;
    std_cfg.segment_count = 1;
    std_cfg.initializer_mode = InitializerMode::standard;
    std_cfg.particle_counts.clear();
    ExperimentConfig fixed_cfg = cfg;
    fixed_cfg.initializer_mode = InitializerMode::fixed_gaussian;
    ExperimentConfig window_cfg = cfg;
    window_cfg.initializer_mode = InitializerMode::window_estimated;
    const ExperimentConfig* method_cfg[3] = {&std_cfg, &fixed_cfg, &window_cfg};

    const std::size_t n = static_cast<std::size_t>(cfg.replicates);
    // sqerr[method][u-index * R + rep]
    std::vector<std::vector<double>> sqerr(3, std::vector<double>(us.size() * n));
    detail::parallel_for(cfg.replicates, cfg.workers, [&](int i) {
        const std::uint64_t rep = static_cast<std::uint64_t>(i) + 1;
        Rng rng = derive_stream(cfg.seed, {stream_tag::observations, rep});
        const SimulatedPath sim = simulate_hmm(cfg.params, cfg.u_len, rng);
        const SmootherState rts = rts_smoother(cfg.params, kalman_filter(cfg.params, sim.observations));
        for (int method = 0; method < 3; ++method) {
            const SegmentedRun run = run_segmented(*method_cfg[method], hmm, sim.observations, rep,
                                                   static_cast<std::uint64_t>(method + 1));
            const JoinContext ctx = make_join_context(run.segments, run.boundaries);
            for (std::size_t ui = 0; ui < us.size(); ++ui) {
                const double pt =
                    latent_estimate(run.segments, ctx, FunctionalSpec::coordinate(us[ui]));
                const double d = pt - rts.mean[static_cast<std::size_t>(us[ui] - 1)];
                sqerr[static_cast<std::size_t>(method)][ui * n + static_cast<std::size_t>(i)] = d * d;
            }
        }
    });

    std::vector<Table1Row> rows(us.size());
    for (std::size_t ui = 0; ui < us.size(); ++ui) {
        rows[ui].u = us[ui];
        Table1Cell* cells[3] = {&rows[ui].standard, &rows[ui].seg_fixed, &rows[ui].seg_window};
        for (int method = 0; method < 3; ++method) {
            std::span<const double> errs(sqerr[static_cast<std::size_t>(method)].data() + ui * n, n);
            cells[method]->mse = mean(errs);
            cells[method]->se =
                n >= 2 ? std::sqrt(sample_variance(errs) / static_cast<double>(n)) : 0.0;
        }
    }
    return rows;
}

inline std::string table1_csv(const std::vector<Table1Row>& rows) {
    std::ostringstream os;
    os << "u,standard_mse_x100,standard_se_x100,seg_fixed_mse_x100,seg_fixed_se_x100,"
          "seg_window_mse_x100,seg_window_se_x100\n";
    for (const Table1Row& r : rows) {
        os << r.u;
        for (const Table1Cell* c : {&r.standard, &r.seg_fixed, &r.seg_window})
            os << ',' << format_g17(100.0 * c->mse) << ',' << format_g17(100.0 * c->se);
        os << "\n";
    }
    return os.str();
}

// --- stability sweep -----------------------------------------------------------

struct StabilityRow {
    int u_len = 0;
    double standard_mse = 0.0, standard_se = 0.0;
    double segmented_mse = 0.0, segmented_se = 0.0;
};

// Fixed segment length T=10: M grows with U while the smoothing coordinate u
// stays fixed, contrasting the standard filter's path degeneracy with the
// segmented estimator's stability.
inline std::vector<StabilityRow> run_stability_sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<int> u_lens = cfg.u_len_values.empty() ? std::vector<int>{50, 100, 200}
                                                       : cfg.u_len_values;
    const int u_coord = cfg.resolved_psi().front();
    const std::size_t n = static_cast<std::size_t>(cfg.replicates);
    std::vector<StabilityRow> rows;
    for (int u_len : u_lens) {
        if (u_len % 10 != 0) throw config_error("stability sweep requires u_len values divisible by 10");
        if (u_coord > u_len) throw config_error("psi coordinate exceeds a sweep u_len");
        ExperimentConfig std_cfg = cfg;
        std_cfg.u_len = u_len;
        std_cfg.segment_count = 1;
        std_cfg.initializer_mode = InitializerMode::standard;
        std_cfg.particle_counts.clear();
        std_cfg.seed = derive_seed(cfg.seed, {stream_tag::generic, static_cast<std::uint64_t>(u_len), 1});
        ExperimentConfig seg_cfg = cfg;
        seg_cfg.u_len = u_len;
        seg_cfg.segment_count = u_len / 10;
        seg_cfg.initializer_mode = InitializerMode::fixed_gaussian;
        seg_cfg.particle_counts.clear();
        seg_cfg.seed = derive_seed(cfg.seed, {stream_tag::generic, static_cast<std::uint64_t>(u_len), 2});
        const HmmSpec hmm = linear_gaussian_hmm(cfg.params);

        std::vector<double> std_err(n), seg_err(n);
        detail::parallel_for(cfg.replicates, cfg.workers, [&](int i) {
            const std::uint64_t rep = static_cast<std::uint64_t>(i) + 1;
            Rng rng = derive_stream(std_cfg.seed, {stream_tag::observations, rep});
            const SimulatedPath sim = simulate_hmm(cfg.params, u_len, rng);
            const SmootherState rts =
                rts_smoother(cfg.params, kalman_filter(cfg.params, sim.observations));
            const double oracle = rts.mean[static_cast<std::size_t>(u_coord - 1)];
            for (int which = 0; which < 2; ++which) {
                const ExperimentConfig& mc = which == 0 ? std_cfg : seg_cfg;
                const SegmentedRun run = run_segmented(mc, hmm, sim.observations, rep);
                const double pt =
                    latent_estimate(run.segments, run.boundaries, FunctionalSpec::coordinate(u_coord));
                const double d = pt - oracle;
                (which == 0 ? std_err : seg_err)[static_cast<std::size_t>(i)] = d * d;
            }
        });
        StabilityRow row;
        row.u_len = u_len;
        row.standard_mse = mean(std_err);
        row.segmented_mse = mean(seg_err);
        if (n >= 2) {
            row.standard_se = std::sqrt(sample_variance(std_err) / static_cast<double>(n));
            row.segmented_se = std::sqrt(sample_variance(seg_err) / static_cast<double>(n));
        }
        rows.push_back(row);
    }
    return rows;
}

inline std::string stability_csv(const std::vector<StabilityRow>& rows) {
    std::ostringstream os;
    os << "u_len,standard_mse,standard_se,segmented_mse,segmented_se\n";
    for (const StabilityRow& r : rows)
        os << r.u_len << ',' << format_g17(r.standard_mse) << ',' << format_g17(r.standard_se) << ','
           << format_g17(r.segmented_mse) << ',' << format_g17(r.segmented_se) << "\n";
    return os.str();
}

// --- subsample sweep -------------------------------------------------------------

struct SubsampleRow {
    int draw = 0;      // segment-draw index
    double s = 1.0;    // V = ceil(K^s)
    long v = 0;
    double var_log_lambda_star = 0.0;
    double log_lambda_full = 0.0; // full double-sum estimate for this draw
};

inline std::vector<SubsampleRow> run_subsample_sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.segment_count != 2) throw config_error("subsample sweep requires segment_count=2");
    const HmmSpec hmm = linear_gaussian_hmm(cfg.params);
    const std::vector<double> s_grid =
        cfg.s_values.empty() ? std::vector<double>{1.0, 1.5, 2.0} : cfg.s_values;
    const int draws = cfg.replicates;
    std::vector<SubsampleRow> rows(static_cast<std::size_t>(draws) * s_grid.size());

    detail::parallel_for(draws, cfg.workers, [&](int i) {
        const std::uint64_t d = static_cast<std::uint64_t>(i) + 1;
        Rng rng = derive_stream(cfg.seed, {stream_tag::observations, d});
        const SimulatedPath sim = simulate_hmm(cfg.params, cfg.u_len, rng);
        const SegmentedRun run = run_segmented(cfg, hmm, sim.observations, d);
        const double full = likelihood_estimate(run.segments, run.boundaries, LikelihoodForm::chain);
        for (std::size_t si = 0; si < s_grid.size(); ++si) {
            const long v = default_draw_count(cfg.particle_count, s_grid[si]);
            const PairSampler sampler =
                cfg.subsample_kind == PairSamplerKind::uniform
                    ? uniform_pair_sampler(run.segments[0].particle_count,
                                           run.segments[1].particle_count, v)
                    : stratified_pair_sampler(run.segments[0], run.segments[1], hmm, v);
            Rng srng = derive_stream(cfg.seed,
                                     {stream_tag::pair_draws, d, static_cast<std::uint64_t>(si)});
            std::vector<double> logs(static_cast<std::size_t>(cfg.inner_replicates));
            for (int j = 0; j < cfg.inner_replicates; ++j)
                logs[static_cast<std::size_t>(j)] = subsampled_log_likelihood(
                    run.segments[0], run.segments[1], run.initializers[1], hmm, sampler, srng);
            SubsampleRow row;
            row.draw = static_cast<int>(d);
            row.s = s_grid[si];
            row.v = v;
            row.var_log_lambda_star = sample_variance(logs);
            row.log_lambda_full = full;
            rows[static_cast<std::size_t>(i) * s_grid.size() + si] = row;
        }
    });
    return rows;
}

inline std::string subsample_csv(const std::vector<SubsampleRow>& rows) {
    std::ostringstream os;
    os << "draw,s,v,var_log_lambda_star,log_lambda_full\n";
    for (const SubsampleRow& r : rows)
        os << r.draw << ',' << format_g17(r.s) << ',' << r.v << ','
           << format_g17(r.var_log_lambda_star) << ',' << format_g17(r.log_lambda_full) << "\n";
    return os.str();
}

inline std::string subsample_summary(const std::vector<SubsampleRow>& rows) {
    // median variance per exponent s, in first-appearance order
    std::vector<double> s_seen;
    std::ostringstream os;
    for (const SubsampleRow& r : rows) {
        bool seen = false;
        for (double s : s_seen) seen = seen || s == r.s;
        if (seen) continue;
        s_seen.push_back(r.s);
        std::vector<double> vars;
        long v = 0;
        for (const SubsampleRow& q : rows)
            if (q.s == r.s) {
                vars.push_back(q.var_log_lambda_star);
                v = q.v;
            }
        os << "median_var_log_lambda_star_s" << format_g17(r.s) << " = " << format_g17(median(vars))
           << " (V=" << v << ")\n";
    }
    return os.str();
}

} // namespace segpf
