#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "segpf/math.hpp"

using namespace segpf;

TEST_CASE("log_sum_exp basics", "[math]") {
    std::vector<double> v{std::log(1.0), std::log(2.0), std::log(3.0)};
    CHECK(log_sum_exp(v) == Catch::Approx(std::log(6.0)).epsilon(1e-14));

    std::vector<double> shifted{1000.0, 1000.0 + std::log(2.0)};
    CHECK(log_sum_exp(shifted) == Catch::Approx(1000.0 + std::log(3.0)).epsilon(1e-14));

    std::vector<double> with_inf{neg_inf, 0.0, neg_inf};
    CHECK(log_sum_exp(with_inf) == Catch::Approx(0.0).margin(1e-15));

    std::vector<double> all_inf{neg_inf, neg_inf};
    CHECK(log_sum_exp(all_inf) == neg_inf);
    CHECK(log_sum_exp(std::vector<double>{}) == neg_inf);
}

TEST_CASE("log_mean_exp", "[math]") {
    std::vector<double> equal{-3.5, -3.5, -3.5, -3.5};
    CHECK(log_mean_exp(equal) == Catch::Approx(-3.5).epsilon(1e-14));
    CHECK_THROWS_AS(log_mean_exp(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("log_normal_pdf matches the closed form", "[math]") {
    const double x = 0.7, mu = -0.2, var = 2.3;
    const double expect = -0.5 * std::log(2.0 * M_PI * var) - (x - mu) * (x - mu) / (2.0 * var);
    CHECK(log_normal_pdf(x, mu, var) == Catch::Approx(expect).epsilon(1e-14));
    CHECK_THROWS_AS(log_normal_pdf(0.0, 0.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(log_normal_pdf(0.0, 0.0, -1.0), std::invalid_argument);
}

TEST_CASE("sample moments on hand-computed values", "[math]") {
    std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    CHECK(mean(v) == Catch::Approx(2.5).epsilon(1e-15));
    CHECK(sample_variance(v) == Catch::Approx(5.0 / 3.0).epsilon(1e-14));
    CHECK(skewness(v) == Catch::Approx(0.0).margin(1e-14));
    CHECK(excess_kurtosis(v) == Catch::Approx(-1.36).epsilon(1e-12));

    std::vector<double> skewed{0.0, 0.0, 0.0, 4.0};
    CHECK(skewness(skewed) > 1.0);
}

TEST_CASE("median", "[math]") {
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == Catch::Approx(2.5));
    CHECK_THROWS_AS(median({}), std::invalid_argument);
}
