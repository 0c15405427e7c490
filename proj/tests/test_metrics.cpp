#include <cmath>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "dallmi/metrics.hpp"

using namespace dallmi;

TEST_CASE("average_precision hand values") {
    SUBCASE("perfect ranking scores 1") {
        CHECK(average_precision({0.9, 0.8, 0.1, 0.05}, {1, 1, 0, 0}) == 1.0);
    }
    SUBCASE("worst ranking of one positive in k items is 1/k") {
        CHECK(average_precision({0.9, 0.8, 0.7, 0.1}, {0, 0, 0, 1}) == doctest::Approx(0.25));
    }
    SUBCASE("mixed ranking") {
        // rank 1: s0(-); rank 2: s1(+) p=1/2; rank 3: s2(+) p=2/3
        // AP = (1/2 + 2/3) / 2 = 7/12
        CHECK(average_precision({0.9, 0.8, 0.1}, {0, 1, 1}) ==
              doctest::Approx(7.0 / 12.0).epsilon(1e-12));
    }
    SUBCASE("ties break by ascending sample id") {
        // equal scores: the positive at index 0 outranks the negative at 1
        CHECK(average_precision({0.5, 0.5}, {1, 0}) == 1.0);
        // and loses the top slot when it sits at the higher index
        CHECK(average_precision({0.5, 0.5}, {0, 1}) == doctest::Approx(0.5));
    }
    SUBCASE("no positives is undefined") {
        CHECK(std::isnan(average_precision({0.3, 0.2}, {0, 0})));
    }
    SUBCASE("all positives always scores 1") {
        CHECK(average_precision({0.2, 0.9, 0.5}, {1, 1, 1}) == 1.0);
    }
    SUBCASE("length mismatch rejected") {
        CHECK_THROWS_AS(average_precision({0.1}, {1, 0}), std::invalid_argument);
    }
}

TEST_CASE("average_precision properties") {
    SUBCASE("invariant under strictly monotone score transforms") {
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::bernoulli_distribution coin(0.3);
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<double> scores(20);
            std::vector<int> truths(20);
            bool any = false;
            for (int i = 0; i < 20; ++i) {
                scores[i] = u(rng);
                truths[i] = coin(rng) ? 1 : 0;
                any = any || truths[i];
            }
            if (!any) truths[0] = 1;
            std::vector<double> warped(20);
            for (int i = 0; i < 20; ++i) warped[i] = std::exp(3.0 * scores[i]) - 2.0;
            CHECK(average_precision(scores, truths) ==
                  doctest::Approx(average_precision(warped, truths)).epsilon(1e-12));
        }
    }
    SUBCASE("random scores average near the positive rate") {
        // expected AP of a random ranking is close to the base rate
        std::mt19937_64 rng(4);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double rate = 0.3;
        std::bernoulli_distribution coin(rate);
        double sum = 0.0;
        const int trials = 2000;
        for (int t = 0; t < trials; ++t) {
            std::vector<double> scores(50);
            std::vector<int> truths(50);
            bool any = false;
            for (int i = 0; i < 50; ++i) {
                scores[i] = u(rng);
                truths[i] = coin(rng) ? 1 : 0;
                any = any || truths[i];
            }
            if (!any) { --t; continue; }
            sum += average_precision(scores, truths);
        }
        CHECK(sum / trials == doctest::Approx(rate).epsilon(0.18));
    }
}

TEST_CASE("mean_average_precision") {
    SUBCASE("mean of per-label APs") {
        std::vector<std::vector<double>> scores = {
            {0.9, 0.9}, {0.8, 0.8}, {0.1, 0.1},
        };
        std::vector<std::vector<int>> truths = {
            {1, 0}, {1, 1}, {0, 1},
        };
        EvalReport r = mean_average_precision(scores, truths);
        // label 0: perfect (1.0); label 1: positives at ranks 2,3 -> (1/2+2/3)/2
        CHECK(r.per_label_ap[0] == 1.0);
        CHECK(r.per_label_ap[1] == doctest::Approx(7.0 / 12.0).epsilon(1e-12));
        CHECK(r.map == doctest::Approx((1.0 + 7.0 / 12.0) / 2.0).epsilon(1e-12));
        CHECK(r.undefined_labels.empty());
    }
    SUBCASE("zero-positive labels are excluded from the mean") {
        std::vector<std::vector<double>> scores = {{0.9, 0.4}, {0.1, 0.6}};
        std::vector<std::vector<int>> truths = {{1, 0}, {0, 0}};
        EvalReport r = mean_average_precision(scores, truths);
        CHECK(r.map == 1.0);
        CHECK(r.undefined_labels == std::vector<std::size_t>{1});
        CHECK(std::isnan(r.per_label_ap[1]));
    }
    SUBCASE("all labels undefined throws") {
        CHECK_THROWS_AS(
            mean_average_precision({{0.9}, {0.1}}, {{0}, {0}}), std::invalid_argument);
    }
    SUBCASE("report serializes") {
        EvalReport r = mean_average_precision({{0.9}, {0.1}}, {{1}, {0}});
        CHECK(r.to_json().find("\"map\"") != std::string::npos);
        CHECK(!r.to_table().empty());
    }
}
