#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "cap/metrics.hpp"
#include "oracles.hpp"

using namespace cap;

namespace {

EvalOutcome single(int predicted, int truth, double conf) {
    return EvalOutcome{Decision::single(predicted), truth, conf};
}
EvalOutcome set_of(std::vector<int> labels, int truth, double conf) {
    return EvalOutcome{Decision::set(std::move(labels)), truth, conf};
}
EvalOutcome abstain(int truth, double conf) {
    return EvalOutcome{Decision::abstain(), truth, conf};
}

// Random outcomes with a mix of all three decision kinds.
std::vector<EvalOutcome> random_outcomes(std::size_t n, int k, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(1.0 / k, 1.0);
    std::vector<EvalOutcome> out;
    for (std::size_t i = 0; i < n; ++i) {
        const int truth = static_cast<int>(rng() % k);
        const double conf = u(rng);
        switch (rng() % 3) {
            case 0: out.push_back(single(static_cast<int>(rng() % k), truth, conf)); break;
            case 1: {
                std::vector<int> labels;
                for (int c = 0; c < k; ++c) {
                    if (rng() % 2) labels.push_back(c);
                }
                if (labels.empty()) labels.push_back(0);
                out.push_back(set_of(labels, truth, conf));
                break;
            }
            default: out.push_back(abstain(truth, conf));
        }
    }
    return out;
}

}  // namespace

TEST_CASE("fractional_accuracy: definition arithmetic") {
    std::vector<EvalOutcome> o{single(0, 0, 0.9), set_of({1, 2}, 1, 0.5), abstain(0, 0.3)};
    CHECK(fractional_accuracy(o) == doctest::Approx(0.75));

    std::vector<EvalOutcome> perfect{single(0, 0, 0.9), single(2, 2, 0.8)};
    CHECK(fractional_accuracy(perfect) == 1.0);

    std::vector<EvalOutcome> all_abstained{abstain(0, 0.5), abstain(1, 0.5)};
    CHECK(fractional_accuracy(all_abstained) == 0.0);
}

TEST_CASE("fractional_accuracy equals a per-sample loop on random outcomes") {
    std::mt19937_64 rng(7);
    const auto outcomes = random_outcomes(200, 5, rng);
    double sum = 0.0;
    int answered = 0;
    for (const auto& o : outcomes) {
        if (o.decision.is_abstain()) continue;
        ++answered;
        if (o.decision.is_single()) {
            sum += o.decision.label() == o.label ? 1.0 : 0.0;
        } else {
            const auto& ls = o.decision.labels();
            if (std::find(ls.begin(), ls.end(), o.label) != ls.end()) {
                sum += 1.0 / static_cast<double>(ls.size());
            }
        }
    }
    CHECK(fractional_accuracy(outcomes) == doctest::Approx(sum / answered).epsilon(1e-15));
}

TEST_CASE("eval_coverage: abstentions count as covered") {
    std::vector<EvalOutcome> o{single(0, 0, 0.9), set_of({0, 1}, 1, 0.5), abstain(2, 0.4),
                               single(1, 2, 0.7)};
    CHECK(eval_coverage(o) == doctest::Approx(0.75));

    std::vector<EvalOutcome> all_abstained{abstain(0, 0.5), abstain(1, 0.5)};
    CHECK(eval_coverage(all_abstained) == 1.0);
}

TEST_CASE("coverage never rises when a covering set turns into a wrong single") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        auto outcomes = random_outcomes(60, 4, rng);
        const double before = eval_coverage(outcomes);
        for (auto& o : outcomes) {
            if (!o.decision.is_set()) continue;
            const auto& ls = o.decision.labels();
            if (std::find(ls.begin(), ls.end(), o.label) == ls.end()) continue;
            o.decision = Decision::single((o.label + 1) % 4);
            break;
        }
        CHECK(eval_coverage(outcomes) <= before);
    }
}

TEST_CASE("avg_set_size: set decisions only") {
    std::vector<EvalOutcome> o{set_of({0, 1}, 0, 0.5), set_of({0, 1, 2, 3}, 1, 0.4),
                               single(0, 0, 0.9), abstain(1, 0.2)};
    CHECK(avg_set_size(o) == 3.0);

    std::vector<EvalOutcome> none{single(0, 0, 0.9), abstain(1, 0.2)};
    CHECK(avg_set_size(none) == 0.0);
}

TEST_CASE("auroc: anchors, ties, and the undefined marker") {
    std::vector<double> conf{0.9, 0.4};
    std::vector<int> correct{1, 0};
    CHECK(auroc(conf, correct) == 1.0);

    std::vector<double> tied{0.5, 0.5, 0.5, 0.5};
    std::vector<int> half{1, 0, 1, 0};
    CHECK(auroc(tied, half) == 0.5);

    std::vector<double> hand{0.9, 0.7, 0.4, 0.2};
    std::vector<int> flags{1, 0, 1, 0};
    CHECK(auroc(hand, flags) == 0.75);

    std::vector<int> degenerate{1, 1, 1, 1};
    CHECK_FALSE(auroc(hand, degenerate).has_value());
}

TEST_CASE("auarc: anchors") {
    std::vector<double> conf{0.9, 0.1};
    std::vector<int> both{1, 1};
    CHECK(auarc(conf, both) == 1.0);
    std::vector<int> none{0, 0};
    CHECK(auarc(conf, none) == 0.0);
    std::vector<int> first{1, 0};
    CHECK(auarc(conf, first) == doctest::Approx(0.75));
}

TEST_CASE("ece: calibrated constant predictor scores zero") {
    std::vector<double> conf(100, 0.7);
    std::vector<int> correct(100, 0);
    for (int i = 0; i < 70; ++i) correct[i] = 1;
    CHECK(ece(conf, correct, 10) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("ece: hand-binned example") {
    std::vector<double> conf{0.9, 0.8, 0.3};
    std::vector<int> correct{1, 0, 0};
    CHECK(ece(conf, correct, 2) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("metric oracle equivalence on random instances") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng() % 199;
        const bool quantized = trial % 2 == 0;  // ties for the ranking metrics
        std::vector<double> conf(n);
        std::vector<int> correct(n);
        for (std::size_t i = 0; i < n; ++i) {
            conf[i] = quantized ? std::round(u(rng) * 20.0) / 20.0 : u(rng);
            correct[i] = rng() % 2;
        }
        const std::size_t hits = std::accumulate(correct.begin(), correct.end(), 0u);
        if (hits != 0 && hits != n) {
            CHECK(*auroc(conf, correct) == oracle::auroc_pairwise(conf, correct));
        }
        CHECK(auarc(conf, correct) ==
              doctest::Approx(oracle::auarc_sweep(conf, correct)).epsilon(1e-12));
        if (!quantized) {
            // Continuous confidences never sit on a bin edge, where the two
            // implementations' float rounding may legitimately differ.
            const int bins = 1 + static_cast<int>(rng() % 20);
            CHECK(ece(conf, correct, bins) ==
                  doctest::Approx(oracle::ece_double_loop(conf, correct, bins)).epsilon(1e-12));
        }
    }
}

TEST_CASE("metrics are permutation invariant") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> conf(80);
    std::vector<int> correct(80);
    for (std::size_t i = 0; i < conf.size(); ++i) {
        conf[i] = u(rng);  // continuous: ties almost surely absent for AUARC
        correct[i] = rng() % 2;
    }
    std::vector<std::size_t> perm(conf.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> conf_p(conf.size());
    std::vector<int> correct_p(conf.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        conf_p[i] = conf[perm[i]];
        correct_p[i] = correct[perm[i]];
    }
    CHECK(*auroc(conf, correct) == doctest::Approx(*auroc(conf_p, correct_p)).epsilon(1e-15));
    CHECK(ece(conf, correct, 10) == doctest::Approx(ece(conf_p, correct_p, 10)).epsilon(1e-15));
    CHECK(auarc(conf, correct) == doctest::Approx(auarc(conf_p, correct_p)).epsilon(1e-12));
}

TEST_CASE("ece is invariant to adding aligned empty bins") {
    // Confidences confined to [0, 0.05) and [0.1, 0.15): every occupied
    // 10-bin cell is a single 20-bin cell, so the binnings agree.
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> u(0.0, 0.0499);
    std::vector<double> conf;
    std::vector<int> correct;
    for (int i = 0; i < 200; ++i) {
        conf.push_back(u(rng) + (i % 2 ? 0.1 : 0.0));
        correct.push_back(rng() % 2);
    }
    CHECK(ece(conf, correct, 10) == doctest::Approx(ece(conf, correct, 20)).epsilon(1e-15));
}

TEST_CASE("auroc concentrates at 0.5 under label shuffling") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> conf(400);
    std::vector<int> correct(400);
    for (std::size_t i = 0; i < conf.size(); ++i) {
        conf[i] = u(rng);
        correct[i] = i < 200 ? 1 : 0;
    }
    double total = 0.0;
    for (int shuffle = 0; shuffle < 100; ++shuffle) {
        std::shuffle(correct.begin(), correct.end(), rng);
        total += *auroc(conf, correct);
    }
    CHECK(std::abs(total / 100.0 - 0.5) <= 0.03);
}

TEST_CASE("full_report: degenerate all-correct batch") {
    std::vector<EvalOutcome> o{single(0, 0, 0.9), single(1, 1, 0.8)};
    const MetricsReport r = full_report(o, 10, "cap");
    CHECK(r.accuracy == 1.0);
    CHECK(r.coverage == 1.0);
    CHECK_FALSE(r.auroc.has_value());
    CHECK(r.ece >= 0.0);
    CHECK(r.n == 2);
}

TEST_CASE("full_report composes the individual metrics") {
    std::mt19937_64 rng(29);
    const auto outcomes = random_outcomes(300, 4, rng);
    const MetricsReport r = full_report(outcomes, 10, "m");
    CHECK(r.accuracy == fractional_accuracy(outcomes));
    CHECK(r.coverage == eval_coverage(outcomes));
    CHECK(r.avg_set_size == avg_set_size(outcomes));
    std::size_t abstained = 0;
    for (const auto& o : outcomes) abstained += o.decision.is_abstain() ? 1 : 0;
    CHECK(r.abstention_rate == doctest::Approx(abstained / 300.0));
}

TEST_CASE("full_report puts abstentions last in the AUARC sweep") {
    // Two answered correct samples, one abstention: prefix accuracies
    // 1, 1, 2/3.
    std::vector<EvalOutcome> o{single(0, 0, 0.9), set_of({1}, 1, 0.8), abstain(0, 0.99)};
    const MetricsReport r = full_report(o, 10, "cap");
    CHECK(r.auarc == doctest::Approx((1.0 + 1.0 + 2.0 / 3.0) / 3.0));
}

TEST_CASE("report JSON round-trips unchanged") {
    std::mt19937_64 rng(31);
    const auto outcomes = random_outcomes(100, 3, rng);
    const MetricsReport r = full_report(outcomes, 10, "aps");
    CHECK(report_from_json(report_to_json(r)) == r);

    // undefined AUROC serializes as null, not a number
    std::vector<EvalOutcome> correct_only{single(0, 0, 0.9), single(1, 1, 0.8)};
    const MetricsReport d = full_report(correct_only, 10, "lac");
    const nlohmann::json j = report_to_json(d);
    CHECK(j.at("auroc").is_null());
    CHECK(report_from_json(j) == d);
}
