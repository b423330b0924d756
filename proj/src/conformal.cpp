#include "cap/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cap {

ScoreList calibration_scores(const RecordSet& records) {
    if (records.records.empty()) {
        throw std::invalid_argument("calibration_scores: empty record set");
    }
    ScoreList out;
    out.scores.reserve(records.size());
    for (const ProbRecord& r : records.records) {
        out.scores.push_back(1.0 - r.probs[static_cast<std::size_t>(r.label)]);
    }
    return out;
}

ScoreList aps_calibration_scores(const RecordSet& records) {
    if (records.records.empty()) {
        throw std::invalid_argument("aps_calibration_scores: empty record set");
    }
    ScoreList out;
    out.scores.reserve(records.size());
    for (const ProbRecord& r : records.records) {
        const auto& probs = r.probs;
        double cumulative = 0.0;
        for (std::size_t y = 0; y < probs.size(); ++y) {
            const bool ranked_before_label =
                probs[y] > probs[static_cast<std::size_t>(r.label)] ||
                (probs[y] == probs[static_cast<std::size_t>(r.label)] &&
                 static_cast<int>(y) <= r.label);
            if (ranked_before_label) cumulative += probs[y];
        }
        out.scores.push_back(cumulative);
    }
    return out;
}

Threshold conformal_quantile_sorted(std::span<const double> sorted_scores,
                                    double miscoverage) {
    const std::size_t n = sorted_scores.size();
    if (n == 0) throw std::invalid_argument("conformal_quantile: empty score list");
    if (!(miscoverage > 0.0 && miscoverage < 1.0)) {
        throw std::invalid_argument("conformal_quantile: miscoverage must be in (0, 1)");
    }
    // Tiny slack keeps float noise from bumping an exactly-integer rank up.
    const double raw = static_cast<double>(n + 1) * (1.0 - miscoverage);
    const auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9));
    if (k > n) return Threshold{1.0, true};
    return Threshold{sorted_scores[k - 1], false};
}

Threshold conformal_quantile(const ScoreList& scores, double miscoverage) {
    std::vector<double> sorted = scores.scores;
    std::sort(sorted.begin(), sorted.end());
    return conformal_quantile_sorted(sorted, miscoverage);
}

std::vector<int> lac_set(std::span<const double> probs, const Threshold& threshold) {
    std::vector<int> out;
    if (threshold.all_inclusive) {
        out.resize(probs.size());
        std::iota(out.begin(), out.end(), 0);
        return out;
    }
    for (std::size_t y = 0; y < probs.size(); ++y) {
        if (1.0 - probs[y] <= threshold.value) out.push_back(static_cast<int>(y));
    }
    if (out.empty()) out.push_back(argmax_class(probs));
    return out;
}

std::vector<int> aps_set(std::span<const double> probs, const Threshold& threshold) {
    const std::size_t k = probs.size();
    std::vector<int> out;
    if (threshold.all_inclusive) {
        out.resize(k);
        std::iota(out.begin(), out.end(), 0);
        return out;
    }
    std::vector<int> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (probs[a] != probs[b]) return probs[a] > probs[b];
        return a < b;
    });
    double cumulative = 0.0;
    for (int y : order) {
        cumulative += probs[y];
        if (cumulative <= threshold.value) out.push_back(y);
    }
    if (out.empty()) out.push_back(order.front());
    std::sort(out.begin(), out.end());
    return out;
}

double test_score(std::span<const double> probs) {
    return 1.0 - *std::max_element(probs.begin(), probs.end());
}

int argmax_class(std::span<const double> probs) {
    return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

}  // namespace cap
