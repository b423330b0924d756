#pragma once

#include <span>
#include <vector>

#include "cap/dataset.hpp"

namespace cap {

// Nonconformity scores of a calibration set, order preserved.
struct ScoreList {
    std::vector<double> scores;

    std::size_t size() const { return scores.size(); }
};

// Conformal cutoff. all_inclusive is set when the finite-sample-adjusted
// rank exceeds n: every comparison score passes, and the regime comparisons
// treat the threshold as sitting above the whole score range.
struct Threshold {
    double value = 0.0;
    bool all_inclusive = false;
};

// score_i = 1 - probs_i[label_i]; higher means more uncertain.
ScoreList calibration_scores(const RecordSet& records);

// APS nonconformity: cumulative softmax mass through the true label in
// descending-probability order (ties by ascending index, matching aps_set),
// so label membership in aps_set at threshold t is exactly score <= t.
ScoreList aps_calibration_scores(const RecordSet& records);

// Finite-sample-adjusted (1 - miscoverage)-quantile: the k-th smallest
// score with k = ceil((n + 1) * (1 - miscoverage)), or an all-inclusive
// threshold when k > n. Throws on an empty score list.
Threshold conformal_quantile(const ScoreList& scores, double miscoverage);

// Same, over scores already sorted ascending. Used by the training loop to
// avoid re-sorting per episode.
Threshold conformal_quantile_sorted(std::span<const double> sorted_scores,
                                    double miscoverage);

// { y : 1 - probs[y] <= threshold }, with the argmax class as a non-empty
// floor. Labels ascending.
std::vector<int> lac_set(std::span<const double> probs, const Threshold& threshold);

// Classes sorted by descending probability (ties by ascending index);
// class y enters the set when the cumulative mass through y is <= threshold.
// Top-1 class as a non-empty floor. Labels ascending.
std::vector<int> aps_set(std::span<const double> probs, const Threshold& threshold);

// Test-time nonconformity: 1 - max_i probs[i].
double test_score(std::span<const double> probs);

// Index of the largest probability, ties broken by lowest index.
int argmax_class(std::span<const double> probs);

}  // namespace cap
