#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cap/policy.hpp"

namespace cap {

// One evaluated test sample. confidence is the max-softmax value
// (1 - test_score), which is what the ranking metrics order by.
struct EvalOutcome {
    Decision decision;
    int label = 0;
    double confidence = 0.0;
};

struct MetricsReport {
    std::string method;
    std::int64_t n = 0;
    double accuracy = 0.0;
    double coverage = 0.0;
    double avg_set_size = 0.0;
    double abstention_rate = 0.0;
    std::optional<double> auroc;  // empty when correctness is single-class
    double auarc = 0.0;
    double ece = 0.0;

    bool operator==(const MetricsReport&) const = default;
};

// Mean over answered samples of: 1 for a correct Single, 1/|set| for a Set
// containing the truth, 0 otherwise. 0 when everything abstained.
double fractional_accuracy(std::span<const EvalOutcome> outcomes);

// Fraction of samples whose truth is captured: correct Single, Set
// containing the truth, or Abstain (declining counts as avoiding an
// incorrect explicit guess).
double eval_coverage(std::span<const EvalOutcome> outcomes);

// Mean set size over Set decisions only; 0 when there are none.
double avg_set_size(std::span<const EvalOutcome> outcomes);

// Mann-Whitney statistic: fraction of (correct, incorrect) pairs where the
// correct sample has the higher confidence, ties counted 0.5. Empty when
// correctness is single-class.
std::optional<double> auroc(std::span<const double> confidences,
                            std::span<const int> correct);

// Mean over k = 1..n of the accuracy of the k most-confident samples
// (ties broken by input index). Uniform-weight area under the
// accuracy-rejection step curve.
double auarc(std::span<const double> confidences, std::span<const int> correct);

// Equal-width confidence bins over [0, 1], last bin right-closed; empty
// bins contribute 0.
double ece(std::span<const double> confidences, std::span<const int> correct,
           int n_bins);

// Assembles every metric above. Correctness for ranking metrics: Single ->
// exact match, Set -> truth in set; abstentions are excluded from AUROC and
// ECE and placed last (counted incorrect) in AUARC.
MetricsReport full_report(std::span<const EvalOutcome> outcomes, int n_bins,
                          std::string method);

nlohmann::json report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);

// Fixed column order of the report table projections.
const std::vector<std::string>& report_columns();

}  // namespace cap
