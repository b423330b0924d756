#pragma once

#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "cap/conformal.hpp"
#include "cap/dataset.hpp"

namespace cap {

enum class SetRule { Lac, Aps };
enum class SetThresholdSource { Abstain, Predict };
enum class DecisionMode { Deterministic, Stochastic };
enum class Regime { Single, Set, Abstain };

// The two conformal cutoffs together with the (alpha, beta) that produced
// them. beta is clamped to alpha at construction so q_predict <= q_abstain.
struct ThresholdPair {
    Threshold q_predict;
    Threshold q_abstain;
    double alpha = 0.0;
    double beta = 0.0;  // effective value after the beta <= alpha clamp
};

struct ActionDistribution {
    double p_single = 0.0;
    double p_set = 0.0;
    double p_abstain = 0.0;
};

// Tagged outcome of the abstention policy for one sample.
class Decision {
  public:
    enum class Kind { Single, Set, Abstain };

    static Decision single(int label) {
        Decision d;
        d.kind_ = Kind::Single;
        d.label_ = label;
        return d;
    }
    static Decision set(std::vector<int> labels) {
        if (labels.empty()) throw std::invalid_argument("Decision::set: empty label set");
        Decision d;
        d.kind_ = Kind::Set;
        d.labels_ = std::move(labels);
        return d;
    }
    static Decision abstain() { return Decision{}; }

    Kind kind() const { return kind_; }
    bool is_single() const { return kind_ == Kind::Single; }
    bool is_set() const { return kind_ == Kind::Set; }
    bool is_abstain() const { return kind_ == Kind::Abstain; }

    int label() const { return label_; }
    const std::vector<int>& labels() const { return labels_; }

    bool operator==(const Decision&) const = default;

  private:
    Kind kind_ = Kind::Abstain;
    int label_ = -1;
    std::vector<int> labels_;
};

struct PolicyConfig {
    // Sigmoid scale of the action probabilities; 50 gives a transition width
    // of roughly 0.1 in score units.
    double c = 50.0;
    SetRule set_rule = SetRule::Lac;
    // Which cutoff the set regime builds its set with; the looser abstain
    // threshold by default.
    SetThresholdSource set_threshold_source = SetThresholdSource::Abstain;
};

// q_predict at the (1 - alpha)-quantile and q_abstain at the (1 - beta)-
// quantile of the calibration scores, with beta := min(beta, alpha).
ThresholdPair compute_thresholds(const ScoreList& scores, double alpha, double beta);

// p_single = sigmoid(-c (s - q_predict)), p_abstain = sigmoid(c (s - q_abstain)),
// p_set = 1 - p_single - p_abstain clamped at 0 with the triple renormalized.
ActionDistribution action_probabilities(double score, const ThresholdPair& thresholds,
                                        const PolicyConfig& config);

// score < q_predict -> Single; q_predict <= score < q_abstain -> Set;
// score >= q_abstain -> Abstain. An all-inclusive threshold sits above the
// whole score range for these comparisons.
Regime decide_deterministic(double score, const ThresholdPair& thresholds);

// Categorical draw over the three regimes.
Regime decide_stochastic(const ActionDistribution& dist, std::mt19937_64& rng);

// Full per-sample decision: regime via decide_*, then Single -> argmax,
// Set -> the configured set constructor (never empty), Abstain -> Abstain.
// rng is only consumed in stochastic mode.
Decision predict(const ProbRecord& record, const ThresholdPair& thresholds,
                 const PolicyConfig& config, DecisionMode mode, std::mt19937_64& rng);

}  // namespace cap
