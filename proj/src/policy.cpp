#include "cap/policy.hpp"

#include <algorithm>
#include <cmath>

namespace cap {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// An all-inclusive threshold sits above every score.
bool below(double score, const Threshold& t) {
    return t.all_inclusive || score < t.value;
}

}  // namespace

ThresholdPair compute_thresholds(const ScoreList& scores, double alpha, double beta) {
    if (!(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0 && beta < 1.0)) {
        throw std::invalid_argument("compute_thresholds: alpha and beta must be in (0, 1)");
    }
    // The abstain threshold must be the looser quantile.
    const double beta_eff = std::min(beta, alpha);
    std::vector<double> sorted = scores.scores;
    std::sort(sorted.begin(), sorted.end());
    ThresholdPair out;
    out.alpha = alpha;
    out.beta = beta_eff;
    out.q_predict = conformal_quantile_sorted(sorted, alpha);
    out.q_abstain = conformal_quantile_sorted(sorted, beta_eff);
    return out;
}

ActionDistribution action_probabilities(double score, const ThresholdPair& thresholds,
                                        const PolicyConfig& config) {
    ActionDistribution d;
    d.p_single = sigmoid(-config.c * (score - thresholds.q_predict.value));
    d.p_abstain = sigmoid(config.c * (score - thresholds.q_abstain.value));
    d.p_set = 1.0 - d.p_single - d.p_abstain;
    if (d.p_set < 0.0) {
        d.p_set = 0.0;
        const double mass = d.p_single + d.p_abstain;
        d.p_single /= mass;
        d.p_abstain /= mass;
    }
    return d;
}

Regime decide_deterministic(double score, const ThresholdPair& thresholds) {
    if (below(score, thresholds.q_predict)) return Regime::Single;
    if (below(score, thresholds.q_abstain)) return Regime::Set;
    return Regime::Abstain;
}

Regime decide_stochastic(const ActionDistribution& dist, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const double u = uniform(rng);
    if (u < dist.p_single) return Regime::Single;
    if (u < dist.p_single + dist.p_set) return Regime::Set;
    return Regime::Abstain;
}

Decision predict(const ProbRecord& record, const ThresholdPair& thresholds,
                 const PolicyConfig& config, DecisionMode mode, std::mt19937_64& rng) {
    const double score = test_score(record.probs);
    Regime regime;
    if (mode == DecisionMode::Deterministic) {
        regime = decide_deterministic(score, thresholds);
    } else {
        regime = decide_stochastic(action_probabilities(score, thresholds, config), rng);
    }
    switch (regime) {
        case Regime::Single:
            return Decision::single(argmax_class(record.probs));
        case Regime::Set: {
            const Threshold& t = config.set_threshold_source == SetThresholdSource::Abstain
                                     ? thresholds.q_abstain
                                     : thresholds.q_predict;
            auto labels = config.set_rule == SetRule::Lac ? lac_set(record.probs, t)
                                                          : aps_set(record.probs, t);
            return Decision::set(std::move(labels));
        }
        case Regime::Abstain:
            break;
    }
    return Decision::abstain();
}

}  // namespace cap
