#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cap/metrics.hpp"
#include "cap/policy.hpp"

namespace cap {

// Gaussian policy over (alpha, beta). bias holds
// (mu_alpha, mu_beta, log_sigma_alpha, log_sigma_beta); when weights is
// non-empty it is a row-major 4 x feature_dim affine map applied on top of
// the bias, so a zero map reproduces the state-independent default.
struct PolicyParams {
    std::array<double, 4> bias{0.10, 0.05, 0.0, 0.0};
    std::vector<double> weights;

    int feature_dim() const {
        return weights.empty() ? 0 : static_cast<int>(weights.size() / 4);
    }
    bool operator==(const PolicyParams&) const = default;
};

struct PolicyState {
    std::vector<double> features{1.0};
};

struct GaussianParams {
    double mu_alpha = 0.0;
    double sigma_alpha = 1.0;
    double mu_beta = 0.0;
    double sigma_beta = 1.0;
};

// One (alpha, beta) draw. log_prob is evaluated at the pre-clamp samples
// (standard clipped-Gaussian practice); alpha/beta are the clamped actions
// actually played.
struct ActionSample {
    double alpha = 0.0;
    double beta = 0.0;
    double alpha_raw = 0.0;
    double beta_raw = 0.0;
    double log_prob = 0.0;
};

struct CostWeights {
    double lambda_set_size = 0.05;
    double lambda_abstention = 0.1;
    double lambda_coverage = 0.1;
    double lambda_diversity = 0.05;
};

struct EpisodeResult {
    double accuracy = 0.0;
    double abstention_rate = 0.0;
    double avg_set_size = 0.0;
    double cost_coverage = 0.0;  // 1 - abstention_rate
    double diversity = 0.0;
    double cost = 0.0;
    double reward = 0.0;  // -cost
    std::array<std::int64_t, 3> regime_counts{0, 0, 0};  // single, set, abstain

    bool operator==(const EpisodeResult&) const = default;
};

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
};

enum class BaselineKind { None, MovingAverage };
enum class StateFeatures { Constant, ScoreSummary };

struct TrainConfig {
    int episodes = 500;
    double learning_rate = 1e-2;
    Interval alpha_box{0.01, 0.40};
    Interval beta_box{0.005, 0.40};
    std::uint64_t seed = 0;
    BaselineKind baseline = BaselineKind::None;
    int baseline_window = 20;
    DecisionMode mode = DecisionMode::Deterministic;
    int batch_size = 1;  // actions averaged per policy update
    StateFeatures state_features = StateFeatures::Constant;
    // Initialization centers the search at the 90% coverage operating point.
    double init_mu_alpha = 0.10;
    double init_mu_beta = 0.05;
    double init_sigma = 0.05;
};

struct TraceRow {
    int episode = 0;
    double alpha = 0.0;
    double beta = 0.0;
    double cost = 0.0;
    double reward = 0.0;
    std::int64_t n_single = 0;
    std::int64_t n_set = 0;
    std::int64_t n_abstain = 0;
};

struct TrainResult {
    PolicyParams params;
    std::vector<TraceRow> trace;
    // Forward outputs on the training state:
    // mu_alpha, mu_beta, log_sigma_alpha, log_sigma_beta.
    std::array<double, 4> final_outputs{0.0, 0.0, 0.0, 0.0};
    // Clamped means of the final policy: the greedy operating point.
    double greedy_alpha = 0.0;
    double greedy_beta = 0.0;
};

// (mu, sigma) pairs for alpha and beta: bias pass-through by default,
// bias + W * features when the affine map is present. Sigmas go through
// exp so they are positive by construction.
GaussianParams policy_forward(const PolicyParams& params, const PolicyState& state);

// Independent draws for alpha and beta; log_prob is the sum of the two
// Gaussian log-densities at the pre-clamp samples.
ActionSample sample_actions(const GaussianParams& gaussians, const Interval& alpha_box,
                            const Interval& beta_box, std::mt19937_64& rng);

// log N(x; mu, exp(log_sigma)^2) and its gradient wrt (mu, log_sigma).
double gaussian_log_density(double x, double mu, double log_sigma);
std::array<double, 2> gaussian_log_density_grad(double x, double mu, double log_sigma);

// Shannon entropy of the regime proportions, normalized by ln 3.
double diversity(const std::array<std::int64_t, 3>& regime_counts);

// C = (1 - acc) + l1 * avgSet + l2 * abstention - l3 * (1 - abstention)
//     - l4 * diversity
double cost(double accuracy, double avg_set_size, double abstention_rate,
            double diversity, const CostWeights& weights);

// Thresholds on the calibration side, a decision for every test sample,
// then the aggregate statistics and cost. rng is consumed only in
// stochastic mode.
EpisodeResult evaluate_episode(const SplitDataset& data, double alpha, double beta,
                               const PolicyConfig& config, const CostWeights& weights,
                               DecisionMode mode, std::mt19937_64& rng);

// params += lr * (reward - baseline_value) * grad log pi(sample | state).
// Gradients are analytic; throws on a non-finite gradient.
PolicyParams reinforce_update(const PolicyParams& params, const PolicyState& state,
                              const ActionSample& sample, double reward,
                              double baseline_value, double learning_rate);

// The 8 summary statistics of the calibration scores used as optional state
// features: mean, std, min, max, quartiles, and a constant 1.
PolicyState score_summary_state(const ScoreList& scores);

// The full REINFORCE loop: sample -> thresholds -> episode -> update, one
// trace row per sampled action. Deterministic under config.seed.
TrainResult train(const SplitDataset& data, const PolicyConfig& policy_config,
                  const CostWeights& weights, const TrainConfig& config);

// Serialized policy document {mu_alpha, mu_beta, log_sigma_alpha,
// log_sigma_beta, boxes, config_hash}; for an affine policy the values are
// the forward outputs on the training state.
nlohmann::json policy_to_json(const TrainResult& result, const TrainConfig& config);

struct LoadedPolicy {
    double alpha = 0.0;
    double beta = 0.0;
};
LoadedPolicy policy_from_json(const nlohmann::json& j);

// CSV schema: episode,alpha,beta,cost,reward,n_single,n_set,n_abstain
std::string trace_to_csv(const std::vector<TraceRow>& trace);

}  // namespace cap
