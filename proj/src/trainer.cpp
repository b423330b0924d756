#include "cap/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <numeric>
#include <stdexcept>

#include "cap/rng.hpp"

namespace cap {

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * ln(2 pi)

// Raw affine outputs (mu_alpha, mu_beta, log_sigma_alpha, log_sigma_beta);
// the exp that turns log-scales into sigmas happens in policy_forward.
std::array<double, 4> forward_raw(const PolicyParams& params, const PolicyState& state) {
    std::array<double, 4> out = params.bias;
    if (params.weights.empty()) return out;
    const auto dim = static_cast<std::size_t>(params.feature_dim());
    if (state.features.size() != dim) {
        throw std::invalid_argument("policy_forward: feature length " +
                                    std::to_string(state.features.size()) +
                                    " does not match params dimension " +
                                    std::to_string(dim));
    }
    for (std::size_t row = 0; row < 4; ++row) {
        double acc = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            acc += params.weights[row * dim + j] * state.features[j];
        }
        out[row] += acc;
    }
    return out;
}

// Gradient of log pi(sample) wrt the four raw outputs.
std::array<double, 4> log_prob_grad_outputs(const std::array<double, 4>& raw,
                                            const ActionSample& sample) {
    const auto ga = gaussian_log_density_grad(sample.alpha_raw, raw[0], raw[2]);
    const auto gb = gaussian_log_density_grad(sample.beta_raw, raw[1], raw[3]);
    return {ga[0], gb[0], ga[1], gb[1]};
}

double clamp_interval(double x, const Interval& box) { return std::clamp(x, box.lo, box.hi); }

double percentile(std::vector<double> sorted, double p) {
    const double x = p * static_cast<double>(sorted.size() - 1);
    const auto i = static_cast<std::size_t>(x);
    const auto j = std::min(i + 1, sorted.size() - 1);
    const double frac = x - static_cast<double>(i);
    return sorted[i] * (1.0 - frac) + sorted[j] * frac;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::uint64_t config_hash(const TrainConfig& c) {
    std::string s;
    s += "episodes=" + std::to_string(c.episodes);
    s += ";lr=" + format_double(c.learning_rate);
    s += ";alpha_box=" + format_double(c.alpha_box.lo) + "," + format_double(c.alpha_box.hi);
    s += ";beta_box=" + format_double(c.beta_box.lo) + "," + format_double(c.beta_box.hi);
    s += ";seed=" + std::to_string(c.seed);
    s += ";baseline=" + std::to_string(static_cast<int>(c.baseline));
    s += ";window=" + std::to_string(c.baseline_window);
    s += ";mode=" + std::to_string(static_cast<int>(c.mode));
    s += ";batch=" + std::to_string(c.batch_size);
    s += ";features=" + std::to_string(static_cast<int>(c.state_features));
    s += ";init=" + format_double(c.init_mu_alpha) + "," + format_double(c.init_mu_beta) +
         "," + format_double(c.init_sigma);
    return fnv1a64(s);
}

}  // namespace

GaussianParams policy_forward(const PolicyParams& params, const PolicyState& state) {
    const auto raw = forward_raw(params, state);
    return GaussianParams{raw[0], std::exp(raw[2]), raw[1], std::exp(raw[3])};
}

ActionSample sample_actions(const GaussianParams& gaussians, const Interval& alpha_box,
                            const Interval& beta_box, std::mt19937_64& rng) {
    if (!(gaussians.sigma_alpha > 0.0 && gaussians.sigma_beta > 0.0)) {
        throw std::invalid_argument("sample_actions: sigmas must be positive");
    }
    std::normal_distribution<double> unit(0.0, 1.0);
    ActionSample s;
    s.alpha_raw = gaussians.mu_alpha + gaussians.sigma_alpha * unit(rng);
    s.beta_raw = gaussians.mu_beta + gaussians.sigma_beta * unit(rng);
    s.log_prob =
        gaussian_log_density(s.alpha_raw, gaussians.mu_alpha, std::log(gaussians.sigma_alpha)) +
        gaussian_log_density(s.beta_raw, gaussians.mu_beta, std::log(gaussians.sigma_beta));
    s.alpha = clamp_interval(s.alpha_raw, alpha_box);
    s.beta = clamp_interval(s.beta_raw, beta_box);
    return s;
}

double gaussian_log_density(double x, double mu, double log_sigma) {
    const double z = (x - mu) * std::exp(-log_sigma);
    return -kHalfLog2Pi - log_sigma - 0.5 * z * z;
}

std::array<double, 2> gaussian_log_density_grad(double x, double mu, double log_sigma) {
    const double inv_sigma = std::exp(-log_sigma);
    const double z = (x - mu) * inv_sigma;
    return {z * inv_sigma, z * z - 1.0};
}

double diversity(const std::array<std::int64_t, 3>& regime_counts) {
    const std::int64_t total = regime_counts[0] + regime_counts[1] + regime_counts[2];
    if (total <= 0) throw std::invalid_argument("diversity: counts must sum to >= 1");
    double entropy = 0.0;
    for (std::int64_t c : regime_counts) {
        if (c == 0) continue;  // 0 ln 0 := 0
        const double p = static_cast<double>(c) / static_cast<double>(total);
        entropy -= p * std::log(p);
    }
    return entropy / std::log(3.0);
}

double cost(double accuracy, double avg_set_size, double abstention_rate,
            double diversity, const CostWeights& weights) {
    const double coverage = 1.0 - abstention_rate;
    return (1.0 - accuracy) + weights.lambda_set_size * avg_set_size +
           weights.lambda_abstention * abstention_rate -
           weights.lambda_coverage * coverage - weights.lambda_diversity * diversity;
}

EpisodeResult evaluate_episode(const SplitDataset& data, double alpha, double beta,
                               const PolicyConfig& config, const CostWeights& weights,
                               DecisionMode mode, std::mt19937_64& rng) {
    const ScoreList scores = calibration_scores(data.calibration);
    const ThresholdPair thresholds = compute_thresholds(scores, alpha, beta);

    std::vector<EvalOutcome> outcomes;
    outcomes.reserve(data.test.size());
    EpisodeResult r;
    for (const ProbRecord& rec : data.test.records) {
        Decision d = predict(rec, thresholds, config, mode, rng);
        switch (d.kind()) {
            case Decision::Kind::Single: ++r.regime_counts[0]; break;
            case Decision::Kind::Set: ++r.regime_counts[1]; break;
            case Decision::Kind::Abstain: ++r.regime_counts[2]; break;
        }
        outcomes.push_back(EvalOutcome{std::move(d), rec.label, 1.0 - test_score(rec.probs)});
    }
    r.accuracy = fractional_accuracy(outcomes);
    r.abstention_rate =
        static_cast<double>(r.regime_counts[2]) / static_cast<double>(outcomes.size());
    r.cost_coverage = 1.0 - r.abstention_rate;
    r.avg_set_size = avg_set_size(outcomes);
    r.diversity = diversity(r.regime_counts);
    r.cost = cost(r.accuracy, r.avg_set_size, r.abstention_rate, r.diversity, weights);
    r.reward = -r.cost;
    return r;
}

PolicyParams reinforce_update(const PolicyParams& params, const PolicyState& state,
                              const ActionSample& sample, double reward,
                              double baseline_value, double learning_rate) {
    const auto raw = forward_raw(params, state);
    const auto grad = log_prob_grad_outputs(raw, sample);
    const double advantage = reward - baseline_value;
    for (double g : grad) {
        if (!std::isfinite(g * advantage)) {
            throw std::runtime_error("reinforce_update: non-finite gradient");
        }
    }
    PolicyParams out = params;
    for (std::size_t i = 0; i < 4; ++i) {
        out.bias[i] += learning_rate * advantage * grad[i];
    }
    if (!out.weights.empty()) {
        const auto dim = static_cast<std::size_t>(params.feature_dim());
        for (std::size_t i = 0; i < 4; ++i) {
            for (std::size_t j = 0; j < dim; ++j) {
                out.weights[i * dim + j] +=
                    learning_rate * advantage * grad[i] * state.features[j];
            }
        }
    }
    return out;
}

PolicyState score_summary_state(const ScoreList& scores) {
    std::vector<double> sorted = scores.scores;
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<double>(sorted.size());
    const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / n;
    double var = 0.0;
    for (double s : sorted) var += (s - mean) * (s - mean);
    var /= n;
    PolicyState state;
    state.features = {mean,
                      std::sqrt(var),
                      sorted.front(),
                      sorted.back(),
                      percentile(sorted, 0.25),
                      percentile(sorted, 0.50),
                      percentile(sorted, 0.75),
                      1.0};
    return state;
}

TrainResult train(const SplitDataset& data, const PolicyConfig& policy_config,
                  const CostWeights& weights, const TrainConfig& config) {
    if (config.episodes < 0) throw std::invalid_argument("train: episodes must be >= 0");
    if (config.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (!(config.alpha_box.lo < config.alpha_box.hi) ||
        !(config.beta_box.lo < config.beta_box.hi)) {
        throw std::invalid_argument("train: degenerate action box");
    }

    PolicyState state;
    PolicyParams params;
    params.bias = {config.init_mu_alpha, config.init_mu_beta,
                   std::log(config.init_sigma), std::log(config.init_sigma)};
    if (config.state_features == StateFeatures::ScoreSummary) {
        state = score_summary_state(calibration_scores(data.calibration));
        params.weights.assign(4 * state.features.size(), 0.0);
    }

    std::mt19937_64 action_rng(derive_seed(config.seed, "policy"));
    std::deque<double> reward_history;

    TrainResult result;
    for (int episode = 0; episode < config.episodes; ++episode) {
        double baseline_value = 0.0;
        if (config.baseline == BaselineKind::MovingAverage && !reward_history.empty()) {
            baseline_value =
                std::accumulate(reward_history.begin(), reward_history.end(), 0.0) /
                static_cast<double>(reward_history.size());
        }

        // The whole batch is sampled and evaluated at the current params;
        // the averaged update is applied once afterwards.
        const auto raw = forward_raw(params, state);
        const GaussianParams gaussians{raw[0], std::exp(raw[2]), raw[1], std::exp(raw[3])};
        std::array<double, 4> grad_acc{0.0, 0.0, 0.0, 0.0};
        std::vector<double> batch_rewards;
        for (int b = 0; b < config.batch_size; ++b) {
            const ActionSample sample =
                sample_actions(gaussians, config.alpha_box, config.beta_box, action_rng);
            const std::uint64_t action_index =
                static_cast<std::uint64_t>(episode) *
                    static_cast<std::uint64_t>(config.batch_size) +
                static_cast<std::uint64_t>(b);
            std::mt19937_64 decision_rng(derive_seed(config.seed, "decisions", action_index));
            const EpisodeResult ep = evaluate_episode(data, sample.alpha, sample.beta,
                                                      policy_config, weights, config.mode,
                                                      decision_rng);
            result.trace.push_back(TraceRow{episode, sample.alpha, sample.beta, ep.cost,
                                            ep.reward, ep.regime_counts[0],
                                            ep.regime_counts[1], ep.regime_counts[2]});
            const auto g = log_prob_grad_outputs(raw, sample);
            const double advantage = ep.reward - baseline_value;
            for (std::size_t i = 0; i < 4; ++i) {
                if (!std::isfinite(g[i] * advantage)) {
                    throw std::runtime_error("train: non-finite gradient at episode " +
                                             std::to_string(episode));
                }
                grad_acc[i] += advantage * g[i] / static_cast<double>(config.batch_size);
            }
            batch_rewards.push_back(ep.reward);
        }

        for (std::size_t i = 0; i < 4; ++i) {
            params.bias[i] += config.learning_rate * grad_acc[i];
        }
        if (!params.weights.empty()) {
            // grad wrt W[i][j] is grad_out[i] * feature[j], so the averaged
            // output gradient distributes over the feature vector.
            const auto dim = static_cast<std::size_t>(params.feature_dim());
            for (std::size_t i = 0; i < 4; ++i) {
                for (std::size_t j = 0; j < dim; ++j) {
                    params.weights[i * dim + j] +=
                        config.learning_rate * grad_acc[i] * state.features[j];
                }
            }
        }

        for (double rw : batch_rewards) {
            reward_history.push_back(rw);
            while (static_cast<int>(reward_history.size()) > config.baseline_window) {
                reward_history.pop_front();
            }
        }
    }

    result.params = params;
    result.final_outputs = forward_raw(params, state);
    result.greedy_alpha = clamp_interval(result.final_outputs[0], config.alpha_box);
    result.greedy_beta = clamp_interval(result.final_outputs[1], config.beta_box);
    return result;
}

nlohmann::json policy_to_json(const TrainResult& result, const TrainConfig& config) {
    nlohmann::json j;
    j["mu_alpha"] = result.final_outputs[0];
    j["mu_beta"] = result.final_outputs[1];
    j["log_sigma_alpha"] = result.final_outputs[2];
    j["log_sigma_beta"] = result.final_outputs[3];
    j["boxes"] = {{"alpha", {config.alpha_box.lo, config.alpha_box.hi}},
                  {"beta", {config.beta_box.lo, config.beta_box.hi}}};
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(config_hash(config)));
    j["config_hash"] = buf;
    return j;
}

LoadedPolicy policy_from_json(const nlohmann::json& j) {
    const auto alpha_box = j.at("boxes").at("alpha").get<std::vector<double>>();
    const auto beta_box = j.at("boxes").at("beta").get<std::vector<double>>();
    if (alpha_box.size() != 2 || beta_box.size() != 2) {
        throw std::invalid_argument("policy_from_json: malformed boxes");
    }
    LoadedPolicy p;
    p.alpha = std::clamp(j.at("mu_alpha").get<double>(), alpha_box[0], alpha_box[1]);
    p.beta = std::clamp(j.at("mu_beta").get<double>(), beta_box[0], beta_box[1]);
    return p;
}

std::string trace_to_csv(const std::vector<TraceRow>& trace) {
    std::string out = "episode,alpha,beta,cost,reward,n_single,n_set,n_abstain\n";
    for (const TraceRow& row : trace) {
        out += std::to_string(row.episode);
        out += ',' + format_double(row.alpha);
        out += ',' + format_double(row.beta);
        out += ',' + format_double(row.cost);
        out += ',' + format_double(row.reward);
        out += ',' + std::to_string(row.n_single);
        out += ',' + std::to_string(row.n_set);
        out += ',' + std::to_string(row.n_abstain);
        out += '\n';
    }
    return out;
}

}  // namespace cap
