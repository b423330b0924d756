#include "cap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cap {

namespace {

bool set_contains(const Decision& d, int label) {
    const auto& ls = d.labels();
    return std::find(ls.begin(), ls.end(), label) != ls.end();
}

// Answered = not abstained. Correct means exact match for a Single and
// truth-in-set for a Set.
bool answered_correct(const EvalOutcome& o) {
    if (o.decision.is_single()) return o.decision.label() == o.label;
    return set_contains(o.decision, o.label);
}

// Mean accuracy over every prefix of an already-ordered correctness vector.
double prefix_accuracy_mean(const std::vector<int>& ordered_correct) {
    const std::size_t n = ordered_correct.size();
    if (n == 0) return 0.0;
    double sum = 0.0;
    double hits = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        hits += ordered_correct[k];
        sum += hits / static_cast<double>(k + 1);
    }
    return sum / static_cast<double>(n);
}

// Indices sorted by descending confidence, ties by ascending input index.
std::vector<std::size_t> confidence_order(std::span<const double> confidences) {
    std::vector<std::size_t> order(confidences.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (confidences[a] != confidences[b]) return confidences[a] > confidences[b];
        return a < b;
    });
    return order;
}

}  // namespace

double fractional_accuracy(std::span<const EvalOutcome> outcomes) {
    if (outcomes.empty()) throw std::invalid_argument("fractional_accuracy: no outcomes");
    double sum = 0.0;
    std::size_t answered = 0;
    for (const EvalOutcome& o : outcomes) {
        if (o.decision.is_abstain()) continue;
        ++answered;
        if (o.decision.is_single()) {
            sum += o.decision.label() == o.label ? 1.0 : 0.0;
        } else if (set_contains(o.decision, o.label)) {
            sum += 1.0 / static_cast<double>(o.decision.labels().size());
        }
    }
    return answered == 0 ? 0.0 : sum / static_cast<double>(answered);
}

double eval_coverage(std::span<const EvalOutcome> outcomes) {
    if (outcomes.empty()) throw std::invalid_argument("eval_coverage: no outcomes");
    std::size_t covered = 0;
    for (const EvalOutcome& o : outcomes) {
        if (o.decision.is_abstain() || answered_correct(o)) ++covered;
    }
    return static_cast<double>(covered) / static_cast<double>(outcomes.size());
}

double avg_set_size(std::span<const EvalOutcome> outcomes) {
    double sum = 0.0;
    std::size_t sets = 0;
    for (const EvalOutcome& o : outcomes) {
        if (o.decision.is_set()) {
            sum += static_cast<double>(o.decision.labels().size());
            ++sets;
        }
    }
    return sets == 0 ? 0.0 : sum / static_cast<double>(sets);
}

std::optional<double> auroc(std::span<const double> confidences,
                            std::span<const int> correct) {
    if (confidences.size() != correct.size()) {
        throw std::invalid_argument("auroc: size mismatch");
    }
    const std::size_t n = confidences.size();
    std::size_t n_pos = 0;
    for (int c : correct) n_pos += c ? 1 : 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;

    // Rank-sum form of the Mann-Whitney statistic; average ranks on ties
    // reproduce the 0.5-per-tied-pair convention exactly (all quantities
    // are binary halves, so no rounding enters).
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return confidences[a] < confidences[b];
    });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && confidences[order[j]] == confidences[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t t = i; t < j; ++t) {
            if (correct[order[t]]) rank_sum_pos += avg_rank;
        }
        i = j;
    }
    const double u = rank_sum_pos -
                     static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auarc(std::span<const double> confidences, std::span<const int> correct) {
    if (confidences.size() != correct.size()) {
        throw std::invalid_argument("auarc: size mismatch");
    }
    if (confidences.empty()) throw std::invalid_argument("auarc: no samples");
    std::vector<int> ordered;
    ordered.reserve(confidences.size());
    for (std::size_t idx : confidence_order(confidences)) ordered.push_back(correct[idx]);
    return prefix_accuracy_mean(ordered);
}

double ece(std::span<const double> confidences, std::span<const int> correct, int n_bins) {
    if (confidences.size() != correct.size()) {
        throw std::invalid_argument("ece: size mismatch");
    }
    if (n_bins < 1) throw std::invalid_argument("ece: n_bins must be >= 1");
    if (confidences.empty()) throw std::invalid_argument("ece: no samples");

    const std::size_t n = confidences.size();
    std::vector<double> conf_sum(static_cast<std::size_t>(n_bins), 0.0);
    std::vector<double> hit_sum(static_cast<std::size_t>(n_bins), 0.0);
    std::vector<std::size_t> count(static_cast<std::size_t>(n_bins), 0);
    for (std::size_t i = 0; i < n; ++i) {
        auto b = static_cast<long>(confidences[i] * n_bins);
        b = std::clamp(b, 0L, static_cast<long>(n_bins - 1));  // last bin right-closed
        conf_sum[static_cast<std::size_t>(b)] += confidences[i];
        hit_sum[static_cast<std::size_t>(b)] += correct[i] ? 1.0 : 0.0;
        ++count[static_cast<std::size_t>(b)];
    }
    double out = 0.0;
    for (int b = 0; b < n_bins; ++b) {
        const auto bu = static_cast<std::size_t>(b);
        if (count[bu] == 0) continue;
        const auto m = static_cast<double>(count[bu]);
        out += (m / static_cast<double>(n)) * std::abs(hit_sum[bu] / m - conf_sum[bu] / m);
    }
    return out;
}

MetricsReport full_report(std::span<const EvalOutcome> outcomes, int n_bins,
                          std::string method) {
    if (outcomes.empty()) throw std::invalid_argument("full_report: no outcomes");
    MetricsReport r;
    r.method = std::move(method);
    r.n = static_cast<std::int64_t>(outcomes.size());
    r.accuracy = fractional_accuracy(outcomes);
    r.coverage = eval_coverage(outcomes);
    r.avg_set_size = avg_set_size(outcomes);

    std::vector<double> conf;
    std::vector<int> hit;
    std::size_t abstained = 0;
    for (const EvalOutcome& o : outcomes) {
        if (o.decision.is_abstain()) {
            ++abstained;
            continue;
        }
        conf.push_back(o.confidence);
        hit.push_back(answered_correct(o) ? 1 : 0);
    }
    r.abstention_rate = static_cast<double>(abstained) / static_cast<double>(outcomes.size());

    if (!conf.empty()) {
        r.auroc = auroc(conf, hit);
        r.ece = ece(conf, hit, n_bins);
    }
    // AUARC over all samples: answered ordered by confidence, abstentions
    // rejected first (appended last, counted incorrect).
    std::vector<int> ordered;
    ordered.reserve(outcomes.size());
    for (std::size_t idx : confidence_order(conf)) ordered.push_back(hit[idx]);
    ordered.insert(ordered.end(), abstained, 0);
    r.auarc = prefix_accuracy_mean(ordered);
    return r;
}

nlohmann::json report_to_json(const MetricsReport& report) {
    nlohmann::json j;
    j["method"] = report.method;
    j["n"] = report.n;
    j["accuracy"] = report.accuracy;
    j["coverage"] = report.coverage;
    j["avg_set_size"] = report.avg_set_size;
    j["abstention_rate"] = report.abstention_rate;
    j["auroc"] = report.auroc ? nlohmann::json(*report.auroc) : nlohmann::json(nullptr);
    j["auarc"] = report.auarc;
    j["ece"] = report.ece;
    return j;
}

MetricsReport report_from_json(const nlohmann::json& j) {
    MetricsReport r;
    r.method = j.at("method").get<std::string>();
    r.n = j.at("n").get<std::int64_t>();
    r.accuracy = j.at("accuracy").get<double>();
    r.coverage = j.at("coverage").get<double>();
    r.avg_set_size = j.at("avg_set_size").get<double>();
    r.abstention_rate = j.at("abstention_rate").get<double>();
    if (!j.at("auroc").is_null()) r.auroc = j.at("auroc").get<double>();
    r.auarc = j.at("auarc").get<double>();
    r.ece = j.at("ece").get<double>();
    return r;
}

const std::vector<std::string>& report_columns() {
    static const std::vector<std::string> cols = {
        "method", "n",     "accuracy", "coverage", "avg_set_size",
        "abstention_rate", "auroc",    "auarc",    "ece"};
    return cols;
}

}  // namespace cap
