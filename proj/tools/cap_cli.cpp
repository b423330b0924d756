// Command-line front end: synthetic data generation, LAC/APS/CAP
// evaluation, policy training, and report tables.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cap/conformal.hpp"
#include "cap/dataset.hpp"
#include "cap/metrics.hpp"
#include "cap/policy.hpp"
#include "cap/rng.hpp"
#include "cap/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// All file outputs go through a temp-then-rename so a failed run never
// leaves a partial file behind.
void write_file_atomic(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        out << content;
        if (!out) throw std::runtime_error("write failed for " + path.string());
    }
    fs::rename(tmp, path);
}

std::string records_to_jsonl(const cap::RecordSet& set) {
    std::string out;
    for (const cap::ProbRecord& r : set.records) {
        json j;
        j["id"] = r.id;
        j["probs"] = r.probs;
        j["label"] = r.label;
        out += j.dump();
        out += '\n';
    }
    return out;
}

cap::SetRule parse_set_rule(const std::string& s) {
    if (s == "lac") return cap::SetRule::Lac;
    if (s == "aps") return cap::SetRule::Aps;
    throw CLI::ValidationError("--set-rule", "expected lac or aps");
}

cap::DecisionMode parse_mode(const std::string& s) {
    if (s == "deterministic") return cap::DecisionMode::Deterministic;
    if (s == "stochastic") return cap::DecisionMode::Stochastic;
    throw CLI::ValidationError("--mode", "expected deterministic or stochastic");
}

std::string format_cell(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string report_cell(const cap::MetricsReport& r, const std::string& col, bool markdown) {
    if (col == "method") return r.method;
    if (col == "n") return std::to_string(r.n);
    double v = 0.0;
    if (col == "accuracy") v = r.accuracy;
    else if (col == "coverage") v = r.coverage;
    else if (col == "avg_set_size") v = r.avg_set_size;
    else if (col == "abstention_rate") v = r.abstention_rate;
    else if (col == "auarc") v = r.auarc;
    else if (col == "ece") v = r.ece;
    else if (col == "auroc") {
        if (!r.auroc) return "NA";
        v = *r.auroc;
    }
    if (markdown) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4f", v);
        return buf;
    }
    return format_cell(v);
}

int cmd_gen(const cap::SyntheticSpec& spec, const std::string& out_path) {
    const cap::RecordSet set = cap::generate_synthetic(spec);
    write_file_atomic(out_path, records_to_jsonl(set));
    std::cout << set.size() << " records -> " << out_path << "\n";
    return 0;
}

struct EvalOptions {
    std::string data_path;
    std::string method = "cap";
    double alpha = 0.1;
    double beta = 0.05;
    double cal_fraction = 0.5;
    std::uint64_t seed = 0;
    std::string mode = "deterministic";
    std::string set_rule = "lac";
    std::string set_threshold_source = "abstain";
    double c = 50.0;
    int n_bins = 10;
    std::string policy_path;
    std::string out_path;
};

int cmd_eval(const EvalOptions& opt) {
    const cap::RecordSet records = cap::load_records(opt.data_path);
    const cap::SplitDataset data =
        cap::split(records, opt.cal_fraction, cap::derive_seed(opt.seed, "split"));

    double alpha = opt.alpha;
    double beta = opt.beta;
    if (!opt.policy_path.empty()) {
        std::ifstream in(opt.policy_path);
        if (!in) throw std::runtime_error("cannot open " + opt.policy_path);
        const cap::LoadedPolicy p = cap::policy_from_json(json::parse(in));
        alpha = p.alpha;
        beta = p.beta;
    }

    std::vector<cap::EvalOutcome> outcomes;
    outcomes.reserve(data.test.size());
    if (opt.method == "lac" || opt.method == "aps") {
        // Each baseline calibrates on its own score function.
        const cap::ScoreList scores = opt.method == "lac"
                                          ? cap::calibration_scores(data.calibration)
                                          : cap::aps_calibration_scores(data.calibration);
        const cap::Threshold q = cap::conformal_quantile(scores, alpha);
        for (const cap::ProbRecord& rec : data.test.records) {
            auto labels = opt.method == "lac" ? cap::lac_set(rec.probs, q)
                                              : cap::aps_set(rec.probs, q);
            outcomes.push_back(cap::EvalOutcome{cap::Decision::set(std::move(labels)),
                                                rec.label, 1.0 - cap::test_score(rec.probs)});
        }
    } else if (opt.method == "cap") {
        const cap::ScoreList scores = cap::calibration_scores(data.calibration);
        cap::PolicyConfig config;
        config.c = opt.c;
        config.set_rule = parse_set_rule(opt.set_rule);
        config.set_threshold_source = opt.set_threshold_source == "predict"
                                          ? cap::SetThresholdSource::Predict
                                          : cap::SetThresholdSource::Abstain;
        const cap::ThresholdPair thresholds = cap::compute_thresholds(scores, alpha, beta);
        const cap::DecisionMode mode = parse_mode(opt.mode);
        std::mt19937_64 rng(cap::derive_seed(opt.seed, "decisions"));
        for (const cap::ProbRecord& rec : data.test.records) {
            outcomes.push_back(cap::EvalOutcome{cap::predict(rec, thresholds, config, mode, rng),
                                                rec.label, 1.0 - cap::test_score(rec.probs)});
        }
    } else {
        throw CLI::ValidationError("--method", "expected lac, aps, or cap");
    }

    const cap::MetricsReport report = cap::full_report(outcomes, opt.n_bins, opt.method);
    const std::string body = cap::report_to_json(report).dump(2) + "\n";
    if (!opt.out_path.empty()) write_file_atomic(opt.out_path, body);
    std::cout << body;
    return 0;
}

struct TrainOptions {
    std::string data_path;
    double cal_fraction = 0.5;
    cap::TrainConfig train;
    std::string mode = "deterministic";
    std::string set_rule = "lac";
    std::string set_threshold_source = "abstain";
    std::string baseline = "none";
    std::string state_features = "constant";
    double c = 50.0;
    cap::CostWeights weights;
    std::string out_policy;
    std::string out_trace;
};

int cmd_train(const TrainOptions& opt) {
    const cap::RecordSet records = cap::load_records(opt.data_path);
    const cap::SplitDataset data =
        cap::split(records, opt.cal_fraction, cap::derive_seed(opt.train.seed, "split"));

    cap::PolicyConfig config;
    config.c = opt.c;
    config.set_rule = parse_set_rule(opt.set_rule);
    config.set_threshold_source = opt.set_threshold_source == "predict"
                                      ? cap::SetThresholdSource::Predict
                                      : cap::SetThresholdSource::Abstain;

    cap::TrainConfig tc = opt.train;
    tc.mode = parse_mode(opt.mode);
    if (opt.baseline == "none") {
        tc.baseline = cap::BaselineKind::None;
    } else if (opt.baseline == "moving_average") {
        tc.baseline = cap::BaselineKind::MovingAverage;
    } else {
        throw CLI::ValidationError("--baseline", "expected none or moving_average");
    }
    if (opt.state_features == "constant") {
        tc.state_features = cap::StateFeatures::Constant;
    } else if (opt.state_features == "score_summary") {
        tc.state_features = cap::StateFeatures::ScoreSummary;
    } else {
        throw CLI::ValidationError("--state-features", "expected constant or score_summary");
    }

    const cap::TrainResult result = cap::train(data, config, opt.weights, tc);

    if (!opt.out_policy.empty()) {
        write_file_atomic(opt.out_policy, cap::policy_to_json(result, tc).dump(2) + "\n");
    }
    if (!opt.out_trace.empty()) {
        write_file_atomic(opt.out_trace, cap::trace_to_csv(result.trace));
    }

    std::mt19937_64 rng(cap::derive_seed(tc.seed, "greedy"));
    const cap::EpisodeResult greedy =
        cap::evaluate_episode(data, result.greedy_alpha, result.greedy_beta, config,
                              opt.weights, cap::DecisionMode::Deterministic, rng);
    std::cout << "alpha_hat=" << format_cell(result.greedy_alpha)
              << " beta_hat=" << format_cell(result.greedy_beta)
              << " greedy_cost=" << format_cell(greedy.cost) << "\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& format,
               const std::string& out_path) {
    if (format != "csv" && format != "md") {
        throw CLI::ValidationError("--format", "expected csv or md");
    }
    std::vector<cap::MetricsReport> reports;
    for (const std::string& path : inputs) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open " + path);
        reports.push_back(cap::report_from_json(json::parse(in)));
    }

    const auto& cols = cap::report_columns();
    std::string out;
    const bool markdown = format == "md";
    if (markdown) {
        out += "|";
        for (const auto& c : cols) out += " " + c + " |";
        out += "\n|";
        for (std::size_t i = 0; i < cols.size(); ++i) out += " --- |";
        out += "\n";
        for (const auto& r : reports) {
            out += "|";
            for (const auto& c : cols) out += " " + report_cell(r, c, true) + " |";
            out += "\n";
        }
    } else {
        for (std::size_t i = 0; i < cols.size(); ++i) {
            out += (i ? "," : "") + cols[i];
        }
        out += "\n";
        for (const auto& r : reports) {
            for (std::size_t i = 0; i < cols.size(); ++i) {
                out += (i ? "," : "") + report_cell(r, cols[i], false);
            }
            out += "\n";
        }
    }
    if (!out_path.empty()) {
        write_file_atomic(out_path, out);
    } else {
        std::cout << out;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conformal abstention policy toolkit"};
    app.require_subcommand(1);

    // gen
    cap::SyntheticSpec spec;
    spec.n = 1000;
    spec.num_classes = 6;
    std::string gen_out = "data.jsonl";
    auto* gen = app.add_subcommand("gen", "Generate synthetic probability records");
    gen->add_option("--n", spec.n, "Sample count (>= 2)");
    gen->add_option("--classes", spec.num_classes, "Number of classes (>= 2)");
    gen->add_option("--temperature", spec.temperature, "Softmax temperature; 1.0 = calibrated");
    gen->add_option("--noise", spec.label_noise, "Label flip probability");
    gen->add_option("--seed", spec.seed, "Master seed");
    gen->add_option("--out", gen_out, "Output JSONL path")->required();

    // eval
    EvalOptions eo;
    auto* eval = app.add_subcommand("eval", "Evaluate LAC, APS, or CAP on a dataset");
    eval->add_option("--data", eo.data_path, "Input JSONL")->required();
    eval->add_option("--method", eo.method, "lac | aps | cap");
    eval->add_option("--alpha", eo.alpha, "Miscoverage level");
    eval->add_option("--beta", eo.beta, "Abstention level (cap)");
    eval->add_option("--cal-fraction", eo.cal_fraction, "Calibration fraction of the split");
    eval->add_option("--seed", eo.seed, "Master seed");
    eval->add_option("--mode", eo.mode, "deterministic | stochastic (cap)");
    eval->add_option("--set-rule", eo.set_rule, "lac | aps set constructor (cap)");
    eval->add_option("--set-threshold-source", eo.set_threshold_source,
                     "abstain | predict (cap)");
    eval->add_option("--c", eo.c, "Sigmoid scale (cap)");
    eval->add_option("--bins", eo.n_bins, "ECE bin count");
    eval->add_option("--policy", eo.policy_path, "Trained policy JSON (overrides alpha/beta)");
    eval->add_option("--out", eo.out_path, "Report JSON path");

    // train
    TrainOptions to;
    auto* train = app.add_subcommand("train", "Train the abstention policy with REINFORCE");
    train->add_option("--data", to.data_path, "Input JSONL")->required();
    train->add_option("--cal-fraction", to.cal_fraction, "Calibration fraction of the split");
    train->add_option("--episodes", to.train.episodes, "Training episodes");
    train->add_option("--lr", to.train.learning_rate, "Learning rate");
    train->add_option("--seed", to.train.seed, "Master seed");
    train->add_option("--batch", to.train.batch_size, "Actions per policy update");
    train->add_option("--baseline", to.baseline, "none | moving_average");
    train->add_option("--baseline-window", to.train.baseline_window, "Moving average window");
    train->add_option("--mode", to.mode, "Episode decision mode");
    train->add_option("--set-rule", to.set_rule, "lac | aps set constructor");
    train->add_option("--set-threshold-source", to.set_threshold_source,
                      "abstain | predict");
    train->add_option("--state-features", to.state_features,
                      "constant | score_summary policy state");
    train->add_option("--c", to.c, "Sigmoid scale");
    train->add_option("--lambda-set", to.weights.lambda_set_size, "Set size weight");
    train->add_option("--lambda-abstain", to.weights.lambda_abstention, "Abstention weight");
    train->add_option("--lambda-coverage", to.weights.lambda_coverage, "Coverage weight");
    train->add_option("--lambda-diversity", to.weights.lambda_diversity, "Diversity weight");
    train->add_option("--alpha-lo", to.train.alpha_box.lo, "Alpha box lower edge");
    train->add_option("--alpha-hi", to.train.alpha_box.hi, "Alpha box upper edge");
    train->add_option("--beta-lo", to.train.beta_box.lo, "Beta box lower edge");
    train->add_option("--beta-hi", to.train.beta_box.hi, "Beta box upper edge");
    train->add_option("--out-policy", to.out_policy, "Policy JSON path");
    train->add_option("--out-trace", to.out_trace, "Trace CSV path");

    // report
    std::vector<std::string> report_inputs;
    std::string report_format = "csv";
    std::string report_out;
    auto* report = app.add_subcommand("report", "Merge report JSONs into a table");
    report->add_option("inputs", report_inputs, "MetricsReport JSON files")->required();
    report->add_option("--format", report_format, "csv | md");
    report->add_option("--out", report_out, "Output path (stdout when omitted)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen(spec, gen_out);
        if (eval->parsed()) return cmd_eval(eo);
        if (train->parsed()) return cmd_train(to);
        if (report->parsed()) return cmd_report(report_inputs, report_format, report_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
