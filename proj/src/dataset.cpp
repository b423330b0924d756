#include "cap/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "json.hpp"

#include "cap/rng.hpp"

namespace cap {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

std::string line_tag(const std::filesystem::path& path, std::size_t line_no) {
    return path.string() + ":" + std::to_string(line_no);
}

// Subtract-max softmax; safe for arbitrarily large logits.
std::vector<double> stable_softmax(const std::vector<double>& logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

// Validates one probability row, renormalizing when the sum is off by more
// than float noise but within the simplex tolerance.
void check_row(std::vector<double>& probs, int label, const std::string& where) {
    if (probs.size() < 2) fail(where + ": need at least 2 classes");
    for (double p : probs) {
        if (!(p >= 0.0 && p <= 1.0)) {
            fail(where + ": probability " + std::to_string(p) + " outside [0, 1]");
        }
    }
    const double sum = std::accumulate(probs.begin(), probs.end(), 0.0);
    if (std::abs(sum - 1.0) > kSimplexTol) {
        fail(where + ": probabilities sum to " + std::to_string(sum) +
             ", outside the simplex tolerance");
    }
    if (std::abs(sum - 1.0) > kSimplexRenormEps) {
        for (double& p : probs) p /= sum;
    }
    if (label < 0 || static_cast<std::size_t>(label) >= probs.size()) {
        fail(where + ": label " + std::to_string(label) + " out of range");
    }
}

}  // namespace

void validate(const RecordSet& set) {
    if (set.num_classes < 2) fail("RecordSet: num_classes must be >= 2");
    std::unordered_set<std::string> seen;
    seen.reserve(set.records.size());
    for (const ProbRecord& r : set.records) {
        if (static_cast<int>(r.probs.size()) != set.num_classes) {
            fail("record '" + r.id + "': expected " + std::to_string(set.num_classes) +
                 " classes, got " + std::to_string(r.probs.size()));
        }
        std::vector<double> copy = r.probs;
        check_row(copy, r.label, "record '" + r.id + "'");
        if (!seen.insert(r.id).second) fail("duplicate record id '" + r.id + "'");
    }
}

RecordSet load_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open " + path.string());

    RecordSet set;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            fail(line_tag(path, line_no) + ": " + e.what());
        }
        ProbRecord rec;
        const std::string where = line_tag(path, line_no);
        try {
            rec.id = j.at("id").get<std::string>();
            rec.label = j.at("label").get<int>();
            if (j.contains("probs")) {
                rec.probs = j.at("probs").get<std::vector<double>>();
            } else if (j.contains("logits")) {
                rec.probs = stable_softmax(j.at("logits").get<std::vector<double>>());
            } else {
                fail(where + ": record has neither 'probs' nor 'logits'");
            }
        } catch (const json::exception& e) {
            fail(where + ": " + e.what());
        }
        check_row(rec.probs, rec.label, where);
        if (!seen.insert(rec.id).second) fail(where + ": duplicate id '" + rec.id + "'");
        if (set.records.empty()) {
            set.num_classes = static_cast<int>(rec.probs.size());
        } else if (static_cast<int>(rec.probs.size()) != set.num_classes) {
            fail(where + ": expected " + std::to_string(set.num_classes) +
                 " classes, got " + std::to_string(rec.probs.size()));
        }
        set.records.push_back(std::move(rec));
    }
    if (set.records.empty()) fail(path.string() + ": no records");
    return set;
}

void write_records(const RecordSet& set, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const ProbRecord& r : set.records) {
        json j;
        j["id"] = r.id;
        j["probs"] = r.probs;
        j["label"] = r.label;
        out << j.dump() << '\n';
    }
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

SplitDataset split(const RecordSet& records, double cal_fraction, std::uint64_t seed) {
    if (!(cal_fraction > 0.0 && cal_fraction < 1.0)) {
        fail("split: cal_fraction must be in (0, 1)");
    }
    const std::size_t n = records.size();
    const auto n_cal = static_cast<std::size_t>(static_cast<double>(n) * cal_fraction);
    if (n_cal == 0) fail("split: calibration side is empty");
    if (n_cal >= n) fail("split: test side is empty");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    SplitDataset out;
    out.seed = seed;
    out.calibration.num_classes = records.num_classes;
    out.test.num_classes = records.num_classes;
    out.calibration.records.reserve(n_cal);
    out.test.records.reserve(n - n_cal);
    for (std::size_t i = 0; i < n; ++i) {
        auto& side = (i < n_cal) ? out.calibration : out.test;
        side.records.push_back(records.records[order[i]]);
    }
    return out;
}

RecordSet generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n < 2) fail("generate_synthetic: n must be >= 2");
    if (spec.num_classes < 2) fail("generate_synthetic: num_classes must be >= 2");
    if (!(spec.temperature > 0.0)) fail("generate_synthetic: temperature must be > 0");
    if (spec.label_noise < 0.0 || spec.label_noise > 1.0) {
        fail("generate_synthetic: label_noise must be in [0, 1]");
    }

    const int k = spec.num_classes;
    std::mt19937_64 rng(spec.seed);
    std::uniform_int_distribution<int> pick_class(0, k - 1);
    std::uniform_int_distribution<int> pick_offset(1, k - 1);
    std::normal_distribution<double> unit_normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit_uniform(0.0, 1.0);

    RecordSet set;
    set.num_classes = k;
    set.records.reserve(spec.n);
    // Fixed draw order per sample: latent class, K logit noises, flip
    // uniform, then (only on a flip) the replacement offset.
    for (std::size_t i = 0; i < spec.n; ++i) {
        const int latent = pick_class(rng);
        std::vector<double> logits(k);
        for (int c = 0; c < k; ++c) {
            logits[c] = kSyntheticPeak * unit_normal(rng);
        }
        logits[latent] += kSyntheticPeak * kSyntheticPeak;
        for (double& l : logits) l /= spec.temperature;

        int label = latent;
        if (unit_uniform(rng) < spec.label_noise) {
            label = (latent + pick_offset(rng)) % k;
        }

        ProbRecord rec;
        rec.id = "s" + std::to_string(i);
        rec.probs = stable_softmax(logits);
        rec.label = label;
        set.records.push_back(std::move(rec));
    }
    return set;
}

}  // namespace cap
