#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cap {

// One sample: class-probability vector on the simplex plus ground-truth
// label. Stands in for the softmax output of an upstream classifier.
struct ProbRecord {
    std::string id;
    std::vector<double> probs;
    int label = 0;

    bool operator==(const ProbRecord&) const = default;
};

struct RecordSet {
    std::vector<ProbRecord> records;
    int num_classes = 0;

    std::size_t size() const { return records.size(); }
    bool operator==(const RecordSet&) const = default;
};

struct SplitDataset {
    RecordSet calibration;
    RecordSet test;
    std::uint64_t seed = 0;
};

struct SyntheticSpec {
    std::size_t n = 0;
    int num_classes = 0;
    double temperature = 1.0;  // 1.0 = calibrated, >1 underconfident, <1 overconfident
    double label_noise = 0.0;
    std::uint64_t seed = 0;
};

// Probability rows must sum to 1 within this tolerance. Rows off by more
// than kSimplexRenormEps but within kSimplexTol are renormalized; rows
// within kSimplexRenormEps are kept bit-exact so generated files reload
// field-for-field.
inline constexpr double kSimplexTol = 1e-6;
inline constexpr double kSimplexRenormEps = 1e-12;

// Throws std::invalid_argument if any record violates the RecordSet
// invariants (shared K, unique ids, simplex rows, label in range).
void validate(const RecordSet& set);

// Reads JSON Lines records {"id": ..., "probs": [...], "label": ...}.
// A line may carry raw "logits" instead of "probs"; a numerically stable
// softmax is applied on load. Errors report the offending line number.
RecordSet load_records(const std::filesystem::path& path);

// Writes one JSON object per line, preserving record order.
void write_records(const RecordSet& set, const std::filesystem::path& path);

// Seeded uniform shuffle, then prefix/suffix split with
// |calibration| = floor(n * cal_fraction). Throws if either side is empty.
SplitDataset split(const RecordSet& records, double cal_fraction, std::uint64_t seed);

// Draws a latent class per sample, emits logits peaked on it (peak kPeak^2
// on the latent class plus kPeak-scaled unit Gaussian noise, so the softmax
// at temperature 1 is the exact Bayes posterior of the latent class), divides
// logits by the temperature, flips the label with probability label_noise,
// and softmaxes onto the simplex. Deterministic under spec.seed.
RecordSet generate_synthetic(const SyntheticSpec& spec);

// Class-separation strength of the synthetic generator; accuracy of argmax
// at K=6 lands around 0.85 with this value.
inline constexpr double kSyntheticPeak = 2.7;

}  // namespace cap
