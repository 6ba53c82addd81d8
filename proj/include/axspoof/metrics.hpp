#pragma once

#include <string>
#include <utility>
#include <vector>

#include "axspoof/tensor.hpp"

namespace axspoof::metrics {

struct ScoredEntry {
    std::string id;
    bool live = false;
    double score = 0.0;
};

using ScoredSet = std::vector<ScoredEntry>;

struct ErrorReport {
    double apcer = 0.0;  // spoof accepted as live, percent
    double bpcer = 0.0;  // live rejected, percent
    double acer = 0.0;   // (apcer + bpcer) / 2
    double hter = 0.0;   // (FRR + FAR) / 2 with FRR = bpcer, FAR = apcer
    double threshold = 0.0;
};

// score >= tau classifies live. Throws ContractError unless both classes are
// present.
ErrorReport rates_at_threshold(const ScoredSet& set, double tau);

// (FDR, TDR) staircase over every distinct score threshold plus the
// accept-none and accept-all endpoints, sorted by FDR.
std::vector<std::pair<double, double>> roc(const ScoredSet& set);

// Largest TDR among thresholds with FDR <= fdr_target.
double tdr_at_fdr(const ScoredSet& set, double fdr_target);

// Threshold with the smallest |APCER - BPCER| (ties: smaller ACER, then
// smaller threshold), scanned over midpoints between adjacent distinct scores.
double eer_threshold(const ScoredSet& set);

struct MapStats {
    Tensor mean{std::vector<int>{32, 32}};
    Tensor stddev{std::vector<int>{32, 32}};  // population std
    int count = 0;
};

struct FrontalMapStats {
    MapStats live, spoof;
};

// Per-pixel mean and std of frontalized feature maps, split by label.
// Throws ContractError when either class is empty.
FrontalMapStats frontal_map_stats(const std::vector<Tensor>& maps,
                                  const std::vector<bool>& live_labels);

struct ClassMse {
    double live = 0.0;
    double spoof = 0.0;
};

// Per-class mean squared error between aligned predictions and ground truth
// (per pixel for depth maps, per bin for spectra).
ClassMse estimation_mse(const std::vector<Tensor>& predictions,
                        const std::vector<Tensor>& ground_truth,
                        const std::vector<bool>& live_labels);

// Per-clip evidence for failure attribution: the two Eq.-6 energy terms.
struct SubScores {
    std::string id;
    bool live = false;
    double depth_term = 0.0;  // lambda * ||D^||_2^2
    double rppg_term = 0.0;   // ||f^||_2^2
};

struct FailureAttribution {
    int failures = 0;      // clips the fused score misclassifies at tau
    int depth_fail = 0;    // of those, the depth term alone also misclassifies
    int rppg_fail = 0;     // of those, the rPPG term alone also misclassifies
    int both_fail = 0;     // both terms misclassify
    int both_pass = 0;     // fused wrong although each term alone is right
    double depth_threshold = 0.0;
    double rppg_threshold = 0.0;
};

// Attributes fused-score failures at tau to the depth or rPPG term; each
// term's own threshold is calibrated at its equal-error point on this set.
FailureAttribution attribute_failures(const std::vector<SubScores>& clips, double tau);

}  // namespace axspoof::metrics
