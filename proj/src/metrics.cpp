#include "axspoof/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "axspoof/common.hpp"

namespace axspoof::metrics {

namespace {

void check_two_classes(const ScoredSet& set) {
    bool has_live = false, has_spoof = false;
    for (const ScoredEntry& e : set) (e.live ? has_live : has_spoof) = true;
    if (!has_live || !has_spoof)
        throw ContractError("metrics: need at least one live and one spoof entry");
}

// Candidate thresholds: below everything, between adjacent distinct scores,
// above everything.
std::vector<double> candidate_thresholds(const ScoredSet& set) {
    std::set<double> distinct;
    for (const ScoredEntry& e : set) distinct.insert(e.score);
    std::vector<double> s(distinct.begin(), distinct.end());
    std::vector<double> taus;
    taus.push_back(s.front() - 1.0);
    for (std::size_t i = 0; i + 1 < s.size(); ++i) taus.push_back(0.5 * (s[i] + s[i + 1]));
    taus.push_back(s.back() + 1.0);
    return taus;
}

}  // namespace

ErrorReport rates_at_threshold(const ScoredSet& set, double tau) {
    if (!std::isfinite(tau)) throw ContractError("rates_at_threshold: tau must be finite");
    check_two_classes(set);
    int live_n = 0, spoof_n = 0, live_rejected = 0, spoof_accepted = 0;
    for (const ScoredEntry& e : set) {
        if (e.live) {
            ++live_n;
            if (e.score < tau) ++live_rejected;
        } else {
            ++spoof_n;
            if (e.score >= tau) ++spoof_accepted;
        }
    }
    ErrorReport r;
    r.threshold = tau;
    r.apcer = 100.0 * spoof_accepted / spoof_n;
    r.bpcer = 100.0 * live_rejected / live_n;
    r.acer = (r.apcer + r.bpcer) / 2.0;
    r.hter = (r.bpcer + r.apcer) / 2.0;  // FRR = BPCER, FAR = APCER
    return r;
}

std::vector<std::pair<double, double>> roc(const ScoredSet& set) {
    check_two_classes(set);
    std::set<double> taus;
    for (const ScoredEntry& e : set) taus.insert(e.score);
    int live_n = 0, spoof_n = 0;
    for (const ScoredEntry& e : set) (e.live ? live_n : spoof_n) += 1;

    std::vector<std::pair<double, double>> points;
    auto point_at = [&](double tau) {
        int tl = 0, fs = 0;
        for (const ScoredEntry& e : set) {
            if (e.score >= tau) (e.live ? tl : fs) += 1;
        }
        return std::make_pair(static_cast<double>(fs) / spoof_n,
                              static_cast<double>(tl) / live_n);
    };
    // Accept-none endpoint, each distinct score as threshold (accept-all is
    // the lowest score itself).
    points.push_back({0.0, 0.0});
    for (auto it = taus.rbegin(); it != taus.rend(); ++it) points.push_back(point_at(*it));
    std::sort(points.begin(), points.end());
    points.erase(std::unique(points.begin(), points.end()), points.end());
    return points;
}

double tdr_at_fdr(const ScoredSet& set, double fdr_target) {
    if (fdr_target < 0.0 || fdr_target > 1.0)
        throw ContractError("tdr_at_fdr: target must be within [0,1]");
    double best = 0.0;
    for (const auto& [fdr, tdr] : roc(set))
        if (fdr <= fdr_target) best = std::max(best, tdr);
    return best;
}

double eer_threshold(const ScoredSet& set) {
    check_two_classes(set);
    double best_tau = 0.0;
    double best_gap = std::numeric_limits<double>::infinity();
    double best_acer = std::numeric_limits<double>::infinity();
    for (double tau : candidate_thresholds(set)) {
        const ErrorReport r = rates_at_threshold(set, tau);
        const double gap = std::fabs(r.apcer - r.bpcer);
        if (gap < best_gap - 1e-12 ||
            (gap < best_gap + 1e-12 &&
             (r.acer < best_acer - 1e-12 ||
              (r.acer < best_acer + 1e-12 && tau < best_tau)))) {
            best_gap = gap;
            best_acer = r.acer;
            best_tau = tau;
        }
    }
    return best_tau;
}

FrontalMapStats frontal_map_stats(const std::vector<Tensor>& maps,
                                  const std::vector<bool>& live_labels) {
    if (maps.size() != live_labels.size())
        throw ShapeError("frontal_map_stats: one label per map");
    FrontalMapStats stats;
    for (int pass = 0; pass < 2; ++pass) {
        const bool want_live = pass == 0;
        MapStats& out = want_live ? stats.live : stats.spoof;
        for (std::size_t i = 0; i < maps.size(); ++i) {
            if (live_labels[i] != want_live) continue;
            if (!maps[i].same_shape(out.mean))
                throw ShapeError("frontal_map_stats: maps must be 32x32");
            for (std::size_t k = 0; k < maps[i].size(); ++k) out.mean[k] += maps[i][k];
            ++out.count;
        }
        if (out.count == 0)
            throw ContractError("frontal_map_stats: empty class " +
                                std::string(want_live ? "live" : "spoof"));
        for (std::size_t k = 0; k < out.mean.size(); ++k) out.mean[k] /= out.count;
        for (std::size_t i = 0; i < maps.size(); ++i) {
            if (live_labels[i] != want_live) continue;
            for (std::size_t k = 0; k < maps[i].size(); ++k) {
                const double d = maps[i][k] - out.mean[k];
                out.stddev[k] += d * d;
            }
        }
        for (std::size_t k = 0; k < out.stddev.size(); ++k)
            out.stddev[k] = std::sqrt(out.stddev[k] / out.count);
    }
    return stats;
}

ClassMse estimation_mse(const std::vector<Tensor>& predictions,
                        const std::vector<Tensor>& ground_truth,
                        const std::vector<bool>& live_labels) {
    if (predictions.size() != ground_truth.size() || predictions.size() != live_labels.size())
        throw ShapeError("estimation_mse: aligned predictions, truths and labels required");
    ClassMse out;
    std::size_t live_n = 0, spoof_n = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (!predictions[i].same_shape(ground_truth[i]))
            throw ShapeError("estimation_mse: prediction/truth shape mismatch at " +
                             std::to_string(i));
        double se = 0.0;
        for (std::size_t k = 0; k < predictions[i].size(); ++k) {
            const double d = predictions[i][k] - ground_truth[i][k];
            se += d * d;
        }
        const double mse = se / static_cast<double>(predictions[i].size());
        if (live_labels[i]) {
            out.live += mse;
            ++live_n;
        } else {
            out.spoof += mse;
            ++spoof_n;
        }
    }
    if (live_n) out.live /= static_cast<double>(live_n);
    if (spoof_n) out.spoof /= static_cast<double>(spoof_n);
    return out;
}

FailureAttribution attribute_failures(const std::vector<SubScores>& clips, double tau) {
    FailureAttribution out;
    ScoredSet depth_set, rppg_set;
    for (const SubScores& c : clips) {
        depth_set.push_back({c.id, c.live, c.depth_term});
        rppg_set.push_back({c.id, c.live, c.rppg_term});
    }
    out.depth_threshold = eer_threshold(depth_set);
    out.rppg_threshold = eer_threshold(rppg_set);

    for (const SubScores& c : clips) {
        const bool fused_live = c.depth_term + c.rppg_term >= tau;
        if (fused_live == c.live) continue;
        ++out.failures;
        const bool depth_wrong = (c.depth_term >= out.depth_threshold) != c.live;
        const bool rppg_wrong = (c.rppg_term >= out.rppg_threshold) != c.live;
        if (depth_wrong) ++out.depth_fail;
        if (rppg_wrong) ++out.rppg_fail;
        if (depth_wrong && rppg_wrong) ++out.both_fail;
        if (!depth_wrong && !rppg_wrong) ++out.both_pass;
    }
    return out;
}

}  // namespace axspoof::metrics
