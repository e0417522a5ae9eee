#pragma once

#include <algorithm>
#include <vector>

#include "diffmi/common.hpp"

namespace diffmi {

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

/// Achievable-operating-point ROC curve. Construction sorts the points,
/// collapses duplicate FPRs onto the best TPR, lifts the rest onto the upper
/// envelope, and pins the endpoints (0, .) and (1, 1), so the curve is a
/// nondecreasing step function usable for conservative lookups.
class RocCurve {
  public:
    explicit RocCurve(std::vector<RocPoint> raw) {
        for (const RocPoint& p : raw) {
            if (!(p.fpr >= 0.0 && p.fpr <= 1.0) || !(p.tpr >= 0.0 && p.tpr <= 1.0))
                throw ContractError("roc points must lie in the unit square");
        }
        std::sort(raw.begin(), raw.end(), [](const RocPoint& a, const RocPoint& b) {
            return a.fpr != b.fpr ? a.fpr < b.fpr : a.tpr < b.tpr;
        });
        for (const RocPoint& p : raw) {
            if (!points_.empty() && points_.back().fpr == p.fpr)
                points_.back().tpr = p.tpr;  // sorted: later tpr is the max
            else
                points_.push_back(p);
        }
        for (std::size_t i = 1; i < points_.size(); ++i)
            points_[i].tpr = std::max(points_[i].tpr, points_[i - 1].tpr);
        if (points_.empty() || points_.front().fpr > 0.0)
            points_.insert(points_.begin(), RocPoint{0.0, 0.0});
        if (points_.back().fpr < 1.0 || points_.back().tpr < 1.0)
            points_.push_back(RocPoint{1.0, 1.0});
    }

    const std::vector<RocPoint>& points() const { return points_; }

    double auc() const {
        double area = 0.0;
        for (std::size_t i = 1; i < points_.size(); ++i)
            area += (points_[i].fpr - points_[i - 1].fpr) *
                    0.5 * (points_[i].tpr + points_[i - 1].tpr);
        return area;
    }

    /// TPR at the largest achieved FPR not exceeding the target; never
    /// interpolates upward. The constructed fpr=0 point backstops targets
    /// below the smallest achieved rate.
    double tpr_at_fpr(double target) const {
        if (!(target >= 0.0 && target <= 1.0))
            throw ConfigError("fpr target must lie in [0,1]");
        double best = points_.front().tpr;
        for (const RocPoint& p : points_) {
            if (p.fpr > target) break;
            best = p.tpr;
        }
        return best;
    }

  private:
    std::vector<RocPoint> points_;
};

/// ROC of the thresholding family "raw score <= threshold means member",
/// swept over every observed score. This is exactly the curve the marginal
/// baseline moves along as its level varies.
inline RocCurve roc_from_scores(const std::vector<double>& member_scores,
                                const std::vector<double>& holdout_scores) {
    if (member_scores.empty() || holdout_scores.empty())
        throw ConfigError("roc needs nonempty member and holdout scores");

    std::vector<double> thresholds;
    thresholds.reserve(member_scores.size() + holdout_scores.size());
    thresholds.insert(thresholds.end(), member_scores.begin(), member_scores.end());
    thresholds.insert(thresholds.end(), holdout_scores.begin(), holdout_scores.end());
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    std::vector<double> ms(member_scores), hs(holdout_scores);
    std::sort(ms.begin(), ms.end());
    std::sort(hs.begin(), hs.end());

    std::vector<RocPoint> pts;
    pts.reserve(thresholds.size() + 1);
    pts.push_back(RocPoint{0.0, 0.0});
    for (const double thr : thresholds) {
        const auto tp = std::upper_bound(ms.begin(), ms.end(), thr) - ms.begin();
        const auto fp = std::upper_bound(hs.begin(), hs.end(), thr) - hs.begin();
        pts.push_back(RocPoint{static_cast<double>(fp) / static_cast<double>(hs.size()),
                               static_cast<double>(tp) / static_cast<double>(ms.size())});
    }
    return RocCurve(std::move(pts));
}

}  // namespace diffmi
