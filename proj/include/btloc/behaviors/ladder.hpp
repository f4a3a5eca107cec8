#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <span>

#include "btloc/estimation/filter.hpp"

namespace btloc::beh {

struct LadderConfig {
  /// Trailing records that must all fail the current bound before relaxing.
  int descend_after = 3;
  /// Trailing ACCEPTED records before tightening again.
  int improve_after = 5;
};

inline constexpr est::GateBound kLadder[] = {est::GateBound::TwoSigma, est::GateBound::ThreeSigma,
                                             est::GateBound::All};

inline int ladder_index(est::GateBound b) { return static_cast<int>(b); }
inline est::GateBound ladder_bound(int i) { return kLadder[std::clamp(i, 0, 2)]; }

/// Strictest bound that would have accepted a gate distance.
inline int required_level(double mahalanobis) {
  for (int i = 0; i < 3; ++i) {
    if (mahalanobis <= est::gate_threshold(kLadder[i])) return i;
  }
  return 2;
}

/// Position on the 2σ/3σ/ALL ladder, folded from a sensor's update records.
struct LadderState {
  int level = 0;
  /// Trailing records that would fail the current bound, and how many of
  /// them needed each level (index 1 = 3σ, 2 = ALL).
  int failing = 0;
  std::array<int, 3> failing_needs{};
  int accepted_streak = 0;
  std::optional<Timestamp> last_accepted;

  est::GateBound bound() const { return ladder_bound(level); }
};

/// Folds one record. Records without a gate distance (NO_FIX, NOT_CONVERGED)
/// and heading-history rejections leave the ladder alone.
inline void ladder_observe(LadderState& st, const est::UpdateStats& r, const LadderConfig& cfg = {}) {
  if (r.outcome == est::Outcome::Accepted) {
    st.last_accepted = st.last_accepted ? std::max(*st.last_accepted, r.stamp) : r.stamp;
  }
  if (!r.mahalanobis || r.history_rejected) return;
  const int need = required_level(*r.mahalanobis);

  if (r.outcome == est::Outcome::Accepted) {
    ++st.accepted_streak;
  } else {
    st.accepted_streak = 0;
  }

  if (need > st.level) {
    if (st.failing == 0) st.failing_needs = {};
    ++st.failing_needs[need];
    ++st.failing;
    if (st.failing >= cfg.descend_after) {
      // Median requirement of the run, so one stray record neither holds the
      // ladder back nor pushes it further than the rest justify.
      int seen = 0, median = 2;
      for (int i = 0; i < 3; ++i) {
        seen += st.failing_needs[i];
        if (2 * seen >= st.failing) {
          median = i;
          break;
        }
      }
      st.level = std::min(std::max(st.level + 1, median), 2);
      st.failing = 0;
    }
  } else {
    st.failing = 0;
  }

  if (st.level > 0 && st.accepted_streak >= cfg.improve_after && need < st.level) {
    st.level = need;
    st.failing = 0;
  }
}

inline void ladder_observe(LadderState& st, std::span<const est::UpdateStats> records, const LadderConfig& cfg = {}) {
  for (const auto& r : records) ladder_observe(st, r, cfg);
}

}  // namespace btloc::beh
