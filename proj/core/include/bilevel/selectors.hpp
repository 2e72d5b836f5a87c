#pragma once

#include <vector>

#include "bilevel/rng.hpp"

namespace bilevel {

/// Uniform prompt selection; the no-learning baseline.
class RandomSelector {
 public:
  explicit RandomSelector(int num_arms);

  int num_arms() const { return num_arms_; }
  int select(Rng& rng) const;

 private:
  int num_arms_;
};

/// UCB1 over the prompt menu. Statistics are per-episode: the trainer calls
/// begin_episode() at each reset, every step pulls an arm, and update() feeds
/// back the step's outer reward. Untried arms are selected first, in id
/// order; afterwards select() returns argmax of mean + c * sqrt(ln N / n).
class UcbSelector {
 public:
  UcbSelector(int num_arms, double exploration = 1.0);

  int num_arms() const { return num_arms_; }
  double exploration() const { return exploration_; }

  void begin_episode();
  int select() const;
  void update(int arm, double reward);

  int pulls(int arm) const;
  double mean(int arm) const;  // 0 for an untried arm
  int total_pulls() const { return total_pulls_; }

  /// Exploration-adjusted score; +infinity for an untried arm.
  double score(int arm) const;

 private:
  void check_arm(int arm) const;

  int num_arms_;
  double exploration_;
  std::vector<int> pulls_;
  std::vector<double> sums_;
  int total_pulls_ = 0;
};

}  // namespace bilevel
