#include "bilevel/selectors.hpp"

#include <cmath>
#include <limits>

#include "bilevel/errors.hpp"

namespace bilevel {

RandomSelector::RandomSelector(int num_arms) : num_arms_(num_arms) {
  if (num_arms < 1) throw ConfigError("random selector: need at least one arm");
}

int RandomSelector::select(Rng& rng) const {
  std::uniform_int_distribution<int> dist(0, num_arms_ - 1);
  return dist(rng);
}

UcbSelector::UcbSelector(int num_arms, double exploration)
    : num_arms_(num_arms), exploration_(exploration) {
  if (num_arms < 1) throw ConfigError("ucb selector: need at least one arm");
  if (exploration < 0.0) throw ConfigError("ucb selector: exploration must be >= 0");
  begin_episode();
}

void UcbSelector::begin_episode() {
  pulls_.assign(static_cast<std::size_t>(num_arms_), 0);
  sums_.assign(static_cast<std::size_t>(num_arms_), 0.0);
  total_pulls_ = 0;
}

void UcbSelector::check_arm(int arm) const {
  if (arm < 0 || arm >= num_arms_) {
    throw Error("ucb selector: arm " + std::to_string(arm) + " out of range");
  }
}

double UcbSelector::score(int arm) const {
  check_arm(arm);
  const int n = pulls_[static_cast<std::size_t>(arm)];
  if (n == 0) return std::numeric_limits<double>::infinity();
  return mean(arm) + exploration_ * std::sqrt(std::log(static_cast<double>(total_pulls_)) /
                                              static_cast<double>(n));
}

int UcbSelector::select() const {
  for (int arm = 0; arm < num_arms_; ++arm) {
    if (pulls_[static_cast<std::size_t>(arm)] == 0) return arm;
  }
  int best = 0;
  double best_score = score(0);
  for (int arm = 1; arm < num_arms_; ++arm) {
    const double s = score(arm);
    if (s > best_score) {
      best = arm;
      best_score = s;
    }
  }
  return best;
}

void UcbSelector::update(int arm, double reward) {
  check_arm(arm);
  pulls_[static_cast<std::size_t>(arm)] += 1;
  sums_[static_cast<std::size_t>(arm)] += reward;
  total_pulls_ += 1;
}

int UcbSelector::pulls(int arm) const {
  check_arm(arm);
  return pulls_[static_cast<std::size_t>(arm)];
}

double UcbSelector::mean(int arm) const {
  check_arm(arm);
  const int n = pulls_[static_cast<std::size_t>(arm)];
  return n == 0 ? 0.0 : sums_[static_cast<std::size_t>(arm)] / static_cast<double>(n);
}

}  // namespace bilevel
