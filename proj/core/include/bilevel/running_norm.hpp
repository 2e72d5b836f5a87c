#pragma once

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

namespace bilevel {

/// Welford running per-dimension input statistics. Mean-centering strips the
/// feature mass shared by every observation (template boilerplate, which
/// otherwise couples unrelated inputs through the common direction and lets a
/// few lucky episodes drag every logit the same way), and the scale puts rare
/// and frequent features on an equal footing.
struct RunningNorm {
  double count = 0.0;
  Eigen::VectorXd mean;
  Eigen::VectorXd m2;  // sum of squared deviations from the running mean

  void update(const Eigen::VectorXd& x);
  /// (x - mean) / std, clamped to [-10, 10]; identity until the first update.
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;

  nlohmann::json to_json() const;
  static RunningNorm from_json(const nlohmann::json& j);
};

}  // namespace bilevel
