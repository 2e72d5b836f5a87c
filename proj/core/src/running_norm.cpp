#include "bilevel/running_norm.hpp"

#include <nlohmann/json.hpp>
#include <vector>

#include "bilevel/errors.hpp"

namespace bilevel {

void RunningNorm::update(const Eigen::VectorXd& x) {
  if (mean.size() == 0) {
    mean = Eigen::VectorXd::Zero(x.size());
    m2 = Eigen::VectorXd::Zero(x.size());
  }
  if (x.size() != mean.size()) throw Error("running norm: input dimension changed");
  count += 1.0;
  const Eigen::VectorXd delta = x - mean;
  mean += delta / count;
  m2 += delta.cwiseProduct(x - mean);
}

Eigen::VectorXd RunningNorm::apply(const Eigen::VectorXd& x) const {
  if (count < 1.0) return x;
  if (x.size() != mean.size()) throw Error("running norm: input dimension changed");
  const Eigen::VectorXd var = (m2 / count).cwiseMax(1e-8);
  Eigen::VectorXd z = (x - mean).cwiseQuotient(var.cwiseSqrt());
  return z.cwiseMax(-10.0).cwiseMin(10.0);
}

nlohmann::json RunningNorm::to_json() const {
  return {{"count", count},
          {"mean", std::vector<double>(mean.data(), mean.data() + mean.size())},
          {"m2", std::vector<double>(m2.data(), m2.data() + m2.size())}};
}

RunningNorm RunningNorm::from_json(const nlohmann::json& j) {
  RunningNorm n;
  n.count = j.at("count").get<double>();
  if (n.count > 0.0) {
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto m2 = j.at("m2").get<std::vector<double>>();
    if (mean.size() != m2.size()) throw ConfigError("running norm: mean/m2 size mismatch");
    n.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    n.m2 = Eigen::Map<const Eigen::VectorXd>(m2.data(), static_cast<Eigen::Index>(m2.size()));
  }
  return n;
}

}  // namespace bilevel
