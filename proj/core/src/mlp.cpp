#include "bilevel/mlp.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "bilevel/errors.hpp"
#include "bilevel/rng.hpp"

namespace bilevel {

Eigen::VectorXd softmax(const Eigen::VectorXd& scores) {
  if (scores.size() == 0) throw Error("softmax: empty score vector");
  const double max = scores.maxCoeff();
  Eigen::VectorXd exps = (scores.array() - max).exp();
  return exps / exps.sum();
}

double entropy(const Eigen::VectorXd& probs) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) h -= probs[i] * std::log(probs[i]);
  }
  return h;
}

namespace {

std::vector<int> layer_sizes(const MlpShape& shape) {
  std::vector<int> sizes{shape.input};
  sizes.insert(sizes.end(), shape.hidden.begin(), shape.hidden.end());
  sizes.push_back(shape.output);
  return sizes;
}

}  // namespace

Mlp::Mlp(MlpShape shape, std::uint64_t seed, bool zero_output_layer) : shape_(std::move(shape)) {
  if (shape_.input < 1 || shape_.output < 1) {
    throw ConfigError("mlp: input and output sizes must be >= 1");
  }
  for (int h : shape_.hidden) {
    if (h < 1) throw ConfigError("mlp: hidden sizes must be >= 1");
  }
  const auto sizes = layer_sizes(shape_);
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int fan_in = sizes[l];
    const int fan_out = sizes[l + 1];
    const bool last = l + 2 == sizes.size();
    if (last && zero_output_layer) {
      weights_.emplace_back(Eigen::MatrixXd::Zero(fan_out, fan_in));
    } else {
      const double scale = std::sqrt(1.0 / fan_in);
      std::uniform_real_distribution<double> unif(-scale, scale);
      Eigen::MatrixXd w(fan_out, fan_in);
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = unif(rng);
      }
      weights_.push_back(std::move(w));
    }
    biases_.emplace_back(Eigen::VectorXd::Zero(fan_out));
  }
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  Activations acts;
  return forward(x, acts);
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x, Activations& acts) const {
  if (x.size() != shape_.input) {
    throw Error("mlp: input size " + std::to_string(x.size()) + " != expected " +
                std::to_string(shape_.input));
  }
  acts.post.clear();
  Eigen::VectorXd a = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    a = weights_[l] * a + biases_[l];
    if (l + 1 < weights_.size()) a = a.array().tanh();
    acts.post.push_back(a);
  }
  return a;
}

void Mlp::Gradients::resize_like(const Mlp& net) {
  weights.clear();
  biases.clear();
  for (std::size_t l = 0; l < net.weights().size(); ++l) {
    weights.emplace_back(
        Eigen::MatrixXd::Zero(net.weights()[l].rows(), net.weights()[l].cols()));
    biases.emplace_back(Eigen::VectorXd::Zero(net.biases()[l].size()));
  }
}

void Mlp::Gradients::set_zero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : biases) b.setZero();
}

void Mlp::Gradients::scale(double factor) {
  for (auto& w : weights) w *= factor;
  for (auto& b : biases) b *= factor;
}

bool Mlp::Gradients::all_finite() const {
  for (const auto& w : weights) {
    if (!w.allFinite()) return false;
  }
  for (const auto& b : biases) {
    if (!b.allFinite()) return false;
  }
  return true;
}

void Mlp::backward(const Eigen::VectorXd& x, const Activations& acts,
                   const Eigen::VectorXd& grad_output, Gradients& grads) const {
  if (grads.weights.size() != weights_.size()) grads.resize_like(*this);
  Eigen::VectorXd delta = grad_output;  // dLoss/d(post-activation of layer l)
  for (int l = static_cast<int>(weights_.size()) - 1; l >= 0; --l) {
    if (l + 1 < static_cast<int>(weights_.size())) {
      // Hidden layer: fold in tanh' = 1 - tanh^2 using the stored activation.
      delta = delta.cwiseProduct(
          (1.0 - acts.post[l].array().square()).matrix());
    }
    const Eigen::VectorXd& input = l == 0 ? x : acts.post[l - 1];
    grads.weights[l].noalias() += delta * input.transpose();
    grads.biases[l] += delta;
    if (l > 0) delta = weights_[l].transpose() * delta;
  }
}

int Mlp::parameter_count() const {
  int count = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    count += static_cast<int>(weights_[l].size() + biases_[l].size());
  }
  return count;
}

Eigen::VectorXd Mlp::flatten_parameters() const {
  Eigen::VectorXd flat(parameter_count());
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) {
      for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) flat[k++] = weights_[l](r, c);
    }
    for (Eigen::Index i = 0; i < biases_[l].size(); ++i) flat[k++] = biases_[l][i];
  }
  return flat;
}

void Mlp::unflatten_parameters(const Eigen::VectorXd& flat) {
  if (flat.size() != parameter_count()) {
    throw Error("mlp: flat parameter size mismatch");
  }
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) {
      for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) weights_[l](r, c) = flat[k++];
    }
    for (Eigen::Index i = 0; i < biases_[l].size(); ++i) biases_[l][i] = flat[k++];
  }
}

Eigen::VectorXd Mlp::flatten_gradients(const Gradients& grads) {
  Eigen::Index total = 0;
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    total += grads.weights[l].size() + grads.biases[l].size();
  }
  Eigen::VectorXd flat(total);
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    for (Eigen::Index c = 0; c < grads.weights[l].cols(); ++c) {
      for (Eigen::Index r = 0; r < grads.weights[l].rows(); ++r) {
        flat[k++] = grads.weights[l](r, c);
      }
    }
    for (Eigen::Index i = 0; i < grads.biases[l].size(); ++i) flat[k++] = grads.biases[l][i];
  }
  return flat;
}

nlohmann::json Mlp::to_json() const {
  nlohmann::json j;
  j["input"] = shape_.input;
  j["hidden"] = shape_.hidden;
  j["output"] = shape_.output;
  const Eigen::VectorXd flat = flatten_parameters();
  j["parameters"] = std::vector<double>(flat.data(), flat.data() + flat.size());
  return j;
}

Mlp Mlp::from_json(const nlohmann::json& j) {
  MlpShape shape;
  shape.input = j.at("input").get<int>();
  shape.hidden = j.at("hidden").get<std::vector<int>>();
  shape.output = j.at("output").get<int>();
  Mlp net(shape, 0);
  const auto params = j.at("parameters").get<std::vector<double>>();
  net.unflatten_parameters(
      Eigen::Map<const Eigen::VectorXd>(params.data(), static_cast<Eigen::Index>(params.size())));
  return net;
}

AdamOptimizer::AdamOptimizer(const Mlp& net, double beta1, double beta2, double epsilon)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
  for (std::size_t l = 0; l < net.weights().size(); ++l) {
    m_w_.emplace_back(Eigen::MatrixXd::Zero(net.weights()[l].rows(), net.weights()[l].cols()));
    v_w_.emplace_back(Eigen::MatrixXd::Zero(net.weights()[l].rows(), net.weights()[l].cols()));
    m_b_.emplace_back(Eigen::VectorXd::Zero(net.biases()[l].size()));
    v_b_.emplace_back(Eigen::VectorXd::Zero(net.biases()[l].size()));
  }
}

void AdamOptimizer::step(Mlp& net, const Mlp::Gradients& grads, double learning_rate) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t l = 0; l < m_w_.size(); ++l) {
    m_w_[l] = beta1_ * m_w_[l] + (1.0 - beta1_) * grads.weights[l];
    v_w_[l] = beta2_ * v_w_[l].array() + (1.0 - beta2_) * grads.weights[l].array().square();
    net.mutable_weights()[l].array() -=
        learning_rate * (m_w_[l].array() / bc1) / ((v_w_[l].array() / bc2).sqrt() + epsilon_);

    m_b_[l] = beta1_ * m_b_[l] + (1.0 - beta1_) * grads.biases[l];
    v_b_[l] = beta2_ * v_b_[l].array() + (1.0 - beta2_) * grads.biases[l].array().square();
    net.mutable_biases()[l].array() -=
        learning_rate * (m_b_[l].array() / bc1) / ((v_b_[l].array() / bc2).sqrt() + epsilon_);
  }
}

nlohmann::json AdamOptimizer::to_json() const {
  auto dump_mats = [](const std::vector<Eigen::MatrixXd>& mats) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& m : mats) {
      out.push_back(std::vector<double>(m.data(), m.data() + m.size()));
    }
    return out;
  };
  auto dump_vecs = [](const std::vector<Eigen::VectorXd>& vecs) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& v : vecs) {
      out.push_back(std::vector<double>(v.data(), v.data() + v.size()));
    }
    return out;
  };
  return nlohmann::json{{"t", t_},
                        {"m_w", dump_mats(m_w_)}, {"v_w", dump_mats(v_w_)},
                        {"m_b", dump_vecs(m_b_)}, {"v_b", dump_vecs(v_b_)}};
}

void AdamOptimizer::load_json(const nlohmann::json& j, const Mlp& net) {
  t_ = j.at("t").get<long>();
  auto load_mats = [&](const char* key, std::vector<Eigen::MatrixXd>& mats) {
    const auto& arr = j.at(key);
    for (std::size_t l = 0; l < mats.size(); ++l) {
      const auto vals = arr.at(l).get<std::vector<double>>();
      if (static_cast<Eigen::Index>(vals.size()) != mats[l].size()) {
        throw Error("adam state: size mismatch for " + std::string(key));
      }
      std::copy(vals.begin(), vals.end(), mats[l].data());
    }
  };
  auto load_vecs = [&](const char* key, std::vector<Eigen::VectorXd>& vecs) {
    const auto& arr = j.at(key);
    for (std::size_t l = 0; l < vecs.size(); ++l) {
      const auto vals = arr.at(l).get<std::vector<double>>();
      if (static_cast<Eigen::Index>(vals.size()) != vecs[l].size()) {
        throw Error("adam state: size mismatch for " + std::string(key));
      }
      std::copy(vals.begin(), vals.end(), vecs[l].data());
    }
  };
  (void)net;
  load_mats("m_w", m_w_);
  load_mats("v_w", v_w_);
  load_vecs("m_b", m_b_);
  load_vecs("v_b", v_b_);
}

}  // namespace bilevel
