#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <nlohmann/json_fwd.hpp>
#include <vector>

namespace bilevel {

/// Numerically stable softmax (max-subtracted). Invariant under adding a
/// constant to every score.
Eigen::VectorXd softmax(const Eigen::VectorXd& scores);

/// Standard Shannon entropy -sum p ln p of a probability vector, in nats.
/// Zero entries contribute zero.
double entropy(const Eigen::VectorXd& probs);

struct MlpShape {
  int input = 0;
  std::vector<int> hidden;
  int output = 0;
};

/// Plain fully-connected net: tanh hidden layers, linear output. Weights are
/// scaled-uniform initialized from a seed; the output layer can start at zero
/// so downstream softmax policies begin exactly uniform.
class Mlp {
 public:
  Mlp(MlpShape shape, std::uint64_t seed, bool zero_output_layer = false);

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;

  /// Post-activation values per layer, kept for backprop.
  struct Activations {
    std::vector<Eigen::VectorXd> post;  // one per layer, last is the output
  };
  Eigen::VectorXd forward(const Eigen::VectorXd& x, Activations& acts) const;

  struct Gradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;

    void resize_like(const Mlp& net);
    void set_zero();
    void scale(double factor);
    bool all_finite() const;
  };

  /// Accumulates dLoss/dparams into `grads` given dLoss/doutput.
  void backward(const Eigen::VectorXd& x, const Activations& acts,
                const Eigen::VectorXd& grad_output, Gradients& grads) const;

  const MlpShape& shape() const { return shape_; }
  int parameter_count() const;
  Eigen::VectorXd flatten_parameters() const;
  void unflatten_parameters(const Eigen::VectorXd& flat);
  static Eigen::VectorXd flatten_gradients(const Gradients& grads);

  const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
  const std::vector<Eigen::VectorXd>& biases() const { return biases_; }
  std::vector<Eigen::MatrixXd>& mutable_weights() { return weights_; }
  std::vector<Eigen::VectorXd>& mutable_biases() { return biases_; }

  nlohmann::json to_json() const;
  static Mlp from_json(const nlohmann::json& j);

 private:
  MlpShape shape_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

/// Adam optimizer bound to one Mlp's parameter layout. Moment estimates
/// persist across steps; the learning rate may vary per call.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(const Mlp& net, double beta1 = 0.9, double beta2 = 0.999,
                         double epsilon = 1e-8);

  /// Descends `net` along `grads`.
  void step(Mlp& net, const Mlp::Gradients& grads, double learning_rate);

  nlohmann::json to_json() const;
  void load_json(const nlohmann::json& j, const Mlp& net);

 private:
  std::vector<Eigen::MatrixXd> m_w_, v_w_;
  std::vector<Eigen::VectorXd> m_b_, v_b_;
  double beta1_, beta2_, epsilon_;
  long t_ = 0;
};

}  // namespace bilevel
