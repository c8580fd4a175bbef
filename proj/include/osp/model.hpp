#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "osp/shape.hpp"

namespace osp {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Architecture { Mlp, Cnn };

inline constexpr int kRotations = 4;

struct ModelSpec {
  Architecture arch = Architecture::Mlp;
  InputShape input = InputShape::points(2);
  int hidden = 64;
  int feature_dim = 64;
  int num_classes = 4;
  int conv1_channels = 8;
  int conv2_channels = 16;

  bool operator==(const ModelSpec&) const = default;
};

std::string to_string(Architecture arch);
Architecture parse_architecture(const std::string& name);

// Row-wise activations shared by the model and the loss plumbing.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);
Eigen::VectorXd sigmoid(const Eigen::VectorXd& logits);
/// d/dlogits given d/dprobs for a row-wise softmax.
Eigen::MatrixXd softmax_backward(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& d_probs);
/// d/dlogit given d/dscore for an elementwise sigmoid.
Eigen::VectorXd sigmoid_backward(const Eigen::VectorXd& scores, const Eigen::VectorXd& d_scores);

/// Intermediate activations kept for the backward pass.
struct EncoderCache {
  Eigen::MatrixXd input;
  // mlp
  Eigen::MatrixXd hidden1;
  Eigen::MatrixXd hidden2;
  // cnn, one entry per sample
  std::vector<RowMatrix> cols1, act1, cols2, act2;
  std::vector<std::vector<int>> pool1_argmax, pool2_argmax;
  Eigen::MatrixXd flat;
};

/// Outputs of every head for a batch, one row per sample.
struct ForwardPass {
  Eigen::MatrixXd features;       // encoder output after optional noise
  Eigen::MatrixXd class_logits;
  Eigen::MatrixXd class_probs;
  Eigen::MatrixXd rotation_logits;
  Eigen::MatrixXd rotation_probs;
  Eigen::VectorXd ood_logit;
  Eigen::VectorXd ood_score;
  EncoderCache cache;
};

/// Upstream gradients for a ForwardPass. Empty members contribute nothing.
struct HeadGrads {
  Eigen::MatrixXd d_class_logits;
  Eigen::MatrixXd d_rotation_logits;
  Eigen::VectorXd d_ood_logit;
  Eigen::MatrixXd d_features;
};

struct ParamBlock {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
};

/// Shared encoder plus classifier, rotation and OOD heads over one flat
/// parameter vector. Gradients accumulate into a parallel flat vector.
class Model {
public:
  Model() = default;
  Model(const ModelSpec& spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  int feature_dim() const { return spec_.feature_dim; }
  int num_classes() const { return spec_.num_classes; }

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }
  Eigen::VectorXd& grads() { return grads_; }
  const Eigen::VectorXd& grads() const { return grads_; }
  void zero_grad() { grads_.setZero(); }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  const ParamBlock& block(const std::string& name) const;

  /// Runs the encoder and all heads. With noise_std > 0 zero-mean Gaussian
  /// noise is added to the encoder feature before the heads; `rng` is then
  /// required.
  ForwardPass forward(const Eigen::MatrixXd& inputs, double noise_std = 0.0,
                      std::mt19937_64* rng = nullptr) const;

  /// Encoder only.
  Eigen::MatrixXd encode(const Eigen::MatrixXd& inputs) const;

  Eigen::MatrixXd classifier_logits(const Eigen::MatrixXd& features) const;
  /// Classifier head applied to externally supplied features.
  Eigen::MatrixXd classify_feature(const Eigen::MatrixXd& features) const;

  void backward(const ForwardPass& pass, const HeadGrads& grads);
  /// Accumulates classifier gradients and returns d/dfeatures.
  Eigen::MatrixXd classifier_backward(const Eigen::MatrixXd& features, const Eigen::MatrixXd& d_logits);

  bool all_finite() const { return params_.allFinite(); }

private:
  using MatMap = Eigen::Map<Eigen::MatrixXd>;
  using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;
  using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

  void add_block(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  ConstMatMap weight(int index) const;
  ConstVecMap bias(int index) const;
  MatMap weight_grad(int index);
  Eigen::Map<Eigen::VectorXd> bias_grad(int index);

  Eigen::MatrixXd encode_mlp(const Eigen::MatrixXd& x, EncoderCache* cache) const;
  Eigen::MatrixXd encode_cnn(const Eigen::MatrixXd& x, EncoderCache* cache) const;
  void backward_mlp(const EncoderCache& cache, const Eigen::MatrixXd& d_features);
  void backward_cnn(const EncoderCache& cache, const Eigen::MatrixXd& d_features);

  ModelSpec spec_;
  std::vector<ParamBlock> blocks_;
  Eigen::VectorXd params_;
  Eigen::VectorXd grads_;
};

} // namespace osp
