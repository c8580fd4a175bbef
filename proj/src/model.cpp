#include "osp/model.hpp"

#include <cmath>
#include <sstream>

#include "osp/errors.hpp"

namespace osp {

namespace {

// Layer slots in the parameter vector. Both encoders have three layers.
constexpr int kEnc0 = 0;
constexpr int kEnc1 = 1;
constexpr int kEnc2 = 2;
constexpr int kCls = 3;
constexpr int kRot = 4;
constexpr int kOod = 5;

constexpr int kKernel = 3;

// 3x3, stride 1, zero padding 1. `in` holds one row per pixel (y * w + x).
RowMatrix im2col(const RowMatrix& in, int h, int w) {
  const int c = static_cast<int>(in.cols());
  RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(h) * w, c * kKernel * kKernel);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int row = y * w + x;
      for (int ky = 0; ky < kKernel; ++ky) {
        const int sy = y + ky - 1;
        if (sy < 0 || sy >= h) continue;
        for (int kx = 0; kx < kKernel; ++kx) {
          const int sx = x + kx - 1;
          if (sx < 0 || sx >= w) continue;
          for (int ch = 0; ch < c; ++ch) {
            cols(row, ch * kKernel * kKernel + ky * kKernel + kx) = in(sy * w + sx, ch);
          }
        }
      }
    }
  }
  return cols;
}

RowMatrix col2im(const RowMatrix& cols, int h, int w, int c) {
  RowMatrix out = RowMatrix::Zero(static_cast<Eigen::Index>(h) * w, c);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int row = y * w + x;
      for (int ky = 0; ky < kKernel; ++ky) {
        const int sy = y + ky - 1;
        if (sy < 0 || sy >= h) continue;
        for (int kx = 0; kx < kKernel; ++kx) {
          const int sx = x + kx - 1;
          if (sx < 0 || sx >= w) continue;
          for (int ch = 0; ch < c; ++ch) {
            out(sy * w + sx, ch) += cols(row, ch * kKernel * kKernel + ky * kKernel + kx);
          }
        }
      }
    }
  }
  return out;
}

// 2x2 max pool; argmax records the winning input row per output cell.
RowMatrix max_pool(const RowMatrix& in, int h, int w, std::vector<int>& argmax) {
  const int c = static_cast<int>(in.cols());
  const int oh = h / 2;
  const int ow = w / 2;
  RowMatrix out(static_cast<Eigen::Index>(oh) * ow, c);
  argmax.assign(static_cast<std::size_t>(oh) * ow * c, 0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        int best = (2 * y) * w + 2 * x;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const int r = (2 * y + dy) * w + (2 * x + dx);
            if (in(r, ch) > in(best, ch)) best = r;
          }
        }
        out(y * ow + x, ch) = in(best, ch);
        argmax[static_cast<std::size_t>((y * ow + x) * c + ch)] = best;
      }
    }
  }
  return out;
}

RowMatrix unpool(const RowMatrix& d_out, const std::vector<int>& argmax, Eigen::Index in_rows) {
  const int c = static_cast<int>(d_out.cols());
  RowMatrix d_in = RowMatrix::Zero(in_rows, c);
  for (Eigen::Index r = 0; r < d_out.rows(); ++r) {
    for (int ch = 0; ch < c; ++ch) {
      d_in(argmax[static_cast<std::size_t>(r * c + ch)], ch) += d_out(r, ch);
    }
  }
  return d_in;
}

} // namespace

std::string to_string(Architecture arch) { return arch == Architecture::Mlp ? "mlp" : "cnn"; }

Architecture parse_architecture(const std::string& name) {
  if (name == "mlp") return Architecture::Mlp;
  if (name == "cnn") return Architecture::Cnn;
  throw ConfigError("unknown architecture '" + name + "'");
}

std::string to_string(const InputShape& shape) {
  std::ostringstream os;
  if (shape.kind == InputKind::Points) {
    os << "points:" << shape.width;
  } else {
    os << "image:" << shape.height << 'x' << shape.width << 'x' << shape.channels;
  }
  return os.str();
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

Eigen::VectorXd sigmoid(const Eigen::VectorXd& logits) {
  return logits.unaryExpr([](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

Eigen::MatrixXd softmax_backward(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& d_probs) {
  const Eigen::VectorXd inner = (probs.array() * d_probs.array()).rowwise().sum();
  return probs.array() * (d_probs.colwise() - inner).array();
}

Eigen::VectorXd sigmoid_backward(const Eigen::VectorXd& scores, const Eigen::VectorXd& d_scores) {
  return scores.array() * (1.0 - scores.array()) * d_scores.array();
}

Model::Model(const ModelSpec& spec, std::uint64_t seed) : spec_(spec) {
  if (spec.feature_dim <= 0 || spec.num_classes < 2 || spec.hidden <= 0) {
    throw ConfigError("model: feature_dim, hidden must be positive and num_classes >= 2");
  }
  const auto in = static_cast<Eigen::Index>(spec.input.size());
  const Eigen::Index d = spec.feature_dim;
  if (spec.arch == Architecture::Mlp) {
    add_block("enc0.w", in, spec.hidden);
    add_block("enc0.b", spec.hidden, 1);
    add_block("enc1.w", spec.hidden, spec.hidden);
    add_block("enc1.b", spec.hidden, 1);
    add_block("enc2.w", spec.hidden, d);
    add_block("enc2.b", d, 1);
  } else {
    if (spec.input.kind != InputKind::Image || spec.input.height % 4 != 0 || spec.input.width % 4 != 0) {
      throw ConfigError("cnn encoder needs image input with height and width divisible by 4");
    }
    const Eigen::Index flat =
        static_cast<Eigen::Index>(spec.input.height / 4) * (spec.input.width / 4) * spec.conv2_channels;
    add_block("conv1.w", spec.input.channels * kKernel * kKernel, spec.conv1_channels);
    add_block("conv1.b", spec.conv1_channels, 1);
    add_block("conv2.w", spec.conv1_channels * kKernel * kKernel, spec.conv2_channels);
    add_block("conv2.b", spec.conv2_channels, 1);
    add_block("fc.w", flat, d);
    add_block("fc.b", d, 1);
  }
  add_block("cls.w", d, spec.num_classes);
  add_block("cls.b", spec.num_classes, 1);
  add_block("rot.w", d, kRotations);
  add_block("rot.b", kRotations, 1);
  add_block("ood.w", d, 1);
  add_block("ood.b", 1, 1);

  params_ = Eigen::VectorXd::Zero(blocks_.back().offset + blocks_.back().rows * blocks_.back().cols);
  grads_ = Eigen::VectorXd::Zero(params_.size());

  // Glorot-uniform weights, zero biases.
  std::mt19937_64 rng(seed);
  for (std::size_t b = 0; b < blocks_.size(); b += 2) {
    const auto& blk = blocks_[b];
    const double limit = std::sqrt(6.0 / static_cast<double>(blk.rows + blk.cols));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index i = 0; i < blk.rows * blk.cols; ++i) params_[blk.offset + i] = u(rng);
  }
}

void Model::add_block(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  const Eigen::Index offset = blocks_.empty() ? 0 : blocks_.back().offset + blocks_.back().rows * blocks_.back().cols;
  blocks_.push_back(ParamBlock{name, offset, rows, cols});
}

const ParamBlock& Model::block(const std::string& name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw std::out_of_range("no parameter block '" + name + "'");
}

Model::ConstMatMap Model::weight(int index) const {
  const auto& b = blocks_[static_cast<std::size_t>(2 * index)];
  return ConstMatMap(params_.data() + b.offset, b.rows, b.cols);
}

Model::ConstVecMap Model::bias(int index) const {
  const auto& b = blocks_[static_cast<std::size_t>(2 * index + 1)];
  return ConstVecMap(params_.data() + b.offset, b.rows);
}

Model::MatMap Model::weight_grad(int index) {
  const auto& b = blocks_[static_cast<std::size_t>(2 * index)];
  return MatMap(grads_.data() + b.offset, b.rows, b.cols);
}

Eigen::Map<Eigen::VectorXd> Model::bias_grad(int index) {
  const auto& b = blocks_[static_cast<std::size_t>(2 * index + 1)];
  return Eigen::Map<Eigen::VectorXd>(grads_.data() + b.offset, b.rows);
}

Eigen::MatrixXd Model::encode(const Eigen::MatrixXd& inputs) const {
  if (inputs.cols() != static_cast<Eigen::Index>(spec_.input.size())) {
    throw ShapeError("model input has " + std::to_string(inputs.cols()) + " columns, expected " +
                     std::to_string(spec_.input.size()));
  }
  return spec_.arch == Architecture::Mlp ? encode_mlp(inputs, nullptr) : encode_cnn(inputs, nullptr);
}

Eigen::MatrixXd Model::encode_mlp(const Eigen::MatrixXd& x, EncoderCache* cache) const {
  Eigen::MatrixXd h1 = ((x * weight(kEnc0)).rowwise() + bias(kEnc0).transpose()).array().tanh();
  Eigen::MatrixXd h2 = ((h1 * weight(kEnc1)).rowwise() + bias(kEnc1).transpose()).array().tanh();
  Eigen::MatrixXd z = (h2 * weight(kEnc2)).rowwise() + bias(kEnc2).transpose();
  if (cache) {
    cache->input = x;
    cache->hidden1 = std::move(h1);
    cache->hidden2 = std::move(h2);
  }
  return z;
}

Eigen::MatrixXd Model::encode_cnn(const Eigen::MatrixXd& x, EncoderCache* cache) const {
  const int h = spec_.input.height;
  const int w = spec_.input.width;
  const int c = spec_.input.channels;
  const auto n = x.rows();
  const Eigen::Index flat_dim = weight(kEnc2).rows();
  Eigen::MatrixXd flat(n, flat_dim);
  if (cache) {
    cache->input = x;
    cache->cols1.resize(static_cast<std::size_t>(n));
    cache->act1.resize(static_cast<std::size_t>(n));
    cache->cols2.resize(static_cast<std::size_t>(n));
    cache->act2.resize(static_cast<std::size_t>(n));
    cache->pool1_argmax.resize(static_cast<std::size_t>(n));
    cache->pool2_argmax.resize(static_cast<std::size_t>(n));
  }
  std::vector<int> arg1, arg2;
  for (Eigen::Index i = 0; i < n; ++i) {
    RowMatrix img(static_cast<Eigen::Index>(h) * w, c);
    for (int ch = 0; ch < c; ++ch) {
      for (int p = 0; p < h * w; ++p) img(p, ch) = x(i, ch * h * w + p);
    }
    RowMatrix cols1 = im2col(img, h, w);
    RowMatrix act1 = ((cols1 * weight(kEnc0)).rowwise() + bias(kEnc0).transpose()).cwiseMax(0.0);
    RowMatrix pooled1 = max_pool(act1, h, w, arg1);
    RowMatrix cols2 = im2col(pooled1, h / 2, w / 2);
    RowMatrix act2 = ((cols2 * weight(kEnc1)).rowwise() + bias(kEnc1).transpose()).cwiseMax(0.0);
    RowMatrix pooled2 = max_pool(act2, h / 2, w / 2, arg2);
    flat.row(i) = Eigen::Map<const Eigen::RowVectorXd>(pooled2.data(), pooled2.size());
    if (cache) {
      const auto s = static_cast<std::size_t>(i);
      cache->cols1[s] = std::move(cols1);
      cache->act1[s] = std::move(act1);
      cache->cols2[s] = std::move(cols2);
      cache->act2[s] = std::move(act2);
      cache->pool1_argmax[s] = arg1;
      cache->pool2_argmax[s] = arg2;
    }
  }
  Eigen::MatrixXd z = (flat * weight(kEnc2)).rowwise() + bias(kEnc2).transpose();
  if (cache) cache->flat = std::move(flat);
  return z;
}

Eigen::MatrixXd Model::classifier_logits(const Eigen::MatrixXd& features) const {
  if (features.cols() != spec_.feature_dim) {
    throw ShapeError("feature dimension " + std::to_string(features.cols()) + " does not match model (" +
                     std::to_string(spec_.feature_dim) + ")");
  }
  return (features * weight(kCls)).rowwise() + bias(kCls).transpose();
}

Eigen::MatrixXd Model::classify_feature(const Eigen::MatrixXd& features) const {
  return softmax_rows(classifier_logits(features));
}

ForwardPass Model::forward(const Eigen::MatrixXd& inputs, double noise_std, std::mt19937_64* rng) const {
  if (inputs.cols() != static_cast<Eigen::Index>(spec_.input.size())) {
    throw ShapeError("model input has " + std::to_string(inputs.cols()) + " columns, expected " +
                     std::to_string(spec_.input.size()));
  }
  if (noise_std < 0.0) throw std::invalid_argument("forward: noise_std must be >= 0");
  ForwardPass out;
  out.features = spec_.arch == Architecture::Mlp ? encode_mlp(inputs, &out.cache) : encode_cnn(inputs, &out.cache);
  if (noise_std > 0.0) {
    if (!rng) throw std::invalid_argument("forward: noise requires an rng");
    std::normal_distribution<double> noise(0.0, noise_std);
    for (Eigen::Index j = 0; j < out.features.cols(); ++j)
      for (Eigen::Index i = 0; i < out.features.rows(); ++i) out.features(i, j) += noise(*rng);
  }
  out.class_logits = classifier_logits(out.features);
  out.class_probs = softmax_rows(out.class_logits);
  out.rotation_logits = (out.features * weight(kRot)).rowwise() + bias(kRot).transpose();
  out.rotation_probs = softmax_rows(out.rotation_logits);
  out.ood_logit = (out.features * weight(kOod)).col(0).array() + bias(kOod)[0];
  out.ood_score = sigmoid(out.ood_logit);
  return out;
}

Eigen::MatrixXd Model::classifier_backward(const Eigen::MatrixXd& features, const Eigen::MatrixXd& d_logits) {
  weight_grad(kCls) += features.transpose() * d_logits;
  bias_grad(kCls) += d_logits.colwise().sum().transpose();
  return d_logits * weight(kCls).transpose();
}

void Model::backward(const ForwardPass& pass, const HeadGrads& g) {
  const auto n = pass.features.rows();
  Eigen::MatrixXd d_z = Eigen::MatrixXd::Zero(n, spec_.feature_dim);
  if (g.d_features.size() > 0) d_z += g.d_features;
  if (g.d_class_logits.size() > 0) d_z += classifier_backward(pass.features, g.d_class_logits);
  if (g.d_rotation_logits.size() > 0) {
    weight_grad(kRot) += pass.features.transpose() * g.d_rotation_logits;
    bias_grad(kRot) += g.d_rotation_logits.colwise().sum().transpose();
    d_z += g.d_rotation_logits * weight(kRot).transpose();
  }
  if (g.d_ood_logit.size() > 0) {
    weight_grad(kOod).col(0) += pass.features.transpose() * g.d_ood_logit;
    bias_grad(kOod)[0] += g.d_ood_logit.sum();
    d_z += g.d_ood_logit * weight(kOod).col(0).transpose();
  }
  if (spec_.arch == Architecture::Mlp) {
    backward_mlp(pass.cache, d_z);
  } else {
    backward_cnn(pass.cache, d_z);
  }
}

void Model::backward_mlp(const EncoderCache& cache, const Eigen::MatrixXd& d_z) {
  weight_grad(kEnc2) += cache.hidden2.transpose() * d_z;
  bias_grad(kEnc2) += d_z.colwise().sum().transpose();
  const Eigen::MatrixXd d_a2 =
      (d_z * weight(kEnc2).transpose()).array() * (1.0 - cache.hidden2.array().square());
  weight_grad(kEnc1) += cache.hidden1.transpose() * d_a2;
  bias_grad(kEnc1) += d_a2.colwise().sum().transpose();
  const Eigen::MatrixXd d_a1 =
      (d_a2 * weight(kEnc1).transpose()).array() * (1.0 - cache.hidden1.array().square());
  weight_grad(kEnc0) += cache.input.transpose() * d_a1;
  bias_grad(kEnc0) += d_a1.colwise().sum().transpose();
}

void Model::backward_cnn(const EncoderCache& cache, const Eigen::MatrixXd& d_z) {
  const int h = spec_.input.height;
  const int w = spec_.input.width;
  const int c1 = spec_.conv1_channels;
  const int c2 = spec_.conv2_channels;
  weight_grad(kEnc2) += cache.flat.transpose() * d_z;
  bias_grad(kEnc2) += d_z.colwise().sum().transpose();
  const Eigen::MatrixXd d_flat = d_z * weight(kEnc2).transpose();
  const Eigen::Index p2 = static_cast<Eigen::Index>(h / 4) * (w / 4);
  for (Eigen::Index i = 0; i < d_z.rows(); ++i) {
    const auto s = static_cast<std::size_t>(i);
    RowMatrix d_pool2(p2, c2);
    for (Eigen::Index k = 0; k < d_pool2.size(); ++k) d_pool2.data()[k] = d_flat(i, k);
    RowMatrix d_act2 = unpool(d_pool2, cache.pool2_argmax[s], cache.act2[s].rows());
    d_act2 = (cache.act2[s].array() > 0.0).select(d_act2, 0.0);
    weight_grad(kEnc1) += cache.cols2[s].transpose() * d_act2;
    bias_grad(kEnc1) += d_act2.colwise().sum().transpose();
    const RowMatrix d_cols2 = d_act2 * weight(kEnc1).transpose();
    const RowMatrix d_pool1 = col2im(d_cols2, h / 2, w / 2, c1);
    RowMatrix d_act1 = unpool(d_pool1, cache.pool1_argmax[s], cache.act1[s].rows());
    d_act1 = (cache.act1[s].array() > 0.0).select(d_act1, 0.0);
    weight_grad(kEnc0) += cache.cols1[s].transpose() * d_act1;
    bias_grad(kEnc0) += d_act1.colwise().sum().transpose();
  }
}

} // namespace osp
