#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "seqpen/errors.hpp"
#include "seqpen/problem.hpp"

namespace seqpen {

enum class Activation { identity, relu, sigmoid, softmax };

struct LayerSpec {
  Index fan_in;
  Index fan_out;
  Activation activation;
};

/// Fully connected network. Parameters live in one flat vector laid out
/// layer by layer as [W_l (fan_out x fan_in, column-major), b_l]. Batches are
/// matrices with one column per sample.
class DenseNet {
 public:
  explicit DenseNet(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw std::invalid_argument("DenseNet: at least one layer required");
    Index offset = 0;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& s = layers_[l];
      if (s.fan_in < 1 || s.fan_out < 1) throw std::invalid_argument("DenseNet: empty layer");
      if (l > 0 && layers_[l - 1].fan_out != s.fan_in) {
        throw DimensionError("DenseNet: layer " + std::to_string(l) + " fan_in " +
                             std::to_string(s.fan_in) + " does not match previous fan_out " +
                             std::to_string(layers_[l - 1].fan_out));
      }
      offsets_.push_back(offset);
      offset += s.fan_in * s.fan_out + s.fan_out;
    }
    parameter_count_ = offset;
  }

  const std::vector<LayerSpec>& layers() const { return layers_; }
  Index parameter_count() const { return parameter_count_; }
  Index input_width() const { return layers_.front().fan_in; }
  Index output_width() const { return layers_.back().fan_out; }
  Index weight_offset(std::size_t l) const { return offsets_[l]; }
  Index bias_offset(std::size_t l) const {
    return offsets_[l] + layers_[l].fan_in * layers_[l].fan_out;
  }

  /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
  template <typename Scalar>
  Vector<Scalar> init_parameters(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    Vector<Scalar> p = Vector<Scalar>::Zero(parameter_count_);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& s = layers_[l];
      const double r = std::sqrt(6.0 / static_cast<double>(s.fan_in + s.fan_out));
      std::uniform_real_distribution<double> u(-r, r);
      for (Index k = 0; k < s.fan_in * s.fan_out; ++k) {
        p(offsets_[l] + k) = static_cast<Scalar>(u(rng));
      }
    }
    return p;
  }

 private:
  std::vector<LayerSpec> layers_;
  std::vector<Index> offsets_;
  Index parameter_count_ = 0;
};

/// Activations saved by mlp_forward; activations[0] is the input batch and
/// activations[l + 1] the output of layer l.
template <typename Scalar>
struct ForwardCache {
  std::vector<Matrix<Scalar>> activations;
  std::uint64_t fingerprint = 0;
};

template <typename Scalar>
struct BackwardResult {
  Vector<Scalar> param_grad;
  Matrix<Scalar> input_grad;
};

namespace detail {

template <typename Scalar>
std::uint64_t parameter_fingerprint(const Eigen::Ref<const Vector<Scalar>>& params) {
  // Cheap identity check: size, address and a position-weighted checksum.
  double acc = 0;
  for (Index i = 0; i < params.size(); ++i) {
    acc += static_cast<double>(params(i)) * static_cast<double>((i % 7919) + 1);
  }
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(acc));
  std::memcpy(&bits, &acc, sizeof(bits));
  return bits ^ (static_cast<std::uint64_t>(params.size()) << 17) ^
         reinterpret_cast<std::uintptr_t>(params.data());
}

template <typename Scalar>
void apply_activation(Activation a, Matrix<Scalar>& z) {
  switch (a) {
    case Activation::identity: break;
    case Activation::relu: z = z.cwiseMax(Scalar(0)); break;
    case Activation::sigmoid:
      z = z.unaryExpr([](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); });
      break;
    case Activation::softmax:
      for (Index c = 0; c < z.cols(); ++c) {
        auto col = z.col(c);
        col.array() = (col.array() - col.maxCoeff()).exp();
        col /= col.sum();
      }
      break;
  }
}

/// Turns dL/d(output) into dL/d(pre-activation), given the output y.
template <typename Scalar>
void activation_backward(Activation a, const Matrix<Scalar>& y, Matrix<Scalar>& dy) {
  switch (a) {
    case Activation::identity: break;
    case Activation::relu:
      // Derivative at 0 taken as 0.
      dy = (y.array() > Scalar(0)).select(dy, Scalar(0));
      break;
    case Activation::sigmoid: dy.array() *= y.array() * (Scalar(1) - y.array()); break;
    case Activation::softmax: {
      const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> inner = y.cwiseProduct(dy).colwise().sum();
      dy = y.cwiseProduct(dy - inner.replicate(dy.rows(), 1));
      break;
    }
  }
}

}  // namespace detail

template <typename Scalar>
std::pair<Matrix<Scalar>, ForwardCache<Scalar>> mlp_forward(
    const DenseNet& net, const Eigen::Ref<const Vector<Scalar>>& params,
    const Matrix<Scalar>& inputs) {
  if (params.size() != net.parameter_count()) {
    throw DimensionError("mlp_forward: expected " + std::to_string(net.parameter_count()) +
                         " parameters, got " + std::to_string(params.size()));
  }
  if (inputs.rows() != net.input_width()) {
    throw DimensionError("mlp_forward: input width " + std::to_string(inputs.rows()) +
                         " does not match fan_in " + std::to_string(net.input_width()));
  }
  ForwardCache<Scalar> cache;
  cache.activations.reserve(net.layers().size() + 1);
  cache.activations.push_back(inputs);
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto& s = net.layers()[l];
    Eigen::Map<const Matrix<Scalar>> W(params.data() + net.weight_offset(l), s.fan_out, s.fan_in);
    Eigen::Map<const Vector<Scalar>> b(params.data() + net.bias_offset(l), s.fan_out);
    Matrix<Scalar> z = W * cache.activations.back();
    z.colwise() += b;
    detail::apply_activation(s.activation, z);
    cache.activations.push_back(std::move(z));
  }
  cache.fingerprint = detail::parameter_fingerprint<Scalar>(params);
  Matrix<Scalar> out = cache.activations.back();
  return {std::move(out), std::move(cache)};
}

/// Gradient of sum over the batch of <output_grad, output> with respect to
/// the parameters and the inputs. Throws if the cache came from other
/// parameters.
template <typename Scalar>
BackwardResult<Scalar> mlp_backward(const DenseNet& net,
                                    const Eigen::Ref<const Vector<Scalar>>& params,
                                    const ForwardCache<Scalar>& cache,
                                    const Matrix<Scalar>& output_grad) {
  const std::size_t depth = net.layers().size();
  if (cache.activations.size() != depth + 1 ||
      cache.fingerprint != detail::parameter_fingerprint<Scalar>(params)) {
    throw std::logic_error("mlp_backward: stale or foreign forward cache");
  }
  if (output_grad.rows() != net.output_width() ||
      output_grad.cols() != cache.activations.back().cols()) {
    throw DimensionError("mlp_backward: output gradient has the wrong shape");
  }
  BackwardResult<Scalar> r;
  r.param_grad = Vector<Scalar>::Zero(net.parameter_count());
  Matrix<Scalar> delta = output_grad;
  for (std::size_t l = depth; l-- > 0;) {
    const auto& s = net.layers()[l];
    detail::activation_backward(s.activation, cache.activations[l + 1], delta);
    Eigen::Map<Matrix<Scalar>> dW(r.param_grad.data() + net.weight_offset(l), s.fan_out, s.fan_in);
    Eigen::Map<Vector<Scalar>> db(r.param_grad.data() + net.bias_offset(l), s.fan_out);
    dW.noalias() = delta * cache.activations[l].transpose();
    db = delta.rowwise().sum();
    Eigen::Map<const Matrix<Scalar>> W(params.data() + net.weight_offset(l), s.fan_out, s.fan_in);
    Matrix<Scalar> prev = W.transpose() * delta;
    delta = std::move(prev);
  }
  r.input_grad = std::move(delta);
  return r;
}

template <typename Scalar>
struct LossValue {
  Scalar value;
  Vector<Scalar> grad;
  bool clamped = false;
};

/// Cross entropy -log p[label] of a probability vector, with its gradient
/// with respect to p. p[label] is clamped below at 1e-12 (reported via
/// `clamped`).
template <typename Scalar>
LossValue<Scalar> ce_loss(const Eigen::Ref<const Vector<Scalar>>& probabilities, Index label) {
  if (label < 0 || label >= probabilities.size()) {
    throw std::out_of_range("ce_loss: label outside the class range");
  }
  LossValue<Scalar> out;
  Scalar p = probabilities(label);
  if (!(p > Scalar(1e-12))) {
    p = Scalar(1e-12);
    out.clamped = true;
  }
  out.value = -std::log(p);
  out.grad = Vector<Scalar>::Zero(probabilities.size());
  out.grad(label) = -Scalar(1) / p;
  return out;
}

/// Pixel-wise mean squared error and its gradient with respect to the
/// reconstruction.
template <typename Scalar>
LossValue<Scalar> mse_loss(const Eigen::Ref<const Vector<Scalar>>& image,
                           const Eigen::Ref<const Vector<Scalar>>& reconstruction) {
  if (image.size() != reconstruction.size() || image.size() == 0) {
    throw DimensionError("mse_loss: image and reconstruction sizes differ");
  }
  LossValue<Scalar> out;
  const Vector<Scalar> diff = reconstruction - image;
  const auto count = static_cast<Scalar>(image.size());
  out.value = diff.squaredNorm() / count;
  out.grad = (Scalar(2) / count) * diff;
  return out;
}

}  // namespace seqpen
