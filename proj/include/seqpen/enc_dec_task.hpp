#pragma once

#include <memory>
#include <stdexcept>
#include <vector>

#include "seqpen/dense_net.hpp"
#include "seqpen/idx.hpp"
#include "seqpen/problem.hpp"

namespace seqpen {

struct EncDecArchitecture {
  Index input = 784;
  Index hidden = 256;
  Index code = 20;
  Index classes = 10;
  Index decoder_hidden = 256;
};

/// Table-style metrics of a parameter vector on one data set.
struct EncDecMetrics {
  double ce_loss = 0;
  double accuracy = 0;
  double mse_loss = 0;
  double mean_violation = 0;
  double satisfied_fraction = 0;
  std::vector<double> sample_mse;
};

/// Classifier with a reconstruction requirement:
///
///   min 1/N sum_j CE(y_j, softmax-head(enc(I_j)))
///   s.t. MSE(I_j, dec(enc(I_j))) - theta <= 0   for every sample j.
///
/// The encoder is 784 -> 256 -> 20 (ReLU), the classifier head 20 -> 10
/// (softmax) and the decoder 20 -> 256 -> 784 (ReLU, sigmoid). Parameters
/// are the concatenation [encoder | classifier | decoder].
template <typename Scalar>
class EncDecTask : public FiniteSumProblem<Scalar> {
 public:
  using typename FiniteSumProblem<Scalar>::VectorType;
  using typename FiniteSumProblem<Scalar>::MatrixType;

  EncDecTask(std::shared_ptr<const ImageDataset> data, Scalar theta, EncDecArchitecture arch = {})
      : data_(std::move(data)),
        theta_(theta),
        encoder_({{arch.input, arch.hidden, Activation::relu},
                  {arch.hidden, arch.code, Activation::relu}}),
        classifier_({{arch.code, arch.classes, Activation::softmax}}),
        decoder_({{arch.code, arch.decoder_hidden, Activation::relu},
                  {arch.decoder_hidden, arch.input, Activation::sigmoid}}) {
    if (!data_ || data_->size() == 0) throw std::invalid_argument("EncDecTask: empty dataset");
    if (!(theta > Scalar(0))) throw std::invalid_argument("EncDecTask: theta must be > 0");
    if (data_->pixels() != arch.input) {
      throw DimensionError("EncDecTask: dataset images have " + std::to_string(data_->pixels()) +
                           " pixels, architecture expects " + std::to_string(arch.input));
    }
    for (auto l : data_->labels) {
      if (static_cast<Index>(l) >= arch.classes) {
        throw std::invalid_argument("EncDecTask: label outside the class range");
      }
    }
  }

  Index dimension() const override {
    return encoder_.parameter_count() + classifier_.parameter_count() + decoder_.parameter_count();
  }
  Index num_samples() const override { return data_->size(); }
  Index constraints_per_sample() const override { return 1; }
  Normalization normalization() const override { return Normalization::mean; }
  std::optional<Scalar> lower_bound() const override { return Scalar(0); }

  const DenseNet& encoder() const { return encoder_; }
  const DenseNet& classifier() const { return classifier_; }
  const DenseNet& decoder() const { return decoder_; }
  const ImageDataset& dataset() const { return *data_; }
  Scalar theta() const { return theta_; }

  Index classifier_offset() const { return encoder_.parameter_count(); }
  Index decoder_offset() const { return classifier_offset() + classifier_.parameter_count(); }

  VectorType init_parameters(std::uint64_t seed) const {
    VectorType p(dimension());
    p.head(encoder_.parameter_count()) = encoder_.init_parameters<Scalar>(seed);
    p.segment(classifier_offset(), classifier_.parameter_count()) =
        classifier_.init_parameters<Scalar>(seed + 1);
    p.tail(decoder_.parameter_count()) = decoder_.init_parameters<Scalar>(seed + 2);
    return p;
  }

  Scalar sample_objective(Index j, const VectorType& x) const override {
    return single(j, x).objective(0);
  }
  Scalar constraint_value(Index j, const VectorType& x) const { return single(j, x).constraints(0, 0); }
  VectorType sample_constraints(Index j, const VectorType& x) const override {
    return VectorType::Constant(1, constraint_value(j, x));
  }
  VectorType sample_objective_gradient(Index j, const VectorType& x) const override {
    return single_gradient(j, x, Scalar(1), Scalar(0));
  }
  MatrixType sample_constraint_jacobian(Index j, const VectorType& x) const override {
    return single_gradient(j, x, Scalar(0), Scalar(1)).transpose();
  }

  BatchValues<Scalar> evaluate_values(std::span<const Index> batch,
                                      const VectorType& x) const override {
    return forward(batch, x).values;
  }

  BatchEvaluation<Scalar> evaluate_batch(std::span<const Index> batch, const VectorType& x,
                                         const WeightRule<Scalar>& rule) const override {
    Pass pass = forward(batch, x);
    const BatchWeights<Scalar> w = rule(pass.values);
    const auto b = static_cast<Index>(batch.size());

    BatchEvaluation<Scalar> out;
    out.gradient = VectorType::Zero(dimension());
    MatrixType d_code = MatrixType::Zero(encoder_.output_width(), b);
    bool any = false;

    if (!w.objective.isZero(0)) {
      MatrixType d_probs = MatrixType::Zero(classifier_.output_width(), b);
      for (Index k = 0; k < b; ++k) {
        const Index label = data_->labels[static_cast<std::size_t>(batch[k])];
        const Scalar p = std::max(pass.probs(label, k), Scalar(1e-12));
        d_probs(label, k) = -w.objective(k) / p;
      }
      auto back = mlp_backward<Scalar>(classifier_, segment_classifier(x), pass.cls_cache, d_probs);
      out.gradient.segment(classifier_offset(), classifier_.parameter_count()) = back.param_grad;
      d_code += back.input_grad;
      any = true;
    }
    if (!w.constraints.isZero(0)) {
      const auto pixels = static_cast<Scalar>(data_->pixels());
      MatrixType d_recon = (Scalar(2) / pixels) * (pass.recon - pass.inputs);
      d_recon = d_recon * w.constraints.col(0).asDiagonal();
      auto back = mlp_backward<Scalar>(decoder_, segment_decoder(x), pass.dec_cache, d_recon);
      out.gradient.tail(decoder_.parameter_count()) = back.param_grad;
      d_code += back.input_grad;
      any = true;
    }
    if (any) {
      auto back = mlp_backward<Scalar>(encoder_, segment_encoder(x), pass.enc_cache, d_code);
      out.gradient.head(encoder_.parameter_count()) = back.param_grad;
    }
    out.values = std::move(pass.values);
    return out;
  }

  /// Loss, accuracy and constraint statistics over the whole data set.
  EncDecMetrics metrics(const VectorType& x, double threshold_tol = 0.0) const {
    EncDecMetrics m;
    m.sample_mse.resize(static_cast<std::size_t>(num_samples()));
    Index correct = 0;
    MatrixType g(num_samples(), 1);
    detail::for_each_chunk(*this, [&](std::span<const Index> batch, Index start) {
      Pass pass = forward(batch, x);
      detail::check_finite(pass.values, batch);
      for (Index k = 0; k < static_cast<Index>(batch.size()); ++k) {
        Index arg = 0;
        pass.probs.col(k).maxCoeff(&arg);
        if (arg == static_cast<Index>(data_->labels[static_cast<std::size_t>(batch[k])])) ++correct;
        m.ce_loss += static_cast<double>(pass.values.objective(k));
        const double mse = static_cast<double>(pass.values.constraints(k, 0) + theta_);
        m.sample_mse[static_cast<std::size_t>(start + k)] = mse;
        m.mse_loss += mse;
        g(start + k, 0) = pass.values.constraints(k, 0);
      }
    });
    const auto n = static_cast<double>(num_samples());
    m.ce_loss /= n;
    m.mse_loss /= n;
    m.accuracy = static_cast<double>(correct) / n;
    const FeasibilityStats fs = feasibility_from_values(g, threshold_tol);
    m.mean_violation = fs.mean_violation;
    m.satisfied_fraction = fs.satisfied_fraction;
    return m;
  }

 private:
  struct Pass {
    MatrixType inputs;
    MatrixType probs;
    MatrixType recon;
    ForwardCache<Scalar> enc_cache;
    ForwardCache<Scalar> cls_cache;
    ForwardCache<Scalar> dec_cache;
    BatchValues<Scalar> values;
  };

  Eigen::Ref<const VectorType> segment_encoder(const VectorType& x) const {
    return x.head(encoder_.parameter_count());
  }
  Eigen::Ref<const VectorType> segment_classifier(const VectorType& x) const {
    return x.segment(classifier_offset(), classifier_.parameter_count());
  }
  Eigen::Ref<const VectorType> segment_decoder(const VectorType& x) const {
    return x.tail(decoder_.parameter_count());
  }

  Pass forward(std::span<const Index> batch, const VectorType& x) const {
    detail::check_dimension(*this, x);
    const auto b = static_cast<Index>(batch.size());
    Pass p;
    p.inputs.resize(data_->pixels(), b);
    for (Index k = 0; k < b; ++k) {
      detail::check_sample(*this, batch[k]);
      p.inputs.col(k) = data_->images.col(batch[k]).template cast<Scalar>();
    }
    auto [code, enc_cache] = mlp_forward<Scalar>(encoder_, segment_encoder(x), p.inputs);
    auto [probs, cls_cache] = mlp_forward<Scalar>(classifier_, segment_classifier(x), code);
    auto [recon, dec_cache] = mlp_forward<Scalar>(decoder_, segment_decoder(x), code);
    p.probs = std::move(probs);
    p.recon = std::move(recon);
    p.enc_cache = std::move(enc_cache);
    p.cls_cache = std::move(cls_cache);
    p.dec_cache = std::move(dec_cache);

    p.values.objective.resize(b);
    p.values.constraints.resize(b, 1);
    const auto pixels = static_cast<Scalar>(data_->pixels());
    for (Index k = 0; k < b; ++k) {
      const Index label = data_->labels[static_cast<std::size_t>(batch[k])];
      p.values.objective(k) = -std::log(std::max(p.probs(label, k), Scalar(1e-12)));
      p.values.constraints(k, 0) = (p.recon.col(k) - p.inputs.col(k)).squaredNorm() / pixels - theta_;
    }
    return p;
  }

  BatchValues<Scalar> single(Index j, const VectorType& x) const {
    const Index batch[] = {j};
    return forward(batch, x).values;
  }

  VectorType single_gradient(Index j, const VectorType& x, Scalar wf, Scalar wg) const {
    const Index batch[] = {j};
    return evaluate_batch(batch, x, [&](const BatchValues<Scalar>&) {
             return BatchWeights<Scalar>{VectorType::Constant(1, wf), MatrixType::Constant(1, 1, wg)};
           }).gradient;
  }

  std::shared_ptr<const ImageDataset> data_;
  Scalar theta_;
  DenseNet encoder_;
  DenseNet classifier_;
  DenseNet decoder_;
};

}  // namespace seqpen
