#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "ressl/datagen.hpp"
#include "ressl/defaults.hpp"

namespace ressl {

// One-hidden-layer ReLU perceptron. Parameters live in one flat buffer laid
// out as [w1 (h x d) | b1 (h) | w2 (k x h) | b2 (k)], row-major, so that
// optimiser and EMA updates are plain elementwise loops. Gradients use the
// same type.
class MlpModel {
 public:
  MlpModel() = default;
  MlpModel(std::size_t d, std::size_t h, std::size_t k);  // all zeros

  std::size_t input_dim() const noexcept { return d_; }
  std::size_t hidden() const noexcept { return h_; }
  std::size_t classes() const noexcept { return k_; }

  double& w1(std::size_t i, std::size_t j) { return params_[i * d_ + j]; }
  double w1(std::size_t i, std::size_t j) const { return params_[i * d_ + j]; }
  double& b1(std::size_t i) { return params_[h_ * d_ + i]; }
  double b1(std::size_t i) const { return params_[h_ * d_ + i]; }
  double& w2(std::size_t k, std::size_t i) { return params_[w2_offset() + k * h_ + i]; }
  double w2(std::size_t k, std::size_t i) const { return params_[w2_offset() + k * h_ + i]; }
  double& b2(std::size_t k) { return params_[w2_offset() + k_ * h_ + k]; }
  double b2(std::size_t k) const { return params_[w2_offset() + k_ * h_ + k]; }

  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }

  bool same_shape(const MlpModel& other) const noexcept {
    return d_ == other.d_ && h_ == other.h_ && k_ == other.k_;
  }

 private:
  std::size_t w2_offset() const noexcept { return h_ * d_ + h_; }

  std::size_t d_ = 0;
  std::size_t h_ = 0;
  std::size_t k_ = 0;
  std::vector<double> params_;
};

// Bitwise equality of shapes and every parameter (distinguishes -0.0 from 0.0).
bool bit_equal(const MlpModel& a, const MlpModel& b) noexcept;

// He-normal weights (variance 2 / fan_in), zero biases.
MlpModel init_mlp(std::size_t d, std::size_t h, std::size_t k, std::uint64_t seed);

struct Prediction {
  std::vector<double> logits;
  std::vector<double> probs;
};

Prediction forward(const MlpModel& model, std::span<const double> x);
// Softmax with max subtraction.
std::vector<double> softmax(std::span<const double> logits);

enum class LossKind { cross_entropy_hard, cross_entropy_soft, mse_probs };

// Exactly one of the spans is used: `hard` for cross_entropy_hard, `soft`
// otherwise. Soft targets are treated as constants.
struct TargetView {
  std::span<const int> hard;
  std::span<const Features> soft;
};

struct LossGrad {
  double loss = 0.0;  // batch mean
  MlpModel grad;
};

// mse_probs is (1/K) * sum_k (p_k - t_k)^2 per sample. Throws NumericError on
// NaN inputs or shape mismatch.
LossGrad loss_and_grad(const MlpModel& model, std::span<const Features> batch, TargetView targets,
                       LossKind kind);

// v <- momentum * v + g; theta <- theta - lr * v.
void sgd_step(MlpModel& model, const MlpModel& grads, MlpModel& velocity, double lr, double momentum);

// theta_t <- decay * theta_t + (1 - decay) * theta_s.
void ema_update(MlpModel& teacher, const MlpModel& student, double decay);

// Fraction of argmax-correct predictions; ties go to the lowest class index.
double accuracy(const MlpModel& model, std::span<const LabeledSample> test);
std::size_t argmax(std::span<const double> v) noexcept;

struct TrainConfig {
  std::size_t hidden = defaults::kHidden;
  std::size_t epochs = defaults::kEpochs;
  std::size_t batch_size = defaults::kBatchSize;
  std::size_t unlabeled_batch_size = defaults::kUnlabeledBatchSize;
  double lr = defaults::kLearningRate;
  double momentum = defaults::kMomentum;
  double lambda_max = defaults::kLambdaMax;
  std::size_t rampup_epochs = defaults::kRampupEpochs;
  double tau = defaults::kTau;
  double noise_weak = defaults::kNoiseWeak;
  double noise_strong = defaults::kNoiseStrong;
  double mixup_alpha = defaults::kMixupAlpha;
  double ema_decay = defaults::kEmaDecay;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// lambda_max * min(1, epoch / rampup_epochs), epoch counted from 0.
double unlabeled_weight(const TrainConfig& cfg, std::size_t epoch) noexcept;

// Debug dump: a shape header line followed by one parameter per line.
void write_model_text(std::ostream& out, const MlpModel& model);

}  // namespace ressl
