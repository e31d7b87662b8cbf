#include "ressl/learner.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <ostream>

#include "ressl/csv.hpp"
#include "ressl/error.hpp"
#include "ressl/rng.hpp"

namespace ressl {

namespace {

struct Activations {
  std::vector<double> pre;     // W1 x + b1
  std::vector<double> hidden;  // relu(pre)
  std::vector<double> logits;
};

void check_input(const MlpModel& model, std::span<const double> x) {
  if (x.size() != model.input_dim())
    throw NumericError("input has dimension " + std::to_string(x.size()) + ", model expects " +
                       std::to_string(model.input_dim()));
  for (double v : x) {
    if (std::isnan(v)) throw NumericError("NaN in model input");
  }
}

Activations run(const MlpModel& m, std::span<const double> x) {
  const std::size_t d = m.input_dim();
  const std::size_t h = m.hidden();
  const std::size_t k = m.classes();
  Activations a;
  a.pre.resize(h);
  a.hidden.resize(h);
  a.logits.resize(k);
  for (std::size_t i = 0; i < h; ++i) {
    double s = m.b1(i);
    for (std::size_t j = 0; j < d; ++j) s += m.w1(i, j) * x[j];
    a.pre[i] = s;
    a.hidden[i] = s > 0.0 ? s : 0.0;
  }
  for (std::size_t c = 0; c < k; ++c) {
    double s = m.b2(c);
    for (std::size_t i = 0; i < h; ++i) s += m.w2(c, i) * a.hidden[i];
    a.logits[c] = s;
  }
  return a;
}

std::vector<double> log_softmax(std::span<const double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(z.size());
  for (std::size_t c = 0; c < z.size(); ++c) out[c] = z[c] - lse;
  return out;
}

void check_distribution(std::span<const double> t, std::size_t k) {
  if (t.size() != k) throw NumericError("soft target has the wrong number of classes");
  double sum = 0.0;
  for (double v : t) {
    if (std::isnan(v)) throw NumericError("NaN in soft target");
    if (v < -1e-12) throw NumericError("negative soft target entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw NumericError("soft target does not sum to 1");
}

// Accumulates dL/dlogits for one sample into the parameter gradient.
void backprop(const MlpModel& m, std::span<const double> x, const Activations& a,
              std::span<const double> dz, double scale, MlpModel& g) {
  const std::size_t d = m.input_dim();
  const std::size_t h = m.hidden();
  const std::size_t k = m.classes();
  std::vector<double> dh(h, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    const double dzc = dz[c] * scale;
    g.b2(c) += dzc;
    for (std::size_t i = 0; i < h; ++i) {
      g.w2(c, i) += dzc * a.hidden[i];
      dh[i] += m.w2(c, i) * dzc;
    }
  }
  for (std::size_t i = 0; i < h; ++i) {
    if (!(a.pre[i] > 0.0)) continue;
    g.b1(i) += dh[i];
    for (std::size_t j = 0; j < d; ++j) g.w1(i, j) += dh[i] * x[j];
  }
}

}  // namespace

MlpModel::MlpModel(std::size_t d, std::size_t h, std::size_t k)
    : d_(d), h_(h), k_(k), params_(h * d + h + k * h + k, 0.0) {}

bool bit_equal(const MlpModel& a, const MlpModel& b) noexcept {
  if (!a.same_shape(b)) return false;
  const auto pa = a.params();
  const auto pb = b.params();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(pa[i]) != std::bit_cast<std::uint64_t>(pb[i])) return false;
  }
  return true;
}

MlpModel init_mlp(std::size_t d, std::size_t h, std::size_t k, std::uint64_t seed) {
  if (d == 0 || h == 0 || k == 0) throw ConfigError("MLP dimensions must be positive");
  MlpModel m(d, h, k);
  Rng r1 = make_rng(seed, "init-w1");
  std::normal_distribution<double> n1(0.0, std::sqrt(2.0 / static_cast<double>(d)));
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < d; ++j) m.w1(i, j) = n1(r1);
  Rng r2 = make_rng(seed, "init-w2");
  std::normal_distribution<double> n2(0.0, std::sqrt(2.0 / static_cast<double>(h)));
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t i = 0; i < h; ++i) m.w2(c, i) = n2(r2);
  return m;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    p[c] = std::exp(logits[c] - mx);
    sum += p[c];
  }
  for (double& v : p) v /= sum;
  return p;
}

Prediction forward(const MlpModel& model, std::span<const double> x) {
  check_input(model, x);
  Activations a = run(model, x);
  Prediction out;
  out.probs = softmax(a.logits);
  out.logits = std::move(a.logits);
  return out;
}

LossGrad loss_and_grad(const MlpModel& model, std::span<const Features> batch, TargetView targets,
                       LossKind kind) {
  if (batch.empty()) throw NumericError("empty batch");
  const std::size_t k = model.classes();
  const std::size_t n = batch.size();
  if (kind == LossKind::cross_entropy_hard ? targets.hard.size() != n : targets.soft.size() != n)
    throw NumericError("batch and target sizes differ");

  LossGrad out{0.0, MlpModel(model.input_dim(), model.hidden(), k)};
  const double scale = 1.0 / static_cast<double>(n);
  std::vector<double> dz(k);
  for (std::size_t s = 0; s < n; ++s) {
    check_input(model, batch[s]);
    const Activations a = run(model, batch[s]);
    const auto p = softmax(a.logits);
    switch (kind) {
      case LossKind::cross_entropy_hard: {
        const int y = targets.hard[s];
        if (y < 0 || static_cast<std::size_t>(y) >= k)
          throw NumericError("hard target " + std::to_string(y) + " outside [0, k_seen)");
        out.loss -= log_softmax(a.logits)[static_cast<std::size_t>(y)];
        for (std::size_t c = 0; c < k; ++c) dz[c] = p[c] - (c == static_cast<std::size_t>(y) ? 1.0 : 0.0);
        break;
      }
      case LossKind::cross_entropy_soft: {
        const Features& t = targets.soft[s];
        check_distribution(t, k);
        const auto lp = log_softmax(a.logits);
        for (std::size_t c = 0; c < k; ++c) {
          if (t[c] != 0.0) out.loss -= t[c] * lp[c];
          dz[c] = p[c] - t[c];
        }
        break;
      }
      case LossKind::mse_probs: {
        const Features& t = targets.soft[s];
        check_distribution(t, k);
        const double inv_k = 1.0 / static_cast<double>(k);
        std::vector<double> dp(k);
        double dot = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
          const double diff = p[c] - t[c];
          out.loss += diff * diff * inv_k;
          dp[c] = 2.0 * diff * inv_k;
          dot += dp[c] * p[c];
        }
        for (std::size_t c = 0; c < k; ++c) dz[c] = p[c] * (dp[c] - dot);
        break;
      }
    }
    backprop(model, batch[s], a, dz, scale, out.grad);
  }
  out.loss *= scale;
  if (!std::isfinite(out.loss)) throw NumericError("non-finite loss");
  return out;
}

void sgd_step(MlpModel& model, const MlpModel& grads, MlpModel& velocity, double lr, double momentum) {
  if (!model.same_shape(grads) || !model.same_shape(velocity))
    throw NumericError("sgd_step shape mismatch");
  auto theta = model.params();
  auto g = grads.params();
  auto v = velocity.params();
  for (std::size_t i = 0; i < theta.size(); ++i) {
    v[i] = momentum * v[i] + g[i];
    theta[i] -= lr * v[i];
  }
}

void ema_update(MlpModel& teacher, const MlpModel& student, double decay) {
  if (!teacher.same_shape(student)) throw NumericError("ema_update shape mismatch");
  auto t = teacher.params();
  auto s = student.params();
  if (decay == 0.0) {
    std::copy(s.begin(), s.end(), t.begin());
    return;
  }
  // Written as an increment so that teacher == student is a fixed point.
  const double w = 1.0 - decay;
  for (std::size_t i = 0; i < t.size(); ++i) t[i] += w * (s[i] - t[i]);
}

std::size_t argmax(std::span<const double> v) noexcept {
  std::size_t best = 0;
  for (std::size_t c = 1; c < v.size(); ++c)
    if (v[c] > v[best]) best = c;
  return best;
}

double accuracy(const MlpModel& model, std::span<const LabeledSample> test) {
  if (test.empty()) throw ConfigError("accuracy on an empty test set");
  std::size_t correct = 0;
  for (const auto& s : test) {
    check_input(model, s.x);
    const Activations a = run(model, s.x);
    if (argmax(a.logits) == static_cast<std::size_t>(s.label)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

void TrainConfig::validate() const {
  if (hidden == 0) throw ConfigError("train: hidden must be > 0");
  if (batch_size == 0) throw ConfigError("train: batch_size must be > 0");
  if (unlabeled_batch_size == 0) throw ConfigError("train: unlabeled_batch_size must be > 0");
  if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must lie in [0, 1)");
  if (!(lambda_max >= 0.0)) throw ConfigError("train: lambda_max must be >= 0");
  // Thresholds above 1 are allowed: they switch pseudo-labelling off.
  if (!(tau >= 0.0)) throw ConfigError("train: tau must be >= 0");
  if (!(noise_weak >= 0.0)) throw ConfigError("train: noise_weak must be >= 0");
  if (!(noise_strong >= noise_weak)) throw ConfigError("train: noise_strong must be >= noise_weak");
  if (!(mixup_alpha > 0.0)) throw ConfigError("train: mixup_alpha must be > 0");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("train: ema_decay must lie in [0, 1)");
}

double unlabeled_weight(const TrainConfig& cfg, std::size_t epoch) noexcept {
  if (cfg.rampup_epochs == 0) return cfg.lambda_max;
  const double ramp = static_cast<double>(epoch) / static_cast<double>(cfg.rampup_epochs);
  return cfg.lambda_max * std::min(1.0, ramp);
}

void write_model_text(std::ostream& out, const MlpModel& model) {
  out << "mlp " << model.input_dim() << ' ' << model.hidden() << ' ' << model.classes() << '\n';
  for (double v : model.params()) out << csv::format_shortest(v) << '\n';
}

}  // namespace ressl
