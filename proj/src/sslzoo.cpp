#include "ressl/sslzoo.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "ressl/error.hpp"
#include "ressl/rng.hpp"

namespace ressl {

namespace {

struct UnlabeledTerm {
  double loss = 0.0;
  std::optional<MlpModel> grad;  // empty when nothing contributes
  std::size_t masked = 0;
  std::size_t total = 0;
};

// Cycles through the unlabeled set in seeded passes.
class UnlabeledSampler {
 public:
  UnlabeledSampler(std::size_t n, std::uint64_t seed) : n_(n), seed_(seed) { reshuffle(); }

  std::vector<std::size_t> next(std::size_t count) {
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
      if (pos_ == order_.size()) {
        ++pass_;
        reshuffle();
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), make_rng(seed_, "unlabeled-batches", {pass_}));
    pos_ = 0;
  }

  std::size_t n_;
  std::uint64_t seed_;
  std::uint64_t pass_ = 0;
  std::size_t pos_ = 0;
  std::vector<std::size_t> order_;
};

std::vector<Features> gather(const std::vector<Features>& src, std::span<const std::size_t> idx) {
  std::vector<Features> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(src[i]);
  return out;
}

// x + sigma * z with z standard normal; sigma = 0 returns x unchanged.
std::vector<Features> perturb(std::span<const Features> xs, double sigma, Rng& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<Features> out(xs.begin(), xs.end());
  for (auto& x : out)
    for (double& v : x) v += sigma * z(rng);
  return out;
}

// Adds w * g into acc, skipping exact zeros so that a vanishing unlabeled
// term cannot flip the sign of a zero supervised gradient.
void add_scaled(MlpModel& acc, const MlpModel& g, double w) {
  auto a = acc.params();
  auto b = g.params();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (b[i] != 0.0) a[i] += w * b[i];
  }
}

void scale_grad(MlpModel& g, double s) {
  for (double& v : g.params()) v *= s;
}

// Hard cross-entropy on the masked subset, averaged over the full batch.
UnlabeledTerm masked_hard_ce(const MlpModel& model, const std::vector<Features>& inputs,
                             const std::vector<int>& labels, const std::vector<bool>& mask) {
  UnlabeledTerm term;
  term.total = inputs.size();
  std::vector<Features> xs;
  std::vector<int> ys;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!mask[i]) continue;
    xs.push_back(inputs[i]);
    ys.push_back(labels[i]);
  }
  term.masked = xs.size();
  if (xs.empty()) return term;
  LossGrad lg = loss_and_grad(model, xs, {ys, {}}, LossKind::cross_entropy_hard);
  const double frac = static_cast<double>(xs.size()) / static_cast<double>(inputs.size());
  term.loss = lg.loss * frac;
  scale_grad(lg.grad, frac);
  term.grad = std::move(lg.grad);
  return term;
}

// Per-method unlabeled objective. Hooks default to no-ops.
class Method {
 public:
  virtual ~Method() = default;
  virtual bool uses_unlabeled() const { return true; }
  virtual bool logs_mask() const { return false; }
  virtual void begin(const MlpModel&) {}
  virtual UnlabeledTerm term(const MlpModel& student, std::span<const std::size_t> idx,
                             std::size_t epoch, Rng& rng) = 0;
  virtual void after_step(const MlpModel&) {}
  virtual void end_epoch(const MlpModel&, std::size_t) {}
  virtual const MlpModel* teacher() const { return nullptr; }
};

class Supervised final : public Method {
 public:
  bool uses_unlabeled() const override { return false; }
  UnlabeledTerm term(const MlpModel&, std::span<const std::size_t>, std::size_t, Rng&) override {
    return {};
  }
};

class PseudoLabel final : public Method {
 public:
  PseudoLabel(const DatasetBundle& b, const TrainConfig& c) : bundle_(b), cfg_(c) {}
  bool logs_mask() const override { return true; }

  UnlabeledTerm term(const MlpModel& student, std::span<const std::size_t> idx, std::size_t,
                     Rng&) override {
    const auto xs = gather(bundle_.unlabeled, idx);
    std::vector<int> labels(xs.size());
    std::vector<bool> mask(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const auto p = forward(student, xs[i]).probs;
      const std::size_t c = argmax(p);
      labels[i] = static_cast<int>(c);
      mask[i] = p[c] >= cfg_.tau;
    }
    return masked_hard_ce(student, xs, labels, mask);
  }

 private:
  const DatasetBundle& bundle_;
  const TrainConfig& cfg_;
};

class PiModel final : public Method {
 public:
  PiModel(const DatasetBundle& b, const TrainConfig& c) : bundle_(b), cfg_(c) {}

  UnlabeledTerm term(const MlpModel& student, std::span<const std::size_t> idx, std::size_t,
                     Rng& rng) override {
    const auto xs = gather(bundle_.unlabeled, idx);
    const auto view1 = perturb(xs, cfg_.noise_weak, rng);
    const auto view2 = perturb(xs, cfg_.noise_weak, rng);
    std::vector<Features> targets;
    targets.reserve(xs.size());
    for (const auto& x : view2) targets.push_back(forward(student, x).probs);
    LossGrad lg = loss_and_grad(student, view1, {{}, targets}, LossKind::mse_probs);
    UnlabeledTerm term;
    term.loss = lg.loss;
    term.total = xs.size();
    term.grad = std::move(lg.grad);
    return term;
  }

 private:
  const DatasetBundle& bundle_;
  const TrainConfig& cfg_;
};

class Ict final : public Method {
 public:
  Ict(const DatasetBundle& b, const TrainConfig& c) : bundle_(b), cfg_(c) {}

  void begin(const MlpModel& student) override { teacher_ = student; }

  UnlabeledTerm term(const MlpModel& student, std::span<const std::size_t> idx, std::size_t,
                     Rng& rng) override {
    const auto a = gather(bundle_.unlabeled, idx);
    std::vector<std::size_t> partner(idx.begin(), idx.end());
    std::shuffle(partner.begin(), partner.end(), rng);
    const auto b = gather(bundle_.unlabeled, partner);
    const double lam = sample_symmetric_beta(rng, cfg_.mixup_alpha);
    const MixedBatch mixed = ict_mix(teacher_, a, b, lam);
    LossGrad lg = loss_and_grad(student, mixed.inputs, {{}, mixed.targets}, LossKind::mse_probs);
    UnlabeledTerm term;
    term.loss = lg.loss;
    term.total = a.size();
    term.grad = std::move(lg.grad);
    return term;
  }

  void after_step(const MlpModel& student) override { ema_update(teacher_, student, cfg_.ema_decay); }
  const MlpModel* teacher() const override { return &teacher_; }

 private:
  const DatasetBundle& bundle_;
  const TrainConfig& cfg_;
  MlpModel teacher_;
};

class FixMatchLite final : public Method {
 public:
  FixMatchLite(const DatasetBundle& b, const TrainConfig& c) : bundle_(b), cfg_(c) {}
  bool logs_mask() const override { return true; }

  UnlabeledTerm term(const MlpModel& student, std::span<const std::size_t> idx, std::size_t,
                     Rng& rng) override {
    const auto xs = gather(bundle_.unlabeled, idx);
    const auto weak = perturb(xs, cfg_.noise_weak, rng);
    const auto strong = perturb(xs, cfg_.noise_strong, rng);
    std::vector<int> labels(xs.size());
    std::vector<bool> mask(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const auto p = forward(student, weak[i]).probs;
      const std::size_t c = argmax(p);
      labels[i] = static_cast<int>(c);
      mask[i] = p[c] >= cfg_.tau;
    }
    return masked_hard_ce(student, strong, labels, mask);
  }

 private:
  const DatasetBundle& bundle_;
  const TrainConfig& cfg_;
};

class UasdLite final : public Method {
 public:
  UasdLite(const DatasetBundle& b, const TrainConfig& c, const TrainObserver* obs)
      : bundle_(b), cfg_(c), observer_(obs), ensemble_(b.unlabeled.size()) {}
  bool logs_mask() const override { return true; }

  UnlabeledTerm term(const MlpModel& student, std::span<const std::size_t> idx, std::size_t epoch,
                     Rng&) override {
    UnlabeledTerm term;
    term.total = idx.size();
    if (epoch == 0) return term;  // no ensemble yet
    std::vector<Features> xs;
    std::vector<Features> targets;
    for (std::size_t i : idx) {
      const Features& e = ensemble_[i];
      if (e[argmax(e)] < cfg_.tau) continue;
      xs.push_back(bundle_.unlabeled[i]);
      targets.push_back(e);
    }
    term.masked = xs.size();
    if (xs.empty()) return term;
    LossGrad lg = loss_and_grad(student, xs, {{}, targets}, LossKind::cross_entropy_soft);
    const double frac = static_cast<double>(xs.size()) / static_cast<double>(idx.size());
    term.loss = lg.loss * frac;
    scale_grad(lg.grad, frac);
    term.grad = std::move(lg.grad);
    return term;
  }

  // Running mean of the epoch-end predictions on every unlabeled sample.
  void end_epoch(const MlpModel& student, std::size_t epoch) override {
    ++rounds_;
    const double inv = 1.0 / static_cast<double>(rounds_);
    for (std::size_t i = 0; i < bundle_.unlabeled.size(); ++i) {
      const auto p = forward(student, bundle_.unlabeled[i]).probs;
      Features& e = ensemble_[i];
      if (e.empty()) e.assign(p.size(), 0.0);
      for (std::size_t c = 0; c < p.size(); ++c) e[c] += (p[c] - e[c]) * inv;
    }
    if (observer_ && observer_->on_ensemble) observer_->on_ensemble(epoch, ensemble_);
  }

 private:
  const DatasetBundle& bundle_;
  const TrainConfig& cfg_;
  const TrainObserver* observer_;
  std::vector<Features> ensemble_;
  std::size_t rounds_ = 0;
};

std::unique_ptr<Method> make_method(Algorithm a, const DatasetBundle& b, const TrainConfig& c,
                                    const TrainObserver* obs) {
  switch (a) {
    case Algorithm::supervised: return std::make_unique<Supervised>();
    case Algorithm::pseudolabel: return std::make_unique<PseudoLabel>(b, c);
    case Algorithm::pimodel: return std::make_unique<PiModel>(b, c);
    case Algorithm::ict: return std::make_unique<Ict>(b, c);
    case Algorithm::fixmatch_lite: return std::make_unique<FixMatchLite>(b, c);
    case Algorithm::uasd_lite: return std::make_unique<UasdLite>(b, c, obs);
  }
  throw ConfigError("unknown algorithm");
}

void require_finite(const MlpModel& m) {
  for (double v : m.params()) {
    if (!std::isfinite(v)) throw NumericError("model parameters diverged");
  }
}

}  // namespace

std::string_view algorithm_name(Algorithm a) noexcept {
  switch (a) {
    case Algorithm::supervised: return "Supervised";
    case Algorithm::pseudolabel: return "PseudoLabel";
    case Algorithm::pimodel: return "PiModel";
    case Algorithm::ict: return "ICT";
    case Algorithm::fixmatch_lite: return "FixMatch-lite";
    case Algorithm::uasd_lite: return "UASD-lite";
  }
  return "?";
}

std::optional<Algorithm> parse_algorithm(std::string_view name) noexcept {
  static constexpr std::string_view ids[] = {"supervised", "pseudolabel",   "pimodel",
                                             "ict",        "fixmatch_lite", "uasd_lite"};
  for (std::size_t i = 0; i < std::size(kAllAlgorithms); ++i) {
    if (name == ids[i] || name == algorithm_name(kAllAlgorithms[i])) return kAllAlgorithms[i];
  }
  return std::nullopt;
}

MixedBatch ict_mix(const MlpModel& teacher, std::span<const Features> a, std::span<const Features> b,
                   double lam) {
  if (a.size() != b.size()) throw NumericError("ict_mix: batch sizes differ");
  MixedBatch out;
  out.inputs.reserve(a.size());
  out.targets.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) throw NumericError("ict_mix: feature sizes differ");
    Features x(a[i].size());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = lam * a[i][j] + (1.0 - lam) * b[i][j];
    const auto pa = forward(teacher, a[i]).probs;
    const auto pb = forward(teacher, b[i]).probs;
    Features t(pa.size());
    for (std::size_t c = 0; c < t.size(); ++c) t[c] = lam * pa[c] + (1.0 - lam) * pb[c];
    out.inputs.push_back(std::move(x));
    out.targets.push_back(std::move(t));
  }
  return out;
}

TrainResult train(Algorithm algorithm, const DatasetBundle& bundle, const TrainConfig& cfg,
                  std::uint64_t seed, const TrainObserver* observer) {
  cfg.validate();
  if (bundle.labeled.empty()) throw ConfigError("training needs a non-empty labeled set");

  auto method = make_method(algorithm, bundle, cfg, observer);
  const bool unlabeled = method->uses_unlabeled() && !bundle.unlabeled.empty();

  TrainResult res;
  res.model = init_mlp(bundle.d, cfg.hidden, bundle.k_seen, derive_seed(seed, "init"));
  MlpModel velocity(bundle.d, cfg.hidden, bundle.k_seen);
  method->begin(res.model);

  const std::size_t n_l = bundle.labeled.size();
  const std::size_t steps = (n_l + cfg.batch_size - 1) / cfg.batch_size;
  std::optional<UnlabeledSampler> sampler;
  if (unlabeled) sampler.emplace(bundle.unlabeled.size(), derive_seed(seed, "unlabeled"));

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n_l);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), make_rng(seed, "shuffle", {epoch}));
    const double weight = unlabeled_weight(cfg, epoch);

    EpochLog log;
    log.epoch = epoch;
    double u_loss = 0.0;
    std::size_t masked = 0;
    std::size_t seen_u = 0;

    for (std::size_t step = 0; step < steps; ++step) {
      const std::size_t lo = step * cfg.batch_size;
      const std::size_t hi = std::min(n_l, lo + cfg.batch_size);
      std::vector<Features> xs;
      std::vector<int> ys;
      for (std::size_t k = lo; k < hi; ++k) {
        xs.push_back(bundle.labeled[order[k]].x);
        ys.push_back(bundle.labeled[order[k]].label);
      }
      LossGrad sup = loss_and_grad(res.model, xs, {ys, {}}, LossKind::cross_entropy_hard);
      log.labeled_loss += sup.loss / static_cast<double>(steps);

      if (unlabeled) {
        const auto idx = sampler->next(cfg.unlabeled_batch_size);
        Rng rng = make_rng(seed, "unlabeled-noise", {epoch, step});
        UnlabeledTerm term = method->term(res.model, idx, epoch, rng);
        u_loss += term.loss / static_cast<double>(steps);
        masked += term.masked;
        seen_u += term.total;
        if (weight != 0.0 && term.grad) add_scaled(sup.grad, *term.grad, weight);
      }

      sgd_step(res.model, sup.grad, velocity, cfg.lr, cfg.momentum);
      method->after_step(res.model);
      if (observer && observer->on_step) observer->on_step(epoch, step, res.model, method->teacher());
    }
    require_finite(res.model);
    method->end_epoch(res.model, epoch);

    if (unlabeled) {
      log.unlabeled_loss = u_loss;
      if (method->logs_mask())
        log.mask_fraction = seen_u ? static_cast<double>(masked) / static_cast<double>(seen_u) : 0.0;
    }
    res.epoch_log.push_back(log);
  }
  res.test_accuracy = accuracy(res.model, bundle.test);
  return res;
}

TrainResult train_supervised(const DatasetBundle& b, const TrainConfig& c, std::uint64_t seed) {
  return train(Algorithm::supervised, b, c, seed);
}
TrainResult train_pseudolabel(const DatasetBundle& b, const TrainConfig& c, std::uint64_t seed) {
  return train(Algorithm::pseudolabel, b, c, seed);
}
TrainResult train_pimodel(const DatasetBundle& b, const TrainConfig& c, std::uint64_t seed) {
  return train(Algorithm::pimodel, b, c, seed);
}
TrainResult train_ict(const DatasetBundle& b, const TrainConfig& c, std::uint64_t seed,
                      const TrainObserver* observer) {
  return train(Algorithm::ict, b, c, seed, observer);
}
TrainResult train_fixmatch_lite(const DatasetBundle& b, const TrainConfig& c, std::uint64_t seed) {
  return train(Algorithm::fixmatch_lite, b, c, seed);
}
TrainResult train_uasd_lite(const DatasetBundle& b, const TrainConfig& c, std::uint64_t seed,
                            const TrainObserver* observer) {
  return train(Algorithm::uasd_lite, b, c, seed, observer);
}

}  // namespace ressl
