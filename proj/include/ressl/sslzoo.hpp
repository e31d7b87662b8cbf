#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ressl/datagen.hpp"
#include "ressl/learner.hpp"

namespace ressl {

enum class Algorithm { supervised, pseudolabel, pimodel, ict, fixmatch_lite, uasd_lite };

inline constexpr Algorithm kAllAlgorithms[] = {Algorithm::supervised,    Algorithm::pseudolabel,
                                               Algorithm::pimodel,       Algorithm::ict,
                                               Algorithm::fixmatch_lite, Algorithm::uasd_lite};

// Display name used in reports ("Supervised", "PseudoLabel", ...).
std::string_view algorithm_name(Algorithm a) noexcept;
// Accepts the display name or the lowercase id ("fixmatch_lite").
std::optional<Algorithm> parse_algorithm(std::string_view name) noexcept;

struct EpochLog {
  std::size_t epoch = 0;
  double labeled_loss = 0.0;
  std::optional<double> unlabeled_loss;
  std::optional<double> mask_fraction;
};

struct TrainResult {
  MlpModel model;
  double test_accuracy = 0.0;
  std::vector<EpochLog> epoch_log;
};

// Optional hooks for inspecting a run while it trains.
struct TrainObserver {
  // After every optimiser step; teacher is non-null for ICT.
  std::function<void(std::size_t epoch, std::size_t step, const MlpModel& student,
                     const MlpModel* teacher)>
      on_step;
  // After UASD refreshes its running-mean ensemble at the end of an epoch.
  std::function<void(std::size_t epoch, std::span<const Features> ensemble)> on_ensemble;
};

// Every procedure draws its labeled batches, initial weights and unlabeled
// batches from independent streams of `seed`, so an unlabeled term with zero
// weight leaves the run bit-identical to train_supervised.
TrainResult train(Algorithm algorithm, const DatasetBundle& bundle, const TrainConfig& cfg,
                  std::uint64_t seed, const TrainObserver* observer = nullptr);

TrainResult train_supervised(const DatasetBundle& bundle, const TrainConfig& cfg, std::uint64_t seed);
TrainResult train_pseudolabel(const DatasetBundle& bundle, const TrainConfig& cfg, std::uint64_t seed);
TrainResult train_pimodel(const DatasetBundle& bundle, const TrainConfig& cfg, std::uint64_t seed);
TrainResult train_ict(const DatasetBundle& bundle, const TrainConfig& cfg, std::uint64_t seed,
                      const TrainObserver* observer = nullptr);
TrainResult train_fixmatch_lite(const DatasetBundle& bundle, const TrainConfig& cfg,
                                std::uint64_t seed);
TrainResult train_uasd_lite(const DatasetBundle& bundle, const TrainConfig& cfg, std::uint64_t seed,
                            const TrainObserver* observer = nullptr);

// ICT interpolation: inputs lam*a + (1-lam)*b and targets
// lam*teacher(a) + (1-lam)*teacher(b).
struct MixedBatch {
  std::vector<Features> inputs;
  std::vector<Features> targets;
};
MixedBatch ict_mix(const MlpModel& teacher, std::span<const Features> a, std::span<const Features> b,
                   double lam);

}  // namespace ressl
