#pragma once

#include <cstddef>
#include <string_view>

// Frozen training and data defaults. Bump kDefaultsVersion whenever a value
// changes; it is written into every report.
namespace ressl::defaults {

inline constexpr std::string_view kDefaultsVersion = "ressl-defaults-v1";

inline constexpr std::size_t kHidden = 32;
inline constexpr std::size_t kEpochs = 100;
inline constexpr std::size_t kBatchSize = 64;
inline constexpr std::size_t kUnlabeledBatchSize = 128;
inline constexpr double kLearningRate = 0.05;
inline constexpr double kMomentum = 0.9;
inline constexpr double kLambdaMax = 1.0;
inline constexpr std::size_t kRampupEpochs = 30;
inline constexpr double kTau = 0.95;
inline constexpr double kNoiseWeak = 0.05;
inline constexpr double kNoiseStrong = 0.25;
inline constexpr double kMixupAlpha = 1.0;
inline constexpr double kEmaDecay = 0.99;

// Default desk-scale mixture: 5 seen + 5 near-unseen classes.
inline constexpr std::size_t kMixtureDim = 8;
inline constexpr std::size_t kSeenClasses = 5;
inline constexpr std::size_t kUnseenClasses = 5;
inline constexpr double kMixtureSigma = 0.15;
inline constexpr double kMeanLow = 0.2;
inline constexpr double kMeanHigh = 0.8;
inline constexpr std::size_t kPoolSize = 500;
inline constexpr std::size_t kLabeled = 100;
inline constexpr std::size_t kTestPerClass = 200;

inline constexpr double kDeltaGlobal = -0.020;
inline constexpr double kDeltaWorst = 0.0;
inline constexpr double kDeltaBest = 0.0;

}  // namespace ressl::defaults
