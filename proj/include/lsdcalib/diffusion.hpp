#pragma once

// Linear surrogate diffusion over the se(3) correction twist, plus the naive
// and multi-range iteration baselines.
//
// The diffusion variable x is the left correction from the initial extrinsic
// T0: the extrinsic at state x is exp(x) * T0. The forward process is a
// deterministic interpolation towards x_T = 0, so x_T = 0 corresponds to T0
// and x_0 to the ground truth.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lsdcalib/denoiser.hpp"
#include "lsdcalib/errors.hpp"
#include "lsdcalib/hash.hpp"
#include "lsdcalib/noise_schedule.hpp"
#include "lsdcalib/se3.hpp"

namespace lsdcalib {

/// Anything that returns a correction twist for a current extrinsic.
template <typename F>
concept CorrectionFn = std::invocable<F&, const SE3Transform&> &&
                       std::convertible_to<std::invoke_result_t<F&, const SE3Transform&>, Twist6>;

enum class SamplerMode { deterministic, ancestral_stochastic };

inline std::string to_string(SamplerMode m) {
  return m == SamplerMode::deterministic ? "deterministic" : "ancestral";
}

struct DiffusionConfig {
  NoiseSchedule schedule = build_cosine_schedule();
  int nfe = 10;
  SamplerMode mode = SamplerMode::deterministic;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (nfe < 1 || nfe > schedule.total_steps()) {
      throw InvalidArgument("nfe must lie in [1, T]");
    }
  }
};

struct TraceStep {
  int t = 0;                  // timestep of the input state
  int t_next = 0;             // timestep after the reverse step
  Twist6 x_t;                 // input state
  Twist6 x0_hat;              // surrogate estimate of x_0
  Twist6 x_next;              // state after the reverse step
  SE3Transform estimate;      // exp(x0_hat) * T0
};

struct RefinementTrace {
  std::vector<TraceStep> steps;
};

struct LsdResult {
  SE3Transform estimate;
  RefinementTrace trace;
  std::size_t prepare_count = 0;
  std::size_t denoise_calls = 0;
};

// ---------------------------------------------------------------------------
// Forward process

/// sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps.
inline Twist6 forward_sample(const Twist6& x0, int t, const NoiseSchedule& schedule,
                             const Twist6& eps = Twist6::zero()) {
  const double ab = schedule.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

struct TrainingPair {
  Twist6 x_t;
  Twist6 x0;
};

/// x0 = log(T_gt * T0^-1), x_t its forward sample with zero noise.
inline TrainingPair make_training_pair(const SE3Transform& t_gt, const SE3Transform& t0, int t,
                                       const NoiseSchedule& schedule) {
  const Twist6 x0 = log_map(compose(t_gt, invert(t0)));
  return {forward_sample(x0, t, schedule), x0};
}

/// Training objective: sum of absolute component differences.
inline double l1_loss(const Twist6& x0, const Twist6& x0_hat) {
  return (x0.vector() - x0_hat.vector()).cwiseAbs().sum();
}

// ---------------------------------------------------------------------------
// Reverse process

/// x0_hat = log(exp(D(C, exp(x_t) T0)) * exp(x_t)).
template <CorrectionFn F>
Twist6 surrogate_x0(F&& denoise, const SE3Transform& t0, const Twist6& x_t) {
  const SE3Transform step = exp_map(x_t);
  const Twist6 dxi = denoise(compose(step, t0));
  return log_map(compose(exp_map(dxi), step));
}

inline Twist6 surrogate_x0(DenoiserSession& session, const SE3Transform& t0, const Twist6& x_t) {
  return surrogate_x0([&](const SE3Transform& t) { return session.denoise(t); }, t0, x_t);
}

/// Posterior mean (and optional ancestral noise) for a jump t_hi -> t_lo,
/// using the effective alpha = alpha_bar(t_hi) / alpha_bar(t_lo).
inline Twist6 ancestral_step(const Twist6& x_t, const Twist6& x0_hat, int t_hi, int t_lo,
                             const NoiseSchedule& schedule, SamplerMode mode, Rng* rng = nullptr) {
  if (!(t_hi > t_lo && t_lo >= 0 && t_hi <= schedule.total_steps())) {
    throw InvalidArgument("ancestral_step needs T >= t_hi > t_lo >= 0, got t_hi=" + std::to_string(t_hi) +
                          " t_lo=" + std::to_string(t_lo));
  }
  // alpha_bar(0) = 1 collapses the mean to x0_hat and the variance to 0.
  if (t_lo == 0) return x0_hat;

  const double ab_hi = schedule.alpha_bar(t_hi);
  const double ab_lo = schedule.alpha_bar(t_lo);
  const double alpha = ab_hi / ab_lo;
  const double denom = 1.0 - ab_hi;
  const Twist6 mean =
      (std::sqrt(alpha) * (1.0 - ab_lo) / denom) * x_t + (std::sqrt(ab_lo) * (1.0 - alpha) / denom) * x0_hat;
  if (mode == SamplerMode::deterministic) return mean;

  if (rng == nullptr) throw InvalidArgument("stochastic ancestral_step needs a random generator");
  const double variance = (1.0 - alpha) * (1.0 - ab_lo) / denom;
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector6 z;
  for (int i = 0; i < 6; ++i) z[i] = normal(*rng);
  return mean + std::sqrt(variance) * Twist6(z);
}

namespace detail {

template <CorrectionFn F>
LsdResult lsd_loop(F&& denoise, const SE3Transform& t0, const DiffusionConfig& config) {
  config.validate();
  const auto taus = timestep_subsequence(config.schedule.total_steps(), config.nfe);
  Rng rng(config.rng_seed);
  LsdResult out;
  out.trace.steps.reserve(static_cast<std::size_t>(config.nfe));

  Twist6 x = Twist6::zero();
  for (std::size_t i = 0; i + 1 < taus.size(); ++i) {
    const int t_hi = taus[i];
    const int t_lo = taus[i + 1];
    TraceStep rec;
    rec.t = t_hi;
    rec.t_next = t_lo;
    rec.x_t = x;
    try {
      rec.x0_hat = surrogate_x0(denoise, t0, x);
      ++out.denoise_calls;
      x = ancestral_step(x, rec.x0_hat, t_hi, t_lo, config.schedule, config.mode, &rng);
    } catch (const Error& e) {
      throw StepError("lsd step " + std::to_string(i) + " (t=" + std::to_string(t_hi) + ")", e);
    }
    rec.x_next = x;
    rec.estimate = compose(exp_map(rec.x0_hat), t0);
    out.trace.steps.push_back(std::move(rec));
  }
  out.estimate = compose(exp_map(x), t0);
  return out;
}

}  // namespace detail

/// Reverse process from x_T = 0 with one denoiser call per subsequence step,
/// all against the same prepared session.
inline LsdResult lsd_reverse(DenoiserSession& session, const SE3Transform& t0, const DiffusionConfig& config) {
  LsdResult out = detail::lsd_loop([&](const SE3Transform& t) { return session.denoise(t); }, t0, config);
  out.prepare_count = session.prepare_count();
  return out;
}

/// Same reverse process, but a fresh session (and a fresh prepare) for every
/// denoiser call. Exists to measure what buffering saves.
inline LsdResult lsd_reverse_unbuffered(Denoiser& backend, const Condition& condition, const SE3Transform& t0,
                                        const DiffusionConfig& config) {
  std::size_t prepares = 0;
  LsdResult out = detail::lsd_loop(
      [&](const SE3Transform& t) {
        DenoiserSession session(backend, condition, t0);
        prepares += session.prepare_count();
        return session.denoise(t);
      },
      t0, config);
  out.prepare_count = prepares;
  return out;
}

/// T_{i+1} = exp(D(C, T_i)) * T_i, n times from T0.
inline SE3Transform naive_iterate(DenoiserSession& session, const SE3Transform& t0, int n) {
  if (n < 1) throw InvalidArgument("naive_iterate needs n >= 1");
  SE3Transform t = t0;
  for (int i = 0; i < n; ++i) {
    try {
      t = compose(exp_map(session.denoise(t)), t);
    } catch (const Error& e) {
      throw StepError("naive iteration " + std::to_string(i), e);
    }
  }
  return t;
}

/// One denoiser application: exp(D(C, T0)) * T0.
inline SE3Transform single_shot(DenoiserSession& session, const SE3Transform& t0) {
  return naive_iterate(session, t0, 1);
}

struct RangeStage {
  Denoiser* denoiser = nullptr;
  std::string label;
};

struct StageRecord {
  std::string label;
  SE3Transform estimate;
  std::uint64_t condition_fingerprint = 0;
};

struct MultiRangeResult {
  SE3Transform estimate;
  std::vector<StageRecord> stages;
};

/// Chains separately specialised denoisers, one application each, feeding
/// every stage the previous stage's output and the same condition.
inline MultiRangeResult multi_range_run(std::span<const RangeStage> stages, const Condition& condition,
                                        const SE3Transform& t0) {
  if (stages.empty()) throw InvalidArgument("multi_range_run needs at least one stage");
  MultiRangeResult out;
  SE3Transform t = t0;
  for (const auto& stage : stages) {
    if (stage.denoiser == nullptr) throw InvalidArgument("stage '" + stage.label + "' has no denoiser");
    try {
      DenoiserSession session(*stage.denoiser, condition, t);
      t = single_shot(session, t);
      out.stages.push_back({stage.label, t, session.condition().fingerprint()});
    } catch (const Error& e) {
      throw StepError("stage " + stage.label, e);
    }
  }
  out.estimate = t;
  return out;
}

}  // namespace lsdcalib
