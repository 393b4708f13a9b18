#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "echelon/config.hpp"
#include "echelon/rng.hpp"

namespace echelon {

inline constexpr double kIntensityFloor = 0.08;
inline constexpr double kDriftClip = 0.6;

struct TrapezoidalPulse {
  std::int64_t start = 0;
  std::int64_t duration = 1;
  double height = 0.0;
  bool operator==(const TrapezoidalPulse&) const = default;
};

// Unit shape: linear ramp over [0, 0.15], plateau to 0.75, linear ramp down to 1.
double pulse_shape(double u);
// h * shape((t - start) / duration); zero outside [start, start + duration].
double eval_pulse(const TrapezoidalPulse& pulse, double t);
// Adds the pulse onto path[start .. min(start + duration, path.size() - 1)].
void add_pulse(std::span<double> path, const TrapezoidalPulse& pulse);

// A(0) = a0, A(t) = clip(phi A(t-1) + sigma N(0,1), +-0.6). Consumes T-1 normals.
std::vector<double> ar1_path(double phi, double sigma, double a0, std::int64_t horizon, Rng& rng);

struct ItemCoefficients {
  double base_rate = 0.0;  // lambda-bar_i
  double yearly_amp1 = 0.0;
  double yearly_amp2 = 0.0;
  double yearly_phase = 0.0;
  double weekly_amp = 0.0;
  double weekly_phase = 0.0;
  double ar_coeff = 0.0;
  double ar_sigma = 0.0;
  double ar_init = 0.0;
  double burst_rate = 0.0;  // after the rate multiplier, capped at 1
  double sensitivity = 0.0;
  double unit_volume = 0.0;
  std::vector<TrapezoidalPulse> bursts;
  std::vector<double> drift;  // A_i(t), length T

  bool operator==(const ItemCoefficients&) const = default;
};

double yearly_component(const ItemCoefficients& c, std::int64_t t);
double weekly_component(const ItemCoefficients& c, std::int64_t t);

// Deterministic demand rate lambda (T x C, row-major by time) together with
// every coefficient drawn to build it.
//
// Stream contract: the macro-shock process draws from the "shock" stream of
// the master seed; item i draws from "demand:item:<i>" and its sub-streams
// ("coeff", "ar", "burst", "sample"). Items are therefore independent of C and
// of each other, and per-item construction may run in any order.
class IntensityTensor {
 public:
  IntensityTensor() = default;

  std::int64_t horizon() const { return horizon_; }
  std::int64_t items() const { return items_; }
  double at(std::int64_t t, std::int64_t i) const { return lambda_[static_cast<std::size_t>(t * items_ + i)]; }
  std::span<const double> row(std::int64_t t) const {
    return {lambda_.data() + t * items_, static_cast<std::size_t>(items_)};
  }
  const std::vector<double>& values() const { return lambda_; }
  const ItemCoefficients& item(std::int64_t i) const { return coeffs_[static_cast<std::size_t>(i)]; }
  const std::vector<ItemCoefficients>& coefficients() const { return coeffs_; }
  const std::vector<TrapezoidalPulse>& shocks() const { return shocks_; }
  const std::vector<double>& shock_path() const { return shock_path_; }

  // (CT)^-1 sum of lambda.
  double mean_intensity() const;

  // Multiplies lambda for t >= from by `factor`, keeping the floor. Used for
  // mid-run demand injections; coefficients are left untouched.
  void scale_from(std::int64_t from, double factor);

  friend IntensityTensor build_intensity(std::int64_t items, std::int64_t horizon, const DemandKnobs& knobs,
                                         std::uint64_t seed);

 private:
  std::int64_t horizon_ = 0;
  std::int64_t items_ = 0;
  std::vector<double> lambda_;
  std::vector<ItemCoefficients> coeffs_;
  std::vector<TrapezoidalPulse> shocks_;
  std::vector<double> shock_path_;
};

IntensityTensor build_intensity(std::int64_t items, std::int64_t horizon, const DemandKnobs& knobs,
                                std::uint64_t seed);

// Draws only item i's coefficients (burst train and drift path included).
ItemCoefficients draw_item(std::int64_t item, std::int64_t horizon, const DemandKnobs& knobs, std::uint64_t seed);
// Draws the shared macro-shock events.
std::vector<TrapezoidalPulse> draw_shocks(std::int64_t horizon, const DemandKnobs& knobs, std::uint64_t seed);

std::uint64_t item_stream_key(std::uint64_t seed, std::int64_t item);

// Poisson demand y_{i,t} ~ Poisson(lambda_{i,t}); each (i, t) has its own
// counter-based sub-stream, so sampling is order-free and restartable.
class DemandSampler {
 public:
  DemandSampler() = default;
  DemandSampler(std::uint64_t seed, std::int64_t items);

  std::int64_t sample(const IntensityTensor& tensor, std::int64_t t, std::int64_t item) const;
  void sample_row(const IntensityTensor& tensor, std::int64_t t, std::span<std::int64_t> out) const;
  std::vector<std::int64_t> sample_row(const IntensityTensor& tensor, std::int64_t t) const;

 private:
  std::vector<std::uint64_t> keys_;
};

}  // namespace echelon
