#include "echelon/demand.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace echelon {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kRampUpEnd = 0.15;
constexpr double kPlateauEnd = 0.75;
}  // namespace

double pulse_shape(double u) {
  if (u < 0.0 || u > 1.0) return 0.0;
  if (u < kRampUpEnd) return u / kRampUpEnd;
  if (u <= kPlateauEnd) return 1.0;
  return (1.0 - u) / (1.0 - kPlateauEnd);
}

double eval_pulse(const TrapezoidalPulse& pulse, double t) {
  const double u = (t - static_cast<double>(pulse.start)) / static_cast<double>(pulse.duration);
  return pulse.height * pulse_shape(u);
}

void add_pulse(std::span<double> path, const TrapezoidalPulse& pulse) {
  const auto n = static_cast<std::int64_t>(path.size());
  const std::int64_t first = std::max<std::int64_t>(0, pulse.start);
  const std::int64_t last = std::min(pulse.start + pulse.duration, n - 1);
  for (std::int64_t t = first; t <= last; ++t) {
    path[static_cast<std::size_t>(t)] += eval_pulse(pulse, static_cast<double>(t));
  }
}

std::vector<double> ar1_path(double phi, double sigma, double a0, std::int64_t horizon, Rng& rng) {
  std::vector<double> a(static_cast<std::size_t>(std::max<std::int64_t>(horizon, 0)));
  if (a.empty()) return a;
  a[0] = a0;
  for (std::size_t t = 1; t < a.size(); ++t) {
    const double next = phi * a[t - 1] + sigma * rng.normal();
    a[t] = std::clamp(next, -kDriftClip, kDriftClip);
  }
  return a;
}

double yearly_component(const ItemCoefficients& c, std::int64_t t) {
  const double td = static_cast<double>(t);
  return c.yearly_amp1 * std::sin(kTwoPi * td / 365.0 + c.yearly_phase) +
         c.yearly_amp2 * std::sin(2.0 * kTwoPi * td / 365.0 + 0.7 * c.yearly_phase);
}

double weekly_component(const ItemCoefficients& c, std::int64_t t) {
  return c.weekly_amp * std::sin(kTwoPi * static_cast<double>(t % 7) / 7.0 + c.weekly_phase);
}

std::uint64_t item_stream_key(std::uint64_t seed, std::int64_t item) {
  return derive_key(seed, "demand:item:" + std::to_string(item));
}

ItemCoefficients draw_item(std::int64_t item, std::int64_t horizon, const DemandKnobs& k, std::uint64_t seed) {
  const std::uint64_t key = item_stream_key(seed, item);
  Rng coeff(derive_key(key, "coeff"));
  ItemCoefficients c;
  c.base_rate = coeff.uniform(k.base_rate.lo, k.base_rate.hi);
  c.yearly_amp1 = coeff.uniform(k.yearly_amp1.lo, k.yearly_amp1.hi);
  c.yearly_amp2 = coeff.uniform(k.yearly_amp2.lo, k.yearly_amp2.hi);
  c.yearly_phase = coeff.uniform(0.0, kTwoPi);
  c.weekly_amp = coeff.uniform(k.weekly_amp.lo, k.weekly_amp.hi);
  c.weekly_phase = coeff.uniform(0.0, kTwoPi);
  // Always consume the draw so an override never shifts later coefficients.
  const double ar_draw = coeff.uniform(k.ar_coeff.lo, k.ar_coeff.hi);
  c.ar_coeff = k.ar_coeff_override.value_or(ar_draw);
  c.ar_sigma = coeff.uniform(k.ar_sigma.lo, k.ar_sigma.hi);
  c.ar_init = coeff.normal(0.0, k.ar_init_sd);
  c.burst_rate = std::min(1.0, coeff.uniform(k.burst_rate.lo, k.burst_rate.hi) * k.burst_rate_mult);
  c.sensitivity = coeff.uniform(k.sensitivity.lo, k.sensitivity.hi);
  c.unit_volume = coeff.uniform(k.unit_volume.lo, k.unit_volume.hi);

  Rng ar(derive_key(key, "ar"));
  c.drift = ar1_path(c.ar_coeff, c.ar_sigma, c.ar_init, horizon, ar);

  Rng burst(derive_key(key, "burst"));
  for (std::int64_t t = 0; t < horizon; ++t) {
    if (!burst.bernoulli(c.burst_rate)) continue;
    TrapezoidalPulse p;
    p.start = t;
    p.duration = burst.uniform_int(k.burst_duration.lo, k.burst_duration.hi);
    p.height = burst.uniform(k.burst_height.lo, k.burst_height.hi) * k.burst_height_mult;
    c.bursts.push_back(p);
  }
  return c;
}

std::vector<TrapezoidalPulse> draw_shocks(std::int64_t horizon, const DemandKnobs& k, std::uint64_t seed) {
  Rng rng(derive_key(seed, "shock"));
  const std::int64_t base_count = rng.uniform_int(k.shock_count.lo, k.shock_count.hi);
  const std::int64_t count = std::llround(static_cast<double>(base_count) * k.shock_count_mult);
  std::vector<TrapezoidalPulse> shocks;
  shocks.reserve(static_cast<std::size_t>(count));
  for (std::int64_t j = 0; j < count; ++j) {
    TrapezoidalPulse p;
    p.start = rng.uniform_int(0, horizon - 1);
    p.duration = rng.uniform_int(k.shock_duration.lo, k.shock_duration.hi);
    p.height = rng.uniform(k.shock_height.lo, k.shock_height.hi) * k.shock_height_mult;
    shocks.push_back(p);
  }
  return shocks;
}

IntensityTensor build_intensity(std::int64_t items, std::int64_t horizon, const DemandKnobs& knobs,
                                std::uint64_t seed) {
  IntensityTensor out;
  out.items_ = items;
  out.horizon_ = horizon;
  out.shocks_ = draw_shocks(horizon, knobs, seed);
  out.shock_path_.assign(static_cast<std::size_t>(horizon), 0.0);
  for (const auto& p : out.shocks_) add_pulse(out.shock_path_, p);

  out.coeffs_.reserve(static_cast<std::size_t>(items));
  out.lambda_.assign(static_cast<std::size_t>(items * horizon), 0.0);
  std::vector<double> bursts(static_cast<std::size_t>(horizon));
  for (std::int64_t i = 0; i < items; ++i) {
    ItemCoefficients c = draw_item(i, horizon, knobs, seed);
    std::fill(bursts.begin(), bursts.end(), 0.0);
    for (const auto& p : c.bursts) add_pulse(bursts, p);
    for (std::int64_t t = 0; t < horizon; ++t) {
      const auto ts = static_cast<std::size_t>(t);
      const double multiplier = 1.0 + yearly_component(c, t) + weekly_component(c, t) + c.drift[ts] +
                                bursts[ts] + c.sensitivity * out.shock_path_[ts];
      out.lambda_[static_cast<std::size_t>(t * items + i)] = c.base_rate * std::max(kIntensityFloor, multiplier);
    }
    out.coeffs_.push_back(std::move(c));
  }
  return out;
}

double IntensityTensor::mean_intensity() const {
  if (lambda_.empty()) return 0.0;
  double sum = 0.0;
  for (const double v : lambda_) sum += v;
  return sum / static_cast<double>(lambda_.size());
}

void IntensityTensor::scale_from(std::int64_t from, double factor) {
  for (std::int64_t t = std::max<std::int64_t>(0, from); t < horizon_; ++t) {
    for (std::int64_t i = 0; i < items_; ++i) {
      double& v = lambda_[static_cast<std::size_t>(t * items_ + i)];
      v = std::max(v * factor, coeffs_[static_cast<std::size_t>(i)].base_rate * kIntensityFloor);
    }
  }
}

DemandSampler::DemandSampler(std::uint64_t seed, std::int64_t items) {
  keys_.reserve(static_cast<std::size_t>(items));
  for (std::int64_t i = 0; i < items; ++i) keys_.push_back(derive_key(item_stream_key(seed, i), "sample"));
}

std::int64_t DemandSampler::sample(const IntensityTensor& tensor, std::int64_t t, std::int64_t item) const {
  Rng rng(derive_key(keys_[static_cast<std::size_t>(item)], static_cast<std::uint64_t>(t)));
  return rng.poisson(tensor.at(t, item));
}

void DemandSampler::sample_row(const IntensityTensor& tensor, std::int64_t t, std::span<std::int64_t> out) const {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sample(tensor, t, static_cast<std::int64_t>(i));
}

std::vector<std::int64_t> DemandSampler::sample_row(const IntensityTensor& tensor, std::int64_t t) const {
  std::vector<std::int64_t> out(static_cast<std::size_t>(tensor.items()));
  sample_row(tensor, t, out);
  return out;
}

}  // namespace echelon
