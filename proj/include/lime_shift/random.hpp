#pragma once

#include <concepts>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace lime_shift {

// Anything that hands out uniform reals in [0, 1).
template <typename S>
concept UniformSource = requires(S s) {
  { s.next() } -> std::convertible_to<double>;
};

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Distinguishes independent random streams that share (seed, instance, n).
enum class StreamPurpose : std::uint64_t { perturbation = 1, reference = 2, null_draw = 3 };

struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t instance = 0;
  std::uint64_t n = 0;
  StreamPurpose purpose = StreamPurpose::perturbation;
};

// Counter-based uniform stream: the k-th draw of row r is a pure function of
// (key, r, k), so results do not depend on scheduling.
class CounterStream {
 public:
  CounterStream(const StreamKey& key, std::uint64_t row) noexcept {
    std::uint64_t h = detail::splitmix64(key.seed);
    h = detail::splitmix64(h ^ key.instance);
    h = detail::splitmix64(h ^ key.n);
    h = detail::splitmix64(h ^ static_cast<std::uint64_t>(key.purpose));
    base_ = detail::splitmix64(h ^ row);
  }

  double next() noexcept {
    const std::uint64_t bits = detail::splitmix64(base_ ^ detail::splitmix64(counter_++));
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t base_ = 0;
  std::uint64_t counter_ = 0;
};

// Replays a fixed list of uniforms; used to hand-step procedures in tests.
class ReplayStream {
 public:
  explicit ReplayStream(std::vector<double> values) : values_(std::move(values)) {}
  double next() {
    if (pos_ >= values_.size()) throw std::out_of_range("replay stream exhausted");
    return values_[pos_++];
  }

 private:
  std::vector<double> values_;
  std::size_t pos_ = 0;
};

// Partial Fisher-Yates: picks `k` of `positions` in place. At step i the
// swap partner is j = i + floor(u * (size - i)). The chosen elements are the
// first k entries afterwards.
template <UniformSource S>
void partial_fisher_yates(std::span<std::size_t> positions, std::size_t k, S& uniforms) {
  const std::size_t size = positions.size();
  for (std::size_t i = 0; i < k && i < size; ++i) {
    const double u = static_cast<double>(uniforms.next());
    std::size_t j = i + static_cast<std::size_t>(u * static_cast<double>(size - i));
    if (j >= size) j = size - 1;
    std::swap(positions[i], positions[j]);
  }
}

}  // namespace lime_shift
