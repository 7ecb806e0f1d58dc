#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tofstereo {

/// Thrown for every contract violation (bad shapes, malformed files, invalid
/// parameters). The message names the violated condition.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Zero element for plain types and Eigen fixed-size vectors alike.
template <typename T>
T zero_value() {
  if constexpr (requires { T::Zero(); }) {
    return T::Zero();
  } else {
    return T{};
  }
}

/// Dense row-major 2D grid. Pixel (x, y) lives at index y * width + x.
template <typename T>
class Map {
 public:
  using value_type = T;

  Map() = default;
  Map(int width, int height, T fill = zero_value<T>()) : width_(width), height_(height) {
    if (width < 0 || height < 0) throw Error("negative map dimensions");
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  T& operator()(int x, int y) noexcept { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const noexcept { return data_[index(x, y)]; }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  template <typename U>
  bool same_shape(const Map<U>& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  void fill(const T& v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Map&, const Map&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using Mask = Map<std::uint8_t>;

/// Values plus a per-pixel validity mask. Invalid pixels always hold zero.
template <typename T>
class MaskedMap {
 public:
  MaskedMap() = default;
  MaskedMap(int width, int height) : values_(width, height), valid_(width, height, 0) {}
  /// Every pixel valid and equal to `fill`.
  MaskedMap(int width, int height, const T& fill)
      : values_(width, height, fill), valid_(width, height, 1) {}

  int width() const noexcept { return values_.width(); }
  int height() const noexcept { return values_.height(); }
  std::size_t size() const noexcept { return values_.size(); }
  bool contains(int x, int y) const noexcept { return values_.contains(x, y); }

  bool is_valid(int x, int y) const noexcept { return valid_(x, y) != 0; }
  bool is_valid(std::size_t i) const noexcept { return valid_[i] != 0; }

  const T& operator()(int x, int y) const noexcept { return values_(x, y); }
  const T& operator[](std::size_t i) const noexcept { return values_[i]; }

  void set(int x, int y, const T& v) { set(values_.index(x, y), v); }
  void set(std::size_t i, const T& v) {
    values_[i] = v;
    valid_[i] = 1;
  }
  void invalidate(int x, int y) { invalidate(values_.index(x, y)); }
  void invalidate(std::size_t i) {
    values_[i] = zero_value<T>();
    valid_[i] = 0;
  }

  const Map<T>& values() const noexcept { return values_; }
  const Mask& valid() const noexcept { return valid_; }

  std::size_t count_valid() const noexcept {
    std::size_t n = 0;
    for (auto v : valid_.data()) n += v != 0;
    return n;
  }

  template <typename U>
  bool same_shape(const U& other) const noexcept {
    return width() == other.width() && height() == other.height();
  }

  friend bool operator==(const MaskedMap&, const MaskedMap&) = default;

 private:
  Map<T> values_;
  Mask valid_;
};

/// Metric depth in meters; valid values lie in (0, kFarCap].
using DepthMap = MaskedMap<float>;
/// Grayscale luminance in [0, 1].
using Image = Map<float>;
/// Generic double-valued field with validity.
using ScalarField = MaskedMap<double>;

inline constexpr double kNearPlane = 0.2;
inline constexpr double kFarCap = 20.0;

template <typename A, typename B>
void require_same_shape(const A& a, const B& b, const char* what) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(std::string(what) + ": resolution mismatch (" + std::to_string(a.width()) + "x" +
                std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                std::to_string(b.height()) + ")");
  }
}

}  // namespace tofstereo
