#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace flowvo {

// Row-major W x H raster.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T init = T{})
      : width_(width), height_(height), data_(size_t(width) * height, init) {}

  int width() const { return width_; }
  int height() const { return height_; }
  size_t size() const { return data_.size(); }

  T& at(int x, int y) { return data_[size_t(y) * width_ + x]; }
  const T& at(int x, int y) const { return data_[size_t(y) * width_ + x]; }

  std::span<T> row(int y) { return {data_.data() + size_t(y) * width_, size_t(width_)}; }
  std::span<const T> row(int y) const {
    return {data_.data() + size_t(y) * width_, size_t(width_)};
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  void fill(const T& v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

// Dense optical flow from frame t-1 to frame t, planar storage. Pixels read
// from KITTI files may be invalid; synthetic and .flo fields are fully valid.
// Values live as doubles in memory; the file formats quantize on write.
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<double> u, v;
  std::vector<uint8_t> valid;

  FlowField() = default;
  FlowField(int w, int h)
      : width(w),
        height(h),
        u(size_t(w) * h, 0.0),
        v(size_t(w) * h, 0.0),
        valid(size_t(w) * h, 1) {}

  size_t index(int x, int y) const { return size_t(y) * width + x; }

  Eigen::Vector2d at(int x, int y) const {
    const size_t i = index(x, y);
    return {u[i], v[i]};
  }
  void set(int x, int y, const Eigen::Vector2d& f, bool ok = true) {
    const size_t i = index(x, y);
    u[i] = f.x();
    v[i] = f.y();
    valid[i] = ok ? 1 : 0;
  }

  bool in_bounds(double x, double y) const {
    return x >= 0.0 && y >= 0.0 && x <= width - 1.0 && y <= height - 1.0;
  }

  // Bilinear sample; requires all contributing pixels valid.
  std::optional<Eigen::Vector2d> sample(double x, double y) const {
    if (!in_bounds(x, y)) return std::nullopt;
    const int x0 = std::min(int(x), width - 2 >= 0 ? width - 2 : 0);
    const int y0 = std::min(int(y), height - 2 >= 0 ? height - 2 : 0);
    const int x1 = std::min(x0 + 1, width - 1);
    const int y1 = std::min(y0 + 1, height - 1);
    const double ax = x - x0;
    const double ay = y - y0;
    const size_t i00 = index(x0, y0), i10 = index(x1, y0);
    const size_t i01 = index(x0, y1), i11 = index(x1, y1);
    if (!(valid[i00] && valid[i10] && valid[i01] && valid[i11])) return std::nullopt;
    const double w00 = (1 - ax) * (1 - ay), w10 = ax * (1 - ay);
    const double w01 = (1 - ax) * ay, w11 = ax * ay;
    return Eigen::Vector2d(w00 * u[i00] + w10 * u[i10] + w01 * u[i01] + w11 * u[i11],
                           w00 * v[i00] + w10 * v[i10] + w01 * v[i01] + w11 * v[i11]);
  }
};

// Per-pixel depth over the batch's first frame.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> depth;
  std::vector<uint8_t> valid;

  DepthMap() = default;
  DepthMap(int w, int h)
      : width(w), height(h), depth(size_t(w) * h, 0.0), valid(size_t(w) * h, 0) {}

  size_t index(int x, int y) const { return size_t(y) * width + x; }
  double at(int x, int y) const { return depth[index(x, y)]; }
  bool is_valid(int x, int y) const { return valid[index(x, y)] != 0; }
  void set(int x, int y, double d) {
    const size_t i = index(x, y);
    depth[i] = d;
    valid[i] = 1;
  }
  void invalidate(int x, int y) { valid[index(x, y)] = 0; }

  int valid_count() const {
    int n = 0;
    for (uint8_t f : valid) n += f;
    return n;
  }
  // Median of valid depths; 0 when empty.
  double median() const;
};

using RigidnessMap = Grid<double>;
using RigidnessMaps = std::vector<RigidnessMap>;

}  // namespace flowvo
