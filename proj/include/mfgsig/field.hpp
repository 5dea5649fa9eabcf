#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "mfgsig/grid.hpp"

namespace mfgsig {

// Row-major field over (time level, signal cell, position cell).
class Field3 {
 public:
  Field3() = default;
  Field3(int nt, int nz, int nx, double fill = 0.0)
      : nt_(nt), nz_(nz), nx_(nx), data_(static_cast<std::size_t>(nt) * nz * nx, fill) {}
  explicit Field3(const Grid& g, double fill = 0.0) : Field3(g.Nt(), g.Nz(), g.Nx(), fill) {}

  int nt() const { return nt_; }
  int nz() const { return nz_; }
  int nx() const { return nx_; }
  std::size_t slice_size() const { return static_cast<std::size_t>(nz_) * nx_; }

  double& operator()(int k, int j, int i) { return data_[index(k, j, i)]; }
  double operator()(int k, int j, int i) const { return data_[index(k, j, i)]; }

  std::span<double> slice(int k) { return {data_.data() + k * slice_size(), slice_size()}; }
  std::span<const double> slice(int k) const {
    return {data_.data() + k * slice_size(), slice_size()};
  }
  std::span<double> row(int k, int j) { return {data_.data() + index(k, j, 0), static_cast<std::size_t>(nx_)}; }
  std::span<const double> row(int k, int j) const {
    return {data_.data() + index(k, j, 0), static_cast<std::size_t>(nx_)};
  }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

 private:
  std::size_t index(int k, int j, int i) const {
    return (static_cast<std::size_t>(k) * nz_ + j) * nx_ + i;
  }

  int nt_ = 0, nz_ = 0, nx_ = 0;
  std::vector<double> data_;
};

// Field over (signal cell, position cell) at a single time.
using Slice = std::vector<double>;

// Bilinear value of a slice at (z, x): linear in z between cell centres
// (clamped at the box), periodic linear in x.
inline double interpolate_slice(const Grid& grid, std::span<const double> slice, double z,
                                double x) {
  const int Nx = grid.Nx(), Nz = grid.Nz();
  const double pz = std::clamp((z + grid.Zmax()) / grid.dz() - 0.5, 0.0, Nz - 1.0);
  const int j0 = std::min(static_cast<int>(pz), Nz - 2);
  const double fz = pz - j0;
  double px = (x - std::floor(x)) * Nx - 0.5;
  if (px < 0.0) px += Nx;
  const int i0 = std::min(static_cast<int>(px), Nx - 1);
  const int i1 = (i0 + 1) % Nx;
  const double fx = px - i0;
  auto at = [&](int j, int i) { return slice[static_cast<std::size_t>(j) * Nx + i]; };
  const double lo = (1.0 - fx) * at(j0, i0) + fx * at(j0, i1);
  const double hi = (1.0 - fx) * at(j0 + 1, i0) + fx * at(j0 + 1, i1);
  return (1.0 - fz) * lo + fz * hi;
}

// Trilinear value of a field at (t, z, x); t is clamped to [t0, T].
inline double interpolate_field(const Grid& grid, const Field3& f, double t, double z, double x) {
  const double pt = std::clamp((t - grid.t0()) / grid.dt(), 0.0, grid.Nt() - 1.0);
  const int k0 = std::min(static_cast<int>(pt), grid.Nt() - 2);
  const double ft = pt - k0;
  const double a = interpolate_slice(grid, f.slice(k0), z, x);
  if (ft == 0.0) return a;
  return (1.0 - ft) * a + ft * interpolate_slice(grid, f.slice(k0 + 1), z, x);
}

}  // namespace mfgsig
